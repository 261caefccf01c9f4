"""Reasoner backends and the inference driver.

Two backends ship: an HTTP client speaking the de-facto chat-completions
JSON wire format, and a deterministic offline mock that answers straight
from the confidence-tagged context lines (union of walk endpoints, each at
the maximum confidence of the evidence supporting it).
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import requests

from .errors import PredictionParseError, TransportError
from .prompts import SELF_PROBING, EvidenceContext, parse_prediction, render_prompt, DEFAULT_INSTRUCTION

ENV_API_BASE = "KGCAL_API_BASE"
ENV_API_KEY = "KGCAL_API_KEY"
ENV_MODEL = "KGCAL_MODEL"

Message = dict[str, str]


class ReasonerBackend(Protocol):
    def complete(self, messages: list[Message]) -> str: ...


_CONTEXT_LINE_RE = re.compile(r"^(.*\S) \[Confidence: ([0-9.]+)\]$")
_LIST_MARKER = "return all the possible answers as a list"


class MockReasoner:
    """Deterministic offline reasoner for tests and dry runs.

    It reads the confidence-tagged reasoning lines out of the prompt, takes
    each line's final entity as an answer, and assigns it the maximum
    confidence among supporting lines. ``confidence_override`` forces every
    reported confidence to a fixed value (used for degenerate baselines).
    """

    def __init__(self, confidence_override: float | None = None):
        self.confidence_override = confidence_override

    def complete(self, messages: list[Message]) -> str:
        answers: dict[str, float] = {}
        for message in messages:
            if message.get("role") != "user":
                continue
            for line in message.get("content", "").splitlines():
                match = _CONTEXT_LINE_RE.match(line)
                if match is None:
                    continue
                answer = match.group(1).split(" -> ")[-1]
                confidence = float(match.group(2))
                answers[answer] = max(answers.get(answer, 0.0), confidence)
        if self.confidence_override is not None:
            answers = {a: self.confidence_override for a in answers}
        if messages and _LIST_MARKER in messages[-1].get("content", ""):
            return json.dumps(list(answers), ensure_ascii=False)
        return json.dumps(answers, ensure_ascii=False)


class HttpReasoner:
    """Chat-completions client with exponential-backoff retries.

    Connection problems, timeouts, 429 and 5xx responses are retried up to
    ``retries`` attempts, then raised as TransportError. Other HTTP errors
    fail immediately. Credentials come from arguments or the KGCAL_* env
    vars; the API key is never read from config files.
    """

    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        temperature: float = 0.0,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "")
        if not self.base_url:
            raise ValueError(f"no API base URL (set {ENV_API_BASE} or pass base_url)")
        if not self.model:
            raise ValueError(f"no model name (set {ENV_MODEL} or pass model)")
        self.temperature = temperature
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self._sleep = sleep

    def complete(self, messages: list[Message]) -> str:
        url = f"{self.base_url}/chat/completions"
        payload = {"model": self.model, "messages": messages, "temperature": self.temperature}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                response = self.session.post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                self._sleep(self.backoff * 2**attempt)
                continue
            if response.status_code in self.RETRYABLE_STATUS:
                last_error = TransportError(f"HTTP {response.status_code} from {url}")
                self._sleep(self.backoff * 2**attempt)
                continue
            if response.status_code != 200:
                raise TransportError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
            try:
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed response body from {url}") from exc
        raise TransportError(
            f"request to {url} failed after {self.retries} attempts"
        ) from last_error


@dataclass
class PredictionRecord:
    """A reasoner's parsed answers for one question, with the raw response."""

    question_id: str
    answers: dict[str, float] = field(default_factory=dict)
    raw_response: str = ""
    uq_method: str = "vanilla"
    parse_failed: bool = False

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "answers": self.answers,
            "raw_response": self.raw_response,
            "uq_method": self.uq_method,
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PredictionRecord":
        return cls(
            question_id=str(data["question_id"]),
            answers={str(k): float(v) for k, v in data.get("answers", {}).items()},
            raw_response=str(data.get("raw_response", "")),
            uq_method=str(data.get("uq_method", "vanilla")),
            parse_failed=bool(data.get("parse_failed", False)),
        )


def infer(
    backend: ReasonerBackend,
    ctx: EvidenceContext,
    method: str,
    question_id: str,
    instruction: str = DEFAULT_INSTRUCTION,
) -> PredictionRecord:
    """Run one question through a backend.

    Vanilla and chain-of-thought are single-round; self-probing chains a
    second round that sees the model's own round-1 answers. A response with
    no parseable answer object yields an empty record flagged
    ``parse_failed`` rather than an exception; transport errors propagate.
    """
    prompts = render_prompt(ctx, method, instruction)
    if method == SELF_PROBING:
        round1 = backend.complete([{"role": "user", "content": prompts[0]}])
        response = backend.complete(
            [
                {"role": "user", "content": prompts[0]},
                {"role": "assistant", "content": round1},
                {"role": "user", "content": prompts[1]},
            ]
        )
    else:
        response = backend.complete([{"role": "user", "content": prompts[0]}])
    try:
        answers = parse_prediction(response)
        failed = False
    except PredictionParseError:
        answers = {}
        failed = True
    return PredictionRecord(
        question_id=question_id,
        answers=answers,
        raw_response=response,
        uq_method=method,
        parse_failed=failed,
    )
