"""Evidence verbalization and the three confidence-elicitation prompt styles.

Each grounded walk of an evidence path becomes one context line of the form
``e0 -> r1 -> e1 -> ... -> ek [Confidence: c]``. The three prompt templates
(vanilla, chain-of-thought, two-round self-probing) are pinned character for
character by golden-file tests, so edit with care.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

from .errors import PredictionParseError
from .evidence import INVERSE_MARK, ConstrainedPath
from .kg import FORWARD, INVERSE, UNKNOWN_ID, KnowledgeGraph

logger = logging.getLogger(__name__)

VANILLA = "vanilla"
COT = "cot"
SELF_PROBING = "self_probing"
UQ_METHODS = (VANILLA, COT, SELF_PROBING)

DEFAULT_INSTRUCTION = "Based on the reasoning paths, please answer the given question."
DEFAULT_LINE_CAP = 50

_ANSWER_FORMAT_LINE = (
    "Output format example: {<answer_1>: <confidence_1>,...,<answer_k>: <confidence_k>}"
)

_VANILLA_TEMPLATE = (
    "{instruction} Please answer the following questions and provide the confidence "
    "(0.0 to 1.0) for each answer being correct. Please keep the answer as simple as "
    "possible and return all the possible answers and their confidence as a json string.\n"
    "\n" + _ANSWER_FORMAT_LINE + "\n"
    "\n"
    "{context}\n"
    "\n"
    "Question:\n"
    "{question}"
)

_COT_TEMPLATE = (
    "{instruction} Please answer the following questions and provide the confidence "
    "(0.0 to 1.0) for each answer being correct. Please keep the answer as simple as "
    "possible and return all the possible answers and their confidence as a json string.\n"
    "\n" + _ANSWER_FORMAT_LINE + "\n"
    "\n"
    "Let's think it step by step.\n"
    "\n"
    "{context}\n"
    "\n"
    "Question:\n"
    "{question}"
)

_SELF_PROBING_ROUND1_TEMPLATE = (
    "{instruction} Please answer the given question. Please keep the answer as simple "
    "as possible and return all the possible answers as a list.\n"
    "\n"
    "{context}\n"
    "\n"
    "Question:\n"
    "{question}"
)

SELF_PROBING_ROUND2 = (
    "Q: How likely are the above answers to be correct? Analyze the possible answers, "
    "provide your reasoning concisely, and give your confidence (0.0 to 1.0) for each "
    "answer being correct. Please keep the answer as simple as possible and return all "
    "the possible answers and their confidence as a json string.\n"
    "\n" + _ANSWER_FORMAT_LINE
)


def format_confidence(confidence: float) -> str:
    """Render a confidence at one or two decimals (0.8, 0.75, 1.0)."""
    text = f"{confidence:.2f}"
    return text[:-1] if text.endswith("0") else text


@dataclass(frozen=True)
class EvidenceContext:
    """Verbalized, confidence-tagged reasoning paths for one question."""

    question: str
    lines: tuple[tuple[str, float], ...]

    def rendered_lines(self) -> list[str]:
        return [f"{path} [Confidence: {format_confidence(c)}]" for path, c in self.lines]

    def context_block(self) -> str:
        return "\n".join(self.rendered_lines())


def _walks(
    graph: KnowledgeGraph, start: int, path: ConstrainedPath, cap: int
) -> list[tuple[int, ...]]:
    """Concrete entity chains realizing ``path`` from ``start``, DFS order."""
    final_ok = None
    if path.constraint is not None:
        c_rel, c_ent = path.constraint
        final_ok = lambda e: c_ent in graph.neighbors(e, c_rel, FORWARD)  # noqa: E731
    walks: list[tuple[int, ...]] = []

    def extend(chain: tuple[int, ...], depth: int) -> bool:
        if len(walks) >= cap:
            return False
        if depth == len(path.steps):
            if final_ok is None or final_ok(chain[-1]):
                walks.append(chain)
            return True
        relation, direction = path.steps[depth]
        for nxt in sorted(graph.neighbors(chain[-1], relation, direction)):
            if not extend(chain + (nxt,), depth + 1):
                return False
        return True

    if start != UNKNOWN_ID:
        extend((start,), 0)
    return walks


def verbalize_evidence(
    graph: KnowledgeGraph,
    query_entity: int,
    evidence: Sequence[tuple[ConstrainedPath, float]],
    question: str = "",
    line_cap: int = DEFAULT_LINE_CAP,
) -> EvidenceContext:
    """Expand evidence paths into confidence-tagged context lines.

    Every concrete grounded walk of an item becomes one line carrying that
    item's confidence. Duplicates are dropped, lines are ordered by
    descending confidence then lexicographically, and the total is capped.
    Evidence grounding to nothing contributes no lines (logged, not fatal).
    """
    seen: set[tuple[str, float]] = set()
    collected: list[tuple[str, float]] = []
    # Per-item walk budget keeps pathological graphs from exploding before
    # the global cap is applied.
    walk_budget = max(line_cap * 4, 200)
    for path, confidence in evidence:
        walks = _walks(graph, query_entity, path, walk_budget)
        if not walks:
            logger.debug("evidence %s grounds to nothing for entity %s", path, query_entity)
            continue
        for walk in walks:
            parts = [graph.entity_name(walk[0])]
            for (relation, direction), entity in zip(path.steps, walk[1:]):
                name = graph.relation_name(relation)
                if direction == INVERSE:
                    name = INVERSE_MARK + name
                parts.extend([name, graph.entity_name(entity)])
            line = (" -> ".join(parts), confidence)
            if line not in seen:
                seen.add(line)
                collected.append(line)
    collected.sort(key=lambda item: (-item[1], item[0]))
    return EvidenceContext(question=question, lines=tuple(collected[:line_cap]))


def _fill(template: str, **fields: str) -> str:
    # The output-format example line contains literal braces, so plain
    # str.format would choke; substitute slots by token replacement instead.
    for key, value in fields.items():
        template = template.replace("{" + key + "}", value)
    return template


def render_prompt(
    ctx: EvidenceContext, method: str, instruction: str = DEFAULT_INSTRUCTION
) -> list[str]:
    """Fill the template for one confidence-elicitation method.

    Vanilla and chain-of-thought produce a single prompt. Self-probing
    produces two: the answer-elicitation prompt and the static follow-up
    that asks for per-answer confidence once the model's answers are in the
    conversation.
    """
    fields = {
        "instruction": instruction,
        "context": ctx.context_block(),
        "question": ctx.question,
    }
    if method == VANILLA:
        return [_fill(_VANILLA_TEMPLATE, **fields)]
    if method == COT:
        return [_fill(_COT_TEMPLATE, **fields)]
    if method == SELF_PROBING:
        return [_fill(_SELF_PROBING_ROUND1_TEMPLATE, **fields), SELF_PROBING_ROUND2]
    raise ValueError(f"unknown UQ method {method!r}")


def parse_prediction(response: str) -> dict[str, float]:
    """Extract the first JSON object of answer -> confidence pairs.

    Tolerates surrounding prose and code fences by scanning every brace for
    a decodable object whose keys are strings and values are numbers.
    Non-empty objects are preferred over empty ones. Confidences are clipped
    to [0, 1]. Raises PredictionParseError when nothing conforms.
    """
    decoder = json.JSONDecoder()
    saw_empty = False
    for index, char in enumerate(response):
        if char != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(response, index)
        except ValueError:
            continue
        if not isinstance(obj, dict):
            continue
        if not all(
            isinstance(k, str) and isinstance(v, (int, float)) and not isinstance(v, bool)
            for k, v in obj.items()
        ):
            continue
        if obj:
            return {k: min(1.0, max(0.0, float(v))) for k, v in obj.items()}
        saw_empty = True
    if saw_empty:
        return {}
    raise PredictionParseError(response)
