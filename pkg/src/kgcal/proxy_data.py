"""Training-data construction for the evidence-generator proxy.

Covers the XML-style evidence serialization grammar, its parser, and the
dataset builder that enumerates shortest paths per question, scores them
with the Beta-Bernoulli confidence, and keeps a mined constraint only when
it strictly raises that confidence.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import IO, Iterable

from .calibration import BetaPrior, EvidenceRecord, evidence_confidence, evidence_f1
from .errors import InvalidOutputError
from .evidence import (
    DEFAULT_MAX_PATHS,
    ConstrainedPath,
    enumerate_shortest_paths,
    ground,
    mine_constraints,
    path_to_names,
)
from .kg import UNKNOWN_ID, KnowledgeGraph

PATH_OPEN = "<PATH confidence="
PATH_CLOSE = "</PATH>"
SEP = "<SEP>"
CONSTRAINT_OPEN = "<CONSTRAINT>"
CONSTRAINT_CLOSE = "</CONSTRAINT>"

_RESERVED = (PATH_OPEN, PATH_CLOSE, SEP, CONSTRAINT_OPEN, CONSTRAINT_CLOSE, "<PATH")

SFT_INSTRUCTION = (
    "Please generate a valid relation path that can be helpful for answering "
    "the following question: {question}"
)
RL_INSTRUCTION = (
    "Please generate an enhanced relation path with well-calibrated confidence "
    "that can be helpful for answering the following question: {question}"
)
QA_INSTRUCTION = "Please answer the following question: {question}"

_PATH_RE = re.compile(r"<PATH\s+confidence=([^>\s]+)\s*>(.*?)</PATH>", re.DOTALL)


@dataclass(frozen=True)
class ParsedEvidence:
    """Name-level evidence decoded from a <PATH ...> block."""

    confidence: float
    relations: tuple[str, ...]
    constraint: tuple[str, str] | None = None


@dataclass(frozen=True)
class SftRecord:
    question_id: str
    instruction: str
    output: str

    def to_json(self) -> dict:
        return {"id": self.question_id, "instruction": self.instruction, "output": self.output}


@dataclass(frozen=True)
class QaItem:
    """One question: id, text, query entity names, gold answer names."""

    question_id: str
    question: str
    entities: tuple[str, ...]
    answers: tuple[str, ...]

    @classmethod
    def from_json(cls, data: dict) -> "QaItem":
        return cls(
            question_id=str(data["id"]),
            question=str(data["question"]),
            entities=tuple(data.get("entities", ())),
            answers=tuple(data.get("answers", ())),
        )


@dataclass
class SftBuildResult:
    """Dataset records plus the ids of questions skipped for lack of paths."""

    records: list[SftRecord] = field(default_factory=list)
    skipped_question_ids: list[str] = field(default_factory=list)


def load_qa(lines: Iterable[str] | IO[str]) -> list[QaItem]:
    """Parse the JSON-lines QA format (id, question, entities, answers)."""
    items = []
    for raw in lines:
        line = raw.strip()
        if line:
            items.append(QaItem.from_json(json.loads(line)))
    return items


def serialize_evidence(
    relations: Iterable[str],
    confidence: float,
    constraint: tuple[str, str] | None = None,
) -> str:
    """Render evidence in the exact proxy grammar.

    With a constraint:
        <PATH confidence=C>r1<SEP>...<SEP>rl<CONSTRAINT>rc<SEP>ent</CONSTRAINT></PATH>
    without:
        <PATH confidence=C>r1<SEP>...<SEP>rl</PATH>
    The confidence is rendered with exactly two decimal places. Empty
    relation lists are rejected; so are names containing grammar terminals.
    """
    relations = tuple(relations)
    if not relations:
        raise InvalidOutputError("length-0 evidence cannot be serialized")
    if not 0.0 <= confidence <= 1.0:
        raise InvalidOutputError(f"confidence {confidence} outside [0, 1]")
    tokens = list(relations) + (list(constraint) if constraint else [])
    for token in tokens:
        if any(reserved in token for reserved in _RESERVED):
            raise InvalidOutputError(f"name {token!r} contains a reserved grammar token")
    body = SEP.join(relations)
    if constraint is not None:
        body += f"{CONSTRAINT_OPEN}{constraint[0]}{SEP}{constraint[1]}{CONSTRAINT_CLOSE}"
    return f"{PATH_OPEN}{confidence:.2f}>{body}{PATH_CLOSE}"


def parse_evidence(text: str) -> ParsedEvidence:
    """Decode the first <PATH ...> block in ``text``.

    Tolerates surrounding prose/whitespace and whitespace around tokens.
    Anything that breaks the grammar — no PATH tag, unclosed tags, a
    missing or out-of-range confidence, empty relation tokens — raises
    InvalidOutputError, the trigger for the invalid-output reward penalty.
    """
    match = _PATH_RE.search(text)
    if match is None:
        if "<PATH" in text:
            raise InvalidOutputError("unclosed or malformed <PATH ...> block")
        raise InvalidOutputError("no <PATH ...> block found")
    raw_confidence, body = match.group(1), match.group(2)
    try:
        confidence = float(raw_confidence)
    except ValueError:
        raise InvalidOutputError(f"unparseable confidence {raw_confidence!r}") from None
    if not 0.0 <= confidence <= 1.0:
        raise InvalidOutputError(f"confidence {confidence} outside [0, 1]")
    confidence = min(1.0, max(0.0, confidence))

    constraint = None
    if CONSTRAINT_OPEN in body:
        body, rest = body.split(CONSTRAINT_OPEN, 1)
        if not rest.rstrip().endswith(CONSTRAINT_CLOSE):
            raise InvalidOutputError("unclosed <CONSTRAINT> block")
        inner = rest.rstrip()[: -len(CONSTRAINT_CLOSE)]
        parts = [p.strip() for p in inner.split(SEP)]
        if len(parts) != 2 or not all(parts):
            raise InvalidOutputError(f"constraint must be relation{SEP}entity, got {inner!r}")
        constraint = (parts[0], parts[1])
    elif CONSTRAINT_CLOSE in body:
        raise InvalidOutputError("</CONSTRAINT> without opening tag")

    relations = tuple(token.strip() for token in body.split(SEP))
    if not all(relations) or not relations:
        raise InvalidOutputError(f"empty relation token in path body {body!r}")
    return ParsedEvidence(confidence=confidence, relations=relations, constraint=constraint)


def gather_evidence_records(
    graph: KnowledgeGraph,
    item: QaItem,
    prior: BetaPrior,
    max_depth: int,
    allow_inverse: bool = False,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> list[EvidenceRecord]:
    """Calibrated gold evidence for one question.

    For every query entity, enumerate the shortest paths to each gold
    answer, ground and score each path, then mine answer-side constraints
    and keep a constrained variant only if its confidence strictly exceeds
    the unconstrained path's. Zero-length paths (query entity is itself an
    answer) are dropped: they carry no relation to express. Output order is
    deterministic: query entities in input order, paths lexicographic,
    constraints by id.
    """
    answer_ids = {
        graph.entity_id(a) for a in item.answers if graph.entity_id(a) != UNKNOWN_ID
    }
    records: list[EvidenceRecord] = []
    if not answer_ids:
        return records

    for entity_name in item.entities:
        query = graph.entity_id(entity_name)
        if query == UNKNOWN_ID:
            continue
        paths: set[ConstrainedPath] = set()
        for answer in answer_ids:
            paths.update(
                enumerate_shortest_paths(
                    graph, query, answer, max_depth, allow_inverse, max_paths
                )
            )
        for path in sorted(paths, key=ConstrainedPath.sort_key):
            if len(path) == 0:
                continue
            base = ground(graph, query, path)
            base_confidence = evidence_confidence(prior, base.candidates, answer_ids)
            records.append(
                _make_record(graph, item.question_id, entity_name, path, base, base_confidence, answer_ids)
            )
            for c_rel, c_ent in mine_constraints(graph, path, base.candidates, answer_ids):
                constrained = path.with_constraint(c_rel, c_ent)
                res = ground(graph, query, constrained)
                confidence = evidence_confidence(prior, res.candidates, answer_ids)
                if confidence > base_confidence:
                    records.append(
                        _make_record(
                            graph, item.question_id, entity_name, constrained, res, confidence, answer_ids
                        )
                    )
    return records


def _make_record(
    graph: KnowledgeGraph,
    question_id: str,
    query_entity: str,
    path: ConstrainedPath,
    result,
    confidence: float,
    answer_ids: set[int],
) -> EvidenceRecord:
    relations, constraint = path_to_names(graph, path)
    return EvidenceRecord(
        question_id=question_id,
        query_entity=query_entity,
        relations=relations,
        constraint=constraint,
        confidence=confidence,
        grounded=tuple(sorted(graph.entity_name(e) for e in result.candidates)),
        f1_of_evidence=evidence_f1(result.candidates, answer_ids),
    )


def sft_records_for_question(
    item: QaItem,
    records: list[EvidenceRecord],
    stage: str = "sft",
    include_qa_records: bool = False,
) -> list[SftRecord]:
    """Format gathered evidence records as instruction/output pairs."""
    template = RL_INSTRUCTION if stage == "rl" else SFT_INSTRUCTION
    instruction = template.format(question=item.question)
    out = [
        SftRecord(
            question_id=item.question_id,
            instruction=instruction,
            output=serialize_evidence(rec.relations, rec.confidence, rec.constraint),
        )
        for rec in records
    ]
    if include_qa_records and out:
        out.append(
            SftRecord(
                question_id=item.question_id,
                instruction=QA_INSTRUCTION.format(question=item.question),
                output=json.dumps(list(item.answers), ensure_ascii=False),
            )
        )
    return out


def build_sft_dataset(
    graph: KnowledgeGraph,
    qa: Iterable[QaItem],
    prior: BetaPrior,
    max_depth: int,
    stage: str = "sft",
    allow_inverse: bool = False,
    max_paths: int = DEFAULT_MAX_PATHS,
    include_qa_records: bool = False,
) -> SftBuildResult:
    """Proxy training records for every question; unreachable questions are
    skipped and reported, not fatal."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    if stage not in ("sft", "rl"):
        raise ValueError(f"stage must be 'sft' or 'rl', got {stage!r}")
    result = SftBuildResult()
    for item in qa:
        evidence = gather_evidence_records(
            graph, item, prior, max_depth, allow_inverse, max_paths
        )
        if not evidence:
            result.skipped_question_ids.append(item.question_id)
            continue
        result.records.extend(
            sft_records_for_question(item, evidence, stage, include_qa_records)
        )
    return result
