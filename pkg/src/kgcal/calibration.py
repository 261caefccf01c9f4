"""Beta-Bernoulli confidence of grounded evidence and its set-F1 quality score.

Grounding a piece of evidence yields a candidate answer set; the probability
that a uniformly drawn candidate is a gold answer gets a conjugate Beta prior,
and the posterior mean is the evidence confidence. The default prior is the
weakly informative Jeffreys Beta(0.5, 0.5).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import AbstractSet


@dataclass(frozen=True)
class BetaPrior:
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Beta prior parameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


JEFFREYS = BetaPrior(0.5, 0.5)


def evidence_confidence(
    prior: BetaPrior, grounded: AbstractSet, answers: AbstractSet
) -> float:
    """Posterior-mean probability that a grounded candidate is a gold answer.

    (alpha + |grounded & answers|) / (alpha + beta + |grounded|). An empty
    grounding returns the prior mean; an empty gold set is degenerate and
    flagged with a warning.
    """
    if not answers:
        warnings.warn("evidence_confidence called with an empty gold answer set", stacklevel=2)
    hits = len(set(grounded) & set(answers))
    return (prior.alpha + hits) / (prior.alpha + prior.beta + len(grounded))


def evidence_f1(grounded: AbstractSet, answers: AbstractSet) -> float:
    """Set-F1 between the grounded candidates and the gold answers.

    Zero when either set is empty or they do not intersect.
    """
    if not grounded or not answers:
        return 0.0
    hits = len(set(grounded) & set(answers))
    if hits == 0:
        return 0.0
    precision = hits / len(grounded)
    recall = hits / len(answers)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvidenceRecord:
    """One calibrated piece of evidence for a question, at name level.

    ``relations`` and ``constraint`` use relation/entity names so records
    serialize directly and can be scored without the graph in hand.
    ``f1_of_evidence`` is the set-F1 of the grounding against the gold
    answers, precomputed at build time.
    """

    question_id: str
    query_entity: str
    relations: tuple[str, ...]
    constraint: tuple[str, str] | None
    confidence: float
    grounded: tuple[str, ...]
    f1_of_evidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if not 0.0 <= self.f1_of_evidence <= 1.0:
            raise ValueError(f"f1_of_evidence {self.f1_of_evidence} outside [0, 1]")

    def sort_key(self) -> tuple:
        """Descending confidence, then lexicographic — used for top-K selection."""
        return (-self.confidence, self.relations, self.constraint or ("", ""))

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "query_entity": self.query_entity,
            "relations": list(self.relations),
            "constraint": list(self.constraint) if self.constraint else None,
            "confidence": self.confidence,
            "grounded": list(self.grounded),
            "f1_of_evidence": self.f1_of_evidence,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EvidenceRecord":
        constraint = data.get("constraint")
        return cls(
            question_id=str(data["question_id"]),
            query_entity=str(data.get("query_entity", "")),
            relations=tuple(data["relations"]),
            constraint=(constraint[0], constraint[1]) if constraint else None,
            confidence=float(data["confidence"]),
            grounded=tuple(data.get("grounded", ())),
            f1_of_evidence=float(data.get("f1_of_evidence", 0.0)),
        )
