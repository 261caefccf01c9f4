"""Reward scoring for generated evidence.

The combined reward blends an inferential-quality term (gold evidence F1
scaled by how well the generation matches it) with a calibration-alignment
term (how close the generated confidence sits to the match-degraded gold
confidence). The best gold evidence wins, a sigmoid-shaped transform smooths
the result into a bounded training signal, and syntactically invalid outputs
receive a flat penalty. Group-relative advantages normalize rewards within a
generation group.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from .calibration import EvidenceRecord
from .proxy_data import ParsedEvidence


@dataclass(frozen=True)
class RewardConfig:
    """Knobs of the reward. Defaults follow the reference configuration:
    weight 0.85 on inferential quality, tolerance 2 on confidence gaps,
    sigmoid scale 2, penalty -3 for invalid outputs."""

    inferential_weight: float = 0.85
    calibration_tolerance: float = 2.0
    smoothing_scale: float = 2.0
    invalid_penalty: float = -3.0
    advantage_epsilon: float = 1e-8
    jaccard_weight: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.inferential_weight < 1.0:
            raise ValueError("inferential_weight must be in (0, 1)")
        if self.calibration_tolerance <= 0 or self.smoothing_scale <= 0:
            raise ValueError("tolerance and smoothing scale must be positive")
        if not 0.0 <= self.jaccard_weight <= 1.0:
            raise ValueError("jaccard_weight must be in [0, 1]")
        if self.advantage_epsilon <= 0:
            raise ValueError("advantage_epsilon must be positive")


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-generation reward components against the best-matching gold evidence.

    ``best_gold_index`` is -1 and the numeric components are zero when the
    generation was syntactically invalid; ``smoothed`` then equals the
    invalid penalty.
    """

    match_score: float
    inferential_reward: float
    calibration_reward: float
    target_confidence: float
    combined: float
    smoothed: float
    best_gold_index: int

    @property
    def invalid(self) -> bool:
        return self.best_gold_index < 0

    def to_json(self) -> dict:
        return {
            "match_score": self.match_score,
            "inferential_reward": self.inferential_reward,
            "calibration_reward": self.calibration_reward,
            "target_confidence": self.target_confidence,
            "combined": self.combined,
            "smoothed": self.smoothed,
            "best_gold_index": self.best_gold_index,
            "invalid": self.invalid,
        }


def _tokens(relations: Sequence[str], constraint: tuple[str, str] | None) -> list[str]:
    # Constraint tokens appended in canonical (relation, entity) order.
    out = list(relations)
    if constraint is not None:
        out.extend(constraint)
    return out


def _levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    """Element-level edit distance over token sequences."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, token_a in enumerate(a, start=1):
        current = [i]
        for j, token_b in enumerate(b, start=1):
            cost = 0 if token_a == token_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def match_score(
    generated_relations: Sequence[str],
    generated_constraint: tuple[str, str] | None,
    gold_relations: Sequence[str],
    gold_constraint: tuple[str, str] | None,
    jaccard_weight: float = 0.5,
) -> float:
    """Blend of Jaccard set overlap and an order-sensitive edit-distance ratio.

    Both components treat relation names and constraint tokens as atomic
    elements; the edit-distance ratio is 1 - d / max(len_a, len_b) over the
    ordered token sequences. Two empty evidences match perfectly.
    """
    seq_a = _tokens(generated_relations, generated_constraint)
    seq_b = _tokens(gold_relations, gold_constraint)
    if not seq_a and not seq_b:
        return 1.0
    set_a, set_b = set(seq_a), set(seq_b)
    union = set_a | set_b
    jaccard = len(set_a & set_b) / len(union) if union else 1.0
    longest = max(len(seq_a), len(seq_b))
    edit_ratio = 1.0 - _levenshtein(seq_a, seq_b) / longest
    return jaccard_weight * jaccard + (1.0 - jaccard_weight) * edit_ratio


def smooth(combined: float, smoothing_scale: float) -> float:
    """Sigmoid-shaped map of a [0, 1] reward into a bounded signal around 0.5."""
    return 3.0 / (1.0 + math.exp(-smoothing_scale * (combined - 0.5))) - 1.0


def reward(
    generated: ParsedEvidence | None,
    gold_set: Sequence[EvidenceRecord],
    cfg: RewardConfig = RewardConfig(),
) -> RewardBreakdown:
    """Score a generation against a nonempty gold evidence set.

    ``generated=None`` marks a syntactically invalid output and yields the
    flat invalid penalty. Otherwise each gold evidence is scored and the one
    maximizing the combined reward is kept (first wins on ties; the smoothed
    value is monotone in the combined one, so selecting before smoothing
    changes nothing).
    """
    if not gold_set:
        raise ValueError("gold_set must be nonempty")
    if generated is None:
        return RewardBreakdown(
            match_score=0.0,
            inferential_reward=0.0,
            calibration_reward=0.0,
            target_confidence=0.0,
            combined=0.0,
            smoothed=cfg.invalid_penalty,
            best_gold_index=-1,
        )

    best: tuple[float, int, float, float, float, float] | None = None
    for index, gold in enumerate(gold_set):
        m = match_score(
            generated.relations,
            generated.constraint,
            gold.relations,
            gold.constraint,
            cfg.jaccard_weight,
        )
        inferential = gold.f1_of_evidence * m
        target = gold.confidence * m
        calibration = max(0.0, 1.0 - cfg.calibration_tolerance * abs(generated.confidence - target))
        combined = cfg.inferential_weight * inferential + (1.0 - cfg.inferential_weight) * calibration
        if best is None or combined > best[0]:
            best = (combined, index, m, inferential, calibration, target)

    combined, index, m, inferential, calibration, target = best
    return RewardBreakdown(
        match_score=m,
        inferential_reward=inferential,
        calibration_reward=calibration,
        target_confidence=target,
        combined=combined,
        smoothed=smooth(combined, cfg.smoothing_scale),
        best_gold_index=index,
    )


def group_advantages(rewards: Sequence[float], epsilon: float = 1e-8) -> list[float]:
    """Center and scale rewards within a generation group.

    (r - mean) / (population std + epsilon); singleton or zero-variance
    groups get all-zero advantages.
    """
    if not rewards:
        raise ValueError("rewards must be nonempty")
    if len(rewards) == 1:
        return [0.0]
    mean = statistics.fmean(rewards)
    std = statistics.pstdev(rewards)
    if std == 0.0:
        return [0.0] * len(rewards)
    return [(r - mean) / (std + epsilon) for r in rewards]
