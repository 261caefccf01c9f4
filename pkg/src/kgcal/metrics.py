"""Prediction-accuracy and confidence-calibration metrics.

Answer matching is exact string equality after whitespace trim and case
fold. The calibration sample unit is one (answer, confidence) pair per
predicted answer; a record whose response could not be parsed contributes
a single maximally wrong (0.0, incorrect) sample. Expected calibration
error uses equal-width bins, half-open (lower, upper] with the first bin
closed at zero. Bin sums use exactly rounded summation, so the result is
invariant under sample permutation at full precision.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import EmptySampleError
from .reasoner import PredictionRecord


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


@dataclass(frozen=True)
class CalibrationReport:
    """Accuracy metrics plus the reliability-diagram data and its ECE."""

    bins: tuple[CalibrationBin, ...]
    ece: float
    n_samples: int
    hit: float
    recall: float
    macro_f1: float

    def to_json(self) -> dict:
        return {
            "hit": self.hit,
            "recall": self.recall,
            "macro_f1": self.macro_f1,
            "ece": self.ece,
            "n_samples": self.n_samples,
            "bins": [
                {
                    "lower": b.lower,
                    "upper": b.upper,
                    "count": b.count,
                    "mean_confidence": b.mean_confidence,
                    "accuracy": b.accuracy,
                }
                for b in self.bins
            ],
        }


def _normalize(answer: str) -> str:
    return answer.strip().casefold()


def qa_accuracy(
    predictions: Sequence[PredictionRecord],
    gold: Mapping[str, Sequence[str]],
) -> tuple[float, float, float]:
    """Macro-averaged hit, recall, and set-F1 over questions.

    hit is 1 when any predicted answer matches a gold answer; recall and F1
    are set-overlap scores. Records flagged as parse failures score zero on
    all three. A prediction whose question id has no gold entry is a
    contract violation.
    """
    if not predictions:
        return 0.0, 0.0, 0.0
    hits = recalls = f1s = 0.0
    for record in predictions:
        if record.question_id not in gold:
            raise KeyError(f"prediction for unknown question id {record.question_id!r}")
        gold_set = {_normalize(a) for a in gold[record.question_id]}
        if record.parse_failed or not gold_set:
            continue
        predicted = {_normalize(a) for a in record.answers}
        overlap = len(predicted & gold_set)
        if overlap == 0:
            continue
        hits += 1.0
        recall = overlap / len(gold_set)
        precision = overlap / len(predicted)
        recalls += recall
        f1s += 2 * precision * recall / (precision + recall)
    n = len(predictions)
    return hits / n, recalls / n, f1s / n


def calibration_samples(
    predictions: Sequence[PredictionRecord],
    gold: Mapping[str, Sequence[str]],
) -> list[tuple[float, bool]]:
    """One (confidence, correct) sample per predicted answer.

    Parse failures contribute a single (0.0, False) sample each.
    """
    samples: list[tuple[float, bool]] = []
    for record in predictions:
        if record.question_id not in gold:
            raise KeyError(f"prediction for unknown question id {record.question_id!r}")
        if record.parse_failed:
            samples.append((0.0, False))
            continue
        gold_set = {_normalize(a) for a in gold[record.question_id]}
        for answer, confidence in record.answers.items():
            samples.append((confidence, _normalize(answer) in gold_set))
    return samples


def ece(
    samples: Sequence[tuple[float, bool]], n_bins: int = 10
) -> tuple[tuple[CalibrationBin, ...], float]:
    """Expected calibration error with equal-width bins over [0, 1].

    Returns the per-bin reliability data (empty bins included with zeroed
    statistics) and the bin-weighted mean absolute confidence/accuracy gap.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if not samples:
        raise EmptySampleError("no samples: expected calibration error is undefined")
    boundaries = [(i + 1) / n_bins for i in range(n_bins)]
    confidences: list[list[float]] = [[] for _ in range(n_bins)]
    corrects: list[int] = [0] * n_bins
    for confidence, correct in samples:
        if not 0.0 <= confidence <= 1.0:
            raise ValueError(f"confidence {confidence} outside [0, 1]")
        index = bisect_left(boundaries, confidence)
        index = min(index, n_bins - 1)
        confidences[index].append(confidence)
        corrects[index] += bool(correct)

    bins: list[CalibrationBin] = []
    total = len(samples)
    weighted_gaps: list[float] = []
    for i in range(n_bins):
        count = len(confidences[i])
        if count:
            mean_confidence = math.fsum(confidences[i]) / count
            accuracy = corrects[i] / count
            weighted_gaps.append((count / total) * abs(accuracy - mean_confidence))
        else:
            mean_confidence = 0.0
            accuracy = 0.0
        bins.append(
            CalibrationBin(
                lower=0.0 if i == 0 else boundaries[i - 1],
                upper=boundaries[i],
                count=count,
                mean_confidence=mean_confidence,
                accuracy=accuracy,
            )
        )
    return tuple(bins), math.fsum(weighted_gaps)


def evaluate_predictions(
    predictions: Sequence[PredictionRecord],
    gold: Mapping[str, Sequence[str]],
    n_bins: int = 10,
) -> CalibrationReport:
    """Full report: accuracy metrics plus binned calibration and ECE."""
    hit, recall, macro_f1 = qa_accuracy(predictions, gold)
    samples = calibration_samples(predictions, gold)
    bins, error = ece(samples, n_bins)
    return CalibrationReport(
        bins=bins,
        ece=error,
        n_samples=len(samples),
        hit=hit,
        recall=recall,
        macro_f1=macro_f1,
    )
