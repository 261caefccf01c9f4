"""Calibrated knowledge-graph evidence for question answering.

Grounds constrained relational paths in a triple store, attaches a
Beta-Bernoulli confidence to each, builds proxy training data and rewards
from them, verbalizes the calibrated evidence for a black-box reasoner, and
evaluates both answer accuracy and confidence calibration.
"""

from .calibration import JEFFREYS, BetaPrior, EvidenceRecord, evidence_confidence, evidence_f1
from .config import PipelineConfig, make_config
from .evidence import (
    ConstrainedPath,
    GroundingResult,
    enumerate_shortest_paths,
    forward_path,
    ground,
    mine_constraints,
)
from .kg import FORWARD, INVERSE, KnowledgeGraph, dump_kg, load_kg
from .metrics import CalibrationReport, calibration_samples, ece, evaluate_predictions, qa_accuracy
from .pipeline import run_pipeline
from .prompts import EvidenceContext, parse_prediction, render_prompt, verbalize_evidence
from .proxy_data import (
    ParsedEvidence,
    QaItem,
    SftRecord,
    build_sft_dataset,
    gather_evidence_records,
    parse_evidence,
    serialize_evidence,
)
from .reasoner import HttpReasoner, MockReasoner, PredictionRecord, infer
from .reward import RewardBreakdown, RewardConfig, group_advantages, match_score, reward

__version__ = "0.1.0"

__all__ = [
    "BetaPrior",
    "CalibrationReport",
    "ConstrainedPath",
    "EvidenceContext",
    "EvidenceRecord",
    "FORWARD",
    "GroundingResult",
    "HttpReasoner",
    "INVERSE",
    "JEFFREYS",
    "KnowledgeGraph",
    "MockReasoner",
    "ParsedEvidence",
    "PipelineConfig",
    "PredictionRecord",
    "QaItem",
    "RewardBreakdown",
    "RewardConfig",
    "SftRecord",
    "build_sft_dataset",
    "calibration_samples",
    "dump_kg",
    "ece",
    "enumerate_shortest_paths",
    "evaluate_predictions",
    "evidence_confidence",
    "evidence_f1",
    "forward_path",
    "gather_evidence_records",
    "ground",
    "group_advantages",
    "infer",
    "load_kg",
    "make_config",
    "match_score",
    "mine_constraints",
    "parse_evidence",
    "parse_prediction",
    "qa_accuracy",
    "render_prompt",
    "reward",
    "run_pipeline",
    "serialize_evidence",
    "verbalize_evidence",
]
