"""End-to-end orchestration: load, calibrate evidence, build proxy data,
infer with a reasoner backend, and evaluate.

All intermediates are JSON-lines. Runs are deterministic with the mock
backend: identical inputs and config produce byte-identical artifacts.
On a stage failure the partial artifacts are kept and a FAILED marker file
names the stage and error.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from .calibration import EvidenceRecord
from .config import PipelineConfig
from .errors import EmptySampleError, KgcalError
from .evidence import path_from_names
from .kg import KnowledgeGraph, load_kg
from .metrics import CalibrationReport, calibration_samples, ece, qa_accuracy
from .prompts import EvidenceContext, verbalize_evidence
from .proxy_data import QaItem, gather_evidence_records, load_qa, sft_records_for_question
from .reasoner import HttpReasoner, MockReasoner, PredictionRecord, ReasonerBackend, infer

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

EVIDENCE_FILE = "evidence.jsonl"
SFT_FILE = "sft.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
RELIABILITY_FILE = "reliability.csv"
FAILED_MARKER = "FAILED"


class PipelineError(KgcalError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")


@dataclass
class PipelineResult:
    output_dir: Path
    report: dict = field(default_factory=dict)


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T], max_workers: int
) -> list[R]:
    """Order-preserving map, parallel when max_workers > 1."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def make_backend(config: PipelineConfig) -> ReasonerBackend:
    if config.backend == "mock":
        return MockReasoner(confidence_override=config.mock_confidence_override)
    return HttpReasoner(
        base_url=config.base_url or None,
        model=config.model or None,
        retries=config.retries,
    )


def select_top_evidence(
    records: Sequence[EvidenceRecord], top_k: int
) -> list[EvidenceRecord]:
    """Highest-confidence evidence first, ties broken lexicographically."""
    return sorted(records, key=EvidenceRecord.sort_key)[:top_k]


def build_context(
    graph: KnowledgeGraph,
    item: QaItem,
    records: Sequence[EvidenceRecord],
    line_cap: int,
) -> EvidenceContext:
    """Verbalize one question's evidence, merging across query entities."""
    merged: list[tuple[str, float]] = []
    seen: set[tuple[str, float]] = set()
    by_entity: dict[str, list[EvidenceRecord]] = {}
    for record in records:
        by_entity.setdefault(record.query_entity, []).append(record)
    for entity_name, group in by_entity.items():
        evidence = [
            (path_from_names(graph, rec.relations, rec.constraint), rec.confidence)
            for rec in group
        ]
        ctx = verbalize_evidence(
            graph, graph.entity_id(entity_name), evidence, item.question, line_cap
        )
        for line in ctx.lines:
            if line not in seen:
                seen.add(line)
                merged.append(line)
    merged.sort(key=lambda entry: (-entry[1], entry[0]))
    return EvidenceContext(question=item.question, lines=tuple(merged[:line_cap]))


def infer_question(
    graph: KnowledgeGraph,
    backend: ReasonerBackend,
    item: QaItem,
    records: Sequence[EvidenceRecord],
    config: PipelineConfig,
) -> PredictionRecord:
    top = select_top_evidence(records, config.top_k)
    ctx = build_context(graph, item, top, config.context_line_cap)
    return infer(backend, ctx, config.uq_method, item.question_id, config.kg_instruction)


def write_reliability_csv(path: Path, report: CalibrationReport) -> None:
    lines = ["lower,upper,count,mean_confidence,accuracy"]
    for b in report.bins:
        lines.append(f"{b.lower},{b.upper},{b.count},{b.mean_confidence},{b.accuracy}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_pipeline(
    config: PipelineConfig,
    kg_path: str | Path,
    qa_path: str | Path,
    output_dir: str | Path,
    evidence_path: str | Path | None = None,
) -> PipelineResult:
    """Run every stage, writing evidence.jsonl, sft.jsonl, predictions.jsonl,
    report.json, and reliability.csv under ``output_dir``.

    ``evidence_path`` substitutes externally produced evidence records
    (e.g. proxy generations) for the inference stage; the gold-side
    artifacts are still built from the graph. Missing inputs fail before
    any artifact is created.
    """
    kg_path, qa_path = Path(kg_path), Path(qa_path)
    if not kg_path.is_file():
        raise FileNotFoundError(f"knowledge graph file not found: {kg_path}")
    if not qa_path.is_file():
        raise FileNotFoundError(f"QA file not found: {qa_path}")
    if evidence_path is not None and not Path(evidence_path).is_file():
        raise FileNotFoundError(f"evidence file not found: {evidence_path}")

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()

    stage = "load"
    try:
        with kg_path.open("r", encoding="utf-8") as handle:
            graph = load_kg(handle)
        with qa_path.open("r", encoding="utf-8") as handle:
            qa = load_qa(handle)

        stage = "evidence"
        prior = config.prior()
        gathered = parallel_map(
            lambda item: gather_evidence_records(
                graph, item, prior, config.max_depth, config.allow_inverse, config.max_paths
            ),
            qa,
            config.concurrency,
        )
        evidence_by_question = dict(zip((item.question_id for item in qa), gathered))
        skipped = [item.question_id for item in qa if not evidence_by_question[item.question_id]]
        write_jsonl(
            out / EVIDENCE_FILE,
            (rec.to_json() for records in gathered for rec in records),
        )

        stage = "sft"
        sft_rows = []
        for item, records in zip(qa, gathered):
            sft_rows.extend(
                rec.to_json() for rec in sft_records_for_question(item, records)
            )
        write_jsonl(out / SFT_FILE, sft_rows)

        stage = "infer"
        if evidence_path is not None:
            external = [EvidenceRecord.from_json(row) for row in read_jsonl(Path(evidence_path))]
            evidence_by_question = {item.question_id: [] for item in qa}
            for record in external:
                evidence_by_question.setdefault(record.question_id, []).append(record)
        backend = make_backend(config)
        predictions = parallel_map(
            lambda item: infer_question(
                graph, backend, item, evidence_by_question.get(item.question_id, []), config
            ),
            qa,
            config.concurrency,
        )
        write_jsonl(out / PREDICTIONS_FILE, (p.to_json() for p in predictions))

        stage = "evaluate"
        gold = {item.question_id: list(item.answers) for item in qa}
        hit, recall, macro_f1 = qa_accuracy(predictions, gold)
        samples = calibration_samples(predictions, gold)
        ece_error = None
        bins = ()
        ece_failure = None
        try:
            bins, ece_error = ece(samples, config.n_bins)
        except EmptySampleError as exc:
            ece_failure = str(exc)
        report = {
            "n_questions": len(qa),
            "hit": hit,
            "recall": recall,
            "macro_f1": macro_f1,
            "ece": ece_error,
            "n_samples": len(samples),
            "skipped_questions": skipped,
            "parse_failures": sum(p.parse_failed for p in predictions),
            "config": config.to_json(),
        }
        if ece_failure is not None:
            report["ece_error"] = ece_failure
        calibration = CalibrationReport(
            bins=bins,
            ece=ece_error if ece_error is not None else 0.0,
            n_samples=len(samples),
            hit=hit,
            recall=recall,
            macro_f1=macro_f1,
        )
        report["bins"] = calibration.to_json()["bins"]
        (out / REPORT_FILE).write_text(
            json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        write_reliability_csv(out / RELIABILITY_FILE, calibration)
    except Exception as exc:
        marker.write_text(f"stage: {stage}\nerror: {exc}\n", encoding="utf-8")
        raise PipelineError(stage, exc) from exc

    return PipelineResult(output_dir=out, report=report)
