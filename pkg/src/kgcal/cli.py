"""Command-line interface.

Subcommands: ``kg stats``, ``ground``, ``build-sft``, ``reward``, ``infer``,
``evaluate``, ``pipeline``. Config values resolve as defaults < config file
< flags; the API key is env-only (KGCAL_API_KEY).
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import pipeline as pipeline_mod
from .calibration import EvidenceRecord
from .config import PipelineConfig, make_config
from .errors import InvalidOutputError, KgcalError
from .evidence import path_from_names
from .kg import load_kg
from .metrics import evaluate_predictions
from .pipeline import (
    PipelineError,
    build_context,
    infer_question,
    make_backend,
    parallel_map,
    read_jsonl,
    write_jsonl,
    write_reliability_csv,
)
from .proxy_data import build_sft_dataset, load_qa, parse_evidence
from .reasoner import PredictionRecord
from .reward import reward as score_reward


def _load_graph(path: str):
    with open(path, "r", encoding="utf-8") as handle:
        return load_kg(handle)


def _uq_value(value: str) -> str:
    return value.replace("-", "_")


_CONFIG_OPTIONS = [
    click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None, help="Flat key = value config file."),
    click.option("--alpha", type=float, default=None, help="Beta prior alpha (default 0.5)."),
    click.option("--beta", type=float, default=None, help="Beta prior beta (default 0.5)."),
    click.option("--max-depth", type=int, default=None, help="Path search depth cap (default 4)."),
    click.option("--allow-inverse/--no-allow-inverse", default=None, help="Traverse triples tail-to-head during path search."),
    click.option("--max-paths", type=int, default=None, help="Abort enumeration past this many minimal paths (default 256)."),
    click.option("--inferential-weight", type=float, default=None, help="Weight on the inferential reward term (default 0.85)."),
    click.option("--calibration-tolerance", type=float, default=None, help="Confidence-gap tolerance coefficient (default 2)."),
    click.option("--smoothing-scale", type=float, default=None, help="Sigmoid scale of the smoothed reward (default 2)."),
    click.option("--invalid-penalty", type=float, default=None, help="Reward for syntactically invalid outputs (default -3)."),
    click.option("--advantage-epsilon", type=float, default=None, help="Std guard in group advantages (default 1e-8)."),
    click.option("--jaccard-weight", type=float, default=None, help="Jaccard share of the match score (default 0.5)."),
    click.option("--top-k", type=int, default=None, help="Evidence items per question (default 3)."),
    click.option("--context-line-cap", type=int, default=None, help="Max verbalized lines per prompt (default 50)."),
    click.option("--kg-instruction", type=str, default=None, help="Instruction prefix of the reasoner prompts."),
    click.option("--uq", "uq_method", type=click.Choice(["vanilla", "cot", "self-probing"]), default=None, help="Confidence-elicitation style (default vanilla)."),
    click.option("--backend", type=click.Choice(["mock", "http"]), default=None, help="Reasoner backend (default mock)."),
    click.option("--model", type=str, default=None, help="Model name for the http backend (or KGCAL_MODEL)."),
    click.option("--base-url", type=str, default=None, help="API base URL for the http backend (or KGCAL_API_BASE)."),
    click.option("--retries", type=int, default=None, help="Transport retry attempts (default 3)."),
    click.option("--concurrency", type=int, default=None, help="Per-question parallelism (default 4)."),
    click.option("--mock-confidence-override", type=float, default=None, help="Force every mock confidence to this value."),
    click.option("--n-bins", type=int, default=None, help="Calibration bins (default 10)."),
]


def config_options(command):
    for option in reversed(_CONFIG_OPTIONS):
        command = option(command)
    return command


def _build_config(config_file, **flags) -> PipelineConfig:
    if flags.get("uq_method"):
        flags["uq_method"] = _uq_value(flags["uq_method"])
    try:
        return make_config(config_file, **flags)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


@click.group()
@click.version_option(package_name="kgcal")
def main():
    """Calibrated KG evidence retrieval, scoring, and evaluation."""


@main.group("kg")
def kg_group():
    """Knowledge-graph utilities."""


@kg_group.command("stats")
@click.argument("kg_file", type=click.Path(exists=True, dir_okay=False))
def kg_stats(kg_file):
    """Print entity/relation/triple counts as JSON."""
    try:
        graph = _load_graph(kg_file)
    except KgcalError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(json.dumps(graph.stats()))


@main.command("ground")
@click.option("--kg", "kg_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--entity", required=True, help="Query entity name.")
@click.option("--path", "path_spec", required=True, help="Comma-separated relation names.")
@click.option("--constraint", default=None, help="Answer-side filter as relation=entity.")
def ground_cmd(kg_file, entity, path_spec, constraint):
    """Ground a constrained path and print the candidate entities as JSON."""
    try:
        graph = _load_graph(kg_file)
    except KgcalError as exc:
        raise click.ClickException(str(exc)) from exc
    relations = tuple(r for r in path_spec.split(",") if r)
    parsed_constraint = None
    if constraint is not None:
        if "=" not in constraint:
            raise click.ClickException("--constraint must look like relation=entity")
        rel, _, ent = constraint.partition("=")
        parsed_constraint = (rel, ent)
    from .evidence import ground as ground_op

    path = path_from_names(graph, relations, parsed_constraint)
    result = ground_op(graph, graph.entity_id(entity), path)
    names = sorted(graph.entity_name(e) for e in result.candidates)
    click.echo(json.dumps(names, ensure_ascii=False))


@main.command("build-sft")
@click.option("--kg", "kg_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--qa", "qa_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
@click.option("--max-depth", type=int, default=4, show_default=True)
@click.option("--stage", type=click.Choice(["sft", "rl"]), default="sft", show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--beta", type=float, default=0.5, show_default=True)
@click.option("--allow-inverse", is_flag=True, default=False)
@click.option("--include-qa-records", is_flag=True, default=False, help="Also emit plain question-answer records.")
def build_sft_cmd(kg_file, qa_file, out_file, max_depth, stage, alpha, beta, allow_inverse, include_qa_records):
    """Build proxy training records (instruction/output JSONL)."""
    from .calibration import BetaPrior

    try:
        graph = _load_graph(kg_file)
        with open(qa_file, "r", encoding="utf-8") as handle:
            qa = load_qa(handle)
        result = build_sft_dataset(
            graph,
            qa,
            BetaPrior(alpha, beta),
            max_depth,
            stage=stage,
            allow_inverse=allow_inverse,
            include_qa_records=include_qa_records,
        )
    except (KgcalError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    write_jsonl(Path(out_file), (rec.to_json() for rec in result.records))
    click.echo(
        json.dumps(
            {
                "records": len(result.records),
                "skipped_questions": result.skipped_question_ids,
            }
        )
    )


@main.command("reward")
@click.option("--gold", "gold_file", required=True, type=click.Path(exists=True, dir_okay=False), help="JSONL of evidence records.")
@click.option("--generated", "generated_file", required=True, type=click.Path(exists=True, dir_okay=False), help="JSONL of {id, output} raw generations.")
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
@config_options
def reward_cmd(gold_file, generated_file, out_file, config_file, **flags):
    """Score generated evidence against gold evidence records."""
    config = _build_config(config_file, **flags)
    reward_cfg = config.reward_config()
    gold_by_question: dict[str, list[EvidenceRecord]] = {}
    for row in read_jsonl(Path(gold_file)):
        record = EvidenceRecord.from_json(row)
        gold_by_question.setdefault(record.question_id, []).append(record)
    rows = []
    for row in read_jsonl(Path(generated_file)):
        question_id = str(row["id"])
        gold_set = gold_by_question.get(question_id)
        if not gold_set:
            raise click.ClickException(f"no gold evidence for question id {question_id!r}")
        try:
            parsed = parse_evidence(str(row["output"]))
        except InvalidOutputError:
            parsed = None
        breakdown = score_reward(parsed, gold_set, reward_cfg)
        rows.append({"id": question_id, **breakdown.to_json()})
    write_jsonl(Path(out_file), rows)
    click.echo(json.dumps({"scored": len(rows)}))


@main.command("infer")
@click.option("--kg", "kg_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--evidence", "evidence_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--qa", "qa_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
@config_options
def infer_cmd(kg_file, evidence_file, qa_file, out_file, config_file, **flags):
    """Run the reasoner over verbalized evidence and write predictions."""
    config = _build_config(config_file, **flags)
    try:
        graph = _load_graph(kg_file)
        with open(qa_file, "r", encoding="utf-8") as handle:
            qa = load_qa(handle)
        evidence_by_question: dict[str, list[EvidenceRecord]] = {}
        for row in read_jsonl(Path(evidence_file)):
            record = EvidenceRecord.from_json(row)
            evidence_by_question.setdefault(record.question_id, []).append(record)
        backend = make_backend(config)
        predictions = parallel_map(
            lambda item: infer_question(
                graph, backend, item, evidence_by_question.get(item.question_id, []), config
            ),
            qa,
            config.concurrency,
        )
    except (KgcalError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    write_jsonl(Path(out_file), (p.to_json() for p in predictions))
    click.echo(json.dumps({"predictions": len(predictions)}))


@main.command("evaluate")
@click.option("--predictions", "predictions_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_file", required=True, type=click.Path(exists=True, dir_okay=False), help="QA JSONL with id and answers.")
@click.option("--bins", "n_bins", type=int, default=10, show_default=True)
@click.option("--out", "out_file", required=True, type=click.Path(dir_okay=False))
def evaluate_cmd(predictions_file, gold_file, n_bins, out_file):
    """Compute accuracy and calibration metrics; also writes reliability.csv."""
    predictions = [PredictionRecord.from_json(row) for row in read_jsonl(Path(predictions_file))]
    gold = {}
    with open(gold_file, "r", encoding="utf-8") as handle:
        for item in load_qa(handle):
            gold[item.question_id] = list(item.answers)
    try:
        report = evaluate_predictions(predictions, gold, n_bins)
    except (KgcalError, KeyError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = Path(out_file)
    out_path.write_text(
        json.dumps(report.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    write_reliability_csv(out_path.parent / "reliability.csv", report)
    click.echo(json.dumps({"ece": report.ece, "macro_f1": report.macro_f1}))


@main.command("pipeline")
@click.option("--kg", "kg_file", required=True, type=click.Path(dir_okay=False))
@click.option("--qa", "qa_file", required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--evidence", "evidence_file", default=None, type=click.Path(dir_okay=False), help="External evidence records for the inference stage.")
@config_options
def pipeline_cmd(kg_file, qa_file, out_dir, evidence_file, config_file, **flags):
    """Run the full pipeline: evidence, proxy data, inference, evaluation."""
    config = _build_config(config_file, **flags)
    try:
        result = pipeline_mod.run_pipeline(config, kg_file, qa_file, out_dir, evidence_file)
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc)) from exc
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        json.dumps(
            {
                "output_dir": str(result.output_dir),
                "hit": result.report.get("hit"),
                "macro_f1": result.report.get("macro_f1"),
                "ece": result.report.get("ece"),
            }
        )
    )


if __name__ == "__main__":
    main()
