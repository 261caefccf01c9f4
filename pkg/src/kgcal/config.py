"""Pipeline configuration: defaults, validation, and the flat config-file format.

Config files are flat ``key = value`` lines (# comments allowed). Every key
can be overridden by a CLI flag. Secrets (the API key) are env-only and
never appear in config files or artifacts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .calibration import BetaPrior
from .evidence import DEFAULT_MAX_DEPTH, DEFAULT_MAX_PATHS
from .prompts import DEFAULT_INSTRUCTION, DEFAULT_LINE_CAP, UQ_METHODS
from .reward import RewardConfig


@dataclass
class PipelineConfig:
    # Evidence calibration
    alpha: float = 0.5
    beta: float = 0.5
    max_depth: int = DEFAULT_MAX_DEPTH
    allow_inverse: bool = False
    max_paths: int = DEFAULT_MAX_PATHS
    # Reward
    inferential_weight: float = 0.85
    calibration_tolerance: float = 2.0
    smoothing_scale: float = 2.0
    invalid_penalty: float = -3.0
    advantage_epsilon: float = 1e-8
    jaccard_weight: float = 0.5
    # Context / inference
    top_k: int = 3
    context_line_cap: int = DEFAULT_LINE_CAP
    kg_instruction: str = DEFAULT_INSTRUCTION
    uq_method: str = "vanilla"
    backend: str = "mock"
    model: str = ""
    base_url: str = ""
    retries: int = 3
    concurrency: int = 4
    mock_confidence_override: float | None = None
    # Evaluation
    n_bins: int = 10

    def validate(self) -> "PipelineConfig":
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("prior alpha and beta must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_paths < 1:
            raise ValueError("max_paths must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.retries < 1:
            raise ValueError("retries must be >= 1")
        if self.context_line_cap < 1:
            raise ValueError("context_line_cap must be >= 1")
        if self.uq_method not in UQ_METHODS:
            raise ValueError(f"uq_method must be one of {UQ_METHODS}")
        if self.backend not in ("mock", "http"):
            raise ValueError("backend must be 'mock' or 'http'")
        if self.mock_confidence_override is not None and not (
            0.0 <= self.mock_confidence_override <= 1.0
        ):
            raise ValueError("mock_confidence_override must be in [0, 1]")
        # Reward ranges are validated by RewardConfig itself.
        self.reward_config()
        return self

    def prior(self) -> BetaPrior:
        return BetaPrior(self.alpha, self.beta)

    def reward_config(self) -> RewardConfig:
        return RewardConfig(
            inferential_weight=self.inferential_weight,
            calibration_tolerance=self.calibration_tolerance,
            smoothing_scale=self.smoothing_scale,
            invalid_penalty=self.invalid_penalty,
            advantage_epsilon=self.advantage_epsilon,
            jaccard_weight=self.jaccard_weight,
        )

    def to_json(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(key: str, raw: str):
    text = raw.strip()
    if (text.startswith('"') and text.endswith('"')) or (
        text.startswith("'") and text.endswith("'")
    ):
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    field_type = _FIELD_TYPES.get(key, "")
    if "int" in str(field_type):
        return int(text)
    if "float" in str(field_type):
        return float(text)
    return text


def load_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` config file into an override dict."""
    overrides: dict = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
        overrides[key] = _parse_value(key, value)
    return overrides


def make_config(file_path: str | Path | None = None, **flag_overrides) -> PipelineConfig:
    """Defaults, then config file, then flags (flags win). None flags are ignored."""
    values: dict = {}
    if file_path is not None:
        values.update(load_config_file(file_path))
    values.update({k: v for k, v in flag_overrides.items() if v is not None})
    return PipelineConfig(**values).validate()
