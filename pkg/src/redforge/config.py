"""Pipeline configuration: TOML loading, validation, and the training-recipe manifest.

Gradient training itself is out of scope; the recipe section exists so that
the hyperparameters travel with the datasets as a machine-readable manifest
for downstream trainers.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def parse_ratio(text: str) -> tuple[int, int]:
    """Parse an ``sns:general`` ratio string like ``"1:3"``."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"ratio must look like 'S:G', got '{text}'")
    try:
        sns, general = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"ratio parts must be integers, got '{text}'") from None
    if sns <= 0 or general < 0:
        raise ValueError(f"ratio parts must be positive (general may be 0), got '{text}'")
    return sns, general


def sns_share(ratio: tuple[int, int]) -> float:
    return ratio[0] / (ratio[0] + ratio[1])


@dataclass(frozen=True)
class FilterConfig:
    min_tokens: int = 10
    max_tokens: int = 65536
    repetition_threshold: float = 0.3
    retention_target: float = 0.20
    scorer_order: int = 2
    smoothing_k: float = 1.0
    rules: tuple[str, ...] = ("html", "repetition", "too_short", "too_long")

    def __post_init__(self) -> None:
        if self.min_tokens <= 0 or self.max_tokens <= 0:
            raise ValueError("token bounds must be positive")
        if self.min_tokens > self.max_tokens:
            raise ValueError("min_tokens must not exceed max_tokens")
        if not 0.0 <= self.repetition_threshold <= 1.0:
            raise ValueError("repetition_threshold must lie in [0, 1]")
        if not 0.0 < self.retention_target <= 1.0:
            raise ValueError("retention_target must lie in (0, 1]")
        if self.scorer_order < 1:
            raise ValueError("scorer_order must be >= 1")
        if self.smoothing_k <= 0:
            raise ValueError("smoothing_k must be positive")
        unknown = set(self.rules) - {"html", "repetition", "too_short", "too_long"}
        if unknown:
            raise ValueError(f"unknown rule(s): {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class PackConfig:
    threshold: int = 4096

    def __post_init__(self) -> None:
        if self.threshold < 1:
            raise ValueError("pack threshold must be >= 1")


@dataclass(frozen=True)
class MixtureConfig:
    alpha: float = 1.0
    samples: int = 512
    search: int = 100000
    top_k: int = 32
    prune_epsilon: float = 1e-3
    held_out_fraction: float = 0.1
    proxy_positions: int = 20000

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.samples < 0:
            raise ValueError("samples must be >= 0")
        if not self.search >= self.top_k >= 1:
            raise ValueError("need search >= top_k >= 1")
        if not 0.0 <= self.prune_epsilon < 1.0:
            raise ValueError("prune_epsilon must lie in [0, 1)")
        if not 0.0 < self.held_out_fraction < 1.0:
            raise ValueError("held_out_fraction must lie in (0, 1)")
        if self.proxy_positions < 1:
            raise ValueError("proxy_positions must be >= 1")


@dataclass(frozen=True)
class SftConfig:
    r1: str = "1:3"
    r2: str = "4:1"
    allow_replacement: bool = False
    template_style: str = "default"

    def __post_init__(self) -> None:
        parse_ratio(self.r1)
        parse_ratio(self.r2)


@dataclass(frozen=True)
class PrefConfig:
    tau: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


@dataclass(frozen=True)
class RecipeConfig:
    """Training hyperparameters emitted as a manifest for downstream trainers."""

    cpt_seq_len: int = 4096
    sft_seq_len: int = 16384
    po_seq_len: int = 4096
    dpo_beta: float = 0.1
    sft_loss_coef: float = 0.3
    cpt_epochs: int = 1
    sft_step1_epochs: int = 3
    sft_step2_epochs: int = 2
    po_epochs: int = 2
    sft_batch_size: int = 128
    po_batch_size: int = 64
    warmup_ratio: float = 0.1
    cpt_lr: float = 1e-5
    sft_lr: float = 3e-6
    po_lr: float = 1e-7
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if min(self.cpt_seq_len, self.sft_seq_len, self.po_seq_len) <= 0:
            raise ValueError("sequence lengths must be positive")
        if self.dpo_beta <= 0:
            raise ValueError("dpo_beta must be positive")
        if self.sft_loss_coef < 0:
            raise ValueError("sft_loss_coef must be non-negative")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "sequence_length": {"cpt": self.cpt_seq_len, "sft": self.sft_seq_len, "po": self.po_seq_len},
            "epochs": {
                "cpt": self.cpt_epochs,
                "sft_step1": self.sft_step1_epochs,
                "sft_step2": self.sft_step2_epochs,
                "po": self.po_epochs,
            },
            "batch_size": {"sft": self.sft_batch_size, "po": self.po_batch_size},
            "learning_rate": {"cpt": self.cpt_lr, "sft": self.sft_lr, "po": self.po_lr},
            "warmup_ratio": self.warmup_ratio,
            "adam_betas": [self.adam_beta1, self.adam_beta2],
            "adam_epsilon": self.adam_epsilon,
            "dpo_beta": self.dpo_beta,
            "sft_loss_coef": self.sft_loss_coef,
        }


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    filter: FilterConfig = field(default_factory=FilterConfig)
    pack: PackConfig = field(default_factory=PackConfig)
    mixture: MixtureConfig = field(default_factory=MixtureConfig)
    sft: SftConfig = field(default_factory=SftConfig)
    pref: PrefConfig = field(default_factory=PrefConfig)
    recipe: RecipeConfig = field(default_factory=RecipeConfig)
    # Input paths used by the end-to-end runner, resolved against the config
    # file location at load time. Stage sections above stay pure parameters.
    inputs: dict[str, Any] = field(default_factory=dict)


_SECTION_TYPES = {
    "filter": FilterConfig,
    "pack": PackConfig,
    "mixture": MixtureConfig,
    "sft": SftConfig,
    "pref": PrefConfig,
    "recipe": RecipeConfig,
}


def _build_section(section_cls: type, table: dict[str, Any], name: str) -> Any:
    known = {f.name for f in fields(section_cls)}
    unknown = set(table) - known
    if unknown:
        raise ValueError(f"[{name}]: unknown key(s): {', '.join(sorted(unknown))}")
    coerced = {}
    for key, value in table.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    return section_cls(**coerced)


def load_config(path: str | Path) -> PipelineConfig:
    """Load and validate a pipeline config from TOML.

    Recognized sections: [filter], [pack], [mixture], [sft], [pref],
    [recipe], and [eval] plus [io] input tables consumed by the runner.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    seed = raw.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValueError("top-level 'seed' must be an integer")

    sections: dict[str, Any] = {}
    for name, section_cls in _SECTION_TYPES.items():
        table = raw.pop(name, {})
        if not isinstance(table, dict):
            raise ValueError(f"[{name}] must be a table")
        sections[name] = _build_section(section_cls, table, name)

    inputs = raw.pop("io", {})
    if not isinstance(inputs, dict):
        raise ValueError("[io] must be a table")
    eval_table = raw.pop("eval", None)
    if eval_table is not None:
        inputs = dict(inputs)
        inputs["eval"] = eval_table

    if raw:
        raise ValueError(f"unknown top-level key(s): {', '.join(sorted(raw))}")

    resolved = _resolve_paths(inputs, path.parent)
    return PipelineConfig(seed=seed, inputs=resolved, **sections)


def _resolve_paths(obj: Any, base: Path) -> Any:
    if isinstance(obj, dict):
        return {k: _resolve_paths(v, base) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_resolve_paths(v, base) for v in obj]
    if isinstance(obj, str) and (obj.endswith(".jsonl") or obj.endswith(".json")):
        return str((base / obj).resolve()) if not Path(obj).is_absolute() else obj
    return obj
