"""Experiment configuration: plain-text ``key: value`` files with optional sections.

Section headers (``[federation]``, ``[data]``, ...) are for readability only;
keys are looked up across all sections. A file without any header is read as
one anonymous section. Short aliases ``M``, ``n``, ``r`` and ``w`` are
accepted for ``num_clients``, ``num_cohorts``, ``patience`` and ``window``.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .errors import ConfigError

ALIASES = {"m": "num_clients", "n": "num_cohorts", "r": "patience", "w": "window"}


def _int_list(text: str) -> list[int]:
    text = str(text).strip()
    if text in ("", "none"):
        return []
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _optional_int(text: str) -> int | None:
    text = str(text).strip().lower()
    return None if text in ("", "none") else int(text)


@dataclass
class ExperimentConfig:
    # federation
    num_clients: int = 64
    num_cohorts: int = 1
    alpha: float = 0.1
    participation_rate: float = 1.0
    local_epochs: int | None = 1
    local_steps: int | None = None
    batch_size: int = 20
    lr: float = 0.002
    momentum: float = 0.9
    patience: int = 20
    window: int = 10
    validation_fraction: float = 0.1
    validation_min_samples: int = 10
    min_client_samples: int = 1
    round_cap: int = 5000
    # model
    hidden: list[int] = field(default_factory=lambda: [64])
    # data
    classes: int = 10
    dim: int = 16
    train_per_class: int = 600
    test_per_class: int = 200
    cluster_spread: float = 3.0
    public_factor: float = 10.0
    public_shift: float = 1.0
    # traces: "generated" or a path to a trace CSV
    traces: str = "generated"
    trace_count: int = 1000
    # distillation
    distill_epochs: int = 50
    distill_batch: int = 512
    distill_lr: float = 0.001
    weighting: str = "per-class"
    distill_quorum: float = 1.0
    # run
    seed: int = 1
    workers: int = 1

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.dim, *self.hidden, self.classes)

    def validate(self) -> "ExperimentConfig":
        def need(ok: bool, name: str, reason: str) -> None:
            if not ok:
                raise ConfigError(name, reason)

        need(self.num_clients >= 1, "num_clients", "must be >= 1")
        need(1 <= self.num_cohorts <= self.num_clients, "num_cohorts",
             f"must satisfy 1 <= n <= M ({self.num_clients}), got {self.num_cohorts}")
        need(self.alpha > 0, "alpha", "must be > 0")
        need(0 < self.participation_rate <= 1, "participation_rate", "must lie in (0, 1]")
        need((self.local_epochs is None) != (self.local_steps is None), "local_epochs",
             "set exactly one of local_epochs and local_steps")
        if self.local_epochs is not None:
            need(self.local_epochs >= 1, "local_epochs", "must be >= 1")
        if self.local_steps is not None:
            need(self.local_steps >= 1, "local_steps", "must be >= 1")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.lr >= 0, "lr", "must be >= 0")
        need(0 <= self.momentum < 1, "momentum", "must lie in [0, 1)")
        need(self.patience >= 1, "patience", "must be >= 1")
        need(self.window >= 1, "window", "must be >= 1")
        need(0 < self.validation_fraction < 1, "validation_fraction", "must lie in (0, 1)")
        need(self.validation_min_samples >= 1, "validation_min_samples", "must be >= 1")
        need(self.min_client_samples >= 0, "min_client_samples", "must be >= 0")
        need(self.round_cap >= 1, "round_cap", "must be >= 1")
        need(all(h >= 1 for h in self.hidden), "hidden", "layer widths must be >= 1")
        need(self.classes >= 2, "classes", "must be >= 2")
        need(self.dim >= 2, "dim", "must be >= 2")
        need(self.train_per_class >= 1, "train_per_class", "must be >= 1")
        need(self.test_per_class >= 1, "test_per_class", "must be >= 1")
        need(self.cluster_spread > 0, "cluster_spread", "must be > 0")
        need(self.public_factor > 0, "public_factor", "must be > 0")
        need(self.public_shift >= 0, "public_shift", "must be >= 0")
        need(self.trace_count >= 1, "trace_count", "must be >= 1")
        need(self.distill_epochs >= 0, "distill_epochs", "must be >= 0")
        need(self.distill_batch >= 1, "distill_batch", "must be >= 1")
        need(self.distill_lr > 0, "distill_lr", "must be > 0")
        need(self.weighting in ("per-class", "scalar"), "weighting",
             "must be 'per-class' or 'scalar'")
        need(0 < self.distill_quorum <= 1, "distill_quorum", "must lie in (0, 1]")
        need(self.workers >= 1, "workers", "must be >= 1")
        need(self.seed >= 0, "seed", "must be >= 0")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _converters() -> dict[str, Callable[[str], Any]]:
    out: dict[str, Callable[[str], Any]] = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "hidden":
            out[f.name] = _int_list
        elif f.name in ("local_epochs", "local_steps"):
            out[f.name] = _optional_int
        elif f.type in ("int", int):
            out[f.name] = lambda v: int(str(v).strip())
        elif f.type in ("float", float):
            out[f.name] = lambda v: float(str(v).strip())
        else:
            out[f.name] = lambda v: str(v).strip()
    return out


CONVERTERS = _converters()
FIELD_NAMES = tuple(CONVERTERS)


def canonical_key(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    return ALIASES.get(key, key)


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw ``key -> text`` pairs from a config file, aliases resolved."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(delimiters=(":", "="), interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    body = text if text.lstrip().startswith("[") else "[experiment]\n" + text
    try:
        parser.read_string(body, source=str(path))
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    values: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            values[canonical_key(key)] = value
    return values


def build_config(*sources: Mapping[str, Any]) -> ExperimentConfig:
    """Merge value mappings left to right (later wins) over the defaults and validate."""
    merged: dict[str, Any] = {}
    for src in sources:
        for key, value in src.items():
            if value is None:
                continue
            name = canonical_key(key)
            if name not in CONVERTERS:
                raise ConfigError(name, "unknown configuration key")
            merged[name] = value
    # an explicit local_steps switches off the default epoch mode
    if "local_steps" in merged and "local_epochs" not in merged:
        merged["local_epochs"] = "none"
    kwargs = {}
    for name, value in merged.items():
        try:
            kwargs[name] = CONVERTERS[name](value)
        except (TypeError, ValueError):
            raise ConfigError(name, f"cannot parse {value!r}") from None
    return ExperimentConfig(**kwargs).validate()


def parse_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides`` (e.g. CLI flags)."""
    file_values = read_config_file(path) if path is not None else {}
    return build_config(file_values, overrides or {})


def output_dir(default: str | Path) -> Path:
    """``CPFL_OUT_DIR`` overrides the output directory when set."""
    return Path(os.environ.get("CPFL_OUT_DIR") or default)
