"""Run configuration: defaults, key=value config files, validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .hclust import METHODS
from .svn import CONVENTIONS, CORRECTIONS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: str | None = None
    out_dir: str = "out"
    stocks: tuple[str, ...] = ()  # empty: every stock in the input
    theta: float = 0.25
    min_transactions: int = 5
    alpha: float = 0.01
    correction: str = "bonferroni"
    linkage: str = "average"
    sweep_linkages: tuple[str, ...] = ("single", "average", "complete")
    coarse_step: float = 0.1
    fine_step: float = 0.01
    infomap_seed: int = 0
    infomap_trials: int = 10
    bonferroni_denominator_convention: str = "unordered_pairs"
    activity_period: str = "span"  # span | full
    svn_population: str = "unfiltered"  # unfiltered | filtered
    workers: int = 1
    figures: bool = True
    write_matrix: bool = True
    truth: str | None = None

    def __post_init__(self):
        self.stocks = tuple(self.stocks)
        self.sweep_linkages = tuple(self.sweep_linkages)
        self.validate()

    def validate(self) -> None:
        if not 0 < self.theta < 1:
            raise ConfigError("theta must lie in (0, 1)")
        if self.min_transactions < 1:
            raise ConfigError("min_transactions must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"correction must be one of {CORRECTIONS}")
        for m in (self.linkage, *self.sweep_linkages):
            if m not in METHODS:
                raise ConfigError(f"unknown linkage {m!r}; choose from {sorted(METHODS)}")
        if not 0 < self.fine_step <= self.coarse_step:
            raise ConfigError("need 0 < fine_step <= coarse_step")
        if self.infomap_trials < 1:
            raise ConfigError("infomap_trials must be >= 1")
        if self.bonferroni_denominator_convention not in CONVENTIONS:
            raise ConfigError(f"bonferroni_denominator_convention must be one of {CONVENTIONS}")
        if self.activity_period not in ("span", "full"):
            raise ConfigError("activity_period must be 'span' or 'full'")
        if self.svn_population not in ("unfiltered", "filtered"):
            raise ConfigError("svn_population must be 'unfiltered' or 'filtered'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def as_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["stocks"] = list(self.stocks)
        out["sweep_linkages"] = list(self.sweep_linkages)
        return out

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def coerce_value(name: str, raw: str) -> Any:
    f = {f.name: f for f in dataclasses.fields(RunConfig)}.get(name)
    if f is None:
        raise ConfigError(f"unknown config key {name!r}")
    default = f.default if f.default is not dataclasses.MISSING else None
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(x.strip() for x in raw.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc
    return raw or None


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, raw = line.split("=", 1)
        key = key.strip()
        values[key] = coerce_value(key, raw.strip().strip('"').strip("'"))
    return values


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(config: RunConfig) -> str:
    lines = []
    for k, v in config.as_dict().items():
        if isinstance(v, list):
            v = ",".join(v)
        lines.append(f"{k} = {'' if v is None else v}")
    return "\n".join(lines) + "\n"
