"""Run configuration for the command-line pipeline.

A run is described by one YAML file.  Paths are resolved relative to the
config file's directory; any input not given explicitly falls back to the
matching file under `<out_dir>/synth/` so a generated panel can feed the
rest of the pipeline without repeating paths.

Example::

    out_dir: runs/demo
    seed: 7
    window: [1977, 2019]
    status_start_year: 1979
    inputs:
      panel: data/raw_panel.csv
      cpi: data/cpi.csv
      macro: data/macro.csv
      targets: data/targets.csv
    threshold:
      mode: anchored
      variant: snap_rate
    design:
      covariates: [ln_income_pc, has_children, age_c]
      fixed_effects: [state, year]
    dynamics:
      bridge_gaps: false
    synth:
      n_households: 120
      complexity: rich
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .glm import Covariate, DesignSpec
from .thresholds import MODES

REPORT_FORMATS = ("csv", "json")
_FE_CHOICES = ("state", "year", "region")

DEFAULT_COVARIATES = ("ln_income_pc", "has_children", "age_c")


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path = Path("run")
    seed: int = 7
    window: tuple[int, int] = (1977, 2019)
    status_start_year: int = 1979
    inputs: dict = field(default_factory=dict)
    schema_map: dict = field(default_factory=dict)
    threshold_mode: str = "anchored"
    threshold_variant: str = "snap_rate"
    response: str = "food_exp_pc_month"
    lag_polynomial: int = 2
    covariates: tuple[str, ...] = DEFAULT_COVARIATES
    fixed_effects: tuple[str, ...] = ("state", "year")
    weight_column: str = "adjusted_weight"
    bridge_gaps: bool = False
    report_format: str = "csv"
    synth: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __post_init__(self):
        if self.threshold_mode not in MODES:
            raise ConfigError(
                f"threshold mode must be one of {MODES}, got {self.threshold_mode!r}"
            )
        if self.report_format not in REPORT_FORMATS:
            raise ConfigError(
                f"report format must be one of {REPORT_FORMATS}, "
                f"got {self.report_format!r}"
            )
        if self.lag_polynomial < 0:
            raise ConfigError("lag_polynomial cannot be negative")
        bad_fe = [f for f in self.fixed_effects if f not in _FE_CHOICES]
        if bad_fe:
            raise ConfigError(f"unsupported fixed effects: {bad_fe}")
        lo, hi = self.window
        if lo > hi:
            raise ConfigError(f"window {self.window} is reversed")
        has_synth = bool(self.synth)
        if self.threshold_mode == "anchored" and not (
            self.inputs.get("targets") or has_synth
        ):
            raise ConfigError(
                "anchored mode needs inputs.targets (or a synth block that "
                "will generate targets)"
            )
        if self.threshold_mode in ("anchored", "snap_model") and not (
            self.inputs.get("macro") or has_synth
        ):
            raise ConfigError(
                f"{self.threshold_mode} mode needs inputs.macro (or a synth "
                "block that will generate it)"
            )

    # -------------------------------------------------------------- access

    def design_spec(self) -> DesignSpec:
        return DesignSpec(
            response=self.response,
            lag_polynomial=self.lag_polynomial,
            covariates=tuple(Covariate(c) for c in self.covariates),
            fixed_effects=tuple(self.fixed_effects),
            weight_column=self.weight_column,
        )

    def input_path(self, key: str) -> Path | None:
        raw = self.inputs.get(key)
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def stage_dir(self, stage: str) -> Path:
        return self.out_dir / stage

    def with_overrides(
        self,
        out: str | None = None,
        seed: int | None = None,
        threshold_mode: str | None = None,
        report_format: str | None = None,
    ) -> "PipelineConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, out_dir=Path(out))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if threshold_mode is not None:
            cfg = replace(cfg, threshold_mode=threshold_mode.replace("-", "_"))
        if report_format is not None:
            cfg = replace(cfg, report_format=report_format)
        return cfg

    def echo(self) -> dict:
        """Serializable view recorded in every stage manifest.

        Deliberately omits the output directory so that two runs of the
        same configuration into different locations produce byte-identical
        manifests.
        """
        return {
            "seed": self.seed,
            "window": list(self.window),
            "status_start_year": self.status_start_year,
            "inputs": {k: str(v) for k, v in sorted(self.inputs.items())},
            "schema_map": dict(sorted(self.schema_map.items())),
            "threshold": {
                "mode": self.threshold_mode,
                "variant": self.threshold_variant,
            },
            "design": {
                "response": self.response,
                "lag_polynomial": self.lag_polynomial,
                "covariates": list(self.covariates),
                "fixed_effects": list(self.fixed_effects),
                "weight_column": self.weight_column,
            },
            "dynamics": {"bridge_gaps": self.bridge_gaps},
            "report_format": self.report_format,
            "synth": dict(sorted(self.synth.items())),
        }


def _as_int_pair(value, name: str) -> tuple[int, int]:
    try:
        lo, hi = value
        return int(lo), int(hi)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a [low, high] pair, got {value!r}") from exc


def config_from_dict(data: dict, base_dir: str | Path = ".") -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {
        "out_dir", "seed", "window", "status_start_year", "inputs", "schema",
        "threshold", "design", "dynamics", "report", "synth",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    thr = data.get("threshold") or {}
    des = data.get("design") or {}
    dyn = data.get("dynamics") or {}
    rep = data.get("report") or {}
    base = Path(base_dir)
    out_dir = Path(data.get("out_dir", "run"))
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    return PipelineConfig(
        out_dir=out_dir,
        seed=int(data.get("seed", 7)),
        window=_as_int_pair(data.get("window", (1977, 2019)), "window"),
        status_start_year=int(data.get("status_start_year", 1979)),
        inputs=dict(data.get("inputs") or {}),
        schema_map=dict(data.get("schema") or {}),
        threshold_mode=str(thr.get("mode", "anchored")),
        threshold_variant=str(thr.get("variant", "snap_rate")),
        response=str(des.get("response", "food_exp_pc_month")),
        lag_polynomial=int(des.get("lag_polynomial", 2)),
        covariates=tuple(des.get("covariates", DEFAULT_COVARIATES)),
        fixed_effects=tuple(des.get("fixed_effects", ("state", "year"))),
        weight_column=str(des.get("weight_column", "adjusted_weight")),
        bridge_gaps=bool(dyn.get("bridge_gaps", False)),
        report_format=str(rep.get("format", "csv")),
        synth=dict(data.get("synth") or {}),
        base_dir=base,
    )


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {p} is not valid YAML: {exc}") from exc
    return config_from_dict(data or {}, base_dir=p.parent)
