"""Staged pipeline behind the command line.

Each stage reads its inputs (raw files or a prior stage's outputs under the
run directory), writes its results into `<out_dir>/<stage>/`, and finishes
with a `manifest.json` listing every emitted file with a content digest.
Nothing records wall-clock time or absolute paths, so re-running the same
configuration reproduces every output byte for byte, manifests included.

Stage order: synth (optional) -> ingest -> estimate -> calibrate ->
dynamics -> report; `validate` cross-checks whatever stages have run.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, dynamics, reports
from .config import PipelineConfig
from .dynasty import build_dynasty, representativeness
from .errors import (
    ConfigError,
    DataError,
    DependencyError,
    UsageError,
    ValidationFailure,
)
from .estimator import compute_pfs, estimate_moments
from .figures import emit_figures
from .ingest import CpiTable, harmonize_table, parse_panel_csv
from .synth import FILE_NAMES as SYNTH_FILES
from .synth import DGPConfig, generate
from .thresholds import calibrate_panel
from .waves import default_calendar

log = logging.getLogger(__name__)

SUBCOMMANDS = (
    "synth", "ingest", "estimate", "calibrate", "dynamics", "report", "validate"
)

_ID_COLUMNS = {"person_id": str, "household_id": str}


@dataclass(frozen=True)
class ReportBundle:
    """What a stage produced: file names with content digests."""

    stage: str
    out_dir: Path
    files: dict  # name -> sha256 hex digest
    manifest_path: Path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _read_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype=_ID_COLUMNS)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _finish_stage(
    stage: str,
    config: PipelineConfig,
    stage_dir: Path,
    inputs: dict[str, Path],
    notes: dict,
) -> ReportBundle:
    files = {}
    for p in sorted(stage_dir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        files[p.name] = _sha256(p)
    manifest = {
        "stage": stage,
        "package": {"name": "pfspanel", "version": __version__},
        "rng": "numpy PCG64, seeded through SeedSequence",
        "config": config.echo(),
        "inputs": {k: _sha256(v) for k, v in sorted(inputs.items())},
        "outputs": files,
        "notes": notes,
    }
    manifest_path = stage_dir / "manifest.json"
    _write_json(manifest_path, manifest)
    return ReportBundle(
        stage=stage, out_dir=stage_dir, files=files, manifest_path=manifest_path
    )


def _resolve_input(config: PipelineConfig, key: str, synth_file: str) -> Path:
    """An explicit config path wins; otherwise fall back to the synth stage."""
    p = config.input_path(key)
    if p is not None:
        if not p.exists():
            raise DataError(f"configured inputs.{key} does not exist: {p}")
        return p
    fallback = config.stage_dir("synth") / synth_file
    if fallback.exists():
        return fallback
    raise DependencyError(
        f"no inputs.{key} configured and {fallback} is absent; run the "
        f"'synth' stage first or point inputs.{key} at a file"
    )


def _require_stage_file(config: PipelineConfig, stage: str, name: str) -> Path:
    p = config.stage_dir(stage) / name
    if not p.exists():
        raise DependencyError(
            f"{name} not found under {config.stage_dir(stage)}; run the "
            f"'{stage}' stage first"
        )
    return p


# ------------------------------------------------------------------ stages


def stage_synth(config: PipelineConfig) -> ReportBundle:
    overrides = dict(config.synth)
    overrides.setdefault("seed", config.seed)
    overrides.setdefault("window", tuple(config.window))
    for key in ("window", "states", "state_effects", "fsss_years"):
        if overrides.get(key) is not None:
            overrides[key] = tuple(overrides[key])
    if overrides.get("tfp_schedule") is not None:
        overrides["tfp_schedule"] = tuple(
            (int(y), float(c)) for y, c in overrides["tfp_schedule"]
        )
    if overrides.get("variance_coefficients") is not None:
        overrides["variance_coefficients"] = tuple(
            (str(t), float(v)) for t, v in overrides["variance_coefficients"]
        )
    try:
        dgp = DGPConfig(**overrides)
    except TypeError as exc:
        raise ConfigError(f"bad synth settings: {exc}") from exc
    stage_dir = config.stage_dir("synth")
    stage_dir.mkdir(parents=True, exist_ok=True)
    panel = generate(dgp, out_dir=stage_dir)
    notes = {
        "n_rows": int(len(panel.raw)),
        "n_persons": int(panel.raw["person_id"].nunique()),
        "n_households": int(dgp.n_households),
        "complexity": dgp.complexity,
        "dgp_seed": int(dgp.seed),
    }
    return _finish_stage("synth", config, stage_dir, {}, notes)


def stage_ingest(config: PipelineConfig) -> ReportBundle:
    panel_path = _resolve_input(config, "panel", SYNTH_FILES["raw"])
    cpi_path = _resolve_input(config, "cpi", SYNTH_FILES["cpi"])
    stage_dir = config.stage_dir("ingest")
    stage_dir.mkdir(parents=True, exist_ok=True)

    parsed = parse_panel_csv(panel_path, schema=config.schema_map or None)
    cpi = CpiTable.from_csv(cpi_path)
    harmonized = harmonize_table(parsed, cpi)
    dyn = build_dynasty(harmonized.table, window=config.window)

    study = dyn.panel.copy()
    # analysis columns derived once so every later stage agrees on them
    study["ln_income_pc"] = np.log(np.maximum(study["income_pc"].astype(float), 1.0))
    study["has_children"] = (study["n_children"].fillna(0) > 0).astype(float)
    study["age_c"] = (study["rp_age"].astype(float) - 45.0) / 10.0

    rep = representativeness(harmonized.table, dyn.panel)

    harmonized.table.to_csv(stage_dir / "harmonized.csv", index=False)
    harmonized.exclusions.to_csv(stage_dir / "exclusions.csv", index=False)
    pd.DataFrame(
        parsed.warnings, columns=["row", "column", "value", "message"]
    ).to_csv(stage_dir / "parse_warnings.csv", index=False)
    pd.DataFrame(
        harmonized.warnings, columns=["row", "column", "value", "message"]
    ).to_csv(stage_dir / "harmonize_warnings.csv", index=False)
    study.to_csv(stage_dir / "study_panel.csv", index=False)
    dyn.roster.to_csv(stage_dir / "roster.csv", index=False)
    dyn.dropped.to_csv(stage_dir / "dropped_geography.csv", index=False)
    rep.to_csv(stage_dir / "representativeness.csv", index=False)

    notes = {
        "rows_parsed": int(parsed.n_rows),
        "rows_harmonized": int(len(harmonized.table)),
        "rows_excluded": int(harmonized.n_excluded),
        "parse_warnings": len(parsed.warnings),
        "harmonize_warnings": len(harmonized.warnings),
        "study_rows": int(len(study)),
        "study_persons": int(study["person_id"].nunique()),
        "geography_dropped_rows": int(len(dyn.dropped)),
        "window": list(config.window),
    }
    return _finish_stage(
        "ingest", config, stage_dir, {"panel": panel_path, "cpi": cpi_path}, notes
    )


def stage_estimate(config: PipelineConfig) -> ReportBundle:
    study_path = _require_stage_file(config, "ingest", "study_panel.csv")
    stage_dir = config.stage_dir("estimate")
    stage_dir.mkdir(parents=True, exist_ok=True)

    study = _read_table(study_path)
    spec = config.design_spec()
    calendar = default_calendar()
    est = estimate_moments(study, spec, calendar)
    pfs = compute_pfs(est.table, study)

    pfs.to_csv(stage_dir / "pfs.csv", index=False)
    _write_json(stage_dir / "model_mean.json", est.mean_model.to_jsonable())
    if est.variance_model is not None:
        _write_json(
            stage_dir / "model_variance.json", est.variance_model.to_jsonable()
        )
    _write_json(
        stage_dir / "estimate_summary.json",
        {
            "design_columns": list(est.design_columns),
            "exclusions": {k: int(v) for k, v in sorted(est.exclusions.items())},
            "degenerate_variance": bool(est.degenerate_variance),
            "n_variance_floored": int(est.n_floored),
            "n_pfs_rows": int(len(pfs)),
        },
    )
    notes = {
        "n_pfs_rows": int(len(pfs)),
        "mean_converged": bool(est.mean_model.converged),
        "mean_iterations": int(est.mean_model.n_iter),
        "variance_fitted": est.variance_model is not None,
    }
    return _finish_stage(
        "estimate", config, stage_dir, {"study_panel": study_path}, notes
    )


def stage_calibrate(config: PipelineConfig) -> ReportBundle:
    pfs_path = _require_stage_file(config, "estimate", "pfs.csv")
    stage_dir = config.stage_dir("calibrate")
    stage_dir.mkdir(parents=True, exist_ok=True)

    pfs = _read_table(pfs_path)
    pfs = pfs[pfs["year"] >= config.status_start_year].copy()

    mode = config.threshold_mode
    inputs = {"pfs": pfs_path}
    targets = None
    macro = None
    if mode in ("anchored", "snap_model"):
        targets_path = _resolve_input(config, "targets", SYNTH_FILES["targets"])
        targets = pd.read_csv(targets_path)
        inputs["targets"] = targets_path
    try:
        macro_path = _resolve_input(config, "macro", SYNTH_FILES["macro"])
    except (DependencyError, DataError):
        macro_path = None
    if macro_path is not None:
        macro = pd.read_csv(macro_path)
        inputs["macro"] = macro_path

    result = calibrate_panel(
        pfs,
        targets if targets is not None else pd.DataFrame(columns=["year", "target"]),
        macro=macro,
        mode=mode,
        variant=config.threshold_variant,
    )
    result.cutoffs.to_csv(stage_dir / "cutoffs.csv", index=False)
    result.status.to_csv(stage_dir / "status.csv", index=False)
    result.prevalence.to_csv(stage_dir / "prevalence.csv", index=False)
    if result.model is not None:
        _write_json(stage_dir / "threshold_model.json", result.model.to_jsonable())
    if len(result.variants):
        result.variants.to_csv(stage_dir / "threshold_variants.csv", index=False)
    if len(result.correlations):
        result.correlations.to_csv(
            stage_dir / "threshold_correlations.csv", index=False
        )
    notes = {
        "mode": mode,
        "variant": config.threshold_variant,
        "n_years": int(len(result.cutoffs)),
        "n_status_rows": int(len(result.status)),
        "model_fitted": result.model is not None,
        "variants_emitted": bool(len(result.variants)),
        "status_start_year": config.status_start_year,
    }
    return _finish_stage("calibrate", config, stage_dir, inputs, notes)


def stage_dynamics(config: PipelineConfig) -> ReportBundle:
    status_path = _require_stage_file(config, "calibrate", "status.csv")
    study_path = _require_stage_file(config, "ingest", "study_panel.csv")
    stage_dir = config.stage_dir("dynamics")
    stage_dir.mkdir(parents=True, exist_ok=True)

    status = _read_table(status_path)
    calendar = default_calendar()

    spells = dynamics.find_spells(status, calendar, bridge_gaps=config.bridge_gaps)
    dist = dynamics.spell_distribution(spells)
    trans = dynamics.transition_rates(status, calendar)
    chronic = dynamics.chronic_classification(status, calendar)
    ns = dynamics.newly_still(status, calendar)

    spells.to_csv(stage_dir / "spells.csv", index=False)
    dist.to_csv(stage_dir / "spell_distribution.csv", index=False)
    trans.to_csv(stage_dir / "transitions.csv", index=False)
    chronic.to_csv(stage_dir / "chronic.csv", index=False)
    ns.to_csv(stage_dir / "newly_still.csv", index=False)

    study = _read_table(study_path)
    fsss_cols = [c for c in ("fsss_raw", "fsss_status") if c in study.columns]
    merged = status.merge(
        study[["person_id", "year", *fsss_cols]],
        on=["person_id", "year"],
        how="left",
    )
    has_fsss = (
        "fsss_status" in merged.columns and merged["fsss_status"].notna().any()
    )
    if has_fsss:
        crosstab = dynamics.crosstab_pfs_fsss(merged)
        crosstab.to_csv(stage_dir / "fsss_crosstab.csv", index=False)
        scored = merged.dropna(subset=["fsss_raw", "fsss_status"])
        _, reranked = dynamics.reclassified_crosstab(scored)
        reranked.to_csv(stage_dir / "fsss_crosstab_reclassified.csv", index=False)
        dynamics.rank_correlations(scored).to_csv(
            stage_dir / "rank_correlations.csv", index=False
        )
    notes = {
        "bridge_gaps": config.bridge_gaps,
        "n_spells": int(len(spells)),
        "n_transition_rows": int(len(trans)),
        "fsss_available": bool(has_fsss),
    }
    return _finish_stage(
        "dynamics", config, stage_dir,
        {"status": status_path, "study_panel": study_path}, notes,
    )


def _emit_table(frame: pd.DataFrame, stage_dir: Path, name: str, fmt: str) -> None:
    if fmt == "json":
        payload = json.loads(frame.to_json(orient="records"))
        _write_json(stage_dir / f"{name}.json", payload)
    else:
        frame.to_csv(stage_dir / f"{name}.csv", index=False)


def stage_report(config: PipelineConfig) -> ReportBundle:
    study_path = _require_stage_file(config, "ingest", "study_panel.csv")
    rep_path = _require_stage_file(config, "ingest", "representativeness.csv")
    pfs_path = _require_stage_file(config, "estimate", "pfs.csv")
    mean_path = _require_stage_file(config, "estimate", "model_mean.json")
    status_path = _require_stage_file(config, "calibrate", "status.csv")
    prev_path = _require_stage_file(config, "calibrate", "prevalence.csv")
    dist_path = _require_stage_file(config, "dynamics", "spell_distribution.csv")
    trans_path = _require_stage_file(config, "dynamics", "transitions.csv")
    ns_path = _require_stage_file(config, "dynamics", "newly_still.csv")

    stage_dir = config.stage_dir("report")
    stage_dir.mkdir(parents=True, exist_ok=True)
    fmt = config.report_format

    study = _read_table(study_path)
    pfs = _read_table(pfs_path)
    status = _read_table(status_path)
    prevalence = pd.read_csv(prev_path)
    spell_dist = pd.read_csv(dist_path)
    transitions = pd.read_csv(trans_path)
    newly = pd.read_csv(ns_path)
    rep = pd.read_csv(rep_path)
    model_mean = json.loads(mean_path.read_text())
    var_path = config.stage_dir("estimate") / "model_variance.json"
    model_var = json.loads(var_path.read_text()) if var_path.exists() else None

    inputs = {
        "study_panel": study_path,
        "pfs": pfs_path,
        "status": status_path,
        "prevalence": prev_path,
        "spell_distribution": dist_path,
        "transitions": trans_path,
        "newly_still": ns_path,
        "representativeness": rep_path,
        "model_mean": mean_path,
    }

    # tables
    summary = reports.sample_summary(study, pfs)
    _emit_table(summary, stage_dir, "sample_summary", fmt)

    coef = reports.model_coefficient_table(model_mean, model_var)
    _emit_table(coef, stage_dir, "model_coefficients", fmt)

    assoc_input = study.merge(
        pfs[["person_id", "year", "pfs"]], on=["person_id", "year"], how="inner"
    )
    association, assoc_dropped = reports.emit_association_report(assoc_input)
    _emit_table(association, stage_dir, "association_pfs", fmt)

    grouped = status.merge(
        study[["person_id", "year", "region", "rp_race_binary",
               "rp_education_cat"]],
        on=["person_id", "year"],
        how="left",
    )
    group_frames = []
    for col in ("region", "rp_race_binary", "rp_education_cat"):
        g = dynamics.group_summary(grouped.dropna(subset=[col]), (col,))
        group_frames.append(g)
    group_sum = pd.concat(group_frames, ignore_index=True)
    _emit_table(group_sum, stage_dir, "group_summary", fmt)

    _emit_table(transitions, stage_dir, "transitions", fmt)
    _emit_table(spell_dist, stage_dir, "spell_distribution", fmt)

    fsss_path = config.stage_dir("dynamics") / "fsss_crosstab.csv"
    if fsss_path.exists():
        _emit_table(pd.read_csv(fsss_path), stage_dir, "fsss_agreement", fmt)
        inputs["fsss_crosstab"] = fsss_path

    # figures: anchored targets drawn when available
    targets = None
    try:
        targets_path = _resolve_input(config, "targets", SYNTH_FILES["targets"])
        targets = pd.read_csv(targets_path)
        inputs["targets"] = targets_path
    except (DependencyError, DataError):
        pass

    emit_figures(
        stage_dir,
        pfs=pfs,
        prevalence=prevalence,
        group_summary=group_sum,
        spell_distribution=spell_dist,
        newly_still=newly,
        representativeness=rep,
        targets=targets,
    )

    notes = {
        "format": fmt,
        "association_dropped": {k: sorted(v) for k, v in assoc_dropped.items()},
        "n_tables": 6 + int(fsss_path.exists()),
        "n_figures": 6,
    }
    return _finish_stage("report", config, stage_dir, inputs, notes)


# ---------------------------------------------------------------- validate


def _check(checks: list, name: str, passed: bool, detail: str = "") -> None:
    checks.append({"check": name, "passed": bool(passed), "detail": detail})


def stage_validate(config: PipelineConfig) -> ReportBundle:
    """Cross-stage consistency checks; fails the run if any check fails."""
    stage_dir = config.stage_dir("validate")
    stage_dir.mkdir(parents=True, exist_ok=True)
    checks: list[dict] = []

    ran = [
        s for s in ("synth", "ingest", "estimate", "calibrate", "dynamics", "report")
        if (config.stage_dir(s) / "manifest.json").exists()
    ]
    if not ran:
        raise DependencyError("nothing to validate: no stage manifests found")

    for stage in ran:
        manifest = json.loads(
            (config.stage_dir(stage) / "manifest.json").read_text()
        )
        stale = []
        for name, digest in manifest["outputs"].items():
            p = config.stage_dir(stage) / name
            if not p.exists() or _sha256(p) != digest:
                stale.append(name)
        _check(
            checks,
            f"{stage}: manifest digests match files",
            not stale,
            f"stale or missing: {stale}" if stale else f"{len(manifest['outputs'])} files",
        )

    if "ingest" in ran:
        manifest = json.loads(
            (config.stage_dir("ingest") / "manifest.json").read_text()
        )
        n = manifest["notes"]
        _check(
            checks,
            "ingest: row accounting",
            n["rows_parsed"] == n["rows_harmonized"] + n["rows_excluded"],
            f"{n['rows_parsed']} parsed = {n['rows_harmonized']} kept + "
            f"{n['rows_excluded']} excluded",
        )

    if "estimate" in ran:
        pfs = _read_table(config.stage_dir("estimate") / "pfs.csv")
        ok = bool(
            pfs["pfs"].between(0.0, 1.0).all() and pfs["pfs"].notna().all()
        )
        _check(checks, "estimate: probabilities in [0, 1]", ok, f"{len(pfs)} rows")

    if "calibrate" in ran:
        status = _read_table(config.stage_dir("calibrate") / "status.csv")
        cutoffs = pd.read_csv(config.stage_dir("calibrate") / "cutoffs.csv")
        prev = pd.read_csv(config.stage_dir("calibrate") / "prevalence.csv")
        recls = status["pfs"] < status["cutoff"]
        _check(
            checks,
            "calibrate: classification is strict pfs < cutoff",
            bool((recls == status["insecure"]).all()),
            f"{len(status)} rows",
        )
        worst = 0.0
        for row in prev.itertuples():
            sub = status[status["year"] == row.year]
            w = sub["adjusted_weight"].to_numpy(dtype=float)
            share = float(
                np.sum(w * sub["insecure"].to_numpy(dtype=float)) / np.sum(w)
            )
            worst = max(worst, abs(share - float(row.prevalence)))
        _check(
            checks,
            "calibrate: prevalence file matches status table",
            worst <= 1e-9,
            f"max discrepancy {worst:.2e}",
        )
        anch = cutoffs[cutoffs["provenance"] == "anchored"]
        slack_ok = True
        detail = []
        for row in anch.itertuples():
            sub = status[status["year"] == row.year]
            w = sub["adjusted_weight"].to_numpy(dtype=float)
            bound = float(w.max() / w.sum()) if len(w) else 0.0
            gap = abs(float(row.achieved_prevalence) - float(row.target))
            if gap > bound + 1e-12:
                slack_ok = False
                detail.append(f"{row.year}: gap {gap:.4g} > bound {bound:.4g}")
        _check(
            checks,
            "calibrate: anchored years hit targets within one person's weight",
            slack_ok,
            "; ".join(detail) if detail else f"{len(anch)} anchored years",
        )

    if "dynamics" in ran:
        ns = pd.read_csv(config.stage_dir("dynamics") / "newly_still.csv")
        resid = (
            ns["insecure_weight"]
            - ns["newly"] - ns["still"] - ns["prior_unknown"]
        ).abs()
        _check(
            checks,
            "dynamics: newly/still/unknown decomposition conserves mass",
            bool((resid <= 1e-9).all()),
            f"max residual {float(resid.max()) if len(resid) else 0.0:.2e}",
        )

    if "report" in ran:
        from xml.etree import ElementTree

        bad = []
        for svg in sorted(config.stage_dir("report").glob("*.svg")):
            data_csv = svg.with_name(svg.stem + "_data.csv")
            try:
                tree = ElementTree.parse(svg)
                node = tree.getroot().find(
                    ".//{http://purl.org/dc/elements/1.1/}description"
                )
                embedded = node.text if node is not None else None
            except ElementTree.ParseError:
                embedded = None
            if (
                embedded is None
                or not data_csv.exists()
                or embedded != data_csv.read_text()
            ):
                bad.append(svg.name)
        _check(
            checks,
            "report: figures embed exactly their sibling data tables",
            not bad,
            f"mismatched: {bad}" if bad else "all figures verified",
        )

    passed = all(c["passed"] for c in checks)
    _write_json(
        stage_dir / "validation_report.json",
        {"passed": passed, "stages_checked": ran, "checks": checks},
    )
    bundle = _finish_stage(
        "validate", config, stage_dir, {},
        {"n_checks": len(checks), "passed": passed},
    )
    if not passed:
        failed = [c["check"] for c in checks if not c["passed"]]
        raise ValidationFailure(f"validation failed: {failed}")
    return bundle


_STAGES = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "estimate": stage_estimate,
    "calibrate": stage_calibrate,
    "dynamics": stage_dynamics,
    "report": stage_report,
    "validate": stage_validate,
}


def run(subcommand: str, config: PipelineConfig) -> ReportBundle:
    """Run one pipeline stage under the given configuration."""
    if subcommand not in _STAGES:
        raise UsageError(
            f"unknown subcommand {subcommand!r}; choose from {SUBCOMMANDS}"
        )
    log.info("stage %s -> %s", subcommand, config.stage_dir(subcommand))
    return _STAGES[subcommand](config)
