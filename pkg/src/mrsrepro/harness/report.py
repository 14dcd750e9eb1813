"""Report bundle computed from a persisted results table."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..metrics import (
    bootstrap_rmse,
    finding_preservation,
    group_by,
    mean_over_executions,
    z95_matrix,
)
from ..seeding import derive_seed
from .experiment import ExperimentConfig, FilterReport, ResultsTable, filter_converged, fmt

VOXEL_SCOPES = ("Vox1", "Vox2", None)


class AnalysisError(RuntimeError):
    pass


def scope_name(voxel: str | None) -> str:
    return voxel or "all"


@dataclass
class ReportBundle:
    filter_report: FilterReport
    agreement: dict = field(default_factory=dict)  # (scope, m, q, q') -> AgreementStats
    variability: dict = field(default_factory=dict)  # (m, q, voxel) -> VariabilityStats
    crb_mean: dict = field(default_factory=dict)  # (m, q, voxel) -> float
    findings: dict = field(default_factory=dict)  # (m, q) -> FindingPreservation
    omitted_means: list = field(default_factory=list)
    files: dict = field(default_factory=dict)


def _csv(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


def _json_num(x: float):
    if isinstance(x, float) and not math.isfinite(x):
        return fmt(x) if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def compute_reports(table: ResultsTable, config: ExperimentConfig) -> ReportBundle:
    """Filter the table, then run every agreement and variability analysis."""
    if len(table) == 0:
        raise AnalysisError("no records in results table")
    kept, freport = filter_converged(table)
    if len(kept) == 0:
        raise AnalysisError("no records left after discarding non-converged executions")
    records = kept.records()
    methods = [m for m in dict.fromkeys(r.method for r in table.rows)]
    methods.sort(key=lambda q: (config.methods.index(q) if q in config.methods else 99, q))
    voxel_of = {r.signal_id: r.voxel for r in records}
    bundle = ReportBundle(freport)

    means, omitted = mean_over_executions(records)
    bundle.omitted_means = omitted
    if len(methods) >= 2:
        for voxel in VOXEL_SCOPES:
            try:
                matrix = z95_matrix(means, methods, voxel_of, voxel)
            except ValueError as exc:
                raise AnalysisError(f"agreement ({scope_name(voxel)}): {exc}") from exc
            for (m, q, r), stats in matrix.items():
                bundle.agreement[(scope_name(voxel), m, q, r)] = stats

    for (m, q), rows in sorted(group_by(records, "metabolite", "method").items()):
        for voxel in ("Vox1", "Vox2"):
            sub = [r for r in rows if r.voxel == voxel]
            if len({r.signal_id for r in sub}) < 2:
                continue
            seed = derive_seed(config.master_seed, "bootstrap", m, q, voxel)
            try:
                bundle.variability[(m, q, voxel)] = bootstrap_rmse(sub, config.n_boot, seed)
            except ValueError as exc:
                raise AnalysisError(f"variability ({m}, {q}, {voxel}): {exc}") from exc
            crb = np.array([r.crb_sd for r in sub], dtype=float)
            bundle.crb_mean[(m, q, voxel)] = (
                float(np.nanmean(crb)) if np.any(np.isfinite(crb)) else math.nan
            )

    # finding preservation sees non-converged rows so it can report dropped pairs
    for (m, q), rows in sorted(group_by(table.records(), "metabolite", "method").items()):
        try:
            bundle.findings[(m, q)] = finding_preservation(rows, config.alpha)
        except ValueError as exc:
            raise AnalysisError(f"finding preservation ({m}, {q}): {exc}") from exc
    return bundle


def write_reports(bundle: ReportBundle, config: ExperimentConfig, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}

    files["filter_report.csv"] = bundle.filter_report.to_csv()

    agree = ["metabolite,method_a,method_b,voxel,n,bias,sd_diff,ci95,z95"]
    points = ["metabolite,method_a,method_b,voxel,signal_id,mean,difference"]
    z95 = {scope_name(v): {} for v in VOXEL_SCOPES}
    for (scope, m, q, r), st in bundle.agreement.items():
        agree.append(
            f"{m},{q},{r},{scope},{st.n},{fmt(st.bias)},{fmt(st.sd_diff)},{fmt(st.ci95)},{fmt(st.z95)}"
        )
        for s, mean, diff in st.points:
            points.append(f"{m},{q},{r},{scope},{s},{fmt(mean)},{fmt(diff)}")
        z95[scope].setdefault(m, {})[f"{q}|{r}"] = st.z95
    if bundle.agreement:
        files["agreement.csv"] = _csv(agree)
        files["bland_altman_points.csv"] = _csv(points)
        for scope, rows in z95.items():
            pairs = list(dict.fromkeys(p for row in rows.values() for p in row))
            lines = [",".join(["metabolite", *pairs])]
            for m, row in rows.items():
                lines.append(",".join([m, *(fmt(row[p]) for p in pairs)]))
            files[f"z95_{scope}.csv"] = _csv(lines)

    var = ["metabolite,method,voxel,n_signals,n_records,rmse,boot_ci_lo,boot_ci_hi,boot_mean,crb_mean"]
    boot = ["metabolite,method,voxel,replicate,rmse"]
    for key, st in bundle.variability.items():
        m, q, v = key
        var.append(",".join([
            m, q, v, str(st.n_signals), str(st.n_records), fmt(st.rmse),
            fmt(st.bootstrap_ci[0]), fmt(st.bootstrap_ci[1]),
            fmt(float(np.mean(st.bootstrap_rmse))), fmt(bundle.crb_mean[key]),
        ]))
        boot.extend(f"{m},{q},{v},{i},{fmt(x)}" for i, x in enumerate(st.bootstrap_rmse))
    files["variability.csv"] = _csv(var)
    files["bootstrap_rmse.csv"] = _csv(boot)

    fp = ["metabolite,method,n_significant,n_executions,mean_z,skipped_executions,dropped_pairs"]
    for (m, q), f in bundle.findings.items():
        skipped = " ".join(str(e) for e in f.skipped_executions)
        fp.append(
            f"{m},{q},{f.n_significant},{f.n_executions},{fmt(f.mean_z_statistic)},{skipped},{f.dropped_pairs}"
        )
    files["finding_preservation.csv"] = _csv(fp)

    retained = bundle.filter_report.retained_counts()
    summary = {
        "alpha": config.alpha,
        "n_boot": config.n_boot,
        "master_seed": config.master_seed,
        "methods": sorted({k[1] for k in bundle.findings}),
        "n_signal_method_cells": len(retained),
        "retained_executions": {"min": min(retained), "max": max(retained),
                                "mean": float(np.mean(retained))},
        "cells_without_retained_executions": [list(k) for k in bundle.filter_report.empty_cells],
        "omitted_means": [list(k) for k in bundle.omitted_means],
        "variability": {
            f"{m}|{q}|{v}": {"rmse": st.rmse, "crb_mean": _json_num(bundle.crb_mean[(m, q, v)]),
                             "boot_ci": list(st.bootstrap_ci)}
            for (m, q, v), st in bundle.variability.items()
        },
        "finding_preservation": {
            f"{m}|{q}": {"n_significant": f.n_significant, "n_executions": f.n_executions}
            for (m, q), f in bundle.findings.items()
        },
    }
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"

    paths = {}
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8", newline="\n")
        paths[name] = path
    bundle.files = paths
    return paths


def analyze(table: ResultsTable, config: ExperimentConfig, out_dir=None) -> ReportBundle:
    """Compute and persist the full report bundle (default ``<output_dir>/reports``)."""
    bundle = compute_reports(table, config)
    write_reports(bundle, config, out_dir or Path(config.output_dir) / "reports")
    return bundle
