"""Inter-execution variability: residuals around per-signal fixed effects, RMSE, bootstrap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .records import QuantRecord


@dataclass(frozen=True)
class VariabilityStats:
    metabolite: str
    method: str
    voxel: str | None
    rmse: float
    bootstrap_rmse: tuple[float, ...]
    bootstrap_ci: tuple[float, float]
    n_signals: int
    n_records: int


def _select(records: Iterable[QuantRecord], voxel: str | None) -> list[QuantRecord]:
    out = [r for r in records if r.converged and (voxel is None or r.voxel == voxel)]
    if len({(r.metabolite, r.method) for r in out}) > 1:
        raise ValueError("records must share one (metabolite, method)")
    return out


def execution_residuals(
    records: Iterable[QuantRecord], voxel: str | None = None
) -> dict[tuple[str, int], float]:
    """Residuals of the model ``x ~ signal`` for one (metabolite, method).

    Ordinary least squares on signal indicators reduces to per-signal
    means, so ``r(s, e) = x(s, e) - mean_e x(s, e)``.
    """
    by_signal: dict[str, list[QuantRecord]] = {}
    for r in _select(records, voxel):
        by_signal.setdefault(r.signal_id, []).append(r)
    out = {}
    for s in sorted(by_signal):
        rows = by_signal[s]
        x = np.array([r.concentration for r in rows])
        # offset from the first value: identical executions give exactly zero
        centre = x[0] + np.mean(x - x[0])
        for r in rows:
            out[(s, r.execution)] = float(r.concentration - centre)
    return out


def rmse(residuals: Mapping | Iterable[float]) -> float:
    values = residuals.values() if isinstance(residuals, Mapping) else residuals
    arr = np.fromiter(values, dtype=float)
    if arr.size == 0:
        raise ValueError("rmse of an empty residual set")
    return float(np.sqrt(np.mean(arr**2)))


def bootstrap_rmse(
    records: Iterable[QuantRecord],
    n_boot: int = 1000,
    seed: int = 0,
    voxel: str | None = None,
) -> VariabilityStats:
    """RMSE with a signal-level bootstrap.

    Each replicate draws as many signals as the voxel holds, with
    replacement, keeping every signal's executions together, and refits the
    per-signal model. Since the fit is separable by signal, a resampled
    signal contributes exactly its own residuals, so each replicate is
    computed from per-signal sums of squares.
    """
    rows = _select(records, voxel)
    resid = execution_residuals(rows)
    signals = sorted({s for s, _ in resid})
    if len(signals) < 2:
        raise ValueError("bootstrap needs at least 2 signals")
    index = {s: i for i, s in enumerate(signals)}
    sumsq = np.zeros(len(signals))
    counts = np.zeros(len(signals))
    for (s, _), r in resid.items():
        sumsq[index[s]] += r * r
        counts[index[s]] += 1
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(signals), size=(n_boot, len(signals)))
    boot = np.sqrt(sumsq[draws].sum(axis=1) / counts[draws].sum(axis=1))
    lo, hi = np.percentile(boot, [2.5, 97.5]) if n_boot else (np.nan, np.nan)
    first = rows[0]
    return VariabilityStats(
        metabolite=first.metabolite,
        method=first.method,
        voxel=voxel,
        rmse=rmse(resid),
        bootstrap_rmse=tuple(boot.tolist()),
        bootstrap_ci=(float(lo), float(hi)),
        n_signals=len(signals),
        n_records=len(resid),
    )
