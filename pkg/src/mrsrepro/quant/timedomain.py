"""Stochastic multi-start time-domain quantification (optional HLSVD baseline)."""

from __future__ import annotations

import numpy as np

from ..hlsvd import (
    DegenerateDecompositionError,
    hlsvd_decompose,
    select_baseline_components,
    subtract_components,
)
from ..signals import FidSignal, MacromoleculeModel, MetaboliteBasis
from .config import TIME_DOMAIN, FitResult, MethodConfig, data_scale
from .crb import crb_from_jacobian, estimate_noise, fisher_keep_mask
from .model import FidModel, stack_complex
from .optimize import LsqOutcome, bounded_levenberg_marquardt


class _Objective:
    def __init__(self, model: FidModel, samples: np.ndarray):
        self.model = model
        self.data = samples

    def residual(self, x):
        return stack_complex(self.data - self.model.evaluate(x))

    def jacobian(self, x):
        _, jac = self.model.evaluate_with_jacobian(x)
        return -stack_complex(jac)


def _draw_start(rng: np.random.Generator, lo, hi, model: FidModel, frac: float) -> np.ndarray:
    lay = model.layout
    x = rng.uniform(lo, hi)
    nonlinear = np.r_[np.arange(lay.damp.start, lay.freq.stop), lay.phase]
    centre = np.clip(0.0, lo[nonlinear], hi[nonlinear])
    box_lo = centre + frac * (lo[nonlinear] - centre)
    box_hi = centre + frac * (hi[nonlinear] - centre)
    x[nonlinear] = rng.uniform(box_lo, box_hi)
    return x


def _multistart(objective: _Objective, lo, hi, cfg: MethodConfig, rng: np.random.Generator):
    outcomes: list[LsqOutcome] = []
    for _ in range(cfg.n_starts):
        x0 = _draw_start(rng, lo, hi, objective.model, cfg.start_fraction)
        outcomes.append(
            bounded_levenberg_marquardt(
                objective.residual,
                objective.jacobian,
                x0,
                lo,
                hi,
                max_iterations=cfg.max_iterations,
                gradient_tolerance=cfg.gradient_tolerance,
                cost_tolerance=cfg.cost_tolerance,
            )
        )
    converged = [o for o in outcomes if o.converged]
    pool = converged or outcomes
    best = min(pool, key=lambda o: o.cost)
    return best, outcomes


def _baseline_from_residual(residual: FidSignal, cfg: MethodConfig):
    seg = residual
    if cfg.hlsvd_points is not None and cfg.hlsvd_points < residual.n_points:
        seg = residual.with_samples(residual.samples[: cfg.hlsvd_points])
    try:
        comps = hlsvd_decompose(seg, cfg.hlsvd)
    except DegenerateDecompositionError:
        return []
    return select_baseline_components(comps, cfg.hlsvd)


def fit_time_domain(
    observed: FidSignal,
    basis: MetaboliteBasis,
    mm: MacromoleculeModel,
    cfg: MethodConfig,
    seed: int,
    execution_index: int = 0,
) -> FitResult:
    """Quantify ``observed`` by bounded least squares from ``cfg.n_starts`` random starts.

    Starting amplitudes are uniform over the amplitude bounds; shifts and
    phase are uniform over ``cfg.start_fraction`` of their bound intervals
    around zero. All draws come from ``np.random.default_rng(seed)``, so the
    result is a pure function of the inputs and ``seed``.

    With ``baseline_mode == "hlsvd"`` the residual of a first fit is
    decomposed by HLSVD, its fast-decaying components are subtracted from
    the data, and the fit is repeated once on the corrected signal.
    """
    if cfg.engine != TIME_DOMAIN:
        raise ValueError(f"{cfg.method_id} is not a time-domain method")
    if observed.n_points != basis.n_points or observed.dwell_time != basis.dwell_time:
        raise ValueError("observed signal does not match the basis grid")
    rng = np.random.default_rng(seed)
    model = FidModel(basis, mm)
    lay = model.layout
    lo, hi = cfg.bounds.arrays(
        lay, mm, cfg.bounds.amplitude_scale_factor * max(data_scale(observed.samples, basis), 1e-12)
    )

    target = observed
    best, outcomes = _multistart(_Objective(model, target.samples), lo, hi, cfg, rng)
    n_tried = len(outcomes)
    n_baseline = 0
    if cfg.baseline_mode == "hlsvd":
        resid = observed.with_samples(observed.samples - model.evaluate(best.x))
        baseline = _baseline_from_residual(resid, cfg)
        n_baseline = len(baseline)
        if baseline:
            target = subtract_components(observed, baseline)
        best, outcomes = _multistart(_Objective(model, target.samples), lo, hi, cfg, rng)
        n_tried += len(outcomes)

    params = lay.unpack(best.x)
    noise_var = estimate_noise(target)
    if noise_var > 0:
        _, jac = model.evaluate_with_jacobian(best.x)
        keep = fisher_keep_mask(best.x, jac, model, lo, hi)
        sd = crb_from_jacobian(stack_complex(jac), noise_var, keep, np.arange(lay.n_metabolites))
    else:
        sd = np.zeros(lay.n_metabolites)
    return FitResult(
        method_id=cfg.method_id,
        signal_id=observed.signal_id,
        execution_index=execution_index,
        seed=int(seed),
        concentrations=dict(params.amplitudes),
        crb_sd=dict(zip(lay.names, sd.tolist())),
        converged=best.converged,
        final_cost=best.cost,
        n_iterations=best.n_iterations,
        n_starts_tried=n_tried,
        params=params,
        start_costs=tuple(o.cost for o in outcomes),
        start_converged=tuple(o.converged for o in outcomes),
        noise_var=noise_var,
        n_baseline_components=n_baseline,
    )
