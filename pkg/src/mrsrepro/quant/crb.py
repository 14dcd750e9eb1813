"""Cramer-Rao bounds on fitted amplitudes and the noise estimate that feeds them."""

from __future__ import annotations

import numpy as np

from ..signals import FidSignal, MacromoleculeModel, MetaboliteBasis
from .model import FidModel, ModelParameters, stack_complex

FISHER_CONDITION_LIMIT = 1e12


def estimate_noise(fid: FidSignal) -> float:
    """Per-channel noise variance from the last quarter of the FID.

    Sample variances (n - 1 denominator) of the real and imaginary tails,
    averaged.
    """
    n = fid.n_points
    if n < 64:
        raise ValueError("estimate_noise needs at least 64 samples")
    tail = fid.samples[n - n // 4:]
    return float(0.5 * (np.var(tail.real, ddof=1) + np.var(tail.imag, ddof=1)))


def fisher_keep_mask(x: np.ndarray, jac: np.ndarray, model: FidModel,
                     lower=None, upper=None) -> np.ndarray:
    """Columns entering the Fisher matrix.

    Amplitude columns always stay (they are what is being bounded). Other
    parameters are dropped when they sit on an active bound or carry no
    information (shift parameters of a zero-amplitude metabolite).
    """
    lay = model.layout
    keep = np.any(jac != 0, axis=0)
    if lower is not None and upper is not None:
        keep &= ~((x <= lower) | (x >= upper))
    keep[lay.amp] = True
    return keep


def crb_from_jacobian(jac_real: np.ndarray, noise_var: float, keep: np.ndarray,
                      targets: np.ndarray) -> np.ndarray:
    """Standard deviations for ``targets`` (indices into the full parameter
    vector) from a real stacked Jacobian; NaN when the Fisher matrix is
    numerically singular."""
    if not noise_var > 0:
        raise ValueError("noise_var must be > 0")
    idx = np.flatnonzero(keep)
    j = jac_real[:, idx]
    fisher = (j.T @ j) / noise_var
    scale = np.sqrt(np.diag(fisher))
    if np.any(scale == 0) or not np.all(np.isfinite(scale)):
        return np.full(len(targets), np.nan)
    scaled = fisher / np.outer(scale, scale)
    if np.linalg.cond(scaled) > FISHER_CONDITION_LIMIT:
        return np.full(len(targets), np.nan)
    cov = np.linalg.inv(scaled) / np.outer(scale, scale)
    pos = {p: i for i, p in enumerate(idx)}
    var = np.array([cov[pos[t], pos[t]] for t in targets])
    return np.sqrt(np.maximum(var, 0.0))


def compute_crb(
    params: ModelParameters,
    observed: FidSignal,
    basis: MetaboliteBasis,
    mm: MacromoleculeModel,
    noise_var: float,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> dict[str, float]:
    """Cramer-Rao standard deviation of each metabolite amplitude at ``params``.

    Fisher information is ``J^T J / noise_var`` for the stacked real and
    imaginary model Jacobian. ``lower``/``upper`` (packed vectors) mark
    which nuisance parameters sit on a bound and are held fixed.
    Unavailable bounds are reported as NaN.
    """
    if observed.n_points != basis.n_points or observed.dwell_time != basis.dwell_time:
        raise ValueError("observed signal does not match the basis grid")
    model = FidModel(basis, mm)
    lay = model.layout
    x = lay.pack(params)
    _, jac = model.evaluate_with_jacobian(x)
    keep = fisher_keep_mask(x, jac, model, lower, upper)
    targets = np.arange(lay.n_metabolites)
    sd = crb_from_jacobian(stack_complex(jac), noise_var, keep, targets)
    return dict(zip(lay.names, sd.tolist()))
