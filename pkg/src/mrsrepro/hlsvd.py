"""Hankel-SVD decomposition of FIDs into damped sinusoids and baseline removal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .signals import FidSignal


class DegenerateDecompositionError(ValueError):
    """The Hankel matrix has fewer than ``model_order`` significant singular values."""


@dataclass(frozen=True)
class DampedSinusoid:
    frequency: float
    damping: float
    amplitude: float
    phase: float

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        c = self.amplitude * np.exp(1j * self.phase)
        return c * np.exp((-self.damping + 2j * np.pi * self.frequency) * t)


@dataclass(frozen=True)
class HlsvdConfig:
    model_order: int = 12
    hankel_rows: int | None = None
    baseline_damping_threshold: float = 50.0
    baseline_freq_band: tuple[float, float] | None = None

    def __post_init__(self):
        if self.model_order < 1:
            raise ValueError("model_order must be >= 1")
        if not self.baseline_damping_threshold > 0:
            raise ValueError("baseline_damping_threshold must be > 0")
        if self.baseline_freq_band is not None:
            lo, hi = self.baseline_freq_band
            if lo > hi:
                raise ValueError("baseline_freq_band must be (low, high)")

    def rows_for(self, n_points: int) -> int:
        rows = n_points // 2 if self.hankel_rows is None else self.hankel_rows
        cols = n_points - rows + 1
        if rows < 1 or cols < 1 or not (1 <= self.model_order <= min(rows, cols)):
            raise ValueError(
                f"model_order={self.model_order}, hankel_rows={rows} invalid for "
                f"{n_points} samples (need 1 <= K <= min(L, N-L+1))"
            )
        return rows


def _wrap_phase(phi: np.ndarray) -> np.ndarray:
    # np.angle returns [-pi, pi]; fold -pi onto pi
    return np.where(phi <= -np.pi, phi + 2 * np.pi, phi)


def hlsvd_decompose(fid: FidSignal, cfg: HlsvdConfig = HlsvdConfig()) -> list[DampedSinusoid]:
    """Decompose ``fid`` into ``cfg.model_order`` exponentially damped sinusoids.

    The signal poles come from the shift invariance of the truncated left
    singular subspace of the L x (N-L+1) Hankel matrix; amplitudes and
    phases from a linear least-squares fit of the FID on those poles.
    Components are returned by descending amplitude.
    """
    x = fid.samples
    n = x.size
    rows = cfg.rows_for(n)
    k = cfg.model_order
    hankel = scipy.linalg.hankel(x[:rows], x[rows - 1:])
    u, s, _ = scipy.linalg.svd(hankel, full_matrices=False, check_finite=False)
    if s[0] == 0 or s[k - 1] < 1e-12 * s[0]:
        raise DegenerateDecompositionError(
            f"Hankel matrix rank below model order {k} "
            f"(s[0]={s[0]:.3g}, s[{k - 1}]={s[k - 1]:.3g})"
        )
    uk = u[:, :k]
    shift, *_ = np.linalg.lstsq(uk[:-1], uk[1:], rcond=None)
    poles = np.linalg.eigvals(shift)
    log_z = np.log(poles)
    dt = fid.dwell_time
    damping = -log_z.real / dt
    frequency = log_z.imag / (2 * np.pi * dt)

    vander = np.exp(np.outer(np.arange(n), log_z))
    coef, *_ = np.linalg.lstsq(vander, x, rcond=None)
    amplitude = np.abs(coef)
    phase = _wrap_phase(np.angle(coef))

    order = np.lexsort((frequency, -amplitude))
    return [
        DampedSinusoid(float(frequency[i]), float(damping[i]), float(amplitude[i]), float(phase[i]))
        for i in order
    ]


def select_baseline_components(
    components: list[DampedSinusoid], cfg: HlsvdConfig = HlsvdConfig()
) -> list[DampedSinusoid]:
    """Keep fast-decaying components, or those inside the configured band.

    Growing components (negative damping) are never selected.
    """
    out = []
    for comp in components:
        if comp.damping < 0:
            continue
        fast = comp.damping > cfg.baseline_damping_threshold
        in_band = (
            cfg.baseline_freq_band is not None
            and cfg.baseline_freq_band[0] <= comp.frequency <= cfg.baseline_freq_band[1]
        )
        if fast or in_band:
            out.append(comp)
    return out


def reconstruct(components: list[DampedSinusoid], t: np.ndarray) -> np.ndarray:
    out = np.zeros(np.shape(t), dtype=np.complex128)
    for comp in components:
        out += comp.evaluate(t)
    return out


def subtract_components(fid: FidSignal, components: list[DampedSinusoid]) -> FidSignal:
    if not components:
        return fid
    return fid.with_samples(fid.samples - reconstruct(components, fid.time_axis))
