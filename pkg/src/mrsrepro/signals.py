"""Signal and basis types, chemical-shift conversion and synthetic cohorts.

Everything here is immutable once built. Sample arrays are stored as
read-only ``complex128`` numpy arrays so a basis can be shared between
fits (and worker processes) without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .seeding import rng_for

GYROMAGNETIC_MHZ_PER_T = 42.577
WATER_PPM = 4.7
DEFAULT_N_POINTS = 2048
DEFAULT_SPECTRAL_WIDTH = 5464.0
DEFAULT_DWELL = 1.0 / DEFAULT_SPECTRAL_WIDTH
VOXELS = ("Vox1", "Vox2")

# name -> [(ppm, protons), ...]; Lorentzian decay shared by every line.
METABOLITE_LINES: dict[str, list[tuple[float, float]]] = {
    "NAA": [(2.01, 3.0)],
    "Cr+PCr": [(3.03, 3.0), (3.93, 2.0)],
    "PCho+GPC": [(3.19, 9.0)],
    "Glu": [(2.35, 2.0)],
    "Gln": [(2.45, 2.0)],
    "GABA": [(1.89, 2.0), (2.28, 2.0), (3.01, 2.0)],
    "Tau": [(3.25, 2.0), (3.42, 2.0)],
}
METABOLITES = tuple(METABOLITE_LINES)
METABOLITE_DAMPING = 5.0

# ppm -> nominal amplitude; Gaussian decay exp(-beta t^2) with beta in s^-2.
MM_LINES: dict[float, float] = {
    0.9: 6.0,
    1.2: 5.0,
    1.7: 3.0,
    2.05: 6.0,
    3.0: 3.0,
    3.2: 2.0,
}
MM_GAUSSIAN_DAMPING = 1000.0
MM_BOUND_FACTORS = (0.5, 1.5)


@dataclass(frozen=True)
class SpectrometerContext:
    field_strength: float = 11.7
    proton_frequency: float | None = None
    reference_ppm: float = WATER_PPM

    def __post_init__(self):
        if self.proton_frequency is None:
            object.__setattr__(
                self, "proton_frequency", self.field_strength * GYROMAGNETIC_MHZ_PER_T
            )
        expected = self.field_strength * GYROMAGNETIC_MHZ_PER_T
        if not np.isclose(self.proton_frequency, expected, rtol=1e-3):
            raise ValueError(
                f"proton_frequency {self.proton_frequency} MHz inconsistent with "
                f"{self.field_strength} T (expected {expected:.3f} MHz)"
            )


def ppm_to_hz(ppm, ctx: SpectrometerContext):
    """Offset from the reference frequency, in Hz (Hz per ppm equals the MHz value).

    Intermediates use extended precision so that ``hz_to_ppm`` undoes this
    to within one ulp of ``max(|ppm|, |ppm - reference_ppm|)``.
    """
    x = np.asarray(ppm, dtype=np.longdouble)
    return ((x - np.longdouble(ctx.reference_ppm)) * np.longdouble(ctx.proton_frequency)).astype(float)


def hz_to_ppm(hz, ctx: SpectrometerContext):
    x = np.asarray(hz, dtype=np.longdouble)
    return (x / np.longdouble(ctx.proton_frequency) + np.longdouble(ctx.reference_ppm)).astype(float)


@dataclass(frozen=True, eq=False)
class FidSignal:
    """Complex free-induction decay with sampling metadata.

    ``truth`` holds generator concentrations for synthetic signals and is
    ``None`` for anything read from an external source.
    """

    samples: np.ndarray
    dwell_time: float = DEFAULT_DWELL
    signal_id: str = ""
    voxel: str | None = None
    animal_id: str = ""
    truth: Mapping[str, float] | None = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not (np.isfinite(self.dwell_time) and self.dwell_time > 0):
            raise ValueError(f"dwell_time must be finite and positive, got {self.dwell_time}")
        if self.voxel not in (None, *VOXELS):
            raise ValueError(f"voxel must be one of {VOXELS} or None, got {self.voxel!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dwell_time", float(self.dwell_time))
        if self.truth is not None:
            object.__setattr__(self, "truth", {k: float(v) for k, v in self.truth.items()})

    @property
    def n_points(self) -> int:
        return self.samples.size

    @property
    def spectral_width(self) -> float:
        return 1.0 / self.dwell_time

    @property
    def time_axis(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dwell_time

    def with_samples(self, samples) -> "FidSignal":
        return replace(self, samples=samples)


def time_grid(n_points: int, dwell_time: float) -> np.ndarray:
    return np.arange(n_points) * dwell_time


@dataclass(frozen=True, eq=False)
class MetaboliteBasis:
    """Unit-concentration reference FIDs keyed by metabolite name."""

    entries: Mapping[str, FidSignal]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("basis must contain at least one metabolite")
        first = next(iter(self.entries.values()))
        for name, fid in self.entries.items():
            if fid.n_points != first.n_points or fid.dwell_time != first.dwell_time:
                raise ValueError(f"basis entry {name!r} has a different sampling grid")
            energy = float(np.sum(np.abs(fid.samples) ** 2))
            if not (np.isfinite(energy) and energy > 0):
                raise ValueError(f"basis entry {name!r} has zero or non-finite energy")
        object.__setattr__(self, "entries", dict(self.entries))
        stacked = np.array([fid.samples for fid in self.entries.values()])
        stacked.setflags(write=False)
        object.__setattr__(self, "_matrix", stacked)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.entries)

    @property
    def matrix(self) -> np.ndarray:
        """Entries stacked as a (n_metabolites, n_points) array, in ``names`` order."""
        return self._matrix

    @property
    def n_points(self) -> int:
        return self._matrix.shape[1]

    @property
    def dwell_time(self) -> float:
        return next(iter(self.entries.values())).dwell_time

    @property
    def time_axis(self) -> np.ndarray:
        return time_grid(self.n_points, self.dwell_time)


@dataclass(frozen=True)
class MacromoleculeComponent:
    center_frequency: float
    gaussian_damping: float
    nominal_amplitude: float
    amplitude_bounds: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.amplitude_bounds
        if not (0 <= lo <= self.nominal_amplitude <= hi):
            raise ValueError(
                f"amplitude bounds must satisfy 0 <= lo <= nominal <= hi, got "
                f"lo={lo}, nominal={self.nominal_amplitude}, hi={hi}"
            )


@dataclass(frozen=True)
class MacromoleculeModel:
    components: tuple[MacromoleculeComponent, ...]

    def __len__(self):
        return len(self.components)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.center_frequency for c in self.components])

    @property
    def dampings(self) -> np.ndarray:
        return np.array([c.gaussian_damping for c in self.components])

    @property
    def nominal(self) -> np.ndarray:
        return np.array([c.nominal_amplitude for c in self.components])

    @property
    def lower(self) -> np.ndarray:
        return np.array([c.amplitude_bounds[0] for c in self.components])

    @property
    def upper(self) -> np.ndarray:
        return np.array([c.amplitude_bounds[1] for c in self.components])

    def line_shapes(self, t: np.ndarray) -> np.ndarray:
        """Unit-amplitude Gaussian lines, shape (n_components, len(t))."""
        t = np.asarray(t)
        if not self.components:
            return np.zeros((0, t.size), dtype=np.complex128)
        f = self.frequencies[:, None]
        beta = self.dampings[:, None]
        return np.exp(2j * np.pi * f * t - beta * t**2)

    def evaluate(self, t: np.ndarray, amplitudes=None) -> np.ndarray:
        amps = self.nominal if amplitudes is None else np.asarray(amplitudes, dtype=float)
        return amps @ self.line_shapes(t) if self.components else np.zeros(len(t), complex)


def default_mm_model(ctx: SpectrometerContext | None = None) -> MacromoleculeModel:
    ctx = ctx or SpectrometerContext()
    lo_f, hi_f = MM_BOUND_FACTORS
    comps = tuple(
        MacromoleculeComponent(
            center_frequency=float(ppm_to_hz(ppm, ctx)),
            gaussian_damping=MM_GAUSSIAN_DAMPING,
            nominal_amplitude=amp,
            amplitude_bounds=(lo_f * amp, hi_f * amp),
        )
        for ppm, amp in MM_LINES.items()
    )
    return MacromoleculeModel(comps)


def generate_basis(
    ctx: SpectrometerContext | None = None,
    n_points: int = DEFAULT_N_POINTS,
    dwell_time: float = DEFAULT_DWELL,
    lines: Mapping[str, Sequence[tuple[float, float]]] | None = None,
    damping: float = METABOLITE_DAMPING,
) -> MetaboliteBasis:
    """Build the synthetic basis: each metabolite is a sum of Lorentzian lines.

    Each line contributes ``protons * exp((-damping + 2j*pi*f) * t)`` where
    ``f`` is its chemical shift converted to Hz. No randomness is involved.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    ctx = ctx or SpectrometerContext()
    lines = METABOLITE_LINES if lines is None else lines
    t = time_grid(n_points, dwell_time)
    entries = {}
    for name, peaks in lines.items():
        fid = np.zeros(n_points, dtype=np.complex128)
        for ppm, weight in peaks:
            f = float(ppm_to_hz(ppm, ctx))
            fid += weight * np.exp((-damping + 2j * np.pi * f) * t)
        entries[name] = FidSignal(fid, dwell_time=dwell_time, signal_id=f"basis:{name}")
    return MetaboliteBasis(entries)


# Lesioned voxel (Vox1) vs contralateral control (Vox2); a.u. after water scaling.
DEFAULT_TRUTH = {
    "Vox1": {"NAA": 6.0, "Cr+PCr": 7.6, "PCho+GPC": 2.2, "Glu": 7.0,
             "Gln": 3.3, "GABA": 1.3, "Tau": 4.2},
    "Vox2": {"NAA": 7.5, "Cr+PCr": 7.0, "PCho+GPC": 1.6, "Glu": 8.0,
             "Gln": 3.0, "GABA": 1.4, "Tau": 4.5},
}
DEFAULT_BIO_SD = {
    "Vox1": {m: 0.10 * c for m, c in DEFAULT_TRUTH["Vox1"].items()},
    "Vox2": {m: 0.05 * c for m, c in DEFAULT_TRUTH["Vox2"].items()},
}


@dataclass(frozen=True)
class SyntheticCohortSpec:
    """Recipe for a paired two-voxel synthetic cohort.

    ``baseline_amplitude`` adds a broad unmodelled hump (two fast-decaying
    Lorentzians under the metabolite region); the default of zero keeps
    every signal an exact sum of basis and macromolecule terms plus noise.
    """

    n_signals_per_voxel: int = 16
    truth_concentrations: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {v: dict(c) for v, c in DEFAULT_TRUTH.items()}
    )
    biological_sd: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {v: dict(c) for v, c in DEFAULT_BIO_SD.items()}
    )
    noise_sd: float = 10.0
    master_seed: int = 0
    n_points: int = DEFAULT_N_POINTS
    dwell_time: float = DEFAULT_DWELL
    baseline_amplitude: float = 0.0

    def __post_init__(self):
        if self.n_signals_per_voxel < 1:
            raise ValueError("n_signals_per_voxel must be >= 1")
        if self.noise_sd < 0 or self.baseline_amplitude < 0:
            raise ValueError("noise_sd and baseline_amplitude must be >= 0")
        for table in (self.truth_concentrations, self.biological_sd):
            for voxel in VOXELS:
                if voxel not in table:
                    raise ValueError(f"missing voxel {voxel!r} in cohort tables")
                if any(v < 0 for v in table[voxel].values()):
                    raise ValueError(f"negative concentration or SD for {voxel}")


BASELINE_HUMPS = ((1.3, 120.0), (2.9, 150.0))  # (ppm, Lorentzian decay s^-1)


def baseline_signal(t: np.ndarray, amplitude: float, ctx: SpectrometerContext) -> np.ndarray:
    out = np.zeros(t.size, dtype=np.complex128)
    for ppm, decay in BASELINE_HUMPS:
        f = float(ppm_to_hz(ppm, ctx))
        out += amplitude * np.exp((-decay + 2j * np.pi * f) * t)
    return out


def synthesize_cohort(
    spec: SyntheticCohortSpec,
    basis: MetaboliteBasis,
    mm: MacromoleculeModel,
    ctx: SpectrometerContext | None = None,
) -> list[FidSignal]:
    """Generate ``2 * n_signals_per_voxel`` paired signals (Vox1 block first).

    Signal ``i`` in each voxel belongs to animal ``rat{i+1:02d}``. Every
    signal draws from its own RNG stream keyed on ``(master_seed, index)``,
    so the cohort does not depend on generation order.
    """
    ctx = ctx or SpectrometerContext()
    if basis.dwell_time != spec.dwell_time or basis.n_points != spec.n_points:
        raise ValueError(
            f"basis grid (n={basis.n_points}, dwell={basis.dwell_time!r}) does not match "
            f"the cohort evaluation grid (n={spec.n_points}, dwell={spec.dwell_time!r})"
        )
    t = basis.time_axis
    mm_fid = mm.evaluate(t)
    hump = baseline_signal(t, spec.baseline_amplitude, ctx) if spec.baseline_amplitude else 0.0
    signals = []
    index = 0
    for voxel in VOXELS:
        means = spec.truth_concentrations[voxel]
        sds = spec.biological_sd[voxel]
        for i in range(spec.n_signals_per_voxel):
            rng = rng_for(spec.master_seed, "cohort", index)
            truth = {}
            for name in basis.names:
                draw = rng.normal(means.get(name, 0.0), sds.get(name, 0.0))
                truth[name] = max(float(draw), 0.0)
            conc = np.array([truth[n] for n in basis.names])
            fid = conc @ basis.matrix + mm_fid + hump
            noise = rng.normal(0.0, spec.noise_sd, (2, spec.n_points))
            fid = fid + (noise[0] + 1j * noise[1])
            signals.append(
                FidSignal(
                    fid,
                    dwell_time=spec.dwell_time,
                    signal_id=f"{voxel.lower()}_s{i + 1:02d}",
                    voxel=voxel,
                    animal_id=f"rat{i + 1:02d}",
                    truth=truth,
                )
            )
            index += 1
    return signals
