"""Method configurations (engine x parameter set) and fit outcome records."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..hlsvd import HlsvdConfig
from ..signals import MacromoleculeModel, MetaboliteBasis
from .model import ModelParameters, ParameterLayout

TIME_DOMAIN = "time_domain"
FREQ_DOMAIN = "freq_domain"
METHOD_IDS = ("tdfit-A", "tdfit-B", "freqfit-A", "freqfit-B")


@dataclass(frozen=True)
class ParameterBounds:
    """Box constraints; amplitude upper bound scales with the observed signal."""

    amplitude_scale_factor: float = 10.0
    damping_shift: tuple[float, float] = (-10.0, 30.0)
    freq_shift: tuple[float, float] = (-10.0, 10.0)
    phase: tuple[float, float] = (-np.pi, np.pi)

    def arrays(self, layout: ParameterLayout, mm: MacromoleculeModel, amp_upper: float):
        lo = np.empty(layout.size)
        hi = np.empty(layout.size)
        lo[layout.amp], hi[layout.amp] = 0.0, amp_upper
        lo[layout.damp], hi[layout.damp] = self.damping_shift
        lo[layout.freq], hi[layout.freq] = self.freq_shift
        lo[layout.phase], hi[layout.phase] = self.phase
        lo[layout.mm], hi[layout.mm] = mm.lower, mm.upper
        return lo, hi


def data_scale(samples: np.ndarray, basis: MetaboliteBasis) -> float:
    """Common amplitude that makes the summed basis as large as the data."""
    denom = np.linalg.norm(basis.matrix.sum(axis=0))
    return float(np.linalg.norm(samples) / denom)


@dataclass(frozen=True)
class MethodConfig:
    method_id: str
    engine: str
    baseline_mode: str
    spline_lambda: float | None = None
    n_starts: int = 8
    bounds: ParameterBounds = field(default_factory=ParameterBounds)
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    cost_tolerance: float = 1e-10
    # time-domain multi-start: shifts and phase start within this fraction
    # of their bound intervals around zero (1.0 = the full box)
    start_fraction: float = 1.0
    hlsvd: HlsvdConfig = field(default_factory=HlsvdConfig)
    # leading samples handed to HLSVD when modelling the residual baseline
    hlsvd_points: int | None = 512
    spline_knot_spacing_ppm: float = 0.15
    fit_window_ppm: tuple[float, float] = (0.5, 4.2)

    def __post_init__(self):
        if self.engine not in (TIME_DOMAIN, FREQ_DOMAIN):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.baseline_mode not in ("none", "hlsvd", "spline"):
            raise ValueError(f"unknown baseline_mode {self.baseline_mode!r}")
        if self.engine == TIME_DOMAIN and self.baseline_mode == "spline":
            raise ValueError("spline baseline requires the frequency-domain engine")
        if self.engine == FREQ_DOMAIN and self.baseline_mode != "spline":
            raise ValueError("frequency-domain engine always uses a spline baseline")
        if self.engine == FREQ_DOMAIN and (self.spline_lambda is None or self.spline_lambda < 0):
            raise ValueError("frequency-domain engine needs spline_lambda >= 0")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 0 < self.start_fraction <= 1:
            raise ValueError("start_fraction must be in (0, 1]")

    @property
    def stochastic(self) -> bool:
        return self.engine == TIME_DOMAIN

    def with_(self, **changes) -> "MethodConfig":
        return replace(self, **changes)


PRESETS: dict[str, MethodConfig] = {
    "tdfit-A": MethodConfig("tdfit-A", TIME_DOMAIN, "none"),
    "tdfit-B": MethodConfig("tdfit-B", TIME_DOMAIN, "hlsvd"),
    "freqfit-A": MethodConfig("freqfit-A", FREQ_DOMAIN, "spline", spline_lambda=1e6),
    "freqfit-B": MethodConfig("freqfit-B", FREQ_DOMAIN, "spline", spline_lambda=1.0),
}


def method_config(method_id: str, **overrides) -> MethodConfig:
    try:
        base = PRESETS[method_id]
    except KeyError:
        raise ValueError(f"unknown method {method_id!r}; choose from {METHOD_IDS}") from None
    return replace(base, **overrides) if overrides else base


def split_method_id(method_id: str) -> tuple[str, str]:
    """``'tdfit-A'`` -> ``('tdfit', 'A')``."""
    engine, _, paramset = method_id.rpartition("-")
    return engine, paramset


@dataclass(frozen=True)
class FitResult:
    method_id: str
    signal_id: str
    execution_index: int
    seed: int
    concentrations: Mapping[str, float]
    crb_sd: Mapping[str, float]
    converged: bool
    final_cost: float
    n_iterations: int
    n_starts_tried: int
    params: ModelParameters | None = None
    start_costs: tuple[float, ...] = ()
    start_converged: tuple[bool, ...] = ()
    noise_var: float = float("nan")
    n_baseline_components: int = 0
    # frequency-domain engine only: fitted spline over the fit window
    spectral_baseline: np.ndarray | None = field(default=None, repr=False)
