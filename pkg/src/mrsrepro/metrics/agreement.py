"""Bland-Altman agreement between two methods and the bias/CI95 ratio."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

CI95_FACTOR = 1.96


@dataclass(frozen=True)
class AgreementStats:
    metabolite: str
    method_pair: tuple[str, str]
    voxel: str | None
    bias: float
    sd_diff: float
    ci95: float
    z95: float
    points: tuple[tuple[str, float, float], ...]  # (signal_id, mean, difference)

    @property
    def n(self) -> int:
        return len(self.points)


def bland_altman(
    x_q: Mapping[str, float],
    x_r: Mapping[str, float],
    metabolite: str = "",
    method_pair: tuple[str, str] = ("", ""),
    voxel: str | None = None,
) -> AgreementStats:
    """Compare two methods' per-signal concentrations.

    Differences are ``x_q - x_r``; ``ci95`` is 1.96 times their sample
    standard deviation and ``z95 = bias / ci95``. A zero spread with a
    non-zero bias gives ``z95 = +-inf`` (sign of the bias).
    """
    if set(x_q) != set(x_r):
        raise ValueError("both methods must cover the same signals")
    if len(x_q) < 2:
        raise ValueError("Bland-Altman analysis needs at least 2 signals")
    keys = sorted(x_q)
    a = np.array([x_q[k] for k in keys], dtype=float)
    b = np.array([x_r[k] for k in keys], dtype=float)
    diff = a - b
    mean = 0.5 * (a + b)
    bias = float(np.mean(diff))
    sd = float(np.std(diff, ddof=1))
    ci95 = CI95_FACTOR * sd
    if ci95 > 0:
        z95 = bias / ci95
    elif bias != 0:
        z95 = math.copysign(math.inf, bias)
    else:
        z95 = 0.0
    points = tuple((k, float(m), float(d)) for k, m, d in zip(keys, mean, diff))
    return AgreementStats(metabolite, tuple(method_pair), voxel, bias, sd, ci95, z95, points)


def z95_matrix(
    means: Mapping[tuple[str, str, str], float],
    methods: Sequence[str],
    voxel_of: Mapping[str, str | None],
    voxel: str | None = None,
) -> dict[tuple[str, str, str], AgreementStats]:
    """Bland-Altman stats for every unordered method pair and metabolite.

    ``means`` is keyed ``(metabolite, signal_id, method)`` as produced by
    ``mean_over_executions``. Pairs follow the order of ``methods`` (so the
    pair ``(q, q')`` has ``q`` earlier in the list). With ``voxel`` set,
    only that voxel's signals enter; each comparison uses the signals for
    which both methods have a mean. Result keys are ``(metabolite, q, q')``.
    """
    if len(methods) < 2:
        raise ValueError("need at least two methods")
    table: dict[str, dict[str, dict[str, float]]] = {}
    for (m, s, q), x in means.items():
        if voxel is not None and voxel_of.get(s) != voxel:
            continue
        table.setdefault(m, {}).setdefault(q, {})[s] = x
    out = {}
    for m in sorted(table):
        for q, r in itertools.combinations(methods, 2):
            xq = table[m].get(q, {})
            xr = table[m].get(r, {})
            common = sorted(set(xq) & set(xr))
            out[(m, q, r)] = bland_altman(
                {s: xq[s] for s in common}, {s: xr[s] for s in common}, m, (q, r), voxel
            )
    return out
