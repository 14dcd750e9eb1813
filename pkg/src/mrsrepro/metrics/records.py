"""The flat quantification record and grouping helpers."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class QuantRecord:
    """One concentration estimate x(m, s, q, e)."""

    metabolite: str
    signal_id: str
    voxel: str | None
    animal_id: str
    method: str
    execution: int
    concentration: float
    crb_sd: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if not np.isfinite(self.concentration):
            raise ValueError(f"non-finite concentration in {self.key}")
        if self.execution < 0:
            raise ValueError("execution index must be >= 0")

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.metabolite, self.signal_id, self.method, self.execution)


def retained(records: Iterable[QuantRecord]) -> list[QuantRecord]:
    return [r for r in records if r.converged]


def group_by(records: Iterable[QuantRecord], *fields: str) -> dict[tuple, list[QuantRecord]]:
    out: dict[tuple, list[QuantRecord]] = defaultdict(list)
    for r in records:
        out[tuple(getattr(r, f) for f in fields)].append(r)
    return dict(out)


def mean_over_executions(records: Iterable[QuantRecord]):
    """Mean concentration per (metabolite, signal, method) over converged runs.

    Returns ``(means, omitted)`` where ``omitted`` lists the keys whose
    executions were all non-converged.
    """
    groups = group_by(records, "metabolite", "signal_id", "method")
    means: dict[tuple[str, str, str], float] = {}
    omitted: list[tuple[str, str, str]] = []
    for key in sorted(groups):
        kept = [r.concentration for r in groups[key] if r.converged]
        if kept:
            means[key] = float(np.mean(kept))
        else:
            omitted.append(key)
    return means, omitted
