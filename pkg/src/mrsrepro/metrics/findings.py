"""Does the Vox1-vs-Vox2 conclusion survive repeated quantification runs?"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .records import QuantRecord
from .wilcoxon import InsufficientDataError, MIN_PAIRS, wilcoxon_signed_rank


@dataclass(frozen=True)
class FindingPreservation:
    metabolite: str
    method: str
    n_significant: int
    n_executions: int
    mean_z_statistic: float
    skipped_executions: tuple[int, ...] = ()
    dropped_pairs: int = 0


def finding_preservation(
    records: Iterable[QuantRecord],
    alpha: float = 0.05,
    incomplete: str = "drop_pair",
) -> FindingPreservation:
    """Count executions whose paired Vox1/Vox2 signed-rank test has ``p < alpha``.

    Signals pair up by ``animal_id``. Within an execution, an animal missing
    a converged value for either voxel is handled per ``incomplete``:
    ``"drop_pair"`` removes just that animal, ``"skip_execution"`` drops the
    whole execution. Executions left with too few usable pairs are skipped.
    Skipped executions and dropped pairs are reported, not hidden.
    """
    if incomplete not in ("drop_pair", "skip_execution"):
        raise ValueError(f"unknown incomplete-pair policy {incomplete!r}")
    records = list(records)
    if len({(r.metabolite, r.method) for r in records}) != 1:
        raise ValueError("records must share exactly one (metabolite, method)")
    metabolite, method = records[0].metabolite, records[0].method

    by_exec: dict[int, dict[str, dict[str, float]]] = {}
    animals: set[str] = set()
    for r in records:
        if r.voxel not in ("Vox1", "Vox2"):
            continue
        animals.add(r.animal_id)
        slot = by_exec.setdefault(r.execution, {}).setdefault(r.animal_id, {})
        if r.converged:
            if r.voxel in slot:
                raise ValueError(f"animal {r.animal_id} has two {r.voxel} signals")
            slot[r.voxel] = r.concentration

    n_sig = 0
    zs = []
    skipped = []
    dropped = 0
    for e in sorted(by_exec):
        slots = by_exec[e]
        pairs = []
        missing = 0
        for animal in sorted(animals):
            v = slots.get(animal, {})
            if "Vox1" in v and "Vox2" in v:
                pairs.append((v["Vox1"], v["Vox2"]))
            else:
                missing += 1
        if missing and incomplete == "skip_execution":
            skipped.append(e)
            continue
        if len(pairs) < MIN_PAIRS:
            skipped.append(e)
            continue
        try:
            res = wilcoxon_signed_rank(pairs)
        except InsufficientDataError:
            skipped.append(e)
            continue
        dropped += missing
        n_sig += res.p_value < alpha
        zs.append(res.z_statistic)
    return FindingPreservation(
        metabolite=metabolite,
        method=method,
        n_significant=int(n_sig),
        n_executions=len(zs),
        mean_z_statistic=float(np.mean(zs)) if zs else float("nan"),
        skipped_executions=tuple(skipped),
        dropped_pairs=dropped,
    )
