"""The signal x method x execution grid and its flat results table."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..fidio import FidParseError, read_fid, write_fid
from ..hlsvd import HlsvdConfig
from ..metrics.records import QuantRecord
from ..quant import METHOD_IDS, FitResult, MethodConfig, method_config, quantify, split_method_id
from ..seeding import derive_seed, rng_for
from ..signals import (
    METABOLITES,
    FidSignal,
    SpectrometerContext,
    SyntheticCohortSpec,
    default_mm_model,
    generate_basis,
    synthesize_cohort,
)

log = logging.getLogger(__name__)

RESULTS_HEADER = (
    "signal_id", "voxel", "animal_id", "method", "paramset", "execution", "seed",
    "converged", "final_cost", "n_iter", "metabolite", "concentration", "crb_sd",
)
SEED_POLICY = (
    "execution seed = blake2b-64(master_seed, method_id, signal_id, execution); "
    "cohort signal i uses blake2b-64(master_seed, 'cohort', i); "
    "fail injection uses blake2b-64(master_seed, 'fail', method_id, signal_id, execution); "
    "bootstrap uses blake2b-64(master_seed, 'bootstrap', metabolite, method, voxel)"
)


class DataError(RuntimeError):
    """Input data (signals or results table) could not be read."""


def fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ExperimentConfig:
    cohort: SyntheticCohortSpec | str = field(default_factory=SyntheticCohortSpec)
    methods: tuple[str, ...] = METHOD_IDS
    n_exec: int = 30
    master_seed: int = 0
    output_dir: str = "mrs-output"
    alpha: float = 0.05
    n_boot: int = 1000
    jobs: int = 1
    fail_rate: float = 0.0
    hlsvd_order: int = HlsvdConfig.model_order
    hlsvd_damping_threshold: float = HlsvdConfig.baseline_damping_threshold

    def __post_init__(self):
        if self.n_exec < 1:
            raise ValueError("n_exec must be >= 1")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        for m in self.methods:
            if m not in METHOD_IDS:
                raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHOD_IDS)}")
        if not 0 <= self.fail_rate <= 1:
            raise ValueError("fail_rate must be in [0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.n_boot < 1 or self.jobs < 1:
            raise ValueError("n_boot and jobs must be >= 1")

    def method_configs(self) -> list[MethodConfig]:
        hl = HlsvdConfig(model_order=self.hlsvd_order,
                         baseline_damping_threshold=self.hlsvd_damping_threshold)
        return [method_config(m, hlsvd=hl) for m in self.methods]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        if isinstance(self.cohort, SyntheticCohortSpec):
            d["cohort"] = asdict(self.cohort)
        return d


@dataclass(frozen=True)
class ResultRow:
    signal_id: str
    voxel: str | None
    animal_id: str
    method: str  # full method id, e.g. "tdfit-A"
    execution: int
    seed: int
    converged: bool
    final_cost: float
    n_iter: int
    metabolite: str
    concentration: float
    crb_sd: float

    def to_record(self) -> QuantRecord:
        return QuantRecord(
            metabolite=self.metabolite,
            signal_id=self.signal_id,
            voxel=self.voxel,
            animal_id=self.animal_id,
            method=self.method,
            execution=self.execution,
            concentration=self.concentration,
            crb_sd=self.crb_sd,
            converged=self.converged,
        )


@dataclass
class ResultsTable:
    rows: list[ResultRow]

    def __post_init__(self):
        seen = set()
        for r in self.rows:
            key = (r.metabolite, r.signal_id, r.method, r.execution)
            if key in seen:
                raise DataError(f"duplicate result key {key}")
            seen.add(key)

    def __len__(self):
        return len(self.rows)

    def records(self) -> list[QuantRecord]:
        return [r.to_record() for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in self.rows:
            engine, paramset = split_method_id(r.method)
            w.writerow([
                r.signal_id, r.voxel or "", r.animal_id, engine, paramset, r.execution,
                r.seed, "true" if r.converged else "false", fmt(r.final_cost), r.n_iter,
                r.metabolite, fmt(r.concentration), fmt(r.crb_sd),
            ])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8", newline="\n")
        return path

    @classmethod
    def read(cls, path) -> "ResultsTable":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read results table {path}: {exc}") from exc
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != RESULTS_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                d = dict(zip(header, rec, strict=True))
                rows.append(ResultRow(
                    signal_id=d["signal_id"],
                    voxel=d["voxel"] or None,
                    animal_id=d["animal_id"],
                    method=f"{d['method']}-{d['paramset']}",
                    execution=int(d["execution"]),
                    seed=int(d["seed"]),
                    converged={"true": True, "false": False}[d["converged"]],
                    final_cost=float(d["final_cost"]),
                    n_iter=int(d["n_iter"]),
                    metabolite=d["metabolite"],
                    concentration=float(d["concentration"]),
                    crb_sd=float(d["crb_sd"]),
                ))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from exc
        return cls(rows)


def execution_seed(master_seed: int, method_id: str, signal_id: str, execution: int) -> int:
    return derive_seed(master_seed, method_id, signal_id, execution)


def injected_failure(master_seed: int, method_id: str, signal_id: str, execution: int,
                     fail_rate: float) -> bool:
    if fail_rate <= 0:
        return False
    return bool(rng_for(master_seed, "fail", method_id, signal_id, execution).random() < fail_rate)


def load_cohort_dir(path) -> list[FidSignal]:
    """Read every ``*.json`` FID in ``path`` (sorted by name); any failure aborts."""
    path = Path(path)
    files = sorted(path.glob("*.json"))
    if not files:
        raise DataError(f"no FID files found in {path}")
    signals = []
    for f in files:
        try:
            signals.append(read_fid(f))
        except (FidParseError, OSError, ValueError) as exc:
            raise DataError(f"unreadable signal file {f}: {exc}") from exc
    return signals


def build_cohort(spec: SyntheticCohortSpec) -> list[FidSignal]:
    ctx = SpectrometerContext()
    basis = generate_basis(ctx, spec.n_points, spec.dwell_time)
    return synthesize_cohort(spec, basis, default_mm_model(ctx), ctx)


def write_cohort(signals: list[FidSignal], directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in signals:
        write_fid(s, directory / f"{s.signal_id}.json")
    names = sorted({m for s in signals if s.truth for m in s.truth})
    lines = [",".join(["signal_id", "voxel", "animal_id", *names])]
    for s in signals:
        truth = s.truth or {}
        lines.append(",".join(
            [s.signal_id, s.voxel or "", s.animal_id]
            + [fmt(truth[m]) if m in truth else "" for m in names]
        ))
    (directory / "truth.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return directory


# Per-process cache so worker processes build the basis once.
_WORKER: dict = {}


def _worker_setup(n_points: int, dwell_time: float):
    ctx = SpectrometerContext()
    _WORKER["ctx"] = ctx
    _WORKER["basis"] = generate_basis(ctx, n_points, dwell_time)
    _WORKER["mm"] = default_mm_model(ctx)


def _run_cell(signal: FidSignal, cfg: MethodConfig, n_exec: int, master_seed: int,
              fail_rate: float) -> list[ResultRow]:
    basis, mm, ctx = _WORKER["basis"], _WORKER["mm"], _WORKER["ctx"]
    rows = []
    for e in range(n_exec):
        seed = execution_seed(master_seed, cfg.method_id, signal.signal_id, e)
        fit: FitResult = quantify(signal, basis, mm, cfg, seed, e, ctx)
        converged = fit.converged and not injected_failure(
            master_seed, cfg.method_id, signal.signal_id, e, fail_rate
        )
        for m in basis.names:
            rows.append(ResultRow(
                signal_id=signal.signal_id,
                voxel=signal.voxel,
                animal_id=signal.animal_id,
                method=cfg.method_id,
                execution=e,
                seed=seed,
                converged=converged,
                final_cost=fit.final_cost,
                n_iter=fit.n_iterations,
                metabolite=m,
                concentration=fit.concentrations[m],
                crb_sd=fit.crb_sd[m],
            ))
    return rows


def run_grid(signals: list[FidSignal], config: ExperimentConfig) -> ResultsTable:
    """Fit every (signal, method, execution) cell; rows come back in canonical order."""
    if not signals:
        raise DataError("no signals to quantify")
    grid = {(s.n_points, s.dwell_time) for s in signals}
    if len(grid) != 1:
        raise DataError("all signals must share one sampling grid")
    n_points, dwell = grid.pop()
    cfgs = config.method_configs()
    cells = [(s, c) for s in sorted(signals, key=lambda s: s.signal_id) for c in cfgs]
    args = (config.n_exec, config.master_seed, config.fail_rate)
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs, initializer=_worker_setup,
                                 initargs=(n_points, dwell)) as pool:
            futures = [pool.submit(_run_cell, s, c, *args) for s, c in cells]
            chunks = [f.result() for f in futures]
    else:
        _worker_setup(n_points, dwell)
        chunks = []
        for i, (s, c) in enumerate(cells, start=1):
            chunks.append(_run_cell(s, c, *args))
            log.info("cell %d/%d done (%s, %s)", i, len(cells), s.signal_id, c.method_id)
    metab_order = {m: i for i, m in enumerate(METABOLITES)}
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.signal_id, r.method, r.execution, metab_order[r.metabolite]))
    return ResultsTable(rows)


def cohort_signals(config: ExperimentConfig) -> list[FidSignal]:
    if isinstance(config.cohort, SyntheticCohortSpec):
        return build_cohort(config.cohort)
    return load_cohort_dir(config.cohort)


def run_experiment(config: ExperimentConfig, results_path=None) -> ResultsTable:
    """Load or synthesize the cohort, run the grid and persist the table.

    Input signals are all read before any fit starts. The table is written
    to ``results_path`` (default ``<output_dir>/results.csv``).
    """
    signals = cohort_signals(config)
    table = run_grid(signals, config)
    out = Path(results_path) if results_path else Path(config.output_dir) / "results.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    table.write(out)
    return table


@dataclass(frozen=True)
class FilterReport:
    # (signal_id, method) -> (n_executions, n_retained)
    counts: dict[tuple[str, str], tuple[int, int]]

    @property
    def empty_cells(self) -> list[tuple[str, str]]:
        return [k for k, (_, kept) in sorted(self.counts.items()) if kept == 0]

    def retained_counts(self) -> list[int]:
        return [kept for _, kept in self.counts.values()]

    def to_csv(self) -> str:
        lines = ["signal_id,method,n_executions,n_retained,flag"]
        for (s, q), (total, kept) in sorted(self.counts.items()):
            flag = "NO_RETAINED_EXECUTIONS" if kept == 0 else ""
            lines.append(f"{s},{q},{total},{kept},{flag}")
        return "\n".join(lines) + "\n"


def filter_converged(table: ResultsTable) -> tuple[ResultsTable, FilterReport]:
    """Drop non-converged executions and count what is left per (signal, method)."""
    execs: dict[tuple[str, str], dict[int, bool]] = {}
    for r in table.rows:
        execs.setdefault((r.signal_id, r.method), {})[r.execution] = r.converged
    counts = {k: (len(v), sum(v.values())) for k, v in execs.items()}
    report = FilterReport(counts)
    for s, q in report.empty_cells:
        log.warning("no converged executions left for signal %s, method %s", s, q)
    return ResultsTable([r for r in table.rows if r.converged]), report


def with_output(config: ExperimentConfig, output_dir) -> ExperimentConfig:
    return replace(config, output_dir=str(output_dir))
