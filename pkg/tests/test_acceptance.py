"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The default-grid fixture runs the full 32-signal x 4-method x 30-execution
experiment once (about 15 minutes on one core); several criteria read it.
"""

import hashlib
import math
import shutil
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE_LINES
from mrsrepro.harness import (
    ExperimentConfig,
    build_cohort,
    compute_reports,
    filter_converged,
    run_experiment,
)
from mrsrepro.harness.cli import main as cli_main
from mrsrepro.hlsvd import DampedSinusoid, HlsvdConfig, hlsvd_decompose, reconstruct
from mrsrepro.metrics import (
    QuantRecord,
    bland_altman,
    execution_residuals,
    finding_preservation,
    group_by,
    rmse,
    signed_rank_test,
)
from mrsrepro.quant import FidModel, ModelParameters, compute_crb
from mrsrepro.quant.model import stack_complex
from mrsrepro.signals import (
    DEFAULT_TRUTH,
    METABOLITES,
    FidSignal,
    MacromoleculeModel,
    SyntheticCohortSpec,
    generate_basis,
)

TD = ("tdfit-A", "tdfit-B")
FD = ("freqfit-A", "freqfit-B")


def report(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {number:>3} {title}" + (f" -- {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture(scope="module")
def default_grid(tmp_path_factory):
    cfg = ExperimentConfig(output_dir=str(tmp_path_factory.mktemp("default_grid")))
    start = time.perf_counter()
    table = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    bundle = compute_reports(table, cfg)
    return cfg, table, bundle, elapsed


# -- 1 ---------------------------------------------------------------------

@pytest.mark.slow
def test_01_grid_accounting(default_grid):
    cfg, table, _, elapsed = default_grid
    counts = {}
    for r in table.rows:
        counts[(r.signal_id, r.metabolite)] = counts.get((r.signal_id, r.metabolite), 0) + 1
    n_signals = len({s for s, _ in counts})
    ok = (
        n_signals == 32
        and set(counts.values()) == {120}
        and len(counts) == 32 * len(METABOLITES)
        and len(table) == 32 * 4 * 30 * len(METABOLITES)
        and elapsed < 30 * 60
    )
    report(1, "grid accounting: 120 quantifications per metabolite per signal", ok,
           f"{n_signals} signals, counts {sorted(set(counts.values()))}, "
           f"{len(table)} rows, grid time {elapsed / 60:.1f} min")
    assert ok


# -- 2 ---------------------------------------------------------------------

@pytest.mark.slow
def test_02_deterministic_engine_zero_variability(default_grid):
    _, table, bundle, _ = default_grid
    values = {}
    for r in table.rows:
        if r.method in FD:
            values.setdefault((r.metabolite, r.signal_id, r.method), []).append(r.concentration)
    bitwise = all(
        len(v) == 30 and len({np.float64(x).tobytes() for x in v}) == 1 for v in values.values()
    )
    rm = [st.rmse for (m, q, v), st in bundle.variability.items() if q in FD]
    ok = bitwise and len(rm) == 2 * 2 * len(METABOLITES) and all(x == 0.0 for x in rm)
    report(2, "freqfit-A/B RMSE exactly 0 (bitwise-identical executions)", ok,
           f"{len(values)} (m,s,q) groups, max RMSE {max(rm):.3g}")
    assert ok


# -- 3 ---------------------------------------------------------------------

@pytest.mark.slow
def test_03_stochastic_engine_variability_below_crb(default_grid):
    _, _, bundle, _ = default_grid
    rows = []
    for (m, q, v), st in sorted(bundle.variability.items()):
        if q in TD:
            rows.append((m, q, v, st.rmse, bundle.crb_mean[(m, q, v)]))
    positive = all(r > 0 for *_, r, _ in rows)
    below = all(c > r for *_, r, c in rows)
    ok = len(rows) == 2 * 2 * len(METABOLITES) and positive and below
    worst = max(rows, key=lambda t: t[3] / t[4])
    report(3, "tdfit-A/B RMSE > 0 and mean CRB > RMSE for every metabolite", ok,
           f"RMSE range [{min(t[3] for t in rows):.3g}, {max(t[3] for t in rows):.3g}], "
           f"largest RMSE/CRB {worst[3] / worst[4]:.3g} ({worst[0]}, {worst[1]}, {worst[2]})")
    for m, q, v, r, c in rows:
        print(f"    {m:9s} {q:8s} {v}: rmse={r:.4g} crb_mean={c:.4g}")
    assert ok


# -- 4 ---------------------------------------------------------------------

def test_04_noiseless_recovery(tmp_path):
    cfg = ExperimentConfig(
        cohort=SyntheticCohortSpec(n_signals_per_voxel=2, noise_sd=0.0),
        n_exec=1, output_dir=str(tmp_path),
    )
    start = time.perf_counter()
    table = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    truth = {sig.signal_id: sig.truth for sig in build_cohort(cfg.cohort)}
    worst = {"td": 0.0, "fd": 0.0}
    for r in table.rows:
        rel = abs(r.concentration - truth[r.signal_id][r.metabolite]) / truth[r.signal_id][r.metabolite]
        key = "td" if r.method in TD else "fd"
        worst[key] = max(worst[key], rel)
    ok = worst["td"] <= 1e-6 and worst["fd"] <= 1e-4 and elapsed < 60 and len(truth) == 4
    report(4, "noiseless recovery (tdfit 1e-6, freqfit 1e-4 relative)", ok,
           f"max rel error tdfit {worst['td']:.2e}, freqfit {worst['fd']:.2e}, {elapsed:.1f} s")
    assert ok


# -- 5 ---------------------------------------------------------------------

def test_05_bland_altman_hand_example():
    st_ = bland_altman({"a": 1.0, "b": 2.0, "c": 3.0}, {"a": 0.0, "b": 0.0, "c": 0.0})
    ok = (
        abs(st_.bias - 2.0) <= 1e-9
        and abs(st_.ci95 - 1.96) <= 1e-9
        and abs(st_.z95 - 2.0 / 1.96) <= 1e-9
        and round(st_.z95, 4) == 1.0204
    )
    report(5, "Bland-Altman on differences {1,2,3}", ok,
           f"bias {st_.bias}, ci95 {st_.ci95}, z95 {st_.z95:.10f}")
    assert ok


# -- 6 ---------------------------------------------------------------------

_rmse_cases = []


def _brute_force_rmse(rows):
    total, count = 0.0, 0
    for s in sorted({r[0] for r in rows}):
        xs = [x for s2, _, x in rows if s2 == s]
        mean = sum(xs) / len(xs)
        for x in xs:
            total += (x - mean) ** 2
            count += 1
    return math.sqrt(total / count)


@settings(max_examples=120, deadline=None, derandomize=True)
@given(st.integers(1, 200), st.integers(1, 50), st.integers(0, 2**32 - 1))
def _rmse_property(n_signals, n_exec, seed):
    rng = np.random.default_rng(seed)
    n_exec = min(n_exec, 10_000 // n_signals)
    rows = []
    for s in range(n_signals):
        centre, spread = rng.uniform(-100, 100), 10 ** rng.uniform(-6, 2)
        for e in range(n_exec):
            if e == 0 or rng.random() > 0.15:
                rows.append((f"s{s:03d}", e, float(rng.normal(centre, spread))))
    recs = [QuantRecord("NAA", s, "Vox1", s, "q", e, x) for s, e, x in rows]
    got = rmse(execution_residuals(recs))
    ref = _brute_force_rmse(rows)
    _rmse_cases.append((len(rows), abs(got - ref) / ref if ref else abs(got)))
    assert got == pytest.approx(ref, rel=1e-12, abs=0.0)


def test_06_rmse_matches_brute_force():
    _rmse_cases.clear()
    try:
        _rmse_property()
        ok = len(_rmse_cases) >= 100
    except AssertionError:
        ok = False
    worst = max(c[1] for c in _rmse_cases) if _rmse_cases else float("nan")
    report(6, "RMSE vs brute-force double loop (>=100 random tables, <=1e4 records)", ok,
           f"{len(_rmse_cases)} cases, up to {max(c[0] for c in _rmse_cases)} records, "
           f"max rel diff {worst:.2e}")
    assert ok


# -- 7 ---------------------------------------------------------------------

def _exact_p(n, w):
    counts = [1]
    for k in range(1, n + 1):
        nxt = counts + [0] * k
        for s, c in enumerate(counts):
            nxt[s + k] += c
        counts = nxt
    lower = Fraction(sum(counts[: w + 1]), 2**n)
    upper = Fraction(sum(counts[w:]), 2**n)
    return min(Fraction(1), 2 * min(lower, upper))


def _signs_for(n, w):
    signs = -np.ones(n)
    for k in range(n, 0, -1):
        if k <= w:
            signs[k - 1], w = 1.0, w - k
    return signs * np.arange(1, n + 1)


def test_07_wilcoxon_exactness():
    mismatches = 0
    for n in range(5, 11):
        for w in range(n * (n + 1) // 2 + 1):
            res = signed_rank_test(_signs_for(n, w))
            if not res.exact or res.p_value != float(_exact_p(n, w)):
                mismatches += 1
    published = signed_rank_test([1, 2, 3, 4, 5]).p_value == 0.0625
    gap = max(
        abs(signed_rank_test(_signs_for(10, w), "normal").p_value
            - signed_rank_test(_signs_for(10, w), "exact").p_value)
        for w in range(56)
    )
    ok = mismatches == 0 and published and gap < 0.05
    report(7, "Wilcoxon exact p-values n=5..10; normal approximation within 0.05 at n=10", ok,
           f"{mismatches} mismatches, all-positive n=5 p={signed_rank_test([1, 2, 3, 4, 5]).p_value}, "
           f"max |normal-exact| at n=10 {gap:.4f}")
    assert ok


# -- 8 ---------------------------------------------------------------------

def test_08_hlsvd_exact_recovery():
    truth = [
        DampedSinusoid(-846.9, 5.0, 8.0, 0.4),
        DampedSinusoid(-1345.0, 60.0, 3.0, -0.7),
        DampedSinusoid(402.0, 150.0, 5.0, 2.1),
    ]
    dwell = 1.0 / 5464.0
    fid = FidSignal(reconstruct(truth, np.arange(2048) * dwell), dwell_time=dwell)
    found = hlsvd_decompose(fid, HlsvdConfig(model_order=3))
    errs = []
    for c in truth:
        f = min(found, key=lambda x: abs(x.frequency - c.frequency))
        errs.append(abs(f.frequency - c.frequency) / abs(c.frequency))
        errs.append(abs(f.damping - c.damping) / c.damping)
    ok = max(errs) < 1e-6
    report(8, "HLSVD recovers 3 noiseless damped sinusoids", ok, f"max rel error {max(errs):.2e}")
    assert ok


# -- 9 ---------------------------------------------------------------------

def test_09_crb_oracles(ctx, basis, mm):
    # closed form: amplitude-only Fisher information of one damped sinusoid
    one = generate_basis(ctx, lines={"X": [(2.0, 1.0)]}, damping=5.0)
    none = MacromoleculeModel(())
    p1 = ModelParameters.from_concentrations({"X": 4.0}, none)
    x1 = FidModel(one, none).layout.pack(p1)
    lo, hi = x1.copy(), x1.copy()
    lo[0], hi[0] = 0.0, 100.0
    noise_var = 7.5
    zero = FidSignal(np.zeros(one.n_points), dwell_time=one.dwell_time)
    got = compute_crb(p1, zero, one, none, noise_var, lo, hi)["X"] ** 2
    closed = noise_var / np.sum(np.exp(-2 * 5.0 * one.time_axis))
    rel_closed = abs(got - closed) / closed

    # full model against a finite-difference Fisher matrix
    conc = {n: 2.0 + i for i, n in enumerate(basis.names)}
    params = ModelParameters(conc, {n: 1.0 for n in conc}, {n: 0.5 for n in conc}, 0.2,
                             tuple(mm.nominal))
    model = FidModel(basis, mm)
    x = model.layout.pack(params)
    cols = []
    for k in range(x.size):
        h = 1e-6 * max(1.0, abs(x[k]))
        up, dn = x.copy(), x.copy()
        up[k] += h
        dn[k] -= h
        cols.append(stack_complex((model.evaluate(up) - model.evaluate(dn)) / (2 * h)))
    j = np.column_stack(cols)
    ref = np.sqrt(np.diag(np.linalg.inv(j.T @ j / 100.0))[: len(conc)])
    full = compute_crb(params, FidSignal(np.zeros(basis.n_points), dwell_time=basis.dwell_time),
                       basis, mm, 100.0)
    rel_full = max(abs(full[n] - r) / r for n, r in zip(basis.names, ref))
    ok = rel_closed < 1e-6 and rel_full < 1e-3
    report(9, "CRB: closed form (1e-6) and finite-difference Fisher (1e-3)", ok,
           f"closed-form rel err {rel_closed:.2e}, finite-difference rel err {rel_full:.2e}")
    assert ok


# -- 10 --------------------------------------------------------------------

def _cohort_with_cr(vox1, vox2, seed):
    truth = {v: dict(c) for v, c in DEFAULT_TRUTH.items()}
    truth["Vox1"]["Cr+PCr"] = vox1
    truth["Vox2"]["Cr+PCr"] = vox2
    return SyntheticCohortSpec(n_signals_per_voxel=8, truth_concentrations=truth, master_seed=seed)


def _cr_findings(tmp_path, spec):
    cfg = ExperimentConfig(cohort=spec, master_seed=spec.master_seed, output_dir=str(tmp_path))
    table = run_experiment(cfg)
    records = [r for r in table.records() if r.metabolite == "Cr+PCr"]
    found = {q: finding_preservation(rows, 0.05) for (q,), rows in group_by(records, "method").items()}
    crb = np.nanmean([r.crb_sd for r in records])
    return found, crb


@pytest.mark.slow
def test_10a_planted_effect_preserved(tmp_path):
    effect = 2.5
    found, crb = _cr_findings(tmp_path, _cohort_with_cr(7.0 + effect, 7.0, seed=101))
    ratio = effect / crb
    ok = ratio >= 5 and all(found[q].n_significant == 30 and found[q].n_executions == 30
                            for q in TD + FD)
    report("10a", "planted Cr+PCr effect significant in 30/30 runs for every method", ok,
           f"effect/noise SD {ratio:.1f}; " + ", ".join(
               f"{q} {found[q].n_significant}/{found[q].n_executions}" for q in TD + FD))
    assert ok


@pytest.mark.slow
def test_10b_zero_effect_type_one(tmp_path):
    found, _ = _cr_findings(tmp_path, _cohort_with_cr(7.0, 7.0, seed=202))
    ok = all(found[q].n_significant <= 3 for q in TD + FD)
    report("10b", "zero Cr+PCr effect significant in <= 3/30 runs for every method", ok,
           ", ".join(f"{q} {found[q].n_significant}/{found[q].n_executions}" for q in TD + FD))
    assert ok


@pytest.mark.slow
def test_10c_fail_rate_band(tmp_path):
    # injected failures do not depend on the engine, so the cheap deterministic
    # engine stands in for the grid here
    lines = []
    in_band_runs = 0
    for k in range(10):
        cfg = ExperimentConfig(
            cohort=SyntheticCohortSpec(master_seed=k), methods=("freqfit-A",),
            master_seed=k, fail_rate=0.1, output_dir=str(tmp_path / f"run{k}"),
        )
        _, freport = filter_converged(run_experiment(cfg))
        counts = np.array(freport.retained_counts())
        inside = (counts >= 26) & (counts <= 30)
        in_band_runs += bool(inside.all())
        lines.append(f"    run {k}: retained {counts.min()}..{counts.max()}, "
                     f"mean {counts.mean():.2f}, cells in band {inside.mean():.0%}")
    # independent injection puts one cell in band with probability ~0.825, so all
    # 32 cells land there together only ~0.2% of the time; expected to fail
    ok = in_band_runs >= 8
    report("10c", "--fail-rate 0.1: every (signal, method) keeps 26-30 executions in >= 8/10 runs",
           ok, f"{in_band_runs}/10 runs fully in band")
    for line in lines:
        ACCEPTANCE_LINES.append(line)
        print(line)
    assert ok


# -- 11 --------------------------------------------------------------------

def _tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_11_end_to_end_determinism(tmp_path):
    out = tmp_path / "tree"
    args = ["all", "--master-seed", "42", "--n-signals-per-voxel", "3", "--n-exec", "3",
            "--n-boot", "200", "--output", str(out)]
    assert cli_main(args) == 0
    first = _tree_digest(out)
    shutil.rmtree(out)
    assert cli_main(args) == 0
    second = _tree_digest(out)
    ok = first == second and len(first) > 10
    report(11, "two `all --master-seed 42` runs give byte-identical output trees", ok,
           f"{len(first)} files compared")
    assert ok
