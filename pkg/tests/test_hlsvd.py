import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mrsrepro.hlsvd import (
    DampedSinusoid,
    DegenerateDecompositionError,
    HlsvdConfig,
    hlsvd_decompose,
    reconstruct,
    select_baseline_components,
    subtract_components,
)
from mrsrepro.signals import FidSignal

DWELL = 1.0 / 5464.0
N = 256


def _signal(comps, n=N):
    t = np.arange(n) * DWELL
    return FidSignal(reconstruct(comps, t), dwell_time=DWELL)


def _match(found, truth):
    for c in truth:
        best = min(found, key=lambda f: abs(f.frequency - c.frequency))
        yield c, best


def test_three_component_recovery():
    truth = [
        DampedSinusoid(-800.0, 5.0, 10.0, 0.3),
        DampedSinusoid(150.0, 80.0, 4.0, -1.0),
        DampedSinusoid(1200.0, 20.0, 1.0, 2.0),
    ]
    found = hlsvd_decompose(_signal(truth, 2048), HlsvdConfig(model_order=3))
    for c, f in _match(found, truth):
        assert f.frequency == pytest.approx(c.frequency, rel=1e-6)
        assert f.damping == pytest.approx(c.damping, rel=1e-6)
        assert f.amplitude == pytest.approx(c.amplitude, rel=1e-6)
        assert f.phase == pytest.approx(c.phase, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(-2500, 2500),
            st.floats(1.0, 200.0),
            st.floats(0.5, 20.0),
            st.floats(-3.0, 3.0),
        ),
        min_size=1,
        max_size=5,
    )
)
def test_exact_recovery_property(spec):
    freqs = sorted(f for f, *_ in spec)
    sep = 5.0 / (N * DWELL)
    assume(all(b - a > sep for a, b in zip(freqs, freqs[1:])))
    truth = [DampedSinusoid(*c) for c in spec]
    found = hlsvd_decompose(_signal(truth), HlsvdConfig(model_order=len(truth)))
    assert len(found) == len(truth)
    for c, f in _match(found, truth):
        assert abs(f.frequency - c.frequency) <= 1e-6 * max(abs(c.frequency), 1.0)
        assert f.damping == pytest.approx(c.damping, rel=1e-6)


def test_amplitudes_non_increasing():
    rng = np.random.default_rng(3)
    sig = FidSignal(rng.normal(size=N) + 1j * rng.normal(size=N), dwell_time=DWELL)
    amps = [c.amplitude for c in hlsvd_decompose(sig, HlsvdConfig(model_order=10))]
    assert all(a >= b for a, b in zip(amps, amps[1:]))


def test_default_rows_half_length():
    assert HlsvdConfig().rows_for(2048) == 1024
    assert HlsvdConfig(hankel_rows=100).rows_for(2048) == 100


def test_rank_deficient_signal_is_degenerate():
    sig = _signal([DampedSinusoid(100.0, 10.0, 1.0, 0.0)])
    with pytest.raises(DegenerateDecompositionError):
        hlsvd_decompose(sig, HlsvdConfig(model_order=4))
    with pytest.raises(DegenerateDecompositionError):
        hlsvd_decompose(FidSignal(np.zeros(N), dwell_time=DWELL))


def test_invalid_order():
    with pytest.raises(ValueError):
        HlsvdConfig(model_order=0)
    with pytest.raises(ValueError):
        HlsvdConfig(model_order=200).rows_for(256)


def test_subtract_empty_is_identity():
    sig = _signal([DampedSinusoid(100.0, 10.0, 1.0, 0.0)])
    assert subtract_components(sig, []) is sig


def test_subtract_removes_component():
    slow = DampedSinusoid(-500.0, 5.0, 3.0, 0.0)
    fast = DampedSinusoid(300.0, 150.0, 8.0, 1.0)
    sig = _signal([slow, fast])
    comps = hlsvd_decompose(sig, HlsvdConfig(model_order=2))
    picked = select_baseline_components(comps)
    assert len(picked) == 1 and picked[0].damping == pytest.approx(150.0)
    cleaned = subtract_components(sig, picked)
    np.testing.assert_allclose(cleaned.samples, _signal([slow]).samples, atol=1e-9)


def test_selection_rules():
    comps = [
        DampedSinusoid(0.0, 100.0, 1.0, 0.0),
        DampedSinusoid(10.0, -100.0, 1.0, 0.0),  # growing: never selected
        DampedSinusoid(20.0, 5.0, 1.0, 0.0),
    ]
    assert select_baseline_components(comps) == [comps[0]]
    banded = HlsvdConfig(baseline_freq_band=(15.0, 25.0))
    assert select_baseline_components(comps, banded) == [comps[0], comps[2]]
