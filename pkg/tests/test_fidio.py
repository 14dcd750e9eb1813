import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrsrepro.fidio import FidParseError, dumps_fid, loads_fid, read_fid, write_fid
from mrsrepro.signals import FidSignal, SyntheticCohortSpec, synthesize_cohort

finite = st.floats(allow_nan=False, allow_infinity=False)


def _same(a: FidSignal, b: FidSignal):
    assert a.samples.tobytes() == b.samples.tobytes()
    assert a.dwell_time == b.dwell_time
    assert (a.signal_id, a.voxel, a.animal_id, a.truth) == (b.signal_id, b.voxel, b.animal_id, b.truth)


def test_cohort_signal_roundtrip_bit_equal(tmp_path, ctx, basis, mm):
    sig = synthesize_cohort(SyntheticCohortSpec(n_signals_per_voxel=1), basis, mm, ctx)[0]
    assert sig.n_points == 2048
    path = write_fid(sig, tmp_path / "s.json")
    _same(read_fid(path), sig)


@settings(max_examples=200)
@given(
    st.lists(st.tuples(finite, finite), min_size=1, max_size=40),
    st.floats(min_value=1e-9, max_value=1.0),
    st.sampled_from([None, "Vox1", "Vox2"]),
)
def test_roundtrip_property(pairs, dwell, voxel):
    sig = FidSignal(
        [complex(a, b) for a, b in pairs], dwell_time=dwell,
        signal_id="x", voxel=voxel, animal_id="rat01", truth={"NAA": 1.5},
    )
    _same(loads_fid(dumps_fid(sig)), sig)


def test_negative_zero_preserved():
    sig = FidSignal([complex(-0.0, 0.0), complex(0.0, -0.0)])
    back = loads_fid(dumps_fid(sig))
    assert np.signbit(back.samples.real).tolist() == [True, False]
    assert np.signbit(back.samples.imag).tolist() == [False, True]


def _doc(**changes):
    doc = {"dwell_time_s": 0.001, "signal_id": "a", "voxel": "Vox1",
           "animal_id": "r", "samples": [[1, 0], [0.5, 0.5]]}
    doc.update(changes)
    return doc


def test_missing_dwell_time_names_field():
    doc = _doc()
    del doc["dwell_time_s"]
    with pytest.raises(FidParseError, match="dwell_time") as err:
        loads_fid(json.dumps(doc))
    assert err.value.field == "dwell_time_s"


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"dwell_time_s": -1}, "dwell_time_s"),
        ({"dwell_time_s": "fast"}, "dwell_time_s"),
        ({"voxel": "Vox9"}, "voxel"),
        ({"samples": []}, "samples"),
        ({"samples": [[1, 2, 3]]}, "samples"),
        ({"samples": [["a", 1]]}, "samples"),
        ({"truth": [1, 2]}, "truth"),
    ],
)
def test_malformed_fields(changes, field):
    with pytest.raises(FidParseError) as err:
        loads_fid(json.dumps(_doc(**changes)))
    assert err.value.field == field


def test_not_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json", encoding="utf-8")
    with pytest.raises(FidParseError) as err:
        read_fid(p)
    assert str(p) in str(err.value)
