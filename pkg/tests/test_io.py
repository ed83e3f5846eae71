import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_stirep.io import read_csv, round_sig, write_csv, write_json, write_meta


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_round_sig_is_idempotent(x):
    once = round_sig(x)
    assert round_sig(once) == once
    assert once == pytest.approx(x, rel=1e-11, abs=0)


def test_round_sig_handles_containers_and_numpy():
    out = round_sig({"a": np.float64(1 / 3), "b": [np.int64(2), np.bool_(True)], "c": math.inf, "d": np.arange(2.0)})
    assert out == {"a": 0.333333333333, "b": [2, True], "c": None, "d": [0.0, 1.0]}
    json.dumps(out)


def test_csv_round_trip(tmp_path):
    x = np.linspace(0, 1, 7) / 3
    write_csv(tmp_path / "a.csv", ["x", "y"], [x, x**2])
    back = read_csv(tmp_path / "a.csv")
    assert np.allclose(back["x"], x, rtol=1e-14) and np.allclose(back["y"], x**2, rtol=1e-14)
    assert "\r" not in (tmp_path / "a.csv").read_text()


def test_csv_rejects_ragged_columns(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", ["x", "y"], [[1, 2], [1]])


def test_json_is_sorted_and_stable(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1.0, "a": 2.0})
    first = (tmp_path / "a.json").read_bytes()
    write_json(tmp_path / "a.json", {"a": 2.0, "b": 1.0})
    assert (tmp_path / "a.json").read_bytes() == first
    assert first.index(b'"a"') < first.index(b'"b"')


def test_meta_sidecar(tmp_path):
    meta = json.loads(write_meta(tmp_path / "x.meta.json", files=["f"]).read_text())
    assert meta["files"] == ["f"] and "created_utc" in meta and "package_version" in meta
