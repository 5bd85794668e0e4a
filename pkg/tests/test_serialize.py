import json
import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from anosov_lab.serialize import (
    config_hash,
    csv_text,
    dumps,
    format_float,
    read_grid_binary,
    to_plain,
    write_grid_binary,
)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip(x):
    assert float(json.loads(format_float(x))) == x


def test_special_floats_are_strings():
    assert json.loads(dumps({"a": math.nan, "b": -math.inf}))["b"] == "-inf"


def test_dumps_is_canonical():
    a = dumps({"z": 1, "a": [1.0, 2.5], "m": {"y": np.float64(0.1), "x": (1, 2)}})
    b = dumps({"m": {"x": [1, 2], "y": 0.1}, "a": [1.0, 2.5], "z": 1})
    assert a == b
    assert json.loads(a)["m"]["y"] == 0.1
    assert to_plain(np.array([1, 2])) == [1, 2] and to_plain(np.bool_(True)) is True


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [2]}) == config_hash({"b": [2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_csv_uses_full_precision():
    text = csv_text(["x", "y"], [[0.1, "s"], [1 / 3, 2]])
    assert text.splitlines()[2] == "0.33333333333333331,2"


def test_grid_binary_round_trip_and_layout(tmp_path):
    rng = np.random.default_rng(0)
    h = rng.standard_normal((4, 4, 4, 3))
    path = tmp_path / "h.bin"
    write_grid_binary(path, h, 3)
    assert np.array_equal(read_grid_binary(path), h)
    raw = np.frombuffer(path.read_bytes()[24:], dtype="<f8")
    # first coordinate index varies fastest within a component
    assert raw[1] == h[1, 0, 0, 0] and raw[4] == h[0, 1, 0, 0] and raw[64] == h[0, 0, 0, 1]
    scalar = rng.standard_normal((8, 8))
    write_grid_binary(path, scalar, 2)
    assert np.array_equal(read_grid_binary(path)[..., 0], scalar)
