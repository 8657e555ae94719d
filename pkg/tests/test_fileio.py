import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oudrift import fileio
from oudrift.errors import ConfigError, RankConditionError


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fileio.fmt(x)) == x


def test_model_forms():
    m = fileio.model_from_dict({"F": [[-1, 0], [0, -2]]})
    assert np.array_equal(m.A, np.eye(2))
    flat = fileio.model_from_dict({"F": [-1, 1, 0, -2], "A": [0, 1], "r": 1})
    assert flat.F.shape == (2, 2) and flat.A.shape == (2, 1)
    car = fileio.model_from_dict({"car": {"alphas": [-3, -2], "sigma": 0.5}, "Y0": [1, 0]})
    assert car.F.tolist() == [[0, 1], [-2, -3]] and car.Y0.tolist() == [1, 0]
    shaped = fileio.model_from_dict({"F": [1, 2, 3, 4, 5, 6, 7, 8, 9], "F_shape": [3, 3]})
    assert shaped.F[1, 0] == 4
    again = fileio.model_from_dict(fileio.model_to_dict(car))
    assert np.array_equal(again.A, car.A)


@pytest.mark.parametrize(
    "spec",
    [
        {"G": [[1]]},
        {"A": [[1]]},
        {"F": [1, 2, 3]},
        {"F": [["a"]]},
        {"F": [[1, 0], [0, 1]], "car": {"alphas": [1]}},
        {"car": {"sigma": 1}},
        {"F": [[1, 0], [0, 1]], "A": [[1, 0, 0]]},
        {"F": [[-1.0]], "Y0": [1, 2]},
    ],
)
def test_model_errors(spec):
    with pytest.raises(ConfigError):
        fileio.model_from_dict(spec)


def test_rank_failure_propagates():
    with pytest.raises(RankConditionError):
        fileio.model_from_dict({"F": [[1, 0], [0, 2]], "A": [[1], [0]]})
    m = fileio.model_from_dict({"F": [[1, 0], [0, 2]], "A": [[1], [0]], "check_rank": False})
    assert m.r == 1


def test_read_json_errors(tmp_path):
    with pytest.raises(ConfigError):
        fileio.read_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    with pytest.raises(ConfigError):
        fileio.read_json(bad)
    good = tmp_path / "m.json"
    good.write_text(json.dumps({"F": [[-1]]}))
    assert fileio.load_model(good).p == 1


def test_path_csv_round_trip(tmp_path):
    t = np.arange(5) * 0.1
    y = np.random.default_rng(0).standard_normal((5, 2))
    target = tmp_path / "p.csv"
    fileio.write_path_csv(target, t, y)
    assert target.read_text().splitlines()[0] == "t,y1,y2"
    t2, y2, dt = fileio.read_path_csv(target)
    assert np.array_equal(y2, y) and dt == pytest.approx(0.1)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "time,y1\n0,1\n1,2\n",
        "t,y1\n0,1\n",
        "t,y1\n0,1\n0.1,x\n",
        "t,y1\n0,1\n0.1,nan\n",
        "t,y1\n0,1\n0,2\n",
        "t,y1\n0,1\n0.1,2\n0.3,3\n",
    ],
)
def test_path_csv_rejects(text):
    with pytest.raises(ConfigError):
        fileio.read_path_csv(io.StringIO(text))


def test_records_csv(tmp_path):
    target = tmp_path / "r.csv"
    fileio.write_records_csv(target, [(25.0, 7, "error_fro", 0.1)])
    assert target.read_text() == "T,seed,stat_name,value\n25,7,error_fro,0.10000000000000001\n"
