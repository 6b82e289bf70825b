import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiml import io
from fiml.channel import CaseConfig
from fiml.errors import ConfigurationError, ParseError
from fiml.nn import TrainingSet


def test_plus_units_conversion(tmp_path):
    case = CaseConfig(re_tau=550.0, h=2.0)
    p = tmp_path / "p.csv"
    p.write_text("y_plus,u_plus\n1.0,1.0\n100.0,16.5\n")
    ds = io.ingest_profile(p, "plus", case)
    assert np.allclose(ds.u, [1.0 * case.u_tau, 16.5 * case.u_tau])
    assert np.allclose(ds.y, np.array([1.0, 100.0]) * case.viscosity / case.u_tau)


def test_descending_y_reports_line(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("y,u\n0.0,0.0\n0.2,5.0\n0.1,6.0\n0.3,7.0\n")
    with pytest.raises(ParseError) as exc:
        io.ingest_profile(p)
    assert exc.value.line == 4 and "line 4" in str(exc.value)


def test_missing_column_and_non_finite(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("y,v\n0.0,1.0\n")
    with pytest.raises(ParseError, match="'u'"):
        io.ingest_profile(p)
    p.write_text("y,u\n0.0,1.0\n0.5,nan\n")
    with pytest.raises(ParseError, match="line 3"):
        io.ingest_profile(p)
    p.write_text("y,u\n0.0,abc\n")
    with pytest.raises(ParseError, match="line 2"):
        io.ingest_profile(p)
    with pytest.raises(ConfigurationError):
        io.ingest_profile(p, "plus")


def test_scalar_records(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("label,re_tau,cf\nA,550,0.0053\nB,1000,0.0046\n")
    ds = io.ingest_scalars(p, provenance="test")
    assert ds.labels == ("A", "B") and np.allclose(ds.cf, [0.0053, 0.0046])
    p.write_text("label,re_tau,cf\nA,-5,0.0053\n")
    with pytest.raises(ParseError, match="line 2"):
        io.ingest_scalars(p)


def test_profile_round_trip(tmp_path):
    case = CaseConfig(re_tau=395.0)
    y = np.linspace(0.01, 1.0, 9)
    u = 3 + np.sqrt(y)
    for units in ("physical", "plus"):
        p = io.write_profile(tmp_path / f"{units}.csv", y, u, units, case)
        ds = io.ingest_profile(p, units, case)
        assert np.allclose(ds.y, y, rtol=1e-14) and np.allclose(ds.u, u, rtol=1e-14)


def test_training_set_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ts = TrainingSet.from_samples(rng.random((10, 2)), rng.random(10), ("chi", "tau_ratio"),
                                  np.array(["a"] * 5 + ["b"] * 5))
    p = io.write_training_set(tmp_path / "t.csv", ts)
    X, y, names, cases = io.read_training_set(p)
    assert names == ts.names and np.array_equal(X, ts.X) and np.array_equal(y, ts.y)
    assert list(cases) == list(ts.cases)


def test_json_handles_numpy(tmp_path):
    p = io.write_json(tmp_path / "a.json", dict(b=np.float64(1.5), a=np.arange(3), c=np.bool_(True), d=np.nan))
    assert io.read_json(p) == dict(a=[0, 1, 2], b=1.5, c=True, d=None)
    (tmp_path / "bad.json").write_text("{\n  'x'\n")
    with pytest.raises(ParseError, match="line 2"):
        io.read_json(tmp_path / "bad.json")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_floats_round_trip_exactly(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("csv") / "v.csv"
    io.write_csv(p, ("v",), ([v] for v in values))
    _, rows = io.read_csv(p)
    assert [float(r[0]) for r in rows] == values
