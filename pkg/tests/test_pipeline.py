import numpy as np

from fiml import pipeline as pl
from fiml.channel import CaseConfig, grid_for


def test_labels_and_subsets():
    assert pl.case_label(550.0, "velocity-profile") == "re550-profile"
    assert pl.case_label(395.2, "scalar-cf") == "re395-cf"
    assert pl.leave_one_out(["a", "b", "c"]) == [["b", "c"], ["a", "c"], ["a", "b"]]


def test_samples_skip_dirichlet_rows(base550, case550, grid550):
    X, y = pl.samples_from_state(base550.state, np.ones(grid550.n), grid550, case550)
    assert X.shape == (grid550.n - 1, 4) and y.size == grid550.n - 1
    full = CaseConfig(re_tau=395.0, n=97, full_channel=True)
    g = grid_for(full)
    from fiml.channel import solve_forward

    st = solve_forward(np.ones(g.n), full, g).state
    X, _ = pl.samples_from_state(st, np.ones(g.n), g, full)
    assert X.shape[0] == g.n - 2


def test_training_set_pools_cases():
    twins = pl.run_twins([395.0, 550.0], CaseConfig(n=64))
    ts = pl.training_set(twins)
    assert sorted(set(ts.cases)) == ["re395-profile", "re550-profile"]
    assert ts.y.size == sum(t.grid.n - 1 for t in twins)
    part = ts.subset(ts.cases == "re395-profile")
    assert set(part.cases) == {"re395-profile"}


def test_bump_family(case550, grid550):
    b = pl.BumpFamily(amplitude=0.2)(grid550, case550)
    assert b.min() > 0.79 and b[0] > 0.99
