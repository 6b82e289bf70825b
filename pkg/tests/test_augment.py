import numpy as np
import pytest

from fiml import augment as aug
from fiml import nn
from fiml import pipeline as pl
from fiml.channel import CaseConfig, grid_for, skin_friction, solve_forward
from fiml.errors import ConfigurationError, ConvergenceError


@pytest.fixture(scope="module")
def net550():
    tpl = CaseConfig(n=64)
    twins = pl.run_twins([550.0], tpl)
    return nn.train(pl.training_set(twins), nn.TrainConfig(hidden=(20, 20))).network, twins[0]


def test_output_clamped_to_bounds(case550, grid550):
    run = aug.solve_augmented(nn.constant_network(5.0), case550, grid550)
    # relaxation approaches the clamp geometrically; stop once |d beta| < beta_tol
    assert np.all(run.beta <= 2.0) and np.all(2.0 - run.beta < 1e-5)
    ref = solve_forward(run.beta, case550, grid550).state
    assert np.allclose(run.state.u, ref.u, rtol=1e-9)


def test_narrow_bounds_respected(case550, grid550):
    run = aug.solve_augmented(nn.constant_network(0.1), case550, grid550, aug.AugmentConfig(beta_lo=0.8, beta_hi=1.2))
    assert np.all(run.beta >= 0.8) and np.all(run.beta - 0.8 < 1e-5)


def test_identity_network_matches_baseline(base550, case550, grid550):
    run = aug.solve_augmented(nn.constant_network(1.0), case550, grid550)
    assert np.max(np.abs(run.state.u - base550.state.u)) <= case550.tol * np.max(base550.state.u)
    assert run.nn_queries > 0 and run.nn_seconds_per_query > 0


def test_training_condition_recovers_truth_cf(net550):
    net, twin = net550
    run = aug.solve_augmented(net, twin.case, twin.grid)
    cf = skin_friction(run.state, twin.grid, twin.case)
    assert abs(cf / twin.report.cf_true - 1) < 0.01


def test_repeat_runs_identical(net550, case550, grid550):
    net = net550[0]
    a = aug.solve_augmented(net, case550, grid550)
    b = aug.solve_augmented(net, case550, grid550)
    assert a.history == b.history
    assert np.array_equal(a.beta, b.beta)


def test_non_convergence_reports_history(net550, case550, grid550):
    with pytest.raises(ConvergenceError) as exc:
        aug.solve_augmented(net550[0], case550, grid550, aug.AugmentConfig(max_steps=5))
    assert len(exc.value.history) == 6
    assert len(exc.value.history[-1]) == 4


def test_non_degradation_at_baseline_truth(net550, case550, grid550):
    truth = pl.truth_observations(case550, np.ones(grid550.n), grid550)
    cmp = aug.compare_with_baseline(net550[0], case550, truth, grid550)
    assert cmp.misfit_baseline == pytest.approx(0.0, abs=1e-12)
    assert abs(cmp.cf_augmented / cmp.cf_baseline - 1) < 0.01
    s = cmp.summary()
    assert {"iteration_ratio", "misfit_reduction", "nn_seconds_per_query"} <= set(s)


def test_ensemble_rules(net550, case550, grid550):
    with pytest.raises(ConfigurationError):
        aug.ensemble_predict([net550[0]], case550, grid=grid550)
    rep = aug.ensemble_predict([net550[0], net550[0].copy()], case550, grid=grid550)
    assert np.array_equal(rep.u_min, rep.u_max)
    assert rep.cf_min == rep.cf_max and rep.misfits == []


def test_ensemble_records_failures(net550, case550, grid550):
    bad = nn.constant_network(np.nan)
    rep = aug.ensemble_predict([net550[0], bad, nn.constant_network(1.0)], case550, grid=grid550)
    assert [i for i, _ in rep.failures] == [1]
    assert rep.members == [0, 2]
    with pytest.raises(ConvergenceError):
        aug.ensemble_predict([bad, bad], case550, grid=grid550)


def test_config_validation():
    for bad in (dict(beta_lo=2.0, beta_hi=1.0), dict(beta_lo=-1.0), dict(relaxation=0.0), dict(beta_tol=0.0)):
        with pytest.raises(ConfigurationError):
            aug.AugmentConfig(**bad)
