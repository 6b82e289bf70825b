"""Predictive solves with the network queried at every pseudo-time step."""
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import (
    CaseConfig,
    FlowState,
    Grid1D,
    PseudoTimeStepper,
    _assemble,
    grid_for,
    initial_state,
    residual_norms,
    skin_friction,
    solve_forward,
)
from .errors import ConfigurationError, ConvergenceError, FimlError
from .features import extract
from .inversion import Observation, profile_rms_error
from .nn import MlpNetwork


@dataclass(frozen=True)
class AugmentConfig:
    beta_lo: float = 0.0
    beta_hi: float = 2.0
    relaxation: float = 0.3
    beta_tol: float = 1e-6
    max_steps: Optional[int] = None  # None: 3x the case limit

    def __post_init__(self):
        if not self.beta_lo < self.beta_hi:
            raise ConfigurationError("beta_lo must be below beta_hi")
        if self.beta_lo < 0:
            raise ConfigurationError("beta_lo must be non-negative")
        if not 0.0 < self.relaxation <= 1.0:
            raise ConfigurationError("relaxation must lie in (0, 1]")
        if not self.beta_tol > 0:
            raise ConfigurationError("beta_tol must be positive")


@dataclass
class AugmentedRun:
    state: FlowState
    beta: np.ndarray
    history: list  # (iteration, momentum L2, SA L2, max |d beta|)
    converged_at: int
    nn_seconds: float
    nn_queries: int
    config: AugmentConfig = field(default_factory=AugmentConfig)

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def nn_seconds_per_query(self) -> float:
        return self.nn_seconds / self.nn_queries if self.nn_queries else 0.0


def _query(net, state, grid, cfg, lo, hi):
    table = extract(state, grid, cfg, active=net.features)
    raw = np.asarray(net.predict_table(table), dtype=float)
    if not np.all(np.isfinite(raw)):
        raise FimlError("network returned non-finite beta")
    return np.clip(raw, lo, hi)


def solve_augmented(net: MlpNetwork, cfg: CaseConfig, grid: Grid1D = None, options: AugmentConfig = None,
                    initial: FlowState = None) -> AugmentedRun:
    """Iterate flow and ``beta_hat = net(eta)`` to a self-consistent steady state.

    Each iteration advances the flow one implicit step with the current
    ``beta_hat``, extracts features from the new iterate, and relaxes
    ``beta_hat`` towards the clamped network output.
    """
    opt = options or AugmentConfig()
    grid = grid if grid is not None else grid_for(cfg)
    max_steps = opt.max_steps if opt.max_steps is not None else 3 * cfg.max_steps
    state = initial.copy() if initial is not None else initial_state(grid, cfg)
    beta = np.ones(grid.n)
    stepper = PseudoTimeStepper(grid, cfg)
    history = []
    nn_time = 0.0
    queries = 0
    dbeta = np.inf
    converged_at = -1
    polish_left = cfg.polish_steps
    for it in range(max_steps + cfg.polish_steps + 1):
        R, A, B, C, _ = _assemble(state, beta, grid, cfg)
        rm, rs, rt = residual_norms(R, grid, cfg)
        history.append((it, rm, rs, float(dbeta)))
        if not np.isfinite(rt):
            raise ConvergenceError(f"non-finite residual at iteration {it}", history)
        if converged_at < 0 and rt < cfg.tol and dbeta < opt.beta_tol:
            converged_at = it
            stepper.newton_limit()
        if converged_at >= 0:
            # beta_hat is frozen while the flow is polished
            if polish_left == 0:
                return AugmentedRun(state, beta, history, converged_at, nn_time, queries, opt)
            polish_left -= 1
            state = stepper.step(state, beta, R, A, B, C)
            continue
        if it >= max_steps:
            break
        state = stepper.step(state, beta, R, A, B, C)
        t0 = time.perf_counter()
        target = _query(net, state, grid, cfg, opt.beta_lo, opt.beta_hi)
        nn_time += time.perf_counter() - t0
        queries += 1
        new = (1.0 - opt.relaxation) * beta + opt.relaxation * target
        dbeta = float(np.max(np.abs(new - beta)))
        beta = np.clip(new, opt.beta_lo, opt.beta_hi)
    raise ConvergenceError(
        f"augmented solve did not converge in {max_steps} steps "
        f"(residual {history[-1][1]:.3e}/{history[-1][2]:.3e}, beta change {history[-1][3]:.3e})",
        history,
    )


# ---------------------------------------------------------------------------
# comparison against truth data


def truth_misfit(state, grid, cfg, truth: Sequence[Observation]) -> float:
    return float(sum(obs.misfit(state, grid, cfg)[0] for obs in truth))


def _profile_of(truth):
    for obs in truth:
        if obs.kind == "velocity-profile":
            return obs
    return None


def _as_list(truth):
    if isinstance(truth, Observation):
        return [truth]
    truth = list(truth)
    if not truth:
        raise ConfigurationError("truth needs at least one observation")
    return truth


@dataclass
class Comparison:
    cf_baseline: float
    cf_augmented: float
    misfit_baseline: float
    misfit_augmented: float
    profile_rms_baseline: Optional[float]
    profile_rms_augmented: Optional[float]
    iterations_baseline: int
    iterations_augmented: int
    nn_seconds_per_query: float
    cf_truth: Optional[float] = None

    @property
    def iteration_ratio(self) -> float:
        return self.iterations_augmented / max(self.iterations_baseline, 1)

    @property
    def misfit_reduction(self) -> float:
        if self.misfit_baseline == 0:
            return 0.0
        return 1.0 - self.misfit_augmented / self.misfit_baseline

    def summary(self) -> dict:
        d = dict(self.__dict__)
        d["iteration_ratio"] = self.iteration_ratio
        d["misfit_reduction"] = self.misfit_reduction
        return d


def compare_with_baseline(net: MlpNetwork, cfg: CaseConfig, truth, grid: Grid1D = None,
                          options: AugmentConfig = None) -> Comparison:
    """Baseline (``beta = 1``) and augmented solves scored against ``truth`` observations."""
    truth = _as_list(truth)
    grid = grid if grid is not None else grid_for(cfg)
    base = solve_forward(np.ones(grid.n), cfg, grid)
    aug = solve_augmented(net, cfg, grid, options)
    prof = _profile_of(truth)
    cf_truth = next((float(o.targets[0]) for o in truth if o.kind == "scalar-cf"), None)

    def rms(state):
        if prof is None:
            return None
        return profile_rms_error(prof.predict(state, grid, cfg)[0], prof.targets)

    return Comparison(
        cf_baseline=skin_friction(base.state, grid, cfg),
        cf_augmented=skin_friction(aug.state, grid, cfg),
        misfit_baseline=truth_misfit(base.state, grid, cfg, truth),
        misfit_augmented=truth_misfit(aug.state, grid, cfg, truth),
        profile_rms_baseline=rms(base.state),
        profile_rms_augmented=rms(aug.state),
        iterations_baseline=base.iterations,
        iterations_augmented=aug.iterations,
        nn_seconds_per_query=aug.nn_seconds_per_query,
        cf_truth=cf_truth,
    )


@dataclass
class EnsembleReport:
    cf: list
    misfits: list
    failures: list  # (member index, message)
    u_min: np.ndarray
    u_max: np.ndarray
    u_mean: np.ndarray
    y: np.ndarray
    cf_baseline: float
    misfit_baseline: Optional[float]
    members: list = field(default_factory=list)

    @property
    def cf_min(self) -> float:
        return float(min(self.cf))

    @property
    def cf_max(self) -> float:
        return float(max(self.cf))

    @property
    def cf_mean(self) -> float:
        return float(np.mean(self.cf))

    def summary(self) -> dict:
        return dict(
            members=self.members,
            cf=self.cf,
            cf_min=self.cf_min,
            cf_max=self.cf_max,
            cf_mean=self.cf_mean,
            cf_baseline=self.cf_baseline,
            misfits=self.misfits,
            misfit_baseline=self.misfit_baseline,
            failures=[dict(member=i, error=m) for i, m in self.failures],
        )


def ensemble_predict(nets: Sequence[MlpNetwork], cfg: CaseConfig, truth=None, grid: Grid1D = None,
                     options: AugmentConfig = None) -> EnsembleReport:
    """Augmented solve per network; failed members are recorded and skipped."""
    nets = list(nets)
    if len(nets) < 2:
        raise ConfigurationError("an ensemble needs at least two networks")
    truth = None if truth is None else _as_list(truth)
    grid = grid if grid is not None else grid_for(cfg)
    base = solve_forward(np.ones(grid.n), cfg, grid)
    runs, failures, members = [], [], []
    for i, net in enumerate(nets):
        try:
            runs.append(solve_augmented(net, cfg, grid, options))
            members.append(i)
        except FimlError as exc:
            failures.append((i, str(exc)))
    if len(runs) < 2:
        raise ConvergenceError(f"only {len(runs)} ensemble members converged: {failures}")
    U = np.array([r.state.u for r in runs])
    return EnsembleReport(
        cf=[skin_friction(r.state, grid, cfg) for r in runs],
        misfits=[truth_misfit(r.state, grid, cfg, truth) for r in runs] if truth else [],
        failures=failures,
        u_min=U.min(axis=0),
        u_max=U.max(axis=0),
        u_mean=U.mean(axis=0),
        y=grid.y.copy(),
        cf_baseline=skin_friction(base.state, grid, cfg),
        misfit_baseline=truth_misfit(base.state, grid, cfg, truth) if truth else None,
        members=members,
    )
