"""Regularised field inversion of the production multiplier.

Objective::

    J(beta) = sum_j w_j (G_j,exp - G_j(beta))**2 + lam * sum_n (beta_n - 1)**2

with ``G`` either the skin-friction coefficient (one datum) or the velocity
at a set of wall-normal locations.  Gradients come from the discrete adjoint.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adjoint
from .channel import (
    CaseConfig,
    FlowState,
    Grid1D,
    bulk_velocity,
    grid_for,
    skin_friction,
    solve_forward,
    wall_gradient_weights,
    wall_shear_stress,
)
from .errors import ConfigurationError, DegenerateStateError
from .optimize import LbfgsOptions, lbfgs

SCALAR_CF = "scalar-cf"
VELOCITY_PROFILE = "velocity-profile"
KINDS = (SCALAR_CF, VELOCITY_PROFILE)
DEFAULT_REL_SIGMA = 0.01


@dataclass(frozen=True, eq=False)
class Observation:
    """Truth data ``G_exp`` with per-datum weights.

    Default weights express a relative observational uncertainty
    ``rel_sigma``: ``1 / (rel_sigma Cf)**2`` for the scalar kind and
    ``1 / (rel_sigma max|u|)**2`` per profile datum.
    """

    kind: str
    targets: np.ndarray
    weights: np.ndarray
    locations: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown observation kind {self.kind!r}")
        t = np.atleast_1d(np.asarray(self.targets, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if t.size == 0:
            raise ConfigurationError("observation needs at least one datum")
        if w.shape != t.shape:
            raise ConfigurationError("weights and targets differ in shape")
        if np.any(w < 0) or not np.any(w > 0):
            raise ConfigurationError("weights must be non-negative and not all zero")
        if not np.all(np.isfinite(t)):
            raise ConfigurationError("targets must be finite")
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "weights", w)
        if self.kind == SCALAR_CF:
            if t.size != 1:
                raise ConfigurationError("scalar observation carries exactly one value")
        else:
            loc = np.asarray(self.locations, dtype=float)
            if loc.shape != t.shape:
                raise ConfigurationError("profile locations and targets differ in shape")
            object.__setattr__(self, "locations", loc)

    @classmethod
    def scalar_cf(cls, cf, weight=None, rel_sigma=DEFAULT_REL_SIGMA):
        w = 1.0 / (rel_sigma * cf) ** 2 if weight is None else weight
        return cls(SCALAR_CF, np.array([cf]), np.array([w]))

    @classmethod
    def velocity_profile(cls, y, u, weights=None, rel_sigma=DEFAULT_REL_SIGMA):
        u = np.asarray(u, dtype=float)
        if weights is None:
            weights = np.full(u.shape, 1.0 / (rel_sigma * np.max(np.abs(u))) ** 2)
        return cls(VELOCITY_PROFILE, u, np.asarray(weights, dtype=float), np.asarray(y, dtype=float))

    @property
    def size(self) -> int:
        return self.targets.size

    def scaled(self, factor) -> "Observation":
        return Observation(self.kind, self.targets, self.weights * factor, self.locations)

    def predict(self, state: FlowState, grid: Grid1D, cfg: CaseConfig):
        """Model outputs ``G`` and their Jacobian w.r.t. ``u``, shape ``(N_d, n)``."""
        n = grid.n
        if self.kind == SCALAR_CF:
            ub = bulk_velocity(state, grid)
            if ub == 0:
                raise DegenerateStateError("bulk velocity is zero")
            tw = wall_shear_stress(state, grid, cfg)
            cf = 2.0 * tw / ub**2
            dtw = np.zeros(n)
            dtw[:3] = cfg.viscosity * wall_gradient_weights(grid.y)
            dub = trapezoid_weights(grid.y) / (grid.y[-1] - grid.y[0])
            dg = 2.0 * dtw / ub**2 - 4.0 * tw / ub**3 * dub
            return np.array([cf]), dg[None, :]
        M = interpolation_matrix(grid.y, self.locations)
        return M @ state.u, M

    def misfit(self, state: FlowState, grid: Grid1D, cfg: CaseConfig):
        """Weighted squared misfit and its gradient w.r.t. ``u``."""
        G, dG = self.predict(state, grid, cfg)
        e = self.targets - G
        return float(np.sum(self.weights * e**2)), -2.0 * (self.weights * e) @ dG


def trapezoid_weights(y):
    w = np.zeros(y.size)
    h = np.diff(y)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def interpolation_matrix(y, locations):
    """Linear interpolation from nodes ``y`` to ``locations``."""
    loc = np.asarray(locations, dtype=float)
    if np.any(loc < y[0]) or np.any(loc > y[-1]):
        raise ConfigurationError("profile locations fall outside the grid")
    j = np.clip(np.searchsorted(y, loc, side="right") - 1, 0, y.size - 2)
    t = (loc - y[j]) / (y[j + 1] - y[j])
    M = np.zeros((loc.size, y.size))
    rows = np.arange(loc.size)
    M[rows, j] = 1.0 - t
    M[rows, j + 1] += t
    return M


@dataclass
class InversionConfig:
    lam: float = 4e-4
    lbfgs_memory: int = 10
    max_iterations: int = 200
    gtol: float = 1e-10
    gtol_rel: float = 1e-7
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    first_step: float = 0.1

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigurationError("lam must be non-negative")

    def lbfgs_options(self) -> LbfgsOptions:
        return LbfgsOptions(
            memory=self.lbfgs_memory, max_iterations=self.max_iterations, gtol=self.gtol,
            gtol_rel=self.gtol_rel, c1=self.c1, shrink=self.shrink,
            max_backtracks=self.max_backtracks, first_step=self.first_step,
        )


@dataclass
class Evaluation:
    value: float
    misfit: float
    reg: float
    grad: np.ndarray
    state: FlowState
    production: np.ndarray


class InverseProblem:
    """Objective and adjoint gradient over ``beta`` with warm-started forward solves."""

    def __init__(self, obs: Observation, case: CaseConfig, inv: InversionConfig, grid: Grid1D = None,
                 initial: FlowState = None):
        self.obs = obs
        self.case = case
        self.inv = inv
        self.grid = grid if grid is not None else grid_for(case)
        self._warm = initial
        self.n_forward = 0
        self.last = None

    def solve(self, beta):
        res = solve_forward(beta, self.case, self.grid, initial=self._warm)
        self.n_forward += 1
        self._warm = res.state
        return res

    def evaluate(self, beta, need_grad=True) -> Evaluation:
        beta = np.asarray(beta, dtype=float)
        res = self.solve(beta)
        misfit, dmis_du = self.obs.misfit(res.state, self.grid, self.case)
        reg = self.inv.lam * float(np.sum((beta - 1.0) ** 2))
        grad = None
        if need_grad:
            J, P = adjoint.assemble_jacobian(res.state, beta, self.grid, self.case)
            dJdU = np.zeros((self.grid.n, 2))
            dJdU[:, 0] = dmis_du
            adj = adjoint.solve_adjoint(J, dJdU)
            grad = adjoint.gradient(adj, P, 2.0 * self.inv.lam * (beta - 1.0))
        self.last = Evaluation(misfit + reg, misfit, reg, grad, res.state, res.production)
        return self.last

    def fun_grad(self, beta):
        ev = self.evaluate(beta)
        return ev.value, ev.grad


def objective(beta, obs: Observation, case: CaseConfig, inv: InversionConfig = None, grid=None):
    """Return ``(value, data_misfit, reg_term)`` at ``beta``."""
    inv = inv or InversionConfig()
    ev = InverseProblem(obs, case, inv, grid).evaluate(beta, need_grad=False)
    return ev.value, ev.misfit, ev.reg


@dataclass
class InversionResult:
    beta: np.ndarray
    state: FlowState
    value: float
    misfit: float
    reg: float
    initial_misfit: float
    iterations: int
    status: str
    history: list = field(default_factory=list)

    @property
    def misfit_reduction(self) -> float:
        if self.initial_misfit == 0:
            return 1.0 if self.misfit == 0 else 0.0
        return 1.0 - self.misfit / self.initial_misfit


def minimize(obs: Observation, case: CaseConfig, inv: InversionConfig = None, grid: Grid1D = None,
             beta0=None) -> InversionResult:
    """L-BFGS minimisation of the regularised objective from ``beta = 1``."""
    inv = inv or InversionConfig()
    problem = InverseProblem(obs, case, inv, grid)
    n = problem.grid.n
    x0 = np.ones(n) if beta0 is None else np.asarray(beta0, dtype=float)
    first = problem.evaluate(x0, need_grad=False)

    def cb(entry, x):
        # the accepted iterate is always the most recent evaluation
        entry["misfit"] = problem.last.misfit
        entry["reg"] = problem.last.reg

    out = lbfgs(problem.fun_grad, x0, inv.lbfgs_options(), callback=cb)
    final = problem.evaluate(out.x, need_grad=False)
    return InversionResult(
        beta=out.x, state=final.state, value=final.value, misfit=final.misfit, reg=final.reg,
        initial_misfit=first.misfit, iterations=out.iterations, status=out.status, history=out.history,
    )


# ---------------------------------------------------------------------------
# twin experiments


def gaussian_bump(grid: Grid1D, case: CaseConfig, amplitude=0.3, center=30.0, width=15.0):
    """``1 - amplitude * exp(-((y+ - center) / width)**2)`` on the nominal wall units."""
    yp = grid.d * case.u_tau / case.viscosity
    return 1.0 - amplitude * np.exp(-(((yp - center) / width) ** 2))


def synthetic_observation(kind, state: FlowState, grid: Grid1D, case: CaseConfig,
                          rel_sigma=DEFAULT_REL_SIGMA) -> Observation:
    if kind == SCALAR_CF:
        return Observation.scalar_cf(skin_friction(state, grid, case), rel_sigma=rel_sigma)
    if kind == VELOCITY_PROFILE:
        return Observation.velocity_profile(grid.y.copy(), state.u.copy(), rel_sigma=rel_sigma)
    raise ConfigurationError(f"unknown observation kind {kind!r}")


def profile_rms_error(u, u_ref) -> float:
    """Relative RMS difference ``||u - u_ref|| / ||u_ref||``."""
    u_ref = np.asarray(u_ref, dtype=float)
    return float(np.linalg.norm(np.asarray(u) - u_ref) / np.linalg.norm(u_ref))


def sensitivity_mask(grad, fraction=0.01):
    g = np.abs(np.asarray(grad))
    gmax = g.max()
    if gmax == 0:
        return np.zeros(g.shape, dtype=bool)
    return g > fraction * gmax


@dataclass
class TwinReport:
    kind: str
    beta_true: np.ndarray
    beta_opt: np.ndarray
    state_true: FlowState
    state_opt: FlowState
    observation: Observation
    inversion: InversionResult
    cf_true: float
    cf_opt: float
    sensitive: np.ndarray

    @property
    def misfit_reduction(self) -> float:
        return self.inversion.misfit_reduction

    @property
    def cf_rel_error(self) -> float:
        return abs(self.cf_opt - self.cf_true) / abs(self.cf_true)

    @property
    def u_rms_error(self) -> float:
        return profile_rms_error(self.state_opt.u, self.state_true.u)

    @property
    def beta_rms_error_sensitive(self) -> float:
        m = self.sensitive
        if not np.any(m):
            return 0.0
        return float(np.sqrt(np.mean((self.beta_opt[m] - self.beta_true[m]) ** 2)))

    def summary(self) -> dict:
        return dict(
            kind=self.kind,
            iterations=self.inversion.iterations,
            status=self.inversion.status,
            initial_misfit=self.inversion.initial_misfit,
            final_misfit=self.inversion.misfit,
            misfit_reduction=self.misfit_reduction,
            reg=self.inversion.reg,
            cf_true=self.cf_true,
            cf_opt=self.cf_opt,
            cf_rel_error=self.cf_rel_error,
            u_rms_error=self.u_rms_error,
            beta_rms_error_sensitive=self.beta_rms_error_sensitive,
            sensitive_nodes=int(np.sum(self.sensitive)),
        )


def twin_experiment(beta_true, kind, case: CaseConfig, inv: InversionConfig = None,
                    grid: Grid1D = None, rel_sigma=DEFAULT_REL_SIGMA) -> TwinReport:
    """Generate synthetic data at ``beta_true`` and invert it starting from ``beta = 1``."""
    inv = inv or InversionConfig()
    grid = grid if grid is not None else grid_for(case)
    beta_true = np.asarray(beta_true, dtype=float)
    if not np.all(np.isfinite(beta_true)):
        raise ConfigurationError("beta_true must be finite")
    truth = solve_forward(beta_true, case, grid)
    obs = synthetic_observation(kind, truth.state, grid, case, rel_sigma)
    probe = InverseProblem(obs, case, inv, grid).evaluate(np.ones(grid.n))
    result = minimize(obs, case, inv, grid)
    return TwinReport(
        kind=kind,
        beta_true=beta_true,
        beta_opt=result.beta,
        state_true=truth.state,
        state_opt=result.state,
        observation=obs,
        inversion=result,
        cf_true=skin_friction(truth.state, grid, case),
        cf_opt=skin_friction(result.state, grid, case),
        sensitive=sensitivity_mask(probe.grad),
    )


@dataclass
class EquivalenceReport:
    scalar: TwinReport
    profile: TwinReport
    u_rms_difference: float
    beta_rms_difference: float

    def summary(self) -> dict:
        return dict(
            scalar=self.scalar.summary(),
            profile=self.profile.summary(),
            scalar_misfit_reduction=self.scalar.misfit_reduction,
            profile_misfit_reduction=self.profile.misfit_reduction,
            u_rms_difference=self.u_rms_difference,
            beta_rms_difference_sensitive=self.beta_rms_difference,
        )


def objective_equivalence_study(beta_true, case: CaseConfig, inv: InversionConfig = None,
                                grid: Grid1D = None) -> EquivalenceReport:
    """Invert the same twin case with scalar and profile data and compare recoveries."""
    grid = grid if grid is not None else grid_for(case)
    sc = twin_experiment(beta_true, SCALAR_CF, case, inv, grid)
    pr = twin_experiment(beta_true, VELOCITY_PROFILE, case, inv, grid)
    m = sc.sensitive | pr.sensitive
    db = float(np.sqrt(np.mean((sc.beta_opt[m] - pr.beta_opt[m]) ** 2))) if np.any(m) else 0.0
    return EquivalenceReport(sc, pr, profile_rms_error(sc.state_opt.u, pr.state_opt.u), db)


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradcheckReport:
    kind: str
    nodes: np.ndarray
    adjoint: np.ndarray
    fd: np.ndarray

    @property
    def rel_err(self) -> np.ndarray:
        return np.abs(self.fd - self.adjoint) / np.maximum(np.abs(self.adjoint), np.finfo(float).tiny)

    @property
    def max_rel_err(self) -> float:
        return float(np.max(self.rel_err)) if self.nodes.size else 0.0


def gradcheck(obs: Observation, case: CaseConfig, inv: InversionConfig = None, grid: Grid1D = None,
              beta=None, nodes=None, n_nodes=8, step=1e-4, seed=0) -> GradcheckReport:
    """Adjoint gradient against central differences of fully re-converged objectives.

    Without explicit ``nodes``, ``n_nodes`` are drawn (seeded) from the
    high-sensitivity region of the adjoint gradient at ``beta``.
    """
    inv = inv or InversionConfig()
    problem = InverseProblem(obs, case, inv, grid)
    grid = problem.grid
    beta = np.ones(grid.n) if beta is None else np.asarray(beta, dtype=float)
    base = problem.evaluate(beta)
    g = base.grad
    if nodes is None:
        cand = np.flatnonzero(sensitivity_mask(g))
        rng = np.random.default_rng(seed)
        nodes = np.sort(rng.choice(cand, size=min(n_nodes, cand.size), replace=False))
    nodes = np.asarray(nodes, dtype=int)
    fd = np.empty(nodes.size)
    for k, i in enumerate(nodes):
        e = np.zeros(grid.n)
        e[i] = step
        problem._warm = base.state
        fp = problem.evaluate(beta + e, need_grad=False).value
        problem._warm = base.state
        fm = problem.evaluate(beta - e, need_grad=False).value
        fd[k] = (fp - fm) / (2.0 * step)
    return GradcheckReport(obs.kind, nodes, g[nodes].copy(), fd)
