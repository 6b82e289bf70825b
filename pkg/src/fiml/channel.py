"""Fully developed turbulent channel flow closed with the (augmented) SA model.

Units: density is one, forcing is the streamwise pressure gradient per unit
density.  Convergence is measured on the cell-integrated residual
non-dimensionalised by the nominal friction velocity ``u_tau = Re_tau nu / h``
and ``h``: momentum rows ``R vol / u_tau**2``, SA rows ``R vol / (u_tau**2 h)``,
Dirichlet rows ``u / u_tau`` and ``nt / (u_tau h)``.

Discretisation is cell-centred finite volume on wall-normal nodes with faces
at node midpoints.  The half channel ends in a zero-flux symmetry half-cell at
``y = h``; the full channel carries a second wall at ``y = 2h``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .closure import SAConstants, eddy_viscosity
from .errors import ConfigurationError, ConvergenceError, DegenerateStateError, NumericalFailure


@dataclass(frozen=True)
class CaseConfig:
    re_tau: float = 550.0
    nu: Optional[float] = None  # None: chosen so that the nominal u_tau is 1
    h: float = 1.0
    n: int = 97
    stretch: float = 80.0
    full_channel: bool = False
    dpdx: Optional[float] = None  # None: -u_tau**2 / h
    laminar: bool = False
    tol: float = 1e-10
    max_steps: int = 400
    cfl0: float = 1.0
    cfl_max: float = 1e14
    polish_steps: int = 1
    ser_reference: float = 0.1
    cfl_growth: float = 1.2  # geometric ramp on top of SER while the residual is not jumping
    cfl_backoff: float = 2.0
    nt_init_ratio: float = 3.0
    sa: SAConstants = field(default_factory=SAConstants)

    def __post_init__(self):
        if not self.re_tau > 0:
            raise ConfigurationError(f"re_tau must be positive, got {self.re_tau}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if self.nu is not None and not self.nu > 0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}")
        if not self.h > 0:
            raise ConfigurationError(f"h must be positive, got {self.h}")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be at least 1")

    @property
    def viscosity(self) -> float:
        return self.nu if self.nu is not None else self.h / self.re_tau

    @property
    def u_tau(self) -> float:
        """Nominal friction velocity implied by ``re_tau``."""
        return self.re_tau * self.viscosity / self.h

    @property
    def forcing(self) -> float:
        if self.dpdx is not None:
            return float(self.dpdx)
        return -self.u_tau**2 / self.h

    def sa_tuple(self):
        c = self.sa
        return np.array([c.cb1, c.sigma, c.cb2, c.kappa, c.cw1, c.cw2, c.cw3, c.cv1, c.r_clip, c.omega_clip])


@dataclass(frozen=True, eq=False)
class Grid1D:
    y: np.ndarray
    h: float
    full_channel: bool = False

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or y.size < 3:
            raise ConfigurationError("grid needs at least three nodes")
        if np.any(np.diff(y) <= 0):
            raise ConfigurationError("grid coordinates must be strictly increasing")
        object.__setattr__(self, "y", y)
        top = 2.0 * self.h if self.full_channel else self.h
        d = np.minimum(y, top - y) if self.full_channel else y.copy()
        object.__setattr__(self, "d", d)
        hf = np.diff(y)
        object.__setattr__(self, "hf", hf)
        vol = np.zeros(y.size)
        vol[1:-1] = 0.5 * (y[2:] - y[:-2])
        vol[-1] = 0.5 * hf[-1]
        object.__setattr__(self, "vol", vol)
        st = np.zeros((y.size, 3))
        h1 = hf[:-1]
        h2 = hf[1:]
        st[1:-1, 0] = -h2 / (h1 * (h1 + h2))
        st[1:-1, 1] = (h2 - h1) / (h1 * h2)
        st[1:-1, 2] = h1 / (h2 * (h1 + h2))
        # symmetry node: du/dy = 0 by construction (st row stays zero)
        object.__setattr__(self, "stencil", st)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def symmetric(self) -> bool:
        return not self.full_channel

    def ddy(self, f):
        """Second-order nodal derivative; one-sided at end nodes unless symmetric."""
        f = np.asarray(f, dtype=float)
        st = self.stencil
        out = np.zeros_like(f)
        out[1:-1] = st[1:-1, 0] * f[:-2] + st[1:-1, 1] * f[1:-1] + st[1:-1, 2] * f[2:]
        out[0] = wall_gradient(f, self.y)
        if self.full_channel:
            out[-1] = -wall_gradient(f[::-1], self.y[-1] - self.y[::-1])
        return out

    def integrate(self, f, upto_half=True):
        """Trapezoidal integral over ``[0, h]`` (or the whole channel)."""
        f = np.asarray(f, dtype=float)
        if self.full_channel and upto_half:
            mask = self.y <= self.h * (1 + 1e-14)
            ys, fs = self.y[mask], f[mask]
            if ys[-1] < self.h:
                j = ys.size
                t = (self.h - self.y[j - 1]) / (self.y[j] - self.y[j - 1])
                ys = np.append(ys, self.h)
                fs = np.append(fs, (1 - t) * f[j - 1] + t * f[j])
            return float(np.trapezoid(fs, ys))
        return float(np.trapezoid(f, self.y))


def wall_gradient(f, y):
    """One-sided second-order derivative at ``y[0]`` from the first three nodes."""
    h1 = y[1] - y[0]
    h2 = y[2] - y[1]
    return (
        -(2 * h1 + h2) / (h1 * (h1 + h2)) * f[0]
        + (h1 + h2) / (h1 * h2) * f[1]
        - h1 / (h2 * (h1 + h2)) * f[2]
    )


def wall_gradient_weights(y):
    h1 = y[1] - y[0]
    h2 = y[2] - y[1]
    return np.array([-(2 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))])


def _tanh_nodes(m, gamma):
    xi = np.linspace(0.0, 1.0, m)
    if gamma == 0:
        return xi
    return 1.0 - np.tanh(gamma * (1.0 - xi)) / np.tanh(gamma)


def build_grid(n: int, h: float = 1.0, stretch: float = 1.0, re_tau: Optional[float] = None,
               full_channel: bool = False) -> Grid1D:
    """Wall-clustered hyperbolic-tangent grid.

    ``stretch`` is the ratio of the centreline to the wall cell size
    (``>= 1``; 1 gives a uniform grid).  If ``re_tau`` is given the first
    off-wall node must satisfy ``y1+ < 1``.
    """
    if n < 3:
        raise ConfigurationError("n must be at least 3")
    if stretch < 1:
        raise ConfigurationError(f"stretch must be >= 1, got {stretch}")
    gamma = float(np.arccosh(np.sqrt(stretch)))

    def nodes(m):
        if full_channel:
            s = np.linspace(-1.0, 1.0, m)
            if gamma == 0:
                return h * (1.0 + s)
            y = h * (1.0 + np.tanh(gamma * s) / np.tanh(gamma))
            y[0], y[-1] = 0.0, 2.0 * h
            return y
        return h * _tanh_nodes(m, gamma)

    y = nodes(n)
    if re_tau is not None and y[1] * re_tau / h >= 1.0:
        m = n
        while nodes(m)[1] * re_tau / h >= 1.0 and m < 100000:
            m += 1
        raise ConfigurationError(
            f"first cell y1+ = {y[1] * re_tau / h:.3f} >= 1 at Re_tau={re_tau}; "
            f"need n >= {m} at stretch {stretch}"
        )
    return Grid1D(y=y, h=h, full_channel=full_channel)


def grid_for(cfg: CaseConfig) -> Grid1D:
    return build_grid(cfg.n, cfg.h, cfg.stretch, re_tau=cfg.re_tau, full_channel=cfg.full_channel)


@dataclass
class FlowState:
    u: np.ndarray
    nu_tilde: np.ndarray

    def copy(self) -> "FlowState":
        return FlowState(self.u.copy(), self.nu_tilde.copy())

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.u, self.nu_tilde])

    @classmethod
    def from_array(cls, U) -> "FlowState":
        U = np.asarray(U, dtype=float).reshape(-1, 2)
        return cls(U[:, 0].copy(), U[:, 1].copy())


def initial_state(grid: Grid1D, cfg: CaseConfig) -> FlowState:
    """Reichardt velocity profile and ``nt = nt_init_ratio * nu`` in the interior."""
    nu = cfg.viscosity
    ut = np.sqrt(abs(cfg.forcing) * cfg.h)
    n = grid.n
    if ut == 0:
        return FlowState(np.zeros(n), np.zeros(n))
    yp = grid.d * ut / nu
    k = cfg.sa.kappa
    up = np.log1p(k * yp) / k + 7.8 * (1 - np.exp(-yp / 11) - yp / 11 * np.exp(-yp / 3))
    u = up * ut * np.sign(-cfg.forcing)
    if cfg.laminar:
        nt = np.zeros(n)
    else:
        nt = np.full(n, cfg.nt_init_ratio * nu)
    u[0] = 0.0
    nt[0] = 0.0
    if cfg.full_channel:
        u[-1] = 0.0
        nt[-1] = 0.0
    return FlowState(u, nt)


def _check_beta(beta, n):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (n,):
        raise ConfigurationError(f"beta must have shape ({n},), got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise ConfigurationError("beta must be finite")
    return beta


def _assemble(state, beta, grid, cfg):
    R, A, B, C, P = kernels.assemble(
        state.u, state.nu_tilde, beta, grid.hf, grid.vol, grid.stencil, grid.d,
        cfg.viscosity, cfg.forcing, cfg.sa_tuple(), grid.symmetric,
    )
    if not np.all(np.isfinite(R)):
        bad = np.argwhere(~np.isfinite(R))[0]
        raise NumericalFailure(
            f"non-finite residual at node {bad[0]} equation {'u' if bad[1] == 0 else 'nu_tilde'}",
            node=int(bad[0]), equation=int(bad[1]),
        )
    return R, A, B, C, P


def assemble_residual(state: FlowState, beta, grid: Grid1D, cfg: CaseConfig) -> np.ndarray:
    """Steady residual ``R`` of shape ``(n, 2)``; zero at a discrete solution."""
    beta = _check_beta(beta, grid.n)
    return _assemble(state, beta, grid, cfg)[0]


def residual_weights(grid: Grid1D, cfg: CaseConfig) -> np.ndarray:
    """Row weights turning ``R`` into the non-dimensional integrated residual."""
    ut, h = cfg.u_tau, cfg.h
    w = np.empty((grid.n, 2))
    w[:, 0] = grid.vol / ut**2
    w[:, 1] = grid.vol / (ut**2 * h)
    w[0] = 1.0 / ut, 1.0 / (ut * h)
    if grid.full_channel:
        w[-1] = w[0]
    return w


def residual_norms(R, grid: Grid1D, cfg: CaseConfig):
    """Non-dimensional L2 norms (momentum, SA, total)."""
    Rs = R * residual_weights(grid, cfg)
    rm = float(np.sqrt(np.sum(Rs[:, 0] ** 2)))
    rs = float(np.sqrt(np.sum(Rs[:, 1] ** 2)))
    return rm, rs, float(np.hypot(rm, rs))


@dataclass
class ForwardResult:
    state: FlowState
    history: list  # (iteration, momentum L2, SA L2)
    residual: np.ndarray
    production: np.ndarray
    converged_at: int

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


class PseudoTimeStepper:
    """Backward-Euler pseudo-time marching with switched-evolution-relaxation CFL.

    Local time steps ``dt_i = cfl * vol_i**2 / (nu + nt_i)``; as ``cfl`` grows
    the step tends to a Newton step on the steady residual.  ``cfl`` is the
    larger of the SER value and a geometric ramp, and the ramp is cut back
    whenever the residual jumps by more than ``cfl_backoff``.
    """

    def __init__(self, grid: Grid1D, cfg: CaseConfig):
        self.grid = grid
        self.cfg = cfg
        self.cfl = cfg.cfl0
        self.ramp = cfg.cfl0
        self.r0 = None
        self.r_prev = None
        self.newton = False
        mask = np.ones((grid.n, 2))
        mask[0] = 0.0
        if grid.full_channel:
            mask[-1] = 0.0
        self.mask = mask

    def step(self, state: FlowState, beta, R, A, B, C) -> FlowState:
        cfg, grid = self.cfg, self.grid
        nu = cfg.viscosity
        rn = residual_norms(R, grid, cfg)[2]
        if self.r0 is None:
            # a warm start with a small residual begins close to the Newton limit
            self.r0 = max(rn, cfg.ser_reference)
        if self.newton:
            self.cfl = cfg.cfl_max
        elif rn > 0:
            ser = cfg.cfl0 * self.r0 / rn
            if self.r_prev is not None and rn > cfg.cfl_backoff * self.r_prev:
                self.ramp = max(cfg.cfl0, 0.1 * self.ramp)
            elif self.r_prev is not None:
                self.ramp = self.ramp * cfg.cfl_growth
            self.cfl = min(cfg.cfl_max, max(cfg.cfl0, ser, self.ramp))
            self.ramp = min(self.ramp, self.cfl)
        self.r_prev = rn
        for _ in range(40):
            dt = self.cfl * grid.vol[:, None] ** 2 / (nu + np.abs(state.nu_tilde))[:, None]
            inv_dt = np.divide(self.mask, dt, out=np.zeros_like(self.mask), where=self.mask > 0)
            Bm = -B.copy()
            Bm[:, 0, 0] += inv_dt[:, 0]
            Bm[:, 1, 1] += inv_dt[:, 1]
            try:
                dU = kernels.block_solve(-A, Bm, -C, R)
            except NumericalFailure:
                dU = None
            if dU is not None and np.all(np.isfinite(dU)):
                u_new = state.u + dU[:, 0]
                nt_new = state.nu_tilde + dU[:, 1]
                # keep the SA variable non-negative without stalling the update
                neg = nt_new < 0
                if np.any(neg):
                    nt_new[neg] = 0.1 * state.nu_tilde[neg]
                return FlowState(u_new, nt_new)
            self.cfl = max(self.cfl * 0.1, 1e-6)
        raise NumericalFailure("implicit step failed repeatedly")

    def newton_limit(self):
        """Switch to (near-)Newton steps for the rest of the solve."""
        self.newton = True
        self.cfl = self.cfg.cfl_max


def solve_forward(beta, cfg: CaseConfig, grid: Optional[Grid1D] = None,
                  initial: Optional[FlowState] = None) -> ForwardResult:
    """Converge the steady channel flow for the production multiplier ``beta``."""
    if grid is None:
        grid = grid_for(cfg)
    beta = _check_beta(beta, grid.n)
    state = initial.copy() if initial is not None else initial_state(grid, cfg)
    stepper = PseudoTimeStepper(grid, cfg)
    history = []
    converged_at = -1
    polish_left = cfg.polish_steps
    for it in range(cfg.max_steps + cfg.polish_steps + 1):
        R, A, B, C, P = _assemble(state, beta, grid, cfg)
        rm, rs, rt = residual_norms(R, grid, cfg)
        history.append((it, rm, rs))
        if not np.isfinite(rt):
            raise ConvergenceError(f"non-finite residual at iteration {it}", history)
        if converged_at < 0 and rt < cfg.tol:
            converged_at = it
            stepper.newton_limit()
        if converged_at >= 0:
            if polish_left == 0:
                return ForwardResult(state, history, R, P, converged_at)
            polish_left -= 1
        elif it >= cfg.max_steps:
            break
        state = stepper.step(state, beta, R, A, B, C)
    raise ConvergenceError(
        f"forward solve did not reach tol={cfg.tol:g} in {cfg.max_steps} steps "
        f"(last residual {history[-1][1]:.3e}, {history[-1][2]:.3e})",
        history,
    )


# ---------------------------------------------------------------------------
# diagnostics


def wall_shear_stress(state: FlowState, grid: Grid1D, cfg: CaseConfig) -> float:
    """``nu du/dy`` at the wall, one-sided second order."""
    return cfg.viscosity * float(wall_gradient(state.u, grid.y))


def bulk_velocity(state: FlowState, grid: Grid1D) -> float:
    span = grid.y[-1] - grid.y[0]
    return grid.integrate(state.u, upto_half=False) / span


def skin_friction(state: FlowState, grid: Grid1D, cfg: CaseConfig) -> float:
    ub = bulk_velocity(state, grid)
    if ub == 0:
        raise DegenerateStateError("bulk velocity is zero, skin friction undefined")
    return 2.0 * wall_shear_stress(state, grid, cfg) / ub**2


def wall_units(state: FlowState, grid: Grid1D, cfg: CaseConfig):
    """Return ``(y_plus, u_plus)`` per node."""
    tw = wall_shear_stress(state, grid, cfg)
    if not tw > 0:
        raise DegenerateStateError(f"wall shear stress {tw} is not positive")
    ut = np.sqrt(tw)
    return grid.d * ut / cfg.viscosity, state.u / ut


def centreline_index(grid: Grid1D) -> int:
    return int(np.argmax(grid.d))


def pressure_gradient_parameter(state: FlowState, grid: Grid1D, cfg: CaseConfig) -> float:
    """``(delta* / tau_w) dP/ds`` with delta* from the trapezoidal rule over ``[0, h]``."""
    dpds = cfg.forcing
    if dpds == 0:
        return 0.0
    uc = state.u[centreline_index(grid)]
    if uc == 0:
        raise DegenerateStateError("centreline velocity is zero")
    delta_star = grid.integrate(1.0 - state.u / uc)
    if delta_star == 0:
        return 0.0
    tw = wall_shear_stress(state, grid, cfg)
    if tw == 0:
        raise DegenerateStateError("wall shear stress is zero")
    return delta_star / tw * dpds


def eddy_viscosity_field(state: FlowState, cfg: CaseConfig) -> np.ndarray:
    return np.asarray(eddy_viscosity(np.maximum(state.nu_tilde, 0.0), cfg.viscosity, cfg.sa))
