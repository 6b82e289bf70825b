"""Discrete adjoint of the channel solver.

The steady residual ``R(U, beta)`` is differentiated analytically (see
:mod:`fiml.kernels`).  For an objective ``J(U, beta)`` the adjoint ``psi``
solves ``(dR/dU)^T psi = -(dJ/dU)^T`` and the total derivative is
``dJ/dbeta = dJ/dbeta|_direct + psi^T dR/dbeta``.  Since ``beta`` only
multiplies production in the SA rows, ``dR_nt,i / dbeta_i = P_i``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import CaseConfig, FlowState, Grid1D, _assemble, _check_beta
from .errors import ConfigurationError, NumericalFailure


@dataclass(frozen=True, eq=False)
class JacobianMatrix:
    """Block tridiagonal ``dR/dU`` with 2x2 blocks, node-major ordering."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @property
    def size(self) -> int:
        return 2 * self.n

    bandwidth = 3  # scalar half-bandwidth in node-major ordering

    def to_dense(self) -> np.ndarray:
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        for i in range(n):
            M[2 * i:2 * i + 2, 2 * i:2 * i + 2] = self.diag[i]
            if i > 0:
                M[2 * i:2 * i + 2, 2 * i - 2:2 * i] = self.lower[i]
            if i < n - 1:
                M[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4] = self.upper[i]
        return M

    def matvec(self, x) -> np.ndarray:
        return kernels.block_matvec(self.lower, self.diag, self.upper, x).reshape(-1)

    def rmatvec(self, x) -> np.ndarray:
        return kernels.block_matvec(self.lower, self.diag, self.upper, x, transpose=True).reshape(-1)

    def solve(self, rhs, transpose=False) -> np.ndarray:
        out = kernels.block_solve(self.lower, self.diag, self.upper, rhs, transpose=transpose)
        return out.reshape(-1)


@dataclass(frozen=True, eq=False)
class AdjointSolution:
    psi: np.ndarray  # (2n,) node-major

    @property
    def psi_u(self) -> np.ndarray:
        return self.psi[0::2]

    @property
    def psi_nu_tilde(self) -> np.ndarray:
        return self.psi[1::2]


_TERMS = {0: "momentum", 1: "sa"}


def assemble_jacobian(state: FlowState, beta, grid: Grid1D, cfg: CaseConfig):
    """Return ``(JacobianMatrix, production)`` at ``state``."""
    beta = _check_beta(beta, grid.n)
    if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.nu_tilde))):
        raise NumericalFailure("state is not finite")
    _, A, B, C, P = _assemble(state, beta, grid, cfg)
    for name, blk in (("lower", A), ("diag", B), ("upper", C)):
        bad = np.argwhere(~np.isfinite(blk))
        if bad.size:
            node, eq, col = (int(v) for v in bad[0])
            raise NumericalFailure(
                f"non-finite {name} Jacobian entry at node {node}, equation {_TERMS[eq]}, "
                f"w.r.t. {'u' if col == 0 else 'nu_tilde'}",
                node=node, equation=eq, term=name,
            )
    return JacobianMatrix(A, B, C), P


def jacobian_fd_check(state: FlowState, beta, grid: Grid1D, cfg: CaseConfig, step=1e-7, columns=None):
    """Max relative column discrepancy between the analytic Jacobian and one-sided FD.

    Perturbations are ``step * u_tau`` for velocity columns and
    ``step * max(nt_j, nu)`` for SA columns.
    """
    beta = _check_beta(beta, grid.n)
    J, _ = assemble_jacobian(state, beta, grid, cfg)
    M = J.to_dense()
    U0 = state.as_array().reshape(-1)
    R0 = _assemble(state, beta, grid, cfg)[0].reshape(-1)
    scales = np.empty_like(U0)
    scales[0::2] = cfg.u_tau
    scales[1::2] = np.maximum(np.abs(U0[1::2]), cfg.viscosity)
    cols = range(U0.size) if columns is None else columns
    worst = 0.0
    for j in cols:
        dx = step * scales[j]
        U = U0.copy()
        U[j] += dx
        Rp = _assemble(FlowState.from_array(U), beta, grid, cfg)[0].reshape(-1)
        fd = (Rp - R0) / dx
        an = M[:, j]
        ref = np.max(np.abs(an))
        if ref == 0:
            err = np.max(np.abs(fd))
        else:
            err = np.max(np.abs(fd - an)) / ref
        worst = max(worst, float(err))
    return worst


def solve_adjoint(J: JacobianMatrix, dJdU, rtol=1e-10) -> AdjointSolution:
    """Solve ``J^T psi = -dJdU`` and verify the linear residual."""
    g = np.asarray(dJdU, dtype=float).reshape(-1)
    if g.size != J.size:
        raise ConfigurationError(f"dJdU has size {g.size}, expected {J.size}")
    gnorm = np.linalg.norm(g)
    if gnorm == 0:
        return AdjointSolution(np.zeros_like(g))
    psi = J.solve(-g, transpose=True)
    res = J.rmatvec(psi) + g
    if np.linalg.norm(res) > rtol * gnorm:
        # one step of iterative refinement
        psi = psi + J.solve(-res, transpose=True)
        res = J.rmatvec(psi) + g
    rel = np.linalg.norm(res) / gnorm
    if not np.isfinite(rel) or rel > rtol:
        cond = np.linalg.cond(J.to_dense())
        raise NumericalFailure(
            f"adjoint solve residual {rel:.3e} exceeds {rtol:g} (condition estimate {cond:.3e})"
        )
    return AdjointSolution(psi)


def gradient(adj: AdjointSolution, production, dJdbeta_direct) -> np.ndarray:
    """``dJ/dbeta_i = dJ/dbeta_i|direct + psi_nt,i * P_i``."""
    P = np.asarray(production, dtype=float)
    direct = np.asarray(dJdbeta_direct, dtype=float)
    psi_nt = adj.psi_nu_tilde
    if not (P.shape == direct.shape == psi_nt.shape):
        raise ConfigurationError(
            f"size mismatch: psi {psi_nt.shape}, production {P.shape}, direct {direct.shape}"
        )
    return direct + psi_nt * P
