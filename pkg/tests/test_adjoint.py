import numpy as np
import pytest

from fiml import adjoint as adj
from fiml.channel import CaseConfig, FlowState, build_grid, solve_forward
from fiml.errors import ConfigurationError


def test_jacobian_matches_fd_at_converged_state(base550, case550, grid550):
    beta = np.ones(grid550.n)
    assert adj.jacobian_fd_check(base550.state, beta, grid550, case550) < 1e-5


def test_jacobian_matches_fd_off_solution(case550, grid550, base550):
    rng = np.random.default_rng(0)
    st = FlowState(base550.state.u * (1 + 0.05 * rng.random(grid550.n)),
                   base550.state.nu_tilde * (1 + 0.3 * rng.random(grid550.n)))
    beta = 1 + 0.3 * rng.standard_normal(grid550.n)
    assert adj.jacobian_fd_check(st, beta, grid550, case550) < 1e-5


def test_zero_state_momentum_rows_are_diffusion():
    cfg = CaseConfig(dpdx=0.0, n=16)
    g = build_grid(16, stretch=4.0)
    J, _ = adj.assemble_jacobian(FlowState(np.zeros(16), np.zeros(16)), np.ones(16), g, cfg)
    nu = cfg.viscosity
    for i in range(1, 15):
        lo, up = nu / (g.hf[i - 1] * g.vol[i]), nu / (g.hf[i] * g.vol[i])
        assert J.lower[i][0] == pytest.approx([lo, 0.0])
        assert J.upper[i][0] == pytest.approx([up, 0.0])
        assert J.diag[i][0] == pytest.approx([-(lo + up), 0.0])


def test_zero_rhs_gives_zero_adjoint(base550, case550, grid550):
    J, _ = adj.assemble_jacobian(base550.state, np.ones(grid550.n), grid550, case550)
    sol = adj.solve_adjoint(J, np.zeros(J.size))
    assert np.all(sol.psi == 0)


def test_symmetric_matrix_adjoint_equals_forward():
    rng = np.random.default_rng(5)
    n = 10
    B = rng.standard_normal((n, 2, 2))
    B = B + np.swapaxes(B, 1, 2) + 8 * np.eye(2)
    C = rng.standard_normal((n, 2, 2))
    A = np.zeros_like(C)
    A[1:] = np.swapaxes(C[:-1], 1, 2)
    C[-1] = 0
    J = adj.JacobianMatrix(A, B, C)
    M = J.to_dense()
    assert np.allclose(M, M.T)
    rhs = rng.standard_normal(2 * n)
    assert np.allclose(J.solve(rhs), J.solve(rhs, transpose=True), rtol=1e-12)
    psi = adj.solve_adjoint(J, rhs).psi
    assert np.allclose(psi, -J.solve(rhs), rtol=1e-12)


def test_gradient_trivial_cases():
    n = 6
    sol = adj.AdjointSolution(np.zeros(2 * n))
    P = np.linspace(0, 1, n)
    assert np.all(adj.gradient(sol, P, np.zeros(n)) == 0)
    with pytest.raises(ConfigurationError):
        adj.gradient(sol, P[:-1], np.zeros(n))
    with pytest.raises(ConfigurationError):
        adj.solve_adjoint(adj.JacobianMatrix(*(np.tile(np.eye(2), (n, 1, 1)),) * 3), np.ones(3))


def test_linear_functional_gradient_matches_fd(base550, case550, grid550):
    # J = sum(c * u): adjoint gradient vs central differences of full re-solves
    rng = np.random.default_rng(7)
    c = rng.random(grid550.n)
    beta = np.ones(grid550.n)
    Jm, P = adj.assemble_jacobian(base550.state, beta, grid550, case550)
    dJdU = np.zeros((grid550.n, 2))
    dJdU[:, 0] = c
    g = adj.gradient(adj.solve_adjoint(Jm, dJdU), P, np.zeros(grid550.n))
    h = 1e-6
    for i in (8, 15, 25):
        e = np.zeros(grid550.n)
        e[i] = h
        up = solve_forward(beta + e, case550, grid550, initial=base550.state).state.u
        um = solve_forward(beta - e, case550, grid550, initial=base550.state).state.u
        fd = c.dot(up - um) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5)
