import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fiml import kernels
from fiml.channel import CaseConfig, grid_for, initial_state, skin_friction, solve_forward

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def _args(cfg, grid, state, beta):
    return (state.u, state.nu_tilde, beta, grid.hf, grid.vol, grid.stencil, grid.d, cfg.viscosity,
            cfg.forcing, cfg.sa_tuple(), grid.symmetric)


@needs_numba
@pytest.mark.parametrize("full", [False, True])
def test_assemble_paths_agree(full, base550):
    cfg = CaseConfig(re_tau=550.0, n=65 if full else 64, full_channel=full)
    grid = grid_for(cfg)
    rng = np.random.default_rng(1)
    for state in (initial_state(grid, cfg), None):
        if state is None:
            state = solve_forward(np.ones(grid.n), cfg, grid).state
        beta = 1.0 + 0.2 * rng.standard_normal(grid.n)
        a = kernels.assemble(*_args(cfg, grid, state, beta), use_numba=True)
        b = kernels.assemble(*_args(cfg, grid, state, beta), use_numba=False)
        for x, y in zip(a, b):
            scale = max(np.max(np.abs(y)), 1e-300)
            assert np.max(np.abs(x - y)) <= 1e-12 * scale


@needs_numba
@pytest.mark.parametrize("transpose", [False, True])
def test_block_solve_paths_agree(transpose):
    rng = np.random.default_rng(2)
    n = 40
    A = rng.standard_normal((n, 2, 2))
    C = rng.standard_normal((n, 2, 2))
    B = rng.standard_normal((n, 2, 2)) + 6.0 * np.eye(2)
    rhs = rng.standard_normal((n, 2))
    x1 = kernels.block_solve(A, B, C, rhs, transpose=transpose, use_numba=True)
    x2 = kernels.block_solve(A, B, C, rhs, transpose=transpose, use_numba=False)
    assert np.allclose(x1, x2, rtol=1e-11, atol=1e-13)
    back = kernels.block_matvec(A, B, C, x1, transpose=transpose)
    assert np.allclose(back, rhs, atol=1e-11)


def test_banded_matches_dense():
    rng = np.random.default_rng(4)
    n = 7
    A, B, C = (rng.standard_normal((n, 2, 2)) for _ in range(3))
    B += 5 * np.eye(2)
    M = np.zeros((2 * n, 2 * n))
    for i in range(n):
        M[2 * i:2 * i + 2, 2 * i:2 * i + 2] = B[i]
        if i:
            M[2 * i:2 * i + 2, 2 * i - 2:2 * i] = A[i]
        if i < n - 1:
            M[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4] = C[i]
    rhs = rng.standard_normal(2 * n)
    x = kernels.block_solve(A, B, C, rhs, use_numba=False).reshape(-1)
    assert np.allclose(M @ x, rhs)
    xt = kernels.block_solve(A, B, C, rhs, transpose=True, use_numba=False).reshape(-1)
    assert np.allclose(M.T @ xt, rhs)


def _solve_in_subprocess(flag):
    code = (
        "import json, numpy as np\n"
        "from fiml import kernels\n"
        "from fiml.channel import CaseConfig, grid_for, solve_forward, skin_friction\n"
        "cfg = CaseConfig(re_tau=550.0, n=64); g = grid_for(cfg)\n"
        "r = solve_forward(np.ones(g.n), cfg, g)\n"
        "print(json.dumps(dict(use=kernels.USE_NUMBA, cf=skin_friction(r.state, g, cfg), it=r.iterations)))\n"
    )
    env = dict(os.environ, FIML_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_env_switch_selects_numpy_path(case550, grid550, base550):
    off = _solve_in_subprocess("0")
    assert off["use"] is False
    cf = skin_friction(base550.state, grid550, case550)
    assert off["cf"] == pytest.approx(cf, rel=1e-10)
    assert off["it"] == base550.iterations


def test_numpy_path_in_process(numpy_only, case550, grid550, base550):
    res = solve_forward(np.ones(grid550.n), case550, grid550)
    assert np.allclose(res.state.u, base550.state.u, rtol=1e-10)
