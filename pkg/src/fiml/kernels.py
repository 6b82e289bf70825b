"""Hot inner kernels of the channel solver.

Every kernel has two implementations: an explicit-loop version compiled with
numba and a vectorised numpy/scipy version.  ``USE_NUMBA`` (see
:mod:`fiml._numba`) selects which one the public wrappers dispatch to; both
are always importable so they can be cross-checked and benchmarked.

State layout is node-major with two unknowns per node, ``U[i] = (u_i, nt_i)``.
The Jacobian is block tridiagonal with 2x2 blocks::

    A[i] = dR_i/dU_{i-1},  B[i] = dR_i/dU_i,  C[i] = dR_i/dU_{i+1}
"""
import math

import numpy as np
from scipy.linalg import solve_banded

from ._numba import HAVE_NUMBA, USE_NUMBA, njit  # noqa: F401
from .errors import NumericalFailure

TINY = np.finfo(float).tiny


# ---------------------------------------------------------------------------
# numba: residual and Jacobian


@njit
def _source_nb(nt, omega, d, nu, cb1, kappa, cw1, cw2, cw3, cv1, rclip, oclip):
    # returns P, D and their derivatives w.r.t. nt and omega
    chi = nt / nu
    cv13 = cv1 * cv1 * cv1
    chi3 = chi * chi * chi
    f1 = chi3 / (chi3 + cv13)
    df1 = 3.0 * chi * chi * cv13 / ((chi3 + cv13) * (chi3 + cv13))
    den2 = 1.0 + chi * f1
    f2 = 1.0 - chi / den2
    df2 = -(1.0 - chi * chi * df1) / (den2 * den2)
    k2d2 = kappa * kappa * d * d
    sbar = nt * f2 / k2d2
    dsbar = (f2 + chi * df2) / k2d2
    if omega + sbar >= oclip * omega:
        ot = omega + sbar
        dot_do = 1.0
        dot_dn = dsbar
    else:
        ot = oclip * omega
        dot_do = oclip
        dot_dn = 0.0
    p = cb1 * ot * nt
    dp_dn = cb1 * (ot + nt * dot_dn)
    dp_do = cb1 * nt * dot_do
    den = ot * k2d2
    r = rclip
    dr_dn = 0.0
    dr_do = 0.0
    if den > 2.2250738585072014e-308:
        r = nt / den
        if r < rclip:
            dr_dn = 1.0 / den - r / ot * dot_dn
            dr_do = -r / ot * dot_do
        else:
            r = rclip
    if r < 0.0:
        r = 0.0
        dr_dn = 0.0
        dr_do = 0.0
    r5 = r * r * r * r * r
    g = r + cw2 * (r5 * r - r)
    dg = 1.0 + cw2 * (6.0 * r5 - 1.0)
    c6 = cw3 ** 6
    g6 = g ** 6
    bracket = ((1.0 + c6) / (g6 + c6)) ** (1.0 / 6.0)
    fwv = g * bracket
    dfw = bracket * c6 / (g6 + c6) * dg
    q = nt * nt / (d * d)
    dd = cw1 * fwv * q
    dd_dn = cw1 * (dfw * dr_dn * q + fwv * 2.0 * nt / (d * d))
    dd_do = cw1 * q * dfw * dr_do
    return p, dp_dn, dp_do, dd, dd_dn, dd_do


@njit
def _assemble_nb(u, nt, beta, hf, vol, st, d, nu, dpdx, consts, sym, R, A, B, C, P):
    cb1, sigma, cb2, kappa, cw1, cw2, cw3, cv1, rclip, oclip = (
        consts[0], consts[1], consts[2], consts[3], consts[4],
        consts[5], consts[6], consts[7], consts[8], consts[9],
    )
    n = u.shape[0]
    nut = np.empty(n)
    dnut = np.empty(n)
    cv13 = cv1 * cv1 * cv1
    for i in range(n):
        chi = nt[i] / nu
        chi3 = chi * chi * chi
        f1 = chi3 / (chi3 + cv13)
        nut[i] = nt[i] * f1
        dnut[i] = f1 + chi * 3.0 * chi * chi * cv13 / ((chi3 + cv13) * (chi3 + cv13))

    nf = n - 1
    F = np.empty(nf)
    dF = np.empty((nf, 4))  # d/du_l, d/du_r, d/dnt_l, d/dnt_r
    G = np.empty(nf)
    dG = np.empty((nf, 2))  # d/dnt_l, d/dnt_r
    for f in range(nf):
        mu = nu + 0.5 * (nut[f] + nut[f + 1])
        du = u[f + 1] - u[f]
        F[f] = mu * du / hf[f]
        dF[f, 0] = -mu / hf[f]
        dF[f, 1] = mu / hf[f]
        dF[f, 2] = 0.5 * dnut[f] * du / hf[f]
        dF[f, 3] = 0.5 * dnut[f + 1] * du / hf[f]
        mun = nu + 0.5 * (nt[f] + nt[f + 1])
        dn = nt[f + 1] - nt[f]
        G[f] = mun * dn / hf[f]
        dG[f, 0] = 0.5 * dn / hf[f] - mun / hf[f]
        dG[f, 1] = 0.5 * dn / hf[f] + mun / hf[f]

    for i in range(n):
        for a in range(2):
            R[i, a] = 0.0
            for b in range(2):
                A[i, a, b] = 0.0
                B[i, a, b] = 0.0
                C[i, a, b] = 0.0
        P[i] = 0.0

    # wall (and far wall for the full channel) are Dirichlet rows
    R[0, 0] = u[0]
    R[0, 1] = nt[0]
    B[0, 0, 0] = 1.0
    B[0, 1, 1] = 1.0
    last = n - 1
    if not sym:
        R[n - 1, 0] = u[n - 1]
        R[n - 1, 1] = nt[n - 1]
        B[n - 1, 0, 0] = 1.0
        B[n - 1, 1, 1] = 1.0
        last = n - 2

    inv_sigma = 1.0 / sigma
    for i in range(1, last + 1):
        v = vol[i]
        fm = i - 1
        Fm = F[fm]
        Gm = G[fm]
        if i < n - 1:
            Fp = F[i]
            Gp = G[i]
            dFp0 = dF[i, 0]
            dFp1 = dF[i, 1]
            dFp2 = dF[i, 2]
            dFp3 = dF[i, 3]
            dGp0 = dG[i, 0]
            dGp1 = dG[i, 1]
        else:
            Fp = 0.0
            Gp = 0.0
            dFp0 = 0.0
            dFp1 = 0.0
            dFp2 = 0.0
            dFp3 = 0.0
            dGp0 = 0.0
            dGp1 = 0.0
        R[i, 0] = (Fp - Fm) / v - dpdx
        A[i, 0, 0] = -dF[fm, 0] / v
        B[i, 0, 0] = (dFp0 - dF[fm, 1]) / v
        C[i, 0, 0] = dFp1 / v
        A[i, 0, 1] = -dF[fm, 2] / v
        B[i, 0, 1] = (dFp2 - dF[fm, 3]) / v
        C[i, 0, 1] = dFp3 / v

        cm = st[i, 0]
        c0 = st[i, 1]
        cp = st[i, 2]
        ip = i + 1 if i < n - 1 else i - 1
        dudy = cm * u[i - 1] + c0 * u[i] + cp * u[ip]
        dndy = cm * nt[i - 1] + c0 * nt[i] + cp * nt[ip]
        omega = abs(dudy)
        sgn = 1.0 if dudy > 0.0 else (-1.0 if dudy < 0.0 else 0.0)
        p, dp_dn, dp_do, dd, dd_dn, dd_do = _source_nb(
            nt[i], omega, d[i], nu, cb1, kappa, cw1, cw2, cw3, cv1, rclip, oclip
        )
        P[i] = p
        bi = beta[i]
        R[i, 1] = bi * p - dd + inv_sigma * ((Gp - Gm) / v + cb2 * dndy * dndy)
        two_cb2 = 2.0 * cb2 * dndy * inv_sigma
        A[i, 1, 1] = -dG[fm, 0] / v * inv_sigma + two_cb2 * cm
        B[i, 1, 1] = bi * dp_dn - dd_dn + (dGp0 - dG[fm, 1]) / v * inv_sigma + two_cb2 * c0
        C[i, 1, 1] = dGp1 / v * inv_sigma + two_cb2 * cp
        ds_do = (bi * dp_do - dd_do) * sgn
        A[i, 1, 0] = ds_do * cm
        B[i, 1, 0] = ds_do * c0
        C[i, 1, 0] = ds_do * cp


# ---------------------------------------------------------------------------
# numpy: residual and Jacobian


def _source_np(nt, omega, d, nu, k):
    cb1, sigma, cb2, kappa, cw1, cw2, cw3, cv1, rclip, oclip = k
    chi = nt / nu
    cv13 = cv1**3
    chi3 = chi**3
    f1 = chi3 / (chi3 + cv13)
    df1 = 3.0 * chi**2 * cv13 / (chi3 + cv13) ** 2
    den2 = 1.0 + chi * f1
    f2 = 1.0 - chi / den2
    df2 = -(1.0 - chi**2 * df1) / den2**2
    k2d2 = kappa**2 * d**2
    sbar = nt * f2 / k2d2
    dsbar = (f2 + chi * df2) / k2d2
    unclipped = omega + sbar >= oclip * omega
    ot = np.where(unclipped, omega + sbar, oclip * omega)
    dot_do = np.where(unclipped, 1.0, oclip)
    dot_dn = np.where(unclipped, dsbar, 0.0)
    p = cb1 * ot * nt
    dp_dn = cb1 * (ot + nt * dot_dn)
    dp_do = cb1 * nt * dot_do
    den = ot * k2d2
    ok = den > TINY
    safe_den = np.where(ok, den, 1.0)
    safe_ot = np.where(ok, ot, 1.0)
    r_raw = np.where(ok, nt / safe_den, rclip)
    live = ok & (r_raw < rclip) & (r_raw >= 0.0)
    r = np.clip(r_raw, 0.0, rclip)
    dr_dn = np.where(live, 1.0 / safe_den - r / safe_ot * dot_dn, 0.0)
    dr_do = np.where(live, -r / safe_ot * dot_do, 0.0)
    g = r + cw2 * (r**6 - r)
    dg = 1.0 + cw2 * (6.0 * r**5 - 1.0)
    c6 = cw3**6
    bracket = ((1.0 + c6) / (g**6 + c6)) ** (1.0 / 6.0)
    fwv = g * bracket
    dfw = bracket * c6 / (g**6 + c6) * dg
    q = nt**2 / d**2
    dd = cw1 * fwv * q
    dd_dn = cw1 * (dfw * dr_dn * q + fwv * 2.0 * nt / d**2)
    dd_do = cw1 * q * dfw * dr_do
    return p, dp_dn, dp_do, dd, dd_dn, dd_do


def _assemble_np(u, nt, beta, hf, vol, st, d, nu, dpdx, consts, sym, R, A, B, C, P):
    cb1, sigma, cb2 = consts[0], consts[1], consts[2]
    cv1 = consts[7]
    n = u.shape[0]
    chi = nt / nu
    cv13 = cv1**3
    f1 = chi**3 / (chi**3 + cv13)
    nut = nt * f1
    dnut = f1 + chi * 3.0 * chi**2 * cv13 / (chi**3 + cv13) ** 2

    mu = nu + 0.5 * (nut[:-1] + nut[1:])
    du = np.diff(u)
    F = mu * du / hf
    dF = np.stack([-mu / hf, mu / hf, 0.5 * dnut[:-1] * du / hf, 0.5 * dnut[1:] * du / hf], axis=1)
    mun = nu + 0.5 * (nt[:-1] + nt[1:])
    dn = np.diff(nt)
    G = mun * dn / hf
    dG = np.stack([0.5 * dn / hf - mun / hf, 0.5 * dn / hf + mun / hf], axis=1)
    if sym:
        # zero flux through the symmetry plane
        F = np.append(F, 0.0)
        G = np.append(G, 0.0)
        dF = np.vstack([dF, np.zeros((1, 4))])
        dG = np.vstack([dG, np.zeros((1, 2))])
        idx = np.arange(1, n)
    else:
        idx = np.arange(1, n - 1)

    R[...] = 0.0
    A[...] = 0.0
    B[...] = 0.0
    C[...] = 0.0
    P[...] = 0.0
    R[0] = u[0], nt[0]
    B[0] = np.eye(2)
    if not sym:
        R[n - 1] = u[n - 1], nt[n - 1]
        B[n - 1] = np.eye(2)

    v = vol[idx]
    fm = idx - 1
    R[idx, 0] = (F[idx] - F[fm]) / v - dpdx
    A[idx, 0, 0] = -dF[fm, 0] / v
    B[idx, 0, 0] = (dF[idx, 0] - dF[fm, 1]) / v
    C[idx, 0, 0] = dF[idx, 1] / v
    A[idx, 0, 1] = -dF[fm, 2] / v
    B[idx, 0, 1] = (dF[idx, 2] - dF[fm, 3]) / v
    C[idx, 0, 1] = dF[idx, 3] / v

    cm, c0, cp = st[idx, 0], st[idx, 1], st[idx, 2]
    ip = np.where(idx + 1 < n, idx + 1, idx - 1)
    dudy = cm * u[idx - 1] + c0 * u[idx] + cp * u[ip]
    dndy = cm * nt[idx - 1] + c0 * nt[idx] + cp * nt[ip]
    omega = np.abs(dudy)
    sgn = np.sign(dudy)
    p, dp_dn, dp_do, dd, dd_dn, dd_do = _source_np(nt[idx], omega, d[idx], nu, consts)
    P[idx] = p
    bi = beta[idx]
    inv_sigma = 1.0 / sigma
    R[idx, 1] = bi * p - dd + inv_sigma * ((G[idx] - G[fm]) / v + cb2 * dndy**2)
    two_cb2 = 2.0 * cb2 * dndy * inv_sigma
    A[idx, 1, 1] = -dG[fm, 0] / v * inv_sigma + two_cb2 * cm
    B[idx, 1, 1] = bi * dp_dn - dd_dn + (dG[idx, 0] - dG[fm, 1]) / v * inv_sigma + two_cb2 * c0
    C[idx, 1, 1] = dG[idx, 1] / v * inv_sigma + two_cb2 * cp
    ds_do = (bi * dp_do - dd_do) * sgn
    A[idx, 1, 0] = ds_do * cm
    B[idx, 1, 0] = ds_do * c0
    C[idx, 1, 0] = ds_do * cp


def assemble(u, nt, beta, hf, vol, st, d, nu, dpdx, consts, sym, use_numba=None):
    """Residual ``R`` (n, 2), blocks ``A, B, C`` (n, 2, 2) and production ``P`` (n,)."""
    if use_numba is None:
        use_numba = USE_NUMBA
    n = u.shape[0]
    R = np.empty((n, 2))
    A = np.empty((n, 2, 2))
    B = np.empty((n, 2, 2))
    C = np.empty((n, 2, 2))
    P = np.empty(n)
    fn = _assemble_nb if use_numba else _assemble_np
    fn(u, nt, beta, hf, vol, st, d, float(nu), float(dpdx), consts, bool(sym), R, A, B, C, P)
    return R, A, B, C, P


# ---------------------------------------------------------------------------
# block tridiagonal solves


@njit
def _block_thomas_nb(A, B, C, rhs, out):
    # returns 0 on success, otherwise 1 + index of the singular pivot block
    n = B.shape[0]
    Bp = np.empty((n, 2, 2))
    rp = np.empty((n, 2))
    Bp[0] = B[0]
    rp[0] = rhs[0]
    for i in range(1, n):
        a, b, c, e = Bp[i - 1, 0, 0], Bp[i - 1, 0, 1], Bp[i - 1, 1, 0], Bp[i - 1, 1, 1]
        det = a * e - b * c
        if det == 0.0 or not math.isfinite(det):
            return i
        ia, ib, ic, ie = e / det, -b / det, -c / det, a / det
        # L = A_i * inv(Bp_{i-1})
        l00 = A[i, 0, 0] * ia + A[i, 0, 1] * ic
        l01 = A[i, 0, 0] * ib + A[i, 0, 1] * ie
        l10 = A[i, 1, 0] * ia + A[i, 1, 1] * ic
        l11 = A[i, 1, 0] * ib + A[i, 1, 1] * ie
        cc = C[i - 1]
        Bp[i, 0, 0] = B[i, 0, 0] - (l00 * cc[0, 0] + l01 * cc[1, 0])
        Bp[i, 0, 1] = B[i, 0, 1] - (l00 * cc[0, 1] + l01 * cc[1, 1])
        Bp[i, 1, 0] = B[i, 1, 0] - (l10 * cc[0, 0] + l11 * cc[1, 0])
        Bp[i, 1, 1] = B[i, 1, 1] - (l10 * cc[0, 1] + l11 * cc[1, 1])
        rp[i, 0] = rhs[i, 0] - (l00 * rp[i - 1, 0] + l01 * rp[i - 1, 1])
        rp[i, 1] = rhs[i, 1] - (l10 * rp[i - 1, 0] + l11 * rp[i - 1, 1])
    for i in range(n - 1, -1, -1):
        t0 = rp[i, 0]
        t1 = rp[i, 1]
        if i < n - 1:
            t0 -= C[i, 0, 0] * out[i + 1, 0] + C[i, 0, 1] * out[i + 1, 1]
            t1 -= C[i, 1, 0] * out[i + 1, 0] + C[i, 1, 1] * out[i + 1, 1]
        a, b, c, e = Bp[i, 0, 0], Bp[i, 0, 1], Bp[i, 1, 0], Bp[i, 1, 1]
        det = a * e - b * c
        if det == 0.0 or not math.isfinite(det):
            return i + 1
        out[i, 0] = (e * t0 - b * t1) / det
        out[i, 1] = (a * t1 - c * t0) / det
    return 0


def blocks_to_banded(A, B, C):
    """Pack 2x2 block tridiagonal blocks into LAPACK band storage, (l, u) = (3, 3)."""
    n = B.shape[0]
    m = 2 * n
    ab = np.zeros((7, m))
    rows = np.arange(n)
    for a in range(2):
        for b in range(2):
            gi = 2 * rows + a
            gj = 2 * rows + b
            ab[3 + gi - gj, gj] = B[:, a, b]
            ab[3 + gi[1:] - (gj[1:] - 2), gj[1:] - 2] = A[1:, a, b]
            ab[3 + gi[:-1] - (gj[:-1] + 2), gj[:-1] + 2] = C[:-1, a, b]
    return ab


def _banded_solve_np(A, B, C, rhs):
    ab = blocks_to_banded(A, B, C)
    x = solve_banded((3, 3), ab, rhs.reshape(-1), check_finite=False)
    return x.reshape(-1, 2)


def transpose_blocks(A, B, C):
    """Blocks of the transposed block-tridiagonal matrix."""
    At = np.zeros_like(A)
    Ct = np.zeros_like(C)
    At[1:] = np.swapaxes(C[:-1], 1, 2)
    Ct[:-1] = np.swapaxes(A[1:], 1, 2)
    return At, np.swapaxes(B, 1, 2).copy(), Ct


def block_solve(A, B, C, rhs, transpose=False, use_numba=None):
    """Solve the (optionally transposed) block tridiagonal system."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if transpose:
        A, B, C = transpose_blocks(A, B, C)
    rhs = np.ascontiguousarray(rhs, dtype=float).reshape(-1, 2)
    if use_numba:
        out = np.empty_like(rhs)
        code = _block_thomas_nb(np.ascontiguousarray(A), np.ascontiguousarray(B),
                                np.ascontiguousarray(C), rhs, out)
        if code:
            raise NumericalFailure(f"singular pivot block at node {code - 1}", node=code - 1)
        return out
    try:
        return _banded_solve_np(A, B, C, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"banded LU failed: {exc}") from exc


def block_matvec(A, B, C, x, transpose=False):
    """``M @ x`` (or ``M.T @ x``) for the block tridiagonal matrix."""
    if transpose:
        A, B, C = transpose_blocks(A, B, C)
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    y = np.einsum("nab,nb->na", B, x)
    y[1:] += np.einsum("nab,nb->na", A[1:], x[:-1])
    y[:-1] += np.einsum("nab,nb->na", C[:-1], x[1:])
    return y
