"""Limited-memory BFGS with a backtracking Armijo line search."""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, FimlError


@dataclass
class LbfgsOptions:
    memory: int = 10
    max_iterations: int = 200
    gtol: float = 1e-10
    gtol_rel: float = 1e-7
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    first_step: float = 0.1  # max |dx| of the first (steepest-descent) trial


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    nfev: int
    status: str
    history: list = field(default_factory=list)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def lbfgs(fun_grad, x0, options: LbfgsOptions = None, callback=None) -> OptimizeResult:
    """Minimise ``f`` given ``fun_grad(x) -> (f, g)``.

    A :class:`~fiml.errors.FimlError` raised by ``fun_grad`` at a trial point
    (e.g. a forward solve that fails to converge) rejects that trial and the
    step is shortened.  Every accepted iterate strictly decreases ``f``.
    """
    opt = options or LbfgsOptions()
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    nfev = 1
    g0norm = float(np.linalg.norm(g))
    history = [dict(iteration=0, f=float(f), gnorm=g0norm, step=0.0, nfev=nfev)]
    if callback:
        callback(history[-1], x)
    pairs = deque(maxlen=opt.memory)

    def done(gn):
        return gn <= opt.gtol or gn <= opt.gtol_rel * g0norm

    status = "gtol" if done(g0norm) else "max_iterations"
    it = 0
    while status == "max_iterations" and it < opt.max_iterations:
        if pairs:
            d = _two_loop(g, list(pairs))
            if d.dot(g) >= 0:
                pairs.clear()
        if not pairs:
            d = -g * (opt.first_step / max(np.max(np.abs(g)), np.finfo(float).tiny))
        slope = float(d.dot(g))
        alpha = 1.0
        accepted = False
        for _ in range(opt.max_backtracks):
            xt = x + alpha * d
            try:
                ft, gt = fun_grad(xt)
                nfev += 1
            except FimlError:
                nfev += 1
                alpha *= opt.shrink
                continue
            if ft <= f + opt.c1 * alpha * slope and ft < f:
                accepted = True
                break
            alpha *= opt.shrink
        if not accepted:
            if it == 0:
                raise ConvergenceError(
                    "no descent achievable from the initial point; gradient is likely inconsistent",
                    history,
                )
            status = "line_search_failure"
            break
        s = xt - x
        y = gt - g
        sy = float(s.dot(y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = xt, ft, gt
        it += 1
        gn = float(np.linalg.norm(g))
        history.append(dict(iteration=it, f=float(f), gnorm=gn, step=float(alpha), nfev=nfev))
        if callback:
            callback(history[-1], x)
        if done(gn):
            status = "gtol"
    return OptimizeResult(x=x, fun=float(f), grad=g, iterations=it, nfev=nfev, status=status, history=history)
