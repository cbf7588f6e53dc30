"""Matrix-free minimisers used by the cell problem.

Both work on flat float vectors and take a symmetric positive semidefinite
preconditioner as a callable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import line_search


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    grad_norm0: float
    iterations: int
    converged: bool


def pcg(apply_A, b, x0=None, precond=None, rtol=1e-8, max_iters=5000, atol=0.0):
    """Preconditioned conjugate gradients for A x = b with A symmetric semidefinite.

    Stops when ||b - A x|| <= max(rtol * ||b||, atol). Returns
    (x, residual norm, iterations, converged).
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_A(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    target = max(rtol * bnorm, atol)
    rn = np.linalg.norm(r)
    if rn <= target or bnorm == 0.0:
        return x, rn, 0, True
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iters + 1):
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            # breakdown: the remaining residual lies in the null space
            return x, rn, it, rn <= max(target, 1e3 * atol)
        a = rz / pAp
        x += a * p
        r -= a * Ap
        rn = np.linalg.norm(r)
        if rn <= target:
            return x, rn, it, True
        z = precond(r) if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, rn, max_iters, False


class _Cached:
    """Share one objective evaluation between value and gradient requests."""

    def __init__(self, fun_grad):
        self.fun_grad = fun_grad
        self.x = None
        self.val = None
        self.grad = None
        self.calls = 0

    def __call__(self, x):
        if self.x is None or not np.array_equal(x, self.x):
            self.calls += 1
            self.val, self.grad = self.fun_grad(x)
            self.x = x.copy()
        return self.val, self.grad

    def f(self, x):
        return self(x)[0]

    def g(self, x):
        return self(x)[1]


def lbfgs(fun_grad, x0, precond=None, rtol=1e-8, max_iters=2000, memory=20, gnorm_ref=None):
    """Limited-memory BFGS with a preconditioned initial Hessian and Wolfe line search.

    Converged when ||g|| <= rtol * gnorm_ref (default: the initial gradient norm).
    """
    F = _Cached(fun_grad)
    x = np.asarray(x0, dtype=float).copy()
    f, g = F(x)
    g0 = np.linalg.norm(g)
    ref = g0 if gnorm_ref is None else gnorm_ref
    if g0 == 0.0 or g0 <= rtol * ref:
        return MinimizeResult(x, f, g0, g0, 0, True)
    P = precond if precond is not None else (lambda v: v)
    S, Y, rho = [], [], []
    gamma = 1.0
    it = 0
    gn = g0
    for it in range(1, max_iters + 1):
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
            a = r * float(s @ q)
            alphas.append(a)
            q -= a * y
        d = gamma * P(q)
        for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
            b = r * float(y @ d)
            d += (a - b) * s
        d = -d
        slope = float(g @ d)
        if slope >= 0:
            S.clear(), Y.clear(), rho.clear()
            d = -P(g)
            slope = float(g @ d)
            if slope >= 0:
                d, slope = -g, -float(g @ g)
        step = None
        try:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="The line search")
                res = line_search(F.f, F.g, x, d, gfk=g, old_fval=f, c2=0.9, maxiter=30)
            step = res[0]
        except Exception:  # noqa: BLE001 - scipy may raise on degenerate directions
            step = None
        if step is None:
            step = 1.0
            for _ in range(60):
                if F.f(x + step * d) <= f + 1e-4 * step * slope:
                    break
                step *= 0.5
            else:
                break
        x_new = x + step * d
        f_new, g_new = F(x_new)
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s), Y.append(y), rho.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0), Y.pop(0), rho.pop(0)
            Py = P(y)
            yPy = float(y @ Py)
            if yPy > 0:
                gamma = sy / yPy
        stalled = f_new >= f and np.linalg.norm(s) <= 1e-15 * (1 + np.linalg.norm(x))
        x, f, g = x_new, f_new, g_new
        gn = np.linalg.norm(g)
        if gn <= rtol * ref:
            return MinimizeResult(x, f, gn, g0, it, True)
        if stalled:
            break
    return MinimizeResult(x, f, gn, g0, it, gn <= rtol * ref)
