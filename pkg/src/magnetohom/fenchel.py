"""Parameter-dependent Legendre-Fenchel conjugation.

    theta*(G, B) = sup_M  B.M - theta(G, M)

The supremum is located by a dense grid over a ball whose radius follows
from the declared growth of theta, then refined by projected gradient ascent
with Armijo backtracking. Also provides the (m, h) <-> b model conversions
and an empirical auditor for the growth and Lipschitz bounds of conjugates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import NotCoercive, NotConvex, RadiusExhausted

FD_STEP = 1e-6
TOL_KKT = 1e-6


@dataclass(frozen=True)
class Growth:
    """Declared growth constants of theta.

    c, C, p enter  c(|G|^2 + |M|^2) - C <= theta <= C(|G|^2 + |M|^p + 1);
    grad_c, grad_C, q enter  |D_M theta| >= grad_c |M|^(p-1) - grad_C(|G| + |G||M|^(q-1) + 1);
    L bounds |D_G theta| <= L(|G| + |M|^q + 1).
    """

    p: float
    c: float
    C: float
    q: float = 1.0
    L: Optional[float] = None
    grad_c: Optional[float] = None
    grad_C: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ParamFunction:
    func: Callable  # (G (k,), M (..., d)) -> (...)
    k: int
    d: int
    grad_M: Optional[Callable] = None
    grad_G: Optional[Callable] = None
    growth: Optional[Growth] = None
    radial: bool = False
    convex: bool = False
    radius_bound: Optional[Callable] = None
    name: str = ""
    _checked: dict = field(default_factory=dict, repr=False)

    def __call__(self, G, M):
        return self.func(np.asarray(G, dtype=float), np.asarray(M, dtype=float))

    def gradient_M(self, G, M):
        G = np.asarray(G, dtype=float)
        M = np.asarray(M, dtype=float)
        if self.grad_M is not None:
            return np.asarray(self.grad_M(G, M), dtype=float)
        return _central_difference(lambda X: self.func(G, X), M)

    def gradient_G(self, G, M):
        G = np.asarray(G, dtype=float)
        M = np.asarray(M, dtype=float)
        if self.grad_G is not None:
            return np.asarray(self.grad_G(G, M), dtype=float)
        return _central_difference(lambda X: self.func(X, M), G)


def _central_difference(f, x, h=FD_STEP):
    x = np.asarray(x, dtype=float)
    g = np.empty(x.shape)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@dataclass
class ConjugateResult:
    value: float
    argmax: np.ndarray
    search_radius_used: float
    refined: bool
    kkt_residual: float = float("nan")


# --- search radius -------------------------------------------------------------


def _largest_root(c, C, p, q, g, b):
    """Largest r with c r^(p-1) - C g r^(q-1) <= b + C g + C."""
    rhs = b + C * g + C

    def f(r):
        return c * r ** (p - 1) - C * g * r ** (q - 1) - rhs

    # f is increasing beyond r0
    r0 = (C * g / c) ** (1.0 / (p - q)) if (g > 0 and p > q) else 0.0
    if f(r0) > 0:
        return r0
    hi = max(2 * r0, 1.0)
    while f(hi) <= 0:
        hi *= 2
    return optimize.brentq(f, r0, hi, xtol=1e-14, rtol=1e-12)


def search_radius(theta: ParamFunction, G, B) -> float:
    G = np.atleast_1d(np.asarray(G, dtype=float))
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if theta.radius_bound is not None:
        return float(theta.radius_bound(G, B))
    gr = theta.growth
    if gr is None or gr.p <= 1:
        raise NotCoercive(f"{theta.name or 'theta'}: no superlinear growth declared")
    g, b = float(np.linalg.norm(G)), float(np.linalg.norm(B))
    if gr.grad_c is not None:
        r = _largest_root(gr.grad_c, gr.grad_C or 0.0, gr.p, gr.q, g, b)
    else:
        K = max(gr.C * (g * g + 1) + gr.C - gr.c * g * g, 0.0)
        r = (b + np.sqrt(b * b + 4 * gr.c * K)) / (2 * gr.c)
    return 1.5 * r


# --- single-point conjugate ----------------------------------------------------


def _direction(B, d):
    nb = np.linalg.norm(B)
    if nb > 0:
        return B / nb
    e = np.zeros(d)
    e[0] = 1.0
    return e


def _grid(theta, G, B, R, grid_n):
    d = theta.d
    if theta.radial:
        r = np.linspace(0.0, R, grid_n)
        pts = r[:, None] * _direction(B, d)[None, :]
    else:
        ax = np.linspace(-R, R, grid_n)
        mesh = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        pts = mesh[np.einsum("ij,ij->i", mesh, mesh) <= R * R * (1 + 1e-12)]
    vals = pts @ B - theta(G, pts)
    return pts, vals


def _project_ball(M, R):
    n = np.linalg.norm(M)
    return M if n <= R else M * (R / n)


def _ascend(theta, G, B, M, R, iters, gtol):
    """Projected gradient ascent on B.M - theta(G, M) with BB steps and Armijo backtracking."""

    def h(X):
        return float(X @ B - theta(G, X))

    def grad(X):
        return B - theta.gradient_M(G, X)

    val = h(M)
    g = grad(M)
    step = 1.0 / max(1.0, np.linalg.norm(g))
    M_prev = g_prev = None
    for _ in range(iters):
        if np.linalg.norm(g) <= gtol:
            break
        if M_prev is not None:
            s, y = M - M_prev, g - g_prev
            sy = float(s @ y)
            if sy < 0:
                step = float(s @ s) / -sy
        t = step
        for _ls in range(60):
            trial = _project_ball(M + t * g, R)
            tv = h(trial)
            if tv >= val + 1e-4 * float(g @ (trial - M)):
                break
            t *= 0.5
        else:
            break
        if tv < val:
            break
        M_prev, g_prev = M, g
        M, val = trial, tv
        g = grad(M)
    return M, val


def conjugate(theta: ParamFunction, G, B, grid_n: Optional[int] = None, refine_iters: int = 50,
              radius_policy="growth", max_expand: int = 6, n_seeds: int = 3) -> ConjugateResult:
    """Evaluate theta*(G, B) by grid search and local ascent.

    radius_policy: "growth" derives the search ball from the declared growth
    (or theta.radius_bound); "expand" starts from 1 + |B| and doubles until the
    grid maximiser is interior; a float fixes the initial radius.
    """
    G = np.atleast_1d(np.asarray(G, dtype=float)) if theta.k else np.zeros(0)
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if isinstance(radius_policy, str) and radius_policy == "growth":
        R = search_radius(theta, G, B)
    elif isinstance(radius_policy, str) and radius_policy == "expand":
        R = 1.0 + float(np.linalg.norm(B))
    else:
        R = float(radius_policy)
    R = max(R, 1e-8)
    if grid_n is None:
        grid_n = 201 if theta.radial else 25
    for _attempt in range(max_expand + 1):
        pts, vals = _grid(theta, G, B, R, grid_n)
        best = int(np.argmax(vals))
        if np.linalg.norm(pts[best]) < R * (1 - 2.5 / grid_n):
            break
        R *= 2.0
    else:
        raise RadiusExhausted(f"maximiser still on the search boundary at radius {R / 2:g}")

    order = np.argsort(vals)[::-1]
    seeds = [pts[order[0]]]
    for i in order[1:]:
        if len(seeds) >= n_seeds:
            break
        if all(np.linalg.norm(pts[i] - s) > 2 * R / grid_n for s in seeds):
            seeds.append(pts[i])
    gtol = 1e-13 * (1 + np.linalg.norm(B))
    best_M, best_v = pts[best], float(vals[best])
    for s in seeds:
        M, v = _ascend(theta, G, B, s.astype(float), R, refine_iters, gtol)
        if v > best_v:
            best_M, best_v = M, v
    kkt = float(np.linalg.norm(theta.gradient_M(G, best_M) - B))
    return ConjugateResult(best_v, best_M, R, refine_iters > 0, kkt)


def conjugate_function(theta: ParamFunction, **opts) -> ParamFunction:
    """theta* as a ParamFunction in (G, B), with gradient from the envelope theorem.

    The radius hint for conjugating again assumes theta convex and differentiable,
    where the maximiser of B -> M.B - theta*(G, B) is D_M theta(G, M).
    """

    def func(G, B):
        B = np.asarray(B, dtype=float)
        flat = B.reshape(-1, theta.d)
        out = np.array([conjugate(theta, G, b, **opts).value for b in flat])
        return out.reshape(B.shape[:-1])

    def grad(G, B):
        B = np.asarray(B, dtype=float)
        flat = B.reshape(-1, theta.d)
        out = np.array([conjugate(theta, G, b, **opts).argmax for b in flat])
        return out.reshape(B.shape)

    def radius(G, M):
        return 1.5 * float(np.linalg.norm(theta.gradient_M(G, M))) + 1.0

    return ParamFunction(func, theta.k, theta.d, grad_M=grad, radial=theta.radial, convex=True,
                         radius_bound=radius, name=f"({theta.name})*")


# --- batched maximisation --------------------------------------------------------


def maximize_batch(value_fn, grad_fn, B, seeds, iters=60, n_starts=2):
    """Maximise B_i.M - value_fn(M)_i independently for each row i.

    value_fn(M (m, d)) -> (m,) and grad_fn(M) -> (m, d) act row-wise on a
    batch whose rows are aligned with B (m, d). seeds has shape (m, s, d).
    Damped Newton with an eigenvalue-shifted finite-difference Hessian.
    Returns (values (m,), argmax (m, d)).
    """
    B = np.asarray(B, dtype=float)
    m, s, d = seeds.shape
    # rank seeds by objective
    rows = np.arange(m)
    sv = np.empty((m, s))
    for j in range(s):
        sv[:, j] = np.einsum("ij,ij->i", B, seeds[:, j]) - _rows(value_fn, seeds[:, j], rows)
    order = np.argsort(-sv, axis=1)
    best_val = np.full(m, -np.inf)
    best_M = np.zeros((m, d))
    for start in range(min(n_starts, s)):
        M = seeds[rows, order[:, start]].copy()
        val = np.einsum("ij,ij->i", B, M) - _rows(value_fn, M, rows)
        active = np.ones(m, dtype=bool)
        for _ in range(iters):
            if not active.any():
                break
            ia = np.flatnonzero(active)
            Ma, Ba = M[ia], B[ia]
            gt = _rows(grad_fn, Ma, ia)
            g = Ba - gt
            gn = np.linalg.norm(g, axis=1)
            done = gn <= 1e-13 * (1 + np.linalg.norm(Ba, axis=1) + np.linalg.norm(gt, axis=1))
            active[ia[done]] = False
            keep = ~done
            if not keep.any():
                break
            ia, Ma, g = ia[keep], Ma[keep], g[keep]
            H = _fd_hessian(grad_fn, Ma, ia)
            w, V = np.linalg.eigh(H)
            floor = 1e-10 * (1 + np.abs(w).max(axis=1, keepdims=True))
            w = np.maximum(w, floor)
            step = np.einsum("nij,nj->ni", V, np.einsum("nji,nj->ni", V, g) / w)
            t = np.ones(len(ia))
            cur = val[ia]
            slope = np.einsum("ij,ij->i", g, step)
            pending = np.ones(len(ia), dtype=bool)
            newM = Ma.copy()
            newv = cur.copy()
            for _ls in range(40):
                ip = np.flatnonzero(pending)
                if ip.size == 0:
                    break
                trial = Ma[ip] + t[ip, None] * step[ip]
                tv = np.einsum("ij,ij->i", B[ia[ip]], trial) - _rows(value_fn, trial, ia[ip])
                ok = tv >= cur[ip] + 1e-4 * t[ip] * slope[ip]
                newM[ip[ok]] = trial[ok]
                newv[ip[ok]] = tv[ok]
                pending[ip[ok]] = False
                t[ip[~ok]] *= 0.5
            stalled = pending | (newv <= cur)
            M[ia] = newM
            val[ia] = np.maximum(newv, cur)
            active[ia[stalled]] = False
        better = val > best_val
        best_val[better] = val[better]
        best_M[better] = M[better]
    return best_val, best_M


def _rows(fn, M, idx):
    return fn(M, idx) if _wants_index(fn) else fn(M)


def _wants_index(fn):
    return getattr(fn, "row_indexed", False)


def _fd_hessian(grad_fn, M, idx):
    n, d = M.shape
    H = np.empty((n, d, d))
    h = 1e-5 * (1 + np.linalg.norm(M, axis=1))
    for j in range(d):
        e = np.zeros((n, d))
        e[:, j] = h
        H[:, :, j] = (_rows(grad_fn, M + e, idx) - _rows(grad_fn, M - e, idx)) / (2 * h[:, None])
    return 0.5 * (H + np.swapaxes(H, 1, 2))


# --- convexity checks ------------------------------------------------------------


def check_convex_in_M(theta: ParamFunction, G, radius: float, n: int = 10_000, seed: int = 0,
                      tol: float = 1e-9) -> None:
    """Sampled midpoint test; raises NotConvex on the first violation."""
    key = (np.asarray(G, dtype=float).tobytes(), float(radius))
    if theta._checked.get(key):
        return
    rng = np.random.default_rng(seed)
    d = theta.d
    X = rng.uniform(-radius, radius, size=(n, d))
    Y = rng.uniform(-radius, radius, size=(n, d))
    fx, fy, fm = theta(G, X), theta(G, Y), theta(G, 0.5 * (X + Y))
    excess = fm - 0.5 * (fx + fy)
    scale = tol * (1 + np.abs(fx) + np.abs(fy))
    if np.any(excess > scale):
        i = int(np.argmax(excess - scale))
        raise NotConvex(f"{theta.name or 'function'} fails the midpoint test at "
                        f"{X[i]}, {Y[i]} (excess {excess[i]:.3g})")
    theta._checked[key] = True


# --- model conversions ------------------------------------------------------------


def _with_vacuum(psi_hat: ParamFunction, mu0: float) -> ParamFunction:
    def func(G, M):
        return psi_hat(G, M) + 0.5 * mu0 * np.sum(np.asarray(M) ** 2, axis=-1)

    def grad(G, M):
        return psi_hat.gradient_M(G, M) + mu0 * np.asarray(M)

    def radius(G, b):
        # mu0-strongly convex: |M*| <= |b - grad(0)| / mu0
        g0 = psi_hat.gradient_M(G, np.zeros(psi_hat.d))
        return 1.5 * float(np.linalg.norm(b - g0)) / mu0 + 1e-6

    return ParamFunction(func, psi_hat.k, psi_hat.d, grad_M=grad, radial=psi_hat.radial,
                         convex=True, radius_bound=radius, name=f"{psi_hat.name}+vac")


def phi_function(psi_hat: ParamFunction, mu0: float, check_radius: float = 2.0, **opts) -> ParamFunction:
    """Phi(F, b) = -(psi_hat(F, .) + mu0/2 |.|^2)*(b) as a ParamFunction in (F, b)."""
    g = _with_vacuum(psi_hat, mu0)

    def func(F, b):
        check_convex_in_M(psi_hat, F, check_radius)
        b = np.asarray(b, dtype=float)
        flat = b.reshape(-1, psi_hat.d)
        out = np.array([-conjugate(g, F, x, **opts).value for x in flat])
        return out.reshape(b.shape[:-1])

    def grad(F, b):
        b = np.asarray(b, dtype=float)
        flat = b.reshape(-1, psi_hat.d)
        out = np.array([-conjugate(g, F, x, **opts).argmax for x in flat])
        return out.reshape(b.shape)

    return ParamFunction(func, psi_hat.k, psi_hat.d, grad_M=grad, radial=psi_hat.radial,
                         name=f"Phi[{psi_hat.name}]")


def phi_from_psi_hat(psi_hat: ParamFunction, mu0: float, F, b, **opts) -> float:
    return float(phi_function(psi_hat, mu0, **opts)(F, b))


def psi_hat_from_phi(phi: ParamFunction, mu0: float, F, m, check_radius: float = 2.0, **opts) -> float:
    """(-Phi(F, .))*(m) - mu0/2 |m|^2; requires -Phi convex in b."""

    def neg(Fp, b):
        return -phi(Fp, b)

    def neg_grad(Fp, b):
        return -phi.gradient_M(Fp, b)

    h = ParamFunction(neg, phi.k, phi.d, grad_M=neg_grad, growth=phi.growth, radial=phi.radial,
                      name=f"-{phi.name}")
    check_convex_in_M(h, F, check_radius, n=opts.pop("convexity_samples", 10_000))
    policy = opts.pop("radius_policy", "growth" if phi.growth is not None else "expand")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    res = conjugate(h, F, m, radius_policy=policy, **opts)
    return float(res.value - 0.5 * mu0 * m @ m)


def magnetization_from_b(phi: ParamFunction, F, b) -> np.ndarray:
    """m = -d Phi / d b."""
    return -phi.gradient_M(F, np.asarray(b, dtype=float))


def dual_H_potential(psi: ParamFunction, F, B) -> np.ndarray:
    """H = d Psi / d B."""
    return psi.gradient_M(F, np.asarray(B, dtype=float))


# --- bound auditing -----------------------------------------------------------------


@dataclass
class BoundsReport:
    samples: int
    c1: float
    C1: float
    gc_lower_worst: float  # max of (lower bound - value); <= 0 passes
    gc_upper_worst: float  # max of (value - upper bound); <= 0 passes
    L_B: float
    L_G: float
    exponent_G: float
    worst_pair_B: tuple
    worst_pair_G: tuple
    kkt_skipped: int

    @property
    def gc_ok(self) -> bool:
        return self.gc_lower_worst <= 1e-9 and self.gc_upper_worst <= 1e-9

    def as_dict(self) -> dict:
        return {
            "samples": self.samples, "c1": self.c1, "C1": self.C1,
            "gc_lower_worst": self.gc_lower_worst, "gc_upper_worst": self.gc_upper_worst,
            "gc_ok": self.gc_ok, "L_B": float(self.L_B), "L_G": float(self.L_G), "exponent_G": self.exponent_G,
            "kkt_skipped": self.kkt_skipped,
        }


def _ball(rng, n, dim, radius):
    if dim == 0:
        return np.zeros((n, 0))
    x = rng.normal(size=(n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.uniform(size=(n, 1)) ** (1.0 / dim)


def _radial(rng, n, dim, radius):
    if dim == 0:
        return np.zeros((n, 0))
    x = rng.normal(size=(n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.uniform(size=(n, 1))


def _steepest(rng, g):
    n = np.linalg.norm(g)
    if n > 0:
        return g / n
    u = rng.normal(size=g.shape)
    return u / np.linalg.norm(u)


def audit_fenchel_bounds(theta: ParamFunction, samples: int = 200, box: float = 5.0, seed: int = 0,
                         **opts) -> BoundsReport:
    """Empirical check of the conjugate's growth and local Lipschitz bounds.

    Base points have norms uniform in [0, box] (volume-uniform sampling in
    high dimension would miss small arguments). Each partner sits at a
    log-uniform distance along the steepest direction of the conjugate, which
    by the envelope theorem is argmax M for B and -grad_G theta(G, M) for G;
    the quotients then probe the local derivative bound rather than a random
    direction's share of it.
    """
    gr = theta.growth
    if gr is None:
        raise NotCoercive("audit requires declared growth constants")
    rng = np.random.default_rng(seed)
    p = gr.p
    pp = p / (p - 1)
    C1 = 1.0 / (4 * gr.c)
    c1 = (p * gr.C) ** (-1.0 / (p - 1)) / pp
    expo = gr.q / (p - gr.q)

    def conj(G, B):
        return conjugate(theta, G, B, **opts)

    Gs = _radial(rng, samples, theta.k, box)
    Bs = _radial(rng, samples, theta.d, box)
    lower_worst = upper_worst = -np.inf
    LB = LG = 0.0
    wb = wg = ()
    skipped = 0
    for i in range(samples):
        G, B = Gs[i], Bs[i]
        r0 = conj(G, B)
        if not np.isfinite(r0.kkt_residual) or r0.kkt_residual > 1e-4 * (1 + np.linalg.norm(B)):
            skipped += 1
        g2, nb = float(G @ G), float(np.linalg.norm(B))
        lower = c1 * nb**pp - gr.C * g2 - gr.C
        upper = C1 * nb**2 - gr.c * g2 + gr.C
        lower_worst = max(lower_worst, lower - r0.value)
        upper_worst = max(upper_worst, r0.value - upper)

        delta = box * 10 ** rng.uniform(-3, -1)
        u = _steepest(rng, np.asarray(r0.argmax, dtype=float))
        B2 = B + delta * u
        if np.linalg.norm(B2) > box:
            B2 = B - delta * u
        r1 = conj(G, B2)
        dq = np.linalg.norm(B - B2)
        if dq > 0:
            qB = abs(r0.value - r1.value) / ((np.linalg.norm(G) + nb + np.linalg.norm(B2) + 1) * dq)
            if qB > LB:
                LB, wb = qB, (G.tolist(), B.tolist(), B2.tolist())

        if theta.k:
            delta = box * 10 ** rng.uniform(-3, -1)
            v = _steepest(rng, -theta.gradient_G(G, r0.argmax))
            G2 = G + delta * v
            if np.linalg.norm(G2) > box:
                G2 = G - delta * v
            r2 = conj(G2, B)
            dg = np.linalg.norm(G - G2)
            if dg > 0:
                den = (np.linalg.norm(G) ** expo + np.linalg.norm(G2) ** expo + nb + 1) * dg
                qG = abs(r0.value - r2.value) / den
                if qG > LG:
                    LG, wg = qG, (G.tolist(), G2.tolist(), B.tolist())
    return BoundsReport(samples, c1, C1, float(lower_worst), float(upper_worst), float(LB), float(LG), expo,
                        wb, wg, skipped)


# --- builtin test functions ---------------------------------------------------------


def _norm2(M):
    return np.sum(np.asarray(M) ** 2, axis=-1)


def quadratic(c: float, d: int = 3) -> ParamFunction:
    """(c/2)|M|^2, parameter free; conjugate |B|^2 / (2c)."""
    return ParamFunction(
        lambda G, M: 0.5 * c * _norm2(M), 0, d,
        grad_M=lambda G, M: c * np.asarray(M),
        grad_G=lambda G, M: np.zeros(np.shape(M)[:-1] + (0,)),
        growth=Growth(p=2, c=c / 2, C=c / 2, q=1, L=0.0, grad_c=c, grad_C=0.0),
        radial=True, convex=True, name=f"quadratic(c={c:g})")


def power(c: float, p: float, d: int = 3) -> ParamFunction:
    """(c^p/p)|M|^p; conjugate (c^-p'/p')|B|^p'."""
    a = c**p / p

    def func(G, M):
        return a * _norm2(M) ** (p / 2)

    def grad(G, M):
        M = np.asarray(M, dtype=float)
        return c**p * (_norm2(M) ** ((p - 2) / 2))[..., None] * M

    return ParamFunction(func, 0, d, grad_M=grad,
                         growth=Growth(p=p, c=a, C=max(a, 1e-12), q=1, L=0.0, grad_c=c**p, grad_C=0.0),
                         radial=True, convex=True, name=f"power(c={c:g},p={p:g})")


def prototype(p: float = 4.0, q: float = 2.0, k: int = 1, d: int = 3) -> ParamFunction:
    """Nonconvex |M|^p - |M|^q |G| + |G|^2."""
    if 2 * q > p:
        from .errors import InvalidParams
        raise InvalidParams("prototype requires 2q <= p for two-sided quadratic growth")

    def func(G, M):
        r2 = _norm2(M)
        return r2 ** (p / 2) - r2 ** (q / 2) * np.linalg.norm(G) + float(np.dot(G, G))

    def grad_M(G, M):
        M = np.asarray(M, dtype=float)
        r2 = _norm2(M)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = p * r2 ** ((p - 2) / 2) - q * r2 ** ((q - 2) / 2) * np.linalg.norm(G)
        t = np.where(r2 > 0, t, 0.0)
        return t * M

    def grad_G(G, M):
        ng = np.linalg.norm(G)
        u = G / ng if ng > 0 else np.zeros_like(G)
        r2 = _norm2(M)[..., None]
        return -(r2 ** (q / 2)) * u + 2 * G

    # c(|G|^2 + |M|^2) - C <= theta via Young on |M|^q|G|
    r = np.linspace(0, 10, 20001)
    C0 = float(np.max(0.5 * r**2 - r**p + 0.5 * r ** (2 * q)))
    gr = Growth(p=p, c=0.5, C=max(C0, 1.5), q=q, L=2.0, grad_c=p, grad_C=q)
    return ParamFunction(func, k, d, grad_M=grad_M, grad_G=grad_G, growth=gr, radial=True,
                         convex=False, name=f"prototype(p={p:g},q={q:g})")


def quadratic_param(k: int = 3, d: int = 3) -> ParamFunction:
    """|M|^2 + |G|^2; conjugate |B|^2/4 - |G|^2."""
    return ParamFunction(
        lambda G, M: _norm2(M) + float(np.dot(G, G)), k, d,
        grad_M=lambda G, M: 2 * np.asarray(M),
        grad_G=lambda G, M: np.broadcast_to(2 * np.asarray(G), np.shape(M)[:-1] + (k,)).copy(),
        growth=Growth(p=2, c=1.0, C=1.0, q=1, L=2.0, grad_c=2.0, grad_C=0.0),
        radial=True, convex=True, name="quadratic_param")


BUILTINS = {
    "quadratic": quadratic,
    "power": power,
    "prototype": prototype,
    "quadratic_param": quadratic_param,
}
