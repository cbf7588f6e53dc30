"""Discrete multi-cell problem for the homogenized density.

    f_hom(G, B0) = inf_k inf_{phi, beta} mean_Q f(kz, G + grad phi(z), B0 + beta(z))

phi lives on the nodes of a uniform (kN)^3 grid and is linear on the six
Kuhn tetrahedra of every voxel; beta = P(b) is the divergence-free,
zero-mean projection of an unconstrained periodic field b. Displacement
nodes touching inclusion voxels are not free: on each connected inclusion
body phi is the affine map -sym(G)(x - xc) + w x (x - xc) + c, so that
sym(G + grad phi) vanishes identically on the inclusions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import fields as fl
from .errors import InvalidParams, ModelNotFinite, NonConvergence
from .geometry import InclusionMask, sym
from .materials import MaterialModel, _apply_C
from .optim import lbfgs, pcg

GRID_SIZES = (8, 16, 32, 64, 128)
PHI_BOUNDARIES = ("periodic", "dirichlet")
MODES = ("auto", "quadratic_cg", "lbfgs_projected")
_FULL_CONNECTIVITY = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class SolverOpts:
    mode: str = "auto"
    max_iters: int = 5000
    grad_tol: float = 1e-8
    penalty_fallback: bool = False
    # "periodic": phi periodic on Q; "dirichlet": phi = 0 on the cell faces
    phi_boundary: str = "periodic"
    multistart: int = 0
    seed: int = 0
    raise_on_nonconvergence: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidParams(f"unknown solver mode {self.mode!r}")
        if not self.grad_tol > 0:
            raise InvalidParams("grad_tol must be positive")
        if self.max_iters < 1:
            raise InvalidParams("max_iters must be positive")
        if self.phi_boundary not in PHI_BOUNDARIES:
            raise InvalidParams(f"unknown phi boundary {self.phi_boundary!r}")
        if self.multistart < 0:
            raise InvalidParams("multistart must be non-negative")


@dataclass(frozen=True)
class CellProblemSpec:
    G: np.ndarray
    B0: np.ndarray
    k: int
    N: int
    model: MaterialModel
    solver: SolverOpts = field(default_factory=SolverOpts)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float).reshape(3, 3)
        B0 = np.asarray(self.B0, dtype=float).reshape(3)
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(B0))):
            raise InvalidParams("G and B0 must be finite")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "B0", B0)
        if int(self.k) < 1:
            raise InvalidParams(f"k must be at least 1, got {self.k}")
        if self.N not in GRID_SIZES:
            raise InvalidParams(f"N must be one of {GRID_SIZES}, got {self.N}")
        mask = self.model.mask
        if mask is not None and mask.N != self.N:
            raise InvalidParams(f"model mask has resolution {mask.N}, cell problem uses N={self.N}")


@dataclass
class CellProblemSolution:
    phi: fl.GridVectorField
    beta: fl.GridVectorField
    energy: float
    k_used: int
    iterations: int
    grad_norm: float
    wall_time: float
    converged: bool
    rigid_residual: float
    div_residual: float
    beta_mean: float
    upper_bound: float

    def summary(self) -> dict:
        return {"energy": self.energy, "k_used": self.k_used, "grad_norm": self.grad_norm,
                "iterations": self.iterations}


# --- rigid elimination ------------------------------------------------------------------


class ConstraintMap:
    """Reduced displacement coordinates: free nodal values plus 6 rigid DOFs per body.

    Layout of the reduced vector: free node values (n_free * 3) followed by
    (c, w) per body. expand() is linear; the G-dependent affine part is
    added separately by affine().
    """

    def __init__(self, occupancy: np.ndarray, boundary: str = "periodic"):
        occ = np.asarray(occupancy, dtype=bool)
        n = occ.shape[0]
        self.n = n
        self.boundary = boundary
        # voxels sharing a corner node belong to the same body
        labels, count = ndimage.label(occ, structure=_FULL_CONNECTIVITY)
        node_label = np.zeros((n, n, n), dtype=np.int64)
        for o in np.ndindex(2, 2, 2):
            shifted = np.roll(labels, o, axis=(0, 1, 2))
            node_label = np.where(shifted > 0, shifted, node_label)
        self.n_bodies = int(count)
        self.node_label = node_label
        constrained = node_label > 0
        fixed = fl.boundary_nodes(n) if boundary == "dirichlet" else np.zeros((n, n, n), dtype=bool)
        if np.any(constrained & fixed):
            raise InvalidParams("inclusion nodes reach the cell boundary")
        self.free = ~constrained & ~fixed
        self.n_free = int(self.free.sum())
        self.body_nodes = np.nonzero(constrained)
        self.body_index = node_label[self.body_nodes] - 1
        X = np.stack(self.body_nodes, axis=-1) / n
        cnt = np.bincount(self.body_index, minlength=self.n_bodies)
        centroid = np.stack([np.bincount(self.body_index, X[:, a], self.n_bodies) for a in range(3)], -1)
        self.centroids = centroid / np.maximum(cnt, 1)[:, None]
        self.r = X - self.centroids[self.body_index]
        self.size = 3 * self.n_free + 6 * self.n_bodies

    def affine(self, G) -> np.ndarray:
        phi = np.zeros((self.n,) * 3 + (3,))
        if self.n_bodies:
            phi[self.body_nodes] = -self.r @ sym(G).T
        return phi

    def expand(self, x: np.ndarray) -> np.ndarray:
        phi = np.zeros((self.n,) * 3 + (3,))
        phi[self.free] = x[: 3 * self.n_free].reshape(-1, 3)
        if self.n_bodies:
            prm = x[3 * self.n_free:].reshape(self.n_bodies, 6)
            c, w = prm[self.body_index, :3], prm[self.body_index, 3:]
            phi[self.body_nodes] = c + np.cross(w, self.r)
        return phi

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        out = np.empty(self.size)
        out[: 3 * self.n_free] = g[self.free].ravel()
        if self.n_bodies:
            gb = g[self.body_nodes]
            gc = np.stack([np.bincount(self.body_index, gb[:, a], self.n_bodies) for a in range(3)], -1)
            rg = np.cross(self.r, gb)
            gw = np.stack([np.bincount(self.body_index, rg[:, a], self.n_bodies) for a in range(3)], -1)
            out[3 * self.n_free:] = np.concatenate([gc, gw], axis=1).ravel()
        return out


def rigid_elimination(mask, G=None, boundary: str = "periodic") -> ConstraintMap:
    occ = mask.occupancy if isinstance(mask, InclusionMask) else mask
    return ConstraintMap(occ, boundary)


# --- discretisation ----------------------------------------------------------------------


def _project_zero_mean(v: np.ndarray) -> np.ndarray:
    ws = fl.workspace(v.shape[0])
    c = ws.fft(v)
    xc = np.einsum("...i,...i->...", ws.xi, c)
    c = c - ws.xi * (xc * ws.inv_xi2)[..., None]
    c[0, 0, 0] = 0.0
    return ws.ifft(c)


def _acoustic_pinv(Cv: np.ndarray, n: int) -> np.ndarray:
    """Pseudo-inverse of the Fourier symbol of grad^T C grad for nodal fields."""
    from .materials import voigt_to_tensor

    C = voigt_to_tensor(Cv)
    d = fl.kuhn_symbol(n)
    K = np.einsum("iajb,...ta,...tb->...ij", C, np.conj(d), d) / 6
    w, V = np.linalg.eigh(K)
    wmax = max(float(w.max()), 1e-300)
    inv = np.where(w > 1e-10 * wmax, 1.0 / np.where(w > 0, w, 1.0), 0.0)
    return np.einsum("...ik,...k,...jk->...ij", V, inv, np.conj(V))


class CellDiscretization:
    """Objective, gradient and preconditioner of the reduced cell problem."""

    def __init__(self, model: MaterialModel, N: int, k: int = 1, phi_boundary: str = "periodic",
                 penalty: bool = False):
        self.model = model
        self.N, self.k = N, k
        n = self.n = k * N
        mask = model.mask
        if mask is not None:
            occ = mask.replicate(k).occupancy
        else:
            occ = np.zeros((n, n, n), dtype=bool)
        self.occ = occ
        self.penalty = penalty
        self.cmap = ConstraintMap(np.zeros_like(occ) if penalty else occ, phi_boundary)
        self.phi_boundary = phi_boundary
        micro = (np.arange(n) % N + 0.5) / N
        self.z = np.stack(np.meshgrid(micro, micro, micro, indexing="ij"), axis=-1)
        self.soft_idx = np.nonzero(~occ)
        self.rigid_idx = np.nonzero(occ)
        self.z_soft = self.z[self.soft_idx]
        self.n_phi = self.cmap.size
        self.size = self.n_phi + 3 * n**3
        self._pinv = None
        self._kappa = None
        self.mag_scale = 1.0
        Cv = getattr(model.soft, "Cv", np.zeros((6, 6)))
        self.Cv = np.asarray(Cv, dtype=float)
        if penalty:
            ev = np.linalg.eigvalsh(self.Cv)
            self._kappa = 1e4 * max(float(ev.max()), 1.0)

    # layout helpers
    def split(self, x):
        return x[: self.n_phi], x[self.n_phi:].reshape((self.n,) * 3 + (3,))

    def phi(self, x, G):
        return self.cmap.expand(x[: self.n_phi]) + self.cmap.affine(G)

    def beta(self, x):
        return _project_zero_mean(self.split(x)[1])

    def fields(self, x, G, B0):
        phi = self.phi(x, G)
        Gt = G + fl.kuhn_gradient(phi)
        Bt = B0 + self.beta(x)
        return phi, Gt, Bt

    def energy_density(self, Gt, Bt):
        """Voxel energies (tetrahedron means) and derivatives per tetrahedron / per voxel."""
        n = self.n
        val = np.empty((n, n, n))
        dG = np.zeros((n, n, n, 6, 3, 3))
        dB = np.empty((n, n, n, 3))
        s = self.soft_idx
        m = s[0].size
        Bs = np.repeat(Bt[s][:, None, :], 6, axis=1)
        zs = np.repeat(self.z_soft[:, None, :], 6, axis=1)
        v, g, b = self.model.soft.energy(Gt[s], Bs, zs)
        val[s] = v.reshape(m, 6).mean(axis=1)
        dG[s] = g / 6
        dB[s] = b.reshape(m, 6, 3).mean(axis=1)
        if self.rigid_idx[0].size:
            r = self.rigid_idx
            v, b = self.model.rigid.constrained(Bt[r])
            val[r], dB[r] = v, b
            if self._kappa is not None:
                S = sym(Gt[r])
                val[r] += self._kappa * np.einsum("...ij,...ij->...", S, S).mean(axis=-1)
                dG[r] = 2 * self._kappa * S / 6
        return val, dG, dB

    def energy_and_grad(self, x, G, B0):
        n3 = self.n**3
        _, Gt, Bt = self.fields(x, G, B0)
        val, dG, dB = self.energy_density(Gt, Bt)
        if not np.all(np.isfinite(val)):
            raise ModelNotFinite("soft law returned a non-finite value at a feasible point")
        E = float(val.sum() / n3)
        g = np.empty(self.size)
        g[: self.n_phi] = self.cmap.adjoint(fl.kuhn_gradient_adjoint(dG)) / n3
        g[self.n_phi:] = (_project_zero_mean(dB) / n3).ravel()
        return E, g

    def energy(self, x, G, B0) -> float:
        _, Gt, Bt = self.fields(x, G, B0)
        return float(self.energy_density(Gt, Bt)[0].sum() / self.n**3)

    # preconditioner: Fourier inverse of a reference elastic operator on the nodes,
    # and a scaled projection for the magnetic block
    def set_reference(self, Cv=None, mag_stiffness=None):
        Cv = self.Cv if Cv is None else np.asarray(Cv, dtype=float)
        if self._kappa is not None:
            Cv = Cv * 1.0
        self._pinv = _acoustic_pinv(Cv, self.n) if np.abs(Cv).max() > 0 else None
        self._body_inv = self._body_blocks(Cv) if (self._pinv is not None and self.cmap.n_bodies) else None
        if mag_stiffness is not None and mag_stiffness > 0:
            self.mag_scale = 1.0 / mag_stiffness

    def precondition(self, r):
        n = self.n
        out = np.empty_like(r)
        rp, rb = self.split(r)
        if self._pinv is None:
            out[: self.n_phi] = rp
        else:
            cm = self.cmap
            nf = 3 * cm.n_free
            nod = np.zeros((n, n, n, 3))
            nod[cm.free] = rp[:nf].reshape(-1, 3)
            c = np.fft.fftn(nod, axes=(0, 1, 2))
            c = np.einsum("...ij,...j->...i", self._pinv, c)
            y = np.fft.ifftn(c, axes=(0, 1, 2)).real * n**3
            out[:nf] = y[cm.free].ravel()
            if cm.n_bodies:
                rb_ = rp[nf:].reshape(cm.n_bodies, 6)
                out[nf: self.n_phi] = np.einsum("bij,bj->bi", self._body_inv, rb_).ravel()
        out[self.n_phi:] = (_project_zero_mean(rb) * (n**3 * self.mag_scale)).ravel()
        return out

    def _reference_hvp(self, Cv, xphi):
        """Elastic Hessian of the reference medium C on the soft voxels, reduced coordinates."""
        grad = fl.kuhn_gradient(self.cmap.expand(xphi))
        T, _ = _apply_C(Cv, sym(grad))
        T[self.rigid_idx] = 0.0
        return self.cmap.adjoint(fl.kuhn_gradient_adjoint(T / 6)) / self.n**3

    def _body_blocks(self, Cv):
        # bodies never share a voxel, so one probe per rigid DOF fills every block
        cm = self.cmap
        nf = 3 * cm.n_free
        blocks = np.empty((cm.n_bodies, 6, 6))
        for j in range(6):
            v = np.zeros(self.n_phi)
            v[nf:].reshape(cm.n_bodies, 6)[:, j] = 1.0
            blocks[:, :, j] = self._reference_hvp(Cv, v)[nf:].reshape(cm.n_bodies, 6)
        return np.linalg.pinv(0.5 * (blocks + np.swapaxes(blocks, 1, 2)), hermitian=True)

    def noise_floor(self, G, B0) -> float:
        """Gradient norm attributable to rounding at the scale of the data."""
        scale = 1.0 + np.linalg.norm(G) + np.linalg.norm(B0)
        return 1e-14 * scale * np.sqrt(self.size) / self.n**2

    # diagnostics
    def rigid_residual(self, x, G) -> float:
        if not self.rigid_idx[0].size:
            return 0.0
        Gt = G + fl.kuhn_gradient(self.phi(x, G))
        return float(np.abs(sym(Gt[self.rigid_idx])).max())


def magnetic_stiffness(model: MaterialModel, G, B0, occ_fraction: float, h: float = 1e-4) -> float:
    """Volume-weighted mean second derivative of f in B at the macroscopic state."""
    G = np.asarray(G, dtype=float)
    B0 = np.asarray(B0, dtype=float)
    z = np.full((1, 3), 0.5)
    ks, kr = [], []
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        gp = model.soft.energy(G[None], (B0 + e)[None], z)[2][0, a]
        gm = model.soft.energy(G[None], (B0 - e)[None], z)[2][0, a]
        ks.append((gp - gm) / (2 * h))
        kr.append((model.rigid.constrained(B0 + e)[1][a] - model.rigid.constrained(B0 - e)[1][a]) / (2 * h))
    k = (1 - occ_fraction) * np.mean(ks) + occ_fraction * np.mean(kr)
    return float(k) if k > 0 else 1.0


# --- solving ------------------------------------------------------------------------------


_DISC_CACHE: dict = {}


def discretization(model, N, k, phi_boundary="periodic", penalty=False) -> CellDiscretization:
    key = (id(model), id(model.mask), N, k, phi_boundary, penalty)
    d = _DISC_CACHE.get(key)
    if d is None or d.model is not model:
        if len(_DISC_CACHE) > 8:
            _DISC_CACHE.clear()
        d = _DISC_CACHE[key] = CellDiscretization(model, N, k, phi_boundary, penalty)
    return d


def _resolve_mode(spec: CellProblemSpec) -> str:
    mode = spec.solver.mode
    if mode == "auto":
        return "quadratic_cg" if spec.model.quadratic else "lbfgs_projected"
    if mode == "quadratic_cg" and not spec.model.quadratic:
        raise InvalidParams("quadratic_cg requires a quadratic model")
    return mode


def solve_cell(spec: CellProblemSpec) -> CellProblemSolution:
    t0 = time.perf_counter()
    opts = spec.solver
    disc = discretization(spec.model, spec.N, spec.k, opts.phi_boundary, opts.penalty_fallback)
    G, B0 = spec.G, spec.B0
    mode = _resolve_mode(spec)
    x0 = np.zeros(disc.size)
    upper = disc.energy(x0, G, B0)
    occ_frac = float(disc.occ.mean())

    if mode == "quadratic_cg":
        if disc._pinv is None or disc.mag_scale == 1.0:
            disc.set_reference(mag_stiffness=magnetic_stiffness(spec.model, np.zeros((3, 3)),
                                                                np.zeros(3), occ_frac))
        zero3, zero33 = np.zeros(3), np.zeros((3, 3))

        def hvp(v):
            return disc.energy_and_grad(v, zero33, zero3)[1]

        _, g0 = disc.energy_and_grad(x0, G, B0)
        b = -g0
        x, rn, iters, ok = pcg(hvp, b, None, disc.precondition, rtol=opts.grad_tol,
                               max_iters=opts.max_iters, atol=disc.noise_floor(G, B0))
        energy, g = disc.energy_and_grad(x, G, B0)
        gnorm = float(np.linalg.norm(g))
    else:
        disc.set_reference(mag_stiffness=magnetic_stiffness(spec.model, G, B0, occ_frac))
        fg = lambda x: disc.energy_and_grad(x, G, B0)  # noqa: E731
        starts = [x0]
        rng = np.random.default_rng(opts.seed)
        for _ in range(opts.multistart):
            xs = np.zeros(disc.size)
            amp = 0.05 * (1 + np.linalg.norm(G) + np.linalg.norm(B0))
            xs[: disc.n_phi] = amp * rng.standard_normal(disc.n_phi) / disc.n
            xs[disc.n_phi:] = amp * rng.standard_normal(disc.size - disc.n_phi)
            starts.append(xs)
        _, g_ref = fg(x0)
        ref = max(float(np.linalg.norm(g_ref)), disc.noise_floor(G, B0) / opts.grad_tol)
        # inner conjugations limit the attainable gradient accuracy
        rtol = max(opts.grad_tol, spec.model.soft.gradient_floor)
        best = None
        for xs in starts:
            res = lbfgs(fg, xs, disc.precondition, rtol=rtol, max_iters=opts.max_iters,
                        gnorm_ref=ref)
            if best is None or res.fun < best.fun:
                best = res
        x, energy, gnorm, iters, ok = best.x, best.fun, best.grad_norm, best.iterations, best.converged

    wall = time.perf_counter() - t0
    if not ok and opts.raise_on_nonconvergence:
        raise NonConvergence(f"cell solve stopped after {iters} iterations (grad norm {gnorm:.3g})",
                             iterations=iters, grad_norm=gnorm)
    phi = disc.phi(x, G)
    beta = disc.beta(x)
    bnd = fl.ZERO_DIRICHLET if opts.phi_boundary == "dirichlet" else fl.PERIODIC
    div = fl.divergence(beta)
    return CellProblemSolution(
        phi=fl.GridVectorField(phi, bnd), beta=fl.GridVectorField(beta, fl.PERIODIC),
        energy=float(energy), k_used=spec.k, iterations=int(iters), grad_norm=float(gnorm),
        wall_time=wall, converged=bool(ok), rigid_residual=disc.rigid_residual(x, G),
        div_residual=float(np.abs(div).max()), beta_mean=float(np.abs(fl.mean(beta)).max()),
        upper_bound=upper)


def upper_bound_energy(G, B0, model, N, k=1, phi_boundary="periodic") -> float:
    """Energy of the cut-off rigid test function phi = -sym(G)(x - xc) on the bodies, beta = 0."""
    disc = discretization(model, N, k, phi_boundary)
    return disc.energy(np.zeros(disc.size), np.asarray(G, float), np.asarray(B0, float))


@dataclass
class FhomResult:
    value: float
    per_k: list
    solution: CellProblemSolution
    k_used: int
    convex_consistent: Optional[bool] = None
    extrapolated: Optional[float] = None

    def as_dict(self) -> dict:
        return {"fhom": self.value, "k_used": self.k_used, "per_k": list(self.per_k),
                "grad_norm": self.solution.grad_norm, "iterations": self.solution.iterations}


def f_hom(G, B0, model: MaterialModel, N: int = 16, k_max: int = 3, solver: SolverOpts = None,
          richardson: bool = False, convex_shortcut: bool = False) -> FhomResult:
    """Minimum over k = 1..k_max of the discrete cell energy at fixed micro resolution N."""
    if k_max < 1:
        raise InvalidParams("k_max must be at least 1")
    solver = solver or SolverOpts()
    if convex_shortcut and model.convex:
        k_max = 1
    per_k, sols = [], []
    for k in range(1, k_max + 1):
        sol = solve_cell(CellProblemSpec(G, B0, k, N, model, solver))
        per_k.append(sol.energy)
        sols.append(sol)
    i = int(np.argmin(per_k))
    consistent = None
    if model.convex and len(per_k) > 1:
        tol = 10 * solver.grad_tol * (1 + abs(per_k[0]))
        consistent = bool(np.max(np.abs(np.array(per_k) - per_k[0])) <= tol)
    extrap = None
    if richardson and N // 2 in GRID_SIZES:
        coarse = model.with_mask(_coarsen(model.mask)) if model.mask is not None else model
        vc = min(solve_cell(CellProblemSpec(G, B0, k, N // 2, coarse, solver)).energy
                 for k in range(1, k_max + 1))
        # first-order voxelisation error
        extrap = 2 * per_k[i] - vc
    return FhomResult(float(per_k[i]), per_k, sols[i], i + 1, consistent, extrap)


def _coarsen(mask: InclusionMask) -> InclusionMask:
    from .geometry import mask_from_occupancy

    occ = mask.occupancy
    N = occ.shape[0] // 2
    coarse = occ.reshape(N, 2, N, 2, N, 2).mean(axis=(1, 3, 5)) >= 0.5
    return mask_from_occupancy(coarse)


# --- gradient check -------------------------------------------------------------------------


@dataclass
class GradientCheckReport:
    max_rel_error: float
    coords: list
    analytic: list
    numeric: list

    @property
    def worst(self) -> float:
        return self.max_rel_error


def energy_gradient_check(spec: CellProblemSpec, n_coords: int = 20, seed: int = 0,
                          h: float = 1e-5, amplitude: float = 0.1) -> GradientCheckReport:
    """Compare reduced-coordinate gradients with central differences at a random point."""
    disc = discretization(spec.model, spec.N, spec.k, spec.solver.phi_boundary,
                          spec.solver.penalty_fallback)
    rng = np.random.default_rng(seed)
    x = np.zeros(disc.size)
    x[: disc.n_phi] = amplitude * rng.standard_normal(disc.n_phi) / disc.n
    x[disc.n_phi:] = amplitude * rng.standard_normal(disc.size - disc.n_phi)
    _, g = disc.energy_and_grad(x, spec.G, spec.B0)
    # mix displacement, body and field coordinates
    pools = [np.arange(3 * disc.cmap.n_free), np.arange(3 * disc.cmap.n_free, disc.n_phi),
             np.arange(disc.n_phi, disc.size)]
    pools = [p for p in pools if p.size]
    coords = []
    for i in range(n_coords):
        p = pools[i % len(pools)]
        coords.append(int(rng.choice(p)))
    num = []
    for c in coords:
        e = np.zeros(disc.size)
        e[c] = h
        num.append((disc.energy(x + e, spec.G, spec.B0) - disc.energy(x - e, spec.G, spec.B0)) / (2 * h))
    num = np.array(num)
    ana = g[coords]
    scale = max(float(np.abs(ana).max()), 1e-300)
    err = float(np.abs(num - ana).max() / scale)
    return GradientCheckReport(err, coords, ana.tolist(), num.tolist())
