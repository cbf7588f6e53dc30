"""Tabulation of f_hom, structural audits and the desk-scale Gamma-consistency experiment."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cell_problem import CellProblemSpec, SolverOpts, f_hom, solve_cell
from .errors import InvalidParams, NonConvergence
from .geometry import sym
from .materials import MaterialModel
from .outputs import config_hash as _hash

CSV_HEADER = [f"G{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["B1", "B2", "B3", "fhom",
                                                                     "k_used", "grad_norm"]

# Torus-based Gamma checks cannot see the boundary layer; Dirichlet data restores it.
GAMMA_DEVIATION = {
    "dirichlet": ("u = lambda x on the boundary of the unit cube (phi = 0 on the faces), beta periodic "
                  "zero-mean divergence-free; exterior field term omitted"),
    "periodic": ("unit torus: u = lambda x + periodic fluctuation, beta periodic zero-mean "
                 "divergence-free; Dirichlet datum and exterior field term omitted"),
}


@dataclass
class TablePoint:
    G: np.ndarray
    B: np.ndarray
    value: float
    k_used: int
    grad_norm: float
    ok: bool = True
    error: str = ""

    def row(self) -> list:
        return [*self.G.ravel().tolist(), *self.B.tolist(), self.value, self.k_used, self.grad_norm]


@dataclass
class HomTable:
    points: list
    model_id: str
    N: int
    config_hash: str = ""

    @property
    def G(self) -> np.ndarray:
        return np.array([p.G for p in self.points]).reshape(-1, 3, 3)

    @property
    def B(self) -> np.ndarray:
        return np.array([p.B for p in self.points]).reshape(-1, 3)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points], dtype=float)

    @property
    def failed(self) -> list:
        return [i for i, p in enumerate(self.points) if not p.ok]

    def rows(self) -> list:
        return [p.row() for p in self.points]

    def to_csv(self, path):
        from .outputs import write_csv

        return write_csv(path, CSV_HEADER, self.rows())

    @classmethod
    def from_csv(cls, path, model_id: str = "", N: int = 0) -> "HomTable":
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
        pts = [TablePoint(r[:9].reshape(3, 3), r[9:12], float(r[12]), int(r[13]), float(r[14]),
                          bool(np.isfinite(r[12]))) for r in data]
        return cls(pts, model_id, N)


# --- tabulation -----------------------------------------------------------------------------


def _solve_point(args):
    G, B, model, N, k_max, solver = args
    try:
        res = f_hom(G, B, model, N=N, k_max=k_max, solver=solver)
        return float(res.value), int(res.k_used), float(res.solution.grad_norm), True, ""
    except NonConvergence as exc:
        return float("nan"), 0, float(exc.grad_norm), False, str(exc)


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        # map keeps submission order, so the reduction is deterministic
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _as_list(samples, shape):
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise InvalidParams("sample lists must be nonempty")
    return list(arr.reshape((-1,) + shape))


def tabulate(model: MaterialModel, G_samples, B_samples, N: int = 16, k_max: int = 1,
             solver: Optional[SolverOpts] = None, threads: int = 1, separable: Optional[bool] = None,
             config=None) -> HomTable:
    """f_hom on the product grid G_samples x B_samples (G-major order).

    For models whose cell problem decouples (elastic part in G, magnetic part
    in B, single cell sufficient) the product grid is assembled from the two
    one-parameter families: f(G, B) = f(G, 0) + f(0, B) - f(0, 0).
    """
    Gs = _as_list(G_samples, (3, 3))
    Bs = _as_list(B_samples, (3,))
    solver = solver or SolverOpts()
    if separable is None:
        separable = model.separable and (k_max == 1 or model.convex)
    zero_G, zero_B = np.zeros((3, 3)), np.zeros(3)
    if separable:
        if not model.separable:
            raise InvalidParams(f"model {model.name} is not separable")
        tasks = [(G, zero_B, model, N, k_max, solver) for G in Gs]
        tasks += [(zero_G, B, model, N, k_max, solver) for B in Bs]
        tasks.append((zero_G, zero_B, model, N, k_max, solver))
        out = _map(_solve_point, tasks, threads)
        eG, eB, e0 = out[: len(Gs)], out[len(Gs): len(Gs) + len(Bs)], out[-1]
        points = []
        for (G, a), (B, b) in itertools.product(zip(Gs, eG), zip(Bs, eB)):
            ok = a[3] and b[3] and e0[3]
            val = a[0] + b[0] - e0[0] if ok else float("nan")
            points.append(TablePoint(G, B, val, max(a[1], b[1]), float(np.hypot(a[2], b[2])), ok,
                                     a[4] or b[4] or e0[4]))
    else:
        pairs = list(itertools.product(Gs, Bs))
        out = _map(_solve_point, [(G, B, model, N, k_max, solver) for G, B in pairs], threads)
        points = [TablePoint(G, B, *o) for (G, B), o in zip(pairs, out)]
    h = _hash(config) if config is not None else ""
    return HomTable(points, model.name, N, h)


def axis_grid(G_axes, G_values, B_values) -> tuple[np.ndarray, np.ndarray]:
    """Product samples G = sum_a t_a * G_axes[a] with t_a in G_values, and B in B_values^3."""
    axes = np.asarray(G_axes, dtype=float).reshape(-1, 3, 3)
    t = np.asarray(G_values, dtype=float)
    Gs = [np.tensordot(np.array(c), axes, axes=1) for c in itertools.product(t, repeat=len(axes))]
    b = np.asarray(B_values, dtype=float)
    Bs = [np.array(c) for c in itertools.product(b, repeat=3)]
    return np.array(Gs), np.array(Bs)


# --- audits ---------------------------------------------------------------------------------


@dataclass
class GrowthReport:
    C: float
    lower_margin: float
    upper_margin: float
    worst_lower: int
    worst_upper: int
    n_points: int

    @property
    def passed(self) -> bool:
        return self.lower_margin >= 0 and self.upper_margin >= 0

    def as_dict(self) -> dict:
        return {"C": self.C, "lower_margin": self.lower_margin, "upper_margin": self.upper_margin,
                "worst_lower": self.worst_lower, "worst_upper": self.worst_upper,
                "n_points": self.n_points, "passed": self.passed}


def audit_growth_coercivity(table: HomTable, model: MaterialModel, C: Optional[float] = None) -> GrowthReport:
    """Check (1/C)(|sym G|^2 + |B|^2) - C <= value <= C(1 + |G|^2 + |B|^2) at every point."""
    if not table.points:
        raise InvalidParams("table is empty")
    C = float(model.growth_C if C is None else C)
    G, B, v = table.G, table.B, table.values
    s2 = np.sum(sym(G) ** 2, axis=(-2, -1)) + np.sum(B**2, axis=-1)
    g2 = np.sum(G**2, axis=(-2, -1)) + np.sum(B**2, axis=-1)
    lower = v - (s2 / C - C)
    upper = C * (1 + g2) - v
    # failed points count as violations
    lower = np.where(np.isfinite(lower), lower, -np.inf)
    upper = np.where(np.isfinite(upper), upper, -np.inf)
    il, iu = int(np.argmin(lower)), int(np.argmin(upper))
    return GrowthReport(C, float(lower[il]), float(upper[iu]), il, iu, len(v))


@dataclass
class LipschitzReport:
    empirical_L: float
    worst_pair: tuple
    n_pairs: int

    def as_dict(self) -> dict:
        return {"empirical_L": self.empirical_L, "worst_pair": list(self.worst_pair),
                "n_pairs": self.n_pairs}


def audit_lipschitz(table: HomTable, chunk: int = 512) -> LipschitzReport:
    """max over pairs of |v0 - v1| / ((1 + |G0| + |G1| + |B0| + |B1|)(|G0 - G1| + |B0 - B1|))."""
    ok = np.isfinite(table.values)
    idx = np.flatnonzero(ok)
    if idx.size < 2:
        raise InvalidParams("Lipschitz audit needs at least two finite points")
    G = table.G[idx].reshape(-1, 9)
    B = table.B[idx]
    v = table.values[idx]
    nG, nB = np.linalg.norm(G, axis=1), np.linalg.norm(B, axis=1)
    best, pair, n_pairs = 0.0, (-1, -1), 0
    for s in range(0, len(v), chunk):
        sl = slice(s, s + chunk)
        dist = (np.linalg.norm(G[sl, None] - G[None], axis=-1)
                + np.linalg.norm(B[sl, None] - B[None], axis=-1))
        weight = 1 + nG[sl, None] + nG[None] + nB[sl, None] + nB[None]
        rows = np.arange(s, min(s + chunk, len(v)))[:, None]
        # each unordered pair once; duplicates (zero distance) are skipped
        valid = (np.arange(len(v))[None] > rows) & (dist > 0)
        q = np.where(valid, np.abs(v[sl, None] - v[None]) / np.where(valid, weight * dist, 1.0), 0.0)
        n_pairs += int(valid.sum())
        i, j = np.unravel_index(int(np.argmax(q)), q.shape)
        if q[i, j] > best:
            best, pair = float(q[i, j]), (int(idx[s + i]), int(idx[j]))
    return LipschitzReport(best, pair, n_pairs)


# --- Gamma-consistency ----------------------------------------------------------------------


@dataclass
class GammaReport:
    epsilons: list
    energies: list
    target: float
    gaps: list
    config: dict = field(default_factory=dict)

    @property
    def relative_gaps(self) -> list:
        return [g / abs(self.target) if self.target else float("inf") for g in self.gaps]

    @property
    def monotone(self) -> bool:
        a = np.abs(self.gaps)
        return bool(np.all(np.diff(a) <= 0))

    def as_dict(self) -> dict:
        return {"epsilons": list(self.epsilons), "energies": list(self.energies),
                "target": self.target, "gaps": list(self.gaps), "config": self.config}


def gamma_check(model: MaterialModel, lam, B0, epsilons=(0.5, 0.25), N_micro: int = 16,
                solver: Optional[SolverOpts] = None, displacement_bc: str = "dirichlet") -> GammaReport:
    """Discrete E_eps minima on the unit cube for the affine datum (lam, B0) against f_hom(lam, B0).

    epsilon = 1/m puts m copies of the micro-cell along each edge; the mesh
    has m * N_micro nodes per edge. The target is the single-cell periodic
    f_hom at the same micro resolution (|Omega| = 1).
    """
    if displacement_bc not in GAMMA_DEVIATION:
        raise InvalidParams(f"unknown displacement_bc {displacement_bc!r}")
    if model.mask is not None and model.mask.N != N_micro:
        raise InvalidParams(f"model mask has resolution {model.mask.N}, N_micro is {N_micro}")
    lam = np.asarray(lam, dtype=float).reshape(3, 3)
    B0 = np.asarray(B0, dtype=float).reshape(3)
    solver = solver or SolverOpts()
    ms = []
    for eps in epsilons:
        m = round(1 / float(eps))
        if m < 1 or abs(m * float(eps) - 1) > 1e-12:
            raise InvalidParams(f"epsilon must be 1/m for an integer m, got {eps}")
        ms.append(m)
    base = replace(solver, phi_boundary="periodic")
    target = f_hom(lam, B0, model, N=N_micro, k_max=1, solver=base).value
    run = replace(solver, phi_boundary=displacement_bc)
    energies, iters = [], []
    for m in ms:
        sol = solve_cell(CellProblemSpec(lam, B0, m, N_micro, model, run))
        energies.append(sol.energy)
        iters.append(sol.iterations)
    gaps = [e - target for e in energies]
    config = {"model": model.name, "params": model.params.to_dict() if model.params else None,
              "lambda": lam.tolist(), "B0": B0.tolist(), "N_micro": N_micro,
              "grids": [m * N_micro for m in ms], "grad_tol": solver.grad_tol,
              "mode": solver.mode, "displacement_bc": displacement_bc,
              "deviation": GAMMA_DEVIATION[displacement_bc], "iterations": iters}
    return GammaReport([float(e) for e in epsilons], energies, float(target), gaps, config)
