"""Periodic grid fields, spectral divergence and the divergence-free projection.

Vector fields are stored as arrays of shape (n, n, n, 3), tensor fields as
(n, n, n, 3, 3); the spatial index order is row-major with the last spatial
axis fastest. Fourier coefficients use the normalisation c_k = FFT(f) / n^3,
so that the mean square of a field equals sum_k |c_k|^2.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PERIODIC = "periodic"
ZERO_DIRICHLET = "zero_dirichlet"
_BOUNDARIES = (PERIODIC, ZERO_DIRICHLET)


@dataclass(frozen=True)
class GridVectorField:
    values: np.ndarray = field(repr=False)
    boundary: str = PERIODIC

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[-1] != 3 or not (v.shape[0] == v.shape[1] == v.shape[2]):
            raise ValueError(f"expected (n, n, n, 3) values, got {v.shape}")
        if self.boundary not in _BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def spectral(self) -> np.ndarray:
        return workspace(self.N).fft(self.values)


class SpectralWorkspace:
    """Frequency vectors for an n^3 periodic grid on the unit cell.

    The Nyquist component of even grids is zeroed so that spectral
    derivatives stay real and skew-adjoint.
    """

    def __init__(self, n: int):
        self.N = n
        k = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0.0
        xi1 = 2 * np.pi * k
        self.xi = np.stack(np.meshgrid(xi1, xi1, xi1, indexing="ij"), axis=-1)
        self.xi2 = np.einsum("...i,...i->...", self.xi, self.xi)
        self.nonzero = self.xi2 > 0
        inv = np.zeros_like(self.xi2)
        inv[self.nonzero] = 1.0 / self.xi2[self.nonzero]
        self.inv_xi2 = inv

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fftn(f, axes=(0, 1, 2)) / self.N**3

    def ifft(self, c: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(c * self.N**3, axes=(0, 1, 2)).real


_local = threading.local()


def workspace(n: int) -> SpectralWorkspace:
    cache = getattr(_local, "cache", None)
    if cache is None:
        cache = _local.cache = {}
    ws = cache.get(n)
    if ws is None:
        ws = cache[n] = SpectralWorkspace(n)
    return ws


def _values(B) -> np.ndarray:
    if isinstance(B, GridVectorField):
        if B.boundary != PERIODIC:
            raise ValueError("spectral operators require a periodic field")
        return B.values
    return np.asarray(B, dtype=float)


def divergence(B) -> np.ndarray:
    v = _values(B)
    ws = workspace(v.shape[0])
    c = ws.fft(v)
    return ws.ifft(1j * np.einsum("...i,...i->...", ws.xi, c))


def project_div_free_array(v: np.ndarray) -> np.ndarray:
    """B - grad(w) with laplace(w) = div(B); keeps the mean of B."""
    ws = workspace(v.shape[0])
    c = ws.fft(v)
    xc = np.einsum("...i,...i->...", ws.xi, c)
    c = c - ws.xi * (xc * ws.inv_xi2)[..., None]
    return ws.ifft(c)


def project_div_free(B) -> GridVectorField:
    return GridVectorField(project_div_free_array(_values(B)), PERIODIC)


def dual_norm_div(B) -> float:
    """Discrete (W^{1,2}_per)* norm of div B."""
    v = _values(B)
    ws = workspace(v.shape[0])
    c = ws.fft(v)
    xc = np.einsum("...i,...i->...", ws.xi, c)
    return float(np.sqrt(np.sum(np.abs(xc) ** 2 / (1.0 + ws.xi2))))


def l2_norm(v) -> float:
    """L2(Q) norm approximated by the grid mean."""
    v = v.values if isinstance(v, GridVectorField) else np.asarray(v)
    return float(np.sqrt(np.mean(np.sum(v.reshape(v.shape[0] ** 3, -1) ** 2, axis=1))))


def mean(B) -> np.ndarray:
    v = B.values if isinstance(B, GridVectorField) else np.asarray(B, dtype=float)
    return v.reshape(-1, v.shape[-1]).mean(axis=0)


def zero_mean(B):
    if isinstance(B, GridVectorField):
        return GridVectorField(B.values - mean(B), B.boundary)
    v = np.asarray(B, dtype=float)
    return v - mean(v)


def projection_suite(N: int, count: int, seed: int) -> dict:
    """Projection checks on `count` seeded random periodic fields.

    Reports the worst spectral divergence of P(B), the idempotence defect
    |PP(B) - P(B)| / |B| and the ratio |B - P(B)| / dual_norm_div(B).
    """
    rng = np.random.default_rng(seed)
    worst_div = worst_idem = worst_ratio = 0.0
    bound = float(np.sqrt(1 + 4 * np.pi**2))
    for _ in range(count):
        B = rng.standard_normal((N, N, N, 3))
        P = project_div_free_array(B)
        PP = project_div_free_array(P)
        worst_div = max(worst_div, float(np.abs(divergence(P)).max()))
        worst_idem = max(worst_idem, l2_norm(PP - P) / l2_norm(B))
        dn = dual_norm_div(B)
        if dn > 0:
            worst_ratio = max(worst_ratio, l2_norm(B - P) / dn)
    return {"N": N, "count": count, "seed": seed, "max_div": worst_div,
            "max_idempotence": worst_idem, "max_residual_ratio": worst_ratio, "ratio_bound": bound,
            "passed": worst_div <= 1e-10 and worst_idem <= 1e-12 and worst_ratio <= bound}


# --- nodal finite differences -------------------------------------------------
#
# Nodes sit at i/n; voxel (i, j, k) has corner nodes (i + a, j + b, k + c),
# a, b, c in {0, 1}, taken modulo n. The gradient at a voxel center is the
# exact gradient of the trilinear interpolant of the corner values.


def _shift(f, axis):
    return np.roll(f, -1, axis=axis)


def _shift_t(f, axis):
    return np.roll(f, 1, axis=axis)


def nodal_gradient(phi: np.ndarray) -> np.ndarray:
    """Voxel-center gradient of nodal values phi (n, n, n, 3) -> (n, n, n, 3, 3).

    Entry [..., i, a] is d(phi_i)/d(x_a).
    """
    n = phi.shape[0]
    avg = [0.5 * (phi + _shift(phi, a)) for a in range(3)]
    out = np.empty(phi.shape + (3,))
    for a in range(3):
        b, c = [x for x in range(3) if x != a]
        t = 0.5 * (avg[b] + _shift(avg[b], c))
        out[..., a] = (_shift(t, a) - t) * n
    return out


def nodal_gradient_adjoint(T: np.ndarray) -> np.ndarray:
    """Adjoint of nodal_gradient in the plain Euclidean pairing."""
    n = T.shape[0]
    out = np.zeros(T.shape[:-1])
    for a in range(3):
        b, c = [x for x in range(3) if x != a]
        t = (_shift_t(T[..., a], a) - T[..., a]) * n
        t = 0.5 * (t + _shift_t(t, c))
        t = 0.5 * (t + _shift_t(t, b))
        out += t
    return out


# Kuhn split: each voxel is cut into 6 tetrahedra, one per axis permutation p,
# with vertices 0, e_p0, e_p0 + e_p1, (1, 1, 1). The gradient of the linear
# interpolant is constant on each tetrahedron and has no spurious zero modes.
KUHN_PERMS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))


def _kuhn_paths():
    paths = []
    for p in KUHN_PERMS:
        v = [np.zeros(3, dtype=int)]
        for a in p:
            w = v[-1].copy()
            w[a] = 1
            v.append(w)
        # (axis, upper vertex, lower vertex) for each edge of the path
        paths.append([(p[j], tuple(v[j + 1]), tuple(v[j])) for j in range(3)])
    return paths


KUHN_PATHS = _kuhn_paths()


def _kuhn_edges():
    # the 18 path edges are 12 distinct cube edges, each shared by one or two tetrahedra
    edges: dict = {}
    for t, path in enumerate(KUHN_PATHS):
        for a, hi, lo in path:
            edges.setdefault((a, hi, lo), []).append(t)
    return [(a, hi, lo, tuple(ts)) for (a, hi, lo), ts in edges.items()]


KUHN_EDGES = _kuhn_edges()


def _corner(phi, offset):
    return np.roll(phi, tuple(-o for o in offset), axis=(0, 1, 2)) if any(offset) else phi


def kuhn_gradient(phi: np.ndarray) -> np.ndarray:
    """Per-tetrahedron gradients (n, n, n, 6, 3, 3); entry [..., t, i, a] = d(phi_i)/d(x_a)."""
    n = phi.shape[0]
    corners = {o: _corner(phi, o) for o in np.ndindex(2, 2, 2)}
    out = np.empty(phi.shape[:3] + (6, 3, 3))
    for a, hi, lo, tets in KUHN_EDGES:
        d = corners[hi] - corners[lo]
        d *= n
        for t in tets:
            out[..., t, :, a] = d
    return out


def kuhn_gradient_adjoint(T: np.ndarray) -> np.ndarray:
    """Adjoint of kuhn_gradient in the plain Euclidean pairing."""
    n = T.shape[0]
    acc = {o: np.zeros(T.shape[:3] + (3,)) for o in np.ndindex(2, 2, 2)}
    for a, hi, lo, tets in KUHN_EDGES:
        s = T[..., tets[0], :, a] * n
        for t in tets[1:]:
            s += T[..., t, :, a] * n
        acc[hi] += s
        acc[lo] -= s
    out = np.zeros(T.shape[:3] + (3,))
    for o, v in acc.items():
        out += np.roll(v, o, axis=(0, 1, 2)) if any(o) else v
    return out


def kuhn_symbol(n: int) -> np.ndarray:
    """Fourier symbols d[..., t, a] of the Kuhn gradient on an n^3 node grid."""
    theta = 2 * np.pi * np.fft.fftfreq(n)
    th = np.stack(np.meshgrid(theta, theta, theta, indexing="ij"), axis=-1)
    d = np.empty((n, n, n, 6, 3), dtype=complex)
    for t, path in enumerate(KUHN_PATHS):
        for a, hi, lo in path:
            d[..., t, a] = n * (np.exp(1j * th @ np.array(hi)) - np.exp(1j * th @ np.array(lo)))
    return d


def boundary_nodes(n: int) -> np.ndarray:
    """Nodes on the faces of Q (index 0 on some axis; face x=1 is identified with it)."""
    i = np.arange(n) == 0
    return i[:, None, None] | i[None, :, None] | i[None, None, :]


def gradient_dirichlet(phi) -> np.ndarray:
    """Voxel-center gradient of a field vanishing on the cell boundary."""
    if isinstance(phi, GridVectorField):
        if phi.boundary != ZERO_DIRICHLET:
            raise ValueError("gradient_dirichlet requires a zero_dirichlet field")
        v = phi.values
    else:
        v = np.asarray(phi, dtype=float)
    if np.any(v[boundary_nodes(v.shape[0])] != 0.0):
        raise ValueError("field does not vanish on the cell boundary")
    return nodal_gradient(v)


# --- raw dumps ----------------------------------------------------------------


def save_field(field_: GridVectorField, path) -> None:
    """Raw little-endian float64 dump plus a JSON sidecar at <path>.json."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(field_.values, dtype="<f8").tobytes())
    sidecar = {"N": field_.N, "components": 3, "boundary": field_.boundary}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_field(path) -> GridVectorField:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    n, comps = int(meta["N"]), int(meta["components"])
    vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(n, n, n, comps)
    return GridVectorField(vals.copy(), meta["boundary"])
