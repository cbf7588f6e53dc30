"""Unit-cell geometry: analytic inclusions, voxel masks and epsilon tilings.

All coordinates are fractions of the unit cell Q = (0, 1)^3. Voxel (i, j, k)
of an N^3 mask covers [i/N, (i+1)/N] x ... and is occupied iff its center
lies inside the analytic inclusion.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidParams, SeparationViolated

# 6-neighbour structuring element
_FACE_CONNECTIVITY = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if len(self.center) != 3:
            raise InvalidParams("ball center must have 3 coordinates")
        if not self.radius > 0:
            raise InvalidParams(f"ball radius must be positive, got {self.radius}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center, dtype=float)
        return np.einsum("...i,...i->...", d, d) < self.radius**2

    def face_clearance(self) -> float:
        c = np.asarray(self.center, dtype=float)
        return float(min(np.min(c), np.min(1.0 - c)) - self.radius)

    def to_dict(self) -> dict:
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise InvalidParams("box corners must have 3 coordinates")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise InvalidParams(f"box requires lo < hi componentwise, got {self.lo}, {self.hi}")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((pts > lo) & (pts < hi), axis=-1)

    def face_clearance(self) -> float:
        return float(min(np.min(self.lo), np.min(1.0 - np.asarray(self.hi))))

    def to_dict(self) -> dict:
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class InclusionSpec:
    """Union of analytic primitives inside the unit cell.

    An empty union describes a homogeneous cell without inclusions.
    """

    shapes: tuple = ()

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        inside = np.zeros(pts.shape[:-1], dtype=bool)
        for s in self.shapes:
            inside |= s.contains(pts)
        return inside

    def face_clearance(self) -> float:
        """Smallest distance from the closed inclusion to the cell boundary."""
        if not self.shapes:
            return float("inf")
        return min(s.face_clearance() for s in self.shapes)

    def check_well_separated(self) -> None:
        if self.face_clearance() <= 0:
            raise SeparationViolated(
                f"inclusion reaches the cell boundary (clearance {self.face_clearance():.3g})"
            )

    @classmethod
    def from_dicts(cls, items: Sequence[dict]) -> "InclusionSpec":
        shapes = []
        for it in items:
            kind = it.get("type")
            if kind == "ball":
                shapes.append(Ball(tuple(it["center"]), float(it["radius"])))
            elif kind == "box":
                shapes.append(Box(tuple(it["lo"]), tuple(it["hi"])))
            else:
                raise InvalidParams(f"unknown inclusion type {kind!r}")
        return cls(tuple(shapes))

    def to_dicts(self) -> list[dict]:
        return [s.to_dict() for s in self.shapes]


@dataclass(frozen=True)
class InclusionMask:
    N: int
    occupancy: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)
    n_components: int
    separation: float

    @property
    def volume_fraction(self) -> float:
        return float(self.occupancy.mean())

    def at(self, z) -> bool:
        """Occupancy of the voxel containing the point z (taken modulo 1)."""
        idx = np.floor(np.mod(np.asarray(z, dtype=float), 1.0) * self.N).astype(int)
        idx = np.minimum(idx, self.N - 1)
        return bool(self.occupancy[tuple(idx)])

    def replicate(self, k: int) -> "InclusionMask":
        """Mask of the k-times replicated cell sampled at resolution k*N."""
        if k == 1:
            return self
        occ = np.tile(self.occupancy, (k, k, k))
        labels, count = ndimage.label(occ, structure=_FACE_CONNECTIVITY)
        return InclusionMask(self.N * k, occ, labels, int(count), self.separation)

    def dump(self, path) -> None:
        """Raw uint8 voxel dump with an (N, N, N) int32 little-endian header."""
        header = np.array([self.N] * 3, dtype="<i4").tobytes()
        Path(path).write_bytes(header + self.occupancy.astype(np.uint8).tobytes(order="C"))


def load_mask_dump(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    shape = tuple(np.frombuffer(raw[:12], dtype="<i4"))
    return np.frombuffer(raw[12:], dtype=np.uint8).reshape(shape).astype(bool)


def voxel_centers(N: int) -> np.ndarray:
    c = (np.arange(N) + 0.5) / N
    return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)


def _face_separation(occ: np.ndarray) -> float:
    N = occ.shape[0]
    idx = np.argwhere(occ)
    if idx.size == 0:
        return float("inf")
    return float(np.min(np.minimum(idx, N - 1 - idx)))


def mask_from_occupancy(occ: np.ndarray) -> InclusionMask:
    occ = np.asarray(occ, dtype=bool)
    N = occ.shape[0]
    if occ.shape != (N, N, N):
        raise InvalidParams(f"occupancy must be a cubic array, got {occ.shape}")
    sep = _face_separation(occ)
    if sep < 1:
        raise SeparationViolated(
            f"{int(np.sum(_touching(occ)))} occupied voxels touch the cell faces at N={N}"
        )
    labels, count = ndimage.label(occ, structure=_FACE_CONNECTIVITY)
    return InclusionMask(N, occ, labels, int(count), sep)


def _touching(occ: np.ndarray) -> np.ndarray:
    N = occ.shape[0]
    face = np.zeros_like(occ)
    face[[0, -1], :, :] = True
    face[:, [0, -1], :] = True
    face[:, :, [0, -1]] = True
    return occ & face


def build_mask(spec: InclusionSpec, N: int) -> InclusionMask:
    if N < 4:
        raise InvalidParams(f"mask resolution must be at least 4, got {N}")
    return mask_from_occupancy(spec.contains(voxel_centers(N)))


def empty_mask(N: int) -> InclusionMask:
    return build_mask(InclusionSpec(), N)


@dataclass(frozen=True)
class TilingIndex:
    epsilon: Fraction
    interior_cells: tuple
    domain_box: tuple

    @property
    def covered_measure(self) -> Fraction:
        return len(self.interior_cells) * self.epsilon**3

    @property
    def complement_measure(self) -> Fraction:
        lo, hi = self.domain_box
        vol = Fraction(1)
        for a, b in zip(lo, hi):
            vol *= Fraction(b) - Fraction(a)
        return vol - self.covered_measure


def tile(epsilon, domain=((0, 0, 0), (1, 1, 1))) -> TilingIndex:
    """List the lattice translates z with epsilon*(z + Q) inside the box domain."""
    eps = Fraction(epsilon).limit_denominator(10**9) if isinstance(epsilon, float) else Fraction(epsilon)
    if eps <= 0:
        raise InvalidParams(f"epsilon must be positive, got {epsilon}")
    lo = [Fraction(x).limit_denominator(10**9) for x in domain[0]]
    hi = [Fraction(x).limit_denominator(10**9) for x in domain[1]]
    ranges = []
    for a, b in zip(lo, hi):
        # eps*z >= a and eps*(z+1) <= b
        zmin = -((-a) // eps)
        zmax = b // eps - 1
        ranges.append(range(int(zmin), int(zmax) + 1))
    cells = tuple(itertools.product(*ranges))
    return TilingIndex(eps, cells, (tuple(lo), tuple(hi)))


def sym(G):
    G = np.asarray(G, dtype=float)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def skw(G):
    G = np.asarray(G, dtype=float)
    return 0.5 * (G - np.swapaxes(G, -1, -2))
