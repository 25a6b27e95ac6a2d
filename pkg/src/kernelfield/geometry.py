"""Rectangular domains, overlapping covers, partition-of-unity weights,
fill-distance estimation, and serpentine sampling paths."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

POU_KINDS = ("overlap_average", "custom_table")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned closed rectangle lo[k] <= x[k] <= hi[k]."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or len(lo) == 0:
            raise ValueError(f"lo/hi dimension mismatch: {lo} vs {hi}")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"each lo must be strictly below hi, got lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return bool(
            np.all(x >= np.array(self.lo) - tol) and np.all(x <= np.array(self.hi) + tol)
        )

    def contains_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        return np.all((X >= lo) & (X <= hi), axis=1)

    def covers(self, other: "Rect") -> bool:
        return all(a <= b for a, b in zip(self.lo, other.lo)) and all(
            a >= b for a, b in zip(self.hi, other.hi)
        )

    def axis_coords(self, resolution: float) -> list[np.ndarray]:
        """Per-axis coordinates with spacing <= resolution, endpoints included."""
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        coords = []
        for a, b in zip(self.lo, self.hi):
            n = max(1, math.ceil((b - a) / resolution - 1e-12))
            coords.append(np.linspace(a, b, n + 1))
        return coords

    def grid(self, resolution: float) -> np.ndarray:
        """Uniform grid over the rectangle with spacing <= resolution (row-major)."""
        axes = self.axis_coords(resolution)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class Cover:
    """A domain of interest plus overlapping rectangular subdomains covering it."""

    omega: Rect
    subdomains: tuple[Rect, ...]

    def __post_init__(self):
        subs = tuple(self.subdomains)
        if not subs:
            raise ValueError("cover needs at least one subdomain")
        for i, sub in enumerate(subs):
            if sub.dim != self.omega.dim:
                raise ValueError(f"subdomain {i + 1} dimension differs from omega")
            if not self.omega.covers(sub):
                raise ValueError(f"subdomain {i + 1} is not contained in omega")
        object.__setattr__(self, "subdomains", subs)
        grid = self.omega.grid(max(self.omega.sides) / 50)
        member = np.stack([s.contains_batch(grid) for s in subs], axis=1)
        if not np.all(member.any(axis=1)):
            raise ValueError("subdomains do not cover omega (validation grid found a hole)")

    @property
    def n(self) -> int:
        return len(self.subdomains)

    def membership(self, X: np.ndarray) -> np.ndarray:
        """Boolean (m, n) matrix: point i belongs to subdomain j."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return np.stack([s.contains_batch(X) for s in self.subdomains], axis=1)


def grid_cover(omega: Rect, tiles: tuple[int, ...], overlap: float = 0.2) -> Cover:
    """Tile omega into an overlapping grid of rectangles.

    Each base tile is enlarged by ``overlap`` times its side per side and
    clipped to omega, so neighbouring tiles share a band.  ``tiles=(2, 2)``
    with 20% overlap reproduces four quadrant-anchored subdomains.
    """
    if len(tiles) != omega.dim:
        raise ValueError(f"need one tile count per axis, got {tiles} for dim {omega.dim}")
    if any(t < 1 for t in tiles):
        raise ValueError("tile counts must be >= 1")
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    widths = [side / t for side, t in zip(omega.sides, tiles)]
    rects = []
    for index in itertools.product(*(range(t) for t in tiles)):
        lo, hi = [], []
        for k, i in enumerate(index):
            a = omega.lo[k] + i * widths[k]
            b = a + widths[k]
            pad = overlap * widths[k]
            lo.append(max(omega.lo[k], a - pad))
            hi.append(min(omega.hi[k], b + pad))
        rects.append(Rect(tuple(lo), tuple(hi)))
    return Cover(omega, tuple(rects))


@dataclass(frozen=True)
class PartitionOfUnity:
    """Weights over the cover: nonnegative, supported in their subdomain,
    summing to one on omega.

    ``overlap_average`` assigns 1/(overlap count) to each containing
    subdomain.  ``custom_table`` looks up the weight vector for the exact
    membership pattern in a user table keyed by sorted subdomain indices.
    """

    cover: Cover
    kind: str = "overlap_average"
    table: dict[tuple[int, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.kind not in POU_KINDS:
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.kind == "custom_table":
            if not self.table:
                raise ValueError("custom_table partition requires a table")
            n = self.cover.n
            for pattern, w in self.table.items():
                w = tuple(float(v) for v in w)
                if len(w) != n:
                    raise ValueError(f"table entry {pattern} has {len(w)} weights, expected {n}")
                if any(v < 0 or v > 1 for v in w):
                    raise ValueError(f"table entry {pattern} has weights outside [0, 1]")
                if abs(sum(w) - 1.0) > 1e-12:
                    raise ValueError(f"table entry {pattern} does not sum to 1")
                if any(v > 0 and (i not in pattern) for i, v in enumerate(w)):
                    raise ValueError(f"table entry {pattern} puts weight outside its pattern")
        elif self.table is not None:
            raise ValueError("table is only meaningful with kind='custom_table'")

    def weights(self, x) -> np.ndarray:
        w, _ = pou_weights(self, x)
        return w

    def weights_batch(self, X: np.ndarray) -> np.ndarray:
        """Weight matrix (m, n); rows of points outside omega are all zero."""
        X = np.asarray(X, dtype=float)
        inside = self.cover.omega.contains_batch(X)
        member = self.cover.membership(X)
        member[~inside] = False
        if self.kind == "overlap_average":
            counts = member.sum(axis=1)
            counts[counts == 0] = 1
            return member / counts[:, None]
        W = np.zeros(member.shape)
        for i in range(X.shape[0]):
            if inside[i]:
                W[i] = self._lookup(member[i])
        return W

    def _lookup(self, mask: np.ndarray) -> np.ndarray:
        pattern = tuple(int(i) for i in np.flatnonzero(mask))
        try:
            return np.array(self.table[pattern], dtype=float)
        except KeyError:
            raise KeyError(f"partition table has no entry for membership pattern {pattern}")


def pou_weights(pou: PartitionOfUnity, x) -> tuple[np.ndarray, bool]:
    """Weight vector at a point, plus an inside-omega flag.

    Points outside omega get an all-zero weight vector and ``inside=False``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    inside = pou.cover.omega.contains(x)
    if not inside:
        return np.zeros(pou.cover.n), False
    mask = pou.cover.membership(x)[0]
    if pou.kind == "overlap_average":
        count = int(mask.sum())
        if count == 0:
            return np.zeros(pou.cover.n), True
        return mask / count, True
    return pou._lookup(mask), True


def fill_distance(Z, A: Rect, resolution: float) -> float:
    """Largest distance from a grid point of A to its nearest point of Z.

    Grid spacing is <= resolution, so the value is a lower bound on the true
    supremum with error at most resolution * sqrt(dim) / 2.  Empty Z returns
    +inf (nothing covers A).
    """
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        log.warning("fill_distance of an empty point set is +inf")
        return math.inf
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    grid = A.grid(resolution)
    dists, _ = cKDTree(Z).query(grid)
    return float(dists.max())


def _snake_indices(shape: tuple[int, ...]):
    """Multi-indices in boustrophedon order; consecutive indices are grid-adjacent."""
    if len(shape) == 1:
        for i in range(shape[0]):
            yield (i,)
        return
    for parity, outer in enumerate(_snake_indices(shape[1:])):
        rng = range(shape[0]) if parity % 2 == 0 else range(shape[0] - 1, -1, -1)
        for i in rng:
            yield (i,) + outer


def rotated_axis_order(index: int, dim: int) -> tuple[int, ...]:
    """Sweep-axis permutation for the index-th agent of a team.

    Rotating the fastest axis per agent staggers otherwise mirror-image
    sweeps, so co-traveling agents actually meet inside subdomain overlaps.
    """
    shift = index % dim
    return tuple((k + shift) % dim for k in range(dim))


def lawnmower_path(A: Rect, grid_resolution: float, axis_order: tuple[int, ...] | None = None) -> np.ndarray:
    """Serpentine sweep of the grid vertices of A at the given spacing.

    Starts at the lo corner, alternates sweep direction row by row, and
    visits every vertex exactly once.  Spacing equals the resolution when
    the side lengths divide evenly and shrinks slightly otherwise (endpoints
    are always included).  ``axis_order`` permutes which axis is swept
    fastest (default: axis 0).
    """
    axes = A.axis_coords(grid_resolution)
    order = tuple(range(A.dim)) if axis_order is None else tuple(axis_order)
    if sorted(order) != list(range(A.dim)):
        raise ValueError(f"axis_order must be a permutation of 0..{A.dim - 1}, got {order}")
    shape = tuple(len(axes[k]) for k in order)
    path = np.empty((int(np.prod(shape)), A.dim))
    for row, idx in enumerate(_snake_indices(shape)):
        for pos, k in enumerate(order):
            path[row, k] = axes[k][idx[pos]]
    return path


def refine_schedule(A: Rect, resolutions, axis_order: tuple[int, ...] | None = None) -> np.ndarray:
    """Concatenated lawnmower sweeps at strictly decreasing resolutions."""
    res = [float(r) for r in resolutions]
    if not res:
        raise ValueError("resolution schedule is empty")
    if any(b >= a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be strictly decreasing, got {res}")
    return np.vstack([lawnmower_path(A, r, axis_order) for r in res])


def stage_lengths(A: Rect, resolutions) -> list[int]:
    """Waypoint count of each sweep in a refinement schedule."""
    return [lawnmower_path(A, float(r)).shape[0] for r in resolutions]
