"""Radial kernel families, Gram matrices, and guarded SPD solves.

Every other module funnels its numerics through here: the three kernel
families (Matern 5/2, Gaussian, compactly supported Wendland C2), pairwise
Gram assembly, and Cholesky-based solves with a bounded jitter escalation
as a conditioning backstop.  Jitter use is logged, never silent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

KERNEL_FAMILIES = ("matern52", "gaussian", "wendland_c2")

_SQRT5 = math.sqrt(5.0)

#: Number of rungs in the jitter escalation ladder (factors of 10).
JITTER_LADDER = 8


class SingularGramError(np.linalg.LinAlgError):
    """Gram matrix could not be factored even after jitter escalation."""

    def __init__(self, message: str, centers: np.ndarray | None = None):
        if centers is not None:
            head = np.asarray(centers)[:4]
            message += f" (centers: {len(centers)} points, first {head.tolist()})"
        super().__init__(message)
        self.centers = centers


@dataclass(frozen=True)
class KernelSpec:
    """A normalized radial kernel: family plus output scale and length scale.

    ``kernel_eval(spec, x, x) == sigma**2`` for every family; all families
    are radial and symmetric in their arguments.
    """

    family: str
    sigma: float
    ell: float
    dim: int = 2

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise ValueError(f"ell must be positive and finite, got {self.ell}")
        if not (isinstance(self.dim, int) and self.dim >= 1):
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.family == "wendland_c2" and self.dim > 3:
            raise ValueError("wendland_c2 is positive definite only for dim <= 3")

    def scaled(self, factor: float) -> "KernelSpec":
        """Scale both hyperparameters [sigma, ell] by ``factor``."""
        return KernelSpec(self.family, factor * self.sigma, factor * self.ell, self.dim)


def default_jitter(spec: KernelSpec) -> float:
    """Base jitter used as a conditioning backstop, relative to the kernel scale."""
    return 1e-12 * spec.sigma**2


def as_points(Z, dim: int) -> np.ndarray:
    """Coerce a point list to a (n, dim) float64 array, validating shape and finiteness."""
    P = np.asarray(Z, dtype=float)
    if P.size == 0:
        return P.reshape(0, dim)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    if P.ndim != 2 or P.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got array of shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise ValueError("point coordinates must be finite")
    return P


def radial_profile(spec: KernelSpec, r) -> np.ndarray:
    """Evaluate the kernel profile at distances ``r`` (vectorized, r >= 0)."""
    r = np.asarray(r, dtype=float)
    if spec.family == "matern52":
        u = _SQRT5 * r / spec.ell
        return spec.sigma**2 * (1.0 + u + u * u / 3.0) * np.exp(-u)
    if spec.family == "gaussian":
        u = r / spec.ell
        return spec.sigma**2 * np.exp(-0.5 * u * u)
    # wendland_c2: (1-u)_+^4 (4u+1), zero for r >= ell
    u = r / spec.ell
    base = np.clip(1.0 - u, 0.0, None)
    return spec.sigma**2 * base**4 * (4.0 * u + 1.0)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value at a single pair of points."""
    xp = as_points(x, spec.dim)
    yp = as_points(y, spec.dim)
    if xp.shape[0] != 1 or yp.shape[0] != 1:
        raise ValueError("kernel_eval takes single points; use gram for batches")
    r = float(np.linalg.norm(xp[0] - yp[0]))
    return float(radial_profile(spec, r))


def kernel_vector(spec: KernelSpec, Z, x) -> np.ndarray:
    """Column k(Z, x): kernel of each point in Z against the single point x."""
    P = as_points(Z, spec.dim)
    if P.shape[0] == 0:
        return np.zeros(0)
    xp = as_points(x, spec.dim)
    r = np.linalg.norm(P - xp[0], axis=1)
    return radial_profile(spec, r)


def gram(spec: KernelSpec, Z1, Z2) -> np.ndarray:
    """Pairwise kernel matrix with entries k(Z1[i], Z2[j])."""
    A = as_points(Z1, spec.dim)
    B = as_points(Z2, spec.dim)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    return radial_profile(spec, cdist(A, B))


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of G + jitter*I, remembering the jitter used."""

    lower: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, B: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros_like(np.asarray(B, dtype=float))
        return cho_solve((self.lower, True), np.asarray(B, dtype=float))


def spd_factor(G: np.ndarray, jitter0: float = 0.0, centers=None) -> SpdFactor:
    """Factor a symmetric PSD matrix, escalating jitter through a bounded ladder.

    Tries ``j = 0`` first, then ``jitter0 * 10**k`` for ``k = 0..7``.  The
    jitter actually used is recorded on the returned factor and logged.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    if G.ndim != 2 or G.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {G.shape}")
    if n == 0:
        return SpdFactor(np.zeros((0, 0)), 0.0)
    candidates = [0.0]
    if jitter0 > 0:
        candidates += [jitter0 * 10.0**k for k in range(JITTER_LADDER)]
    for j in candidates:
        A = G if j == 0.0 else G + j * np.eye(n)
        try:
            low = cholesky(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if j > 0.0:
            log.info("spd_factor: applied jitter %.3e to a %dx%d Gram matrix", j, n, n)
        return SpdFactor(low, j)
    raise SingularGramError(
        f"Gram matrix of size {n} not factorable after jitter escalation up to "
        f"{candidates[-1]:.3e}",
        centers=centers,
    )


def solve_spd(G: np.ndarray, B: np.ndarray, jitter0: float = 0.0, centers=None) -> tuple[np.ndarray, float]:
    """Solve (G + jitter*I) X = B, returning (X, jitter_used)."""
    fac = spd_factor(G, jitter0, centers=centers)
    return fac.solve(B), fac.jitter


class GrowingCholesky:
    """Cholesky factor that grows one center at a time.

    Appending a row costs O(n^2) via a triangular solve, so long online runs
    avoid refactoring the full Gram matrix at every basis enrichment.  The
    pivot residual handed to :meth:`append` is exactly the squared projection
    residual computed by :meth:`residual_sq`.
    """

    def __init__(self, lower: np.ndarray | None = None, jitter: float = 0.0):
        self._low = np.zeros((0, 0)) if lower is None else np.asarray(lower, dtype=float)
        self.jitter = jitter

    @classmethod
    def from_matrix(cls, G: np.ndarray, jitter0: float = 0.0, centers=None) -> "GrowingCholesky":
        fac = spd_factor(G, jitter0, centers=centers)
        return cls(fac.lower.copy(), fac.jitter)

    @property
    def n(self) -> int:
        return self._low.shape[0]

    def residual_sq(self, b: np.ndarray, c: float) -> tuple[np.ndarray, float]:
        """Return (w, c - |w|^2) with L w = b: the squared distance of the new
        kernel section from the current span."""
        if self.n == 0:
            return np.zeros(0), float(c)
        w = solve_triangular(self._low, np.asarray(b, dtype=float), lower=True, check_finite=False)
        return w, float(c - w @ w)

    def append(self, w: np.ndarray, pivot_sq: float) -> None:
        if pivot_sq <= 0.0:
            raise SingularGramError(
                f"cannot extend Cholesky factor: pivot {pivot_sq:.3e} is not positive"
            )
        n = self.n
        new = np.zeros((n + 1, n + 1))
        new[:n, :n] = self._low
        new[n, :n] = w
        new[n, n] = math.sqrt(pivot_sq)
        self._low = new

    def solve(self, B: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros_like(np.asarray(B, dtype=float))
        return cho_solve((self._low, True), np.asarray(B, dtype=float))
