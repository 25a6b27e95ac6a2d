"""Finite kernel expansions: evaluation, interpolation, norms, and the
power function.

An expansion sum_l alpha_l k(xi_l, .) is the representation of every
estimate in this package, including the synthesized ground-truth field,
so error norms between estimates reduce to exact quadratic forms on the
union of center sets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    KernelSpec,
    as_points,
    default_jitter,
    gram,
    kernel_eval,
    kernel_vector,
    solve_spd,
)

log = logging.getLogger(__name__)


class ConsistencyError(ArithmeticError):
    """A quadratic form came out negative beyond roundoff tolerance."""


def _clamp_quadratic(value: float, scale: float, where: str) -> float:
    """Clamp tiny negative quadratic forms to zero; larger negatives are bugs."""
    if value >= 0.0:
        return value
    if value >= -1e-10 * scale:
        return 0.0
    raise ConsistencyError(f"{where} produced {value:.3e} (scale {scale:.3e}); expected >= 0")


@dataclass(frozen=True)
class KernelExpansion:
    """Immutable finite expansion sum_l coefficients[l] * k(centers[l], .)."""

    spec: KernelSpec
    centers: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        pts = as_points(self.centers, self.spec.dim)
        coeffs = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coeffs.shape[0] != pts.shape[0]:
            raise ValueError(
                f"{coeffs.shape[0]} coefficients for {pts.shape[0]} centers"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        if pts.shape[0] > 1 and np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("expansion centers must be pairwise distinct")
        pts.flags.writeable = False
        coeffs.flags.writeable = False
        object.__setattr__(self, "centers", pts)
        object.__setattr__(self, "coefficients", coeffs)

    def __len__(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def zero(cls, spec: KernelSpec) -> "KernelExpansion":
        return cls(spec, np.zeros((0, spec.dim)), np.zeros(0))


def evaluate(f: KernelExpansion, x) -> float:
    """Value of the expansion at a single point (0.0 for the empty expansion)."""
    if len(f) == 0:
        as_points(x, f.spec.dim)
        return 0.0
    return float(kernel_vector(f.spec, f.centers, x) @ f.coefficients)


def evaluate_batch(f: KernelExpansion, X) -> np.ndarray:
    """Values of the expansion at each row of X, chunked to bound memory."""
    P = as_points(X, f.spec.dim)
    if len(f) == 0:
        return np.zeros(P.shape[0])
    out = np.empty(P.shape[0])
    chunk = max(1, 2_000_000 // max(len(f), 1))
    for start in range(0, P.shape[0], chunk):
        block = P[start : start + chunk]
        out[start : start + chunk] = gram(f.spec, block, f.centers) @ f.coefficients
    return out


def interpolation_coefficients(spec: KernelSpec, Z, values, jitter0: float | None = None) -> np.ndarray:
    """Coefficients of the expansion on centers Z that reproduces ``values`` there."""
    P = as_points(Z, spec.dim)
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.shape[0] != P.shape[0]:
        raise ValueError(f"{vals.shape[0]} values for {P.shape[0]} centers")
    if jitter0 is None:
        jitter0 = default_jitter(spec)
    alpha, _ = solve_spd(gram(spec, P, P), vals, jitter0, centers=P)
    return alpha


def make_interpolant(spec: KernelSpec, Z, values, jitter0: float | None = None) -> KernelExpansion:
    return KernelExpansion(spec, Z, interpolation_coefficients(spec, Z, values, jitter0))


def power_function_sq(spec: KernelSpec, Z, x, jitter0: float | None = None) -> float:
    """Squared distance of k(x, .) from the span of the kernel sections on Z.

    Closed form k(x,x) - k(x,Z) K(Z,Z)^-1 k(Z,x), clamped below at zero.
    A point coinciding exactly with a center returns 0.0 exactly.
    """
    P = as_points(Z, spec.dim)
    xp = as_points(x, spec.dim)
    kxx = kernel_eval(spec, xp, xp)
    if P.shape[0] == 0:
        return kxx
    if np.any(np.all(P == xp[0], axis=1)):
        return 0.0
    if jitter0 is None:
        jitter0 = default_jitter(spec)
    b = kernel_vector(spec, P, xp)
    sol, _ = solve_spd(gram(spec, P, P), b, jitter0, centers=P)
    value = kxx - float(b @ sol)
    if value < -1e-6 * spec.sigma**2:
        log.warning("power function came out at %.3e; Gram conditioning is suspect", value)
    return max(value, 0.0)


def rkhs_norm_sq(f: KernelExpansion) -> float:
    """Native-space squared norm alpha^T K(centers, centers) alpha (>= 0)."""
    if len(f) == 0:
        return 0.0
    K = gram(f.spec, f.centers, f.centers)
    value = float(f.coefficients @ K @ f.coefficients)
    return _clamp_quadratic(value, f.spec.sigma**2, "rkhs_norm_sq")


def expansion_difference_norm_sq(f: KernelExpansion, g: KernelExpansion) -> float:
    """Squared norm of f - g, computed exactly on the union of the center sets.

    Centers shared by both expansions (exact coordinate equality) are merged
    by coefficient subtraction.
    """
    if f.spec != g.spec:
        raise ValueError(f"kernel specs differ: {f.spec} vs {g.spec}")
    if len(f) == 0 and len(g) == 0:
        return 0.0
    stacked = np.vstack([f.centers, g.centers])
    coeffs = np.concatenate([f.coefficients, -g.coefficients])
    merged, inverse = np.unique(stacked, axis=0, return_inverse=True)
    merged_coeffs = np.zeros(merged.shape[0])
    np.add.at(merged_coeffs, inverse.reshape(-1), coeffs)
    diff = KernelExpansion(f.spec, merged, merged_coeffs)
    return rkhs_norm_sq(diff)
