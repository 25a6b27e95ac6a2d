"""Ground-truth field synthesis and sampling.

The field is a seeded Gaussian-process realization pinned on a synthesis
grid and expressed exactly as a kernel expansion, so error norms against
it are exact quadratic forms.  Randomness comes from numpy's counter-based
Philox generator: the same seed reproduces the same field everywhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .expansions import KernelExpansion, evaluate
from .kernels import KernelSpec, as_points, default_jitter, gram, spd_factor

log = logging.getLogger(__name__)

ARTIFACT_HEADER_FIELDS = 4  # family sigma ell dim


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Recipe for a synthesized field: kernel, synthesis grid, seed, noise."""

    kernel: KernelSpec
    grid: np.ndarray
    seed: int
    noise_std: float = 0.0

    def __post_init__(self):
        pts = as_points(self.grid, self.kernel.dim)
        if pts.shape[0] == 0:
            raise ValueError("synthesis grid must be non-empty")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("synthesis grid points must be distinct")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        pts.flags.writeable = False
        object.__setattr__(self, "grid", pts)
        object.__setattr__(self, "seed", int(self.seed))

    def __eq__(self, other):
        if not isinstance(other, FieldSpec):
            return NotImplemented
        return (
            self.kernel == other.kernel
            and self.seed == other.seed
            and self.noise_std == other.noise_std
            and np.array_equal(self.grid, other.grid)
        )


def field_values(fs: FieldSpec) -> np.ndarray:
    """Draw the pinned grid values: chol(K) @ z with z ~ N(0, I) from Philox(seed)."""
    K = gram(fs.kernel, fs.grid, fs.grid)
    fac = spd_factor(K, default_jitter(fs.kernel), centers=fs.grid)
    rng = np.random.Generator(np.random.Philox(fs.seed))
    z = rng.standard_normal(fs.grid.shape[0])
    return fac.lower @ z


def synthesize_field(fs: FieldSpec) -> KernelExpansion:
    """Interpolate the drawn grid values: the field is exactly in the span
    of the kernel sections on the synthesis grid."""
    values = field_values(fs)
    return field_from_values(fs.kernel, fs.grid, values)


def field_from_values(spec: KernelSpec, grid, values) -> KernelExpansion:
    """Expansion whose coefficients interpolate ``values`` on ``grid``."""
    pts = as_points(grid, spec.dim)
    vals = np.asarray(values, dtype=float).reshape(-1)
    K = gram(spec, pts, pts)
    fac = spd_factor(K, default_jitter(spec), centers=pts)
    return KernelExpansion(spec, pts, fac.solve(vals))


def sample_field(g: KernelExpansion, x, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> float:
    """Observe the field at x, optionally with additive Gaussian noise."""
    value = evaluate(g, x)
    if noise_std == 0.0:
        return value
    if rng is None:
        raise ValueError("sampling with noise requires a caller-supplied generator")
    return value + noise_std * float(rng.standard_normal())


def export_field(path, expansion: KernelExpansion, values) -> None:
    """Write the flat text artifact: one kernel-spec line, then one line per
    center with coordinates, coefficient, and pinned field value."""
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.shape[0] != len(expansion):
        raise ValueError(f"{vals.shape[0]} values for {len(expansion)} centers")
    spec = expansion.spec
    lines = [f"{spec.family} {spec.sigma:.17g} {spec.ell:.17g} {spec.dim}"]
    for center, alpha, val in zip(expansion.centers, expansion.coefficients, vals):
        coords = " ".join(f"{c:.17g}" for c in center)
        lines.append(f"{coords} {alpha:.17g} {val:.17g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class FieldArtifactError(ValueError):
    """A field artifact file failed to parse; the message names the line."""


def import_field(path) -> tuple[KernelExpansion, np.ndarray]:
    """Read an exported field artifact back into (expansion, pinned values)."""
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read().splitlines()
    lines = [(i + 1, line) for i, line in enumerate(raw) if line.strip()]
    if not lines:
        raise FieldArtifactError(f"{path}: empty artifact")
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != ARTIFACT_HEADER_FIELDS:
        raise FieldArtifactError(
            f"{path}:{lineno}: expected 'family sigma ell dim', got {header!r}"
        )
    try:
        spec = KernelSpec(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise FieldArtifactError(f"{path}:{lineno}: bad kernel spec: {exc}") from exc
    centers, alphas, values = [], [], []
    for lineno, line in lines[1:]:
        parts = line.split()
        if len(parts) != spec.dim + 2:
            raise FieldArtifactError(
                f"{path}:{lineno}: expected {spec.dim + 2} numbers, got {len(parts)}"
            )
        try:
            numbers = [float(p) for p in parts]
        except ValueError as exc:
            raise FieldArtifactError(f"{path}:{lineno}: non-numeric entry: {exc}") from exc
        centers.append(numbers[: spec.dim])
        alphas.append(numbers[spec.dim])
        values.append(numbers[spec.dim + 1])
    if not centers:
        raise FieldArtifactError(f"{path}: artifact has no centers")
    expansion = KernelExpansion(spec, np.array(centers), np.array(alphas))
    return expansion, np.array(values)
