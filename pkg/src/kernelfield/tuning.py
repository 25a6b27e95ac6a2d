"""Novelty-threshold auto-tuning via dry-run admission replays.

Which waypoints get admitted as centers depends only on the kernel, the
geometry of the trajectory, and the threshold -- never on the sampled
values -- so the center budget can be tuned by replaying admissions
without running the estimator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import lawnmower_path, rotated_axis_order
from .kernels import GrowingCholesky, KernelSpec, kernel_eval, kernel_vector

log = logging.getLogger(__name__)


def replay_admissions(spec: KernelSpec, waypoints: np.ndarray, epsilon_bar: float) -> np.ndarray:
    """Centers that would be admitted along ``waypoints`` at the given threshold.

    The first waypoint always seeds the basis (mirroring run initialization).
    """
    waypoints = np.asarray(waypoints, dtype=float)
    if waypoints.shape[0] == 0:
        return waypoints.reshape(0, spec.dim)
    centers = [waypoints[0]]
    kxx = kernel_eval(spec, waypoints[0], waypoints[0])
    chol = GrowingCholesky(np.array([[math.sqrt(kxx)]]))
    arr = waypoints[0].reshape(1, -1)
    for x in waypoints[1:]:
        if np.any(np.all(arr == x, axis=1)):
            continue
        b = kernel_vector(spec, arr, x)
        w, res_sq = chol.residual_sq(b, kernel_eval(spec, x, x))
        res_sq = max(res_sq, 0.0)
        if math.sqrt(res_sq) > epsilon_bar:
            chol.append(w, res_sq)
            centers.append(x)
            arr = np.vstack([arr, x])
    return arr


@dataclass(frozen=True)
class TuneResult:
    epsilon_bar: float
    counts: tuple[int, ...]

    @property
    def mean_count(self) -> float:
        return float(np.mean(self.counts))


def tune_epsilon(
    spec: KernelSpec,
    subdomains,
    resolutions,
    target: int,
    tol: float = 0.10,
    stages: int | None = 2,
    max_iter: int = 48,
) -> TuneResult:
    """Bisect the novelty threshold so that dry-run replays admit roughly
    ``target`` centers per agent (mean across agents, within ``tol``).

    ``stages`` limits the replay to the coarsest sweeps (None uses the full
    schedule).  Admission counts decrease monotonically in the threshold,
    which is what makes bisection valid.
    """
    res = [float(r) for r in resolutions]
    if stages is not None:
        res = res[: max(1, stages)]
    trajectories = [
        np.vstack([lawnmower_path(sub, r, rotated_axis_order(i, sub.dim)) for r in res])
        for i, sub in enumerate(subdomains)
    ]

    def mean_count(eps: float) -> tuple[float, tuple[int, ...]]:
        counts = tuple(
            replay_admissions(spec, traj, eps).shape[0] for traj in trajectories
        )
        return float(np.mean(counts)), counts

    lo, hi = 1e-9 * spec.sigma, spec.sigma
    count_lo, counts_lo = mean_count(lo)
    if count_lo < target * (1 - tol):
        raise ValueError(
            f"target of {target} centers is unreachable: even threshold ~0 admits "
            f"only {count_lo:.1f} (schedule has too few distinct waypoints)"
        )
    best = TuneResult(lo, counts_lo)
    best_gap = abs(count_lo - target)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        count, counts = mean_count(mid)
        gap = abs(count - target)
        if gap < best_gap:
            best, best_gap = TuneResult(mid, counts), gap
        if abs(count - target) <= tol * target:
            log.info("tuned epsilon_bar=%.6g for mean %.1f centers", mid, count)
            return TuneResult(mid, counts)
        if count > target:
            lo = mid
        else:
            hi = mid
    log.warning(
        "epsilon tuning did not land within %.0f%% of %d; best mean %.1f at %.6g",
        100 * tol, target, best.mean_count, best.epsilon_bar,
    )
    return best
