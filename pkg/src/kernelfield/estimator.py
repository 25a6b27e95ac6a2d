"""Per-agent online estimator: multistep coefficient updates, novelty-gated
basis enrichment with interpolation resets, and sample bookkeeping."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .expansions import KernelExpansion
from .field import sample_field
from .geometry import Rect
from .kernels import (
    GrowingCholesky,
    KernelSpec,
    as_points,
    default_jitter,
    kernel_eval,
    kernel_vector,
)

log = logging.getLogger(__name__)

#: Explicit Adams-Bashforth coefficients, newest sample first.
ADAMS_BASHFORTH = {
    1: (1.0,),
    2: (3.0 / 2.0, -1.0 / 2.0),
    3: (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0),
}

_HISTORY_CAP = 8
_DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    """Coefficients blew past the divergence guard; the step size is too large."""


@dataclass(frozen=True)
class StepperConfig:
    """Learning rate, step size, multistep order/coefficients, and the
    novelty threshold that gates basis enrichment.

    ``a[0]`` weights the newest sample.  When fewer samples than ``q`` are
    available the update degrades to the largest-order Adams-Bashforth rule
    that fits, bottoming out at the explicit Euler rule.
    """

    gamma: float
    h: float
    epsilon_bar: float
    q: int = 1
    a: tuple[float, ...] | None = None
    preconditioned: bool = True

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.epsilon_bar <= 0:
            raise ValueError("epsilon_bar must be positive")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.a is None:
            if self.q not in ADAMS_BASHFORTH:
                raise ValueError(
                    f"no default multistep coefficients for q={self.q}; supply a explicitly"
                )
            object.__setattr__(self, "a", ADAMS_BASHFORTH[self.q])
        else:
            a = tuple(float(v) for v in self.a)
            if len(a) != self.q:
                raise ValueError(f"need {self.q} multistep coefficients, got {len(a)}")
            object.__setattr__(self, "a", a)
        if abs(sum(self.a) - 1.0) > 1e-9:
            log.warning(
                "multistep coefficients sum to %.6f (consistency wants 1); proceeding",
                sum(self.a),
            )


@dataclass
class StepLog:
    """One agent-step record: what was sampled and what the estimator did."""

    agent_id: int
    step: int
    position: np.ndarray
    y: float
    residual: float
    novelty: float
    basis_size: int
    enriched: bool
    interp_residual: float
    jitter: float


@dataclass
class AgentState:
    """One agent: subdomain, expansion state, stored samples, trajectory cursor.

    The stored sample vector always has one entry per center, and after
    every enrichment the estimate reproduces the stored samples at all
    centers (interpolation reset contract).
    """

    id: int
    subdomain: Rect
    spec: KernelSpec
    trajectory: np.ndarray
    cursor: int = 0
    centers: np.ndarray = None
    coefficients: np.ndarray = None
    samples: np.ndarray = None
    position: np.ndarray | None = None
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        self.trajectory = as_points(self.trajectory, self.spec.dim)
        if self.centers is None:
            self.centers = np.zeros((0, self.spec.dim))
        self.centers = as_points(self.centers, self.spec.dim)
        if self.coefficients is None:
            self.coefficients = np.zeros(0)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if self.samples is None:
            self.samples = np.zeros(0)
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1)
        if not (len(self.centers) == len(self.coefficients) == len(self.samples)):
            raise ValueError("centers, coefficients and samples must have equal length")
        self._gram = None
        self._chol = None
        self._last_query = None
        if len(self.centers):
            self._rebuild_caches()

    # -- caches -------------------------------------------------------------

    def _rebuild_caches(self):
        from .kernels import gram

        self._gram = gram(self.spec, self.centers, self.centers)
        self._chol = GrowingCholesky.from_matrix(
            self._gram, default_jitter(self.spec), centers=self.centers
        )
        self._last_query = None

    @property
    def basis_size(self) -> int:
        return self.centers.shape[0]

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.trajectory.shape[0]

    @property
    def estimate(self) -> KernelExpansion:
        return KernelExpansion(self.spec, self.centers.copy(), self.coefficients.copy())

    @property
    def jitter(self) -> float:
        return 0.0 if self._chol is None else self._chol.jitter

    def predict(self, x) -> float:
        """Current estimate at a point."""
        if self.basis_size == 0:
            return 0.0
        return float(kernel_vector(self.spec, self.centers, x) @ self.coefficients)

    # -- core operations ----------------------------------------------------

    def coefficient_step(self, x, y: float, cfg: StepperConfig) -> float:
        """Multistep gradient update of the coefficients from the newest
        sample plus the stored history window; returns the fresh residual.

        Residuals in the history window are frozen at the step that produced
        them; kernel columns are recomputed against the current basis.  With
        an empty basis the step is a no-op (the first enrichment seeds it).
        """
        if self.basis_size == 0:
            return float(y)
        residual = float(y) - self.predict(x)
        self.history.append((as_points(x, self.spec.dim)[0], float(y), residual))
        while len(self.history) > max(_HISTORY_CAP, cfg.q):
            self.history.popleft()
        order = min(cfg.q, len(self.history))
        coeffs = cfg.a if order == cfg.q else ADAMS_BASHFORTH[order]
        delta = np.zeros(self.basis_size)
        for s in range(order):
            xs, _, es = self.history[-1 - s]
            b = kernel_vector(self.spec, self.centers, xs)
            if cfg.preconditioned:
                b = self._chol.solve(b)
            delta += coeffs[s] * es * b
        self.coefficients = self.coefficients + cfg.h * cfg.gamma * delta
        bound = _DIVERGENCE_FACTOR * (float(np.max(np.abs(self.samples))) + 1.0)
        if float(np.max(np.abs(self.coefficients))) > bound:
            raise DivergenceError(
                f"agent {self.id}: coefficient magnitude exceeded {bound:.3e}; "
                f"the explicit update with h*gamma={cfg.h * cfg.gamma:.3g} is unstable"
            )
        return residual

    def novelty(self, x) -> float:
        """Distance of the kernel section at x from the span of the current
        basis (the power function); sigma for an empty basis, exactly 0 at
        an existing center."""
        xp = as_points(x, self.spec.dim)[0]
        kxx = kernel_eval(self.spec, xp, xp)
        if self.basis_size == 0:
            return math.sqrt(kxx)
        if np.any(np.all(self.centers == xp, axis=1)):
            return 0.0
        b = kernel_vector(self.spec, self.centers, xp)
        w, res_sq = self._chol.residual_sq(b, kxx)
        if res_sq < -1e-6 * self.spec.sigma**2:
            log.warning(
                "agent %d: novelty residual %.3e at %s; Gram conditioning is suspect",
                self.id,
                res_sq,
                xp,
            )
        res_sq = max(res_sq, 0.0)
        self._last_query = (xp, b, w, res_sq)
        return math.sqrt(res_sq)

    def seed_basis(self, x, y: float) -> None:
        """Install the initial center and sample (pre-loop initialization)."""
        if self.basis_size != 0:
            raise ValueError("seed_basis is only valid on an empty basis")
        xp = as_points(x, self.spec.dim)
        self._check_in_subdomain(xp[0])
        kxx = kernel_eval(self.spec, xp, xp)
        self.centers = xp.copy()
        self.samples = np.array([float(y)])
        self.coefficients = np.array([float(y) / kxx])
        self._gram = np.array([[kxx]])
        self._chol = GrowingCholesky(np.array([[math.sqrt(kxx)]]))
        self._last_query = None

    def enrich(self, x, y: float, epsilon_bar: float) -> float:
        """Admit x as a new center, store its sample, and reset the
        coefficients to interpolate all stored samples.

        The caller checks the novelty gate; this method asserts it.  Returns
        the interpolation residual max |estimate(center) - sample|.
        """
        if self.basis_size == 0:
            eps = self.novelty(x)
            if eps <= epsilon_bar:
                raise ValueError(
                    f"enrich precondition violated: novelty {eps:.3e} "
                    f"<= threshold {epsilon_bar:.3e}"
                )
            self.seed_basis(x, y)
            return 0.0
        xp = as_points(x, self.spec.dim)[0]
        self._check_in_subdomain(xp)
        if self._last_query is None or not np.array_equal(self._last_query[0], xp):
            self.novelty(xp)
        if self._last_query is None:
            raise ValueError(
                f"enrich precondition violated: {xp} coincides with an existing center "
                f"(novelty 0 <= threshold {epsilon_bar:.3e})"
            )
        _, b, w, res_sq = self._last_query
        if math.sqrt(res_sq) <= epsilon_bar:
            raise ValueError(
                f"enrich precondition violated: novelty {math.sqrt(res_sq):.3e} "
                f"<= threshold {epsilon_bar:.3e} at {xp}"
            )
        kxx = kernel_eval(self.spec, xp, xp)
        L = self.basis_size
        G = np.empty((L + 1, L + 1))
        G[:L, :L] = self._gram
        G[L, :L] = b
        G[:L, L] = b
        G[L, L] = kxx
        self._gram = G
        self.centers = np.vstack([self.centers, xp])
        self.samples = np.append(self.samples, float(y))
        try:
            self._chol.append(w, res_sq)
        except Exception:
            log.warning("agent %d: incremental factor update failed; refactoring", self.id)
            self._chol = GrowingCholesky.from_matrix(
                self._gram, default_jitter(self.spec), centers=self.centers
            )
        self.coefficients = self._chol.solve(self.samples)
        self._last_query = None
        return float(np.max(np.abs(self._gram @ self.coefficients - self.samples)))

    def _check_in_subdomain(self, x: np.ndarray) -> None:
        if not self.subdomain.contains(x, tol=1e-9):
            raise ValueError(f"agent {self.id}: center {x} lies outside its subdomain")


def agent_update(
    agent: AgentState,
    g: KernelExpansion,
    cfg: StepperConfig,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
    step: int = 0,
) -> StepLog:
    """One full inner-loop pass: sample the field at the next waypoint,
    update coefficients, measure novelty, and enrich if it clears the gate."""
    if agent.exhausted:
        raise IndexError(f"agent {agent.id}: trajectory exhausted at cursor {agent.cursor}")
    x = agent.trajectory[agent.cursor]
    agent.cursor += 1
    agent.position = x
    y = sample_field(g, x, noise_std, rng)
    residual = agent.coefficient_step(x, y, cfg)
    eps = agent.novelty(x)
    enriched = False
    interp_residual = math.nan
    if eps > cfg.epsilon_bar:
        interp_residual = agent.enrich(x, y, cfg.epsilon_bar)
        enriched = True
    return StepLog(
        agent_id=agent.id,
        step=step,
        position=x,
        y=y,
        residual=residual,
        novelty=eps,
        basis_size=agent.basis_size,
        enriched=enriched,
        interp_residual=interp_residual,
        jitter=agent.jitter,
    )
