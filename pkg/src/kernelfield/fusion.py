"""Partition-of-unity fusion of local estimates, the communication-reduced
evaluator, and overlap-triggered snapshot exchange.

Received snapshots are only ever used at fusion time; they are never merged
into a receiver's own basis, so each agent's local dynamics stay strictly
decentralized.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .estimator import AgentState
from .expansions import KernelExpansion, evaluate, evaluate_batch
from .geometry import Cover, PartitionOfUnity, pou_weights
from .kernels import KernelSpec, as_points

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeerSnapshot:
    """An agent's basis centers and coefficients as of some step."""

    agent_id: int
    spec: KernelSpec
    centers: np.ndarray
    coefficients: np.ndarray
    taken_at: int

    def __post_init__(self):
        pts = as_points(self.centers, self.spec.dim)
        coeffs = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coeffs.shape[0] != pts.shape[0]:
            raise ValueError("snapshot centers and coefficients must have equal length")
        pts.flags.writeable = False
        coeffs.flags.writeable = False
        object.__setattr__(self, "centers", pts)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def of(cls, agent: AgentState, step: int) -> "PeerSnapshot":
        return cls(agent.id, agent.spec, agent.centers.copy(), agent.coefficients.copy(), step)

    def expansion(self) -> KernelExpansion:
        return KernelExpansion(self.spec, self.centers, self.coefficients)


@dataclass(frozen=True)
class ExchangeEvent:
    step: int
    agent_i: int
    agent_j: int
    payload_centers: int


def take_snapshots(agents: list[AgentState], step: int) -> dict[int, PeerSnapshot]:
    """Fresh snapshots of every agent (the fusion-time global collection)."""
    return {agent.id: PeerSnapshot.of(agent, step) for agent in agents}


def _check_snapshots(snapshots: dict[int, PeerSnapshot], n: int) -> list[PeerSnapshot]:
    if len(snapshots) != n:
        raise ValueError(f"need one snapshot per agent: have {sorted(snapshots)} for n={n}")
    return [snapshots[i] for i in sorted(snapshots)]

def fused_evaluate(snapshots: dict[int, PeerSnapshot], pou: PartitionOfUnity, x) -> float:
    """Partition-of-unity combination of the local estimates at a point."""
    snaps = _check_snapshots(snapshots, pou.cover.n)
    weights, _ = pou_weights(pou, x)
    total = 0.0
    for w, snap in zip(weights, snaps):
        if w != 0.0:
            total += w * evaluate(snap.expansion(), x)
    return total


def fused_evaluate_reduced(
    snapshots: dict[int, PeerSnapshot], pou: PartitionOfUnity, x
) -> tuple[float, frozenset[int]]:
    """Same value as :func:`fused_evaluate`, plus the set of agents whose
    data the evaluation actually needed (communication accounting)."""
    snaps = _check_snapshots(snapshots, pou.cover.n)
    weights, _ = pou_weights(pou, x)
    contacted = []
    total = 0.0
    for w, snap in zip(weights, snaps):
        if w != 0.0:
            contacted.append(snap.agent_id)
            total += w * evaluate(snap.expansion(), x)
    return total, frozenset(contacted)


def fused_evaluate_batch(
    snapshots: dict[int, PeerSnapshot], pou: PartitionOfUnity, X
) -> np.ndarray:
    """Fused estimate over many points at once."""
    snaps = _check_snapshots(snapshots, pou.cover.n)
    X = np.asarray(X, dtype=float)
    W = pou.weights_batch(X)
    out = np.zeros(X.shape[0])
    for col, snap in enumerate(snaps):
        active = W[:, col] != 0.0
        if np.any(active):
            out[active] += W[active, col] * evaluate_batch(snap.expansion(), X[active])
    return out


def overlap_exchange(
    agents: list[AgentState],
    cover: Cover,
    store: dict[int, PeerSnapshot],
    step: int,
) -> list[ExchangeEvent]:
    """Refresh snapshots of every agent pair currently co-located in their
    subdomains' overlap; returns the logged exchange events.

    The refresh is idempotent within a step, so the result does not depend
    on pair enumeration order.
    """
    if len(agents) != cover.n:
        raise ValueError(f"{len(agents)} agents for a cover of {cover.n} subdomains")
    ordered = sorted(agents, key=lambda a: a.id)
    events = []
    for ai, aj in itertools.combinations(ordered, 2):
        if ai.position is None or aj.position is None:
            continue
        sub_i = cover.subdomains[ai.id - 1]
        sub_j = cover.subdomains[aj.id - 1]
        both_in_overlap = (
            sub_i.contains(ai.position)
            and sub_j.contains(ai.position)
            and sub_i.contains(aj.position)
            and sub_j.contains(aj.position)
        )
        if both_in_overlap:
            store[ai.id] = PeerSnapshot.of(ai, step)
            store[aj.id] = PeerSnapshot.of(aj, step)
            events.append(
                ExchangeEvent(step, ai.id, aj.id, ai.basis_size + aj.basis_size)
            )
    return events
