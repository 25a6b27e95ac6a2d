"""Experiment orchestration: step all agents through their refinement
schedules, exchange and fuse, and compute the run metrics (mean basis
count, max fill distance, sup error) plus the excitation diagnostic."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .estimator import AgentState, StepLog, StepperConfig, agent_update
from .expansions import KernelExpansion, evaluate_batch
from .field import FieldSpec, synthesize_field
from .fusion import ExchangeEvent, PeerSnapshot, fused_evaluate_batch, overlap_exchange, take_snapshots
from .geometry import (
    Cover,
    PartitionOfUnity,
    fill_distance,
    refine_schedule,
    rotated_axis_order,
    stage_lengths,
)
from .kernels import KernelSpec, default_jitter, gram, spd_factor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs: the field recipe, the cover, the stepper,
    the estimator kernel (possibly mismatched), and the schedules."""

    field: FieldSpec
    cover: Cover
    stepper: StepperConfig
    estimator: KernelSpec
    resolutions: tuple[float, ...]
    eval_grid_resolution: float = 0.1
    fuse_every: int = 0
    pou_kind: str = "overlap_average"
    seed: int = 0

    def __post_init__(self):
        res = tuple(float(r) for r in self.resolutions)
        if not res:
            raise ValueError("resolutions must be non-empty")
        if any(b >= a for a, b in zip(res, res[1:])):
            raise ValueError(f"resolutions must be strictly decreasing, got {res}")
        if self.eval_grid_resolution <= 0:
            raise ValueError("eval_grid_resolution must be positive")
        if self.fuse_every < 0:
            raise ValueError("fuse_every must be >= 0")
        if self.estimator.dim != self.field.kernel.dim:
            raise ValueError("estimator and field kernels must share a dimension")
        object.__setattr__(self, "resolutions", res)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_agents(self) -> int:
        return self.cover.n

    def partition(self) -> PartitionOfUnity:
        return PartitionOfUnity(self.cover, self.pou_kind)


@dataclass(frozen=True)
class MetricsRecord:
    """One fusion-event log row; ``stage_end`` is the completed stage index
    (1-based) when the record closes a refinement stage, else 0."""

    step: int
    t: float
    mean_basis_count: float
    max_fill_distance: float
    sup_error: float
    exchanges_cum: int
    basis_counts: tuple[int, ...]
    stage_end: int = 0

    def __post_init__(self):
        if not all(
            math.isfinite(v)
            for v in (self.t, self.mean_basis_count, self.max_fill_distance, self.sup_error)
        ):
            raise ValueError("metrics must be finite")
        if self.sup_error < 0:
            raise ValueError("sup_error must be >= 0")


@dataclass
class SimResult:
    """Everything a run produces, ready for CSV/figure emission."""

    config: SimConfig
    records: list[MetricsRecord]
    snapshots: dict[int, PeerSnapshot]
    surface_points: np.ndarray
    surface_error: np.ndarray
    agents: list[AgentState]
    exchange_log: list[ExchangeEvent]
    step_logs: list[StepLog]
    field_expansion: KernelExpansion

    @property
    def total_exchanged_centers(self) -> int:
        return sum(e.payload_centers for e in self.exchange_log)


def sup_error(
    g: KernelExpansion,
    snapshots: dict[int, PeerSnapshot],
    pou: PartitionOfUnity,
    grid: np.ndarray,
    g_values: np.ndarray | None = None,
) -> float:
    """Max absolute difference between the field and the fused estimate on a grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("sup_error needs a non-empty grid")
    if g_values is None:
        g_values = evaluate_batch(g, grid)
    fused = fused_evaluate_batch(snapshots, pou, grid)
    return float(np.max(np.abs(g_values - fused)))


def pe_margin(trajectory, Z, spec: KernelSpec, h: float) -> float:
    """Excitation margin of a trajectory segment over the span of the kernel
    sections on Z: the smallest generalized eigenvalue of the accumulated
    evaluation operator against the Gram matrix.

    Zero means some direction of the span is never excited by the segment.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim == 1:
        traj = traj.reshape(1, -1)
    if traj.shape[0] == 0:
        raise ValueError("trajectory segment is empty")
    Zp = np.asarray(Z, dtype=float)
    if Zp.ndim == 1:
        Zp = Zp.reshape(1, -1)
    B = gram(spec, Zp, traj)
    M = h * (B @ B.T)
    G = gram(spec, Zp, Zp)
    fac = spd_factor(G, default_jitter(spec), centers=Zp)
    G_pd = G if fac.jitter == 0.0 else G + fac.jitter * np.eye(G.shape[0])
    eigvals = scipy.linalg.eigh(M, G_pd, eigvals_only=True)
    return float(max(eigvals[0], 0.0))


def rate_fit(records: list[MetricsRecord]) -> tuple[float, float]:
    """Least-squares slope of log(sup_error) against log(max_fill_distance)
    over stage-final records (falls back to all records if none are flagged).

    Degenerate records (zero error or fill) are skipped; at least three
    usable records are required.
    """
    flagged = [r for r in records if r.stage_end > 0]
    usable = [
        r
        for r in (flagged or list(records))
        if r.sup_error > 0 and 0 < r.max_fill_distance < math.inf
    ]
    fills = np.array([r.max_fill_distance for r in usable])
    if np.unique(fills).size < 3:
        raise ValueError("rate_fit needs >= 3 records with distinct positive fill distances")
    errors = np.array([r.sup_error for r in usable])
    slope, intercept = np.polyfit(np.log(fills), np.log(errors), 1)
    return float(slope), float(intercept)


def build_agents(cfg: SimConfig) -> list[AgentState]:
    """One agent per subdomain, each with its own refinement trajectory.

    Sweep orientation rotates with the agent index so that neighbours meet
    inside their overlap bands (identical orientations on mirror-image
    subdomains would never be co-located there).
    """
    dim = cfg.cover.omega.dim
    return [
        AgentState(
            id=i + 1,
            subdomain=sub,
            spec=cfg.estimator,
            trajectory=refine_schedule(sub, cfg.resolutions, rotated_axis_order(i, dim)),
        )
        for i, sub in enumerate(cfg.cover.subdomains)
    ]


def _stage_boundaries(cfg: SimConfig) -> list[int]:
    """Global step indices at which every agent has finished each stage.

    Each agent consumes one waypoint per global step; the first waypoint is
    consumed by initialization, so boundaries are shifted by one.
    """
    per_agent = [stage_lengths(sub, cfg.resolutions) for sub in cfg.cover.subdomains]
    boundaries = []
    for s in range(len(cfg.resolutions)):
        boundaries.append(max(sum(lengths[: s + 1]) for lengths in per_agent) - 1)
    return boundaries


def run_simulation(
    cfg: SimConfig,
    field: KernelExpansion | None = None,
    parallel: bool = False,
    progress: bool = False,
) -> SimResult:
    """Execute a full run: initialize, step, exchange, fuse, and measure.

    The field is synthesized once (or supplied pre-built, e.g. from an
    artifact shared across a sweep).  Per-agent noise streams are split off
    the run seed, so parallel and serial execution produce identical logs.
    """
    g = synthesize_field(cfg.field) if field is None else field
    pou = cfg.partition()
    agents = build_agents(cfg)
    noise = cfg.field.noise_std
    rngs = {
        a.id: np.random.Generator(np.random.Philox(key=cfg.seed).jumped(a.id))
        for a in agents
    }

    # Initialization: the first waypoint of each agent seeds its basis.
    for agent in agents:
        x0 = agent.trajectory[0]
        agent.cursor = 1
        agent.position = x0
        y0 = float(evaluate_batch(g, x0.reshape(1, -1))[0])
        if noise > 0:
            y0 += noise * float(rngs[agent.id].standard_normal())
        agent.seed_basis(x0, y0)

    store = take_snapshots(agents, 0)
    eval_grid = cfg.cover.omega.grid(cfg.eval_grid_resolution)
    g_on_grid = evaluate_batch(g, eval_grid)

    boundaries = _stage_boundaries(cfg)
    total_steps = boundaries[-1]
    stage_of = {k: s + 1 for s, k in enumerate(boundaries)}
    fusion_steps = set(boundaries)
    if cfg.fuse_every > 0:
        fusion_steps.update(range(cfg.fuse_every, total_steps + 1, cfg.fuse_every))

    records: list[MetricsRecord] = []
    exchange_log: list[ExchangeEvent] = []
    step_logs: list[StepLog] = []
    executor = ThreadPoolExecutor(max_workers=len(agents)) if parallel else None

    def one(agent: AgentState, k: int) -> StepLog:
        return agent_update(agent, g, cfg.stepper, noise, rngs[agent.id], step=k)

    try:
        for k in range(1, total_steps + 1):
            active = [a for a in agents if not a.exhausted]
            if executor is not None:
                logs = list(executor.map(lambda a: one(a, k), active))
            else:
                logs = [one(a, k) for a in active]
            step_logs.extend(logs)
            exchange_log.extend(overlap_exchange(agents, cfg.cover, store, k))
            if k in fusion_steps:
                store = take_snapshots(agents, k)
                records.append(
                    _metrics(cfg, k, agents, store, pou, eval_grid, g_on_grid,
                             len(exchange_log), stage_of.get(k, 0))
                )
                if progress:
                    r = records[-1]
                    log.info(
                        "step %d: mean centers %.1f, max fill %.3f, sup error %.3e",
                        r.step, r.mean_basis_count, r.max_fill_distance, r.sup_error,
                    )
    finally:
        if executor is not None:
            executor.shutdown()

    final = fused_evaluate_batch(store, pou, eval_grid)
    surface = np.abs(g_on_grid - final)
    return SimResult(
        config=cfg,
        records=records,
        snapshots=store,
        surface_points=eval_grid,
        surface_error=surface,
        agents=agents,
        exchange_log=exchange_log,
        step_logs=step_logs,
        field_expansion=g,
    )


def _metrics(
    cfg: SimConfig,
    k: int,
    agents: list[AgentState],
    store: dict[int, PeerSnapshot],
    pou: PartitionOfUnity,
    eval_grid: np.ndarray,
    g_on_grid: np.ndarray,
    exchanges_cum: int,
    stage_end: int,
) -> MetricsRecord:
    counts = tuple(a.basis_size for a in agents)
    fills = [
        fill_distance(a.centers, a.subdomain, cfg.eval_grid_resolution) for a in agents
    ]
    err = sup_error(None, store, pou, eval_grid, g_values=g_on_grid)
    return MetricsRecord(
        step=k,
        t=k * cfg.stepper.h,
        mean_basis_count=float(np.mean(counts)),
        max_fill_distance=float(max(fills)),
        sup_error=err,
        exchanges_cum=exchanges_cum,
        basis_counts=counts,
        stage_end=stage_end,
    )
