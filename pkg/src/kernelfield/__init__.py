"""Decentralized online estimation of spatial fields in kernel bases.

A team of agents sweeps overlapping subdomains, each running its own
gradient-flow estimator on a growing kernel expansion with novelty-gated
basis enrichment; local estimates are fused through a partition of unity.
"""

from .config import ConfigError, RunManifest, dump_config, load_config, loads_config, run_id
from .estimator import (
    ADAMS_BASHFORTH,
    AgentState,
    DivergenceError,
    StepLog,
    StepperConfig,
    agent_update,
)
from .expansions import (
    ConsistencyError,
    KernelExpansion,
    evaluate,
    evaluate_batch,
    expansion_difference_norm_sq,
    interpolation_coefficients,
    make_interpolant,
    power_function_sq,
    rkhs_norm_sq,
)
from .field import (
    FieldArtifactError,
    FieldSpec,
    export_field,
    field_from_values,
    field_values,
    import_field,
    sample_field,
    synthesize_field,
)
from .fusion import (
    ExchangeEvent,
    PeerSnapshot,
    fused_evaluate,
    fused_evaluate_batch,
    fused_evaluate_reduced,
    overlap_exchange,
    take_snapshots,
)
from .geometry import (
    Cover,
    PartitionOfUnity,
    Rect,
    fill_distance,
    grid_cover,
    lawnmower_path,
    pou_weights,
    refine_schedule,
    stage_lengths,
)
from .kernels import (
    KERNEL_FAMILIES,
    KernelSpec,
    SingularGramError,
    gram,
    kernel_eval,
    solve_spd,
)
from .simulation import (
    MetricsRecord,
    SimConfig,
    SimResult,
    pe_margin,
    rate_fit,
    run_simulation,
    sup_error,
)
from .tuning import TuneResult, replay_admissions, tune_epsilon

__version__ = "0.1.0"
