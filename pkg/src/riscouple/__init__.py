"""Mutual-coupling-aware surface design for multi-user downlink links.

The package models a tunable reflecting surface whose elements couple
through a structured scattering description, trains the coupling profile
offline over a channel ensemble, solves each link jointly (precoder,
receive scaling, phase loads), and ships a small experiment harness that
compares the trained surface against fixed and coupling-free baselines.
"""

from .core import (
    CHANNEL_MODELS,
    ChannelSample,
    ChecksumError,
    ConfigError,
    DegenerateChannelError,
    DimensionError,
    EmptyBatchError,
    ExperimentConfig,
    FormatError,
    GenerationError,
    NoProgressError,
    PHASE_INITS,
    Precoder,
    RisPhaseConfig,
    SCHEME_TAGS,
    ScatteringDesign,
    SingularResolventError,
    SystemParams,
    config_hash,
    dbm_to_watts,
    derive_seed,
    load_config,
    validate_params,
)
from .scattering import (
    EffectiveChannel,
    assemble_scattering,
    build_dft_kronecker,
    effective_channel,
    effective_reflection,
    losslessness_residual,
    make_design,
    neumann_partial_sum,
    symmetry_residual,
)
from .channels import (
    ChannelEnsemble,
    generate_ensemble,
    load_ensemble,
    sample_rng,
    save_ensemble,
)
from .metrics import (
    MMSE_FLOOR,
    UserMetrics,
    analytic_metrics,
    mse_objective,
    simulate_symbol_mse,
)
from .link_solver import (
    InnerSolution,
    InnerSolverConfig,
    initial_phases,
    optimal_precoder_given_ris,
    ris_phase_gradient,
    solve_inner,
)
from .surface_design import (
    OuterSolverConfig,
    OuterTrace,
    average_gradients,
    export_trace_csv,
    grad_sigma_aa_sample,
    grad_sigma_ab_sample,
    gradient_step,
    initial_design,
    load_design,
    project_to_circle,
    run_training,
    save_design,
    symmetrize,
)
from .experiments import (
    ExperimentRecord,
    emit_csv,
    emit_plot,
    evaluate_design,
    read_records,
    run_scheme,
    scheme_design,
    solver_configs,
    sweep,
)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
