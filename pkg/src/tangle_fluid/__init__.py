"""Tangle with random proof-of-work delays: agent simulation, fluid limit,
equilibria and the deviation between them."""

from .equilibrium import EquilibriumResult, equilibrium_general, equilibrium_m2
from .errors import *  # noqa: F401,F403
from .fluid import (
    Constants,
    EquilibriumPerturbed,
    FluidDiagnostics,
    FluidSeries,
    FluidState,
    FromSim,
    diagnostics,
    fluid_step,
    init_fluid,
    integrate,
)
from .harness import ComparisonReport, compare, convergence_study, g_of_T
from .oracle import TinyInstance, enumerate_expectations, leading_order_expectations
from .params import ModelParams, RunConfig, derive_replica_seed, load_config, validate_params
from .sim import (
    ExplicitHistory,
    StepRecord,
    TangleState,
    Trajectory,
    Warmup,
    check_step_identities,
    init_state,
    run,
    step,
)

__version__ = "0.1.0"
