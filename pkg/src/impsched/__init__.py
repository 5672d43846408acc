"""Scheduling of imprecise-computation task graphs on multiprocessors under
hard deadlines and energy budgets: labeling heuristic, list scheduling, LP
core, and an exact branch-and-bound reference."""

from .energy import (
    FrequencySet,
    PowerModel,
    DEFAULT_FREQUENCY_SET,
    DEFAULT_POWER_MODEL,
    energy_per_cycle,
    fit_power_model,
    power_at,
)
from .imprecision import (
    EffectiveWorkloads,
    Labeling,
    imp_label,
    input_error,
    output_error,
    precision,
    qos,
    reduction_objective,
)
from .listsched import Assignment, heft_assign, upward_rank
from .lp import LinearProgram, LPSolution, solve_lp
from .milp import BnbResult, MilpModel, build_milp, solve_branch_and_bound
from .schedlp import (
    Schedule,
    build_baseline_lp,
    build_min_energy_lp,
    build_qos_lp,
    decode_schedule,
)
from .sweep import (
    PlatformConfig,
    SweepConfig,
    epsilon_star,
    default_platform,
    run_baseline,
    run_milp,
    run_proposed,
    sweep_graph,
)
from .taskgraph import (
    Edge,
    GeneratorParams,
    Task,
    TaskGraph,
    compute_deadline,
    generate_random_graph,
    normalize_source,
    parse_task_graph,
    serialize_task_graph,
    topological_order,
    validate_graph,
)
from .verify import VerificationReport, WorkloadContract, verify_schedule

__version__ = "0.1.0"
