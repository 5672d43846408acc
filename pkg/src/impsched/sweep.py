"""Experiment pipeline: method runners, energy sweeps, and CSV emission.

Budgets are expressed as ratios of the graph's minimum precise-execution
energy; a sweep walks the ratio down from 1.0 until a method turns
infeasible, then probes a couple more points to document the cliff. Every
feasible schedule is re-verified before a row is emitted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .energy import FrequencySet, PowerModel, DEFAULT_FREQUENCY_SET, DEFAULT_POWER_MODEL
from .imprecision import imp_label, scheduling_workloads
from .listsched import Assignment, heft_assign
from .lp import solve_lp
from .milp import build_milp, encode_solution, solve_branch_and_bound
from .schedlp import (
    Schedule,
    build_baseline_lp,
    build_min_energy_lp,
    build_qos_lp,
    decode_schedule,
)
from .taskgraph import TaskGraph, normalize_source
from .verify import WorkloadContract, verify_schedule

__all__ = [
    "PlatformConfig",
    "SweepConfig",
    "MethodOutcome",
    "SweepRow",
    "PipelineError",
    "InfeasibleError",
    "default_platform",
    "epsilon_star",
    "run_proposed",
    "run_baseline",
    "run_milp",
    "sweep_graph",
    "rows_to_csv",
    "CSV_HEADER",
]

CSV_HEADER = "graph,method,eps_ratio,feasible,qos,energy_J,makespan_s,runtime_s,gap,nodes"

METHODS = ("proposed", "baseline", "milp")


class PipelineError(RuntimeError):
    """Internal inconsistency (solver or verifier disagreement)."""


class InfeasibleError(ValueError):
    """No schedule exists under the stated deadline."""


@dataclass(frozen=True)
class PlatformConfig:
    power: PowerModel
    freqs: FrequencySet
    procs: int = 4
    heft_insertion: bool = True
    heft_lp_comm: bool = False


def default_platform(procs: int = 4) -> PlatformConfig:
    return PlatformConfig(DEFAULT_POWER_MODEL, DEFAULT_FREQUENCY_SET, procs)


@dataclass(frozen=True)
class SweepConfig:
    resolution: float = 0.05
    methods: tuple[str, ...] = ("proposed", "baseline")
    milp_time_limit: float = 600.0
    milp_seed_with_proposed: bool = True
    past_infeasible: int = 2  # extra points probed beyond the cliff

    def __post_init__(self):
        if not 0.0 < self.resolution < 1.0:
            raise ValueError("resolution must lie in (0, 1)")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")


@dataclass
class MethodOutcome:
    method: str
    feasible: bool
    qos: float | None = None
    energy: float | None = None
    makespan: float | None = None
    runtime: float = 0.0
    schedule: Schedule | None = None
    assignment: Assignment | None = None
    labeling: object = None
    gap: float | None = None
    nodes: int | None = None
    status: str = ""


@dataclass(frozen=True)
class SweepRow:
    graph_id: str
    method: str
    eps_ratio: float
    feasible: bool
    qos: float | None
    energy: float | None
    makespan: float | None
    runtime: float
    gap: float | None = None
    nodes: int | None = None


def _initial_workloads(g: TaskGraph) -> dict[str, float]:
    return {u: float(g.task(u).initial_workload) for u in g.tasks}


def _assign(g: TaskGraph, workloads, platform: PlatformConfig) -> Assignment:
    return heft_assign(
        g,
        workloads,
        platform.procs,
        platform.freqs.f_max,
        insertion=platform.heft_insertion,
        lp_comm=platform.heft_lp_comm,
    )


def _checked(g, sched, asg, platform, eps_max, contract, method) -> None:
    report = verify_schedule(
        g, sched, asg, platform.power, platform.freqs, eps_max, g.deadline, contract
    )
    if not report.ok:
        raise PipelineError(
            f"{method} schedule failed verification:\n{report.format()}"
        )


def epsilon_star(
    g: TaskGraph, platform: PlatformConfig
) -> tuple[float, Schedule, Assignment]:
    """Minimum energy that schedules every task precisely within the deadline."""
    gn = normalize_source(g)
    asg = _assign(gn, _initial_workloads(gn), platform)
    sol = solve_lp(
        build_min_energy_lp(gn, asg, platform.power, platform.freqs, gn.deadline)
    )
    if sol.status == "infeasible":
        raise InfeasibleError(
            "no precise schedule meets the deadline; enlarge it or add processors"
        )
    if not sol.optimal:
        raise PipelineError(f"minimum-energy program ended {sol.status}: {sol.message}")
    sched = decode_schedule(
        gn,
        platform.power,
        platform.freqs,
        sol,
        fixed_opt={u: float(gn.task(u).optional) for u in gn.tasks},
    )
    _checked(
        gn,
        sched,
        asg,
        platform,
        sol.objective * (1 + 1e-9),
        WorkloadContract.precise_initial(gn),
        "minimum-energy",
    )
    return sol.objective, sched, asg


def run_proposed(g: TaskGraph, platform: PlatformConfig, eps_max: float) -> MethodOutcome:
    """Labeling, list scheduling, then the QoS-maximizing LP."""
    t0 = time.monotonic()
    gn = normalize_source(g)
    lab, wl = imp_label(gn)
    workloads = {u: float(w) for u, w in scheduling_workloads(gn, wl).items()}
    asg = _assign(gn, workloads, platform)
    sol = solve_lp(
        build_qos_lp(gn, wl, asg, platform.power, platform.freqs, eps_max, gn.deadline)
    )
    runtime = time.monotonic() - t0
    if sol.status == "infeasible":
        return MethodOutcome("proposed", False, runtime=runtime, status="infeasible")
    if not sol.optimal:
        raise PipelineError(f"proposed LP ended {sol.status}: {sol.message}")
    sched = decode_schedule(
        gn, platform.power, platform.freqs, sol, fixed_opt=wl.optional_fixed
    )
    _checked(
        gn, sched, asg, platform, eps_max, WorkloadContract.from_labeling(gn, wl), "proposed"
    )
    out = MethodOutcome(
        "proposed",
        True,
        qos=sched.qos,
        energy=sched.energy,
        makespan=sched.makespan,
        runtime=runtime,
        schedule=sched,
        assignment=asg,
        status="optimal",
    )
    out.labeling = lab
    return out


def run_baseline(g: TaskGraph, platform: PlatformConfig, eps_max: float) -> MethodOutcome:
    """QoS LP on the unlabeled graph: non-exit tasks keep initial workloads."""
    t0 = time.monotonic()
    gn = normalize_source(g)
    asg = _assign(gn, _initial_workloads(gn), platform)
    sol = solve_lp(
        build_baseline_lp(gn, asg, platform.power, platform.freqs, eps_max, gn.deadline)
    )
    runtime = time.monotonic() - t0
    if sol.status == "infeasible":
        return MethodOutcome("baseline", False, runtime=runtime, status="infeasible")
    if not sol.optimal:
        raise PipelineError(f"baseline LP ended {sol.status}: {sol.message}")
    fixed = {
        u: float(gn.task(u).optional) for u in gn.tasks if u not in set(gn.exits())
    }
    sched = decode_schedule(gn, platform.power, platform.freqs, sol, fixed_opt=fixed)
    _checked(
        gn, sched, asg, platform, eps_max, WorkloadContract.baseline(gn), "baseline"
    )
    return MethodOutcome(
        "baseline",
        True,
        qos=sched.qos,
        energy=sched.energy,
        makespan=sched.makespan,
        runtime=runtime,
        schedule=sched,
        assignment=asg,
        status="optimal",
    )


def run_milp(
    g: TaskGraph,
    platform: PlatformConfig,
    eps_max: float,
    time_limit: float = 600.0,
    seed_with_proposed: bool = True,
) -> MethodOutcome:
    """Exact reference via branch-and-bound, optionally warm-started with the
    proposed method's solution (which is always MILP-feasible)."""
    t0 = time.monotonic()
    gn = normalize_source(g)
    model = build_milp(
        gn, platform.procs, platform.freqs, platform.power, eps_max, gn.deadline
    )
    seed_values = None
    if seed_with_proposed:
        prop = run_proposed(g, platform, eps_max)
        if prop.feasible:
            seed_values = encode_solution(model, prop.assignment, prop.schedule)
    res, sched, asg = solve_branch_and_bound(
        model, time_limit=time_limit, seed_values=seed_values
    )
    runtime = time.monotonic() - t0
    if res.status == "infeasible":
        return MethodOutcome("milp", False, runtime=runtime, nodes=res.nodes, status="infeasible")
    if sched is None:
        return MethodOutcome("milp", False, runtime=runtime, nodes=res.nodes, status=res.status)
    _checked(
        gn,
        sched,
        asg,
        platform,
        eps_max,
        WorkloadContract.from_milp_schedule(gn, sched),
        "milp",
    )
    return MethodOutcome(
        "milp",
        True,
        qos=sched.qos,
        energy=sched.energy,
        makespan=sched.makespan,
        runtime=runtime,
        schedule=sched,
        assignment=asg,
        gap=res.gap,
        nodes=res.nodes,
        status=res.status,
    )


def sweep_ratios(resolution: float):
    """1.00, 1.00-resolution, ... down to (but excluding) zero."""
    k = 0
    while True:
        ratio = round(1.0 - k * resolution, 10)
        if ratio <= 0:
            return
        yield ratio
        k += 1


def sweep_graph(
    graph_id: str,
    g: TaskGraph,
    platform: PlatformConfig,
    cfg: SweepConfig,
    eps_star_value: float | None = None,
) -> list[SweepRow]:
    """Run every configured method down its own feasibility cliff."""
    if eps_star_value is None:
        eps_star_value, _, _ = epsilon_star(g, platform)
    rows: list[SweepRow] = []
    for method in cfg.methods:
        beyond = None  # points probed past the first infeasible ratio
        for ratio in sweep_ratios(cfg.resolution):
            eps_max = ratio * eps_star_value
            if method == "proposed":
                out = run_proposed(g, platform, eps_max)
            elif method == "baseline":
                out = run_baseline(g, platform, eps_max)
            else:
                out = run_milp(
                    g,
                    platform,
                    eps_max,
                    time_limit=cfg.milp_time_limit,
                    seed_with_proposed=cfg.milp_seed_with_proposed,
                )
            rows.append(
                SweepRow(
                    graph_id,
                    method,
                    ratio,
                    out.feasible,
                    out.qos,
                    out.energy,
                    out.makespan,
                    out.runtime,
                    out.gap,
                    out.nodes,
                )
            )
            if not out.feasible:
                beyond = 0 if beyond is None else beyond + 1
                if beyond >= cfg.past_infeasible:
                    break
    rows.sort(key=lambda r: (r.graph_id, r.method, -r.eps_ratio))
    return rows


def _num(x, fmt="{:.12g}") -> str:
    return "" if x is None else fmt.format(x)


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.graph_id,
                    r.method,
                    f"{r.eps_ratio:g}",
                    "1" if r.feasible else "0",
                    _num(r.qos),
                    _num(r.energy),
                    _num(r.makespan),
                    f"{r.runtime:.6f}",
                    _num(r.gap, "{:.6g}"),
                    "" if r.nodes is None else str(r.nodes),
                ]
            )
        )
    return "\n".join(lines) + "\n"
