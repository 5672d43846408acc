"""Exact reference formulation: joint assignment, ordering, frequency split,
and optional-cycle selection as one mixed-integer program, solved by an
in-repo best-first branch-and-bound over the LP relaxation.

Binary variables: Pi[k,u] assigns task u to processor k; Y[k,u,v] says u runs
immediately before v on k (with virtual list heads 0 and n+1); X[u] clamps the
summed parent output errors at 1. The product X*errsum is linearized exactly.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .energy import FrequencySet, PowerModel
from .listsched import Assignment
from .lp import EQ, GE, LE, CompiledLP, LinearProgram, LPSolution, max_violation, solve_lp
from .schedlp import Schedule, _energy_coeffs, _qos_objective, decode_schedule
from .taskgraph import TaskGraph, topological_order

__all__ = [
    "MilpModel",
    "BnbResult",
    "linearize_product",
    "build_milp",
    "solve_branch_and_bound",
    "encode_solution",
    "decode_assignment",
]

INT_TOL = 1e-6


@dataclass
class MilpModel:
    lp: LinearProgram
    binaries: tuple[str, ...]  # Pi block, then Y, then X; order = branch tie priority
    task_order: tuple[str, ...]  # index 1..n maps to task_order[i-1]
    procs: int
    graph: TaskGraph
    power: PowerModel
    freqs: FrequencySet
    eps_max: float
    deadline: float


@dataclass
class BnbResult:
    status: str  # optimal | feasible | infeasible | unknown
    objective: float | None
    bound: float
    nodes: int
    wall_time: float

    @property
    def gap(self) -> float:
        if self.objective is None:
            return float("inf")
        return (self.bound - self.objective) / max(1e-9, abs(self.objective))


def linearize_product(
    lp: LinearProgram, z: str, x: str, y: str, upper: float
) -> None:
    """Constrain z = x*y for binary x and continuous y in [0, upper].

    Exact whenever x is integral: x=0 forces z=0, x=1 forces z=y.
    z must have been declared with bounds [0, upper].
    """
    if not np.isfinite(upper):
        raise ValueError("product linearization needs a finite upper bound")
    lp.add_row(f"linz_cap[{z}]", {z: 1.0, x: -upper}, LE, 0.0)
    lp.add_row(f"linz_le[{z}]", {z: 1.0, y: -1.0}, LE, 0.0)
    lp.add_row(f"linz_ge[{z}]", {z: 1.0, y: -1.0, x: -upper}, GE, -upper)


def build_milp(
    g: TaskGraph,
    procs: int,
    fs: FrequencySet,
    pm: PowerModel,
    eps_max: float,
    T_d: float,
) -> MilpModel:
    """Full joint model over the normalized DAG."""
    if procs < 1:
        raise ValueError("need at least one processor")
    topological_order(g)  # rejects cycles
    tasks = tuple(sorted(g.tasks))
    n = len(tasks)
    idx = {u: i + 1 for i, u in enumerate(tasks)}  # 1..n; 0 / n+1 virtual

    lp = LinearProgram()
    for u in tasks:
        lp.add_var(f"S[{u}]", 0.0, T_d)
        lp.add_var(f"D[{u}]", 0.0, T_d)
        for i, f in enumerate(fs):
            lp.add_var(f"N[{u},{i}]", 0.0, T_d * f)
    for u in tasks:
        t = g.task(u)
        lp.add_var(f"o[{u}]", 0.0, float(t.optional))
        lp.add_var(f"Eo[{u}]", 0.0, 1.0)
        lp.add_var(f"Esum[{u}]", 0.0, float(max(len(g.parents(u)), 0)))
        lp.add_var(f"Ei[{u}]", 0.0, 1.0)

    pi_names = []
    for k in range(procs):
        for u in tasks:
            pi_names.append(lp.add_var(f"Pi[{k},{u}]", 0.0, 1.0))
    y_names = []
    for k in range(procs):
        for ui in range(0, n + 1):
            for vi in range(1, n + 2):
                if vi == ui:
                    continue
                y_names.append(lp.add_var(f"Y[{k},{ui},{vi}]", 0.0, 1.0))
    x_names = []
    for u in tasks:
        x_names.append(lp.add_var(f"X[{u}]", 0.0, 1.0))
        lp.add_var(f"Z[{u}]", 0.0, float(n))

    # timing rows (same shape as the LP stage, minus fixed chains)
    for u in tasks:
        coeffs = {f"N[{u},{i}]": 1.0 / f for i, f in enumerate(fs)}
        coeffs[f"D[{u}]"] = -1.0
        lp.add_row(f"dur[{u}]", coeffs, EQ, 0.0)
        lp.add_row(f"dl[{u}]", {f"S[{u}]": 1.0, f"D[{u}]": 1.0}, LE, T_d)
    for e in g.edges:
        lp.add_row(
            f"prec[{e.src},{e.dst}]",
            {f"S[{e.src}]": 1.0, f"D[{e.src}]": 1.0, f"S[{e.dst}]": -1.0},
            LE,
            -e.comm,
        )
    lp.add_row("energy", _energy_coeffs(g, pm, fs), LE, eps_max)

    # one processor per task
    for u in tasks:
        lp.add_row(
            f"assign[{u}]", {f"Pi[{k},{u}]": 1.0 for k in range(procs)}, EQ, 1.0
        )

    # ordering flow: every assigned task has exactly one predecessor and one
    # successor slot on its processor; virtual 0 and n+1 are always present
    for k in range(procs):
        for ui in range(0, n + 1):
            coeffs = {
                f"Y[{k},{ui},{vi}]": 1.0 for vi in range(1, n + 2) if vi != ui
            }
            if ui == 0:
                lp.add_row(f"flow_out[{k},0]", coeffs, EQ, 1.0)
            else:
                coeffs[f"Pi[{k},{tasks[ui - 1]}]"] = -1.0
                lp.add_row(f"flow_out[{k},{ui}]", coeffs, EQ, 0.0)
        for vi in range(1, n + 2):
            coeffs = {
                f"Y[{k},{ui},{vi}]": 1.0 for ui in range(0, n + 1) if ui != vi
            }
            if vi == n + 1:
                lp.add_row(f"flow_in[{k},{n + 1}]", coeffs, EQ, 1.0)
            else:
                coeffs[f"Pi[{k},{tasks[vi - 1]}]"] = -1.0
                lp.add_row(f"flow_in[{k},{vi}]", coeffs, EQ, 0.0)

    # big-M non-overlap, activated by the ordering decision
    for k in range(procs):
        for u in tasks:
            for v in tasks:
                if u == v:
                    continue
                lp.add_row(
                    f"seq[{k},{u},{v}]",
                    {
                        f"S[{u}]": 1.0,
                        f"D[{u}]": 1.0,
                        f"S[{v}]": -1.0,
                        f"Y[{k},{idx[u]},{idx[v]}]": T_d,
                    },
                    LE,
                    T_d,
                )

    # error propagation
    for u in tasks:
        t = g.task(u)
        lp.add_row(
            f"errdef[{u}]", {f"Eo[{u}]": 1.0, f"o[{u}]": 1.0 / t.optional}, EQ, 1.0
        )
        coeffs = {f"Esum[{u}]": 1.0}
        for p in g.parents(u):
            coeffs[f"Eo[{p}]"] = -1.0
        lp.add_row(f"errsum[{u}]", coeffs, EQ, 0.0)
        # clamp binary: X = 1 exactly when the parent error sum exceeds 1
        lp.add_row(
            f"clamp_lo[{u}]", {f"X[{u}]": float(n), f"Esum[{u}]": -1.0}, GE, -1.0
        )
        lp.add_row(f"clamp_hi[{u}]", {f"X[{u}]": 1.0, f"Esum[{u}]": -1.0}, LE, 0.0)
        linearize_product(lp, f"Z[{u}]", f"X[{u}]", f"Esum[{u}]", float(n))
        lp.add_row(
            f"inerr[{u}]",
            {f"Ei[{u}]": 1.0, f"X[{u}]": -1.0, f"Esum[{u}]": -1.0, f"Z[{u}]": 1.0},
            EQ,
            0.0,
        )
        # executed cycles = mandatory + compensation + executed optional
        coeffs = {f"N[{u},{i}]": 1.0 for i in range(len(fs))}
        coeffs[f"Ei[{u}]"] = -float(t.extension)
        coeffs[f"o[{u}]"] = -1.0
        lp.add_row(f"load[{u}]", coeffs, EQ, float(t.mandatory))

    _qos_objective(lp, g)
    binaries = tuple(pi_names + y_names + x_names)
    return MilpModel(lp, binaries, tasks, procs, g, pm, fs, eps_max, T_d)


def encode_solution(
    model: MilpModel,
    asg: Assignment,
    sched: Schedule,
) -> dict[str, float]:
    """Translate a heuristic schedule into a full MILP variable assignment.

    Used to warm-start branch-and-bound with the proposed method's solution;
    the point is checked against the model rows before being accepted.
    """
    g = model.graph
    n = len(model.task_order)
    idx = {u: i + 1 for i, u in enumerate(model.task_order)}
    values: dict[str, float] = {}
    for u in g.tasks:
        values[f"S[{u}]"] = sched.start[u]
        values[f"D[{u}]"] = sched.durations[u]
    for (u, i), ncyc in sched.cycles.items():
        values[f"N[{u},{i}]"] = ncyc
    for u in g.tasks:
        t = g.task(u)
        o = float(sched.opt_cycles.get(u, 0.0))
        values[f"o[{u}]"] = o
        values[f"Eo[{u}]"] = 1.0 - o / t.optional
    for u in g.tasks:
        esum = sum(values[f"Eo[{p}]"] for p in g.parents(u))
        x = 1.0 if esum > 1.0 + 1e-12 else 0.0
        values[f"Esum[{u}]"] = esum
        values[f"X[{u}]"] = x
        values[f"Z[{u}]"] = x * esum
        values[f"Ei[{u}]"] = x + esum - x * esum
    for k in range(model.procs):
        for u in g.tasks:
            values[f"Pi[{k},{u}]"] = 1.0 if asg.proc_of[u] == k else 0.0
        chain = [0] + [idx[u] for u in asg.order[k]] + [n + 1]
        arcs = set(zip(chain, chain[1:]))
        for ui in range(0, n + 1):
            for vi in range(1, n + 2):
                if vi == ui:
                    continue
                values[f"Y[{k},{ui},{vi}]"] = 1.0 if (ui, vi) in arcs else 0.0
    return values


def decode_assignment(model: MilpModel, values: dict[str, float]) -> Assignment:
    """Read processor chains out of integral Pi/Y values.

    Raises if the arcs do not form one clean path per processor covering
    exactly the assigned tasks (possible only for zero-duration cycles,
    which well-formed instances do not produce).
    """
    n = len(model.task_order)
    proc_of: dict[str, int] = {}
    order = []
    for k in range(model.procs):
        assigned = {
            u for u in model.task_order if values[f"Pi[{k},{u}]"] > 0.5
        }
        nxt: dict[int, int] = {}
        for ui in range(0, n + 1):
            for vi in range(1, n + 2):
                if vi != ui and values[f"Y[{k},{ui},{vi}]"] > 0.5:
                    if ui in nxt:
                        raise ValueError(f"processor {k}: task {ui} has two successors")
                    nxt[ui] = vi
        chain = []
        cur = 0
        seen = set()
        while cur != n + 1:
            if cur not in nxt or cur in seen:
                raise ValueError(f"processor {k}: broken ordering chain")
            seen.add(cur)
            cur = nxt[cur]
            if cur != n + 1:
                chain.append(model.task_order[cur - 1])
        if set(chain) != assigned:
            raise ValueError(f"processor {k}: chain does not match assignment")
        for u in chain:
            if u in proc_of:
                raise ValueError(f"task {u} assigned to two processors")
            proc_of[u] = k
        order.append(tuple(chain))
    if set(proc_of) != set(model.task_order):
        raise ValueError("some tasks are unassigned")
    return Assignment(proc_of, tuple(order))


def _binary_rows(comp: CompiledLP, bin_idx: np.ndarray):
    """Precompute row slices used by activity-based bound tightening."""
    is_bin = np.zeros(len(comp.var_names), dtype=bool)
    is_bin[bin_idx] = True
    rows = []
    for r in range(comp.A.shape[0]):
        cols = np.nonzero(comp.A[r])[0]
        if not is_bin[cols].any():
            continue
        rows.append(
            (cols, comp.A[r, cols].copy(), comp.senses[r], comp.b[r], is_bin[cols])
        )
    return rows


def _tighten(rows, lo: np.ndarray, hi: np.ndarray) -> bool:
    """Round implied binary bounds to 0/1; returns False on infeasibility."""
    for _ in range(10):
        changed = False
        for cols, coefs, sense, rhs, binmask in rows:
            l = lo[cols]
            h = hi[cols]
            lo_term = np.where(coefs > 0, coefs * l, coefs * h)
            hi_term = np.where(coefs > 0, coefs * h, coefs * l)
            minact = lo_term.sum()
            maxact = hi_term.sum()
            if sense in (LE, EQ) and np.isfinite(minact):
                if minact > rhs + 1e-7:
                    return False
                slack = rhs - minact
                for j in np.nonzero(binmask)[0]:
                    a = coefs[j]
                    if a > 0 and h[j] > l[j]:
                        cap = l[j] + slack / a
                        if cap < 1.0 - INT_TOL and hi[cols[j]] > 0.0:
                            if cap < -INT_TOL:
                                return False
                            hi[cols[j]] = 0.0
                            changed = True
                    elif a < 0 and h[j] > l[j]:
                        floor_ = h[j] - slack / (-a)
                        if floor_ > INT_TOL and lo[cols[j]] < 1.0:
                            if floor_ > 1.0 + INT_TOL:
                                return False
                            lo[cols[j]] = 1.0
                            changed = True
            if sense in (GE, EQ) and np.isfinite(maxact):
                if maxact < rhs - 1e-7:
                    return False
                surplus = maxact - rhs
                for j in np.nonzero(binmask)[0]:
                    a = coefs[j]
                    if a > 0 and h[j] > l[j]:
                        floor_ = h[j] - surplus / a
                        if floor_ > INT_TOL and lo[cols[j]] < 1.0:
                            if floor_ > 1.0 + INT_TOL:
                                return False
                            lo[cols[j]] = 1.0
                            changed = True
                    elif a < 0 and h[j] > l[j]:
                        cap = l[j] + surplus / (-a)
                        if cap < 1.0 - INT_TOL and hi[cols[j]] > 0.0:
                            if cap < -INT_TOL:
                                return False
                            hi[cols[j]] = 0.0
                            changed = True
            if changed and np.any(lo[cols] > hi[cols]):
                return False
        if not changed:
            break
    return not np.any(lo > hi)


def solve_branch_and_bound(
    model: MilpModel,
    time_limit: float = 600.0,
    node_cap: int = 1_000_000,
    seed_values: dict[str, float] | None = None,
) -> tuple[BnbResult, Schedule | None, Assignment | None]:
    """Best-first branch-and-bound on the LP relaxation.

    Branches on the most fractional binary (ties: Pi before Y before X, then
    ascending index); falls back to deepest-first node selection when the
    open-node count nears node_cap. seed_values, when given and feasible,
    becomes the initial incumbent.
    """
    t0 = time.monotonic()
    comp = model.lp.compile()
    bin_idx = np.array([comp.var_index[b] for b in model.binaries], dtype=np.int64)
    rows = _binary_rows(comp, bin_idx)

    incumbent_obj = None
    incumbent_sol: LPSolution | None = None
    if seed_values is not None:
        x = np.array([seed_values[n] for n in comp.var_names])
        if max_violation(comp, x) <= 1e-6:
            incumbent_obj = float(comp.c @ x) + comp.constant
            incumbent_sol = LPSolution(
                "optimal",
                incumbent_obj,
                {n: float(x[j]) for j, n in enumerate(comp.var_names)},
                {},
                {},
                0,
                "seeded incumbent",
            )

    nodes: dict[int, tuple[float, int, np.ndarray, np.ndarray]] = {}
    heap_best: list[tuple[float, int]] = []
    heap_deep: list[tuple[int, int]] = []
    push_count = 0

    def push(bound, depth, lo, hi):
        nonlocal push_count
        nid = push_count
        push_count += 1
        nodes[nid] = (bound, depth, lo, hi)
        heapq.heappush(heap_best, (-bound, nid))
        heapq.heappush(heap_deep, (-depth, -nid))

    push(float("inf"), 0, comp.lo.copy(), comp.hi.copy())
    explored = 0
    status = None

    def better(obj):
        return incumbent_obj is None or obj > incumbent_obj + 1e-9

    while nodes:
        if time.monotonic() - t0 > time_limit:
            status = "feasible" if incumbent_obj is not None else "unknown"
            break
        dfs_mode = len(nodes) > 0.9 * node_cap
        nid = None
        if dfs_mode:
            while heap_deep:
                _, neg = heapq.heappop(heap_deep)
                if -neg in nodes:
                    nid = -neg
                    break
        else:
            while heap_best:
                _, cand = heapq.heappop(heap_best)
                if cand in nodes:
                    nid = cand
                    break
        if nid is None:
            break
        bound, depth, lo, hi = nodes.pop(nid)
        if incumbent_obj is not None and bound <= incumbent_obj + 1e-9:
            continue
        explored += 1

        lo = lo.copy()
        hi = hi.copy()
        if not _tighten(rows, lo, hi):
            continue
        sol = solve_lp(comp, lower=lo, upper=hi)
        if sol.status == "infeasible":
            continue
        if not sol.optimal:
            # numerical trouble on a subproblem: treat as unexplored bound
            status = "unknown"
            break
        node_bound = min(bound, sol.objective)
        if incumbent_obj is not None and node_bound <= incumbent_obj + 1e-9:
            continue

        xb = np.array([sol.values[comp.var_names[j]] for j in bin_idx])
        frac = np.minimum(np.abs(xb), np.abs(1.0 - xb))
        frac = np.where(hi[bin_idx] > lo[bin_idx], frac, 0.0)
        worst = float(frac.max(initial=0.0))
        if worst <= INT_TOL:
            flo = lo.copy()
            fhi = hi.copy()
            rounded = np.round(np.clip(xb, 0.0, 1.0))
            flo[bin_idx] = rounded
            fhi[bin_idx] = rounded
            fixed_sol = solve_lp(comp, lower=flo, upper=fhi)
            if fixed_sol.optimal:
                decode_assignment(
                    model, {n: fixed_sol.values[n] for n in comp.var_names}
                )  # structural sanity; raises on subtours
                if better(fixed_sol.objective):
                    incumbent_obj = fixed_sol.objective
                    incumbent_sol = fixed_sol
            continue

        # most fractional; ties resolved by position in the binaries tuple
        best_j = None
        best_score = -1.0
        for pos, j in enumerate(bin_idx):
            if hi[j] <= lo[j]:
                continue
            score = min(xb[pos], 1.0 - xb[pos])
            if score > best_score + 1e-9:
                best_score = score
                best_j = j
        if best_j is None or best_score <= INT_TOL:
            continue
        for branch_val in (0.0, 1.0):
            blo = lo.copy()
            bhi = hi.copy()
            blo[best_j] = branch_val
            bhi[best_j] = branch_val
            push(node_bound, depth + 1, blo, bhi)

    wall = time.monotonic() - t0
    if status is None:
        status = "optimal" if incumbent_obj is not None else "infeasible"
    open_bounds = [nodes[k][0] for k in nodes]
    best_bound = max(
        open_bounds + ([incumbent_obj] if incumbent_obj is not None else []),
        default=float("-inf"),
    )
    if status == "optimal":
        best_bound = incumbent_obj
    result = BnbResult(status, incumbent_obj, best_bound, explored, wall)

    schedule = None
    assignment = None
    if incumbent_sol is not None:
        schedule = decode_schedule(model.graph, model.power, model.freqs, incumbent_sol)
        assignment = decode_assignment(model, incumbent_sol.values)
    return result, schedule, assignment
