"""Processor assignment and per-processor ordering at maximum frequency.

A homogeneous earliest-finish-time list scheduler: tasks are ranked by the
critical-path length to the exits and placed, in decreasing rank order, on
the processor that finishes them earliest, optionally inside idle gaps.
Communication is charged only across distinct processors unless lp_comm is
set (which mirrors the unconditional edge costs used by the LP stage).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .taskgraph import TaskGraph, topological_order

__all__ = ["Assignment", "RankTable", "upward_rank", "heft_assign", "format_assignment"]


@dataclass(frozen=True)
class RankTable:
    rank: dict[str, float]  # seconds


@dataclass(frozen=True)
class Assignment:
    proc_of: dict[str, int]
    order: tuple[tuple[str, ...], ...]  # per processor, by start time

    @property
    def n_procs(self) -> int:
        return len(self.order)


def upward_rank(
    g: TaskGraph, workloads: Mapping[str, float], f_max: float
) -> RankTable:
    """Critical-path length (seconds) from each task to the exits at f_max."""
    if f_max <= 0:
        raise ValueError("f_max must be positive")
    missing = [u for u in g.tasks if u not in workloads]
    if missing:
        raise KeyError(f"missing workload entries for: {', '.join(sorted(missing))}")
    rank: dict[str, float] = {}
    for u in reversed(topological_order(g)):
        dur = workloads[u] / f_max
        best = 0.0
        for v in g.children(u):
            best = max(best, g.comm(u, v) + rank[v])
        rank[u] = dur + best
    return RankTable(rank)


def _earliest_slot(busy, ready: float, dur: float, insertion: bool) -> float:
    """Earliest start >= ready on a processor with the given busy intervals."""
    if not insertion or not busy:
        last = busy[-1][1] if busy else 0.0
        return max(ready, last)
    t = ready
    for s, e in busy:
        if t + dur <= s:
            return t
        t = max(t, e)
    return t


def heft_assign(
    g: TaskGraph,
    workloads: Mapping[str, float],
    procs: int,
    f_max: float,
    insertion: bool = True,
    lp_comm: bool = False,
) -> Assignment:
    """Assign each task to its earliest-finish processor at f_max.

    Decreasing rank order is a topological order, so parents are always
    placed before their children. Ties everywhere break toward ascending
    task id / lower processor index.
    """
    if procs < 1:
        raise ValueError("need at least one processor")
    ranks = upward_rank(g, workloads, f_max).rank
    task_list = sorted(g.tasks, key=lambda u: (-ranks[u], u))

    busy: list[list[tuple[float, float]]] = [[] for _ in range(procs)]
    placed: dict[str, tuple[int, float, float]] = {}  # proc, start, finish
    proc_of: dict[str, int] = {}

    for u in task_list:
        dur = workloads[u] / f_max
        best = None
        for k in range(procs):
            ready = 0.0
            for p in g.parents(u):
                pk, _, pf = placed[p]
                arrival = pf
                if lp_comm or pk != k:
                    arrival += g.comm(p, u)
                ready = max(ready, arrival)
            start = _earliest_slot(busy[k], ready, dur, insertion)
            finish = start + dur
            if best is None or finish < best[0] - 1e-15:
                best = (finish, k, start)
        finish, k, start = best
        placed[u] = (k, start, finish)
        proc_of[u] = k
        busy[k].append((start, finish))
        busy[k].sort()

    order = tuple(
        tuple(sorted((u for u in placed if proc_of[u] == k), key=lambda u: (placed[u][1], u)))
        for k in range(procs)
    )
    return Assignment(proc_of, order)


def format_assignment(asg: Assignment) -> str:
    lines = []
    for k, seq in enumerate(asg.order):
        for slot, u in enumerate(seq):
            lines.append(f"assign {u} proc={k} slot={slot}")
    return "\n".join(lines) + "\n"
