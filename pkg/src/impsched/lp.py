"""Linear-program container and a self-contained bounded-variable simplex solver.

The solver is a dense two-phase revised simplex with an explicitly maintained
basis inverse, Dantzig pricing with a Bland fallback for anti-cycling, and
power-of-two equilibration so cycle counts (~1e6) and seconds (~1e-3) coexist
in one tableau. Solutions are re-checked against the original data before
being reported; numerical trouble is surfaced as a status, never silently.

Dual conventions (reduced cost rc = c - A^T y):
  min: '<=' rows carry y <= 0, '>=' rows y >= 0; x at lower bound -> rc >= 0,
       x at upper bound -> rc <= 0.
  max: signs flipped ('<=' rows y >= 0; x at lower -> rc <= 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "INF",
    "LE",
    "GE",
    "EQ",
    "LinearProgram",
    "CompiledLP",
    "LPSolution",
    "solve_lp",
    "max_violation",
    "write_lp_file",
]

INF = float("inf")
LE, GE, EQ = "<=", ">=", "=="
_SENSES = (LE, GE, EQ)

FEAS_TOL = 1e-7  # absolute feasibility tolerance on scaled rows


class LinearProgram:
    """Named variables with bounds, linear rows, and one linear objective."""

    def __init__(self):
        self._var_names: list[str] = []
        self._var_index: dict[str, int] = {}
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._row_names: list[str] = []
        self._row_index: dict[str, int] = {}
        self._rows: list[tuple[dict[str, float], str, float]] = []
        self.maximize = False
        self._obj: dict[str, float] = {}
        self.objective_constant = 0.0

    @property
    def n_vars(self) -> int:
        return len(self._var_names)

    @property
    def n_rows(self) -> int:
        return len(self._row_names)

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(self._var_names)

    @property
    def row_names(self) -> tuple[str, ...]:
        return tuple(self._row_names)

    def add_var(self, name: str, lo: float = 0.0, hi: float = INF) -> str:
        if name in self._var_index:
            raise ValueError(f"duplicate variable {name!r}")
        if not lo <= hi:
            raise ValueError(f"variable {name!r}: lower bound exceeds upper bound")
        self._var_index[name] = len(self._var_names)
        self._var_names.append(name)
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        return name

    def add_row(self, name: str, coeffs: dict, sense: str, rhs: float) -> str:
        if name in self._row_index:
            raise ValueError(f"duplicate row {name!r}")
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        for v in coeffs:
            if v not in self._var_index:
                raise ValueError(f"row {name!r} references unknown variable {v!r}")
        if not math.isfinite(rhs):
            raise ValueError(f"row {name!r}: non-finite right-hand side")
        self._row_index[name] = len(self._row_names)
        self._row_names.append(name)
        self._rows.append((dict(coeffs), sense, float(rhs)))
        return name

    def set_objective(self, sense: str, coeffs: dict, constant: float = 0.0):
        if sense not in ("min", "max"):
            raise ValueError("objective sense must be 'min' or 'max'")
        for v in coeffs:
            if v not in self._var_index:
                raise ValueError(f"objective references unknown variable {v!r}")
        self.maximize = sense == "max"
        self._obj = dict(coeffs)
        self.objective_constant = float(constant)

    def compile(self) -> "CompiledLP":
        nv, nr = self.n_vars, self.n_rows
        A = np.zeros((nr, nv))
        b = np.zeros(nr)
        senses: list[str] = []
        for i, (coeffs, sense, rhs) in enumerate(self._rows):
            for v, a in coeffs.items():
                if not math.isfinite(a):
                    raise ValueError(f"non-finite coefficient in row {self._row_names[i]!r}")
                A[i, self._var_index[v]] = a
            b[i] = rhs
            senses.append(sense)
        c = np.zeros(nv)
        for v, a in self._obj.items():
            c[self._var_index[v]] = a
        return CompiledLP(
            var_names=tuple(self._var_names),
            var_index=dict(self._var_index),
            row_names=tuple(self._row_names),
            A=A,
            b=b,
            senses=tuple(senses),
            c=c,
            lo=np.array(self._lo),
            hi=np.array(self._hi),
            maximize=self.maximize,
            constant=self.objective_constant,
        )


@dataclass
class CompiledLP:
    var_names: tuple[str, ...]
    var_index: dict[str, int]
    row_names: tuple[str, ...]
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    maximize: bool
    constant: float


@dataclass
class LPSolution:
    status: str  # optimal | infeasible | unbounded | numerical
    objective: float | None
    values: dict[str, float]
    duals: dict[str, float]
    reduced_costs: dict[str, float]
    iterations: int
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def max_violation(comp: CompiledLP, x: np.ndarray, lo=None, hi=None) -> float:
    """Largest constraint/bound violation of x, normalized per row."""
    lo = comp.lo if lo is None else lo
    hi = comp.hi if hi is None else hi
    worst = 0.0
    if comp.A.shape[0]:
        act = comp.A @ x
        scale = np.maximum(1.0, np.abs(comp.A).max(axis=1, initial=0.0))
        scale = np.maximum(scale, np.abs(comp.b))
        for i, sense in enumerate(comp.senses):
            if sense == LE:
                v = act[i] - comp.b[i]
            elif sense == GE:
                v = comp.b[i] - act[i]
            else:
                v = abs(act[i] - comp.b[i])
            worst = max(worst, v / scale[i])
    bscale = np.maximum(1.0, np.maximum(np.abs(x), np.where(np.isfinite(lo), np.abs(lo), 0.0)))
    lov = np.where(np.isfinite(lo), (lo - x) / bscale, 0.0)
    hiv = np.where(np.isfinite(hi), (x - hi) / bscale, 0.0)
    if len(x):
        worst = max(worst, float(lov.max(initial=0.0)), float(hiv.max(initial=0.0)))
    return worst


def _pow2_scale(values: np.ndarray) -> np.ndarray:
    """1/values rounded to the nearest power of two (exact in float64)."""
    out = np.ones_like(values)
    mask = values > 0
    out[mask] = np.exp2(-np.round(np.log2(values[mask])))
    return out


def _equilibrate(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Geometric-mean row/column scaling (powers of two, hence exact).

    Balances rows and columns whose nonzeros span many orders of magnitude,
    e.g. cycle counts next to per-cycle energies; max-norm scaling alone
    cannot fix a column whose largest coefficient is already O(1).
    """
    nr, nc = A.shape
    R = np.ones(nr)
    C = np.ones(nc)
    M = np.abs(A)
    with np.errstate(invalid="ignore"):
        for _ in range(2):
            S = M * R[:, None] * C[None, :]
            rmax = S.max(axis=1, initial=0.0)
            rmin = np.where(S > 0, S, np.inf).min(axis=1, initial=np.inf)
            rs = np.where(
                (rmax > 0) & np.isfinite(rmin), np.sqrt(rmax * rmin), 1.0
            )
            R *= _pow2_scale(rs)
            S = M * R[:, None] * C[None, :]
            cmax = S.max(axis=0, initial=0.0)
            cmin = np.where(S > 0, S, np.inf).min(axis=0, initial=np.inf)
            cs = np.where(
                (cmax > 0) & np.isfinite(cmin), np.sqrt(cmax * cmin), 1.0
            )
            C *= _pow2_scale(cs)
    # final row pass so every row's largest entry is near 1
    S = M * R[:, None] * C[None, :]
    R *= _pow2_scale(S.max(axis=1, initial=0.0))
    return R, C


class _Simplex:
    """Two-phase bounded-variable simplex on pre-scaled dense data."""

    PIV_TOL = 1e-9
    RATIO_TOL = 1e-9
    REFACTOR_EVERY = 128

    def __init__(self, A, b, senses, c_min, lo, hi):
        nr, nv = A.shape
        self.nr, self.nv = nr, nv
        slack_lo = np.array([0.0 if s == LE else (-INF if s == GE else 0.0) for s in senses])
        slack_hi = np.array([INF if s == LE else (0.0 if s == GE else 0.0) for s in senses])
        self.ncols = nv + nr
        self.A = np.hstack([A, np.eye(nr)]) if nr else A.reshape(0, nv)
        self.b = b.astype(float)
        self.lo = np.concatenate([lo, slack_lo])
        self.hi = np.concatenate([hi, slack_hi])
        self.c_min = c_min
        self.n_art = 0
        self.iterations = 0
        self.message = ""

    def _init_basis(self):
        nr, nv, ncols = self.nr, self.nv, self.ncols
        x = np.zeros(ncols)
        x[:nv] = np.where(
            np.isfinite(self.lo[:nv]),
            self.lo[:nv],
            np.where(np.isfinite(self.hi[:nv]), self.hi[:nv], 0.0),
        )
        # 0 at lower, 1 at upper, 2 basic, 3 free nonbasic
        vstat = np.zeros(ncols, dtype=np.int8)
        for j in range(nv):
            if np.isfinite(self.lo[j]):
                vstat[j] = 0
            elif np.isfinite(self.hi[j]):
                vstat[j] = 1
            else:
                vstat[j] = 3
        r = self.b - self.A[:, :nv] @ x[:nv] if nr else np.zeros(0)
        basis = np.empty(nr, dtype=np.int64)
        diag = np.ones(nr)
        art_rows: list[tuple[int, float, float]] = []
        for i in range(nr):
            s = nv + i
            if self.lo[s] - 1e-9 <= r[i] <= self.hi[s] + 1e-9:
                x[s] = r[i]
                vstat[s] = 2
                basis[i] = s
            else:
                v = min(max(r[i], self.lo[s]), self.hi[s])
                x[s] = v
                vstat[s] = 0 if v == self.lo[s] else 1
                resid = r[i] - v
                art_rows.append((i, 1.0 if resid > 0 else -1.0, abs(resid)))
                basis[i] = ncols + len(art_rows) - 1
        if art_rows:
            na = len(art_rows)
            Aa = np.zeros((nr, na))
            for jj, (i, sg, _) in enumerate(art_rows):
                Aa[i, jj] = sg
                diag[i] = sg
            self.A = np.hstack([self.A, Aa])
            self.lo = np.concatenate([self.lo, np.zeros(na)])
            self.hi = np.concatenate([self.hi, np.full(na, INF)])
            x = np.concatenate([x, np.array([v for *_, v in art_rows])])
            vstat = np.concatenate([vstat, np.full(na, 2, dtype=np.int8)])
        self.n_art = len(art_rows)
        self.total = self.ncols + self.n_art
        self.x = x
        self.vstat = vstat
        self.basis = basis
        self.B_inv = np.diag(diag) if nr else np.zeros((0, 0))
        self.in_basis = np.zeros(self.total, dtype=bool)
        self.in_basis[basis] = True

    def _refactor(self):
        if self.nr == 0:
            return
        B = self.A[:, self.basis]
        try:
            self.B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise _NumericalTrouble("singular basis during refactorization")
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.B_inv @ (self.b - self.A @ xn)

    def _iterate(self, c, fixed, maxiter):
        nr = self.nr
        tol_d = 1e-9 * max(1.0, float(np.abs(c).max(initial=0.0)))
        bland = False
        degen = 0
        since_refactor = 0
        while True:
            if self.iterations >= maxiter:
                return "iteration_limit"
            self.iterations += 1
            y = c[self.basis] @ self.B_inv if nr else np.zeros(0)
            d = c - (y @ self.A if nr else 0.0)
            can = ~self.in_basis & ~fixed
            up = can & (d < -tol_d) & ((self.vstat == 0) | (self.vstat == 3))
            down = can & (d > tol_d) & ((self.vstat == 1) | (self.vstat == 3))
            viol = np.where(up, -d, 0.0) + np.where(down, d, 0.0)
            if not np.any(viol > 0.0):
                return "optimal"
            if bland:
                q = int(np.nonzero(viol > 0.0)[0][0])
            else:
                q = int(np.argmax(viol))
            sigma = 1.0 if up[q] else -1.0

            w = self.B_inv @ self.A[:, q] if nr else np.zeros(0)
            delta = sigma * w
            xB = self.x[self.basis]
            loB = self.lo[self.basis]
            hiB = self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(delta > self.PIV_TOL, (xB - loB) / delta, INF)
                t_hi = np.where(delta < -self.PIV_TOL, (hiB - xB) / (-delta), INF)
            t_arr = np.maximum(np.minimum(t_lo, t_hi), 0.0)
            t_basic = float(t_arr.min()) if nr else INF
            t_range = self.hi[q] - self.lo[q]
            if not np.isfinite(min(t_basic, t_range)):
                return "unbounded"

            if t_range <= t_basic + self.RATIO_TOL:
                # entering variable flips to its opposite bound, basis unchanged
                if nr:
                    self.x[self.basis] = xB - t_range * delta
                self.x[q] += sigma * t_range
                self.vstat[q] = 1 - self.vstat[q]
                step = t_range
            else:
                cand = np.nonzero(t_arr <= t_basic + self.RATIO_TOL)[0]
                if bland:
                    rsel = int(cand[np.argmin(self.basis[cand])])
                else:
                    rsel = int(cand[np.argmax(np.abs(delta[cand]))])
                if abs(w[rsel]) < 1e-11:
                    self._refactor()
                    since_refactor = 0
                    continue
                t = float(t_arr[rsel])
                self.x[self.basis] = xB - t * delta
                self.x[q] += sigma * t
                leaving = int(self.basis[rsel])
                if delta[rsel] > 0:
                    self.x[leaving] = self.lo[leaving]
                    self.vstat[leaving] = 0
                else:
                    self.x[leaving] = self.hi[leaving]
                    self.vstat[leaving] = 1
                self.basis[rsel] = q
                self.vstat[q] = 2
                self.in_basis[leaving] = False
                self.in_basis[q] = True
                piv = w[rsel]
                self.B_inv[rsel, :] /= piv
                other = np.arange(nr) != rsel
                self.B_inv[other, :] -= np.outer(w[other], self.B_inv[rsel, :])
                since_refactor += 1
                if since_refactor >= self.REFACTOR_EVERY:
                    self._refactor()
                    since_refactor = 0
                step = t

            if step < 1e-12:
                degen += 1
                if degen > 60:
                    bland = True
            else:
                degen = 0
                bland = False

    def _drive_out_artificials(self, fixed):
        """Pivot basic artificials out where possible; leave redundant rows."""
        for i in range(self.nr):
            if self.basis[i] < self.ncols:
                continue
            row = self.B_inv[i] @ self.A[:, : self.ncols]
            cand = np.nonzero(
                (np.abs(row) > 1e-7) & ~self.in_basis[: self.ncols] & ~fixed[: self.ncols]
            )[0]
            if len(cand) == 0:
                continue
            q = int(cand[0])
            w = self.B_inv @ self.A[:, q]
            leaving = int(self.basis[i])
            self.basis[i] = q
            self.in_basis[leaving] = False
            self.in_basis[q] = True
            self.vstat[q] = 2
            self.vstat[leaving] = 0
            self.x[leaving] = 0.0
            self.B_inv[i, :] /= w[i]
            other = np.arange(self.nr) != i
            self.B_inv[other, :] -= np.outer(w[other], self.B_inv[i, :])

    def _iterate_polished(self, c, fixed, maxiter):
        """Run to optimality, refactor, and re-price until stable.

        The incremental basis-inverse updates drift; a refactorization can
        reopen a few pivots, so iterate until a fresh factorization agrees.
        """
        for _ in range(8):
            status = self._iterate(c, fixed, maxiter)
            if status != "optimal":
                return status
            before = self.iterations
            self._refactor()
            status = self._iterate(c, fixed, maxiter)
            if status != "optimal":
                return status
            if self.iterations == before + 1:  # re-priced once, nothing to do
                return "optimal"
        raise _NumericalTrouble("optimality did not stabilize under refactorization")

    def solve(self, maxiter):
        self._init_basis()
        fixed = self.hi - self.lo <= 0.0

        if self.n_art:
            c1 = np.zeros(self.total)
            c1[self.ncols :] = 1.0
            status = self._iterate_polished(c1, fixed, maxiter)
            if status in ("iteration_limit", "unbounded"):
                return "numerical", None, None
            infeas = float(self.x[self.ncols :].sum())
            if infeas > FEAS_TOL:
                return "infeasible", None, None
            self.lo[self.ncols :] = 0.0
            self.hi[self.ncols :] = 0.0
            self.x[self.ncols :] = 0.0
            fixed = self.hi - self.lo <= 0.0
            self._drive_out_artificials(fixed)

        c2 = np.zeros(self.total)
        c2[: self.nv] = self.c_min
        status = self._iterate_polished(c2, fixed, maxiter)
        if status == "iteration_limit":
            return "numerical", None, None
        if status == "unbounded":
            return "unbounded", None, None
        y = c2[self.basis] @ self.B_inv if self.nr else np.zeros(0)
        return "optimal", self.x[: self.nv].copy(), y.copy()


class _NumericalTrouble(RuntimeError):
    pass


def _solve_trivial(comp, lo, hi, c_min):
    """No constraint rows: optimize each variable against its own bounds."""
    x = np.zeros(len(c_min))
    for j, cj in enumerate(c_min):
        if cj > 0:
            if not np.isfinite(lo[j]):
                return "unbounded", None
            x[j] = lo[j]
        elif cj < 0:
            if not np.isfinite(hi[j]):
                return "unbounded", None
            x[j] = hi[j]
        else:
            x[j] = lo[j] if np.isfinite(lo[j]) else (hi[j] if np.isfinite(hi[j]) else 0.0)
    return "optimal", x


def solve_lp(problem, lower=None, upper=None) -> LPSolution:
    """Solve a LinearProgram or CompiledLP; bounds may be overridden per call.

    lower/upper are optional arrays indexed like CompiledLP.var_names (used by
    branch-and-bound to rebound binaries without rebuilding the program).
    """
    comp = problem.compile() if isinstance(problem, LinearProgram) else problem
    lo = comp.lo.copy() if lower is None else np.asarray(lower, dtype=float).copy()
    hi = comp.hi.copy() if upper is None else np.asarray(upper, dtype=float).copy()
    nv = len(comp.var_names)
    nr = len(comp.row_names)

    if np.any(lo > hi):
        return LPSolution("infeasible", None, {}, {}, {}, 0, "empty variable box")

    c_user = comp.c
    c_min = -c_user if comp.maximize else c_user.copy()

    if nr == 0:
        status, x = _solve_trivial(comp, lo, hi, c_min)
        if status != "optimal":
            return LPSolution(status, None, {}, {}, {}, 0)
        obj = float(c_user @ x) + comp.constant
        values = {n: float(x[j]) for j, n in enumerate(comp.var_names)}
        rc = c_user.copy()
        return LPSolution(
            "optimal", obj, values, {}, {n: float(rc[j]) for j, n in enumerate(comp.var_names)}, 0
        )

    # power-of-two equilibration: exact to apply and to undo
    R, C = _equilibrate(comp.A)
    As = comp.A * R[:, None] * C[None, :]
    bs = comp.b * R
    cs = c_min * C
    with np.errstate(invalid="ignore"):
        los = np.where(np.isfinite(lo), lo / C, lo)
        his = np.where(np.isfinite(hi), hi / C, hi)

    maxiter = 20000 + 50 * (nr + nv)
    try:
        core = _Simplex(As, bs, comp.senses, cs, los, his)
        status, xs, ys = core.solve(maxiter)
    except _NumericalTrouble as exc:
        return LPSolution("numerical", None, {}, {}, {}, 0, str(exc))

    if status != "optimal":
        return LPSolution(status, None, {}, {}, {}, core.iterations)

    x = xs * C
    # independent re-check against the original (unscaled) data
    viol = max_violation(comp, x, lo, hi)
    if viol > 10 * FEAS_TOL:
        return LPSolution(
            "numerical",
            None,
            {},
            {},
            {},
            core.iterations,
            f"solution violates original rows by {viol:.2e}",
        )

    y_min = ys * R
    y_user = -y_min if comp.maximize else y_min
    rc_user = c_user - comp.A.T @ y_user
    obj = float(c_user @ x) + comp.constant
    values = {n: float(x[j]) for j, n in enumerate(comp.var_names)}
    duals = {n: float(y_user[i]) for i, n in enumerate(comp.row_names)}
    rcs = {n: float(rc_user[j]) for j, n in enumerate(comp.var_names)}
    return LPSolution("optimal", obj, values, duals, rcs, core.iterations)


def _lp_safe(name: str) -> str:
    return name.replace("[", "(").replace("]", ")").replace(",", "_")


def _terms(coeffs: dict[str, float]) -> str:
    parts = []
    for v in coeffs:
        a = coeffs[v]
        if a == 0:
            continue
        sign = "+" if a >= 0 else "-"
        parts.append(f"{sign} {abs(a):.17g} {_lp_safe(v)}")
    return " ".join(parts) if parts else "0 " + "__zero__"


def write_lp_file(lp: LinearProgram, stream, binaries=()) -> None:
    """Emit the program in the industry LP text format for cross-checking."""
    comp = lp if isinstance(lp, LinearProgram) else None
    if comp is None:
        raise TypeError("write_lp_file expects a LinearProgram")
    stream.write("\\ generated by impsched\n")
    stream.write("Maximize\n" if lp.maximize else "Minimize\n")
    stream.write(f" obj: {_terms(lp._obj)}\n")
    stream.write("Subject To\n")
    sense_txt = {LE: "<=", GE: ">=", EQ: "="}
    for name, (coeffs, sense, rhs) in zip(lp._row_names, lp._rows):
        stream.write(
            f" {_lp_safe(name)}: {_terms(coeffs)} {sense_txt[sense]} {rhs:.17g}\n"
        )
    stream.write("Bounds\n")
    for j, name in enumerate(lp._var_names):
        lo, hi = lp._lo[j], lp._hi[j]
        safe = _lp_safe(name)
        if lo == hi:
            stream.write(f" {safe} = {lo:.17g}\n")
        elif math.isinf(hi) and lo == 0:
            continue
        elif math.isinf(hi):
            stream.write(f" {safe} >= {lo:.17g}\n")
        elif math.isinf(lo):
            stream.write(f" -inf <= {safe} <= {hi:.17g}\n")
        else:
            stream.write(f" {lo:.17g} <= {safe} <= {hi:.17g}\n")
    if binaries:
        stream.write("Binary\n")
        for name in binaries:
            stream.write(f" {_lp_safe(name)}\n")
    stream.write("End\n")
