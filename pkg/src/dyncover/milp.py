"""Self-contained LP/MILP engine.

The LP solver is a bounded-variable primal simplex (dense tableau-free,
explicit basis inverse) with Dantzig pricing and a Bland's-rule fallback
once degeneracy persists.  The MILP solver is a deterministic best-bound
branch-and-bound with a cut-callback contract: every integer candidate is
offered to the callback before acceptance, and the callback may add rows
(lazy cuts), add variables, request multi-way branching, or reject the
candidate outright.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .model import EQ, GE, LE

INF = math.inf

_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2


# --- models ------------------------------------------------------------------


@dataclass
class LpModel:
    """A maximization LP/MILP: bounded variables plus sparse rows."""

    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    integer: list[bool] = field(default_factory=list)
    rows: list[tuple[tuple[tuple[int, float], ...], str, float]] = field(
        default_factory=list
    )

    @property
    def n_vars(self) -> int:
        return len(self.lower)

    def add_variable(
        self, lower: float, upper: float, objective: float = 0.0, integer: bool = False
    ) -> int:
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ValueError("variable bounds must be finite")
        if lower > upper:
            raise ValueError("lower bound exceeds upper bound")
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.objective.append(float(objective))
        self.integer.append(bool(integer))
        return len(self.lower) - 1

    def add_row(self, terms, sense: str, rhs: float) -> int:
        self.rows.append(_normalize_row(terms, sense, rhs, self.n_vars))
        return len(self.rows) - 1

    def copy(self) -> "LpModel":
        return LpModel(
            list(self.lower),
            list(self.upper),
            list(self.objective),
            list(self.integer),
            list(self.rows),
        )


def _normalize_row(terms, sense, rhs, n_vars):
    if sense not in (LE, EQ, GE):
        raise ValueError(f"unknown row sense {sense!r}")
    if not math.isfinite(rhs):
        raise ValueError("row rhs must be finite")
    merged: dict[int, float] = {}
    for idx, coef in terms:
        idx = int(idx)
        if not 0 <= idx < n_vars:
            raise ValueError(f"row references unknown variable {idx}")
        if not math.isfinite(coef):
            raise ValueError("row coefficient must be finite")
        merged[idx] = merged.get(idx, 0.0) + float(coef)
    ordered = tuple(sorted(merged.items()))
    return ordered, sense, float(rhs)


@dataclass(frozen=True)
class LpSolution:
    status: str  # optimal | infeasible | iteration-limit
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    infeasible_rows: tuple[int, ...] = ()


@dataclass
class MilpOptions:
    time_limit_seconds: float | None = None
    node_limit: int | None = None
    integrality_tolerance: float = 1e-6
    cut_violation_tolerance: float = 1e-6
    node_selection: str = "best-bound"
    branching: str = "most-fractional"
    # Where fractional candidate events fire: never, root node only, or at
    # every node (each in a repeat-until-no-cut loop capped at cut_rounds).
    fractional_events: str = "root"  # none | root | all
    cut_rounds: int = 50

    def __post_init__(self):
        if self.integrality_tolerance <= 0 or self.cut_violation_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.node_selection != "best-bound":
            raise ValueError("only best-bound node selection is supported")
        if self.fractional_events not in ("none", "root", "all"):
            raise ValueError("fractional_events must be none|root|all")


@dataclass
class MilpResult:
    status: str  # optimal | feasible | infeasible | time-limit
    values: np.ndarray | None
    objective: float | None
    bound: float
    gap: float
    nodes: int
    lazy_cuts: int
    user_cuts: int
    wall_seconds: float


@dataclass
class SolveResult:
    """Driver-level outcome, rich enough for the results CSV."""

    method: str
    features: str
    status: str
    objective: float | None
    bound: float
    gap: float
    nodes: int
    lazy_cuts: int = 0
    user_cuts: int = 0
    restricted_subproblems: int = 0
    diversified_subproblems: int = 0
    branches: int = 0
    wall_seconds: float = 0.0
    solution: object | None = None


# --- simplex -----------------------------------------------------------------


class _Simplex:
    """Bounded-variable primal simplex on rows A x + s = b."""

    OPT_TOL = 1e-9
    PIV_TOL = 1e-10
    FEAS_TOL = 1e-9

    def __init__(self, A, b, lower, upper, senses):
        m, ns = A.shape
        self.m = m
        slack_l = np.empty(m)
        slack_u = np.empty(m)
        for r, sense in enumerate(senses):
            if sense == LE:
                slack_l[r], slack_u[r] = 0.0, INF
            elif sense == GE:
                slack_l[r], slack_u[r] = -INF, 0.0
            else:
                slack_l[r], slack_u[r] = 0.0, 0.0
        self.A = np.hstack([A, np.eye(m)]) if m else A.reshape(0, ns)
        self.b = np.asarray(b, dtype=float)
        self.l = np.concatenate([lower, slack_l])
        self.u = np.concatenate([upper, slack_u])
        self.n_struct = ns
        self.n = ns + m
        self.vstat = np.full(self.n, _AT_LOWER, dtype=np.int8)
        self.basis = np.arange(ns, ns + m)
        self.vstat[self.basis] = _BASIC
        self.Binv = np.eye(m)
        self.xB = np.zeros(m)
        self.art_cols: list[int] = []
        self.art_rows: list[int] = []

    # -- setup -----------------------------------------------------------

    def _nonbasic_values(self) -> np.ndarray:
        vals = np.where(self.vstat == _AT_UPPER, self.u, self.l)
        vals[self.vstat == _BASIC] = 0.0
        return vals

    def _recompute_xb(self):
        vals = self._nonbasic_values()
        self.xB = self.Binv @ (self.b - self.A @ vals)

    def prepare(self) -> str:
        """Install slack basis; add artificials for rows starting out of
        bounds and drive them to zero (phase 1)."""
        resid = self.b - self.A @ self._nonbasic_values()
        for r in range(self.m):
            lo, hi = self.l[self.n_struct + r], self.u[self.n_struct + r]
            v = resid[r]
            clamped = v
            if lo > -INF:
                clamped = max(clamped, lo)
            if hi < INF:
                clamped = min(clamped, hi)
            if abs(v - clamped) > self.FEAS_TOL:
                sign = 1.0 if v > clamped else -1.0
                col = np.zeros((self.m, 1))
                col[r, 0] = sign
                self.A = np.hstack([self.A, col])
                self.l = np.append(self.l, 0.0)
                self.u = np.append(self.u, abs(v - clamped))
                self.vstat = np.append(self.vstat, _BASIC)
                j = self.n
                self.n += 1
                self.art_cols.append(j)
                self.art_rows.append(r)
                # slack leaves the basis, parked at the violated bound
                self.vstat[self.basis[r]] = (
                    _AT_UPPER if v > clamped else _AT_LOWER
                )
                self.basis[r] = j
        # artificial columns carry +-1 entries, so the slack-identity basis
        # inverse is stale whenever any were installed
        if not self._refactor():
            return "iteration-limit"
        if not self.art_cols:
            return "optimal"
        c1 = np.zeros(self.n)
        c1[self.art_cols] = -1.0
        status = self._iterate(c1)
        if status != "optimal":
            return status
        xfull = self.extract_x_full()
        if -float(c1 @ xfull) > 1e-7:
            return "infeasible"
        # freeze artificials at zero for phase 2
        self.u[self.art_cols] = 0.0
        return "optimal"

    def infeasibility_certificate(self) -> tuple[int, ...]:
        xfull = self.extract_x_full()
        return tuple(
            r for r, j in zip(self.art_rows, self.art_cols) if xfull[j] > 1e-7
        )

    def optimize(self, c_struct) -> str:
        c = np.zeros(self.n)
        c[: self.n_struct] = c_struct
        status = self._iterate(c)
        if status == "optimal":
            self._refactor()  # clean values and duals before extraction
        return status

    # -- core loop --------------------------------------------------------

    def _refactor(self) -> bool:
        if self.m == 0:
            self._recompute_xb()
            return True
        try:
            self.Binv = np.linalg.inv(self.A[:, self.basis])
        except np.linalg.LinAlgError:
            return False
        self._recompute_xb()
        return True

    def _iterate(self, c) -> str:
        m, n = self.m, self.n
        max_iter = 400 + 60 * (m + n)
        degenerate = 0
        bland_after = 10 * (m + n)
        for it in range(max_iter):
            if it and it % 100 == 0 and not self._refactor():
                return "iteration-limit"
            y = c[self.basis] @ self.Binv if m else np.zeros(0)
            d = c - y @ self.A if m else c.copy()
            eligible = ((self.vstat == _AT_LOWER) & (d > self.OPT_TOL)) | (
                (self.vstat == _AT_UPPER) & (d < -self.OPT_TOL)
            )
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                return "optimal"
            if degenerate > bland_after:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            from_lower = self.vstat[j] == _AT_LOWER
            s = 1.0 if from_lower else -1.0
            w = self.Binv @ self.A[:, j] if m else np.zeros(0)
            delta = -s * w  # basic change per unit step
            step = self.u[j] - self.l[j]
            leave = -1
            if m:
                room = np.full(m, INF)
                inc = delta > self.PIV_TOL
                dec = delta < -self.PIV_TOL
                bl = self.l[self.basis]
                bu = self.u[self.basis]
                up_room = bu[inc] - self.xB[inc]
                dn_room = self.xB[dec] - bl[dec]
                room[inc] = np.where(np.isfinite(up_room), up_room, INF) / delta[inc]
                room[dec] = np.where(np.isfinite(dn_room), dn_room, INF) / -delta[dec]
                room = np.maximum(room, 0.0)
                rmin = float(room.min()) if room.size else INF
                if rmin < step:
                    ties = np.flatnonzero(room <= rmin + 1e-12)
                    leave = int(ties[np.argmin(self.basis[ties])])
                    step = room[leave]
            if not np.isfinite(step):
                return "iteration-limit"  # cannot happen for bounded models
            if step <= 1e-10:
                degenerate += 1
            if leave < 0:
                self.vstat[j] = _AT_UPPER if from_lower else _AT_LOWER
                self.xB += delta * step
                continue
            piv = w[leave]
            if abs(piv) < self.PIV_TOL:
                if not self._refactor():
                    return "iteration-limit"
                continue
            lv = self.basis[leave]
            self.vstat[lv] = _AT_UPPER if delta[leave] > 0 else _AT_LOWER
            self.xB += delta * step
            self.xB[leave] = self.l[j] + step if from_lower else self.u[j] - step
            self.Binv[leave] /= piv
            other = w.copy()
            other[leave] = 0.0
            self.Binv -= np.outer(other, self.Binv[leave])
            self.basis[leave] = j
            self.vstat[j] = _BASIC
        return "iteration-limit"

    # -- extraction -------------------------------------------------------

    def extract_x_full(self) -> np.ndarray:
        x = self._nonbasic_values()
        x[self.basis] = self.xB
        return x

    def duals(self, c_struct) -> np.ndarray:
        c = np.zeros(self.n)
        c[: self.n_struct] = c_struct
        return c[self.basis] @ self.Binv if self.m else np.zeros(0)


def _dense_rows(rows, n_vars):
    m = len(rows)
    A = np.zeros((m, n_vars))
    b = np.zeros(m)
    senses = []
    for r, (terms, sense, rhs) in enumerate(rows):
        for idx, coef in terms:
            A[r, idx] = coef
        b[r] = rhs
        senses.append(sense)
    return A, b, senses


def solve_lp(model: LpModel) -> LpSolution:
    """Solve the LP relaxation of `model` (integrality ignored)."""
    return _solve_lp_arrays(
        model.rows,
        np.asarray(model.lower, dtype=float),
        np.asarray(model.upper, dtype=float),
        np.asarray(model.objective, dtype=float),
    )


def _solve_lp_arrays(rows, lower, upper, objective) -> LpSolution:
    if (lower > upper + 1e-12).any():
        return LpSolution(status="infeasible")
    A, b, senses = _dense_rows(rows, lower.size)
    spx = _Simplex(A, b, np.minimum(lower, upper), upper, senses)
    status = spx.prepare()
    if status == "infeasible":
        return LpSolution(
            status="infeasible", infeasible_rows=spx.infeasibility_certificate()
        )
    if status != "optimal":
        return LpSolution(status="iteration-limit")
    status = spx.optimize(objective)
    if status != "optimal":
        return LpSolution(status="iteration-limit")
    xfull = spx.extract_x_full()
    x = xfull[: lower.size]
    worst = max(float((lower - x).max(initial=0.0)), float((x - upper).max(initial=0.0)))
    if worst > 1e-6:
        return LpSolution(status="iteration-limit")  # refuse a wrong answer
    x = np.clip(x, lower, upper)
    return LpSolution(
        status="optimal",
        x=x,
        duals=spx.duals(objective),
        objective=float(objective @ x),
    )


# --- branch and bound ---------------------------------------------------------


@dataclass
class CandidateEvent:
    """A solver candidate offered to the cut callback."""

    kind: str  # integer-candidate | fractional-root | fractional-node
    values: np.ndarray
    objective: float
    sink: "CutSink"


class CutSink:
    """Callback-side handle for mutating the active solve."""

    def __init__(self, engine: "_Engine"):
        self._engine = engine
        self.rows_added = 0
        self.rejected = False
        self.branch_bundles: list[list] | None = None

    def add_rows(self, rows) -> None:
        for terms, sense, rhs in rows:
            self._engine.add_row(terms, sense, rhs)
            self.rows_added += 1

    def add_variables(self, specs) -> list[int]:
        return [self._engine.add_variable(*spec) for spec in specs]

    def reject(self) -> None:
        self.rejected = True

    def set_incumbent_bound(self, value: float, values=None) -> None:
        self._engine.offer_incumbent(float(value), values)

    def branch(self, bundles) -> None:
        """Replace the current node by one child per bundle of extra rows."""
        self.branch_bundles = [list(bundle) for bundle in bundles]


def add_rows_during_solve(sink: CutSink, rows) -> None:
    """Add globally valid rows from inside a callback."""
    sink.add_rows(rows)


@dataclass
class _Node:
    seq: int
    bound_est: float
    col_lower: dict[int, float]
    col_upper: dict[int, float]
    local_rows: tuple[int, ...]

    def sort_key(self):
        return (-self.bound_est, self.seq)


class _Engine:
    def __init__(self, model: LpModel, callback, opts: MilpOptions, warmstart=None):
        self.lower = list(model.lower)
        self.upper = list(model.upper)
        self.objective = list(model.objective)
        self.integer = list(model.integer)
        self.rows = list(model.rows)
        self.local_store: list = []
        self.callback = callback
        self.opts = opts
        self.incumbent_obj = -INF
        self.incumbent_values: np.ndarray | None = None
        self.lazy_cuts = 0
        self.user_cuts = 0
        self.nodes = 0
        self._event_kind: str | None = None
        if warmstart is not None:
            values, obj = warmstart
            self.offer_incumbent(
                float(obj), None if values is None else np.asarray(values, dtype=float)
            )

    # -- mutation hooks (used by CutSink) ---------------------------------

    def add_row(self, terms, sense, rhs) -> int:
        self.rows.append(_normalize_row(terms, sense, rhs, len(self.lower)))
        if self._event_kind == "integer-candidate":
            self.lazy_cuts += 1
        elif self._event_kind is not None:
            self.user_cuts += 1
        return len(self.rows) - 1

    def add_variable(self, lower, upper, objective=0.0, integer=False) -> int:
        if not (math.isfinite(lower) and math.isfinite(upper)):
            raise ValueError("variable bounds must be finite")
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.objective.append(float(objective))
        self.integer.append(bool(integer))
        return len(self.lower) - 1

    def add_local_row(self, terms, sense, rhs) -> int:
        self.local_store.append(_normalize_row(terms, sense, rhs, len(self.lower)))
        return len(self.local_store) - 1

    def offer_incumbent(self, value: float, values=None) -> None:
        if value > self.incumbent_obj:
            self.incumbent_obj = value
            self.incumbent_values = (
                None if values is None else np.array(values, dtype=float)
            )

    # -- solving -----------------------------------------------------------

    def _node_lp(self, node: _Node) -> LpSolution:
        n = len(self.lower)
        lower = np.array(self.lower)
        upper = np.array(self.upper)
        for idx, v in node.col_lower.items():
            lower[idx] = max(lower[idx], v)
        for idx, v in node.col_upper.items():
            upper[idx] = min(upper[idx], v)
        rows = self.rows + [self.local_store[i] for i in node.local_rows]
        obj = np.array(self.objective)
        if n > obj.size:  # pragma: no cover - defensive
            raise RuntimeError("variable arrays out of sync")
        return _solve_lp_arrays(rows, lower, upper, obj)

    def _trivial_bound(self) -> float:
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        c = np.array(self.objective)
        return float(np.maximum(c * lo, c * hi).sum())

    def _fractional(self, x) -> list[int]:
        tol = self.opts.integrality_tolerance
        out = []
        for idx, is_int in enumerate(self.integer):
            if is_int and abs(x[idx] - round(x[idx])) > tol:
                out.append(idx)
        return out

    def solve(self) -> MilpResult:
        start = time.perf_counter()
        opts = self.opts
        heap: list[tuple[tuple, _Node]] = []
        seq = 0
        root = _Node(0, self._trivial_bound(), {}, {}, ())
        heapq.heappush(heap, (root.sort_key(), root))
        hit_limit = False

        def out_of_budget() -> bool:
            if (
                opts.time_limit_seconds is not None
                and time.perf_counter() - start > opts.time_limit_seconds
            ):
                return True
            if opts.node_limit is not None and self.nodes >= opts.node_limit:
                return True
            return False

        prune_tol = 1e-9
        while heap:
            if out_of_budget():
                hit_limit = True
                break
            _, node = heapq.heappop(heap)
            if node.bound_est <= self.incumbent_obj + prune_tol * (
                1.0 + abs(self.incumbent_obj)
            ):
                continue
            self.nodes += 1
            children = self._process_node(node)
            for child in children:
                seq += 1
                child.seq = seq
                heapq.heappush(heap, (child.sort_key(), child))

        open_bounds = [node.bound_est for _, node in heap]
        if hit_limit:
            bound = max([self.incumbent_obj] + open_bounds)
            status = "time-limit"
        elif self.incumbent_obj > -INF:
            bound = self.incumbent_obj
            status = "optimal"
        else:
            bound = -INF
            status = "infeasible"
        obj = None if self.incumbent_obj == -INF else self.incumbent_obj
        if obj is None:
            gap = INF
        else:
            gap = max(0.0, (bound - obj) / max(1e-10, abs(bound)))
        return MilpResult(
            status=status,
            values=self.incumbent_values,
            objective=obj,
            bound=bound,
            gap=gap,
            nodes=self.nodes,
            lazy_cuts=self.lazy_cuts,
            user_cuts=self.user_cuts,
            wall_seconds=time.perf_counter() - start,
        )

    def _fire(self, kind, values, objective) -> CutSink:
        sink = CutSink(self)
        self._event_kind = kind
        try:
            self.callback(CandidateEvent(kind, values, objective, sink))
        finally:
            self._event_kind = None
        return sink

    def _process_node(self, node: _Node) -> list[_Node]:
        opts = self.opts
        frac_rounds = 0
        int_rounds = 0
        prune_tol = 1e-9
        while True:
            lp = self._node_lp(node)
            if lp.status == "infeasible":
                return []
            if lp.status != "optimal":
                raise RuntimeError("LP did not converge; aborting rather than guessing")
            node.bound_est = lp.objective
            if lp.objective <= self.incumbent_obj + prune_tol * (
                1.0 + abs(self.incumbent_obj)
            ):
                return []
            frac = self._fractional(lp.x)
            if frac:
                fire = (
                    self.callback is not None
                    and frac_rounds < opts.cut_rounds
                    and (
                        opts.fractional_events == "all"
                        or (opts.fractional_events == "root" and node.seq == 0)
                    )
                )
                if fire:
                    kind = "fractional-root" if node.seq == 0 else "fractional-node"
                    sink = self._fire(kind, lp.x.copy(), lp.objective)
                    if sink.branch_bundles is not None:
                        return self._make_children_from_bundles(node, sink, lp)
                    if sink.rows_added:
                        frac_rounds += 1
                        continue
                return self._branch(node, lp, frac)
            # integer candidate
            if self.callback is not None:
                sink = self._fire("integer-candidate", lp.x.copy(), lp.objective)
                if sink.branch_bundles is not None:
                    return self._make_children_from_bundles(node, sink, lp)
                if sink.rows_added:
                    int_rounds += 1
                    if int_rounds > 10000:
                        raise RuntimeError("callback cut loop did not terminate")
                    continue
                if sink.rejected:
                    return []
            self.offer_incumbent(lp.objective, lp.x)
            return []

    def _branch(self, node: _Node, lp: LpSolution, frac: list[int]) -> list[_Node]:
        x = lp.x
        if self.opts.branching == "most-fractional":
            scores = [min(x[i] - math.floor(x[i]), math.ceil(x[i]) - x[i]) for i in frac]
            best = max(scores)
            var = frac[min(i for i, s in enumerate(scores) if s == best)]
        else:
            var = frac[0]
        v = x[var]
        down = _Node(
            0,
            lp.objective,
            dict(node.col_lower),
            {**node.col_upper, var: math.floor(v)},
            node.local_rows,
        )
        up = _Node(
            0,
            lp.objective,
            {**node.col_lower, var: math.ceil(v)},
            dict(node.col_upper),
            node.local_rows,
        )
        return [down, up]

    def _make_children_from_bundles(self, node, sink, lp) -> list[_Node]:
        children = []
        for bundle in sink.branch_bundles:
            idxs = [self.add_local_row(*row) for row in bundle]
            children.append(
                _Node(
                    0,
                    lp.objective,
                    dict(node.col_lower),
                    dict(node.col_upper),
                    node.local_rows + tuple(idxs),
                )
            )
        return children


def solve_milp(
    model: LpModel,
    callback=None,
    opts: MilpOptions | None = None,
    warmstart: tuple | None = None,
) -> MilpResult:
    """Branch-and-bound solve with lazy-constraint callback semantics.

    The callback must only add rows valid for the intended feasible set and
    must be deterministic given the event.  `warmstart` is an optional
    (values, objective) pair installed as the initial incumbent; the caller
    is responsible for its feasibility.
    """
    engine = _Engine(model, callback, opts or MilpOptions(), warmstart)
    return engine.solve()
