"""Benders cut machinery and the branch-and-Benders-cut drivers.

The per-period subproblem prices each (user, period) pair by inspection of
its coverage count, which yields optimality cuts of the form

    sum_i (sum_{j in G_t} d[j,t] a[i,j,t]) x[i,t] + sum_{j not in G_t} d[j,t] >= theta_t

for a user set G_t chosen by one of four rules: B0 (strictly uncovered),
B1 (B0 plus singleton users at count <= 1), B2 (count <= 1), or the
core-point refinement of B1 which resolves count == 1 ties by looking at a
relative-interior point of the domain.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .greedy import greedy_warmstart
from .milp import (
    GE,
    LpModel,
    MilpOptions,
    MilpResult,
    SolveResult,
    solve_milp,
)
from .model import EPS, Instance, Solution, coverage
from .preprocess import singles_set

log = logging.getLogger("dyncover")


class GammaVariant(Enum):
    B0 = "b0"
    B1 = "b1"
    B2 = "b2"
    PARETO_B1 = "pareto-b1"


@dataclass(frozen=True)
class Cut:
    """Affine bound on an auxiliary objective variable.

    theta_period None means the aggregate variable (or the sum of the
    per-period ones); otherwise the cut constrains that period's variable.
    """

    theta_period: int | None
    coefficients: tuple[tuple[tuple[int, int], float], ...]
    constant: float
    variant: GammaVariant | None
    source: str = ""

    def coefficient(self, i: int, t: int) -> float:
        return dict(self.coefficients).get((i, t), 0.0)

    def key(self):
        return (
            self.theta_period,
            round(self.constant, 9),
            tuple(((i, t), round(c, 9)) for (i, t), c in self.coefficients),
        )


@dataclass(frozen=True)
class DualInspection:
    """Subproblem dual prices per (user, period): pi + sigma = demand."""

    pi: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class CorePoint:
    """Averaged interior-like point used to refine tie cases."""

    x: np.ndarray
    updates: int = 0


@dataclass(frozen=True)
class PartialBendersPlan:
    """Retain singleton users in the main problem by folding their demand
    into the x objective; they are excluded from all cut computation."""

    retained: frozenset[int]
    fold: np.ndarray  # (facilities, periods)


# --- coverage profiles -------------------------------------------------------


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, Solution):
        return x.matrix
    return np.asarray(x, dtype=float)


def _counts(inst: Instance, x) -> np.ndarray:
    return np.einsum("jti,it->jt", inst.cover_tensor, _as_matrix(x))


def _singles_mask(inst: Instance, singles) -> np.ndarray:
    mask = np.zeros(inst.user_count, dtype=bool)
    for j in singles:
        mask[j] = True
    return mask


def _users_mask(inst: Instance, users) -> np.ndarray:
    if users is None:
        return np.ones(inst.user_count, dtype=bool)
    mask = np.zeros(inst.user_count, dtype=bool)
    for j in users:
        mask[j] = True
    return mask


def _gamma_mask(counts_t, variant, singles_mask, core_counts_t) -> np.ndarray:
    lt1 = counts_t < 1.0 - EPS
    eq1 = np.abs(counts_t - 1.0) <= EPS
    if variant is GammaVariant.B0:
        return lt1
    if variant is GammaVariant.B2:
        return lt1 | eq1
    if variant is GammaVariant.B1:
        return (singles_mask & (lt1 | eq1)) | (~singles_mask & lt1)
    if variant is GammaVariant.PARETO_B1:
        if core_counts_t is None:
            raise ValueError("pareto-b1 requires a core point")
        core_lt1 = core_counts_t < 1.0 - EPS
        # the count == 1 & core count == 1 double tie falls back to the B1
        # membership rule, which keeps the one-augmentation exactness
        return (
            (singles_mask & (lt1 | eq1))
            | (~singles_mask & lt1)
            | (~singles_mask & eq1 & core_lt1)
        )
    raise ValueError(f"unknown variant {variant!r}")


def gamma_set(
    inst: Instance,
    x,
    t: int,
    variant: GammaVariant,
    singles,
    core: CorePoint | None = None,
    users=None,
) -> frozenset[int]:
    """User set whose demands become x coefficients in the period-t cut."""
    counts = _counts(inst, x)
    core_counts = None if core is None else _counts(inst, core.x)
    mask = _gamma_mask(
        counts[:, t],
        variant,
        _singles_mask(inst, singles),
        None if core_counts is None else core_counts[:, t],
    )
    mask &= _users_mask(inst, users)
    return frozenset(int(j) for j in np.flatnonzero(mask))


def _period_cut_from_counts(
    inst, counts, t, variant, singles_mask, core_counts, users_mask, source
) -> Cut:
    gamma = (
        _gamma_mask(
            counts[:, t],
            variant,
            singles_mask,
            None if core_counts is None else core_counts[:, t],
        )
        & users_mask
    )
    d_t = inst.demand_matrix[:, t]
    coef = (d_t * gamma) @ inst.cover_tensor[:, t, :]
    constant = float(d_t[users_mask & ~gamma].sum())
    coefficients = tuple(
        ((int(i), t), float(c)) for i, c in enumerate(coef) if c != 0.0
    )
    return Cut(t, coefficients, constant, variant, source)


def multi_cuts(
    inst: Instance,
    x,
    variant: GammaVariant,
    singles,
    core: CorePoint | None = None,
    users=None,
) -> list[Cut]:
    """One cut per period, each bounding that period's theta variable."""
    counts = _counts(inst, x)
    core_counts = None if core is None else _counts(inst, core.x)
    smask = _singles_mask(inst, singles)
    umask = _users_mask(inst, users)
    src = _source_label(x)
    return [
        _period_cut_from_counts(
            inst, counts, t, variant, smask, core_counts, umask, src
        )
        for t in range(inst.periods)
    ]


def single_cut(
    inst: Instance,
    x,
    variant: GammaVariant,
    singles,
    core: CorePoint | None = None,
    users=None,
) -> Cut:
    """Aggregate cut: the per-period cuts summed onto a single theta."""
    parts = multi_cuts(inst, x, variant, singles, core, users)
    coefficients: list = []
    constant = 0.0
    for cut in parts:
        coefficients.extend(cut.coefficients)
        constant += cut.constant
    return Cut(None, tuple(coefficients), constant, variant, _source_label(x))


def _source_label(x) -> str:
    mat = _as_matrix(x)
    flat = mat.reshape(-1)
    if np.allclose(flat, np.rint(flat)):
        return "x=" + "".join(str(int(round(v))) for v in flat)
    return "x~"


def evaluate_cut(cut: Cut, x) -> float:
    """Left-hand side of the cut at a candidate (matrix or Solution)."""
    mat = _as_matrix(x)
    total = cut.constant
    for (i, t), c in cut.coefficients:
        total += c * mat[i, t]
    return float(total)


def pareto_dual(
    inst: Instance, x, core: CorePoint, singles=None
) -> DualInspection:
    """Pointwise dual prices selected against the core point.

    For each (user, period): a strictly uncovered pair prices at full demand
    on the coverage row, an overcovered pair prices on the upper bound, and
    an exactly-covered pair follows the core point's coverage; the double
    tie keeps the B1 membership rule.
    """
    if singles is None:
        singles = singles_set(inst)
    counts = _counts(inst, x)
    core_counts = _counts(inst, core.x)
    smask = _singles_mask(inst, singles)
    pi = np.zeros_like(counts)
    for t in range(inst.periods):
        member = _gamma_mask(
            counts[:, t], GammaVariant.PARETO_B1, smask, core_counts[:, t]
        )
        pi[:, t] = np.where(member, inst.demand_matrix[:, t], 0.0)
    sigma = inst.demand_matrix - pi
    pi.setflags(write=False)
    sigma.setflags(write=False)
    return DualInspection(pi=pi, sigma=sigma)


def update_core_point(core: CorePoint, candidate: Solution) -> CorePoint:
    """Averaging update: the core drifts halfway toward each candidate."""
    return _update_core_array(core, candidate.matrix)


def _update_core_array(core: CorePoint, mat: np.ndarray) -> CorePoint:
    return CorePoint((core.x + mat) / 2.0, core.updates + 1)


def partial_plan(inst: Instance, singles) -> PartialBendersPlan:
    """Fold singleton users' demand onto their unique covering variable."""
    smask = _singles_mask(inst, singles)
    fold = np.einsum("jti,jt->it", inst.cover_tensor, inst.demand_matrix * smask[:, None])
    fold.setflags(write=False)
    return PartialBendersPlan(retained=frozenset(singles), fold=fold)


# --- main-problem construction -------------------------------------------------


@dataclass(frozen=True)
class MainLayout:
    facility_count: int
    periods: int
    theta: tuple[int, ...]
    multicut: bool

    @property
    def n_x(self) -> int:
        return self.facility_count * self.periods

    def x_index(self, i: int, t: int) -> int:
        return i * self.periods + t


def x_index(i: int, t: int, periods: int) -> int:
    """Standard variable layout: x[i][t] lives at i * periods + t."""
    return i * periods + t


def add_domain_rows(model: LpModel, inst: Instance) -> None:
    for row in inst.lowered_rows:
        model.add_row(
            [(x_index(i, t, inst.periods), c) for i, t, c in row.terms],
            row.sense,
            row.rhs,
        )


def build_main_model(
    inst: Instance, *, multicut: bool, plan: PartialBendersPlan | None = None
) -> tuple[LpModel, MainLayout]:
    """Cut-ready main problem: binary x, theta variable(s), domain rows.

    Theta upper bounds come from total demand so the first relaxation is
    bounded before any cut exists.
    """
    model = LpModel()
    fold = None if plan is None else plan.fold
    for i in range(inst.facility_count):
        for t in range(inst.periods):
            obj = 0.0 if fold is None else float(fold[i, t])
            model.add_variable(0.0, 1.0, obj, integer=True)
    sub_mask = _users_mask(inst, None)
    if plan is not None:
        sub_mask &= ~_users_mask(inst, plan.retained)
    per_period = (inst.demand_matrix * sub_mask[:, None]).sum(axis=0)
    if multicut:
        theta = tuple(
            model.add_variable(0.0, max(0.0, float(per_period[t])), 1.0)
            for t in range(inst.periods)
        )
    else:
        theta = (model.add_variable(0.0, max(0.0, float(per_period.sum())), 1.0),)
    add_domain_rows(model, inst)
    return model, MainLayout(inst.facility_count, inst.periods, theta, multicut)


def cut_row(cut: Cut, layout: MainLayout):
    """Lower a cut to an engine row: coefficients on x minus theta >= -constant."""
    terms = [(layout.x_index(i, t), c) for (i, t), c in cut.coefficients]
    if cut.theta_period is None:
        terms.extend((idx, -1.0) for idx in layout.theta)
    else:
        if not layout.multicut:
            raise ValueError("per-period cut needs a multi-cut layout")
        terms.append((layout.theta[cut.theta_period], -1.0))
    return terms, GE, -cut.constant


# --- cut-generating callback ---------------------------------------------------


class CutLoop:
    """Callback shared by the Benders drivers.

    At integer candidates it prices the subproblem exactly, adds the violated
    optimality cuts and rejects; at fractional candidates (root or every
    node, per engine options) it adds violated cuts only.  Tracks the best
    integer solution seen by true coverage.
    """

    def __init__(
        self,
        inst: Instance,
        layout: MainLayout,
        *,
        variant: GammaVariant = GammaVariant.B1,
        pareto: bool = False,
        singles=frozenset(),
        core: CorePoint | None = None,
        plan: PartialBendersPlan | None = None,
        tolerance: float = 1e-6,
        bdd: bool = False,
        bdd_rounds: int = 3,
    ):
        self.inst = inst
        self.layout = layout
        self.variant = variant
        self.pareto = pareto
        self.singles = frozenset(singles)
        self.core = core
        self.plan = plan
        self.tol = tolerance
        self.bdd = bdd
        self.bdd_rounds = bdd_rounds
        self.smask = _singles_mask(inst, self.singles)
        self.umask = _users_mask(inst, None)
        if plan is not None:
            self.umask &= ~_users_mask(inst, plan.retained)
        self.pool_keys: set = set()
        self.cuts: list[Cut] = []
        self.best_solution: Solution | None = None
        self.best_value = -math.inf

    # -- helpers -----------------------------------------------------------

    def seed_incumbent(self, sol: Solution, value: float) -> None:
        if value > self.best_value:
            self.best_solution, self.best_value = sol, value

    def _active_variant(self) -> GammaVariant:
        if self.pareto and self.core is not None and self.core.updates >= 1:
            return GammaVariant.PARETO_B1
        if self.pareto:
            return GammaVariant.B1
        return self.variant

    def _sub_values(self, counts) -> np.ndarray:
        capped = np.minimum(counts, 1.0) * self.inst.demand_matrix
        return (capped * self.umask[:, None]).sum(axis=0)

    def _emit(self, sink, cuts) -> int:
        rows = []
        for cut in cuts:
            key = cut.key()
            if key in self.pool_keys:
                continue
            self.pool_keys.add(key)
            self.cuts.append(cut)
            rows.append(cut_row(cut, self.layout))
        if rows:
            sink.add_rows(rows)
        return len(rows)

    def _cuts_at(self, xmat, periods=None) -> list[Cut]:
        variant = self._active_variant()
        core = self.core if variant is GammaVariant.PARETO_B1 else None
        cuts = multi_cuts(
            self.inst,
            xmat,
            variant,
            self.singles,
            core,
            None if self.plan is None else np.flatnonzero(self.umask),
        )
        if not self.layout.multicut:
            combined: list = []
            constant = 0.0
            for cut in cuts:
                combined.extend(cut.coefficients)
                constant += cut.constant
            cuts = [Cut(None, tuple(combined), constant, variant, _source_label(xmat))]
        if periods is not None and self.layout.multicut:
            cuts = [cuts[t] for t in periods]
        return cuts

    def generate_for(self, sink, xmat) -> int:
        """Add the (deduplicated) cuts generated at xmat, violated or not."""
        self._touch_core(xmat)
        return self._emit(sink, self._cuts_at(xmat))

    def _touch_core(self, xmat) -> None:
        if self.pareto and self.core is not None:
            self.core = _update_core_array(self.core, _as_matrix(xmat))

    # -- event handling ------------------------------------------------------

    def __call__(self, event) -> None:
        n_x = self.layout.n_x
        xmat = event.values[:n_x].reshape(
            self.layout.facility_count, self.layout.periods
        )
        theta_vals = event.values[list(self.layout.theta)]
        if event.kind == "integer-candidate":
            self._on_integer(event.sink, np.rint(xmat), theta_vals)
        else:
            self._on_fractional(event.sink, xmat, theta_vals)

    def _on_integer(self, sink, xmat, theta_vals) -> None:
        sol = Solution.from_matrix(xmat)
        value = coverage(self.inst, sol)
        if value > self.best_value:
            self.best_solution, self.best_value = sol, value
        sink.set_incumbent_bound(value)
        counts = _counts(self.inst, xmat)
        sub = self._sub_values(counts)
        self._touch_core(xmat)
        if self.layout.multicut:
            violated = [
                t for t in range(self.inst.periods) if theta_vals[t] > sub[t] + self.tol
            ]
            if not violated:
                return
            cuts = self._cuts_at(xmat, violated)
        else:
            if theta_vals[0] <= sub.sum() + self.tol:
                return
            cuts = self._cuts_at(xmat)
        if self._emit(sink, cuts) == 0:
            # theta overshoots although the cuts are pooled: can only be a
            # borderline tolerance state; re-adding clamps the node LP
            sink.add_rows([cut_row(c, self.layout) for c in cuts])
        sink.reject()

    def _on_fractional(self, sink, xmat, theta_vals) -> None:
        counts = _counts(self.inst, xmat)
        sub = self._sub_values(counts)
        self._touch_core(xmat)
        if self.layout.multicut:
            violated = [
                t for t in range(self.inst.periods) if theta_vals[t] > sub[t] + self.tol
            ]
            added = self._emit(sink, self._cuts_at(xmat, violated)) if violated else 0
        else:
            added = 0
            if theta_vals[0] > sub.sum() + self.tol:
                added = self._emit(sink, self._cuts_at(xmat))
        if added == 0 and self.bdd and self.bdd_rounds > 0:
            self.bdd_rounds -= 1
            self._bdd_cut(sink, xmat, theta_vals)

    def _bdd_cut(self, sink, xmat, theta_vals) -> None:
        from . import bdd

        _, cut = bdd.lsp2(self.inst, xmat, iterations=10)
        if float(theta_vals.sum()) > evaluate_cut(cut, xmat) + self.tol:
            self._emit(sink, [cut])


# --- drivers --------------------------------------------------------------------


def _finish(
    method: str,
    features: str,
    res: MilpResult,
    best_solution: Solution | None,
    best_value: float,
    started: float,
    **counters,
) -> SolveResult:
    has_best = best_solution is not None and best_value > -math.inf
    objective = best_value if has_best else None
    bound = res.bound
    if objective is None:
        gap = math.inf
    else:
        gap = max(0.0, (bound - objective) / max(1e-10, abs(bound)))
    status = res.status
    if status == "optimal" and not has_best:
        status = "infeasible"
    return SolveResult(
        method=method,
        features=features,
        status=status,
        objective=objective,
        bound=bound,
        gap=gap,
        nodes=res.nodes,
        lazy_cuts=res.lazy_cuts,
        user_cuts=res.user_cuts,
        wall_seconds=time.perf_counter() - started,
        solution=best_solution if has_best else None,
        **counters,
    )


def _warmstart_values(inst, layout, plan, sol: Solution):
    """Full-length warmstart vector: x entries plus honest theta values."""
    counts = _counts(inst, sol.matrix)
    umask = _users_mask(inst, None)
    if plan is not None:
        umask &= ~_users_mask(inst, plan.retained)
    capped = np.minimum(counts, 1.0) * inst.demand_matrix
    sub = (capped * umask[:, None]).sum(axis=0)
    values = np.zeros(layout.n_x + len(layout.theta))
    values[: layout.n_x] = sol.matrix.reshape(-1)
    if layout.multicut:
        values[layout.n_x :] = sub
    else:
        values[layout.n_x] = sub.sum()
    return values


def solve_ubbc(inst: Instance, opts: MilpOptions | None = None) -> SolveResult:
    """Plain single-cut branch-and-Benders-cut: B1 cuts at every integer
    and fractional candidate, no accelerations."""
    started = time.perf_counter()
    opts = replace(opts or MilpOptions(), fractional_events="all")
    model, layout = build_main_model(inst, multicut=False, plan=None)
    loop = CutLoop(
        inst,
        layout,
        variant=GammaVariant.B1,
        singles=singles_set(inst),
        tolerance=opts.cut_violation_tolerance,
    )
    res = solve_milp(model, loop, opts)
    return _finish("ubbc", "single-cut,b1,frac-all", res, loop.best_solution,
                   loop.best_value, started)


def solve_abbc(
    inst: Instance,
    opts: MilpOptions | None = None,
    *,
    multicut: bool = True,
    pareto: bool = True,
    partial: bool = True,
    warmstart: bool = True,
    root_only_fractional: bool = True,
    bdd: bool = False,
    cut_variant: GammaVariant = GammaVariant.B1,
) -> SolveResult:
    """Accelerated branch-and-Benders-cut with selectable features."""
    started = time.perf_counter()
    opts = replace(
        opts or MilpOptions(),
        fractional_events="root" if root_only_fractional else "all",
    )
    singles = singles_set(inst)
    plan = partial_plan(inst, singles) if partial else None
    model, layout = build_main_model(inst, multicut=multicut, plan=plan)
    greedy_sol = greedy_warmstart(inst)
    core = None
    if pareto and greedy_sol is not None:
        core = CorePoint(np.array(greedy_sol.matrix), 0)
    loop = CutLoop(
        inst,
        layout,
        variant=cut_variant,
        pareto=pareto,
        singles=singles,
        core=core,
        plan=plan,
        tolerance=opts.cut_violation_tolerance,
        bdd=bdd,
    )
    warm = None
    if warmstart and greedy_sol is not None:
        value = coverage(inst, greedy_sol)
        loop.seed_incumbent(greedy_sol, value)
        warm = (_warmstart_values(inst, layout, plan, greedy_sol), value)
    res = solve_milp(model, loop, opts, warmstart=warm)
    feats = [
        name
        for name, on in (
            ("multicut", multicut),
            ("pareto", pareto),
            ("partial", partial),
            ("warmstart", warmstart),
            ("root-frac", root_only_fractional),
            ("bdd", bdd),
        )
        if on
    ]
    return _finish("abbc", ",".join(feats), res, loop.best_solution,
                   loop.best_value, started)


def build_monolithic_model(inst: Instance) -> tuple[LpModel, MainLayout]:
    """The compact covering formulation: binary x plus one z per (user,
    period), solved directly by the engine (branch-and-cut baseline)."""
    model = LpModel()
    for i in range(inst.facility_count):
        for t in range(inst.periods):
            model.add_variable(0.0, 1.0, 0.0, integer=True)
    n_x = inst.facility_count * inst.periods
    for j, user in enumerate(inst.users):
        for t in range(inst.periods):
            model.add_variable(0.0, 1.0, float(user.demands[t]))
    add_domain_rows(model, inst)
    for j, user in enumerate(inst.users):
        for t in range(inst.periods):
            z = n_x + j * inst.periods + t
            terms = [(z, 1.0)] + [
                (x_index(i, t, inst.periods), -1.0) for i in user.covering[t]
            ]
            model.add_row(terms, "<=", 0.0)
    return model, MainLayout(inst.facility_count, inst.periods, (), False)


def solve_bc(inst: Instance, opts: MilpOptions | None = None) -> SolveResult:
    """Branch-and-cut on the monolithic model, no decomposition."""
    started = time.perf_counter()
    model, layout = build_monolithic_model(inst)
    res = solve_milp(model, None, opts or MilpOptions())
    best_sol, best_val = None, -math.inf
    if res.values is not None:
        best_sol = Solution.from_matrix(
            res.values[: layout.n_x].reshape(inst.facility_count, inst.periods)
        )
        best_val = coverage(inst, best_sol)
    return _finish("bc", "monolithic", res, best_sol, best_val, started)


def solve_greedy(inst: Instance) -> SolveResult:
    """Greedy heuristic wrapped as a result row (no bound claim)."""
    started = time.perf_counter()
    sol = greedy_warmstart(inst)
    if sol is None:
        return SolveResult(
            method="greedy", features="", status="infeasible", objective=None,
            bound=-math.inf, gap=math.inf, nodes=0,
            wall_seconds=time.perf_counter() - started,
        )
    value = coverage(inst, sol)
    return SolveResult(
        method="greedy", features="", status="feasible", objective=value,
        bound=value, gap=0.0, nodes=0,
        wall_seconds=time.perf_counter() - started, solution=sol,
    )
