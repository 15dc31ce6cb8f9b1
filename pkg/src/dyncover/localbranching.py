"""Local branching embedded in branch-and-Benders-cut.

Neighbourhoods are measured with a per-period distance (the largest
per-period Hamming distance must stay within the threshold), which makes a
radius-2 restricted subproblem solvable through a small trust-cut model:
cuts generated at the center, at every single-addition and at every
single-removal of it evaluate all add/add-two/swap neighbours exactly.
Explored neighbourhoods are excluded from the main problem either with
big-M disjunction blocks (SepD) or with one branch per period (SepB).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .benders import (
    CorePoint,
    CutLoop,
    GammaVariant,
    MainLayout,
    _finish,
    add_domain_rows,
    build_main_model,
    cut_row,
    multi_cuts,
)
from .greedy import greedy_warmstart
from .milp import GE, LE, LpModel, MilpOptions, SolveResult, solve_milp
from .model import Instance, Precedence, Solution, coverage
from .preprocess import singles_set


# --- distances and moves -----------------------------------------------------


def _check_pair(x: Solution, x_tilde: Solution) -> None:
    if (x.facility_count, x.periods) != (x_tilde.facility_count, x_tilde.periods):
        raise ValueError("solutions have different shapes")


def hamming_distance(x: Solution, x_tilde: Solution) -> int:
    """Number of differing entries over all facilities and periods."""
    _check_pair(x, x_tilde)
    return int(np.abs(x.matrix - x_tilde.matrix).sum())


def per_period_distance(x: Solution, x_tilde: Solution) -> tuple[int, ...]:
    """Per-period Hamming counts; the metric value is their maximum."""
    _check_pair(x, x_tilde)
    return tuple(int(v) for v in np.abs(x.matrix - x_tilde.matrix).sum(axis=0))


@dataclass(frozen=True)
class NeighborhoodMove:
    kind: str  # add | add2 | swap
    period: int
    add: tuple[int, ...]
    remove: tuple[int, ...] = ()


def enumerate_moves(
    inst: Instance, x_tilde: Solution, kappa: int = 2
) -> list[NeighborhoodMove]:
    """Per-period modifications that can increase coverage.

    Removal-only moves never help (coverage is monotone), so at radius two
    the useful moves are: add one, add two, or swap one for one.
    """
    if kappa not in (1, 2):
        raise ValueError("move enumeration is defined for kappa in {1, 2}")
    moves: list[NeighborhoodMove] = []
    for t in range(inst.periods):
        open_i = [i for i in range(inst.facility_count) if x_tilde.x[i][t] == 1]
        closed = [i for i in range(inst.facility_count) if x_tilde.x[i][t] == 0]
        for i in closed:
            moves.append(NeighborhoodMove("add", t, (i,)))
        if kappa < 2:
            continue
        for i, k in itertools.combinations(closed, 2):
            moves.append(NeighborhoodMove("add2", t, (i, k)))
        for out in open_i:
            for i in closed:
                moves.append(NeighborhoodMove("swap", t, (i,), (out,)))
    return moves


# --- separation machinery -----------------------------------------------------


def _distance_terms(center: Solution, t: int, periods: int):
    """Terms of dist_t(x, center) minus its constant part.

    dist_t = n_open - sum_open x + sum_closed x, so rows compare the signed
    x part against (threshold - n_open).
    """
    terms = []
    n_open = 0
    for i, row in enumerate(center.x):
        idx = i * periods + t
        if row[t] == 1:
            n_open += 1
            terms.append((idx, -1.0))
        else:
            terms.append((idx, 1.0))
    return terms, n_open


def distance_le_row(center: Solution, t: int, periods: int, kappa: int):
    terms, n_open = _distance_terms(center, t, periods)
    return terms, LE, float(kappa - n_open)


def distance_ge_row(center: Solution, t: int, periods: int, threshold: int):
    terms, n_open = _distance_terms(center, t, periods)
    return terms, GE, float(threshold - n_open)


@dataclass(frozen=True)
class NoGoodRow:
    """Excludes exactly the center point (the radius-0 separation)."""

    center: Solution

    def row(self):
        periods = self.center.periods
        terms: list = []
        n_open = 0
        for t in range(periods):
            part, opened = _distance_terms(self.center, t, periods)
            terms.extend(part)
            n_open += opened
        return terms, GE, float(1 - n_open)


@dataclass(frozen=True)
class SepDBlock:
    """Big-M disjunction: at least one period at distance >= kappa + 1.

    Each period row carries exactly (kappa + 1) on its auxiliary binary and
    the budget row allows at most T - 1 of them to be switched on.
    """

    center: Solution
    kappa: int

    @property
    def big_m(self) -> int:
        return self.kappa + 1

    def period_row(self, t: int):
        """(x terms, delta coefficient, rhs) for x part + M * delta >= rhs."""
        periods = self.center.periods
        terms, n_open = _distance_terms(self.center, t, periods)
        return terms, float(self.big_m), float(self.kappa + 1 - n_open)

    @property
    def budget_rhs(self) -> int:
        return self.center.periods - 1


def sepd_block(x_tilde: Solution, kappa: int, periods: int):
    """Separation for an explored radius-kappa neighbourhood; the radius-0
    case degenerates to a plain no-good row."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if x_tilde.periods != periods:
        raise ValueError("period count mismatch")
    if kappa == 0:
        return NoGoodRow(x_tilde)
    return SepDBlock(x_tilde, kappa)


def install_separation(block, add_variable, add_row, periods: int) -> None:
    """Lower a separation block into a model or a live solve.

    `add_variable(lower, upper, objective, integer)` must return the new
    column index; `add_row((terms, sense, rhs))` installs one row.
    """
    if isinstance(block, NoGoodRow):
        add_row(block.row())
        return
    deltas = [add_variable(0.0, 1.0, 0.0, True) for _ in range(periods)]
    for t in range(periods):
        terms, big_m, rhs = block.period_row(t)
        add_row((list(terms) + [(deltas[t], big_m)], GE, rhs))
    add_row(([(d, 1.0) for d in deltas], LE, float(block.budget_rhs)))


def sepb_branch_problems(
    base_model: LpModel, x_tilde: Solution, kappa: int, periods: int
) -> list[LpModel]:
    """T disjoint problems covering everything outside the neighbourhood:
    problem t' forces period t' beyond the threshold and all earlier
    periods within it."""
    problems = []
    for t_prime in range(periods):
        rows = branch_rows(x_tilde, kappa, periods, t_prime)
        child = base_model.copy()
        for terms, sense, rhs in rows:
            child.add_row(terms, sense, rhs)
        problems.append(child)
    return problems


def branch_rows(x_tilde: Solution, kappa: int, periods: int, t_prime: int):
    rows = [distance_ge_row(x_tilde, t_prime, periods, kappa + 1)]
    for t in range(t_prime):
        rows.append(distance_le_row(x_tilde, t, periods, kappa))
    return rows


# --- restricted subproblem -----------------------------------------------------


@dataclass(frozen=True)
class LbCenter:
    solution: Solution
    threshold: int  # the main problem must keep distance >= threshold
    kind: str  # restricted | diversified


@dataclass
class LbState:
    centers: list[LbCenter] = field(default_factory=list)
    restricted: int = 0
    diversified: int = 0
    branches: int = 0
    incumbent: Solution | None = None
    incumbent_value: float = -math.inf


@dataclass
class LbConfig:
    sub: str = "subd"  # subd | subb
    sep: str = "sepd"  # sepd | sepb
    kappa: int = 2
    kappa_prime: int = 3
    subproblem_time_limit: float = 60.0
    sepb_trigger: str = "improving"  # improving | all
    max_chain: int = 32
    max_branch_leaves: int = 128

    def __post_init__(self):
        if self.sub not in ("subd", "subb"):
            raise ValueError("sub must be subd or subb")
        if self.sep not in ("sepd", "sepb"):
            raise ValueError("sep must be sepd or sepb")
        if self.sepb_trigger not in ("improving", "all"):
            raise ValueError("sepb_trigger must be improving or all")
        if self.kappa_prime <= self.kappa:
            raise ValueError("kappa_prime must exceed kappa")


def _neighborhood_layout(inst: Instance) -> MainLayout:
    n_x = inst.facility_count * inst.periods
    return MainLayout(
        inst.facility_count,
        inst.periods,
        tuple(range(n_x, n_x + inst.periods)),
        True,
    )


def _neighborhood_model(
    inst: Instance, x_tilde: Solution, kappa: int, inherited_cuts, centers
) -> tuple[LpModel, MainLayout]:
    """Multi-cut model over the radius-kappa neighbourhood of x_tilde,
    minus previously separated neighbourhoods."""
    model, layout = build_main_model(inst, multicut=True, plan=None)
    for t in range(inst.periods):
        model.add_row(*distance_le_row(x_tilde, t, inst.periods, kappa))
    for center in centers:
        block = sepd_block(center.solution, center.threshold - 1, inst.periods)
        install_separation(
            block,
            model.add_variable,
            lambda row: model.add_row(*row),
            inst.periods,
        )
    for cut in inherited_cuts:
        model.add_row(*cut_row(cut, layout))
    return model, layout


def _precedence_blocked(inst: Instance, x_tilde: Solution, i: int, t: int) -> bool:
    # adding i at t is pointless when a prerequisite is closed at the center
    for con in inst.domain.constraints:
        if isinstance(con, Precedence) and con.after == (i, t):
            bi, bt = con.before
            if x_tilde.x[bi][bt] == 0:
                return True
    return False


def build_restricted_reformulation(
    inst: Instance,
    x_tilde: Solution,
    singles,
    inherited_cuts=(),
    lb_state: LbState | None = None,
) -> LpModel:
    """Radius-2 restricted subproblem with trust cuts.

    Adds, for every period: the center's own cut, one cut per closed
    facility evaluated after opening it, and one cut per open facility
    evaluated after closing it.  Every attainable add/add2/swap neighbour
    is then priced exactly by at least one cut (one addition away from its
    generator), while removal-only neighbours are never overpriced above
    the center.
    """
    centers = () if lb_state is None else tuple(lb_state.centers)
    model, layout = _neighborhood_model(inst, x_tilde, 2, inherited_cuts, centers)
    variant = GammaVariant.B1
    base = x_tilde.matrix
    for cut in multi_cuts(inst, x_tilde, variant, singles):
        model.add_row(*cut_row(cut, layout))
    for t in range(inst.periods):
        for i in range(inst.facility_count):
            mod = np.array(base)
            if base[i, t] == 0:
                if _precedence_blocked(inst, x_tilde, i, t):
                    continue
                mod[i, t] = 1.0
            else:
                mod[i, t] = 0.0
            cut = multi_cuts(inst, mod, variant, singles)[t]
            model.add_row(*cut_row(cut, layout))
    return model


def _solve_neighborhood(
    inst: Instance,
    model: LpModel,
    layout: MainLayout,
    singles,
    core: CorePoint | None,
    time_limit: float | None,
    opts: MilpOptions | None,
    fractional: str,
) -> tuple[Solution | None, float, bool, CutLoop]:
    opts = replace(
        opts or MilpOptions(),
        time_limit_seconds=time_limit,
        fractional_events=fractional,
    )
    loop = CutLoop(
        inst,
        layout,
        pareto=core is not None,
        singles=singles,
        core=core,
        tolerance=opts.cut_violation_tolerance,
    )
    res = solve_milp(model, loop, opts)
    solved = res.status in ("optimal", "infeasible")
    return loop.best_solution, loop.best_value, solved, loop


def solve_restricted(
    inst: Instance,
    x_tilde: Solution,
    kappa: int,
    mode: str,
    time_limit: float | None = 60.0,
    *,
    singles=None,
    inherited_cuts=(),
    lb_state: LbState | None = None,
    core: CorePoint | None = None,
    opts: MilpOptions | None = None,
) -> tuple[Solution | None, float, bool]:
    """Best solution within per-period distance kappa of the center.

    Returns (solution, exact coverage, fully_solved); the solution is None
    when the neighbourhood minus prior separations is empty.
    """
    if singles is None:
        singles = singles_set(inst)
    if mode == "subd":
        if kappa != 2:
            raise ValueError("the trust-cut reformulation requires kappa == 2")
        model = build_restricted_reformulation(
            inst, x_tilde, singles, inherited_cuts, lb_state
        )
        layout = _neighborhood_layout(inst)
        # the trust cuts price coupling-domain removals optimistically in
        # rare cases; integer candidates still pass through a pinning
        # callback so the returned value is always the exact optimum
        sol, val, solved, _ = _solve_neighborhood(
            inst, model, layout, singles, None, time_limit, opts, "none"
        )
        return sol, val, solved
    if mode != "subb":
        raise ValueError("mode must be subd or subb")
    centers = () if lb_state is None else tuple(lb_state.centers)
    model, layout = _neighborhood_model(inst, x_tilde, kappa, inherited_cuts, centers)
    sol, val, solved, _ = _solve_neighborhood(
        inst, model, layout, singles, core, time_limit, opts, "root"
    )
    return sol, val, solved


def solve_diversified(
    inst: Instance,
    x_tilde: Solution,
    kappa_prime: int,
    time_limit: float | None = 60.0,
    *,
    kappa: int = 2,
    singles=None,
    inherited_cuts=(),
    lb_state: LbState | None = None,
    core: CorePoint | None = None,
    opts: MilpOptions | None = None,
) -> tuple[Solution | None, float, bool]:
    """Best solution different from the center within the enlarged radius."""
    if kappa_prime <= kappa:
        raise ValueError("kappa_prime must exceed kappa")
    if singles is None:
        singles = singles_set(inst)
    centers = () if lb_state is None else tuple(lb_state.centers)
    model, layout = _neighborhood_model(
        inst, x_tilde, kappa_prime, inherited_cuts, centers
    )
    model.add_row(*NoGoodRow(x_tilde).row())
    sol, val, solved, _ = _solve_neighborhood(
        inst, model, layout, singles, core, time_limit, opts, "root"
    )
    return sol, val, solved


# --- the driver ------------------------------------------------------------------


class _LbDriver:
    def __init__(self, inst, layout, opts, config, singles, core, state):
        self.inst = inst
        self.layout = layout
        self.opts = opts
        self.config = config
        self.singles = singles
        self.state = state
        self.cutloop = CutLoop(
            inst,
            layout,
            pareto=core is not None,
            singles=singles,
            core=core,
            tolerance=opts.cut_violation_tolerance,
        )

    def __call__(self, event) -> None:
        if event.kind != "integer-candidate":
            self.cutloop(event)
            return
        n_x = self.layout.n_x
        xmat = np.rint(event.values[:n_x]).reshape(
            self.inst.facility_count, self.inst.periods
        )
        sol = Solution.from_matrix(xmat)
        value = coverage(self.inst, sol)
        improving = value > self.cutloop.best_value
        run_episode = self.config.sep == "sepd" or (
            self.config.sepb_trigger == "all" or improving
        )
        if not run_episode:
            self.cutloop(event)
            return
        self._record(event.sink, sol, value)
        new_centers = self._episode(event.sink, sol, value)
        if new_centers:
            self._separate(event.sink, new_centers)
        event.sink.reject()

    # -- episode ----------------------------------------------------------

    def _record(self, sink, sol: Solution, value: float) -> None:
        self.cutloop.seed_incumbent(sol, value)
        if value > self.state.incumbent_value:
            self.state.incumbent, self.state.incumbent_value = sol, value
        sink.set_incumbent_bound(value)

    def _episode(self, sink, sol: Solution, value: float) -> list[LbCenter]:
        cfg = self.config
        new_centers: list[LbCenter] = []
        current, cur_val = sol, value
        for _ in range(cfg.max_chain):
            self.state.restricted += 1
            self.cutloop.generate_for(sink, current.matrix)
            better, best_val, solved = solve_restricted(
                self.inst,
                current,
                cfg.kappa,
                cfg.sub,
                cfg.subproblem_time_limit,
                singles=self.singles,
                inherited_cuts=self.cutloop.cuts,
                lb_state=self.state,
                core=self.cutloop.core,
                opts=self.opts,
            )
            if better is not None:
                self._record(sink, better, best_val)
                self.cutloop.generate_for(sink, better.matrix)
            if not solved:
                break
            if better is not None and best_val > cur_val:
                center = LbCenter(current, cfg.kappa + 1, "restricted")
                self.state.centers.append(center)
                new_centers.append(center)
                current, cur_val = better, best_val
                continue
            # no strict improvement: widen once around the same center
            self.state.diversified += 1
            other, other_val, div_solved = solve_diversified(
                self.inst,
                current,
                cfg.kappa_prime,
                cfg.subproblem_time_limit,
                kappa=cfg.kappa,
                singles=self.singles,
                inherited_cuts=self.cutloop.cuts,
                lb_state=self.state,
                core=self.cutloop.core,
                opts=self.opts,
            )
            if other is not None:
                self._record(sink, other, other_val)
                self.cutloop.generate_for(sink, other.matrix)
            threshold = cfg.kappa_prime + 1 if div_solved else cfg.kappa + 1
            center = LbCenter(current, threshold, "diversified" if div_solved else "restricted")
            self.state.centers.append(center)
            new_centers.append(center)
            break
        return new_centers

    # -- separation ----------------------------------------------------------

    def _separate(self, sink, new_centers: list[LbCenter]) -> None:
        periods = self.inst.periods
        if self.config.sep == "sepd":
            for center in new_centers:
                block = sepd_block(center.solution, center.threshold - 1, periods)
                install_separation(
                    block,
                    lambda lo, hi, obj, integer: sink.add_variables(
                        [(lo, hi, obj, integer)]
                    )[0],
                    lambda row: sink.add_rows([row]),
                    periods,
                )
            return
        bundles: list[list] = [[]]
        for center in new_centers:
            if len(bundles) * periods > self.config.max_branch_leaves:
                break  # remaining centers stay unseparated; still sound
            bundles = [
                prefix + branch_rows(center.solution, center.threshold - 1, periods, tp)
                for prefix in bundles
                for tp in range(periods)
            ]
        if bundles != [[]]:
            sink.branch(bundles)
            self.state.branches += len(bundles)


def solve_lb(
    inst: Instance,
    opts: MilpOptions | None = None,
    config: LbConfig | None = None,
) -> SolveResult:
    """Accelerated branch-and-Benders-cut with local branching episodes.

    Greedy warmstart, multi-cut root loop, then integer-only cuts; every
    triggering candidate is locally optimised (restricted, then diversified
    when stuck) and its explored neighbourhood separated away.
    """
    started = time.perf_counter()
    cfg = config or LbConfig()
    opts = replace(opts or MilpOptions(), fractional_events="root")
    singles = singles_set(inst)
    model, layout = build_main_model(inst, multicut=True, plan=None)
    state = LbState()
    warm_sol = greedy_warmstart(inst)
    core = None
    warm = None
    if warm_sol is not None:
        warm_value = coverage(inst, warm_sol)
        core = CorePoint(np.array(warm_sol.matrix), 0)
        state.incumbent, state.incumbent_value = warm_sol, warm_value
        warm = (None, warm_value)
    driver = _LbDriver(inst, layout, opts, cfg, singles, core, state)
    if warm_sol is not None:
        driver.cutloop.seed_incumbent(warm_sol, warm_value)
    res = solve_milp(model, driver, opts, warmstart=warm)
    feats = f"sub={cfg.sub},sep={cfg.sep},kappa={cfg.kappa}"
    if cfg.sep == "sepb":
        feats += f",trigger={cfg.sepb_trigger}"
    return _finish(
        "lb",
        feats,
        res,
        driver.cutloop.best_solution,
        driver.cutloop.best_value,
        started,
        restricted_subproblems=state.restricted,
        diversified_subproblems=state.diversified,
        branches=state.branches,
    )
