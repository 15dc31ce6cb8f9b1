import numpy as np
import pytest

import dyncover as dc
from dyncover.milp import (
    CandidateEvent,
    LpModel,
    MilpOptions,
    add_rows_during_solve,
    solve_lp,
    solve_milp,
)
from dyncover.benders import build_monolithic_model


def random_lp(rng, n_vars=None, n_rows=None):
    n = n_vars or int(rng.integers(1, 7))
    m = n_rows or int(rng.integers(0, 7))
    model = LpModel()
    for _ in range(n):
        lo = float(rng.integers(0, 2))
        hi = lo + float(rng.integers(1, 5))
        model.add_variable(lo, hi, float(rng.integers(-5, 6)))
    for _ in range(m):
        terms = [
            (j, float(c))
            for j, c in enumerate(rng.integers(-3, 4, size=n))
            if c != 0
        ]
        sense = ["<=", ">=", "="][int(rng.integers(0, 3))]
        model.add_row(terms, sense, float(rng.integers(-4, 9)))
    return model


def random_binary_milp(rng, n=None):
    n = n or int(rng.integers(2, 13))
    model = LpModel()
    for _ in range(n):
        model.add_variable(0, 1, float(rng.integers(-5, 9)), integer=True)
    for _ in range(int(rng.integers(1, 5))):
        terms = [
            (j, float(c))
            for j, c in enumerate(rng.integers(-2, 4, size=n))
            if c != 0
        ]
        sense = ["<=", ">="][int(rng.integers(0, 2))]
        model.add_row(terms, sense, float(rng.integers(0, 2 * n)))
    return model


def brute_force_binary(model):
    n = model.n_vars
    best = None
    for code in range(1 << n):
        x = [(code >> k) & 1 for k in range(n)]
        ok = True
        for terms, sense, rhs in model.rows:
            lhs = sum(c * x[j] for j, c in terms)
            if sense == "<=" and lhs > rhs:
                ok = False
            elif sense == ">=" and lhs < rhs:
                ok = False
            elif sense == "=" and lhs != rhs:
                ok = False
            if not ok:
                break
        if ok:
            val = sum(c * v for c, v in zip(model.objective, x))
            if best is None or val > best:
                best = val
    return best


class TestSolveLp:
    def test_single_bounded_row(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0)
        m.add_row([(x, 1.0)], "<=", 0.5)
        lp = solve_lp(m)
        assert lp.status == "optimal"
        assert lp.x[0] == pytest.approx(0.5)
        assert lp.objective == pytest.approx(0.5)

    def test_two_variables(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0)
        y = m.add_variable(0, 1, 1.0)
        m.add_row([(x, 1.0), (y, 1.0)], "<=", 1.0)
        assert solve_lp(m).objective == pytest.approx(1.0)

    def test_monolithic_relaxation_value(self, overlap):
        model, _ = build_monolithic_model(overlap)
        lp = solve_lp(model)
        assert lp.status == "optimal"
        assert lp.objective == pytest.approx(30.0, abs=1e-9)

    def test_infeasible_reports_certificate(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0)
        m.add_row([(x, 1.0)], ">=", 2.0)
        lp = solve_lp(m)
        assert lp.status == "infeasible"
        assert lp.infeasible_rows == (0,)

    def test_duals_price_out_columns(self):
        rng = np.random.default_rng(0)
        priced = 0
        for _ in range(4000):
            if priced == 1000:
                break
            model = random_lp(rng)
            lp = solve_lp(model)
            if lp.status != "optimal":
                continue
            A = np.zeros((len(model.rows), model.n_vars))
            for r, (terms, _, _) in enumerate(model.rows):
                for j, c in terms:
                    A[r, j] = c
            reduced = np.array(model.objective) - lp.duals @ A
            lo = np.array(model.lower)
            hi = np.array(model.upper)
            at_lower = np.abs(lp.x - lo) <= 1e-7
            at_upper = np.abs(lp.x - hi) <= 1e-7
            interior = ~(at_lower | at_upper)
            assert (reduced[at_lower & ~at_upper] <= 1e-6).all()
            assert (reduced[at_upper & ~at_lower] >= -1e-6).all()
            assert (np.abs(reduced[interior]) <= 1e-6).all()
            priced += 1
        assert priced == 1000

    def test_objective_matches_scipy(self):
        linprog = pytest.importorskip("scipy.optimize").linprog
        rng = np.random.default_rng(1)
        for _ in range(150):
            model = random_lp(rng)
            lp = solve_lp(model)
            A_ub, b_ub, A_eq, b_eq = [], [], [], []
            for terms, sense, rhs in model.rows:
                row = np.zeros(model.n_vars)
                for j, c in terms:
                    row[j] = c
                if sense == "<=":
                    A_ub.append(row), b_ub.append(rhs)
                elif sense == ">=":
                    A_ub.append(-row), b_ub.append(-rhs)
                else:
                    A_eq.append(row), b_eq.append(rhs)
            ref = linprog(
                -np.array(model.objective),
                A_ub=np.array(A_ub) if A_ub else None,
                b_ub=np.array(b_ub) if b_ub else None,
                A_eq=np.array(A_eq) if A_eq else None,
                b_eq=np.array(b_eq) if b_eq else None,
                bounds=list(zip(model.lower, model.upper)),
                method="highs",
            )
            if ref.status == 2:
                assert lp.status == "infeasible"
            else:
                assert lp.status == "optimal"
                assert lp.objective == pytest.approx(-ref.fun, abs=1e-6)

    def test_strong_duality_gap(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            model = random_lp(rng)
            lp = solve_lp(model)
            if lp.status != "optimal":
                continue
            A = np.zeros((len(model.rows), model.n_vars))
            b = np.zeros(len(model.rows))
            for r, (terms, _, rhs) in enumerate(model.rows):
                b[r] = rhs
                for j, c in terms:
                    A[r, j] = c
            reduced = np.array(model.objective) - lp.duals @ A
            dual_obj = lp.duals @ b + reduced @ lp.x
            assert abs(dual_obj - lp.objective) <= 1e-6 * (1 + abs(lp.objective))


class TestSolveMilp:
    def test_tiny_knapsack(self):
        m = LpModel()
        a = m.add_variable(0, 1, 2.0, integer=True)
        b = m.add_variable(0, 1, 3.0, integer=True)
        m.add_row([(a, 1.0), (b, 1.0)], "<=", 1.0)
        res = solve_milp(m)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(3.0)
        assert res.values[b] == pytest.approx(1.0)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(120):
            model = random_binary_milp(rng)
            res = solve_milp(model)
            best = brute_force_binary(model)
            if best is None:
                assert res.status == "infeasible"
            else:
                assert res.status == "optimal"
                assert res.objective == pytest.approx(best, abs=1e-7)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        model = random_binary_milp(rng, n=10)
        first = solve_milp(model)
        second = solve_milp(model)
        assert first.nodes == second.nodes
        assert first.objective == second.objective
        assert np.array_equal(first.values, second.values)

    def test_time_limit_returns_valid_bound(self, overlap):
        model, _ = build_monolithic_model(overlap)
        res = solve_milp(model, None, MilpOptions(time_limit_seconds=0.0))
        assert res.status == "time-limit"
        assert res.bound >= 30.0 - 1e-9

    def test_infeasible_domain(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0, integer=True)
        m.add_row([(x, 1.0)], ">=", 2.0)
        res = solve_milp(m)
        assert res.status == "infeasible"

    def test_warmstart_kept_when_unbeatable(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0, integer=True)
        m.add_row([(x, 1.0)], "<=", 0.0)
        res = solve_milp(m, warmstart=(np.array([0.0]), 0.5))
        # external incumbent outranks the model's own optimum of 0
        assert res.objective == pytest.approx(0.5)


class TestCallbacks:
    def test_satisfied_row_keeps_candidate(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0, integer=True)

        events = []

        def callback(ev):
            events.append(ev.kind)
            if ev.kind == "integer-candidate":
                add_rows_during_solve(ev.sink, [([(0, 1.0)], "<=", 1.0)])

        res = solve_milp(m, callback)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(1.0)
        assert "integer-candidate" in events

    def test_violated_row_forces_resolve(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0, integer=True)
        seen = []

        def callback(ev):
            seen.append(ev.values[0])
            if ev.values[0] > 0.5:
                ev.sink.add_rows([([(0, 1.0)], "<=", 0.0)])
                ev.sink.reject()

        res = solve_milp(m, callback)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(0.0)
        assert seen[0] == pytest.approx(1.0)
        assert seen[-1] == pytest.approx(0.0)

    def test_reject_everything_without_rows_ends_infeasible(self):
        m = LpModel()
        m.add_variable(0, 1, 1.0, integer=True)

        def callback(ev):
            ev.sink.reject()

        res = solve_milp(m, callback)
        assert res.status == "infeasible"

    def test_lazy_semantics_all_candidates_offered(self):
        # every accepted incumbent must have been shown to the callback
        m = LpModel()
        for _ in range(3):
            m.add_variable(0, 1, 1.0, integer=True)
        m.add_row([(0, 1.0), (1, 1.0), (2, 1.0)], "<=", 2.0)
        offered = []

        def callback(ev):
            if ev.kind == "integer-candidate":
                offered.append(tuple(np.rint(ev.values[:3])))

        res = solve_milp(m, callback)
        assert res.status == "optimal"
        assert tuple(np.rint(res.values)) in offered

    def test_add_variables_mid_solve(self):
        m = LpModel()
        x = m.add_variable(0, 1, 1.0, integer=True)
        added = []

        def callback(ev):
            if ev.kind == "integer-candidate" and not added:
                (new,) = ev.sink.add_variables([(0.0, 1.0, 0.0, True)])
                added.append(new)
                # force the new binary to disagree with x
                ev.sink.add_rows([([(x, 1.0), (new, 1.0)], "=", 1.0)])
                ev.sink.reject()

        res = solve_milp(m, callback)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(1.0)
        assert res.values.size == 2

    def test_branch_bundles_partition_search(self):
        # one child per bundle, each carrying its own local row
        m = LpModel()
        x = m.add_variable(0, 1, 1.0, integer=True)
        y = m.add_variable(0, 1, 1.0, integer=True)
        m.add_row([(x, 1.0), (y, 1.0)], "<=", 1.0)
        state = {"branched": False}

        def callback(ev):
            if ev.kind != "integer-candidate":
                return
            if not state["branched"]:
                state["branched"] = True
                ev.sink.branch(
                    [
                        [([(x, 1.0)], "=", 1.0)],
                        [([(x, 1.0)], "=", 0.0)],
                    ]
                )

        res = solve_milp(m, callback)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(1.0)

    def test_malformed_row_rejected(self):
        m = LpModel()
        m.add_variable(0, 1, 1.0, integer=True)

        def callback(ev):
            ev.sink.add_rows([([(5, 1.0)], "<=", 1.0)])

        with pytest.raises(ValueError):
            solve_milp(m, callback)


class TestModelValidation:
    def test_infinite_bounds_rejected(self):
        m = LpModel()
        with pytest.raises(ValueError):
            m.add_variable(0, float("inf"))

    def test_unknown_sense_rejected(self):
        m = LpModel()
        m.add_variable(0, 1)
        with pytest.raises(ValueError):
            m.add_row([(0, 1.0)], "<", 1.0)
