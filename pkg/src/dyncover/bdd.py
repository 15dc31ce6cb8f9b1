"""Lagrangian-relaxed copy-constraint subproblems and the strengthened
cuts they induce.

The open/close variables are duplicated into a subproblem copy y that is
tied to the candidate through multipliers; for any multiplier choice the
relaxed subproblem value bounds the auxiliary objective from above, so the
resulting cut is globally valid, and minimising over multipliers tightens
it at fractional candidates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .benders import Cut, add_domain_rows, x_index
from .milp import EQ, LE, LpModel, MilpOptions, solve_lp, solve_milp
from .model import Instance, Solution, fractional_coverage


@dataclass(frozen=True)
class LspSolution:
    y: np.ndarray  # binary copy decisions, (facilities, periods)
    z: np.ndarray  # coverage values, (users, periods)
    value: float
    lam: np.ndarray
    optimal: bool = True


def _subproblem_model(inst: Instance, lam: np.ndarray) -> tuple[LpModel, int]:
    model = LpModel()
    for i in range(inst.facility_count):
        for t in range(inst.periods):
            model.add_variable(0.0, 1.0, -float(lam[i, t]), integer=True)
    n_y = inst.facility_count * inst.periods
    for j, user in enumerate(inst.users):
        for t in range(inst.periods):
            model.add_variable(0.0, 1.0, float(user.demands[t]))
    add_domain_rows(model, inst)
    for j, user in enumerate(inst.users):
        for t in range(inst.periods):
            z = n_y + j * inst.periods + t
            terms = [(z, 1.0)] + [
                (x_index(i, t, inst.periods), -1.0) for i in user.covering[t]
            ]
            model.add_row(terms, LE, 0.0)
    return model, n_y


def lsp1(
    inst: Instance,
    x_tilde,
    lam,
    opts: MilpOptions | None = None,
) -> LspSolution:
    """Exact maximiser of the multiplier-relaxed subproblem."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    lam = np.asarray(lam, dtype=float)
    model, n_y = _subproblem_model(inst, lam)
    res = solve_milp(model, None, opts or MilpOptions())
    if res.values is None:
        raise RuntimeError(f"relaxed subproblem ended {res.status} without a point")
    y = np.rint(res.values[:n_y].reshape(inst.facility_count, inst.periods))
    z = res.values[n_y:].reshape(inst.user_count, inst.periods)
    value = float(
        (inst.demand_matrix * z).sum() - (lam * (y - x_tilde)).sum()
    )
    return LspSolution(y=y, z=z, value=value, lam=lam, optimal=res.status == "optimal")


def candidate_multipliers(inst: Instance, x_tilde) -> np.ndarray:
    """Duals of the copy-matching rows, from the relaxation with y in [0,1]."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    model = LpModel()
    for i in range(inst.facility_count):
        for t in range(inst.periods):
            model.add_variable(0.0, 1.0)
    n_y = inst.facility_count * inst.periods
    for j, user in enumerate(inst.users):
        for t in range(inst.periods):
            model.add_variable(0.0, 1.0, float(user.demands[t]))
    # matching rows first so their duals are addressable by position
    for i in range(inst.facility_count):
        for t in range(inst.periods):
            model.add_row([(x_index(i, t, inst.periods), 1.0)], EQ, float(x_tilde[i, t]))
    add_domain_rows(model, inst)
    for j, user in enumerate(inst.users):
        for t in range(inst.periods):
            z = n_y + j * inst.periods + t
            terms = [(z, 1.0)] + [
                (x_index(i, t, inst.periods), -1.0) for i in user.covering[t]
            ]
            model.add_row(terms, LE, 0.0)
    lp = solve_lp(model)
    if lp.status != "optimal":
        raise RuntimeError(f"multiplier extraction LP ended {lp.status}")
    lam = lp.duals[:n_y].reshape(inst.facility_count, inst.periods)
    return lam


def strengthened_cut(inst: Instance, x_tilde, lam, lsp: LspSolution) -> Cut:
    """Cut theta <= sum(d z) - sum(lam (y - x)); valid for any multipliers."""
    lam = np.asarray(lam, dtype=float)
    constant = float((inst.demand_matrix * lsp.z).sum() - (lam * lsp.y).sum())
    coefficients = tuple(
        ((i, t), float(lam[i, t]))
        for i in range(inst.facility_count)
        for t in range(inst.periods)
        if lam[i, t] != 0.0
    )
    return Cut(None, coefficients, constant, None, source="bdd")


def lsp2(
    inst: Instance,
    x_tilde,
    iterations: int = 30,
    opts: MilpOptions | None = None,
) -> tuple[LspSolution, Cut]:
    """Projected subgradient descent on the multipliers.

    Any iterate yields a valid cut, so the best (lowest) relaxation value
    seen is returned even when the descent has not converged.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    x_tilde = np.asarray(x_tilde, dtype=float)
    target = fractional_coverage(inst, x_tilde)
    lam = np.zeros_like(x_tilde)
    best: LspSolution | None = None
    for _ in range(iterations):
        sol = lsp1(inst, x_tilde, lam, opts)
        if best is None or sol.value < best.value:
            best = sol
        grad = x_tilde - sol.y
        norm2 = float((grad * grad).sum())
        if norm2 <= 1e-18 or sol.value - target <= 1e-9:
            break
        step = (sol.value - target) / norm2
        lam = lam - step * grad
    return best, strengthened_cut(inst, x_tilde, best.lam, best)
