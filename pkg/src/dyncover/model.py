"""Problem data for dynamic maximum covering: instances, the feasible
domain on open/close decisions, solutions, and exact coverage evaluation.

A solution opens facilities per period (binary matrix ``x[i][t]``).  A user
j counts as covered in period t when at least one facility covering it is
open, and contributes its per-period demand to the objective:

    value(x) = sum_t sum_j min(1, #open covering facilities) * demand[j][t]
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

EPS = 1e-9

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


@dataclass(frozen=True)
class UserRecord:
    """One demand point: per-period demands and covering facility sets."""

    demands: tuple[float, ...]
    covering: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "demands", tuple(float(d) for d in self.demands))
        object.__setattr__(
            self, "covering", tuple(tuple(sorted(set(c))) for c in self.covering)
        )


# --- domain constraints ----------------------------------------------------
#
# Every structured constraint lowers to plain Linear rows over the x
# variables; lowering is deterministic and order-stable so that solvers,
# feasibility checks and serialization all agree on row order.


@dataclass(frozen=True)
class Cardinality:
    """sum_i x[i][period] <= limit."""

    period: int
    limit: float


@dataclass(frozen=True)
class Knapsack:
    """sum of coef * x[i][t] over terms <= rhs."""

    terms: tuple[tuple[int, int, float], ...]
    rhs: float

    def __post_init__(self):
        object.__setattr__(
            self, "terms", tuple((int(i), int(t), float(c)) for i, t, c in self.terms)
        )


@dataclass(frozen=True)
class Precedence:
    """x[after] <= x[before]: `after` may only open where `before` is open."""

    before: tuple[int, int]
    after: tuple[int, int]


@dataclass(frozen=True)
class Persistence:
    """x[i][t] <= x[i][t+1]: an open facility stays open."""


@dataclass(frozen=True)
class Budget:
    """sum_i costs[i] * (x[i][t] - x[i][t-1]) <= rhs, with x[i][-1] = 0."""

    period: int
    costs: tuple[float, ...]
    rhs: float

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))


@dataclass(frozen=True)
class Linear:
    """Arbitrary affine row: sum coef * x[i][t] (sense) rhs."""

    terms: tuple[tuple[int, int, float], ...]
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")
        object.__setattr__(
            self, "terms", tuple((int(i), int(t), float(c)) for i, t, c in self.terms)
        )


DomainConstraint = Cardinality | Knapsack | Precedence | Persistence | Budget | Linear


@dataclass(frozen=True)
class DomainSpec:
    """The polytope of admissible open/close decisions (x variables only)."""

    constraints: tuple[DomainConstraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def lowered(self, facility_count: int, periods: int) -> tuple[Linear, ...]:
        rows: list[Linear] = []
        for con in self.constraints:
            if isinstance(con, Cardinality):
                terms = tuple((i, con.period, 1.0) for i in range(facility_count))
                rows.append(Linear(terms, LE, float(con.limit)))
            elif isinstance(con, Knapsack):
                rows.append(Linear(con.terms, LE, float(con.rhs)))
            elif isinstance(con, Precedence):
                bi, bt = con.before
                ai, at = con.after
                rows.append(Linear(((ai, at, 1.0), (bi, bt, -1.0)), LE, 0.0))
            elif isinstance(con, Persistence):
                for i in range(facility_count):
                    for t in range(periods - 1):
                        rows.append(Linear(((i, t, 1.0), (i, t + 1, -1.0)), LE, 0.0))
            elif isinstance(con, Budget):
                t = con.period
                terms = []
                for i, cost in enumerate(con.costs):
                    terms.append((i, t, float(cost)))
                    if t > 0:
                        terms.append((i, t - 1, -float(cost)))
                rows.append(Linear(tuple(terms), LE, float(con.rhs)))
            elif isinstance(con, Linear):
                rows.append(con)
            else:  # pragma: no cover
                raise TypeError(f"unknown constraint {con!r}")
        return tuple(rows)


@dataclass(frozen=True)
class Instance:
    """Immutable problem data; derived arrays are cached lazily."""

    periods: int
    facility_count: int
    users: tuple[UserRecord, ...]
    domain: DomainSpec = DomainSpec()
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if self.periods < 1:
            raise ValueError("periods must be positive")
        if self.facility_count < 1:
            raise ValueError("facility_count must be positive")
        for j, user in enumerate(self.users):
            if len(user.demands) != self.periods:
                raise ValueError(f"users[{j}].demands: expected {self.periods} periods")
            if len(user.covering) != self.periods:
                raise ValueError(f"users[{j}].coverage: expected {self.periods} periods")
            for t, d in enumerate(user.demands):
                if not d > 0.0:
                    raise ValueError(f"users[{j}].demands[{t}]: must be > 0")
            for t, cov in enumerate(user.covering):
                for i in cov:
                    if not 0 <= i < self.facility_count:
                        raise ValueError(
                            f"users[{j}].coverage[{t}]: facility index {i} out of range"
                        )

    @property
    def user_count(self) -> int:
        return len(self.users)

    @cached_property
    def demand_matrix(self) -> np.ndarray:
        """(users, periods) float64 demand matrix."""
        mat = np.zeros((len(self.users), self.periods))
        for j, user in enumerate(self.users):
            mat[j, :] = user.demands
        mat.setflags(write=False)
        return mat

    @cached_property
    def cover_tensor(self) -> np.ndarray:
        """(users, periods, facilities) 0/1 tensor of the coverage relation."""
        a = np.zeros((len(self.users), self.periods, self.facility_count))
        for j, user in enumerate(self.users):
            for t, cov in enumerate(user.covering):
                for i in cov:
                    a[j, t, i] = 1.0
        a.setflags(write=False)
        return a

    @cached_property
    def covered_by(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        """covered_by[i][t] = user indices reached by facility i in period t."""
        lists: list[list[list[int]]] = [
            [[] for _ in range(self.periods)] for _ in range(self.facility_count)
        ]
        for j, user in enumerate(self.users):
            for t, cov in enumerate(user.covering):
                for i in cov:
                    lists[i][t].append(j)
        return tuple(tuple(tuple(js) for js in per_t) for per_t in lists)

    @cached_property
    def lowered_rows(self) -> tuple[Linear, ...]:
        return self.domain.lowered(self.facility_count, self.periods)

    @cached_property
    def total_demand(self) -> float:
        return float(self.demand_matrix.sum())


@dataclass(frozen=True)
class Solution:
    """Binary open/close matrix, x[i][t], indexed (facility, period)."""

    x: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        norm = []
        for row in self.x:
            vals = tuple(int(v) for v in row)
            if any(v not in (0, 1) for v in vals):
                raise ValueError("solution entries must be 0/1")
            norm.append(vals)
        object.__setattr__(self, "x", tuple(norm))

    @staticmethod
    def from_matrix(mat) -> "Solution":
        arr = np.asarray(mat)
        return Solution(tuple(tuple(int(round(v)) for v in row) for row in arr))

    @cached_property
    def matrix(self) -> np.ndarray:
        arr = np.array(self.x, dtype=float)
        arr.setflags(write=False)
        return arr

    @property
    def facility_count(self) -> int:
        return len(self.x)

    @property
    def periods(self) -> int:
        return len(self.x[0]) if self.x else 0


@dataclass(frozen=True)
class CoverageCount:
    """How many open covering facilities each user sees, per period."""

    counts: tuple[tuple[int, ...], ...]

    @cached_property
    def matrix(self) -> np.ndarray:
        arr = np.array(self.counts, dtype=float)
        arr.setflags(write=False)
        return arr


def _check_dims(inst: Instance, x: Solution) -> None:
    if x.facility_count != inst.facility_count or (
        inst.facility_count and x.periods != inst.periods
    ):
        raise ValueError(
            f"solution is {x.facility_count}x{x.periods}, instance needs "
            f"{inst.facility_count}x{inst.periods}"
        )


def coverage_counts(inst: Instance, x: Solution) -> CoverageCount:
    """Per-(user, period) count of open covering facilities."""
    _check_dims(inst, x)
    cnt = np.einsum("jti,it->jt", inst.cover_tensor, x.matrix)
    return CoverageCount(tuple(tuple(int(round(v)) for v in row) for row in cnt))


def coverage(inst: Instance, x: Solution) -> float:
    """Total demand covered by x; exact for integer solutions."""
    _check_dims(inst, x)
    cnt = np.einsum("jti,it->jt", inst.cover_tensor, x.matrix)
    return float((np.minimum(cnt, 1.0) * inst.demand_matrix).sum())


def fractional_coverage_counts(inst: Instance, xfrac) -> np.ndarray:
    """Real-valued coverage counts for a candidate matrix in [0, 1]."""
    arr = np.asarray(xfrac, dtype=float)
    if arr.shape != (inst.facility_count, inst.periods):
        raise ValueError(
            f"candidate is {arr.shape}, instance needs "
            f"({inst.facility_count}, {inst.periods})"
        )
    if (arr < -EPS).any() or (arr > 1.0 + EPS).any():
        raise ValueError("candidate entries must lie in [0, 1]")
    return np.einsum("jti,it->jt", inst.cover_tensor, arr)


def fractional_coverage(inst: Instance, xfrac) -> float:
    """Coverage formula evaluated at a fractional candidate."""
    cnt = fractional_coverage_counts(inst, xfrac)
    return float((np.minimum(cnt, 1.0) * inst.demand_matrix).sum())


def check_domain(inst: Instance, x: Solution) -> bool:
    """True iff every lowered domain row holds at x.

    Comparison is exact when a row has integral data, else within 1e-9.
    """
    _check_dims(inst, x)
    for row in inst.lowered_rows:
        lhs = sum(c * x.x[i][t] for i, t, c in row.terms)
        integral = float(row.rhs).is_integer() and all(
            c.is_integer() for _, _, c in row.terms
        )
        tol = 0.0 if integral else EPS
        if row.sense == LE and not lhs <= row.rhs + tol:
            return False
        if row.sense == GE and not lhs >= row.rhs - tol:
            return False
        if row.sense == EQ and not abs(lhs - row.rhs) <= tol:
            return False
    return True


def overlap_instance() -> Instance:
    """Single-period demo: three facilities with pairwise-overlapping
    coverage regions, six aggregated users, at most two facilities open."""
    users = (
        UserRecord((10.0,), ((0,),)),
        UserRecord((5.0,), ((1,),)),
        UserRecord((7.0,), ((2,),)),
        UserRecord((8.0,), ((0, 1),)),
        UserRecord((2.0,), ((0, 2),)),
        UserRecord((3.0,), ((1, 2),)),
    )
    return Instance(
        periods=1,
        facility_count=3,
        users=users,
        domain=DomainSpec((Cardinality(period=0, limit=2),)),
        name="overlap3",
    )
