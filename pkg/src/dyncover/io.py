"""Instance serialization, the results CSV, and a seeded geometric
instance generator.

The random stream is xoshiro256** seeded through splitmix64, written out
from the published state-update constants so the same seed reproduces the
same instances in any language."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass

from .milp import SolveResult
from .model import (
    Budget,
    Cardinality,
    DomainSpec,
    Instance,
    Knapsack,
    Linear,
    Persistence,
    Precedence,
    Solution,
    UserRecord,
)

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


class Xoshiro256StarStar:
    """Reproducible 64-bit generator (rotl(s1*5, 7) * 9 output map)."""

    def __init__(self, seed: int):
        state = seed & _MASK
        words = []
        for _ in range(4):
            z, state = _splitmix64(state)
            words.append(z)
        self._s = words

    @staticmethod
    def _rotl(x: int, k: int) -> int:
        return ((x << k) | (x >> (64 - k))) & _MASK

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        out = (self._rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = self._rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high]; bias is negligible at our sizes."""
        return low + int(self.uniform() * (high - low + 1)) % (high - low + 1)


@dataclass(frozen=True)
class GeneratorParams:
    seed: int
    periods: int
    facility_count: int
    user_count: int
    coverage_radius: float
    demand_low: float = 1.0
    demand_high: float = 100.0
    demand_growth: float = 1.0
    domain_template: str = "cardinality"  # cardinality | knapsack | ev-style
    cardinality_limit: int | None = None
    budget_limit: float | None = None
    integer_demands: bool = False

    def __post_init__(self):
        if self.periods < 1 or self.facility_count < 1 or self.user_count < 0:
            raise ValueError("counts must be positive")
        if self.coverage_radius <= 0:
            raise ValueError("coverage radius must be positive")
        if self.demand_low <= 0 or self.demand_high < self.demand_low:
            raise ValueError("demand range must be positive")
        if self.domain_template not in ("cardinality", "knapsack", "ev-style"):
            raise ValueError("unknown domain template")


def generate_instance(params: GeneratorParams) -> Instance:
    """Facilities and users uniform in the unit square; a user is covered by
    every facility within the radius (constant over periods); demands grow
    geometrically per period."""
    rng = Xoshiro256StarStar(params.seed)
    facilities = [(rng.uniform(), rng.uniform()) for _ in range(params.facility_count)]
    users = [(rng.uniform(), rng.uniform()) for _ in range(params.user_count)]
    if params.integer_demands:
        bases = [
            float(rng.randint(int(params.demand_low), int(params.demand_high)))
            for _ in range(params.user_count)
        ]
    else:
        bases = [
            params.demand_low + rng.uniform() * (params.demand_high - params.demand_low)
            for _ in range(params.user_count)
        ]
    r2 = params.coverage_radius**2
    records = []
    for (ux, uy), base in zip(users, bases):
        cov = tuple(
            i
            for i, (fx, fy) in enumerate(facilities)
            if (fx - ux) ** 2 + (fy - uy) ** 2 <= r2
        )
        demands = tuple(base * params.demand_growth**t for t in range(params.periods))
        records.append(UserRecord(demands, tuple(cov for _ in range(params.periods))))
    constraints: list = []
    if params.domain_template == "cardinality":
        limit = params.cardinality_limit or max(1, params.facility_count // 3)
        constraints = [Cardinality(t, limit) for t in range(params.periods)]
    elif params.domain_template == "knapsack":
        costs = [1.0 + 2.0 * rng.uniform() for _ in range(params.facility_count)]
        rhs = params.budget_limit or 0.4 * sum(costs)
        constraints = [
            Knapsack(tuple((i, t, c) for i, c in enumerate(costs)), rhs)
            for t in range(params.periods)
        ]
    else:  # ev-style: install-and-keep with per-period spend and prerequisites
        costs = [1.0 + 2.0 * rng.uniform() for _ in range(params.facility_count)]
        budget = params.budget_limit or max(min(costs), 0.35 * sum(costs))
        constraints = [Persistence()]
        constraints += [
            Budget(t, tuple(costs), budget) for t in range(params.periods)
        ]
        for i in range(0, params.facility_count - 1, 2):
            constraints += [
                Precedence((i, t), (i + 1, t)) for t in range(params.periods)
            ]
    name = (
        f"{params.domain_template}-s{params.seed}-i{params.facility_count}"
        f"-j{params.user_count}-t{params.periods}"
    )
    return Instance(
        periods=params.periods,
        facility_count=params.facility_count,
        users=tuple(records),
        domain=DomainSpec(tuple(constraints)),
        name=name,
    )


# --- instance JSON ------------------------------------------------------------


def _constraint_to_json(con) -> dict:
    if isinstance(con, Cardinality):
        return {"type": "cardinality", "period": con.period, "limit": con.limit}
    if isinstance(con, Knapsack):
        return {"type": "knapsack", "terms": [list(t) for t in con.terms], "rhs": con.rhs}
    if isinstance(con, Precedence):
        return {"type": "precedence", "before": list(con.before), "after": list(con.after)}
    if isinstance(con, Persistence):
        return {"type": "persistence"}
    if isinstance(con, Budget):
        return {
            "type": "budget",
            "period": con.period,
            "costs": list(con.costs),
            "rhs": con.rhs,
        }
    if isinstance(con, Linear):
        return {
            "type": "linear",
            "terms": [list(t) for t in con.terms],
            "sense": con.sense,
            "rhs": con.rhs,
        }
    raise TypeError(f"unknown constraint {con!r}")


def _constraint_from_json(obj: dict, where: str):
    kind = obj.get("type")
    try:
        if kind == "cardinality":
            return Cardinality(int(obj["period"]), float(obj["limit"]))
        if kind == "knapsack":
            return Knapsack(tuple(tuple(t) for t in obj["terms"]), float(obj["rhs"]))
        if kind == "precedence":
            return Precedence(tuple(obj["before"]), tuple(obj["after"]))
        if kind == "persistence":
            return Persistence()
        if kind == "budget":
            return Budget(int(obj["period"]), tuple(obj["costs"]), float(obj["rhs"]))
        if kind == "linear":
            return Linear(
                tuple(tuple(t) for t in obj["terms"]), obj["sense"], float(obj["rhs"])
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{where}: malformed {kind} constraint: {exc}") from exc
    raise ValueError(f"{where}: unknown constraint type {kind!r}")


def write_instance(inst: Instance) -> str:
    """Canonical JSON text; floats use exact shortest round-trip form."""
    obj = {
        "name": inst.name,
        "periods": inst.periods,
        "facility_count": inst.facility_count,
        "users": [
            {"demands": list(u.demands), "coverage": [list(c) for c in u.covering]}
            for u in inst.users
        ],
        "domain": {
            "constraints": [_constraint_to_json(c) for c in inst.domain.constraints]
        },
    }
    return json.dumps(obj, indent=2) + "\n"


def parse_instance(text: str, name: str | None = None) -> Instance:
    """Parse and validate instance JSON; violations carry element paths."""
    obj = json.loads(text)
    for key in ("periods", "facility_count", "users", "domain"):
        if key not in obj:
            raise ValueError(f"missing required key {key!r}")
    users = []
    for j, u in enumerate(obj["users"]):
        where = f"users[{j}]"
        if "demands" not in u or "coverage" not in u:
            raise ValueError(f"{where}: needs demands and coverage")
        users.append(UserRecord(tuple(u["demands"]), tuple(tuple(c) for c in u["coverage"])))
    constraints = tuple(
        _constraint_from_json(c, f"domain.constraints[{k}]")
        for k, c in enumerate(obj["domain"].get("constraints", []))
    )
    return Instance(
        periods=int(obj["periods"]),
        facility_count=int(obj["facility_count"]),
        users=tuple(users),
        domain=DomainSpec(constraints),
        name=name or obj.get("name", "instance"),
    )


def parse_solution(text: str) -> Solution:
    obj = json.loads(text)
    if isinstance(obj, dict):
        obj = obj["x"]
    return Solution(tuple(tuple(int(v) for v in row) for row in obj))


def write_solution(sol: Solution) -> str:
    return json.dumps({"x": [list(row) for row in sol.x]}, indent=2) + "\n"


# --- results CSV ----------------------------------------------------------------

RESULT_COLUMNS = (
    "instance",
    "method",
    "features",
    "status",
    "objective",
    "bound",
    "gap_percent",
    "nodes",
    "lazy_cuts",
    "user_cuts",
    "restricted_subproblems",
    "diversified_subproblems",
    "branches",
    "wall_seconds",
)


def result_csv_header() -> str:
    return ",".join(RESULT_COLUMNS)


def _num(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and not math.isfinite(value):
        return ""
    return repr(float(value))


def write_result(result: SolveResult, instance_name: str) -> str:
    """One CSV row; objective/bound are exact, the gap is a display value."""
    gap = "" if not math.isfinite(result.gap) else f"{result.gap * 100.0:.2f}"
    row = (
        instance_name,
        result.method,
        result.features,
        result.status,
        _num(result.objective),
        _num(result.bound),
        gap,
        str(result.nodes),
        str(result.lazy_cuts),
        str(result.user_cuts),
        str(result.restricted_subproblems),
        str(result.diversified_subproblems),
        str(result.branches),
        f"{result.wall_seconds:.6f}",
    )
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="").writerow(row)
    return buf.getvalue()
