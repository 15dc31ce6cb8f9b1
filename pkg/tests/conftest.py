import numpy as np
import pytest
from hypothesis import strategies as st

import dyncover as dc
from dyncover.io import GeneratorParams, generate_instance


@pytest.fixture
def overlap():
    return dc.overlap_instance()


def make_instance(
    seed,
    facilities=4,
    users=10,
    periods=1,
    template="cardinality",
    radius=0.35,
    integer_demands=True,
    growth=1.0,
):
    params = GeneratorParams(
        seed=seed,
        periods=periods,
        facility_count=facilities,
        user_count=users,
        coverage_radius=radius,
        domain_template=template,
        integer_demands=integer_demands,
        demand_growth=growth,
    )
    return generate_instance(params)


def random_binary_solution(inst, rng):
    mat = (rng.random((inst.facility_count, inst.periods)) < 0.5).astype(int)
    return dc.Solution(tuple(tuple(int(v) for v in row) for row in mat))


def naive_coverage(inst, sol):
    """Schoolbook double loop over the covering formula; shares nothing with
    the production implementation."""
    total = 0.0
    for t in range(inst.periods):
        for j, user in enumerate(inst.users):
            opened = sum(sol.x[i][t] for i in user.covering[t])
            total += min(1, opened) * user.demands[t]
    return total


def feasible_points(inst):
    """All integer points of the domain, as Solutions."""
    n = inst.facility_count * inst.periods
    assert n <= 14
    out = []
    for code in range(1 << n):
        bits = [(code >> k) & 1 for k in range(n)]
        sol = dc.Solution(
            tuple(
                tuple(bits[i * inst.periods + t] for t in range(inst.periods))
                for i in range(inst.facility_count)
            )
        )
        if dc.check_domain(inst, sol):
            out.append(sol)
    return out


@st.composite
def small_instances(draw, max_facilities=4, max_periods=3, max_users=6):
    periods = draw(st.integers(1, max_periods))
    facilities = draw(st.integers(1, max_facilities))
    n_users = draw(st.integers(1, max_users))
    users = []
    for _ in range(n_users):
        demands = tuple(
            float(draw(st.integers(1, 20))) for _ in range(periods)
        )
        covering = tuple(
            tuple(sorted(draw(st.sets(st.integers(0, facilities - 1)))))
            for _ in range(periods)
        )
        users.append(dc.UserRecord(demands, covering))
    limit = draw(st.integers(1, facilities))
    domain = dc.DomainSpec(tuple(dc.Cardinality(t, limit) for t in range(periods)))
    return dc.Instance(
        periods=periods,
        facility_count=facilities,
        users=tuple(users),
        domain=domain,
        name="hyp",
    )


@st.composite
def instance_and_solution(draw, **kwargs):
    inst = draw(small_instances(**kwargs))
    x = tuple(
        tuple(draw(st.integers(0, 1)) for _ in range(inst.periods))
        for _ in range(inst.facility_count)
    )
    return inst, dc.Solution(x)
