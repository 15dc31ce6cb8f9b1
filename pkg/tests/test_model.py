import numpy as np
import pytest
from hypothesis import given, settings

import dyncover as dc
from conftest import (
    instance_and_solution,
    make_instance,
    naive_coverage,
    random_binary_solution,
)


def sol(*rows):
    return dc.Solution(tuple((v,) for v in rows))


class TestCoverage:
    def test_single_open_facility(self, overlap):
        assert dc.coverage(overlap, sol(1, 0, 0)) == 20.0

    def test_all_closed(self, overlap):
        assert dc.coverage(overlap, sol(0, 0, 0)) == 0.0

    def test_two_open(self, overlap):
        assert dc.coverage(overlap, sol(1, 1, 0)) == 28.0

    def test_dimension_mismatch(self, overlap):
        with pytest.raises(ValueError):
            dc.coverage(overlap, dc.Solution(((1,), (0,))))


class TestCoverageCounts:
    def test_counts_single(self, overlap):
        counts = dc.coverage_counts(overlap, sol(1, 0, 0))
        assert counts.counts == ((1,), (0,), (0,), (1,), (1,), (0,))

    def test_counts_zero(self, overlap):
        counts = dc.coverage_counts(overlap, sol(0, 0, 0))
        assert all(c == (0,) for c in counts.counts)

    def test_counts_all_open(self, overlap):
        counts = dc.coverage_counts(overlap, sol(1, 1, 1))
        assert counts.counts == ((1,), (1,), (1,), (2,), (2,), (2,))


class TestFractionalCounts:
    def test_overlap_pair(self, overlap):
        cnt = dc.fractional_coverage_counts(overlap, [[0.0], [0.75], [0.75]])
        assert cnt[5, 0] == pytest.approx(1.5, abs=1e-12)

    def test_zeros(self, overlap):
        cnt = dc.fractional_coverage_counts(overlap, np.zeros((3, 1)))
        assert (cnt == 0).all()

    def test_uniform(self, overlap):
        cnt = dc.fractional_coverage_counts(overlap, np.full((3, 1), 0.4))
        assert cnt[3, 0] == pytest.approx(0.8, abs=1e-12)

    def test_rejects_out_of_box(self, overlap):
        with pytest.raises(ValueError):
            dc.fractional_coverage_counts(overlap, np.full((3, 1), 1.1))
        with pytest.raises(ValueError):
            dc.fractional_coverage_counts(overlap, np.full((3, 1), -0.1))

    def test_fractional_coverage_value(self, overlap):
        assert dc.fractional_coverage(overlap, [[0.0], [0.75], [0.75]]) == 19.5


class TestCheckDomain:
    def test_within_cardinality(self, overlap):
        assert dc.check_domain(overlap, sol(1, 0, 1))

    def test_exceeds_cardinality(self, overlap):
        assert not dc.check_domain(overlap, sol(1, 1, 1))

    def test_persistence_forbids_removal(self):
        inst = dc.Instance(
            periods=2,
            facility_count=1,
            users=(dc.UserRecord((1.0, 1.0), ((0,), (0,))),),
            domain=dc.DomainSpec((dc.Persistence(),)),
        )
        assert not dc.check_domain(inst, dc.Solution(((1, 0),)))
        assert dc.check_domain(inst, dc.Solution(((0, 1),)))

    def test_budget_charges_new_openings_only(self):
        inst = dc.Instance(
            periods=2,
            facility_count=2,
            users=(dc.UserRecord((1.0, 1.0), ((0,), (0,))),),
            domain=dc.DomainSpec(
                (dc.Budget(0, (1.0, 1.0), 1.0), dc.Budget(1, (1.0, 1.0), 1.0))
            ),
        )
        # one opening per period is affordable, two at once is not
        assert dc.check_domain(inst, dc.Solution(((1, 1), (0, 1))))
        assert not dc.check_domain(inst, dc.Solution(((1, 1), (1, 1))))


class TestValidation:
    def test_zero_demand_rejected(self):
        with pytest.raises(ValueError, match="> 0"):
            dc.Instance(1, 1, (dc.UserRecord((0.0,), ((0,),)),))

    def test_facility_index_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            dc.Instance(1, 2, (dc.UserRecord((1.0,), ((2,),)),))

    def test_period_count_mismatch(self):
        with pytest.raises(ValueError, match="periods"):
            dc.Instance(2, 1, (dc.UserRecord((1.0,), ((0,), (0,))),))

    def test_covering_sets_deduplicated(self):
        user = dc.UserRecord((1.0,), ((0, 0, 1),))
        assert user.covering == ((0, 1),)

    def test_solution_entries_binary(self):
        with pytest.raises(ValueError):
            dc.Solution(((2,),))


class TestProperties:
    def test_coverage_matches_naive_double_loop(self):
        rng = np.random.default_rng(7)
        checked = 0
        for seed in range(40):
            inst = make_instance(
                seed,
                facilities=2 + seed % 4,
                users=3 + seed % 9,
                periods=1 + seed % 3,
                integer_demands=(seed % 2 == 0),
            )
            for _ in range(25):
                x = random_binary_solution(inst, rng)
                assert dc.coverage(inst, x) == pytest.approx(
                    naive_coverage(inst, x), abs=1e-9
                )
                checked += 1
        assert checked == 1000

    @given(instance_and_solution())
    @settings(max_examples=60, deadline=None)
    def test_coverage_bounds_and_monotonicity(self, case):
        inst, x = case
        value = dc.coverage(inst, x)
        assert 0.0 <= value <= inst.total_demand + 1e-9
        # opening one more facility never loses coverage
        for i in range(inst.facility_count):
            for t in range(inst.periods):
                if x.x[i][t] == 0:
                    rows = [list(r) for r in x.x]
                    rows[i][t] = 1
                    bumped = dc.Solution(tuple(tuple(r) for r in rows))
                    assert dc.coverage(inst, bumped) >= value - 1e-9
                    break

    def test_upper_bound_attained_iff_fully_covered(self, overlap):
        full = dc.Solution(((1,), (1,), (1,)))
        assert dc.coverage(overlap, full) == overlap.total_demand
        assert dc.coverage(overlap, dc.Solution(((1,), (1,), (0,)))) < overlap.total_demand
