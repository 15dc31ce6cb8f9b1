import numpy as np
import pytest

import dyncover as dc
from dyncover.oracle import enumerate_optimum
from conftest import make_instance, random_binary_solution


def with_extra_user(inst, user):
    return dc.Instance(
        periods=inst.periods,
        facility_count=inst.facility_count,
        users=inst.users + (user,),
        domain=inst.domain,
        name=inst.name,
    )


class TestDropUncoverable:
    def test_removes_only_uncoverable(self, overlap):
        ghost = dc.UserRecord((4.0,), ((),))
        inst = with_extra_user(overlap, ghost)
        reduced, report = dc.drop_uncoverable(inst)
        assert report.removed_uncoverable == (6,)
        assert reduced.user_count == 6
        assert reduced.users == overlap.users

    def test_identity_when_all_coverable(self, overlap):
        reduced, report = dc.drop_uncoverable(overlap)
        assert reduced.users == overlap.users
        assert report.removed_uncoverable == ()

    def test_objective_preserved(self):
        rng = np.random.default_rng(3)
        for seed in range(10):
            inst = make_instance(seed, radius=0.15, users=12)
            reduced, _ = dc.drop_uncoverable(inst)
            for _ in range(10):
                x = random_binary_solution(inst, rng)
                assert dc.coverage(inst, x) == dc.coverage(reduced, x)


class TestDropPrecovered:
    def test_empty_set_is_identity(self, overlap):
        reduced, report = dc.drop_precovered(overlap, set())
        assert reduced.users == overlap.users
        assert report.constant_offset == 0.0

    def test_offset_for_one_user(self, overlap):
        reduced, report = dc.drop_precovered(overlap, {0})
        assert reduced.user_count == 5
        assert report.constant_offset == 10.0

    def test_index_out_of_range(self, overlap):
        with pytest.raises(ValueError):
            dc.drop_precovered(overlap, {99})

    def test_offset_identity(self):
        # value(reduced) + offset == value(original with removed users
        # treated as always covered)
        rng = np.random.default_rng(5)
        for seed in range(10):
            inst = make_instance(seed, users=9, facilities=4)
            removed = {int(j) for j in rng.choice(9, size=3, replace=False)}
            reduced, report = dc.drop_precovered(inst, removed)
            for _ in range(10):
                x = random_binary_solution(inst, rng)
                kept = [j for j in range(inst.user_count) if j not in removed]
                guaranteed = sum(sum(inst.users[j].demands) for j in removed)
                partial = sum(
                    min(1, sum(x.x[i][t] for i in inst.users[j].covering[t]))
                    * inst.users[j].demands[t]
                    for j in kept
                    for t in range(inst.periods)
                )
                assert dc.coverage(reduced, x) + report.constant_offset == (
                    pytest.approx(partial + guaranteed, abs=1e-9)
                )


class TestAggregateUsers:
    def test_duplicate_user_merges(self, overlap):
        twin = dc.UserRecord((6.0,), ((0, 1),))  # same signature as user 3
        inst = with_extra_user(overlap, twin)
        reduced, report = dc.aggregate_users(inst)
        assert reduced.user_count == 6
        assert reduced.users[3].demands == (14.0,)
        assert report.aggregation_map[6] == 3

    def test_overlap_signatures_all_distinct(self, overlap):
        reduced, _ = dc.aggregate_users(overlap)
        assert reduced.users == overlap.users

    def test_objective_preserved(self):
        rng = np.random.default_rng(11)
        for seed in range(10):
            inst = make_instance(seed, users=14, facilities=3, radius=0.5)
            reduced, _ = dc.aggregate_users(inst)
            for _ in range(10):
                x = random_binary_solution(inst, rng)
                assert dc.coverage(inst, x) == pytest.approx(
                    dc.coverage(reduced, x), abs=1e-9
                )

    def test_idempotent(self):
        inst = make_instance(2, users=16, facilities=3, radius=0.5)
        once, _ = dc.aggregate_users(inst)
        twice, _ = dc.aggregate_users(once)
        assert once.users == twice.users


class TestSinglesSet:
    def test_overlap_singles(self, overlap):
        assert dc.singles_set(overlap) == {0, 1, 2}

    def test_everyone_covered_twice(self):
        inst = dc.Instance(
            1, 2, (dc.UserRecord((1.0,), ((0, 1),)), dc.UserRecord((2.0,), ((0, 1),)))
        )
        assert dc.singles_set(inst) == set()

    def test_counts_sum_over_periods(self):
        # one covering facility in each of two periods -> total two, not one
        inst = dc.Instance(2, 1, (dc.UserRecord((1.0, 1.0), ((0,), (0,))),))
        assert dc.singles_set(inst) == set()


class TestOptimumPreservation:
    def test_reduction_chain_keeps_optimum(self):
        for seed in range(8):
            inst = make_instance(seed, facilities=4, users=12, periods=2, radius=0.3)
            _, base_value = enumerate_optimum(inst)
            step1, _ = dc.drop_uncoverable(inst)
            step2, report = dc.drop_precovered(step1, set())
            step3, _ = dc.aggregate_users(step2)
            _, reduced_value = enumerate_optimum(step3)
            assert reduced_value + report.constant_offset == pytest.approx(
                base_value, abs=1e-9
            )
