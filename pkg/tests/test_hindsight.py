from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from formula_checks import _bank_with, group_from, params_for, record
from skillbank.errors import PhaseViolation, UnbalancedGroup, UnknownSkillId
from skillbank.hindsight import (
    GroupStats,
    HindsightParams,
    RolloutGroup,
    apply_utility_updates,
    compute_group_stats,
    ema_update,
    unpaired_group_stats,
)


@params_for("hindsight")
def test_worked_example(fn):
    fn()


halves = st.integers(1, 6).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n), st.lists(st.integers(0, 1), min_size=n, max_size=n))
)


@given(halves)
def test_delta_is_mean_credit(h):
    stats = compute_group_stats(group_from(*h))
    assert -1.0 <= stats.delta_task <= 1.0
    credits = list(stats.credits.values())
    assert abs(stats.delta_task - sum(credits) / len(credits)) <= 1e-12


@given(st.floats(-1, 1), st.lists(st.tuples(st.floats(-1, 1), st.floats(0.01, 1.0)), max_size=40))
def test_ema_stays_in_unit_interval(u, steps):
    for signal, beta in steps:
        u = ema_update(u, signal, beta)
        assert -1.0 <= u <= 1.0


@given(
    halves,
    st.lists(st.sets(st.integers(1, 3), max_size=3), min_size=1, max_size=4),
)
def test_update_counts_exact(h, per_step_ids):
    skill_y, base_y = h
    bank = _bank_with(task_ids=[10, 11], step_ids=[1, 2, 3])
    recs = [record(f"s{i}", 1, y, [10, 11], [sorted(ids) for ids in per_step_ids][: i + 1]) for i, y in enumerate(skill_y)]
    recs += [record(f"b{i}", 0, y) for i, y in enumerate(base_y)]
    group = RolloutGroup("g", recs)
    report = apply_utility_updates(bank, group, compute_group_stats(group), HindsightParams())
    task_entries = [sid for sid, _ in report.applied if sid >= 10]
    step_entries = [sid for sid, _ in report.applied if sid < 10]
    assert sorted(task_entries) == [10, 11]
    expected = sum(len(set().union(*map(set, r.step_skill_ids_by_step))) for r in group.skill_half)
    assert len(step_entries) == expected


def test_step_skill_credits_average_over_trajectories():
    bank = _bank_with(step_ids=[1])
    recs = [record("s0", 1, 1, (), [[1]]), record("s1", 1, 0, (), [[1], [1]]), record("b0", 0, 0), record("b1", 0, 1)]
    group = RolloutGroup("g", recs)
    apply_utility_updates(bank, group, compute_group_stats(group), HindsightParams(beta_step=0.5))
    # credits 0.5 then -0.5, applied in trajectory order
    assert abs(bank.get(1).utility - (0.5 * (0.5 * 0.5) + 0.5 * -0.5)) <= 1e-12


def test_unknown_id_leaves_bank_untouched():
    bank = _bank_with(task_ids=[1], step_ids=[2])
    group = RolloutGroup("g", [record("s0", 1, 1, [1], [[2, 99]]), record("b0", 0, 0)])
    with pytest.raises(UnknownSkillId):
        apply_utility_updates(bank, group, compute_group_stats(group), HindsightParams())
    assert bank.get(1).utility == 0.0 and bank.get(2).utility == 0.0


def test_updates_need_update_phase():
    bank = _bank_with(task_ids=[1])
    group = RolloutGroup("g", [record("s0", 1, 1, [1]), record("b0", 0, 0)])
    with bank.read_phase(), pytest.raises(PhaseViolation):
        apply_utility_updates(bank, group, compute_group_stats(group), HindsightParams())


def test_odd_and_empty_groups():
    with pytest.raises(UnbalancedGroup):
        compute_group_stats(RolloutGroup("g", [record("s0", 1, 1), record("s1", 1, 1), record("b0", 0, 1)]))
    with pytest.raises(UnbalancedGroup):
        compute_group_stats(RolloutGroup("g", []))


def test_unpaired_stats_use_absolute_outcome():
    group = RolloutGroup("g", [record("s0", 1, 1), record("s1", 1, 0)])
    stats = unpaired_group_stats(group)
    assert stats == GroupStats(0.0, 0.5, None, {"s0": 1.0, "s1": 0.0})


@pytest.mark.parametrize("beta", [0.0, -0.1, 1.5])
def test_beta_range(beta):
    with pytest.raises(ValueError):
        ema_update(0.0, 1.0, beta)
