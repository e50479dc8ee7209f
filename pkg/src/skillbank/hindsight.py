"""Group statistics, hindsight utility signals and the intrinsic reward."""

from __future__ import annotations

from dataclasses import dataclass, field

from .bank import SkillBank
from .errors import PhaseViolation, UnbalancedGroup, UnknownSkillId


@dataclass
class StepSample:
    """One policy decision, as needed by the surrogate loss."""

    context_features: list[str]
    action: int
    old_prob: float
    admissible: list[int]


@dataclass
class TrajectoryRecord:
    traj_id: str
    group_flag: int
    success: int
    base_return: float
    task_skill_ids: set[int] = field(default_factory=set)
    step_skill_ids_by_step: list[list[int]] = field(default_factory=list)
    steps: list[StepSample] = field(default_factory=list)
    observations: list[str] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)

    @property
    def is_skill(self) -> bool:
        return self.group_flag == 1


@dataclass
class RolloutGroup:
    task: str
    records: list[TrajectoryRecord]

    @property
    def skill_half(self) -> list[TrajectoryRecord]:
        return [r for r in self.records if r.group_flag == 1]

    @property
    def base_half(self) -> list[TrajectoryRecord]:
        return [r for r in self.records if r.group_flag == 0]


@dataclass
class GroupStats:
    """Hindsight quantities for one task group.

    ``y_base`` is 0 and ``delta_task`` is None for groups without a baseline
    half, so that credits reduce to the absolute outcome ``Y_i``.
    """

    y_base: float
    y_skill: float | None
    delta_task: float | None
    credits: dict[str, float]


@dataclass(frozen=True)
class HindsightParams:
    beta_task: float = 0.2
    beta_step: float = 0.2
    lam: float = 0.5

    def __post_init__(self) -> None:
        for name in ("beta_task", "beta_step"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass
class UpdateReport:
    applied: list[tuple[int, float]] = field(default_factory=list)


def _mean(values: list[int]) -> float:
    return sum(values) / len(values)


def compute_group_stats(group: RolloutGroup) -> GroupStats:
    skill, base = group.skill_half, group.base_half
    n = len(group.records)
    if n == 0 or n % 2 or len(skill) != len(base):
        raise UnbalancedGroup(f"{len(skill)} skill vs {len(base)} baseline trajectories")
    y_base = _mean([r.success for r in base])
    y_skill = _mean([r.success for r in skill])
    credits = {r.traj_id: r.success - y_base for r in skill}
    return GroupStats(y_base, y_skill, y_skill - y_base, credits)


def unpaired_group_stats(group: RolloutGroup) -> GroupStats:
    """Stats when every trajectory is skill-injected (no baseline half)."""
    if not group.records or group.base_half:
        raise UnbalancedGroup("unpaired stats expect skill-group trajectories only")
    y_skill = _mean([r.success for r in group.records])
    return GroupStats(0.0, y_skill, None, {r.traj_id: float(r.success) for r in group.records})


def ema_update(u: float, signal: float, beta: float) -> float:
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if beta == 1.0:
        return float(signal)
    return (1.0 - beta) * u + beta * signal


def apply_utility_updates(
    bank: SkillBank,
    group: RolloutGroup,
    stats: GroupStats,
    params: HindsightParams,
) -> UpdateReport:
    """EMA-update every skill retrieved for this group.

    Task skills get one update with the group's delta. Step skills get one
    update per distinct trajectory they were injected into, with that
    trajectory's credit.
    """
    if bank.read_only:
        raise PhaseViolation("utility updates are only legal in the update phase")
    report = UpdateReport()
    skill_half = group.skill_half

    task_ids = sorted(set().union(*(r.task_skill_ids for r in skill_half)) if skill_half else set())
    step_updates: list[tuple[int, float]] = []
    for record in skill_half:
        seen = sorted({sid for ids in record.step_skill_ids_by_step for sid in ids})
        credit = stats.credits[record.traj_id]
        step_updates.extend((sid, credit) for sid in seen)

    # validate everything first so a bad id leaves the bank untouched
    for sid in task_ids:
        if sid not in bank.task_pool:
            raise UnknownSkillId(sid)
    for sid, _ in step_updates:
        if sid not in bank.step_pool:
            raise UnknownSkillId(sid)

    if task_ids and stats.delta_task is None:
        raise ValueError("task-skill updates need a defined delta (baseline group missing)")
    for sid in task_ids:
        skill = bank.task_pool.get(sid)
        bank.task_pool.set_utility(sid, ema_update(skill.utility, stats.delta_task, params.beta_task))
        report.applied.append((sid, stats.delta_task))
    for sid, credit in step_updates:
        skill = bank.step_pool.get(sid)
        bank.step_pool.set_utility(sid, ema_update(skill.utility, credit, params.beta_step))
        report.applied.append((sid, credit))
    return report


def intrinsic_reward(success: int, y_base: float, lam: float) -> float:
    return lam * (success - y_base)
