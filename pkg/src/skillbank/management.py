"""Capacity-bounded pruning with a protection window for young skills."""

from __future__ import annotations

from dataclasses import dataclass, field

from .bank import Skill, SkillBank, SkillPool
from .errors import PhaseViolation
from .retrieval import ucb_bonus


@dataclass(frozen=True)
class PruneParams:
    capacity: int = 64
    eta: float = 0.5
    protection_window: int = 10

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.eta < 0 or self.protection_window < 0:
            raise ValueError("eta and protection_window must be nonnegative")


@dataclass
class PruneReport:
    kind: str
    evicted: list[tuple[int, float]] = field(default_factory=list)
    size_before: int = 0
    size_after: int = 0
    protected: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "evicted": [[sid, score] for sid, score in self.evicted],
            "size_before": self.size_before,
            "size_after": self.size_after,
            "protected": self.protected,
        }


def eviction_score(skill: Skill, pool: SkillPool, eta: float) -> float:
    return skill.utility + ucb_bonus(skill.retrieval_count, pool.total_retrievals, eta)


def is_protected(skill: Skill, current_step: int, window: int) -> bool:
    return current_step - skill.created_step < window


def prune_pool(pool: SkillPool, params: PruneParams, current_step: int) -> PruneReport:
    """Evict lowest-scoring unprotected skills until the pool fits ``capacity``.

    Scores use the pre-prune retrieval total; ties evict the older skill. If
    protection blocks eviction the pool stays over capacity.
    """
    if pool._read_only:
        raise PhaseViolation("pruning needs the update phase")
    report = PruneReport(pool.kind.value, size_before=len(pool))
    report.protected = sum(is_protected(s, current_step, params.protection_window) for s in pool)
    excess = len(pool) - params.capacity
    if excess > 0:
        scored = sorted(
            (
                (eviction_score(s, pool, params.eta), s.id)
                for s in pool
                if not is_protected(s, current_step, params.protection_window)
            ),
        )
        for score, sid in scored[:excess]:
            pool.remove(sid)
            report.evicted.append((sid, score))
    report.size_after = len(pool)
    return report


def prune_bank(bank: SkillBank, params_by_pool: dict[str, PruneParams], current_step: int) -> list[PruneReport]:
    return [prune_pool(pool, params_by_pool[pool.kind.value], current_step) for pool in bank.pools]
