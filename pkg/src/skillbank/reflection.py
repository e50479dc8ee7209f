"""Reflection-triggered skill generation for low-performing task groups."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import httpx
import numpy as np

from .bank import RetrievalKey, SkillBank, SkillKind, insert_skill
from .embedding import Embedder, embed_key
from .errors import PhaseViolation, ReflectorFailure
from .hindsight import GroupStats, RolloutGroup, TrajectoryRecord

log = logging.getLogger(__name__)


@dataclass
class ReflectionRequest:
    task: str
    failed: TrajectoryRecord
    success: TrajectoryRecord | None = None

    def __post_init__(self) -> None:
        if self.failed.success != 0 or self.failed.group_flag != 1:
            raise ValueError("the failed exemplar must be an unsuccessful skill-group trajectory")
        if self.success is not None and self.success.success != 1:
            raise ValueError("the success exemplar must be a successful trajectory")


@dataclass
class StepSkillDraft:
    body: str
    failure_step: int  # 0-based index into the failed trajectory
    observation: str | None


@dataclass
class ReflectionOutput:
    task_skill: str | None = None
    step_skill: StepSkillDraft | None = None


class Reflector(Protocol):
    def generate(self, request: ReflectionRequest) -> ReflectionOutput: ...


@dataclass(frozen=True)
class ReflectionConfig:
    tau_ref: float = 0.5
    task_skills_on: bool = True
    step_skills_on: bool = True


@dataclass
class InsertionSummary:
    triggered: bool
    inserted_ids: list[int] = field(default_factory=list)
    dedup_hits: int = 0
    rejected: list[str] = field(default_factory=list)
    request: ReflectionRequest | None = None


def should_reflect(y_skill: float, tau_ref: float) -> bool:
    return y_skill < tau_ref


def select_exemplars(group: RolloutGroup, rng_seed) -> ReflectionRequest | None:
    """Pick one failed skill-group trajectory and, if any, one success from the whole group."""
    rng = np.random.default_rng(rng_seed)
    failed = [r for r in group.skill_half if r.success == 0]
    if not failed:
        return None
    successes = [r for r in group.records if r.success == 1]
    chosen_fail = failed[int(rng.integers(len(failed)))]
    chosen_success = successes[int(rng.integers(len(successes)))] if successes else None
    return ReflectionRequest(group.task, chosen_fail, chosen_success)


def _valid_step_draft(draft: StepSkillDraft, failed: TrajectoryRecord) -> str | None:
    if not 0 <= draft.failure_step < len(failed.observations):
        return f"failure_step {draft.failure_step} outside trajectory of length {len(failed.observations)}"
    if draft.observation != failed.observations[draft.failure_step]:
        return "step-skill observation is not the failed trajectory's observation at failure_step"
    if not draft.body.strip():
        return "empty step-skill body"
    return None


def reflect_and_insert(
    bank: SkillBank,
    group: RolloutGroup,
    stats: GroupStats,
    reflector: Reflector,
    config: ReflectionConfig,
    current_step: int,
    embedder: Embedder,
    rng_seed=0,
) -> InsertionSummary:
    """Run reflection for one task group and insert whatever it drafts.

    ReflectorFailure propagates; an invalid step-skill draft is dropped with a
    warning while the task skill is still inserted.
    """
    if bank.read_only:
        raise PhaseViolation("reflection inserts skills and needs the update phase")
    if stats.y_skill is None or not should_reflect(stats.y_skill, config.tau_ref):
        return InsertionSummary(False)
    request = select_exemplars(group, rng_seed)
    assert request is not None, "y_skill < tau_ref <= 1 guarantees a failed skill trajectory"
    summary = InsertionSummary(True, request=request)

    output = reflector.generate(request)

    attempts: list[tuple[SkillKind, RetrievalKey, str]] = []
    if config.task_skills_on and output.task_skill and output.task_skill.strip():
        key = RetrievalKey(group.task, None, embed_key(embedder, group.task))
        attempts.append((SkillKind.TASK, key, output.task_skill))
    if config.step_skills_on and output.step_skill is not None:
        problem = _valid_step_draft(output.step_skill, request.failed)
        if problem:
            log.warning("dropping step skill for %s: %s", group.task, problem)
            summary.rejected.append(problem)
        else:
            obs = output.step_skill.observation
            key = RetrievalKey(group.task, obs, embed_key(embedder, group.task, obs))
            attempts.append((SkillKind.STEP, key, output.step_skill.body))

    for kind, key, body in attempts:
        result = insert_skill(bank, kind, key, body, current_step)
        if result.inserted:
            summary.inserted_ids.append(result.id)
        else:
            summary.dedup_hits += 1
    return summary


def _render_trajectory(record: TrajectoryRecord) -> list[dict]:
    rewards = record.rewards or [0.0] * len(record.steps)
    return [
        {"obs": obs, "action": step.action, "reward": reward}
        for obs, step, reward in zip(record.observations, record.steps, rewards)
    ]


class RemoteReflector:
    """Client for a reflection service: ``POST /reflect``.

    The service returns ``{"task_skill": str | null, "step_skill": {"body",
    "failure_step"} | null}``; the step observation is read back from the
    failed trajectory.
    """

    def __init__(self, base_url: str, timeout: float = 60.0, client: httpx.Client | None = None):
        self._client = client or httpx.Client(base_url=base_url, timeout=timeout)

    @staticmethod
    def render(request: ReflectionRequest) -> dict:
        return {
            "task": request.task,
            "failed_trajectory": _render_trajectory(request.failed),
            "success_trajectory": _render_trajectory(request.success) if request.success else None,
        }

    def generate(self, request: ReflectionRequest) -> ReflectionOutput:
        try:
            response = self._client.post("/reflect", json=self.render(request))
            response.raise_for_status()
            data = response.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise ReflectorFailure(f"reflection service failed: {exc}") from exc
        if not isinstance(data, dict):
            raise ReflectorFailure("reflection service returned a non-object")
        step = data.get("step_skill")
        draft = None
        if step is not None:
            try:
                j = int(step["failure_step"])
                body = str(step["body"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ReflectorFailure(f"malformed step_skill: {exc}") from exc
            obs = request.failed.observations[j] if 0 <= j < len(request.failed.observations) else None
            draft = StepSkillDraft(body, j, obs)
        task_skill = data.get("task_skill")
        return ReflectionOutput(str(task_skill) if task_skill is not None else None, draft)
