"""SkillWorld: a small textual multi-task environment for exercising the loop.

Each task family hides a fixed action sequence. An episode always runs the
full horizon; the first wrong action latches failure and the terminal reward
is 1 only for a perfect sequence. Skills are hint strings of the form
``"<family> step <t> action <a>"`` that the policy turns into features.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InadmissibleAction, MalformedRecord, SchemaVersionMismatch
from .hindsight import TrajectoryRecord
from .policy import PolicyParams, base_feature, hint_feature
from .reflection import ReflectionOutput, ReflectionRequest, StepSkillDraft

TASKSET_SCHEMA_VERSION = 1

_HINT = re.compile(r"(\S+) step (\d+) action (\d+)")


@dataclass(frozen=True)
class TaskSpec:
    family: str
    actions: tuple[int, ...]
    num_actions: int
    instance: int = 0

    def __post_init__(self) -> None:
        if not self.actions:
            raise ValueError("horizon must be at least 1")
        if any(not 0 <= a < self.num_actions for a in self.actions):
            raise ValueError("hidden actions must lie in [0, num_actions)")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def task_text(self) -> str:
        # family-unique tokens keep unrelated tasks far apart under token hashing
        n = self.family.rsplit("-", 1)[-1]
        return f"{self.family} goal-{n} object-{n} place-{n} tool-{n}"


@dataclass
class StepContext:
    family: str
    task_text: str
    step: int  # 1-based
    history: list[tuple[str, int]]
    observation: str
    admissible: list[int]
    injected_task_skills: list[str] = field(default_factory=list)
    injected_step_skills: list[str] = field(default_factory=list)


@dataclass
class EnvState:
    task: TaskSpec
    step: int = 1
    failed: bool = False
    done: bool = False
    history: list[tuple[str, int]] = field(default_factory=list)
    last_observation: str = ""


def observation_text(family: str, step: int, prev: str) -> str:
    return f"{family} step-{step} {prev}"


class SkillWorld:
    def __init__(self, history_window: int = 2):
        self.history_window = int(history_window)

    def _context(self, state: EnvState, prev: str) -> StepContext:
        task = state.task
        obs = observation_text(task.family, state.step, prev)
        state.last_observation = obs
        window = state.history[-self.history_window :] if self.history_window > 0 else []
        return StepContext(
            family=task.family,
            task_text=task.task_text,
            step=state.step,
            history=list(window),
            observation=obs,
            admissible=list(range(task.num_actions)),
        )

    def reset(self, task: TaskSpec) -> tuple[EnvState, StepContext]:
        state = EnvState(task)
        return state, self._context(state, "start")

    def step(self, state: EnvState, action: int) -> tuple[StepContext | None, float, bool]:
        if state.done:
            raise RuntimeError("episode already finished")
        task = state.task
        if not 0 <= action < task.num_actions:
            raise InadmissibleAction(f"action {action} not in [0, {task.num_actions})")
        correct = action == task.actions[state.step - 1]
        if not correct:
            state.failed = True
        state.history.append((state.last_observation, action))
        if state.step == task.horizon:
            state.done = True
            return None, 0.0 if state.failed else 1.0, True
        state.step += 1
        return self._context(state, "prev-ok" if correct else "prev-bad"), 0.0, False


def parse_hints(text: str) -> list[tuple[str, int, int]]:
    return [(g, int(t), int(a)) for g, t, a in _HINT.findall(text)]


def format_hints(family: str, hints: Iterable[tuple[int, int]]) -> str:
    return "; ".join(f"{family} step {t} action {a}" for t, a in hints)


def policy_features(context: StepContext) -> list[str]:
    """Base feature for (family, step) plus one feature per matching hint."""
    features = [base_feature(context.family, context.step)]
    for text in list(context.injected_task_skills) + list(context.injected_step_skills):
        for g, t, a in parse_hints(text):
            if g == context.family and t == context.step:
                f = hint_feature(g, t, a)
                if f not in features:
                    features.append(f)
    return features


def act(
    params: PolicyParams,
    context: StepContext,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
) -> tuple[int, float, list[str]]:
    """Sample (or argmax) an admissible action; returns (action, prob, features)."""
    features = policy_features(context)
    p = params.probabilities(features, context.admissible)
    if greedy:
        i = int(np.argmax(p))
    else:
        i = min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), len(p) - 1)
    return context.admissible[i], float(p[i]), features


def make_families(
    num_families: int = 50, horizon: int = 3, num_actions: int = 5, seed: int = 0
) -> list[TaskSpec]:
    rng = np.random.default_rng([seed, 0x5EED])
    return [
        TaskSpec(f"family-{i}", tuple(int(a) for a in rng.integers(num_actions, size=horizon)), num_actions)
        for i in range(num_families)
    ]


def sample_tasks(families: Sequence[TaskSpec], count: int, seed: int, first_instance: int = 0) -> list[TaskSpec]:
    """Draw ``count`` task instances (families with replacement)."""
    rng = np.random.default_rng([seed, 0x7A5C])
    picks = rng.integers(len(families), size=count)
    return [
        TaskSpec(families[j].family, families[j].actions, families[j].num_actions, first_instance + i)
        for i, j in enumerate(picks)
    ]


def is_noise_skill(body: str, truth: dict[str, tuple[int, ...]]) -> bool:
    """True when any hint in ``body`` names a wrong action for its family."""
    for g, t, a in parse_hints(body):
        actions = truth.get(g)
        if actions is None or not 1 <= t <= len(actions) or actions[t - 1] != a:
            return True
    return False


class OracleReflector:
    """Reflector with access to the hidden action sequences.

    With probability ``p_noise`` a drafted skill has every hinted action
    replaced by a uniformly chosen wrong one. Randomness is derived from the
    request itself, so ``generate`` is a pure function.
    """

    def __init__(self, tasks: Iterable[TaskSpec], task_hint_len: int = 2, p_noise: float = 0.0, seed: int = 0):
        self.tasks = {t.task_text: t for t in tasks}
        self.task_hint_len = int(task_hint_len)
        self.p_noise = float(p_noise)
        self.seed = int(seed)

    def _rng(self, request: ReflectionRequest) -> np.random.Generator:
        tag = zlib.crc32(f"{request.task}|{request.failed.traj_id}".encode("utf-8"))
        return np.random.default_rng([self.seed, tag])

    def _maybe_corrupt(self, hints: list[tuple[int, int]], num_actions: int, rng) -> list[tuple[int, int]]:
        if rng.random() >= self.p_noise:
            return hints
        out = []
        for t, a in hints:
            wrong = [b for b in range(num_actions) if b != a]
            out.append((t, int(wrong[int(rng.integers(len(wrong)))])))
        return out

    def generate(self, request: ReflectionRequest) -> ReflectionOutput:
        task = self.tasks[request.task]
        taken = [s.action for s in request.failed.steps]
        j = next(i for i, (a, b) in enumerate(zip(taken, task.actions)) if a != b)
        rng = self._rng(request)
        step_hint = self._maybe_corrupt([(j + 1, task.actions[j])], task.num_actions, rng)
        n_task = min(task.horizon, self.task_hint_len)
        task_hints = self._maybe_corrupt(
            [(t + 1, task.actions[t]) for t in range(n_task)], task.num_actions, rng
        )
        return ReflectionOutput(
            task_skill=format_hints(task.family, task_hints) if n_task > 0 else None,
            step_skill=StepSkillDraft(
                format_hints(task.family, step_hint), j, request.failed.observations[j]
            ),
        )


def earliest_failure(record: TrajectoryRecord, task: TaskSpec) -> int | None:
    for i, (step, a) in enumerate(zip(record.steps, task.actions)):
        if step.action != a:
            return i
    return None


# task-set persistence, same line-delimited layout as the bank


def save_tasks(tasks: Sequence[TaskSpec]) -> bytes:
    header = {"schema_version": TASKSET_SCHEMA_VERSION, "kind": "taskset", "count": len(tasks)}
    lines = [json.dumps(header)]
    lines += [
        json.dumps(
            {"family": t.family, "instance": t.instance, "num_actions": t.num_actions, "actions": list(t.actions)}
        )
        for t in tasks
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_tasks(data: bytes | str) -> list[TaskSpec]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [line for line in data.split("\n") if line.strip()]
    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    if not records or records[0].get("kind") != "taskset":
        raise MalformedRecord("missing task-set header")
    if records[0].get("schema_version") != TASKSET_SCHEMA_VERSION:
        raise SchemaVersionMismatch("unsupported task-set schema")
    try:
        return [
            TaskSpec(r["family"], tuple(r["actions"]), int(r["num_actions"]), int(r.get("instance", 0)))
            for r in records[1:]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"bad task record: {exc}") from exc
