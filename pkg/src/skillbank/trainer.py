"""The joint policy / skill-bank training loop on SkillWorld.

Each training step has a read-only rollout phase (the bank is frozen) and an
exclusive update phase: retrieval counts, utility updates, reflection, the
policy update and, after validation, pruning. A step that raises is rolled
back so bank and policy are left exactly as they were.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .bank import SkillBank, save_bank
from .config import Config
from .embedding import Embedder, HashEmbedder
from .errors import ReflectorFailure
from .hindsight import (
    GroupStats,
    HindsightParams,
    RolloutGroup,
    StepSample,
    TrajectoryRecord,
    apply_utility_updates,
    compute_group_stats,
    unpaired_group_stats,
)
from .management import PruneParams, PruneReport, prune_pool
from .policy import OptParams, PolicyParams, augmented_returns, group_advantages, policy_update
from .reflection import ReflectionConfig, Reflector, reflect_and_insert
from .retrieval import Query, RetrievalLog, RetrievalParams, retrieve
from .skillworld import (
    OracleReflector,
    SkillWorld,
    TaskSpec,
    act,
    is_noise_skill,
    make_families,
    sample_tasks,
    save_tasks,
)

log = logging.getLogger(__name__)

VALIDATION_INSTANCE_OFFSET = 100_000


@dataclass
class StepMetrics:
    step: int
    tasks: list[dict] = field(default_factory=list)
    y_skill: float | None = None
    y_base: float | None = None
    delta: float | None = None
    train_success: float = 0.0
    task_pool_size: int = 0
    step_pool_size: int = 0
    mean_bank_utility: float | None = None
    mean_retrieved_utility: float | None = None
    retrievals: int = 0
    reflections: int = 0
    inserted: int = 0
    dedup_hits: int = 0
    reflector_failures: int = 0
    utility_updates: int = 0
    noise_skills: int = 0
    prune: list[dict] = field(default_factory=list)
    validation: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainerState:
    config: Config
    families: list[TaskSpec]
    val_tasks: list[TaskSpec]
    env: SkillWorld
    embedder: Embedder
    reflector: Reflector
    bank: SkillBank
    policy: PolicyParams
    ref_policy: PolicyParams
    step: int = 0
    metrics: list[StepMetrics] = field(default_factory=list)

    @property
    def truth(self) -> dict[str, tuple[int, ...]]:
        return {t.family: t.actions for t in self.families}

    def retrieval_params(self) -> RetrievalParams:
        c = self.config
        alpha = c.alpha if c.utility_retrieval_on else 1.0
        return RetrievalParams(c.top_m, c.top_k, c.tau_sim, alpha, c.eta)


def build_state(
    config: Config,
    embedder: Embedder | None = None,
    reflector: Reflector | None = None,
) -> TrainerState:
    config.validate()
    families = make_families(config.num_families, config.horizon, config.num_actions, config.seed)
    val_tasks = sample_tasks(
        families, config.validation_task_count, config.seed + 1, VALIDATION_INSTANCE_OFFSET
    )
    embedder = embedder or HashEmbedder(config.embedding_dim)
    reflector = reflector or OracleReflector(families, config.task_hint_len, config.p_noise, config.seed)
    policy = PolicyParams(config.num_actions, config.hint_bias)
    return TrainerState(
        config=config,
        families=families,
        val_tasks=val_tasks,
        env=SkillWorld(config.history_window),
        embedder=embedder,
        reflector=reflector,
        bank=SkillBank(config.task_capacity, config.step_capacity, embedder.dimension),
        policy=policy,
        ref_policy=policy.copy(),
    )


def rollout(
    state: TrainerState,
    task: TaskSpec,
    traj_id: str,
    group_flag: int,
    task_skills: Sequence,
    rng: np.random.Generator | None,
    log_: RetrievalLog | None,
    greedy: bool = False,
    use_step_skills: bool = True,
) -> tuple[TrajectoryRecord, list[float]]:
    """Run one episode; returns the record and the utilities of retrieved skills."""
    c = state.config
    params = state.retrieval_params()
    record = group_flag == 1 and log_ is not None
    env_state, ctx = state.env.reset(task)
    rec = TrajectoryRecord(traj_id, group_flag, 0, 0.0)
    retrieved_utilities = [s.utility for s in task_skills] if group_flag else []
    if group_flag:
        rec.task_skill_ids = {s.id for s in task_skills}
    total = 0.0
    done = False
    while not done:
        step_skills = []
        if group_flag and use_step_skills:
            query = Query.build(state.embedder, task.task_text, ctx.observation)
            step_skills = retrieve(state.bank.step_pool, query, params, record=record, log=log_)
            rec.step_skill_ids_by_step.append([s.id for s in step_skills])
            retrieved_utilities.extend(s.utility for s in step_skills)
        if group_flag:
            ctx.injected_task_skills = [s.body for s in task_skills]
            ctx.injected_step_skills = [s.body for s in step_skills]
        action, prob, features = act(state.policy, ctx, rng, greedy=greedy)
        rec.steps.append(StepSample(features, action, prob, list(ctx.admissible)))
        rec.observations.append(ctx.observation)
        ctx, reward, done = state.env.step(env_state, action)
        rec.rewards.append(reward)
        total += reward
    rec.base_return = total
    rec.success = int(not env_state.failed)
    return rec, retrieved_utilities


def _group_flags(config: Config) -> list[int]:
    n = config.group_size
    if not config.skills_on:
        return [0] * n
    if not config.baseline_group_on:
        return [1] * n
    return [1] * (n // 2) + [0] * (n // 2)


def _task_skills(state: TrainerState, task: TaskSpec, record: bool, log_: RetrievalLog | None) -> list:
    c = state.config
    if not (c.skills_on and c.task_skills_on):
        return []
    query = Query.build(state.embedder, task.task_text)
    return retrieve(state.bank.task_pool, query, state.retrieval_params(), record=record, log=log_)


def _stats(config: Config, group: RolloutGroup) -> GroupStats | None:
    if not config.skills_on:
        return None
    if config.baseline_group_on:
        return compute_group_stats(group)
    return unpaired_group_stats(group)


def sample_batch(state: TrainerState, step: int) -> list[TaskSpec]:
    rng = np.random.default_rng([state.config.seed, step, 0xBA7C])
    idx = rng.choice(len(state.families), size=state.config.tasks_per_step, replace=False)
    return [state.families[i] for i in sorted(idx)]


def run_training_step(state: TrainerState, tasks_batch: Sequence[TaskSpec] | None = None) -> StepMetrics:
    step = state.step + 1
    tasks_batch = list(tasks_batch) if tasks_batch is not None else sample_batch(state, step)
    bank_snapshot = state.bank.clone()
    policy_snapshot = state.policy.copy()
    try:
        metrics = _training_step(state, step, tasks_batch)
    except BaseException:
        state.bank = bank_snapshot
        state.policy = policy_snapshot
        raise
    state.step = step
    state.metrics.append(metrics)
    return metrics


def _training_step(state: TrainerState, step: int, tasks_batch: list[TaskSpec]) -> StepMetrics:
    c = state.config
    metrics = StepMetrics(step)
    retrieval_log = RetrievalLog()
    flags = _group_flags(c)
    groups: list[RolloutGroup] = []
    retrieved_utilities: list[float] = []

    # rollout phase: bank is frozen
    with state.bank.read_phase():
        for gi, task in enumerate(tasks_batch):
            task_skills = _task_skills(state, task, True, retrieval_log) if any(flags) else []
            records = []
            for i, flag in enumerate(flags):
                rng = np.random.default_rng([c.seed, step, gi, i])
                rec, utils = rollout(
                    state,
                    task,
                    f"{step}:{gi}:{i}",
                    flag,
                    task_skills,
                    rng,
                    retrieval_log,
                    use_step_skills=c.skills_on and c.step_skills_on,
                )
                records.append(rec)
                retrieved_utilities.extend(utils)
            groups.append(RolloutGroup(task.task_text, records))

    # update phase
    metrics.retrievals = len(retrieval_log)
    retrieval_log.commit(state.bank)
    hparams = HindsightParams(c.beta_task, c.beta_step, c.lam)
    rcfg = ReflectionConfig(c.tau_ref, c.task_skills_on, c.step_skills_on)
    batch: list[tuple[StepSample, float]] = []
    for gi, (task, group) in enumerate(zip(tasks_batch, groups)):
        stats = _stats(c, group)
        entry = {"task": task.family, "y_skill": None, "y_base": None, "delta": None}
        if stats is not None:
            entry["y_skill"] = stats.y_skill
            entry["y_base"] = stats.y_base if c.baseline_group_on else None
            entry["delta"] = stats.delta_task
            if c.utility_module_on and c.baseline_group_on:
                report = apply_utility_updates(state.bank, group, stats, hparams)
                metrics.utility_updates += len(report.applied)
            try:
                summary = reflect_and_insert(
                    state.bank, group, stats, state.reflector, rcfg, step, state.embedder,
                    rng_seed=[c.seed, step, gi, 0xEF],
                )
            except ReflectorFailure as exc:
                log.warning("reflection failed for %s at step %d: %s", task.family, step, exc)
                metrics.reflector_failures += 1
            else:
                metrics.reflections += int(summary.triggered)
                metrics.inserted += len(summary.inserted_ids)
                metrics.dedup_hits += summary.dedup_hits
            returns = augmented_returns(group, stats, c.lam)
        else:
            entry["y_base"] = float(np.mean([r.success for r in group.records]))
            returns = [r.base_return for r in group.records]
        metrics.tasks.append(entry)
        advantages = group_advantages(returns, c.adv_eps)
        for rec, adv in zip(group.records, advantages):
            batch.extend((s, adv) for s in rec.steps)

    opt = OptParams(c.epsilon, c.beta_kl, c.learning_rate, c.adv_eps)
    state.policy = policy_update(state.policy, batch, opt, state.ref_policy)

    _fill_summary(state, metrics, groups, retrieved_utilities)
    return metrics


def _mean_or_none(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _fill_summary(state: TrainerState, metrics: StepMetrics, groups, retrieved_utilities) -> None:
    metrics.y_skill = _mean_or_none(t["y_skill"] for t in metrics.tasks)
    metrics.y_base = _mean_or_none(t["y_base"] for t in metrics.tasks)
    metrics.delta = _mean_or_none(t["delta"] for t in metrics.tasks)
    metrics.train_success = float(np.mean([r.success for g in groups for r in g.records]))
    metrics.mean_retrieved_utility = _mean_or_none(retrieved_utilities)
    _fill_bank_metrics(state, metrics)


def _fill_bank_metrics(state: TrainerState, metrics: StepMetrics) -> None:
    bank = state.bank
    metrics.task_pool_size = len(bank.task_pool)
    metrics.step_pool_size = len(bank.step_pool)
    metrics.mean_bank_utility = _mean_or_none(s.utility for s in bank)
    truth = state.truth
    metrics.noise_skills = sum(is_noise_skill(s.body, truth) for s in bank)


def run_validation(state: TrainerState, use_skills: bool = True, tasks: Sequence[TaskSpec] | None = None) -> float:
    """Greedy evaluation with a frozen bank; mutates nothing."""
    c = state.config
    tasks = list(tasks) if tasks is not None else state.val_tasks
    before = save_bank(state.bank) if c.check_invariants else None
    policy_before = state.policy.copy() if c.check_invariants else None
    skills = use_skills and c.skills_on
    successes = 0
    with state.bank.read_phase():
        for vi, task in enumerate(tasks):
            task_skills = _task_skills(state, task, False, None) if skills else []
            rec, _ = rollout(
                state, task, f"val:{vi}", int(skills), task_skills, None, None,
                greedy=True, use_step_skills=skills and c.step_skills_on,
            )
            successes += rec.success
    if c.check_invariants:
        assert save_bank(state.bank) == before, "validation mutated the skill bank"
        assert state.policy == policy_before, "validation mutated the policy"
    return successes / len(tasks)


def prune_both(state: TrainerState) -> list[PruneReport]:
    c = state.config
    reports = []
    for pool, cap in ((state.bank.task_pool, c.task_capacity), (state.bank.step_pool, c.step_capacity)):
        reports.append(prune_pool(pool, PruneParams(cap, c.eta, c.protection_window), state.step))
    return reports


@dataclass
class RunReport:
    config: Config
    metrics: list[StepMetrics]
    summary: dict
    state: TrainerState


def summarize_run(state: TrainerState, elapsed: float) -> dict:
    c = state.config
    vals = [(m.step, m.validation) for m in state.metrics if m.validation is not None]
    best_step, best = max(vals, key=lambda sv: (sv[1], -sv[0])) if vals else (None, None)
    threshold_step = next((s for s, v in vals if v >= c.success_threshold), None)
    return {
        "label": c.label,
        "seed": c.seed,
        "steps": state.step,
        "best_validation": best,
        "best_validation_step": best_step,
        "final_validation": vals[-1][1] if vals else None,
        "time_to_threshold": threshold_step,
        "success_threshold": c.success_threshold,
        "task_pool_size": len(state.bank.task_pool),
        "step_pool_size": len(state.bank.step_pool),
        "elapsed_seconds": elapsed,
    }


def run(
    config: Config,
    out_dir: str | Path | None = None,
    on_step: Callable[[TrainerState, StepMetrics], None] | None = None,
    embedder: Embedder | None = None,
    reflector: Reflector | None = None,
) -> RunReport:
    """Train for ``total_steps``, validating and pruning every ``validation_interval`` steps."""
    config.validate()
    start = time.perf_counter()
    state = build_state(config, embedder, reflector)
    metrics_file = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2))
        (out / "train_tasks.jsonl").write_bytes(save_tasks(state.families))
        (out / "val_tasks.jsonl").write_bytes(save_tasks(state.val_tasks))
        metrics_file = open(out / "metrics.jsonl", "w")
    try:
        for _ in range(config.total_steps):
            metrics = run_training_step(state)
            if state.step % config.validation_interval == 0:
                metrics.validation = run_validation(state)
                if config.management_on and config.skills_on:
                    metrics.prune = [r.to_dict() for r in prune_both(state)]
                    _fill_bank_metrics(state, metrics)
            if metrics_file is not None:
                metrics_file.write(json.dumps(metrics.to_dict()) + "\n")
            if on_step is not None:
                on_step(state, metrics)
    finally:
        if metrics_file is not None:
            metrics_file.close()
    summary = summarize_run(state, time.perf_counter() - start)
    if out_dir is not None:
        out = Path(out_dir)
        (out / "bank.jsonl").write_bytes(save_bank(state.bank))
        (out / "policy.json").write_text(state.policy.to_json())
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return RunReport(config, state.metrics, summary, state)


def evaluate(
    policy: PolicyParams,
    bank: SkillBank,
    tasks: Sequence[TaskSpec],
    config: Config | None = None,
    use_skills: bool = True,
    embedder: Embedder | None = None,
) -> float:
    """Greedy success rate of a saved policy/bank pair on ``tasks``."""
    config = (config or Config()).replace(
        num_actions=policy.num_actions, hint_bias=policy.hint_bias, embedding_dim=bank.embedding_dim
    )
    families = list({t.family: t for t in tasks}.values())
    state = TrainerState(
        config=config,
        families=families,
        val_tasks=list(tasks),
        env=SkillWorld(config.history_window),
        embedder=embedder or HashEmbedder(bank.embedding_dim),
        reflector=OracleReflector(families),
        bank=bank,
        policy=policy,
        ref_policy=policy,
    )
    return run_validation(state, use_skills=use_skills)
