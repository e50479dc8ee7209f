"""Training configuration, JSON loading and the named ablation presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

ABLATIONS: dict[str, dict] = {
    "full": {},
    "no_task_skills": {"task_skills_on": False},
    "no_step_skills": {"step_skills_on": False},
    "no_management": {"management_on": False},
    "no_baseline_group": {"baseline_group_on": False},
    "no_utility_retrieval": {"utility_retrieval_on": False},
    "no_utility_module": {"utility_module_on": False, "baseline_group_on": False},
    "no_skills": {"skills_on": False},
}


@dataclass
class Config:
    # rollout groups and hindsight
    group_size: int = 8
    tasks_per_step: int = 4
    history_window: int = 2
    lam: float = 0.5
    beta_task: float = 0.2
    beta_step: float = 0.2
    tau_ref: float = 0.5
    # retrieval
    embedding_dim: int = 64
    tau_sim: float = 0.3
    alpha: float = 0.5
    eta: float = 0.5
    top_m: int = 8
    top_k: int = 2
    # bank management
    task_capacity: int = 64
    step_capacity: int = 64
    protection_window: int = 10
    # optimizer
    epsilon: float = 0.2
    beta_kl: float = 0.0
    learning_rate: float = 20.0
    adv_eps: float = 1e-8
    # schedule
    total_steps: int = 200
    validation_interval: int = 5
    validation_task_count: int = 128
    success_threshold: float = 0.8
    seed: int = 0
    # ablation switches
    skills_on: bool = True
    task_skills_on: bool = True
    step_skills_on: bool = True
    management_on: bool = True
    baseline_group_on: bool = True
    utility_retrieval_on: bool = True
    utility_module_on: bool = True
    # environment
    num_families: int = 50
    horizon: int = 3
    num_actions: int = 5
    hint_bias: float = 2.0
    p_noise: float = 0.1
    task_hint_len: int = 2
    gamma: float = 1.0  # unused: rewards are undiscounted terminal success
    # bookkeeping
    ablations: list[str] = field(default_factory=list)
    check_invariants: bool = True

    def validate(self) -> "Config":
        problems = []
        if self.group_size < 1:
            problems.append("group_size must be positive")
        if self.skills_on and self.baseline_group_on and (self.group_size < 2 or self.group_size % 2):
            problems.append("group_size must be even and >= 2 with a baseline group")
        if self.tasks_per_step < 1 or self.tasks_per_step > self.num_families:
            problems.append("tasks_per_step must lie in [1, num_families]")
        if self.top_k > self.top_m or self.top_k < 1:
            problems.append("need 1 <= top_k <= top_m")
        for name in ("beta_task", "beta_step"):
            if not 0.0 < getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in (0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            problems.append("alpha must lie in [0, 1]")
        if not -1.0 <= self.tau_sim <= 1.0:
            problems.append("tau_sim must lie in [-1, 1]")
        if not 0.0 < self.epsilon < 1.0:
            problems.append("epsilon must lie in (0, 1)")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        if min(self.lam, self.eta, self.beta_kl, self.protection_window) < 0:
            problems.append("lam, eta, beta_kl and protection_window must be nonnegative")
        if min(self.task_capacity, self.step_capacity) < 1:
            problems.append("pool capacities must be positive")
        if self.validation_interval < 1 or self.validation_task_count < 1 or self.total_steps < 0:
            problems.append("validation_interval and validation_task_count must be positive")
        if not 0.0 <= self.p_noise <= 1.0:
            problems.append("p_noise must lie in [0, 1]")
        if self.horizon < 1 or self.num_actions < 2 or self.num_families < 1:
            problems.append("need horizon >= 1, num_actions >= 2, num_families >= 1")
        unknown = [a for a in self.ablations if a not in ABLATIONS]
        if unknown:
            problems.append(f"unknown ablations {unknown}; choose from {sorted(ABLATIONS)}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    @property
    def label(self) -> str:
        return "+".join(self.ablations) if self.ablations else "full"

    def with_ablations(self, *names: str) -> "Config":
        changes: dict = {}
        for name in names:
            if name not in ABLATIONS:
                raise ConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
            changes.update(ABLATIONS[name])
        labels = [n for n in dict.fromkeys([*self.ablations, *names]) if n != "full"]
        return dataclasses.replace(self, ablations=labels, **changes)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        config = cls(**data)
        if config.ablations:
            names = list(config.ablations)
            config = dataclasses.replace(config, ablations=[]).with_ablations(*names)
        return config.validate()


def load_config(path: str | Path) -> Config:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return Config.from_dict(data)
