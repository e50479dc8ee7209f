"""Dual-granularity skill bank for agentic RL, with a synthetic SkillWorld testbed.

Task skills guide a whole episode; step skills correct single decisions.
Both live in capacity-bounded pools, are retrieved by similarity plus
utility, scored by a paired baseline/skill rollout gap, grown by reflection
on failures and pruned by utility.
"""

from __future__ import annotations

from .analysis import RunSummary, compare_runs, summarize
from .bank import RetrievalKey, Skill, SkillBank, SkillKind, SkillPool, insert_skill, load_bank, save_bank
from .config import ABLATIONS, Config, load_config
from .embedding import HashEmbedder, RemoteEmbedder, cosine, embed_key
from .errors import *  # noqa: F401,F403
from .hindsight import (
    GroupStats,
    HindsightParams,
    RolloutGroup,
    StepSample,
    TrajectoryRecord,
    apply_utility_updates,
    compute_group_stats,
    ema_update,
    intrinsic_reward,
)
from .management import PruneParams, eviction_score, prune_bank, prune_pool
from .policy import OptParams, PolicyParams, group_advantages, kl_admissible, objective, policy_update
from .reflection import ReflectionConfig, ReflectionRequest, RemoteReflector, reflect_and_insert, should_reflect
from .retrieval import Query, RetrievalLog, RetrievalParams, retrieve
from .skillworld import OracleReflector, SkillWorld, TaskSpec, make_families, sample_tasks
from .trainer import StepMetrics, TrainerState, build_state, evaluate, run, run_training_step, run_validation

__version__ = "0.1.0"
