"""Two-stage skill retrieval: similarity filter, then utility + UCB reranking."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .bank import SkillBank, SkillKind, SkillPool, Skill
from .embedding import Embedder, embed_key
from .errors import KeyShapeMismatch, PhaseViolation

# identical unit vectors can dot to 1 - 1e-16; keep them at tau_sim = 1
SIM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Query:
    kind: SkillKind
    task_text: str
    observation_text: str | None
    embedding: np.ndarray = field(compare=False, repr=False)

    @classmethod
    def build(cls, embedder: Embedder, task_text: str, observation_text: str | None = None) -> "Query":
        kind = SkillKind.TASK if observation_text is None else SkillKind.STEP
        return cls(kind, task_text, observation_text, embed_key(embedder, task_text, observation_text))

    def __post_init__(self) -> None:
        if (self.observation_text is not None) != (self.kind is SkillKind.STEP):
            raise KeyShapeMismatch("query observation presence does not match its kind")


@dataclass(frozen=True)
class RetrievalParams:
    top_m: int = 8
    top_k: int = 2
    tau_sim: float = 0.3
    alpha: float = 0.5
    eta: float = 0.5

    def __post_init__(self) -> None:
        if self.top_m <= 0 or self.top_k <= 0:
            raise ValueError("top_m and top_k must be positive")
        if self.top_k > self.top_m:
            raise ValueError("top_k must not exceed top_m")
        if not -1.0 <= self.tau_sim <= 1.0:
            raise ValueError("tau_sim must lie in [-1, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass
class Candidate:
    skill_id: int
    raw_cosine: float
    sim_hat: float
    score: float = 0.0


def normalized_similarity(raw_cosine: float) -> float:
    return min(1.0, max(0.0, (raw_cosine + 1.0) / 2.0))


def ucb_bonus(retrieval_count: int, total_retrievals: int, eta: float) -> float:
    return eta * math.sqrt(math.log(1.0 + total_retrievals) / (1.0 + retrieval_count))


def stage1_candidates(pool: SkillPool, query: Query, params: RetrievalParams) -> list[Candidate]:
    if pool.kind is not query.kind:
        raise ValueError(f"{query.kind.value} query against the {pool.kind.value} pool")
    if len(pool) == 0:
        return []
    sims = np.clip(pool.embedding_matrix() @ query.embedding, -1.0, 1.0)
    ids = pool.id_array()
    keep = np.flatnonzero(sims >= params.tau_sim - SIM_TOLERANCE)
    order = keep[np.lexsort((ids[keep], -sims[keep]))][: params.top_m]
    return [
        Candidate(int(ids[i]), float(sims[i]), normalized_similarity(float(sims[i]))) for i in order
    ]


def selection_score(candidate: Candidate, skill: Skill, pool: SkillPool, params: RetrievalParams) -> float:
    exploit = skill.utility + ucb_bonus(skill.retrieval_count, pool.total_retrievals, params.eta)
    return params.alpha * candidate.sim_hat + (1.0 - params.alpha) * exploit


class RetrievalLog:
    """Retrieval events collected during rollouts, committed to the bank afterwards."""

    def __init__(self) -> None:
        self.events: list[tuple[SkillKind, int]] = []

    def add(self, kind: SkillKind, skill_ids: list[int]) -> None:
        self.events.extend((kind, sid) for sid in skill_ids)

    def extend(self, other: "RetrievalLog") -> None:
        self.events.extend(other.events)

    def __len__(self) -> int:
        return len(self.events)

    def counts(self) -> Counter:
        return Counter(self.events)

    def commit(self, bank: SkillBank) -> None:
        """Apply the logged counts; only legal in the update phase.

        Skills evicted since retrieval are skipped.
        """
        if bank.read_only:
            raise PhaseViolation("retrieval counts can only be committed in the update phase")
        for (kind, sid), n in sorted(self.counts().items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            pool = bank.pool(kind)
            if sid in pool:
                pool.record_retrieval(sid, n)
        self.events.clear()


def retrieve(
    pool: SkillPool,
    query: Query,
    params: RetrievalParams,
    record: bool = False,
    log: RetrievalLog | None = None,
) -> list[Skill]:
    """Return at most ``top_k`` skills for injection.

    With ``record=True`` the returned ids go to ``log``; counts change only at
    ``log.commit``. With ``record=False`` nothing observable changes.
    """
    if record and log is None:
        raise ValueError("record=True needs a RetrievalLog")
    candidates = stage1_candidates(pool, query, params)
    for cand in candidates:
        cand.score = selection_score(cand, pool.get(cand.skill_id), pool, params)
    candidates.sort(key=lambda c: (-c.score, c.skill_id))
    chosen = [pool.get(c.skill_id) for c in candidates[: params.top_k]]
    if record:
        log.add(pool.kind, [s.id for s in chosen])
    return chosen
