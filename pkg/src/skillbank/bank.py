"""Skill records, the two capacity-bounded skill pools, and bank persistence."""

from __future__ import annotations

import contextlib
import dataclasses
import enum
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    KeyShapeMismatch,
    MalformedRecord,
    PhaseViolation,
    SchemaVersionMismatch,
    UnknownSkillId,
)

SCHEMA_VERSION = 1

_WS = re.compile(r"\s+")


class SkillKind(str, enum.Enum):
    TASK = "task"
    STEP = "step"


@dataclass(frozen=True)
class RetrievalKey:
    """When a skill applies: the task text, plus the observation for step skills."""

    task_text: str
    observation_text: str | None
    embedding: np.ndarray = field(compare=False, repr=False)

    def matches_kind(self, kind: SkillKind) -> bool:
        return (self.observation_text is not None) == (kind is SkillKind.STEP)


@dataclass
class Skill:
    id: int
    kind: SkillKind
    key: RetrievalKey
    body: str
    utility: float = 0.0
    retrieval_count: int = 0
    created_step: int = 0
    normalized_body: str = ""

    def __post_init__(self) -> None:
        if not self.normalized_body:
            self.normalized_body = canonicalize(self.body)

    @property
    def identity(self) -> tuple[str, str, str | None]:
        return (self.normalized_body, self.key.task_text, self.key.observation_text)


@dataclass
class InsertResult:
    inserted: bool
    id: int | None = None


def canonicalize(body: str) -> str:
    """Lowercase, collapse internal whitespace and strip the ends."""
    return _WS.sub(" ", body).strip().lower()


class SkillPool:
    """All skills of one kind, with the pool-wide retrieval total N_r."""

    def __init__(self, kind: SkillKind, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.kind = SkillKind(kind)
        self.capacity = int(capacity)
        self.total_retrievals = 0
        self._skills: dict[int, Skill] = {}
        self._identities: dict[tuple, int] = {}
        self._matrix: np.ndarray | None = None
        self._id_array: np.ndarray | None = None
        self._read_only = False

    def __len__(self) -> int:
        return len(self._skills)

    def __iter__(self) -> Iterator[Skill]:
        return iter(self._skills.values())

    def __contains__(self, skill_id: int) -> bool:
        return skill_id in self._skills

    @property
    def skills(self) -> list[Skill]:
        return list(self._skills.values())

    @property
    def ids(self) -> list[int]:
        return list(self._skills)

    def get(self, skill_id: int) -> Skill:
        try:
            return self._skills[skill_id]
        except KeyError:
            raise UnknownSkillId(skill_id) from None

    def find(self, identity: tuple) -> int | None:
        return self._identities.get(identity)

    def id_array(self) -> np.ndarray:
        if self._id_array is None:
            self._id_array = np.fromiter(self._skills, dtype=np.int64, count=len(self._skills))
        return self._id_array

    def embedding_matrix(self) -> np.ndarray:
        """Stacked key embeddings in pool order (cached until the next mutation)."""
        if self._matrix is None:
            if self._skills:
                self._matrix = np.stack([s.key.embedding for s in self._skills.values()])
            else:
                self._matrix = np.zeros((0, 0))
        return self._matrix

    def _check_writable(self) -> None:
        if self._read_only:
            raise PhaseViolation(f"{self.kind.value} pool is read-only during rollouts")

    def add(self, skill: Skill) -> None:
        self._check_writable()
        if skill.kind is not self.kind:
            raise ValueError(f"cannot add a {skill.kind.value} skill to the {self.kind.value} pool")
        if skill.id in self._skills:
            raise ValueError(f"duplicate skill id {skill.id}")
        self._skills[skill.id] = skill
        self._identities[skill.identity] = skill.id
        self.total_retrievals += skill.retrieval_count
        self._matrix = None
        self._id_array = None

    def remove(self, skill_id: int) -> Skill:
        self._check_writable()
        skill = self.get(skill_id)
        del self._skills[skill_id]
        del self._identities[skill.identity]
        self.total_retrievals -= skill.retrieval_count
        self._matrix = None
        self._id_array = None
        return skill

    def record_retrieval(self, skill_id: int, count: int = 1) -> None:
        self._check_writable()
        if count < 0:
            raise ValueError("retrieval counts only increase")
        self.get(skill_id).retrieval_count += count
        self.total_retrievals += count

    def set_utility(self, skill_id: int, utility: float) -> None:
        self._check_writable()
        self.get(skill_id).utility = float(utility)


class SkillBank:
    """Task pool and step pool, plus the id counter shared by both."""

    def __init__(self, task_capacity: int = 64, step_capacity: int = 64, embedding_dim: int = 64):
        self.task_pool = SkillPool(SkillKind.TASK, task_capacity)
        self.step_pool = SkillPool(SkillKind.STEP, step_capacity)
        self.embedding_dim = int(embedding_dim)
        self.next_id = 1

    def pool(self, kind: SkillKind) -> SkillPool:
        return self.task_pool if SkillKind(kind) is SkillKind.TASK else self.step_pool

    @property
    def pools(self) -> tuple[SkillPool, SkillPool]:
        return (self.task_pool, self.step_pool)

    def __len__(self) -> int:
        return len(self.task_pool) + len(self.step_pool)

    def __iter__(self) -> Iterator[Skill]:
        yield from self.task_pool
        yield from self.step_pool

    def get(self, skill_id: int) -> Skill:
        for pool in self.pools:
            if skill_id in pool:
                return pool.get(skill_id)
        raise UnknownSkillId(skill_id)

    def pool_of(self, skill_id: int) -> SkillPool:
        for pool in self.pools:
            if skill_id in pool:
                return pool
        raise UnknownSkillId(skill_id)

    @property
    def read_only(self) -> bool:
        return self.task_pool._read_only

    @contextlib.contextmanager
    def read_phase(self) -> Iterator["SkillBank"]:
        """Freeze both pools; any mutation inside raises PhaseViolation."""
        previous = self.read_only
        for pool in self.pools:
            pool._read_only = True
        try:
            yield self
        finally:
            for pool in self.pools:
                pool._read_only = previous

    def clone(self) -> "SkillBank":
        """Independent copy; key embeddings are shared since they are never mutated."""
        other = SkillBank(self.task_pool.capacity, self.step_pool.capacity, self.embedding_dim)
        other.next_id = self.next_id
        for src, dst in zip(self.pools, other.pools):
            for s in src:
                dst.add(dataclasses.replace(s))
        return other

    def check_writable(self) -> None:
        if self.read_only:
            raise PhaseViolation("bank is read-only during rollouts")


def insert_skill(
    bank: SkillBank,
    kind: SkillKind,
    key: RetrievalKey,
    body: str,
    created_step: int,
) -> InsertResult:
    """Append a new zero-utility skill unless an identical one is already pooled."""
    kind = SkillKind(kind)
    if not key.matches_kind(kind):
        raise KeyShapeMismatch(
            f"{kind.value} skills {'require' if kind is SkillKind.STEP else 'forbid'} observation_text"
        )
    bank.check_writable()
    pool = bank.pool(kind)
    normalized = canonicalize(body)
    if pool.find((normalized, key.task_text, key.observation_text)) is not None:
        return InsertResult(False, None)
    skill = Skill(
        id=bank.next_id,
        kind=kind,
        key=key,
        body=body,
        created_step=int(created_step),
        normalized_body=normalized,
    )
    pool.add(skill)
    bank.next_id += 1
    return InsertResult(True, skill.id)


# persistence: one JSON header line, then one skill per line


def _skill_record(skill: Skill) -> dict:
    record = {
        "id": skill.id,
        "kind": skill.kind.value,
        "task_text": skill.key.task_text,
        "body": skill.body,
        "utility": skill.utility,
        "retrieval_count": skill.retrieval_count,
        "created_step": skill.created_step,
        "embedding": [float(x) for x in skill.key.embedding],
    }
    if skill.key.observation_text is not None:
        record["observation_text"] = skill.key.observation_text
    return record


def save_bank(bank: SkillBank) -> bytes:
    header = {
        "schema_version": SCHEMA_VERSION,
        "embedding_dim": bank.embedding_dim,
        "capacities": {"task": bank.task_pool.capacity, "step": bank.step_pool.capacity},
        "next_id": bank.next_id,
    }
    lines = [json.dumps(header)]
    lines.extend(json.dumps(_skill_record(s), ensure_ascii=False) for s in bank)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_skill(record: dict, dim: int) -> Skill:
    try:
        kind = SkillKind(record["kind"])
        embedding = np.asarray(record["embedding"], dtype=float)
        if embedding.shape != (dim,):
            raise MalformedRecord(f"embedding has shape {embedding.shape}, expected ({dim},)")
        key = RetrievalKey(record["task_text"], record.get("observation_text"), embedding)
        if not key.matches_kind(kind):
            raise MalformedRecord(f"skill {record['id']}: observation_text does not match kind")
        count = int(record["retrieval_count"])
        if count < 0:
            raise MalformedRecord("negative retrieval_count")
        return Skill(
            id=int(record["id"]),
            kind=kind,
            key=key,
            body=str(record["body"]),
            utility=float(record["utility"]),
            retrieval_count=count,
            created_step=int(record["created_step"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedRecord):
            raise
        raise MalformedRecord(f"bad skill record: {exc}") from exc


def load_bank(data: bytes | str) -> SkillBank:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedRecord("bank file is not UTF-8") from exc
    lines = [line for line in data.split("\n") if line.strip()]
    if not lines:
        raise MalformedRecord("empty bank stream")
    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    header = records[0]
    if not isinstance(header, dict) or "schema_version" not in header:
        raise MalformedRecord("missing header line")
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"bank schema {header['schema_version']} != supported {SCHEMA_VERSION}"
        )
    try:
        dim = int(header["embedding_dim"])
        caps = header["capacities"]
        bank = SkillBank(int(caps["task"]), int(caps["step"]), dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"bad header: {exc}") from exc
    max_id = 0
    for record in records[1:]:
        if not isinstance(record, dict):
            raise MalformedRecord("skill line is not an object")
        skill = _parse_skill(record, dim)
        try:
            bank.pool(skill.kind).add(skill)
        except ValueError as exc:
            raise MalformedRecord(str(exc)) from exc
        max_id = max(max_id, skill.id)
    bank.next_id = max(int(header.get("next_id", 1)), max_id + 1)
    return bank


def bank_ids(bank: SkillBank) -> set[int]:
    return {s.id for s in bank}


def skills_by_utility(skills: Iterable[Skill]) -> list[Skill]:
    return sorted(skills, key=lambda s: (-s.utility, s.id))
