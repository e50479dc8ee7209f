from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formula_checks import params_for, unit
from skillbank.bank import (
    RetrievalKey,
    SkillBank,
    SkillKind,
    canonicalize,
    insert_skill,
    load_bank,
    save_bank,
)
from skillbank.errors import MalformedRecord, PhaseViolation, SchemaVersionMismatch, UnknownSkillId


@params_for("bank")
def test_worked_example(fn):
    fn()


texts = st.text(alphabet=st.sampled_from("abcXYZ \t\n"), max_size=20)


@given(texts)
def test_canonicalize_idempotent(x):
    assert canonicalize(canonicalize(x)) == canonicalize(x)
    assert canonicalize(x) == canonicalize(x).strip()


insert_op = st.tuples(
    st.sampled_from([SkillKind.TASK, SkillKind.STEP]),
    st.sampled_from(["g1", "g2"]),
    st.sampled_from(["o1", "o2"]),
    st.sampled_from(["a b", "A  b", "c", " c "]),
)


def _apply(bank, ops, step=0):
    for kind, task, obs, body in ops:
        key = RetrievalKey(task, obs if kind is SkillKind.STEP else None, unit(1.0, len(task + obs)))
        insert_skill(bank, kind, key, body, step)


@given(st.lists(insert_op, max_size=15))
def test_repeating_inserts_changes_nothing(ops):
    bank = SkillBank(embedding_dim=2)
    _apply(bank, ops)
    once = save_bank(bank)
    _apply(bank, ops, step=5)
    assert save_bank(bank) == once
    assert all(s.kind is SkillKind.TASK for s in bank.task_pool)
    assert all(s.kind is SkillKind.STEP for s in bank.step_pool)


@settings(max_examples=60)
@given(
    st.lists(
        st.tuples(
            st.booleans(),
            st.text(max_size=12),
            st.text(min_size=1, max_size=12),
            st.floats(-1, 1, allow_nan=False),
            st.integers(0, 50),
            st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3),
        ),
        max_size=8,
    )
)
def test_round_trip_random_banks(rows):
    bank = SkillBank(task_capacity=7, step_capacity=9, embedding_dim=3)
    for is_task, task, body, u, n, vec in rows:
        v = np.asarray(vec) + np.array([2.0, 0, 0])
        kind = SkillKind.TASK if is_task else SkillKind.STEP
        res = insert_skill(bank, kind, RetrievalKey(task, None if is_task else "obs " + task, v / np.linalg.norm(v)), body, n)
        if res.inserted:
            bank.pool(kind).set_utility(res.id, u)
            bank.pool(kind).record_retrieval(res.id, n)
    back = load_bank(save_bank(bank))
    assert back.next_id == bank.next_id and (back.task_pool.capacity, back.step_pool.capacity) == (7, 9)
    for a, b in zip(bank, back):
        assert (a.id, a.kind, a.body, a.key.task_text, a.key.observation_text) == (
            b.id, b.kind, b.body, b.key.task_text, b.key.observation_text
        )
        assert abs(a.utility - b.utility) <= 1e-9 and a.retrieval_count == b.retrieval_count
        assert np.allclose(a.key.embedding, b.key.embedding, atol=1e-9, rtol=0)
    for pool in back.pools:
        assert pool.total_retrievals == sum(s.retrieval_count for s in pool)


def _one_skill_bank():
    bank = SkillBank(embedding_dim=2)
    insert_skill(bank, SkillKind.STEP, RetrievalKey("g", "o", unit(1.0, 1.0)), "b", 0)
    return bank


def test_schema_version_rejected():
    lines = save_bank(_one_skill_bank()).decode().splitlines()
    header = json.loads(lines[0])
    header["schema_version"] = 99
    with pytest.raises(SchemaVersionMismatch):
        load_bank("\n".join([json.dumps(header), *lines[1:]]))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda r: r.pop("body"),
        lambda r: r.update(embedding=[1.0]),
        lambda r: r.pop("observation_text"),
        lambda r: r.update(retrieval_count=-1),
        lambda r: r.update(kind="other"),
    ],
)
def test_malformed_skill_lines(mutate):
    lines = save_bank(_one_skill_bank()).decode().splitlines()
    rec = json.loads(lines[1])
    mutate(rec)
    with pytest.raises(MalformedRecord):
        load_bank("\n".join([lines[0], json.dumps(rec)]))


def test_empty_and_garbage_streams():
    for data in (b"", b"not json\n", b"\xff\xfe"):
        with pytest.raises(MalformedRecord):
            load_bank(data)


def test_read_phase_blocks_every_mutation():
    bank = _one_skill_bank()
    with bank.read_phase():
        with pytest.raises(PhaseViolation):
            insert_skill(bank, SkillKind.TASK, RetrievalKey("g", None, unit(1.0, 0.0)), "x", 1)
        with pytest.raises(PhaseViolation):
            bank.step_pool.record_retrieval(1)
        with pytest.raises(PhaseViolation):
            bank.step_pool.set_utility(1, 0.5)
        with pytest.raises(PhaseViolation):
            bank.step_pool.remove(1)
    bank.step_pool.set_utility(1, 0.5)
    assert bank.get(1).utility == 0.5


def test_unknown_id_and_clone_independence():
    bank = _one_skill_bank()
    with pytest.raises(UnknownSkillId):
        bank.get(42)
    copy = bank.clone()
    copy.step_pool.set_utility(1, 0.9)
    copy.step_pool.record_retrieval(1, 3)
    assert bank.get(1).utility == 0.0 and bank.step_pool.total_retrievals == 0
    assert copy.next_id == bank.next_id
