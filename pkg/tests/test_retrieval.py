from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formula_checks import (
    _query,
    make_skill,
    params_for,
    pool_of,
    random_retrieval_instance,
    retrieval_oracle,
    unit,
)
from skillbank.bank import SkillBank, SkillKind, save_bank
from skillbank.errors import KeyShapeMismatch, PhaseViolation
from skillbank.retrieval import Candidate, Query, RetrievalLog, RetrievalParams, retrieve, selection_score


@params_for("retrieval")
def test_worked_example(fn):
    fn()


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_oracle_equivalence_property(seed):
    skills, q, params = random_retrieval_instance(np.random.default_rng(seed))
    assert [s.id for s in retrieve(pool_of(skills), _query(q), params)] == retrieval_oracle(skills, q, params)


def _rank(pool, q, params, sid):
    ranked = [s.id for s in retrieve(pool, _query(q), RetrievalParams(**{**params, "top_k": params["top_m"]}))]
    return ranked.index(sid) if sid in ranked else len(ranked)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.5))
def test_raising_utility_never_lowers_rank(seed, bump):
    rng = np.random.default_rng(seed)
    skills = [make_skill(i + 1, embedding=unit(*rng.normal(size=3)), utility=float(rng.uniform(-1, 1)),
                         count=int(rng.integers(0, 6))) for i in range(8)]
    q = unit(*rng.normal(size=3))
    params = dict(top_m=8, top_k=8, tau_sim=-1.0, alpha=float(rng.uniform(0, 0.99)), eta=0.5)
    target = skills[int(rng.integers(8))]
    before = _rank(pool_of(skills), q, params, target.id)
    target.utility += bump
    assert _rank(pool_of(skills), q, params, target.id) <= before


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(1, 20))
def test_more_retrievals_never_raise_score(seed, extra):
    rng = np.random.default_rng(seed)
    skill = make_skill(1, utility=float(rng.uniform(-1, 1)), count=int(rng.integers(0, 5)))
    other = make_skill(2, count=extra + int(rng.integers(0, 30)))
    p = RetrievalParams(alpha=float(rng.uniform(0, 1)), eta=float(rng.uniform(0, 2)))
    cand = Candidate(1, 0.3, 0.65)
    before = selection_score(cand, skill, pool_of([skill, other]), p)
    # move retrievals from the other skill so N_r stays fixed
    skill.retrieval_count += extra
    other.retrieval_count -= extra
    assert selection_score(cand, skill, pool_of([skill, other]), p) <= before + 1e-12


def test_record_logs_then_commit_updates_counts():
    bank = SkillBank(embedding_dim=2)
    for i in range(1, 4):
        bank.step_pool.add(make_skill(i, embedding=unit(1.0, 0.1 * i)))
    log = RetrievalLog()
    q = _query(unit(1.0, 0.0))
    with bank.read_phase():
        got = retrieve(bank.step_pool, q, RetrievalParams(top_k=2), record=True, log=log)
        assert all(s.retrieval_count == 0 for s in bank.step_pool)
        with pytest.raises(PhaseViolation):
            log.commit(bank)
    log.commit(bank)
    assert {s.id for s in got} == {s.id for s in bank.step_pool if s.retrieval_count == 1}
    assert bank.step_pool.total_retrievals == 2 and len(log) == 0


def test_commit_skips_evicted_skills():
    bank = SkillBank(embedding_dim=2)
    bank.step_pool.add(make_skill(1))
    bank.step_pool.add(make_skill(2))
    log = RetrievalLog()
    log.add(SkillKind.STEP, [1, 2, 2])
    bank.step_pool.remove(1)
    log.commit(bank)
    assert bank.get(2).retrieval_count == 2 and bank.step_pool.total_retrievals == 2


def test_unrecorded_retrieval_leaves_bank_bytes():
    bank = SkillBank(embedding_dim=2)
    for i in range(1, 6):
        bank.step_pool.add(make_skill(i, embedding=unit(1.0, i), utility=0.1 * i, count=i))
    before = save_bank(bank)
    retrieve(bank.step_pool, _query(unit(1.0, 2.0)), RetrievalParams())
    assert save_bank(bank) == before


def test_query_kind_checks():
    with pytest.raises(KeyShapeMismatch):
        Query(SkillKind.STEP, "g", None, unit(1.0, 0.0))
    with pytest.raises(ValueError):
        retrieve(pool_of([make_skill(1)]), _query(unit(1.0, 0.0), SkillKind.TASK), RetrievalParams())
    with pytest.raises(ValueError):
        retrieve(pool_of([make_skill(1)]), _query(unit(1.0, 0.0)), RetrievalParams(), record=True)


@pytest.mark.parametrize("bad", [dict(top_k=3, top_m=2), dict(top_m=0), dict(alpha=1.5), dict(tau_sim=2.0), dict(eta=-1)])
def test_params_validated(bad):
    with pytest.raises(ValueError):
        RetrievalParams(**bad)
