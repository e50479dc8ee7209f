"""Two-stage retrieval and utility-based eviction on a hand-built bank.

Run with ``python demos/retrieval_and_pruning.py``.
"""

from __future__ import annotations

import numpy as np

from skillbank import HashEmbedder, SkillBank, SkillKind
from skillbank.bank import RetrievalKey, insert_skill
from skillbank.embedding import embed_key
from skillbank.management import PruneParams, prune_pool
from skillbank.retrieval import Query, RetrievalParams, retrieve, selection_score, stage1_candidates

embedder = HashEmbedder(64)
bank = SkillBank(step_capacity=4)

# Six step skills keyed on the same task but different observations.
observations = [f"family-3 step-{t} {p}" for t in (1, 2, 3) for p in ("prev-ok", "prev-bad")]
for step, obs in enumerate(observations):
    key = RetrievalKey("solve family-3", obs, embed_key(embedder, "solve family-3", obs))
    insert_skill(bank, SkillKind.STEP, key, f"family-3 step {step % 3 + 1} action {step % 5}", created_step=step)

# Pretend some skills already proved useful and were retrieved a few times.
rng = np.random.default_rng(0)
for skill in bank.step_pool:
    skill.utility = float(rng.uniform(-0.3, 0.6))
    bank.step_pool.record_retrieval(skill.id, int(rng.integers(0, 6)))

# Stage one keeps similar keys; stage two trades similarity against utility and an exploration bonus.
query = Query.build(embedder, "solve family-3", "family-3 step-2 prev-ok")
params = RetrievalParams(top_m=4, top_k=2, tau_sim=0.0)
print("stage one (id, cosine):")
for cand in stage1_candidates(bank.step_pool, query, params):
    skill = bank.get(cand.skill_id)
    score = selection_score(cand, skill, bank.step_pool, params)
    print(f"  {cand.skill_id}  cos={cand.raw_cosine:+.3f}  u={skill.utility:+.3f}  n={skill.retrieval_count}  score={score:.3f}")
print("stage two picks:", [s.id for s in retrieve(bank.step_pool, query, params)])

# Over capacity: evict the lowest-scoring skills, sparing anything younger than the window.
report = prune_pool(bank.step_pool, PruneParams(capacity=4, eta=0.5, protection_window=2), current_step=6)
print("evicted (id, score):", [(sid, round(score, 3)) for sid, score in report.evicted])
print("protected skills:", report.protected, "remaining ids:", bank.step_pool.ids)
