"""Quickstart: play SkillWorld by hand, then train a policy with a skill bank.

Run with ``python demos/quickstart.py``. Takes a few seconds.
"""

from __future__ import annotations

import numpy as np

from skillbank import Config, SkillWorld, evaluate, make_families, run
from skillbank.skillworld import format_hints

# A task family is a hidden action sequence; every instance of it shares that sequence.
families = make_families(num_families=5, horizon=3, num_actions=5, seed=0)
task = families[0]
print(task.task_text, "has hidden actions", task.actions)

# Episodes always run for the full horizon. The first wrong action latches failure.
world = SkillWorld()
state, ctx = world.reset(task)
for action in (task.actions[0], (task.actions[1] + 1) % 5, task.actions[2]):
    print(f"  obs={ctx.observation!r:34} action={action}")
    ctx, reward, done = world.step(state, action)
print("  reward", reward, "failed", state.failed)

# Skills are hint strings. A correct hint raises the logit of the named action.
print("a task skill looks like:", format_hints(task.family, enumerate(task.actions[:2], start=1)))

# Train the full method and the no-skill baseline on a small world.
config = Config(num_families=12, tasks_per_step=4, total_steps=60, validation_task_count=64, seed=1)
full = run(config)
plain = run(config.with_ablations("no_skills"))
print("best validation with skills    ", full.summary["best_validation"])
print("best validation without skills ", plain.summary["best_validation"])

# The bank grew during training; each skill keeps a utility estimate.
utilities = np.array([s.utility for s in full.state.bank])
print(f"bank holds {len(utilities)} skills, mean utility {utilities.mean():.3f}")
top = sorted(full.state.bank, key=lambda s: -s.utility)[:3]
for s in top:
    print(f"  [{s.kind.value}] u={s.utility:+.3f} n={s.retrieval_count:3d} {s.body}")

# Does the skill-trained policy still succeed once the bank is taken away?
state = full.state
print("skill-trained policy, no skills injected:",
      evaluate(state.policy, state.bank, state.val_tasks, config, use_skills=False))
