"""Softmax-linear policy and the group-relative clipped-surrogate update.

An action's logit in a context is the sum of per-feature logit vectors over
the active features. Gradients of the surrogate and KL terms are analytic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainMismatch, MalformedRecord
from .hindsight import GroupStats, RolloutGroup, StepSample

HINT_PREFIX = "hint:"


@dataclass(frozen=True)
class OptParams:
    epsilon: float = 0.2
    beta_kl: float = 0.0
    learning_rate: float = 1.0
    adv_eps: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.beta_kl < 0:
            raise ValueError("beta_kl must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.adv_eps <= 0:
            raise ValueError("adv_eps must be positive")


def hint_feature(family: str, step: int, action: int) -> str:
    return f"{HINT_PREFIX}{family}:{step}:{action}"


def base_feature(family: str, step: int) -> str:
    return f"base:{family}:{step}"


class PolicyParams:
    """Per-feature logit vectors over ``num_actions`` actions.

    Features never updated are not stored: base features default to zeros
    and hint features to ``hint_bias`` on the hinted action.
    """

    def __init__(self, num_actions: int, hint_bias: float = 2.0, logits: dict | None = None):
        self.num_actions = int(num_actions)
        self.hint_bias = float(hint_bias)
        self.logits: dict[str, np.ndarray] = {
            k: np.asarray(v, dtype=float).copy() for k, v in (logits or {}).items()
        }

    def initial_logits(self, feature: str) -> np.ndarray:
        v = np.zeros(self.num_actions)
        if feature.startswith(HINT_PREFIX):
            action = int(feature.rsplit(":", 1)[1])
            if 0 <= action < self.num_actions:
                v[action] = self.hint_bias
        return v

    def feature_logits(self, feature: str) -> np.ndarray:
        stored = self.logits.get(feature)
        return stored if stored is not None else self.initial_logits(feature)

    def context_logits(self, features: Iterable[str]) -> np.ndarray:
        total = np.zeros(self.num_actions)
        for f in dict.fromkeys(features):
            total = total + self.feature_logits(f)
        return total

    def probabilities(self, features: Iterable[str], admissible: Sequence[int]) -> np.ndarray:
        """Softmax over ``admissible`` (returned in the order given)."""
        z = self.context_logits(features)[list(admissible)]
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def prob_of(self, sample: StepSample) -> float:
        p = self.probabilities(sample.context_features, sample.admissible)
        return float(p[sample.admissible.index(sample.action)])

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.num_actions, self.hint_bias, self.logits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolicyParams):
            return NotImplemented
        return (
            self.num_actions == other.num_actions
            and self.hint_bias == other.hint_bias
            and self.logits.keys() == other.logits.keys()
            and all(np.array_equal(v, other.logits[k]) for k, v in self.logits.items())
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "num_actions": self.num_actions,
                "hint_bias": self.hint_bias,
                "logits": {k: [float(x) for x in v] for k, v in sorted(self.logits.items())},
            }
        )

    @classmethod
    def from_json(cls, text: str | bytes) -> "PolicyParams":
        try:
            data = json.loads(text)
            return cls(int(data["num_actions"]), float(data["hint_bias"]), data["logits"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"bad policy file: {exc}") from exc


def augmented_returns(group: RolloutGroup, stats: GroupStats, lam: float) -> list[float]:
    return [
        r.base_return + lam * (r.success - stats.y_base) if r.group_flag == 1 else r.base_return
        for r in group.records
    ]


def group_advantages(returns: Sequence[float], adv_eps: float = 1e-8) -> list[float]:
    """Normalize with the population std of the whole group, floored at ``adv_eps``."""
    if len(returns) == 0:
        raise ValueError("empty return list")
    r = np.asarray(returns, dtype=float)
    if np.all(r == r[0]):
        # exact zeros; centering can leave rounding residue that the floor would amplify
        return [0.0] * len(r)
    centered = r - r.mean()
    std = float(np.sqrt(np.mean(centered**2)))
    return [float(x) for x in centered / max(std, adv_eps)]


def surrogate_term(sample: StepSample, new_prob: float, advantage: float, eps: float) -> float:
    ratio = new_prob / sample.old_prob
    clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
    return min(ratio * advantage, clipped * advantage)


def kl_admissible(p_new: Sequence[float], p_ref: Sequence[float]) -> float:
    p = np.asarray(p_new, dtype=float)
    q = np.asarray(p_ref, dtype=float)
    if p.shape != q.shape:
        raise DomainMismatch(f"distributions over {p.shape} vs {q.shape}")
    if np.any(p <= 0) or np.any(q <= 0):
        raise DomainMismatch("distributions must be strictly positive on the admissible set")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise DomainMismatch("distributions must sum to 1")
    return max(0.0, float(np.sum(p * np.log(p / q))))


Batch = Sequence[tuple[StepSample, float]]


def objective(params: PolicyParams, batch: Batch, opt: OptParams, ref: PolicyParams | None = None) -> float:
    """Mean clipped surrogate minus ``beta_kl`` times mean KL to ``ref``."""
    if not batch:
        return 0.0
    surr = kl = 0.0
    for sample, adv in batch:
        p = params.probabilities(sample.context_features, sample.admissible)
        new_prob = float(p[sample.admissible.index(sample.action)])
        surr += surrogate_term(sample, new_prob, adv, opt.epsilon)
        if opt.beta_kl > 0 and ref is not None:
            q = ref.probabilities(sample.context_features, sample.admissible)
            kl += float(np.sum(p * np.log(p / q)))
    n = len(batch)
    return surr / n - opt.beta_kl * kl / n


def objective_gradient(
    params: PolicyParams, batch: Batch, opt: OptParams, ref: PolicyParams | None = None
) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    n = len(batch)
    for sample, adv in batch:
        adm = list(sample.admissible)
        p = params.probabilities(sample.context_features, adm)
        idx = adm.index(sample.action)
        ratio = p[idx] / sample.old_prob
        g_adm = np.zeros(len(adm))
        # the min picks the unclipped branch unless clipping strictly lowers it
        clipped = min(max(ratio, 1.0 - opt.epsilon), 1.0 + opt.epsilon)
        if ratio * adv <= clipped * adv:
            onehot = np.zeros(len(adm))
            onehot[idx] = 1.0
            g_adm += adv * ratio * (onehot - p)
        if opt.beta_kl > 0 and ref is not None:
            q = ref.probabilities(sample.context_features, adm)
            log_ratio = np.log(p / q)
            kl = float(np.sum(p * log_ratio))
            g_adm -= opt.beta_kl * p * (log_ratio - kl)
        if not np.any(g_adm):
            continue
        g_full = np.zeros(params.num_actions)
        g_full[adm] = g_adm / n
        for f in dict.fromkeys(sample.context_features):
            if f in grads:
                grads[f] += g_full
            else:
                grads[f] = g_full.copy()
    return grads


def policy_update(
    params: PolicyParams, batch: Batch, opt: OptParams, ref: PolicyParams | None = None
) -> PolicyParams:
    """One gradient-ascent step; returns new params and leaves ``params`` intact."""
    updated = params.copy()
    for f, g in objective_gradient(params, batch, opt, ref).items():
        updated.logits[f] = params.feature_logits(f) + opt.learning_rate * g
    return updated

