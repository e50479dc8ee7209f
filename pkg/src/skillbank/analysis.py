"""Offline analysis of metrics streams: moving-average peaks and seed-averaged comparisons."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bank import SkillBank
from .errors import MalformedRecord
from .policy import PolicyParams

WINDOW = 10
TAIL = 50

SERIES = (
    "y_skill",
    "y_base",
    "delta",
    "train_success",
    "mean_bank_utility",
    "mean_retrieved_utility",
    "task_pool_size",
    "step_pool_size",
)


def _as_float(value) -> float:
    return math.nan if value is None else float(value)


def moving_average(values: Sequence[float], window: int = WINDOW) -> np.ndarray:
    """Trailing means over full windows only; entry i covers values[i : i + window].

    A window touching a missing (NaN) value is NaN itself.
    """
    x = np.asarray(values, dtype=float)
    if len(x) < window:
        return np.empty(0)
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="valid")


def _peak(values: np.ndarray) -> float | None:
    finite = values[np.isfinite(values)]
    return float(finite.max()) if finite.size else None


def _tail_mean(values: np.ndarray, n: int = TAIL) -> float | None:
    tail = values[-n:]
    finite = tail[np.isfinite(tail)]
    return float(finite.mean()) if finite.size else None


@dataclass
class RunSummary:
    label: str
    seed: int | None
    steps: int
    series: dict[str, np.ndarray]
    moving: dict[str, np.ndarray]
    validation: list[tuple[int, float]]
    short: bool = False
    peaks: dict[str, float | None] = field(default_factory=dict)
    tails: dict[str, float | None] = field(default_factory=dict)

    @property
    def best_validation(self) -> float | None:
        return max((v for _, v in self.validation), default=None)

    def scalars(self) -> dict[str, float | None]:
        """The per-run numbers that comparisons average over seeds."""
        out: dict[str, float | None] = {"best_validation": self.best_validation}
        for name in ("y_skill", "y_base", "train_success"):
            out[f"peak_{name}"] = self.peaks.get(name)
        for name in ("delta", "mean_bank_utility", "mean_retrieved_utility"):
            out[f"tail_{name}"] = self.tails.get(name)
        for name in ("task_pool_size", "step_pool_size"):
            s = self.series[name]
            out[f"final_{name}"] = float(s[-1]) if len(s) and np.isfinite(s[-1]) else None
        return out

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {
            "label": self.label,
            "seed": self.seed,
            "steps": self.steps,
            "short": self.short,
            "series": {k: clean(v) for k, v in self.series.items()},
            "moving_average": {k: clean(v) for k, v in self.moving.items()},
            "validation": [[s, v] for s, v in self.validation],
            "scalars": self.scalars(),
        }


def summarize(records: Iterable[Mapping], label: str = "full", seed: int | None = None) -> RunSummary:
    """Build a :class:`RunSummary` from per-step metric records.

    Records must be mappings with consecutive ``step`` values starting at 1.
    Peaks use the 10-step moving average; streams shorter than one window
    report the raw maximum and set ``short``.
    """
    rows = []
    for i, rec in enumerate(records, start=1):
        if not isinstance(rec, Mapping) or "step" not in rec:
            raise MalformedRecord(f"record {i} is not a metrics object with a step")
        if rec["step"] != i:
            raise MalformedRecord(f"expected step {i}, found {rec['step']!r}")
        rows.append(rec)
    try:
        series = {name: np.array([_as_float(r.get(name)) for r in rows]) for name in SERIES}
        validation = [(int(r["step"]), float(r["validation"])) for r in rows if r.get("validation") is not None]
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"non-numeric metric: {exc}") from exc
    short = len(rows) < WINDOW
    moving = {name: moving_average(values) for name, values in series.items()}
    peaks = {name: _peak(series[name] if short else moving[name]) for name in SERIES}
    tails = {name: _tail_mean(series[name]) for name in SERIES}
    return RunSummary(label, seed, len(rows), series, moving, validation, short, peaks, tails)


def read_metrics(path: str | Path) -> list[dict]:
    records = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{path}:{n}: {exc}") from exc
    return records


def load_run(run_dir: str | Path) -> RunSummary:
    """Summarize a directory written by ``skillbank train``."""
    run_dir = Path(run_dir)
    label, seed = "full", None
    config_path = run_dir / "config.json"
    if config_path.exists():
        config = json.loads(config_path.read_text())
        label = "+".join(config.get("ablations") or []) or "full"
        seed = config.get("seed")
    return summarize(read_metrics(run_dir / "metrics.jsonl"), label=label, seed=seed)


@dataclass
class Comparison:
    groups: dict[str, dict[str, dict[str, float | None]]]
    counts: dict[str, int]

    def to_dict(self) -> dict:
        return {"groups": self.groups, "counts": self.counts}

    def table(self) -> str:
        metrics = sorted({m for g in self.groups.values() for m in g})
        names = list(self.groups)
        width = max([len("metric")] + [len(m) for m in metrics])
        header = f"{'metric':<{width}}  " + "  ".join(f"{n + f' (n={self.counts[n]})':>22}" for n in names)
        lines = [header, "-" * len(header)]
        for m in metrics:
            cells = []
            for n in names:
                stat = self.groups[n].get(m)
                if stat is None or stat["mean"] is None:
                    cells.append(f"{'-':>22}")
                else:
                    cells.append(f"{stat['mean']:>13.4f} ± {stat['std']:<6.4f}")
            lines.append(f"{m:<{width}}  " + "  ".join(cells))
        return "\n".join(lines)


def compare_runs(runs: Sequence[RunSummary], group_by: str = "ablation") -> Comparison:
    """Seed-averaged mean and population std of every scalar, per group.

    ``group_by="ablation"`` groups by run label; ``"none"`` pools everything.
    """
    if group_by not in ("ablation", "none"):
        raise ValueError("group_by must be 'ablation' or 'none'")
    buckets: dict[str, list[RunSummary]] = {}
    for run in runs:
        key = run.label if group_by == "ablation" else "all"
        buckets.setdefault(key, []).append(run)
    groups = {}
    for key, members in buckets.items():
        stats = {}
        names = {m for r in members for m in r.scalars()}
        for m in sorted(names):
            values = [r.scalars().get(m) for r in members]
            # sorted so the result does not depend on run order, bit for bit
            values = sorted(v for v in values if v is not None)
            if values:
                stats[m] = {"mean": float(np.mean(values)), "std": float(np.std(values)), "n": len(values)}
            else:
                stats[m] = {"mean": None, "std": None, "n": 0}
        groups[key] = stats
    return Comparison(groups, {k: len(v) for k, v in buckets.items()})


def group_series(runs: Sequence[RunSummary], name: str) -> dict[str, list[float | None]]:
    """Seed-averaged moving-average curve of one series per label, for external plotting."""
    out: dict[str, list[float | None]] = {}
    by_label: dict[str, list[np.ndarray]] = {}
    for run in runs:
        by_label.setdefault(run.label, []).append(run.moving[name])
    for label, curves in by_label.items():
        n = min(len(c) for c in curves)
        if n == 0:
            out[label] = []
            continue
        stacked = np.stack([c[:n] for c in curves])
        with warnings.catch_warnings():
            # columns that are missing in every run stay NaN
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(stacked, axis=0)
        out[label] = [None if not np.isfinite(v) else float(v) for v in mean]
    return out


def transfer_matrix(
    policies: Mapping[str, PolicyParams],
    banks: Mapping[str, SkillBank],
    tasks: Sequence,
    config=None,
) -> dict[str, dict[str, float]]:
    """Greedy success of every policy with every bank, plus a ``"no skills"`` column."""
    from .trainer import evaluate

    matrix: dict[str, dict[str, float]] = {}
    for p_name, policy in policies.items():
        row = {b_name: evaluate(policy, bank.clone(), tasks, config) for b_name, bank in banks.items()}
        any_bank = next(iter(banks.values()), None) or SkillBank()
        row["no skills"] = evaluate(policy, any_bank.clone(), tasks, config, use_skills=False)
        matrix[p_name] = row
    return matrix
