"""Command-line entry point: ``skillbank {train,eval,inspect-bank,prune,analyze}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import compare_runs, group_series, load_run
from .bank import SkillBank, SkillKind, load_bank, save_bank, skills_by_utility
from .config import ABLATIONS, Config, load_config
from .errors import SkillBankError
from .management import PruneParams, prune_pool
from .policy import PolicyParams
from .skillworld import load_tasks
from .trainer import evaluate, run


def _cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else Config()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.steps is not None:
        changes["total_steps"] = args.steps
    config = config.replace(**changes)
    if args.ablation:
        config = config.with_ablations(*args.ablation)
    config.validate()
    report = run(config, out_dir=args.out)
    print(json.dumps(report.summary, indent=2))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else None
    policy = PolicyParams.from_json(Path(args.policy).read_text())
    if args.bank:
        bank = load_bank(Path(args.bank).read_bytes())
    elif args.no_skills:
        bank = SkillBank()
    else:
        raise SkillBankError("--bank is required unless --no-skills is given")
    tasks = load_tasks(Path(args.tasks).read_bytes())
    success = evaluate(policy, bank, tasks, config, use_skills=not args.no_skills)
    print(json.dumps({"success": success, "tasks": len(tasks), "use_skills": not args.no_skills}))
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    bank = load_bank(Path(args.bank).read_bytes())
    kinds = [SkillKind(args.kind)] if args.kind else [SkillKind.TASK, SkillKind.STEP]
    for kind in kinds:
        pool = bank.pool(kind)
        print(f"[{kind.value} pool] {len(pool)} skills, capacity {pool.capacity}, N_r {pool.total_retrievals}")
        for s in skills_by_utility(pool)[: args.limit]:
            where = s.key.task_text if s.key.observation_text is None else s.key.observation_text
            print(f"  {s.id:>6}  u={s.utility:+.4f}  n={s.retrieval_count:<5} t0={s.created_step:<4} {where} :: {s.body}")
    return 0


def _cmd_prune(args: argparse.Namespace) -> int:
    path = Path(args.bank)
    bank = load_bank(path.read_bytes())
    current = args.current_step
    if current is None:
        current = max((s.created_step for s in bank), default=0)
    kinds = [SkillKind(args.kind)] if args.kind else [SkillKind.TASK, SkillKind.STEP]
    reports = []
    for kind in kinds:
        params = PruneParams(args.capacity, args.eta, args.protection_window)
        reports.append(prune_pool(bank.pool(kind), params, current).to_dict())
    out = Path(args.out) if args.out else path
    out.write_bytes(save_bank(bank))
    print(json.dumps({"current_step": current, "written": str(out), "reports": reports}, indent=2))
    return 0


def _run_dirs(paths: list[str]) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if (p / "metrics.jsonl").exists():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(d.parent for d in p.glob("*/metrics.jsonl")))
        else:
            raise SkillBankError(f"no metrics.jsonl under {p}")
    if not found:
        raise SkillBankError("no run directories found")
    return found


def _cmd_analyze(args: argparse.Namespace) -> int:
    runs = [load_run(d) for d in _run_dirs(args.runs)]
    comparison = compare_runs(runs, group_by=args.group_by)
    table = comparison.table()
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.txt").write_text(table + "\n")
        (out / "comparison.json").write_text(json.dumps(comparison.to_dict(), indent=2))
        series = {
            name: group_series(runs, name)
            for name in ("y_skill", "y_base", "mean_bank_utility", "mean_retrieved_utility", "step_pool_size", "task_pool_size")
        }
        series["validation"] = {f"{r.label}/seed{r.seed}": r.validation for r in runs}
        (out / "series.json").write_text(json.dumps(series))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillbank", description="Dual-granularity skill bank on SkillWorld.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train policy and skill bank")
    p.add_argument("--config", help="JSON config file (keys are Config field names)")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="override total_steps")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ablation", nargs="+", choices=sorted(ABLATIONS), default=[])
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="greedy success of a saved policy on a task set")
    p.add_argument("--bank")
    p.add_argument("--policy", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--config")
    p.add_argument("--no-skills", action="store_true", help="evaluate without injecting skills")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("inspect-bank", help="list skills sorted by utility")
    p.add_argument("--bank", required=True)
    p.add_argument("--kind", choices=[k.value for k in SkillKind])
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("prune", help="apply utility-based eviction to a saved bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--capacity", type=int, required=True)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--protection-window", type=int, default=0)
    p.add_argument("--current-step", type=int, help="defaults to the newest skill's creation step")
    p.add_argument("--kind", choices=[k.value for k in SkillKind], help="prune one pool only")
    p.add_argument("--out", help="write here instead of overwriting --bank")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("analyze", help="seed-averaged comparison of training runs")
    p.add_argument("--runs", nargs="+", required=True, help="run directories, or parents of them")
    p.add_argument("--group-by", choices=["ablation", "none"], default="ablation")
    p.add_argument("--out", help="directory for comparison and series files")
    p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SkillBankError, OSError, ValueError) as exc:
        print(f"skillbank {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
