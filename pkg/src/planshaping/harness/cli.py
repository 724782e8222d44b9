"""Command line: plan, train, validate and reproduce."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .. import strips
from ..guidance import BackendError, GuidePlan
from .config import BACKENDS, SHAPING_MODES, typed_value, load_config
from .runner import REPRODUCE_TRAIN, SUITES, ModeMismatch, build_plan, metrics_line, reproduce, run_training

EXIT_USAGE = 2
EXIT_TRANSPORT = 3


def _seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be integers: {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seeds", type=_seeds, help="space or comma separated seed list")
    p.add_argument("--out", help="output directory")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--budget-steps", type=int, dest="budget_steps")
    p.add_argument("--budget-backprompts", type=int, dest="budget_backprompts")
    p.add_argument("--shaping", choices=SHAPING_MODES)
    p.add_argument("--slip", type=float)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planshaping", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="build a guide plan and its transcript")
    p.add_argument("config_path", nargs="?", metavar="config")
    p.add_argument("--config", dest="config_flag")
    _common(p)

    t = sub.add_parser("train", help="train Q-learning agents shaped by a plan")
    t.add_argument("config_path", nargs="?", metavar="config")
    t.add_argument("--config", dest="config_flag")
    t.add_argument("--plan", help="plan JSON written by `plan`")
    _common(t)

    v = sub.add_parser("validate", help="check a plan against a PDDL domain and problem")
    v.add_argument("domain")
    v.add_argument("problem")
    v.add_argument("plan")

    r = sub.add_parser("reproduce", help="vanilla, partial and complete plan runs for a suite")
    r.add_argument("suite", choices=sorted(SUITES))
    r.add_argument("--config", dest="config_flag", help="optional INI whose [train] section overrides the suite budget")
    r.add_argument("--no-figures", action="store_true")
    _common(r)
    return parser


def _overrides(args) -> dict:
    keys = ("seeds", "out", "backend", "budget_steps", "budget_backprompts", "shaping", "slip")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _config(args, parser):
    path = args.config_path or args.config_flag
    if not path:
        parser.error("a config file is required")
    try:
        return load_config(path, _overrides(args))
    except FileNotFoundError as exc:
        parser.error(str(exc))
    except (ValueError, KeyError) as exc:
        parser.error(f"bad config: {exc}")


def cmd_plan(args, parser) -> int:
    config = _config(args, parser)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        plan, transcript = build_plan(config)
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    (out / "plan.json").write_text(plan.to_json(), encoding="utf-8")
    transcript.write(out / "transcript.jsonl")
    (out / "config.ini").write_text(config.to_ini(), encoding="utf-8")
    line = metrics_line(plan)
    (out / "metrics.txt").write_text(line + "\n", encoding="utf-8")
    print(line)
    return 0


def cmd_train(args, parser) -> int:
    config = _config(args, parser)
    plan = None
    if args.plan:
        try:
            plan = GuidePlan.from_json(Path(args.plan).read_text(encoding="utf-8"))
        except (OSError, ValueError, KeyError) as exc:
            parser.error(f"cannot read plan: {exc}")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        doc = run_training(config, plan, out, args.workers)
    except ModeMismatch as exc:
        parser.error(str(exc))
    for run in doc["runs"]:
        print(f"{run['env']} {run['condition']} auc_median={run.get('auc_median')!r} failed={run['failed_seeds']}")
    return 0 if any(len(r["failed_seeds"]) < len(config.seeds) for r in doc["runs"]) else 1


def _read_plan(path: str, problem: strips.StripsProblem) -> list:
    from ..guidance import parse_response

    text = Path(path).read_text(encoding="utf-8")
    actions = problem.ground_actions()
    if text.lstrip().startswith("{"):
        names = json.loads(text)["actions"]
        return [parse_response(n, "hierarchical", actions, expect_one=True) for n in names]
    lines = [ln.split(";", 1)[0].strip() for ln in text.splitlines()]
    return [parse_response(ln, "hierarchical", actions, expect_one=True) for ln in lines if ln]


def cmd_validate(args, parser) -> int:
    try:
        domain = strips.parse_domain(Path(args.domain).read_text(encoding="utf-8"))
        problem = strips.parse_problem(Path(args.problem).read_text(encoding="utf-8"), domain)
        plan = _read_plan(args.plan, problem)
    except (OSError, ValueError, KeyError) as exc:
        parser.error(str(exc))
    result = strips.validate_plan(problem, plan)
    print(f"valid_prefix={result.valid_prefix_len} of {len(plan)} goal_reached={str(result.goal_reached).lower()}")
    if result.failure is not None:
        f = result.failure
        print(f"failure at step {f.step}: {f.reason} {f.literal}")
    return 0 if result.goal_reached else 1


def cmd_reproduce(args, parser) -> int:
    train = None
    if args.config_flag:
        import configparser

        cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
        if not cp.read(args.config_flag):
            parser.error(f"config file not found: {args.config_flag}")
        if cp.has_section("train"):
            kw = {}
            for k, v in cp["train"].items():
                if not hasattr(REPRODUCE_TRAIN, k) or k == "seed":
                    parser.error(f"unknown train key {k!r}")
                kw[k] = typed_value(v, getattr(REPRODUCE_TRAIN, k))
            train = dataclasses.replace(REPRODUCE_TRAIN, **kw)
    out = Path(args.out or f"runs/{args.suite}")
    seeds = args.seeds or (0, 1, 2, 3, 4)
    doc = reproduce(args.suite, out, seeds, train, args.slip, args.workers, figures=not args.no_figures)
    print((out / "report.txt").read_text(encoding="utf-8"), end="")
    return 1 if doc["all_failed"] else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"plan": cmd_plan, "train": cmd_train, "validate": cmd_validate, "reproduce": cmd_reproduce}
    return handler[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
