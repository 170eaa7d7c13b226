"""Command-line front end: ``taskmarket run | experiment | validate``.

Exit codes: 0 success, 1 runtime failure, 2 invalid input. Output files carry
no timestamps or host details, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .experiments import (
    CELL_COLUMNS,
    RUN_COLUMNS,
    cell_rows,
    is_plan_doc,
    load_plan,
    parse_plan,
    plan_names,
    read_plan_preset,
    run_one,
    run_plan,
    summarize,
    to_csv,
)
from .model import dumps_line, to_plain
from .scenario import (
    ConfigError,
    load_scenario,
    parse_assignment,
    parse_scenario,
    preset_names,
    read_document,
    read_preset,
    scenario_to_doc,
)

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _overrides(assignments: Optional[Sequence[str]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for text in assignments or ():
        key, value = parse_assignment(text)
        out[key] = value
    return out


def _dump_json(obj: Any) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _pct(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.1f}%"


# --- subcommands --------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    sc = load_scenario(args.scenario, preset=args.preset, overrides=overrides)
    config = scenario_to_doc(sc)
    row = run_one(config, "run", 0, sc.seed, with_decisions=True)
    if row["error"]:
        print(f"run failed: {row['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    decisions = row.pop("decisions")
    out = Path(args.out)
    _write(out, "decisions.jsonl", "".join(dumps_line(d) + "\n" for d in decisions))
    _write(out, "runs.csv", to_csv([row], RUN_COLUMNS))
    summary = {
        "command": "run",
        "version": __version__,
        "seed": sc.seed,
        "config": config,
        "metrics": {k: row[k] for k in RUN_COLUMNS if k not in ("cell", "replication", "error")},
    }
    _write(out, "summary.json", _dump_json(summary))
    print(f"cost reduction {_pct(row['cost_reduction_pct'])}, "
          f"time savings {_pct(row['time_savings_pct'])}, "
          f"outsourcing {_pct(row['outsourcing_rate_pct'])}, "
          f"exploration {_pct(row['exploration_rate_pct'])} "
          f"over {row['n_decisions']} decisions -> {out}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    if args.plan is None and args.preset is None:
        raise ConfigError(["experiment: give a plan file or --preset NAME"])
    plan = load_plan(args.plan, preset=args.preset, overrides=_overrides(args.set))
    if args.seed is not None or args.replications is not None:
        from dataclasses import replace
        plan = replace(plan,
                       base_seed=plan.base_seed if args.seed is None else args.seed,
                       replications=plan.replications if args.replications is None
                       else args.replications)
        if plan.replications < 1:
            raise ConfigError(["--replications: expected an integer >= 1"])

    total = len(plan.cells) * plan.replications
    done = 0

    def progress(row: dict) -> None:
        nonlocal done
        done += 1
        if not args.quiet:
            status = "error" if row["error"] else _pct(row["cost_reduction_pct"])
            print(f"[{done}/{total}] {row['cell']} rep {row['replication']}: {status}",
                  file=sys.stderr)

    rows = run_plan(plan, jobs=args.jobs, progress=progress, with_decisions=args.decisions)
    out = Path(args.out)
    if args.decisions:
        lines = []
        for r in rows:
            for d in r.pop("decisions", []):
                lines.append(dumps_line({"cell": r["cell"], "replication": r["replication"], **d})
                             + "\n")
        _write(out, "decisions.jsonl", "".join(lines))
    summary = summarize(rows, [c.name for c in plan.cells])
    _write(out, "runs.csv", to_csv(rows, RUN_COLUMNS))
    _write(out, "cells.csv", to_csv(cell_rows(summary), CELL_COLUMNS))
    doc = {
        "command": "experiment",
        "version": __version__,
        "plan": {"name": plan.name, "series": plan.series, "replications": plan.replications,
                 "base_seed": plan.base_seed, "paired": plan.paired,
                 "cells": [{"name": c.name, "set": dict(c.overrides)} for c in plan.cells]},
        "scenario": scenario_to_doc(parse_scenario(plan.scenario)),
        "summary": summary,
    }
    _write(out, "summary.json", _dump_json(doc))
    for c in summary["cells"]:
        print(f"{c['cell']:>12}  cost reduction {c['cost_reduction'] or 'n/a':>13}  "
              f"time savings {c['time_savings'] or 'n/a':>13}  runs {c['runs']}"
              + (f"  errors {len(c['errors'])}" if c["errors"] else ""))
    corr = summary["correlations"]
    print(f"r(outsourcing, cost reduction) = {_fmt_r(corr['r_outsourcing_costreduction'])}, "
          f"r(agents, cost reduction) = {_fmt_r(corr['r_agents_costreduction'])}")
    return EXIT_RUNTIME if summary["failed_runs"] else EXIT_OK


def _fmt_r(r: Optional[float]) -> str:
    return "n/a" if r is None else f"{r:.3f}"


def cmd_validate(args: argparse.Namespace) -> int:
    if args.preset is not None:
        if args.preset in plan_names():
            doc = read_plan_preset(args.preset)
        else:
            doc = read_preset(args.preset)
    elif args.path is not None:
        doc = read_document(args.path)
    else:
        raise ConfigError(["validate: give a file or --preset NAME"])
    overrides = _overrides(args.set)
    if is_plan_doc(doc):
        plan = parse_plan(doc)
        if overrides:
            plan = load_plan(doc, overrides=overrides)
        print(f"ok: plan {plan.name or plan.series} with {len(plan.cells)} cells "
              f"x {plan.replications} replications")
    else:
        sc = load_scenario(doc, overrides=overrides)
        print(f"ok: scenario {sc.name} ({sc.n_clients} clients, {sc.n_contractors} "
              f"contractors, {sc.duration_days} days)")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taskmarket",
                                description="Outsourcing-market simulator and decision engine.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("scenario", nargs="?", help="scenario YAML file (default preset if omitted)")
    run.add_argument("--preset", help=f"built-in scenario ({', '.join(preset_names())})")
    run.add_argument("--seed", type=int, help="run seed (overrides the scenario's seed)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="dotted override, e.g. engine.epsilon=0.05; repeatable")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.set_defaults(func=cmd_run)

    exp = sub.add_parser("experiment", help="run a multi-seed experiment plan")
    exp.add_argument("plan", nargs="?", help="plan YAML file")
    exp.add_argument("--preset", help=f"built-in plan ({', '.join(plan_names())})")
    exp.add_argument("--seed", type=int, help="plan base seed (overrides the plan's)")
    exp.add_argument("--replications", type=int, help="replications per cell")
    exp.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override applied to the plan's base scenario; repeatable")
    exp.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    exp.add_argument("--decisions", action="store_true",
                     help="also write every decision of every run to decisions.jsonl")
    exp.add_argument("--quiet", action="store_true", help="no per-run progress on stderr")
    exp.add_argument("--out", default="out", help="output directory (default: out)")
    exp.set_defaults(func=cmd_experiment)

    val = sub.add_parser("validate", help="check a scenario or plan without running it")
    val.add_argument("path", nargs="?", help="scenario or plan YAML file")
    val.add_argument("--preset", help="built-in scenario or plan name")
    val.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override to check along with the document; repeatable")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
