"""Multi-seed experiment plans: cells of scenario overrides times replications.

A plan document looks like::

    series: epsilon_sweep
    scenario: default          # preset name, or an inline scenario mapping
    replications: 20
    base_seed: 2024
    paired: true
    cells:
      - name: eps_0.05
        set: {engine.epsilon: 0.05}

With ``paired: true`` replication ``r`` of every cell runs on the same seed,
so cells are compared on identical populations, task streams and market
paths (a "seed family" per replication). With ``paired: false`` the cell name
also enters the seed, giving every (cell, replication) its own stream.
"""

from __future__ import annotations

import copy
import csv
import io
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .metrics import RunMetrics, correlations, mean_sd, run_metrics
from .model import to_plain
from .scenario import (
    ConfigError,
    apply_overrides,
    load_yaml,
    parse_scenario,
    read_document,
    read_preset,
    resolve_scenario_doc,
)
from .simulation import simulate

SERIES = ("duration_scaling", "agent_scaling", "epsilon_sweep", "theta_sweep",
          "exploration_ablation", "single")

RUN_COLUMNS = ("cell", "replication", "seed", "n_clients", "n_contractors", "n_agents",
               "duration_days", "epsilon", "theta_skill", *RunMetrics.names(), "error")

_INT_COLUMNS = {"replication", "seed", "n_clients", "n_contractors", "n_agents",
                "n_decisions"}
_STR_COLUMNS = {"cell", "error"}


@dataclass(frozen=True)
class Cell:
    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentPlan:
    series: str
    scenario: Mapping[str, Any]
    cells: tuple[Cell, ...]
    replications: int = 20
    base_seed: int = 0
    paired: bool = True
    name: str = ""

    def cell_doc(self, cell: Cell) -> dict:
        return apply_overrides(self.scenario, cell.overrides)

    def seeds(self) -> list[tuple[Cell, int, int]]:
        return [(c, r, derive_seed(self.base_seed, c.name, r, self.paired))
                for c in self.cells for r in range(self.replications)]


def derive_seed(base_seed: int, cell: str, replication: int, paired: bool) -> int:
    """64-bit run seed from the plan seed, the cell name (unless paired) and the replication."""
    entropy = [base_seed, replication] if paired else [
        base_seed, zlib.crc32(cell.encode("utf-8")), replication]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


# --- plan documents ---------------------------------------------------------------


def plan_names() -> list[str]:
    root = resources.files("taskmarket") / "plans"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_plan_preset(name: str) -> dict:
    path = resources.files("taskmarket") / "plans" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError([f"plan: unknown plan {name!r} (known: {', '.join(plan_names())})"])
    return load_yaml(path.read_text())


def is_plan_doc(doc: Mapping[str, Any]) -> bool:
    return "cells" in doc or "series" in doc


def parse_plan(doc: Mapping[str, Any]) -> ExperimentPlan:
    """Validate a plan document, including every cell's resolved scenario."""
    errors: list[str] = []
    known = {"series", "scenario", "cells", "replications", "base_seed", "paired", "name"}
    for key in sorted(set(doc) - known):
        errors.append(f"plan.{key}: unknown field")

    series = doc.get("series")
    if series not in SERIES:
        errors.append(f"plan.series: expected one of {', '.join(SERIES)}, got {series!r}")
    reps = doc.get("replications", 20)
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        errors.append(f"plan.replications: expected an integer >= 1, got {reps!r}")
    base_seed = doc.get("base_seed", 0)
    if isinstance(base_seed, bool) or not isinstance(base_seed, int) or base_seed < 0:
        errors.append(f"plan.base_seed: expected a non-negative integer, got {base_seed!r}")
    paired = doc.get("paired", True)
    if not isinstance(paired, bool):
        errors.append(f"plan.paired: expected true or false, got {paired!r}")

    scenario_src = doc.get("scenario", "default")
    scenario: dict = {}
    try:
        if isinstance(scenario_src, str):
            scenario = resolve_scenario_doc(read_preset(scenario_src))
        elif isinstance(scenario_src, Mapping):
            scenario = resolve_scenario_doc(scenario_src)
        else:
            errors.append("plan.scenario: expected a preset name or a mapping")
    except ConfigError as exc:
        errors.extend(f"plan.scenario: {v}" for v in exc.violations)

    cells: list[Cell] = []
    raw_cells = doc.get("cells")
    if not isinstance(raw_cells, list) or not raw_cells:
        errors.append("plan.cells: expected a non-empty list")
        raw_cells = []
    seen: set[str] = set()
    for i, raw in enumerate(raw_cells):
        p = f"plan.cells[{i}]"
        if not isinstance(raw, Mapping) or not isinstance(raw.get("name"), str):
            errors.append(f"{p}: expected a mapping with a string 'name'")
            continue
        extra = set(raw) - {"name", "set"}
        if extra:
            errors.append(f"{p}: unknown field(s) {', '.join(sorted(extra))}")
        name = raw["name"]
        if name in seen:
            errors.append(f"{p}.name: duplicate cell name {name!r}")
        seen.add(name)
        overrides = raw.get("set") or {}
        if not isinstance(overrides, Mapping):
            errors.append(f"{p}.set: expected a mapping of dotted keys")
            continue
        cells.append(Cell(name, dict(overrides)))

    if scenario:
        for c in cells:
            try:
                parse_scenario(apply_overrides(scenario, c.overrides))
            except ConfigError as exc:
                errors.extend(f"cell {c.name}: {v}" for v in exc.violations)
    if errors:
        raise ConfigError(errors)

    plan = ExperimentPlan(series=series, scenario=scenario, cells=tuple(cells),
                          replications=reps, base_seed=base_seed, paired=paired,
                          name=str(doc.get("name", "")))
    if not paired:
        seeds = [s for _, _, s in plan.seeds()]
        if len(set(seeds)) != len(seeds):
            raise ConfigError(["plan: derived seeds collide; rename a cell or change base_seed"])
    return plan


def load_plan(source: Union[str, Path, Mapping[str, Any], None] = None, *,
              preset: Optional[str] = None,
              overrides: Optional[Mapping[str, Any]] = None) -> ExperimentPlan:
    """Load a plan from a file, mapping or named plan; ``overrides`` apply to the base scenario."""
    if preset is not None:
        doc = read_plan_preset(preset)
    elif isinstance(source, Mapping):
        doc = dict(source)
    else:
        doc = read_document(source)
    if overrides:
        doc = copy.deepcopy(doc)
        scen = doc.get("scenario", "default")
        base = read_preset(scen) if isinstance(scen, str) else scen
        doc["scenario"] = apply_overrides(resolve_scenario_doc(base), overrides)
    return parse_plan(doc)


# --- running ----------------------------------------------------------------------


def run_one(scenario_doc: Mapping[str, Any], cell: str, replication: int, seed: int,
            with_decisions: bool = False) -> dict:
    """Simulate one (cell, replication) and return its table row; errors become a row too.

    With ``with_decisions`` the row also carries ``"decisions"``, the run's
    decision records as plain dicts.
    """
    row: dict[str, Any] = {k: None for k in RUN_COLUMNS}
    row.update(cell=cell, replication=replication, seed=seed, error="")
    try:
        sc = parse_scenario(scenario_doc)
        row.update(n_clients=sc.n_clients, n_contractors=sc.n_contractors,
                   n_agents=sc.n_clients + sc.n_contractors,
                   duration_days=float(sc.duration_days), epsilon=sc.engine.epsilon,
                   theta_skill=sc.engine.theta_skill)
        result = simulate(sc, seed, keep_decisions=with_decisions)
        metrics = run_metrics(result.ledger, sc.duration_hours)
        row.update({k: getattr(metrics, k) for k in RunMetrics.names()})
        if with_decisions:
            row["decisions"] = [to_plain(d) for d in result.decisions]
    except Exception as exc:  # recorded per cell; the plan carries on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _run_job(job: tuple) -> dict:
    return run_one(*job)


def run_plan(plan: ExperimentPlan, jobs: int = 1,
             progress: Optional[Callable[[dict], None]] = None,
             with_decisions: bool = False) -> list[dict]:
    """All (cell x replication) rows in plan order, whatever ``jobs`` is."""
    work = [(plan.cell_doc(c), c.name, r, s, with_decisions) for c, r, s in plan.seeds()]
    rows: list[dict] = []
    if jobs <= 1:
        for job in work:
            rows.append(_run_job(job))
            if progress:
                progress(rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for row in pool.map(_run_job, work):
            rows.append(row)
            if progress:
                progress(row)
    return rows


# --- summaries --------------------------------------------------------------------


def _fmt_pm(mean: Optional[float], sd: Optional[float]) -> Optional[str]:
    if mean is None:
        return None
    # adding 0.0 after rounding turns a tiny negative into 0.0 rather than -0.0
    return f"{round(mean, 1) + 0.0:.1f} ± {sd:.1f}"


def summarize(rows: Sequence[dict], cells: Optional[Sequence[str]] = None) -> dict:
    """Per-cell mean and sample sd of every metric, plus the cross-run correlation block."""
    if not rows:
        raise ValueError("summarize needs at least one row")
    order = list(cells) if cells is not None else list(dict.fromkeys(r["cell"] for r in rows))
    ok = [r for r in rows if not r.get("error")]
    out_cells = []
    for name in order:
        mine = [r for r in rows if r["cell"] == name]
        good = [r for r in mine if not r.get("error")]
        stats = {}
        for m in RunMetrics.names():
            mean, sd = mean_sd([r[m] for r in good])
            stats[m] = {"mean": mean, "sd": sd}
        first = good[0] if good else (mine[0] if mine else {})
        out_cells.append({
            "cell": name,
            "runs": len(good),
            "errors": [r["error"] for r in mine if r.get("error")],
            "n_clients": first.get("n_clients"),
            "n_contractors": first.get("n_contractors"),
            "duration_days": first.get("duration_days"),
            "epsilon": first.get("epsilon"),
            "theta_skill": first.get("theta_skill"),
            "cost_reduction": _fmt_pm(stats["cost_reduction_pct"]["mean"],
                                      stats["cost_reduction_pct"]["sd"]),
            "time_savings": _fmt_pm(stats["time_savings_pct"]["mean"],
                                    stats["time_savings_pct"]["sd"]),
            "metrics": stats,
        })
    corr: dict[str, Any]
    if len(ok) >= 3:
        corr = correlations(ok)
    else:
        corr = {"r_outsourcing_costreduction": None, "r_agents_costreduction": None}
    overall = {m: dict(zip(("mean", "sd"), mean_sd([r[m] for r in ok])))
               for m in RunMetrics.names()}
    return {"cells": out_cells, "overall": overall, "correlations": corr,
            "runs": len(rows), "failed_runs": len(rows) - len(ok)}


CELL_COLUMNS = ("cell", "runs", "n_errors", "n_clients", "n_contractors", "duration_days",
                "epsilon", "theta_skill", "cost_reduction", "time_savings",
                *(f"{m}_{s}" for m in RunMetrics.names() for s in ("mean", "sd")))


def cell_rows(summary: Mapping[str, Any]) -> list[dict]:
    out = []
    for c in summary["cells"]:
        row = {k: c.get(k) for k in CELL_COLUMNS if k in c}
        row["n_errors"] = len(c["errors"])
        for m, st in c["metrics"].items():
            row[f"{m}_mean"] = st["mean"]
            row[f"{m}_sd"] = st["sd"]
        out.append(row)
    return out


# --- CSV round trip ---------------------------------------------------------------


def _cell_text(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if not math.isfinite(v):
            return ""
        return repr(v)
    return str(v)


def to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell_text(r.get(c)) for c in columns])
    return buf.getvalue()


def read_runs_csv(text: str) -> list[dict]:
    """Inverse of ``to_csv(rows, RUN_COLUMNS)``."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for raw in reader:
        row: dict[str, Any] = {}
        for k in RUN_COLUMNS:
            v = raw.get(k, "")
            if k in _STR_COLUMNS:
                row[k] = v
            elif v == "":
                row[k] = None
            elif k in _INT_COLUMNS:
                row[k] = int(v)
            else:
                row[k] = float(v)
        rows.append(row)
    return rows
