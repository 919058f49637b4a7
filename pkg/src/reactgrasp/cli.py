"""Command-line front end: ``run``, ``bench`` and ``table1``.

Exit codes: 0 success, 2 episode failure (or benchmark over budget), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .controller import PLANNERS
from .geometry import TARGET
from .kinematics import ConfigurationError
from .sim import evaluate_trace, load_scenario, run_scenario, summary_to_json

log = logging.getLogger("reactgrasp")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
OBJECT_LABELS = {"box": "Box", "bowl": "Bowl", "dish": "Dish", "mug": "Mug", "wine_glass": "WineGlass"}


def shipped(name: str) -> Path:
    """Path of a scenario file or directory shipped with the package."""
    return Path(str(resources.files("reactgrasp") / "scenarios" / name))


def parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = val.strip()
    return out


def _load(path, overrides, seed, deterministic, extra=None):
    sc = load_scenario(path, overrides, seed)
    sim_vals = dict(extra or {})
    if deterministic is not None:
        sim_vals["deterministic"] = deterministic
    if sim_vals:
        sc = replace(sc, sim=replace(sc.sim, **sim_vals))
    return sc


def run_one(path, planner="ours", overrides=None, seed=None, deterministic=None, out_dir=None, prefix=None):
    """Run one episode; optionally write its trace. Returns the summary dict."""
    sc = _load(path, overrides, seed, deterministic)
    trace = run_scenario(sc, planner)
    summary = evaluate_trace(trace)
    summary["scenario"] = str(path)
    target = next(o for o in sc.scene.objects if o.obj.role == TARGET)
    summary["object"] = target.kind
    if out_dir is not None:
        prefix = prefix or f"{sc.scene.name}_{planner}_s{sc.sim.seed}"
        trace.write(out_dir, prefix)
        Path(out_dir, f"{prefix}_summary.json").write_text(summary_to_json(summary))
    return summary


def _star_run(args):
    return run_one(*args)


def _map(jobs, items):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_star_run, items))
    return [_star_run(it) for it in items]


def _brief(s: dict) -> str:
    return (f"{s['scene']} [{s['planner']}, seed {s['seed']}]: {s['terminal']} at {s['time']:.2f} s, "
            f"error {s['terminal_error'] * 100:.2f} cm, min clearance "
            f"{min(s['min_gamma'], s['min_target_distance'], s['min_obstacle_distance']) * 100:.2f} cm, "
            f"tick p95 {s['tick_p95'] * 1e3:.1f} ms")


# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    if args.repetitions < 1:
        raise ConfigurationError("--repetitions must be >= 1")
    path = Path(args.scenario)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    overrides = parse_sets(args.set)
    base_seed = args.seed if args.seed is not None else load_scenario(path, overrides).sim.seed
    out = Path(args.out) if args.out else None
    items = [(path, args.planner, overrides, base_seed + r, args.deterministic, out) for r in range(args.repetitions)]
    summaries = _map(args.jobs, items)
    for s in summaries:
        print(_brief(s))
    if out is not None:
        (out / "summary.json").write_text(summary_to_json(summaries if len(summaries) > 1 else summaries[0]))
    return EXIT_OK if all(s["success"] for s in summaries) else EXIT_FAIL


def bench(path, planner="ours", overrides=None, seed=None, deterministic=False, min_ticks=1000) -> dict:
    """Planning-tick wall times over at least ``min_ticks`` ticks.

    Episodes do not stop at the close trigger; they run to their duration and
    are repeated with increasing seeds until enough ticks are collected.
    """
    walls, overruns, episodes = [], 0, 0
    collisions = 0
    sc0 = _load(path, overrides, seed, deterministic)
    seed0 = sc0.sim.seed
    while len(walls) < min_ticks:
        sc = _load(path, overrides, seed0 + episodes, deterministic, {"stop_on_success": False})
        trace = run_scenario(sc, planner)
        s = evaluate_trace(trace)
        walls += [t["wall"] for t in trace.ticks]
        overruns += s["overruns"]
        collisions += int(s["collision"])
        episodes += 1
    w = np.asarray(walls)
    return {
        "scenario": str(path), "scene": sc0.scene.name, "planner": planner,
        "mode": "deterministic" if sc0.sim.deterministic else "realtime",
        "episodes": episodes, "ticks": int(w.size),
        "objects": len(sc0.scene.objects),
        "mean": float(w.mean()), "p50": float(np.percentile(w, 50)), "p95": float(np.percentile(w, 95)),
        "max": float(w.max()), "rate_p95": float(1.0 / np.percentile(w, 95)),
        "overruns": overruns, "collisions": collisions,
    }


def cmd_bench(args) -> int:
    path = Path(args.scenario) if args.scenario else shipped("bench.json")
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    # real-time two-thread mode unless --deterministic is given
    det = bool(args.deterministic)
    report = bench(path, args.planner, parse_sets(args.set), args.seed, det, args.ticks)
    report["budget"] = args.budget
    text = json.dumps(report, indent=1)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "bench.json").write_text(text + "\n")
    return EXIT_OK if report["p95"] < args.budget else EXIT_FAIL


def success_table(summaries, planners) -> tuple[list[str], list[list[str]]]:
    kinds = [k for k in OBJECT_LABELS if any(s["object"] == k for s in summaries)]
    kinds += sorted({s["object"] for s in summaries} - set(kinds))
    header = ["Planner"] + [OBJECT_LABELS.get(k, k) for k in kinds]
    rows = []
    for p in planners:
        row = [p]
        for k in kinds:
            ok = [s["success"] for s in summaries if s["planner"] == p and s["object"] == k]
            row.append(f"{100.0 * sum(ok) / len(ok):.1f}% ({sum(ok)}/{len(ok)})" if ok else "-")
        rows.append(row)
    return header, rows


def markdown(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def cmd_table1(args) -> int:
    suite = Path(args.suite) if args.suite else shipped("suite")
    files = sorted(suite.glob("*.json")) if suite.is_dir() else []
    if not files:
        raise FileNotFoundError(f"no scenario files in {suite}")
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    for p in planners:
        if p not in PLANNERS:
            raise ConfigurationError(f"unknown planner {p!r}")
    overrides = parse_sets(args.set)
    out = Path(args.out) if args.out else None
    items = [(f, p, overrides, args.seed, args.deterministic, out / "traces" if out else None)
             for p in planners for f in files]
    summaries = _map(args.jobs, items)
    for s in summaries:
        print(_brief(s))
    header, rows = success_table(summaries, planners)
    table = markdown(header, rows)
    print()
    print(table)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "table1.md").write_text(table + "\n")
        with open(out / "table1.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        (out / "summaries.json").write_text(summary_to_json(summaries))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reactgrasp", description="Reactive grasping simulator and benchmarks")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, planner=True):
        if planner:
            p.add_argument("--planner", choices=PLANNERS, default="ours")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="parameter override, e.g. fields.v_const=0.2 or sim.duration=10 (repeatable)")
        p.add_argument("--seed", type=int, default=None)
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--deterministic", dest="deterministic", action="store_true", default=None,
                          help="single-thread loop, planner every control_rate/planning_rate steps")
        mode.add_argument("--realtime", dest="deterministic", action="store_false",
                          help="two-thread wall-clock loop")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    common(p)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="planning-tick timing report")
    p.add_argument("scenario", nargs="?", default=None, help="defaults to the shipped bowl + 2 obstacles scene")
    common(p)
    p.add_argument("--ticks", type=int, default=1000)
    p.add_argument("--budget", type=float, default=0.02, help="p95 tick budget in seconds")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("table1", help="success-rate table over the grasp suite")
    p.add_argument("suite", nargs="?", default=None, help="directory of scenario files (default: shipped suite)")
    common(p, planner=False)
    p.add_argument("--planners", default="ours,linear")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_table1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
