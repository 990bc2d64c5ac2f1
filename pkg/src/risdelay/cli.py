"""Command-line entry point: ``risdelay <command> --config C --seed S --out DIR``."""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import assignment as asg
from . import io
from .config import Config, ConfigError, load_config
from .mathx import RandomStream
from .sim import POLICIES, gloss_sweep, period_traffic, run_comparison, validate_point

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3


def write_manifest(out: Path, command: str, args: argparse.Namespace, cfg: Config) -> None:
    io.write_json(out / "manifest.json", "manifest", {
        "command": command,
        "config_path": cfg.source,
        "config": cfg.raw,
        "seed": getattr(args, "seed", None),
        "output_dir": str(out),
        "artifact_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "options": {k: v for k, v in vars(args).items() if k not in ("func", "config", "out", "seed")},
    })


def cmd_validate_bound(args, cfg: Config, out: Path) -> int:
    setup = cfg.validation_setup
    if args.n_tti is not None:
        setup = replace(setup, n_tti=args.n_tti)
    root = RandomStream(args.seed)
    channel = cfg.channel()
    rows = []
    for i, point in enumerate(cfg.validation_grid):
        row = validate_point(point, setup, channel, root.child("validate").child(i))
        rows.append(row)
        print(f"{point.sweep} d={point.distance_m:g} m n_rb={point.n_rb} eps={point.epsilon:g} "
              f"omega={point.omega:g}: W={row['w_bound_s'] * 1e3:.3f} ms "
              f"q={row['empirical_quantile_s'] * 1e3:.3f} ms ratio={row['ratio']:.2f}")
    io.write_csv(out / "validate_bound.csv", "validate_bound", rows)
    ratios = np.array([r["ratio"] for r in rows], dtype=float)
    ok = int(np.sum(ratios >= 1.0))
    print(f"conservative in {ok}/{len(rows)} points, median ratio {np.nanmedian(ratios):.2f}")
    return EXIT_OK


def cmd_gloss_sweep(args, cfg: Config, out: Path) -> int:
    rows = gloss_sweep(cfg.gloss, cfg.channel(), RandomStream(args.seed).child("traffic"))
    io.write_csv(out / "gloss_sweep.csv", "gloss_sweep", rows)
    finite = sum(1 for r in rows if math.isfinite(r["w_bound_s"]))
    print(f"{len(rows)} points, {finite} with a finite bound")
    return EXIT_OK


def _write_records(out: Path, records) -> None:
    rows, timings, summary = [], [], {}
    for name, rec in records.items():
        for r in rec.rows:
            rows.append(r)
            timings.append({"period": r["period"], "policy": name, "elapsed_s": r["elapsed_s"]})
        s = rec.summary()
        s["cdf"] = rec.cdf() if rec.rows else []
        summary[name] = s
    rows.sort(key=lambda r: (r["period"], r["policy"]))
    timings.sort(key=lambda r: (r["period"], r["policy"]))
    io.write_csv(out / "periods.csv", "periods", rows)
    io.write_csv(out / "timings.csv", "timings", timings)
    io.write_json(out / "summary.json", "summary", {"policies": summary})


def _report(records) -> None:
    for name, rec in records.items():
        for r in rec.rows:
            if name == "dario":
                print(f"period {r['period']}: dario {r['elapsed_s']:.3f} s, f_obj {r['f_obj']:.4g}")
        s = rec.summary()
        if rec.rows:
            print(f"{name}: P50 {s['f_obj_p50']:.4g}  P90 {s['f_obj_p90']:.4g}")


def cmd_optimize(args, cfg: Config, out: Path) -> int:
    rng = RandomStream(args.seed)
    scenario = cfg.scenario(rng)
    n = args.periods or cfg.experiment.n_periods
    records = run_comparison(scenario, [args.policy], n, rng, emulate=args.emulate or cfg.experiment.emulate)
    _write_records(out, records)
    _report(records)
    return EXIT_OK


def cmd_compare(args, cfg: Config, out: Path) -> int:
    rng = RandomStream(args.seed)
    scenario = cfg.scenario(rng)
    n = args.periods or cfg.experiment.n_periods
    policies = [p for p in cfg.experiment.policies if p != "brute_force"]
    records = run_comparison(scenario, policies, n, rng, emulate=args.emulate or cfg.experiment.emulate)
    _write_records(out, records)
    _report(records)
    return EXIT_OK


def cmd_brute_force(args, cfg: Config, out: Path) -> int:
    rng = RandomStream(args.seed)
    scenario = cfg.scenario(rng)
    guard = args.guard if args.guard is not None else cfg.brute_force_guard
    xy = np.array([u.position for u in scenario.ues], dtype=float).reshape(-1, 2)
    windows, _ = period_traffic(scenario, rng.child("traffic"), 0, False)
    problem = scenario.build_problem(xy, windows)
    count = asg.brute_force_count(problem)
    bf = asg.brute_force(problem, guard)
    heur = asg.dario_optimize(problem, rng.child("alg2-init").child(0))
    gap = heur.objective.f_obj / bf.objective.f_obj - 1.0 if bf.objective.f_obj > 0 else 0.0

    def pack(res: asg.PolicyResult) -> dict:
        return {"f_obj": res.objective.f_obj, "alloc": res.alloc, "x": res.x.astype(int),
                "elapsed_s": res.elapsed_s}

    io.write_json(out / "brute_force.json", "brute_force", {
        "combinations": count,
        "guard": guard,
        "brute_force": pack(bf),
        "dario": pack(heur),
        "relative_gap": gap,
    })
    print(f"brute force f_obj {bf.objective.f_obj:.4g} over {count} combinations in {bf.elapsed_s:.2f} s")
    print(f"dario f_obj {heur.objective.f_obj:.4g} in {heur.elapsed_s:.3f} s, gap {100 * gap:.2f}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risdelay", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", default=None, help="YAML configuration file")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("validate-bound", help="analytic bound against emulated delay quantiles")
    common(p)
    p.add_argument("--n-tti", type=int, default=None, help="emulated horizon per point")
    p.set_defaults(func=cmd_validate_bound)

    p = sub.add_parser("gloss-sweep", help="bound versus distance over phase bits and element counts")
    common(p)
    p.set_defaults(func=cmd_gloss_sweep)

    p = sub.add_parser("optimize", help="run one policy over assignment periods")
    common(p)
    p.add_argument("--policy", choices=POLICIES, default="dario")
    p.add_argument("--periods", type=int, default=None)
    p.add_argument("--emulate", action="store_true")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("compare", help="run every policy on identical draws")
    common(p)
    p.add_argument("--periods", type=int, default=None)
    p.add_argument("--emulate", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("brute-force", help="exhaustive optimum next to the heuristic")
    common(p)
    p.add_argument("--guard", type=int, default=None, help="maximum combination count")
    p.set_defaults(func=cmd_brute_force)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args.command, args, cfg)
        return args.func(args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except asg.GuardExceededError as exc:
        print(f"guard exceeded: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
