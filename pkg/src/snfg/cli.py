"""Command-line entry point: ``snfg {simulate,batch,sweep,horizontal,config}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure threshold
exceeded (or unwritable output).
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as config_mod
from . import experiments as ex
from .sim import encounter_rng, run_encounter, write_trajectory_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parse_value(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snfg", description="Level-K pilot encounter simulations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--seed", type=int, default=0, help="root seed (u64)")
    common.add_argument("--out", default="snfg_out", help="output directory")
    common.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${ex.WORKERS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="one encounter with trajectory export")
    s.add_argument("--index", type=int, default=0, help="encounter index under the root seed")

    b = sub.add_parser("batch", parents=[common], help="encounter ensemble")
    b.add_argument("--encounters", type=int, default=200)
    b.add_argument("--emit-trajectories", action="store_true")

    w = sub.add_parser("sweep", parents=[common], help="one batch per grid value of a parameter")
    w.add_argument("--param", required=True, help="parameter path, e.g. noise.M_w")
    w.add_argument("--values", required=True, type=_parse_value, help="comma-separated grid")
    w.add_argument("--encounters", type=int, default=200, help="encounters per grid point")

    h = sub.add_parser("horizontal", parents=[common], help="horizontal-advisory search vs all-maintain")
    h.add_argument("--encounters", type=int, default=300)
    h.add_argument("--rollouts", type=int, default=None, help="completions per candidate")

    sub.add_parser("config", help="print every configuration key with its default")
    return p


def _values(args):
    values = config_mod.load(args.config) if args.config else config_mod.defaults()
    for item in args.set:
        if "=" not in item:
            raise config_mod.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = (x.strip() for x in item.split("=", 1))
        values = config_mod.with_overrides(values, **{k: v})
    config_mod.build(values)
    return values


def _cmd_simulate(args, values):
    cfg = config_mod.build(values)
    rec = run_encounter(cfg, encounter_rng(args.seed, 0, args.index), seed=(args.seed, 0, args.index),
                        keep_trajectory=True)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trajectory.csv")
    write_trajectory_csv(rec, path)
    ex.emit_report(None, [rec], args.out, hist_bins=None)
    print(f"F = {rec.F:.1f} ft  nmac = {rec.nmac}  discarded = {rec.discarded}  RAs = {rec.ra}  "
          f"actions = {rec.action}")
    if rec.failed:
        print(f"pilot decision failed: {rec.failure}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"trajectory written to {path}")
    return EXIT_OK


def _print_manifest(m, label=""):
    print(f"{label}mean F = {m.mean_F:.1f} ft  95% CI [{m.ci[0]:.1f}, {m.ci[1]:.1f}]  "
          f"completed {m.completed}  discarded {m.discarded}  failed {m.failed}  NMAC rate {m.nmac_rate:.3f}")


def _cmd_batch(args, values):
    manifest, outcomes = ex.run_batch(values, args.encounters, args.seed, workers=args.workers,
                                      keep_trajectories=args.emit_trajectories)
    paths = ex.emit_report(manifest, outcomes, args.out, trajectories=args.emit_trajectories)
    _print_manifest(manifest)
    print(f"wrote {', '.join(sorted(paths.values()))}")
    return EXIT_OK


def _cmd_sweep(args, values):
    spec = ex.SweepSpec(args.param, tuple(args.values), args.encounters, args.seed)
    res = ex.run_sweep(spec, values, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    ex.write_sweep_csv(res, os.path.join(args.out, "sweep.csv"))
    for p, (m, outs) in enumerate(zip(res.manifests, res.outcomes)):
        ex.emit_report(m, outs, args.out, prefix=f"point{p:02d}_")
        _print_manifest(m, f"{args.param} = {spec.grid[p]:g}: ")
    print(f"Spearman rho = {res.spearman[0]:.3f} (p = {res.spearman[1]:.3g})")
    return EXIT_OK


def _cmd_horizontal(args, values):
    comp = ex.run_horizontal(values, args.encounters, args.seed, args.rollouts, workers=args.workers)
    s_usable = [o.F for o in comp.search if o.usable]
    b_usable = [o.F for o in comp.baseline if o.usable]
    edges = np.histogram_bin_edges(np.concatenate([s_usable, b_usable]) if s_usable + b_usable else [0, 1], 10)
    ex.emit_report(comp.manifest_search, comp.search, args.out, prefix="search_", hist_edges=edges)
    ex.emit_report(comp.manifest_baseline, comp.baseline, args.out, prefix="maintain_", hist_edges=edges)
    _print_manifest(comp.manifest_search, "search:   ")
    _print_manifest(comp.manifest_baseline, "maintain: ")
    diff, p = comp.paired_test()
    print(f"paired mean difference {diff:.1f} ft (one-sided p = {p:.3g})")
    return EXIT_OK


COMMANDS = {"simulate": _cmd_simulate, "batch": _cmd_batch, "sweep": _cmd_sweep, "horizontal": _cmd_horizontal}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "config":
        sys.stdout.write(config_mod.documented_defaults())
        return EXIT_OK
    try:
        values = _values(args)
        ex.resolve_workers(args.workers)
    except (config_mod.ConfigError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, values)
    except (config_mod.ConfigError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ex.BatchError, OSError) as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
