"""Command-line entry points.

Subcommands: run (dataset -> pose/stats/velocity files), eval-ate and
eval-rel (pose files -> metrics), synth (built-in world -> KITTI-layout
dataset), map-stats (map dump -> entropy report), bench-map (update-time
comparison against the monolithic-rebuild baseline).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, metrics, pipeline, synth, voxel_map
from .config import RunConfig, apply_overrides, load_config
from .errors import EdgeOdomError


def _add_run(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("run", help="estimate a trajectory from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--mode", choices=["single", "pipelined"], default=None)
    p.add_argument("--out-poses", default="poses_est.txt")
    p.add_argument("--out-stats", default=None)
    p.add_argument("--out-velocities", default=None)


def _add_eval(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("eval-ate", help="absolute trajectory error")
    p.add_argument("--estimated", required=True)
    p.add_argument("--reference", required=True)
    p = sub.add_parser("eval-rel", help="segment-based relative errors")
    p.add_argument("--estimated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--step", type=int, default=10)


def _add_synth(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--world", choices=sorted(synth.WORLD_FACTORIES), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweeps", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", required=True)


def _add_map_tools(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("map-stats", help="entropy report for a map dump")
    p.add_argument("--dump", required=True)
    p.add_argument("--hash", choices=["cell", "baseline"], default="cell")
    p.add_argument("--buckets", type=int, default=None)
    p = sub.add_parser("bench-map", help="update-time scaling comparison")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--points", type=int, default=100)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = list(args.overrides)
    overrides.append(f"dataset={args.dataset}")
    if args.mode:
        overrides.append(f"mode={args.mode}")
    cfg = apply_overrides(cfg, overrides)
    traj, velocities, stats = pipeline.run_sequence(cfg)
    pipeline.write_pose_file(traj, args.out_poses)
    print(f"wrote {len(traj)} poses to {args.out_poses}")
    if args.out_stats:
        pipeline.write_stats_csv(stats, args.out_stats)
        print(f"wrote stats to {args.out_stats}")
    if args.out_velocities:
        pipeline.write_velocities_csv(velocities, args.out_velocities)
        print(f"wrote velocities to {args.out_velocities}")
    degenerate = sum(stats.degenerate)
    if degenerate:
        print(f"warning: {degenerate} degenerate frames fell back to the prior")
    return 0


def _cmd_eval_ate(args: argparse.Namespace) -> int:
    est = pipeline.read_pose_file(args.estimated)
    ref = pipeline.read_pose_file(args.reference)
    print(f"ate_m = {metrics.ate(est, ref):.6f}")
    return 0


def _cmd_eval_rel(args: argparse.Namespace) -> int:
    est = pipeline.read_pose_file(args.estimated)
    ref = pipeline.read_pose_file(args.reference)
    report = metrics.kitti_rel_errors(est, ref, step=args.step)
    if report.empty:
        print("path too short for the smallest segment length")
        return 0
    print(f"translational_pct = {report.translational_pct:.4f}")
    print(f"rotational_deg_per_100m = {report.rotational_deg_per_100m:.4f}")
    for length in sorted(report.per_length):
        t_pct, r_deg = report.per_length[length]
        print(f"  {int(length):4d} m: {t_pct:.4f} %  {r_deg:.4f} deg/100m")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    factory = synth.WORLD_FACTORIES[args.world]
    kwargs = {}
    if args.sweeps is not None:
        key = "n_repeats" if args.world == "static" else "n_sweeps"
        kwargs[key] = args.sweeps
    if args.sigma is not None:
        kwargs["sigma"] = args.sigma
    world = factory(args.seed, **kwargs)
    out = synth.write_dataset(world, args.out)
    print(f"wrote {len(world.trajectory)} sweeps to {out}")
    return 0


def _cmd_map_stats(args: argparse.Namespace) -> int:
    gmap = voxel_map.read_map_dump(args.dump, hash_fn=args.hash)
    report = voxel_map.table_entropy(gmap, bucket_count=args.buckets)
    print(json.dumps({
        "hash_fn": args.hash,
        "cells": gmap.n_cells,
        "points": gmap.n_points,
        "bucket_count": report.bucket_count,
        "occupied_buckets": int(report.occupancy.size),
        "entropy_nats": report.entropy,
    }, indent=2))
    return 0


def _cmd_bench_map(args: argparse.Namespace) -> int:
    result = bench.run_map_benchmark(seed=args.seed, n_sweeps=args.sweeps,
                                     pts_per_sweep=args.points)
    print(json.dumps(result, indent=2))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "eval-ate": _cmd_eval_ate,
    "eval-rel": _cmd_eval_rel,
    "synth": _cmd_synth,
    "map-stats": _cmd_map_stats,
    "bench-map": _cmd_bench_map,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="edgeodom",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_eval(sub)
    _add_synth(sub)
    _add_map_tools(sub)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except EdgeOdomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
