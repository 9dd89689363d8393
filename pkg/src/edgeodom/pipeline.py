"""End-to-end orchestration: features -> pose optimization -> mapping.

Two execution modes produce identical trajectories: "single" runs the three
stages inline per sweep; "pipelined" overlaps feature extraction of the
next sweep and map maintenance of the previous one on worker threads,
joined by depth-1 queues.  The handoff is lock-step — the pose of sweep i
is always optimized against the local map finished for sweep i-1 — so
threading changes wall time, never arithmetic.
"""

from __future__ import annotations

import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .config import RunConfig
from .errors import InvalidIntervalError, MalformedFileError, OutOfRangeError
from .features import EdgeSet, extract_edges
from .geometry import Pose, constant_velocity_prior, se3_apply
from .odometry import SolveReport, optimize_pose
from .sweep_io import Sweep, range_filter, read_cloud, split_scans
from .voxel_map import GlobalMap, LocalMap, local_map, map_update

__all__ = [
    "Trajectory", "VelocityEstimate", "RunStats", "bootstrap_policy",
    "estimate_velocity", "load_sweeps", "run_sweeps", "run_sequence",
    "write_pose_file", "read_pose_file", "write_stats_csv",
    "write_velocities_csv",
]


@dataclass
class Trajectory:
    """Per-sweep world-from-sensor poses; the first entry is the identity."""

    indices: list[int] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)
    poses: list[Pose] = field(default_factory=list)

    def append(self, index: int, timestamp: float, pose: Pose) -> None:
        self.indices.append(index)
        self.timestamps.append(timestamp)
        self.poses.append(pose)

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.indices, self.timestamps, self.poses))

    def positions(self) -> np.ndarray:
        if not self.poses:
            return np.empty((0, 3))
        return np.stack([p.translation for p in self.poses])


class VelocityEstimate(NamedTuple):
    epoch: int
    velocity: np.ndarray  # m/s per world axis


@dataclass
class RunStats:
    frames: list[int] = field(default_factory=list)
    t_feat_ms: list[float] = field(default_factory=list)
    t_opt_ms: list[float] = field(default_factory=list)
    t_map_ms: list[float] = field(default_factory=list)
    t_local_ms: list[float] = field(default_factory=list)
    n_corr: list[int] = field(default_factory=list)
    degenerate: list[bool] = field(default_factory=list)


def bootstrap_policy(i: int) -> str:
    """First sweep seeds the map, second gets an identity-motion prior."""
    if i == 0:
        return "seed-only"
    if i == 1:
        return "identity-prior"
    return "motion-prior"


def estimate_velocity(traj: Trajectory, i: int) -> VelocityEstimate:
    """World-frame linear velocity by backward difference at sweep i."""
    if i < 1 or i >= len(traj):
        raise OutOfRangeError(f"velocity needs 1 <= i < {len(traj)}, got {i}")
    dt = traj.timestamps[i] - traj.timestamps[i - 1]
    if dt <= 0:
        raise InvalidIntervalError(f"non-increasing timestamps at sweep {i}")
    delta = traj.poses[i].translation - traj.poses[i - 1].translation
    return VelocityEstimate(epoch=i, velocity=delta / dt)


def load_sweeps(cfg: RunConfig) -> Iterator[Sweep]:
    """Stream the dataset as segmented, range-gated sweeps.

    Accepts a directory of .bin/.csv files or a KITTI-layout root with a
    velodyne/ subdirectory; times.txt supplies timestamps when present.
    """
    root = Path(cfg.dataset)
    vel = root / "velodyne" if (root / "velodyne").is_dir() else root
    files = sorted(vel.glob("*.bin")) or sorted(vel.glob("*.csv"))
    if not files:
        raise MalformedFileError(f"no .bin or .csv sweeps under {vel}")
    times = None
    times_file = root / "times.txt"
    if times_file.is_file():
        times = [float(line) for line in times_file.read_text().split()]
    beam_model = cfg.beam_model()
    for i, path in enumerate(files):
        cloud = read_cloud(path)
        t = times[i] if times is not None and i < len(times) \
            else i * cfg.timestamp_period
        sweep = split_scans(cloud, beam_model, timestamp=t, index=i,
                            sort_azimuth=cfg.sort_azimuth)
        yield range_filter(sweep, cfg.r_min, cfg.r_max)


class _Mapper:
    """Single-writer owner of the global map and the recent-sweep window."""

    def __init__(self, cfg: RunConfig) -> None:
        self.gmap = GlobalMap(cfg.map_config())
        self.recent: deque[np.ndarray] = deque(maxlen=cfg.recent_sweeps)

    def step(self, edges_world: np.ndarray, pose: Pose,
             epoch: int) -> tuple[LocalMap, float, float]:
        t0 = time.perf_counter()
        map_update(self.gmap, edges_world)
        self.recent.append(edges_world)
        t1 = time.perf_counter()
        snapshot = local_map(self.gmap, pose, list(self.recent), epoch=epoch)
        t2 = time.perf_counter()
        return snapshot, (t1 - t0) * 1e3, (t2 - t1) * 1e3


def _optimize_step(i: int, edges: EdgeSet, prev_local: LocalMap | None,
                   traj: Trajectory, cfg: RunConfig) -> tuple[Pose, SolveReport]:
    policy = bootstrap_policy(i)
    if policy == "seed-only":
        return Pose.identity(), SolveReport()
    if policy == "identity-prior":
        prior = traj.poses[-1]
    else:
        prior = constant_velocity_prior(traj.poses[-1], traj.poses[-2])
    return optimize_pose(edges, prev_local, prior, cfg.optimizer_config())


def _world_edges(pose: Pose, edges: EdgeSet) -> np.ndarray:
    if len(edges) == 0:
        return np.empty((0, 3))
    return se3_apply(pose, edges.positions)


def run_sweeps(sweeps: Iterable[Sweep],
               cfg: RunConfig) -> tuple[Trajectory, list[VelocityEstimate], RunStats]:
    """Run the full pipeline over an in-memory sweep stream."""
    if cfg.mode == "pipelined":
        traj, stats = _run_pipelined(sweeps, cfg)
    else:
        traj, stats = _run_single(sweeps, cfg)
    if len(traj) == 0:
        raise MalformedFileError("dataset produced no sweeps")
    velocities = [estimate_velocity(traj, i) for i in range(1, len(traj))]
    return traj, velocities, stats


def run_sequence(cfg: RunConfig) -> tuple[Trajectory, list[VelocityEstimate], RunStats]:
    """Run the full pipeline over the configured dataset path."""
    return run_sweeps(load_sweeps(cfg), cfg)


def _run_single(sweeps: Iterable[Sweep],
                cfg: RunConfig) -> tuple[Trajectory, RunStats]:
    fcfg = cfg.feature_config()
    mapper = _Mapper(cfg)
    traj = Trajectory()
    stats = RunStats()
    prev_local: LocalMap | None = None
    for i, sweep in enumerate(sweeps):
        t0 = time.perf_counter()
        edges = extract_edges(sweep, fcfg)
        t1 = time.perf_counter()
        pose, report = _optimize_step(i, edges, prev_local, traj, cfg)
        t2 = time.perf_counter()
        traj.append(i, sweep.timestamp, pose)
        prev_local, map_ms, local_ms = mapper.step(_world_edges(pose, edges),
                                                   pose, i)
        stats.frames.append(i)
        stats.t_feat_ms.append((t1 - t0) * 1e3)
        stats.t_opt_ms.append((t2 - t1) * 1e3)
        stats.t_map_ms.append(map_ms)
        stats.t_local_ms.append(local_ms)
        stats.n_corr.append(report.n_correspondences[0]
                            if report.n_correspondences else 0)
        stats.degenerate.append(report.degenerate)
    return traj, stats


def _run_pipelined(sweeps: Iterable[Sweep],
                   cfg: RunConfig) -> tuple[Trajectory, RunStats]:
    fcfg = cfg.feature_config()
    mapper = _Mapper(cfg)
    traj = Trajectory()
    stats = RunStats()
    feat_q: queue.Queue = queue.Queue(maxsize=1)
    map_q: queue.Queue = queue.Queue(maxsize=1)
    local_q: queue.Queue = queue.Queue(maxsize=1)
    errors: list[BaseException] = []

    def feature_worker() -> None:
        try:
            for i, sweep in enumerate(sweeps):
                t0 = time.perf_counter()
                edges = extract_edges(sweep, fcfg)
                ms = (time.perf_counter() - t0) * 1e3
                feat_q.put((i, sweep.timestamp, edges, ms))
        except BaseException as exc:  # propagate into the main thread
            errors.append(exc)
        finally:
            feat_q.put(None)

    def mapping_worker() -> None:
        try:
            while True:
                item = map_q.get()
                if item is None:
                    return
                i, pose, edges = item
                snapshot, map_ms, local_ms = mapper.step(
                    _world_edges(pose, edges), pose, i)
                stats.t_map_ms.append(map_ms)
                stats.t_local_ms.append(local_ms)
                local_q.put(snapshot)
        except BaseException as exc:
            errors.append(exc)
            local_q.put(None)

    threads = [threading.Thread(target=feature_worker, daemon=True),
               threading.Thread(target=mapping_worker, daemon=True)]
    for t in threads:
        t.start()
    try:
        while True:
            item = feat_q.get()
            if item is None:
                break
            i, timestamp, edges, feat_ms = item
            prev_local = None
            if i >= 1:
                prev_local = local_q.get()
                if prev_local is None:  # mapping stage died
                    break
            t0 = time.perf_counter()
            pose, report = _optimize_step(i, edges, prev_local, traj, cfg)
            opt_ms = (time.perf_counter() - t0) * 1e3
            traj.append(i, timestamp, pose)
            map_q.put((i, pose, edges))
            stats.frames.append(i)
            stats.t_feat_ms.append(feat_ms)
            stats.t_opt_ms.append(opt_ms)
            stats.n_corr.append(report.n_correspondences[0]
                                if report.n_correspondences else 0)
            stats.degenerate.append(report.degenerate)
        map_q.put(None)
    finally:
        for t in threads:
            t.join(timeout=60.0)
    if errors:
        raise errors[0]
    # drain the final local map the odometry stage never consumed
    while not local_q.empty():
        local_q.get_nowait()
    return traj, stats


def write_pose_file(traj: Trajectory, path: str | Path) -> None:
    """KITTI pose format: row-major upper 3x4 of each pose, 12 numbers/line.

    Fixed %.12e formatting keeps repeated runs byte-identical.
    """
    lines = []
    for pose in traj.poses:
        m = pose.matrix()
        lines.append(" ".join(f"{m[r, c]:.12e}" for r in range(3)
                              for c in range(4)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pose_file(path: str | Path, timestamp_period: float = 0.1) -> Trajectory:
    traj = Trajectory()
    for i, line in enumerate(Path(path).read_text().splitlines()):
        vals = [float(v) for v in line.split()]
        if len(vals) != 12:
            raise MalformedFileError(
                f"{path}:{i + 1}: expected 12 values, got {len(vals)}")
        m = np.array(vals).reshape(3, 4)
        traj.append(i, i * timestamp_period,
                    Pose(rotation=m[:, :3], translation=m[:, 3]))
    return traj


def write_stats_csv(stats: RunStats, path: str | Path) -> None:
    """Per-frame stage timings; t_map_ms includes the local-map build."""
    lines = ["frame,t_feat_ms,t_opt_ms,t_map_ms,n_corr,degenerate"]
    for j, frame in enumerate(stats.frames):
        t_map = stats.t_map_ms[j] + stats.t_local_ms[j]
        lines.append(f"{frame},{stats.t_feat_ms[j]:.3f},{stats.t_opt_ms[j]:.3f},"
                     f"{t_map:.3f},{stats.n_corr[j]},{int(stats.degenerate[j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_velocities_csv(velocities: list[VelocityEstimate],
                         path: str | Path) -> None:
    lines = ["frame,vx,vy,vz"]
    for v in velocities:
        lines.append(f"{v.epoch},{v.velocity[0]:.9f},{v.velocity[1]:.9f},"
                     f"{v.velocity[2]:.9f}")
    Path(path).write_text("\n".join(lines) + "\n")
