"""Map-maintenance benchmarks: hashed cells vs a rebuild-everything baseline.

The baseline stores one flat point array and rebuilds a single k-d tree
over all of it on every update, so its per-update cost grows with map
size; the hashed map only touches the cells an update lands in.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .voxel_map import GlobalMap, MapConfig, map_update


@dataclass
class MonolithicMap:
    """Baseline: append points, rebuild one global tree per update."""

    points: np.ndarray | None = None
    tree: cKDTree | None = None

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, 3)
        if self.points is None:
            self.points = batch.copy()
        else:
            self.points = np.concatenate([self.points, batch])
        # build flags favor construction speed; queries are not benchmarked
        self.tree = cKDTree(self.points, balanced_tree=False, compact_nodes=False)


def drifting_point_stream(seed: int, n_sweeps: int = 1000,
                          pts_per_sweep: int = 100) -> Iterator[np.ndarray]:
    """World-frame batches along a long straight path; the map only grows."""
    rng = np.random.default_rng(seed)
    for i in range(n_sweeps):
        center = np.array([0.5 * i, 0.0, 1.0])
        pts = center + rng.normal(0.0, [8.0, 8.0, 1.5], size=(pts_per_sweep, 3))
        yield pts


def time_updates(stream: Iterator[np.ndarray], mode: str,
                 cfg: MapConfig | None = None) -> list[float]:
    """Per-update wall time (seconds) for one full pass over the stream."""
    if mode == "hash":
        gmap = GlobalMap(cfg if cfg is not None else MapConfig())
        times = []
        for batch in stream:
            t0 = time.perf_counter()
            map_update(gmap, batch)
            times.append(time.perf_counter() - t0)
        return times
    if mode == "monolithic":
        mono = MonolithicMap()
        times = []
        for batch in stream:
            t0 = time.perf_counter()
            mono.update(batch)
            times.append(time.perf_counter() - t0)
        return times
    raise ConfigError(f"unknown mode {mode!r}")


def decile_medians(times: list[float]) -> tuple[float, float]:
    """Median update time of the first and final tenth of the sequence."""
    n = len(times)
    if n < 10:
        raise ConfigError("need at least 10 samples")
    decile = n // 10
    return (float(np.median(times[:decile])), float(np.median(times[-decile:])))


def run_map_benchmark(seed: int = 0, n_sweeps: int = 1000,
                      pts_per_sweep: int = 100) -> dict:
    """Compare first/final-decile medians of both map structures."""
    result = {}
    for mode in ("hash", "monolithic"):
        times = time_updates(drifting_point_stream(seed, n_sweeps, pts_per_sweep),
                             mode)
        first, last = decile_medians(times)
        result[mode] = {
            "first_decile_median_ms": first * 1e3,
            "final_decile_median_ms": last * 1e3,
            "ratio": last / first if first > 0 else float("inf"),
            "total_s": float(np.sum(times)),
        }
    return result
