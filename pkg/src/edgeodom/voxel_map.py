"""Spatially hashed global map and the pose-centered local map.

Space is partitioned into half-open cuboid cells [lo, hi) of horizontal
size s_xy and vertical size s_z.  Cells live in a chained hash table keyed
by a 64-bit mix of the integer cell index; a deliberately weaker additive
key is kept around as an ablation baseline.  Collision chains are real:
two distinct indices with equal keys share a bucket, which is what the
entropy diagnostic measures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, EmptyMapError
from .geometry import Pose

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class MapConfig:
    s_xy: float = 25.0
    s_z: float = 20.0
    tau: int = 64
    voxel_leaf: float = 0.4
    local_radius_cells: int = 1
    recent_sweeps: int = 3

    def __post_init__(self) -> None:
        if self.s_xy <= 0 or self.s_z <= 0:
            raise ConfigError("cell sizes must be positive")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if self.voxel_leaf <= 0:
            raise ConfigError("voxel_leaf must be positive")


def cell_index(p: np.ndarray, cfg: MapConfig) -> tuple[int, int, int]:
    """Lattice index of the cell owning p; cells are half-open boxes."""
    p = np.asarray(p, dtype=np.float64)
    return (int(math.floor(p[0] / cfg.s_xy)),
            int(math.floor(p[1] / cfg.s_xy)),
            int(math.floor(p[2] / cfg.s_z)))


def cell_indices(points: np.ndarray, cfg: MapConfig) -> np.ndarray:
    """Vectorized cell_index over an (N, 3) batch -> (N, 3) int64."""
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(points.shape, dtype=np.int64)
    out[:, 0] = np.floor(points[:, 0] / cfg.s_xy)
    out[:, 1] = np.floor(points[:, 1] / cfg.s_xy)
    out[:, 2] = np.floor(points[:, 2] / cfg.s_z)
    return out


def cell_center(index: tuple[int, int, int], cfg: MapConfig) -> np.ndarray:
    return np.array([index[0] * cfg.s_xy + cfg.s_xy / 2.0,
                     index[1] * cfg.s_xy + cfg.s_xy / 2.0,
                     index[2] * cfg.s_z + cfg.s_z / 2.0])


def mix64(x: int) -> int:
    """Fixed 64-bit avalanche finalizer (multiply-xorshift rounds).

    Signed inputs are reinterpreted as two's-complement words, so every
    lattice coordinate lands on a well-spread 64-bit value.
    """
    z = x & _MASK64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def cell_hash(index: tuple[int, int, int]) -> int:
    """Shift-staggered XOR of the per-coordinate mixes.

    The shifts break permutation symmetry: (1,2,3) and (3,2,1) get
    different keys, unlike baseline_hash.
    """
    return (mix64(index[0])
            ^ ((mix64(index[1]) << 1) & _MASK64)
            ^ ((mix64(index[2]) << 2) & _MASK64))


def baseline_hash(index: tuple[int, int, int]) -> int:
    """Ablation key: wrapping sum of the per-coordinate mixes (commutative)."""
    return (mix64(index[0]) + mix64(index[1]) + mix64(index[2])) & _MASK64


def _mix64_vec(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def cell_hash_vec(indices: np.ndarray) -> np.ndarray:
    """cell_hash over an (N, 3) int64 batch -> (N,) uint64."""
    hx = _mix64_vec(indices[:, 0])
    hy = _mix64_vec(indices[:, 1])
    hz = _mix64_vec(indices[:, 2])
    with np.errstate(over="ignore"):
        return hx ^ (hy << np.uint64(1)) ^ (hz << np.uint64(2))


def baseline_hash_vec(indices: np.ndarray) -> np.ndarray:
    hx = _mix64_vec(indices[:, 0])
    hy = _mix64_vec(indices[:, 1])
    hz = _mix64_vec(indices[:, 2])
    with np.errstate(over="ignore"):
        return hx + hy + hz


def voxel_downsample(points: np.ndarray, leaf: float) -> np.ndarray:
    """One centroid per occupied leaf voxel; output ordered by voxel index."""
    if leaf <= 0:
        raise ConfigError("leaf must be positive")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if points.shape[0] == 0:
        return points.copy()
    keys = np.floor(points / leaf).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((uniq.shape[0], 3))
    np.add.at(sums, inverse, points)
    counts = np.bincount(inverse, minlength=uniq.shape[0]).astype(np.float64)
    return sums / counts[:, None]


@dataclass
class Cell:
    index: tuple[int, int, int]
    center: np.ndarray
    points: np.ndarray  # (N, 3) world frame

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class UpdateStats:
    cells_created: int = 0
    cells_filtered: int = 0
    points_added: int = 0


class GlobalMap:
    """Chained hash table of cells.

    Single-writer: only the mapping stage mutates it.  ``hash_fn`` selects
    the key function ("cell" staggered-XOR or the "baseline" additive one)
    so both can be exercised on identical insertion streams.
    """

    def __init__(self, cfg: MapConfig | None = None, hash_fn: str = "cell") -> None:
        if hash_fn not in ("cell", "baseline"):
            raise ConfigError(f"unknown hash_fn {hash_fn!r}")
        self.cfg = cfg if cfg is not None else MapConfig()
        self.hash_fn = hash_fn
        self._key = cell_hash if hash_fn == "cell" else baseline_hash
        self.buckets: dict[int, list[Cell]] = {}
        self.n_cells = 0
        self.n_points = 0

    def __len__(self) -> int:
        return self.n_cells

    def cells(self):
        for chain in self.buckets.values():
            yield from chain

    def find(self, index: tuple[int, int, int]) -> Cell | None:
        chain = self.buckets.get(self._key(index))
        if chain is None:
            return None
        for cell in chain:
            if cell.index == index:
                return cell
        return None

    def _find_or_create(self, index: tuple[int, int, int]) -> tuple[Cell, bool]:
        key = self._key(index)
        chain = self.buckets.setdefault(key, [])
        for cell in chain:
            if cell.index == index:
                return cell, False
        cell = Cell(index=index, center=cell_center(index, self.cfg),
                    points=np.empty((0, 3)))
        chain.append(cell)
        self.n_cells += 1
        return cell, True


def map_update(gmap: GlobalMap, points_world: np.ndarray) -> UpdateStats:
    """Insert world-frame points, creating cells on demand.

    A cell whose count exceeds tau after insertion is reduced to leaf-voxel
    centroids.  Only touched cells change.
    """
    stats = UpdateStats()
    points_world = np.asarray(points_world, dtype=np.float64).reshape(-1, 3)
    if points_world.shape[0] == 0:
        return stats
    idx = cell_indices(points_world, gmap.cfg)
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    for u in range(uniq.shape[0]):
        batch = points_world[inverse == u]
        cell, created = gmap._find_or_create((int(uniq[u, 0]), int(uniq[u, 1]),
                                              int(uniq[u, 2])))
        if created:
            stats.cells_created += 1
        before = len(cell)
        cell.points = np.concatenate([cell.points, batch]) if before else batch.copy()
        stats.points_added += batch.shape[0]
        if len(cell) > gmap.cfg.tau:
            cell.points = voxel_downsample(cell.points, gmap.cfg.voxel_leaf)
            stats.cells_filtered += 1
        gmap.n_points += len(cell) - before
    return stats


@dataclass
class KnnResult:
    points: np.ndarray  # (k', 3) ascending distance
    distances: np.ndarray  # (k',)
    indices: np.ndarray  # (k',) positions in the local map's point array
    short: bool  # fewer than k points existed


@dataclass
class LocalMap:
    """Immutable k-NN snapshot: cell-neighborhood points plus recent sweeps."""

    points: np.ndarray  # (N, 3) world frame
    epoch: int = 0
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.points.shape[0] and self._tree is None:
            self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def tree(self) -> cKDTree | None:
        return self._tree


def local_map(gmap: GlobalMap, lidar_pose: Pose,
              recent_edge_sets: list[np.ndarray], epoch: int = 0) -> LocalMap:
    """Assemble the neighborhood snapshot around the sensor's cell.

    Takes every cell within a Chebyshev radius of local_radius_cells of the
    pose's own cell, then appends the given recent world-frame edge arrays.
    """
    cx, cy, cz = cell_index(lidar_pose.translation, gmap.cfg)
    r = gmap.cfg.local_radius_cells
    parts: list[np.ndarray] = []
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dz in range(-r, r + 1):
                cell = gmap.find((cx + dx, cy + dy, cz + dz))
                if cell is not None and len(cell):
                    parts.append(cell.points)
    parts.extend(np.asarray(e, dtype=np.float64).reshape(-1, 3)
                 for e in recent_edge_sets)
    if parts:
        pts = np.concatenate(parts, axis=0)
        if pts.shape[0]:
            # Set union: a point still present both in a cell and in a recent
            # sweep would otherwise appear twice and yield coincident line
            # anchors downstream.  First occurrence wins, order preserved.
            _, first = np.unique(pts, axis=0, return_index=True)
            pts = pts[np.sort(first)]
    else:
        pts = np.empty((0, 3))
    return LocalMap(points=pts, epoch=epoch)


def knn(local: LocalMap, query: np.ndarray, k: int) -> KnnResult:
    """k nearest local-map points, ascending distance, ties by array order."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    n = len(local)
    if n == 0:
        return KnnResult(points=np.empty((0, 3)), distances=np.empty(0),
                         indices=np.empty(0, dtype=np.int64), short=True)
    kk = min(k, n)
    dist, idx = local.tree.query(np.asarray(query, dtype=np.float64), k=kk)
    dist = np.atleast_1d(dist)
    idx = np.atleast_1d(idx)
    order = np.lexsort((idx, dist))  # stable tie-break on insertion order
    dist, idx = dist[order], idx[order]
    return KnnResult(points=local.points[idx], distances=dist, indices=idx,
                     short=kk < k)


@dataclass
class EntropyReport:
    bucket_count: int
    occupancy: np.ndarray  # entries per occupied bucket
    probabilities: np.ndarray  # same order, sums to 1
    entropy: float  # nats


def entropy_of_counts(counts: np.ndarray) -> float:
    """Shannon entropy (nats) of a bucket-occupancy histogram; 0 log 0 := 0."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyMapError("no entries to measure")
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def table_entropy(gmap: GlobalMap, bucket_count: int | None = None) -> EntropyReport:
    """Entropy of chain lengths over simulated physical buckets.

    Keys are reduced into a power-of-two bucket array sized for load factor
    <= 0.5 (overridable); each cell counts as one table entry.
    """
    if gmap.n_cells == 0:
        raise EmptyMapError("map has no cells")
    if bucket_count is None:
        bucket_count = 1 << max(1, (2 * gmap.n_cells - 1).bit_length())
    if bucket_count < 1 or bucket_count & (bucket_count - 1):
        raise ConfigError("bucket_count must be a positive power of two")
    mask = bucket_count - 1
    hist: dict[int, int] = {}
    for key, chain in gmap.buckets.items():
        b = key & mask
        hist[b] = hist.get(b, 0) + len(chain)
    occupancy = np.array(sorted(hist.values(), reverse=True), dtype=np.int64)
    probabilities = occupancy / occupancy.sum()
    return EntropyReport(bucket_count=bucket_count, occupancy=occupancy,
                         probabilities=probabilities,
                         entropy=entropy_of_counts(occupancy))


def write_map_dump(gmap: GlobalMap, path: str | Path,
                   stats_path: str | Path | None = None) -> None:
    """Text dump `ix iy iz x y z` per point, plus an optional JSON sidecar."""
    lines = []
    for cell in gmap.cells():
        ix, iy, iz = cell.index
        for p in cell.points:
            lines.append(f"{ix} {iy} {iz} {p[0]:.12e} {p[1]:.12e} {p[2]:.12e}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
    if stats_path is not None:
        report = table_entropy(gmap) if gmap.n_cells else None
        stats = {
            "cells": gmap.n_cells,
            "points": gmap.n_points,
            "hash_fn": gmap.hash_fn,
            "entropy_nats": report.entropy if report else None,
            "bucket_count": report.bucket_count if report else None,
        }
        Path(stats_path).write_text(json.dumps(stats, indent=2) + "\n")


def read_map_dump(path: str | Path, cfg: MapConfig | None = None,
                  hash_fn: str = "cell") -> GlobalMap:
    """Rebuild a map from a dump; cell membership comes from the dumped index."""
    gmap = GlobalMap(cfg, hash_fn=hash_fn)
    by_index: dict[tuple[int, int, int], list[list[float]]] = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        index = (int(parts[0]), int(parts[1]), int(parts[2]))
        by_index.setdefault(index, []).append([float(parts[3]), float(parts[4]),
                                               float(parts[5])])
    for index, pts in by_index.items():
        cell, _ = gmap._find_or_create(index)
        cell.points = np.asarray(pts, dtype=np.float64)
        gmap.n_points += len(pts)
    return gmap
