"""Edge feature extraction from segmented sweeps.

Each scan gets a per-index curvature score (mean neighbor distance over the
point's own range).  The scan is then partitioned into equal azimuth
sectors; per sector the highest-curvature points are accepted greedily,
skipping anything index-adjacent to an already accepted point in the same
scan and anything below a curvature floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import InsufficientNeighborsError
from .kernels import scan_curvature
from .sweep_io import Scan, Sweep

__all__ = ["FeatureConfig", "EdgePoint", "EdgeSet", "curvature", "extract_edges"]


@dataclass(frozen=True)
class FeatureConfig:
    sectors: int = 8
    edges_per_sector: int = 10
    curvature_half_width: int = 5
    min_curvature: float = 0.01
    wrap_around: bool = False
    loam_style_curvature: bool = False
    # None -> reuse curvature_half_width for the suppression window.
    suppression_half_width: int | None = None

    @property
    def suppression(self) -> int:
        if self.suppression_half_width is None:
            return self.curvature_half_width
        return self.suppression_half_width


class EdgePoint(NamedTuple):
    position: np.ndarray  # sensor frame
    curvature: float
    range: float
    beam: int
    sector: int


@dataclass
class EdgeSet:
    """Edges of one sweep, ordered by (beam, sector, scan index).

    Column-array layout; iterate for per-edge EdgePoint views.
    """

    positions: np.ndarray  # (N, 3) sensor frame
    curvatures: np.ndarray  # (N,)
    ranges: np.ndarray  # (N,)
    beams: np.ndarray  # (N,) int
    sectors: np.ndarray  # (N,) int
    sweep_index: int = 0

    @classmethod
    def empty(cls, sweep_index: int = 0) -> "EdgeSet":
        return cls(positions=np.empty((0, 3)), curvatures=np.empty(0),
                   ranges=np.empty(0), beams=np.empty(0, dtype=np.int64),
                   sectors=np.empty(0, dtype=np.int64), sweep_index=sweep_index)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __iter__(self) -> Iterator[EdgePoint]:
        for i in range(len(self)):
            yield EdgePoint(self.positions[i], float(self.curvatures[i]),
                            float(self.ranges[i]), int(self.beams[i]),
                            int(self.sectors[i]))


def curvature(scan: Scan, index: int, half_width: int, *, wrap: bool = False,
              loam_style: bool = False) -> float:
    """Score at one scan index, evaluated directly point by point.

    Reference-path twin of the vectorized kernel; raises when the window
    is incomplete and wrap-around is off.
    """
    n = len(scan)
    if wrap:
        if n < 2 * half_width + 1:
            raise InsufficientNeighborsError(
                f"scan of {n} points cannot fill a +-{half_width} window")
    elif index < half_width or index >= n - half_width:
        raise InsufficientNeighborsError(
            f"index {index} lacks {half_width} neighbors on each side (scan size {n})")

    p = scan.xyz[index]
    norm = math.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)
    if norm == 0.0:
        return float("nan")
    if loam_style:
        acc = np.zeros(3)
        for off in range(-half_width, half_width + 1):
            if off == 0:
                continue
            acc += p - scan.xyz[(index + off) % n]
        total = math.sqrt(acc[0] ** 2 + acc[1] ** 2 + acc[2] ** 2)
    else:
        total = 0.0
        for off in range(-half_width, half_width + 1):
            if off == 0:
                continue
            q = scan.xyz[(index + off) % n]
            total += math.dist(p, q)
    return total / (2 * half_width * norm)


def _sector_of(xyz: np.ndarray, sectors: int) -> np.ndarray:
    az = np.arctan2(xyz[:, 1], xyz[:, 0])
    ids = np.floor((az + np.pi) / (2.0 * np.pi) * sectors).astype(np.int64)
    return ids % sectors  # az == +pi folds onto the -pi sector


def extract_edges(sweep: Sweep, cfg: FeatureConfig) -> EdgeSet:
    """Select up to edges_per_sector edges per (scan, sector)."""
    pos_parts: list[np.ndarray] = []
    curv_parts: list[np.ndarray] = []
    beam_parts: list[int] = []
    sector_parts: list[int] = []

    for scan in sweep.scans:
        n = len(scan)
        if n == 0:
            continue
        scores = scan_curvature(scan.xyz, cfg.curvature_half_width,
                                wrap=cfg.wrap_around,
                                loam_style=cfg.loam_style_curvature)
        sectors = _sector_of(scan.xyz, cfg.sectors)
        valid = np.isfinite(scores) & (scores >= cfg.min_curvature)
        if not np.any(valid):
            continue

        accepted_in_scan: list[int] = []
        chosen: list[int] = []
        for sector in range(cfg.sectors):
            cand = np.nonzero(valid & (sectors == sector))[0]
            if cand.size == 0:
                continue
            # descending curvature, ties to the lower scan index
            order = cand[np.lexsort((cand, -scores[cand]))]
            taken = 0
            for idx in order:
                if taken >= cfg.edges_per_sector:
                    break
                if _suppressed(int(idx), accepted_in_scan, cfg.suppression, n,
                               cfg.wrap_around):
                    continue
                accepted_in_scan.append(int(idx))
                chosen.append(int(idx))
                taken += 1

        if not chosen:
            continue
        chosen_arr = np.array(sorted(chosen, key=lambda i: (sectors[i], i)),
                              dtype=np.int64)
        pos_parts.append(scan.xyz[chosen_arr])
        curv_parts.append(scores[chosen_arr])
        beam_parts.extend([scan.beam] * chosen_arr.size)
        sector_parts.extend(int(sectors[i]) for i in chosen_arr)

    if not pos_parts:
        return EdgeSet.empty(sweep.index)
    positions = np.concatenate(pos_parts, axis=0)
    return EdgeSet(positions=positions,
                   curvatures=np.concatenate(curv_parts),
                   ranges=np.linalg.norm(positions, axis=1),
                   beams=np.array(beam_parts, dtype=np.int64),
                   sectors=np.array(sector_parts, dtype=np.int64),
                   sweep_index=sweep.index)


def _suppressed(idx: int, accepted: list[int], half_width: int, n: int,
                wrap: bool) -> bool:
    for a in accepted:
        d = abs(idx - a)
        if wrap:
            d = min(d, n - d)
        if d <= half_width:
            return True
    return False
