"""Trajectory evaluation: ATE and segment-based relative errors.

Relative errors follow the standard odometry-benchmark protocol: for
segment lengths 100..800 m, compare the relative motion between the frame
where a segment starts and where the reference path first reaches that
length, then average translation error (percent of length) and rotation
angle (degrees per 100 m) over all starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError
from .geometry import se3_apply, se3_compose, se3_inverse, umeyama_align
from .pipeline import Trajectory

__all__ = ["ate", "RelErrorReport", "kitti_rel_errors", "SEGMENT_LENGTHS"]

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


def ate(estimated: Trajectory, reference: Trajectory) -> float:
    """RMSE of per-frame positions after rigid alignment (meters)."""
    if len(estimated) != len(reference):
        raise LengthMismatchError(
            f"trajectory lengths differ: {len(estimated)} vs {len(reference)}")
    if len(estimated) < 3:
        raise LengthMismatchError("need at least 3 frames")
    est = estimated.positions()
    ref = reference.positions()
    aligned = se3_apply(umeyama_align(est, ref), est)
    return float(np.sqrt(np.mean(np.sum((aligned - ref) ** 2, axis=1))))


@dataclass
class RelErrorReport:
    translational_pct: float = 0.0
    rotational_deg_per_100m: float = 0.0
    per_length: dict[float, tuple[float, float]] = field(default_factory=dict)
    n_samples: int = 0
    empty: bool = False


def _path_lengths(positions: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _rotation_angle(r: np.ndarray) -> float:
    c = (np.trace(r) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def kitti_rel_errors(estimated: Trajectory, reference: Trajectory,
                     lengths: tuple[float, ...] = SEGMENT_LENGTHS,
                     step: int = 10) -> RelErrorReport:
    """Average relative errors over all (start frame, segment length) pairs.

    Start frames advance by ``step``.  A reference path shorter than the
    smallest segment yields an empty-flagged report.
    """
    if len(estimated) != len(reference):
        raise LengthMismatchError(
            f"trajectory lengths differ: {len(estimated)} vs {len(reference)}")
    dist = _path_lengths(reference.positions())
    t_sum = 0.0
    r_sum = 0.0
    n = 0
    by_len: dict[float, list[tuple[float, float]]] = {L: [] for L in lengths}
    for first in range(0, len(reference), step):
        for L in lengths:
            target = dist[first] + L
            last = int(np.searchsorted(dist, target))
            if last >= len(reference):
                break
            rel_ref = se3_compose(se3_inverse(reference.poses[first]),
                                  reference.poses[last])
            rel_est = se3_compose(se3_inverse(estimated.poses[first]),
                                  estimated.poses[last])
            err = se3_compose(se3_inverse(rel_est), rel_ref)
            t_err = float(np.linalg.norm(err.translation)) / L
            r_err = _rotation_angle(err.rotation) / L
            t_sum += t_err
            r_sum += r_err
            n += 1
            by_len[L].append((t_err, r_err))
    if n == 0:
        return RelErrorReport(empty=True)
    per_length = {}
    for L, samples in by_len.items():
        if samples:
            arr = np.asarray(samples)
            per_length[L] = (float(arr[:, 0].mean()) * 100.0,
                             math.degrees(float(arr[:, 1].mean())) * 100.0)
    return RelErrorReport(
        translational_pct=t_sum / n * 100.0,
        rotational_deg_per_100m=math.degrees(r_sum / n) * 100.0,
        per_length=per_length,
        n_samples=n)
