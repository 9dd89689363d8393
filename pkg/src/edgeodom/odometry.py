"""Pose estimation against a local map.

Each outer iteration re-associates edges to map lines (k-NN + scatter-matrix
line test), then a damped least-squares inner loop minimizes the robustified
sum of squared weighted point-to-line residuals over a 6-dof increment
(angle-axis + translation, applied left-multiplicatively).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (ConfigError, DegenerateGeometryError, InvalidIntervalError,
                     OutOfRangeError)
from .features import EdgeSet
from .geometry import Pose, apply_delta, se3_apply
from .kernels import p2l_system
from .voxel_map import LocalMap

__all__ = [
    "OptimizerConfig", "Correspondence", "CorrespondenceSet", "SolveReport",
    "line_fit", "point_to_line_distance", "residual_weight", "weighted_residual",
    "huber_rho", "build_correspondences", "optimize_pose",
]

_LINE_EPS = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    outer_iterations: int = 2
    knn_k: int = 5
    eigen_ratio: float = 3.0
    huber_delta: float = 0.3
    max_neighbor_distance: float = math.inf
    use_weighting: bool = True
    jacobian: str = "analytic"  # or "numeric"
    lm_max_iterations: int = 25
    lm_initial_lambda: float = 1e-4
    cost_tolerance: float = 1e-8  # relative decrease per accepted step
    step_tolerance: float = 1e-10
    r_min: float = 3.0
    r_max: float = 75.0

    def __post_init__(self) -> None:
        if self.outer_iterations < 1:
            raise ConfigError("outer_iterations must be >= 1")
        if self.jacobian not in ("analytic", "numeric"):
            raise ConfigError(f"jacobian must be analytic|numeric, got {self.jacobian!r}")
        if self.huber_delta <= 0 or self.eigen_ratio <= 0:
            raise ConfigError("thresholds must be positive")
        if self.max_neighbor_distance <= 0:
            raise ConfigError("max_neighbor_distance must be positive")


class Correspondence(NamedTuple):
    source: np.ndarray  # sensor-frame edge
    world: np.ndarray  # projection at association time
    n1: np.ndarray  # nearest line anchor
    n2: np.ndarray  # second anchor
    weight: float
    distance: float
    residual: float


@dataclass
class CorrespondenceSet:
    """Column-array batch of point-to-line matches."""

    source: np.ndarray  # (M, 3)
    world: np.ndarray  # (M, 3)
    n1: np.ndarray  # (M, 3)
    n2: np.ndarray  # (M, 3)
    weights: np.ndarray  # (M,)
    distances: np.ndarray  # (M,)
    residuals: np.ndarray  # (M,)

    @classmethod
    def empty(cls) -> "CorrespondenceSet":
        z3 = np.empty((0, 3))
        z1 = np.empty(0)
        return cls(z3, z3.copy(), z3.copy(), z3.copy(), z1, z1.copy(), z1.copy())

    def __len__(self) -> int:
        return self.source.shape[0]

    def __iter__(self) -> Iterator[Correspondence]:
        for i in range(len(self)):
            yield Correspondence(self.source[i], self.world[i], self.n1[i],
                                 self.n2[i], float(self.weights[i]),
                                 float(self.distances[i]), float(self.residuals[i]))


def line_fit(neighbors: np.ndarray, eigen_ratio: float = 3.0):
    """Accept the neighborhood as a line, or return None.

    ``neighbors`` must be ordered by ascending distance to the query; on
    acceptance the two nearest become the anchors.  The test compares the
    largest eigenvalue of the mean-centered scatter matrix against
    eigen_ratio times the second largest.
    """
    neighbors = np.asarray(neighbors, dtype=np.float64).reshape(-1, 3)
    centered = neighbors - neighbors.mean(axis=0)
    scatter = centered.T @ centered / neighbors.shape[0]
    if np.trace(scatter) < _LINE_EPS:
        raise DegenerateGeometryError("all neighbors coincide; no direction defined")
    w = np.linalg.eigvalsh(scatter)
    if w[2] >= eigen_ratio * w[1]:
        return neighbors[0].copy(), neighbors[1].copy()
    return None


def point_to_line_distance(p: np.ndarray, n1: np.ndarray, n2: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    v = n1 - n2
    vn = np.linalg.norm(v)
    if vn < _LINE_EPS:
        raise DegenerateGeometryError("line anchors coincide")
    return float(np.linalg.norm(np.cross(p - n1, v)) / vn)


def residual_weight(r_j: float, r_min: float, r_max: float) -> float:
    """Linear down-weighting from 1 at r_min to 0 at r_max."""
    if r_min >= r_max:
        raise InvalidIntervalError(f"need r_min < r_max, got [{r_min}, {r_max}]")
    if not r_min <= r_j <= r_max:
        raise OutOfRangeError(f"range {r_j} outside [{r_min}, {r_max}]")
    return 1.0 - (r_j - r_min) / (r_max - r_min)


def weighted_residual(corr: Correspondence) -> float:
    return corr.weight * corr.distance


def huber_rho(s: float, delta: float) -> float:
    """Robust kernel on the squared residual: identity inside delta, linearized out."""
    if s < 0:
        raise OutOfRangeError("squared residual must be >= 0")
    root = math.sqrt(s)
    if root <= delta:
        return s
    return 2.0 * delta * root - delta * delta


def build_correspondences(edges: EdgeSet, pose: Pose, local: LocalMap,
                          cfg: OptimizerConfig) -> CorrespondenceSet:
    """Associate every edge to a validated map line at the given pose.

    Edges whose neighborhoods fail the line test (or collapse to a point)
    are silently dropped.  Deterministic: output keeps edge order.
    """
    m = len(edges)
    if m == 0 or len(local) < cfg.knn_k:
        return CorrespondenceSet.empty()

    world = se3_apply(pose, edges.positions)
    dist, idx = local.tree.query(world, k=cfg.knn_k)
    if cfg.knn_k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    order = np.lexsort((idx, dist), axis=-1)  # stable tie-break per row
    idx = np.take_along_axis(idx, order, axis=-1)

    neighbors = local.points[idx]  # (M, k, 3)
    mean = neighbors.mean(axis=1, keepdims=True)
    centered = neighbors - mean
    scatter = np.einsum("mki,mkj->mij", centered, centered) / cfg.knn_k
    eigs = np.linalg.eigvalsh(scatter)  # ascending per row

    n1 = neighbors[:, 0, :]
    n2 = neighbors[:, 1, :]
    v = n1 - n2
    vn = np.linalg.norm(v, axis=1)
    trace = eigs.sum(axis=1)
    accept = ((eigs[:, 2] >= cfg.eigen_ratio * eigs[:, 1])
              & (trace >= _LINE_EPS) & (vn >= _LINE_EPS))
    if np.isfinite(cfg.max_neighbor_distance):
        # query distances come back ascending, so the last column is the
        # neighborhood radius; a spread-out neighborhood means the tree had
        # no local structure there and any fitted line is fictitious
        accept &= dist[:, -1] <= cfg.max_neighbor_distance
    if not np.any(accept):
        return CorrespondenceSet.empty()

    world_a = world[accept]
    n1_a = n1[accept]
    n2_a = n2[accept]
    v_a = v[accept]
    vn_a = vn[accept]
    d = np.linalg.norm(np.cross(world_a - n1_a, v_a), axis=1) / vn_a
    if cfg.use_weighting:
        span = cfg.r_max - cfg.r_min
        w = 1.0 - (edges.ranges[accept] - cfg.r_min) / span
        w = np.clip(w, 0.0, 1.0)
    else:
        w = np.ones(int(np.count_nonzero(accept)))
    return CorrespondenceSet(source=edges.positions[accept].copy(), world=world_a,
                             n1=n1_a, n2=n2_a, weights=w, distances=d,
                             residuals=w * d)


@dataclass
class SolveReport:
    final_cost: float = 0.0
    n_correspondences: list[int] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    cost_trace: list[list[float]] = field(default_factory=list)  # accepted costs
    converged: bool = False
    degenerate: bool = False


def _robust_cost(residuals: np.ndarray, delta: float) -> float:
    s = residuals * residuals
    root = np.abs(residuals)
    quad = s
    lin = 2.0 * delta * root - delta * delta
    return 0.5 * float(np.sum(np.where(root <= delta, quad, lin)))


def _robust_weights(residuals: np.ndarray, delta: float) -> np.ndarray:
    """d(rho)/d(s) at s = r^2: 1 inside the quadratic zone, delta/|r| outside."""
    root = np.abs(residuals)
    with np.errstate(divide="ignore"):
        w = np.where(root <= delta, 1.0, delta / np.where(root > 0, root, 1.0))
    return w


def _system_at(pose: Pose, corr: CorrespondenceSet, cfg: OptimizerConfig):
    world = se3_apply(pose, corr.source)
    if cfg.jacobian == "analytic":
        return p2l_system(world, corr.n1, corr.n2, corr.weights)
    r, _ = p2l_system(world, corr.n1, corr.n2, corr.weights)
    jac = np.empty((len(corr), 6))
    h = 1e-6
    for d in range(6):
        step = np.zeros(6)
        step[d] = h
        rp, _ = p2l_system(se3_apply(apply_delta(step, pose), corr.source),
                           corr.n1, corr.n2, corr.weights)
        rm, _ = p2l_system(se3_apply(apply_delta(-step, pose), corr.source),
                           corr.n1, corr.n2, corr.weights)
        jac[:, d] = (rp - rm) / (2.0 * h)
    return r, jac


def _lm_minimize(pose: Pose, corr: CorrespondenceSet,
                 cfg: OptimizerConfig) -> tuple[Pose, float, int, list[float], bool]:
    lam = cfg.lm_initial_lambda
    residuals, _ = _system_at(pose, corr, cfg)
    cost = _robust_cost(residuals, cfg.huber_delta)
    trace = [cost]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.lm_max_iterations + 1):
        residuals, jac = _system_at(pose, corr, cfg)
        w = _robust_weights(residuals, cfg.huber_delta)
        grad = jac.T @ (w * residuals)
        hess = (jac * w[:, None]).T @ jac
        try:
            delta = np.linalg.solve(hess + lam * np.eye(6), -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        candidate = apply_delta(delta, pose)
        cand_res, _ = _system_at(candidate, corr, cfg)
        cand_cost = _robust_cost(cand_res, cfg.huber_delta)
        if cand_cost < cost:
            decrease = (cost - cand_cost) / max(cost, 1e-300)
            pose = candidate
            cost = cand_cost
            trace.append(cost)
            lam = max(lam * 0.5, 1e-12)
            if decrease < cfg.cost_tolerance or np.linalg.norm(delta) < cfg.step_tolerance:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e12 or np.linalg.norm(delta) < cfg.step_tolerance:
                converged = True
                break
    return pose, cost, iterations, trace, converged


def optimize_pose(edges: EdgeSet, local: LocalMap, initial_guess: Pose,
                  cfg: OptimizerConfig) -> tuple[Pose, SolveReport]:
    """Refine the pose over outer re-association iterations.

    Correspondence anchors stay fixed within each inner minimization; the
    outer loop rebuilds them at the updated pose.  An empty first
    association returns the guess unchanged, flagged degenerate.
    """
    report = SolveReport()
    pose = initial_guess
    for outer in range(cfg.outer_iterations):
        corr = build_correspondences(edges, pose, local, cfg)
        report.n_correspondences.append(len(corr))
        if len(corr) == 0:
            if outer == 0:
                report.degenerate = True
            report.inner_iterations.append(0)
            report.cost_trace.append([])
            break
        pose, cost, iters, trace, converged = _lm_minimize(pose, corr, cfg)
        report.final_cost = cost
        report.inner_iterations.append(iters)
        report.cost_trace.append(trace)
        report.converged = converged
    return pose, report
