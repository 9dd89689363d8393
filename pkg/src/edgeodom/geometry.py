"""Rigid-body transforms on SE(3) and trajectory alignment.

Frame convention: a pose labelled ``T_A_B`` maps points expressed in frame B
into frame A; ``compose(a, b)`` chains right-to-left, so the sensor-to-world
pose of sweep i is ``compose(world_from_prev, prev_from_curr)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateGeometryError, LengthMismatchError

__all__ = [
    "Pose",
    "se3_apply",
    "se3_compose",
    "se3_inverse",
    "se3_exp",
    "se3_log",
    "apply_delta",
    "constant_velocity_prior",
    "umeyama_align",
]


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``rotation @ p + translation``.

    Immutable value object; safe to share between threads.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation",
                           np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64).reshape(3))
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(rotation=m[:3, :3], translation=m[:3, 3])

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        return se3_apply(self, points)

    def compose(self, other: "Pose") -> "Pose":
        return se3_compose(self, other)

    def inverse(self) -> "Pose":
        return se3_inverse(self)


def se3_apply(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Project one (3,) point or an (N, 3) batch through ``pose``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        return pose.rotation @ points + pose.translation
    return points @ pose.rotation.T + pose.translation


def se3_compose(a: Pose, b: Pose) -> Pose:
    return Pose(rotation=a.rotation @ b.rotation,
                translation=a.rotation @ b.translation + a.translation)


def se3_inverse(a: Pose) -> Pose:
    rt = a.rotation.T
    return Pose(rotation=rt, translation=-(rt @ a.translation))


def se3_exp(delta: np.ndarray) -> Pose:
    """Pose from a 6-vector increment ordered [angle-axis, translation]."""
    delta = np.asarray(delta, dtype=np.float64).reshape(6)
    return Pose(rotation=Rotation.from_rotvec(delta[:3]).as_matrix(),
                translation=delta[3:])


def se3_log(pose: Pose) -> np.ndarray:
    """Inverse of se3_exp for rotation angles below pi."""
    out = np.empty(6)
    out[:3] = Rotation.from_matrix(pose.rotation).as_rotvec()
    out[3:] = pose.translation
    return out


def apply_delta(delta: np.ndarray, pose: Pose) -> Pose:
    """Left-multiplicative update: exp(delta) composed onto ``pose``."""
    return se3_compose(se3_exp(delta), pose)


def constant_velocity_prior(t_prev: Pose, t_prevprev: Pose) -> Pose:
    """Initial guess assuming the last inter-sweep motion repeats.

    The rotation is re-projected onto the orthonormal manifold before
    returning: the transpose-inverse inside the double composition is only
    exact on SO(3), so when priors feed back into later priors, any
    off-manifold rounding residue is amplified by roughly (1 + sqrt(2))
    per sweep and a chain seeded at machine epsilon breaks down within
    ~35 sweeps.
    """
    prior = se3_compose(t_prev, se3_compose(se3_inverse(t_prevprev), t_prev))
    rot = Rotation.from_matrix(prior.rotation).as_matrix()
    return Pose(rotation=rot, translation=prior.translation)


def umeyama_align(estimated: np.ndarray, reference: np.ndarray) -> Pose:
    """Least-squares rigid transform taking ``estimated`` onto ``reference``.

    Returns the pose minimizing sum ||apply(pose, est_i) - ref_i||^2; no
    scale is fit.  Raises when fewer than 3 pairs are given, the lists
    disagree in length, or the paired spread carries no rotational
    information at all (both clouds concentrated at a single point).
    """
    estimated = np.asarray(estimated, dtype=np.float64).reshape(-1, 3)
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if estimated.shape[0] != reference.shape[0]:
        raise LengthMismatchError(
            f"point count mismatch: {estimated.shape[0]} vs {reference.shape[0]}")
    if estimated.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 point pairs")

    mu_e = estimated.mean(axis=0)
    mu_r = reference.mean(axis=0)
    cov = (reference - mu_r).T @ (estimated - mu_e) / estimated.shape[0]
    if not np.any(np.abs(cov) > 1e-15):
        # Both clouds are single points (or perfectly uncorrelated noise at
        # zero spread): rotation is unobservable.
        raise DegenerateGeometryError("cross-covariance is zero; rotation unobservable")

    u, _, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    return Pose(rotation=rot, translation=mu_r - rot @ mu_e)
