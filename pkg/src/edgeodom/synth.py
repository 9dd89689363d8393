"""Seeded synthetic LiDAR worlds with exact ground truth.

Scenes are built from two vertical primitives: finite wall rectangles and
zero-width poles.  A spinning multi-beam sensor is simulated on a uniform
azimuth grid; wall returns land on grid columns, while a pole return lands
in its nearest column but keeps the pole's exact bearing, so pole landmarks
are azimuth-quantization free.  Walls with varied top heights produce range
discontinuities both at piece boundaries (vertical seams) and where a beam
sweeps past a top edge (horizontal seams); together with poles these give
the feature extractor structure constraining all six pose degrees of
freedom.

Trajectories are restricted to yaw-plus-translation poses so vertical
primitives stay vertical in the sensor frame and raycasting stays closed
form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError
from .geometry import Pose
from .sweep_io import BeamModel, PointCloud, Scan, Sweep, write_kitti_bin

__all__ = [
    "Wall", "Pole", "SyntheticWorld", "generate_sweeps", "write_dataset",
    "corridor_loop_world", "straight_corridor_world", "static_plaza_world",
    "ablation_world", "loop_cell_stream", "WORLD_FACTORIES",
]


@dataclass(frozen=True)
class Wall:
    """Vertical rectangle: 2D segment a-b extruded from z0 up to z1."""

    a: tuple[float, float]
    b: tuple[float, float]
    z0: float
    z1: float


@dataclass(frozen=True)
class Pole:
    """Vertical zero-width segment at (x, y), z0 up to z1."""

    x: float
    y: float
    z0: float
    z1: float


@dataclass
class SyntheticWorld:
    seed: int
    walls: list[Wall] = field(default_factory=list)
    poles: list[Pole] = field(default_factory=list)
    trajectory: list[Pose] = field(default_factory=list)
    n_beams: int = 32
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 25.0
    n_azimuth: int = 720
    sigma: float = 0.0
    far_sigma_scale: float = 1.0
    far_range: float | None = None
    timestamp_period: float = 0.1
    max_range: float = 80.0

    def beam_model(self) -> BeamModel:
        return BeamModel(beam_count=self.n_beams,
                         elevation_min_deg=self.elevation_min_deg,
                         elevation_max_deg=self.elevation_max_deg)

    def beam_elevations(self) -> np.ndarray:
        """Beam centers of the uniform model, in radians, ascending."""
        lo = math.radians(self.elevation_min_deg)
        hi = math.radians(self.elevation_max_deg)
        width = (hi - lo) / self.n_beams
        return lo + (np.arange(self.n_beams) + 0.5) * width


def _yaw_of(pose: Pose) -> float:
    r = pose.rotation
    yaw = math.atan2(r[1, 0], r[0, 0])
    c, s = math.cos(yaw), math.sin(yaw)
    pure = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    if not np.allclose(r, pure, atol=1e-9):
        raise ConfigError("synthetic trajectories must be yaw-only rotations")
    return yaw


def generate_sweeps(world: SyntheticWorld) -> Iterator[tuple[Sweep, Pose]]:
    """Raycast every scripted pose; yields (sensor-frame sweep, true pose).

    Same seed, same world: bit-identical output.  Range noise is drawn per
    return in beam-major order from one generator seeded at world.seed.
    Emitted ground-truth poses are re-expressed relative to the first
    scripted pose, so the trajectory starts at the identity like every
    estimated trajectory does.
    """
    rng = np.random.default_rng(world.seed)
    origin_inv = None
    num_az = world.n_azimuth
    az = -np.pi + (np.arange(num_az) + 0.5) * (2.0 * np.pi / num_az)
    elev = world.beam_elevations()
    tan_e = np.tan(elev)
    cos_e = np.cos(elev)
    sin_e = np.sin(elev)
    dx = np.cos(az)
    dy = np.sin(az)

    for i, pose in enumerate(world.trajectory):
        yaw = _yaw_of(pose)
        cy, sy = math.cos(yaw), math.sin(yaw)
        tx, ty, tz = pose.translation

        ranges = np.full((world.n_beams, num_az), np.inf)
        pole_az = np.full((world.n_beams, num_az), np.nan)

        for wall in world.walls:
            # segment endpoints in the sensor frame (inverse yaw + shift)
            ax = cy * (wall.a[0] - tx) + sy * (wall.a[1] - ty)
            ay = -sy * (wall.a[0] - tx) + cy * (wall.a[1] - ty)
            bx = cy * (wall.b[0] - tx) + sy * (wall.b[1] - ty)
            by = -sy * (wall.b[0] - tx) + cy * (wall.b[1] - ty)
            ex, ey = bx - ax, by - ay
            denom = dx * ey - dy * ex
            with np.errstate(divide="ignore", invalid="ignore"):
                u = (ax * ey - ay * ex) / denom  # horizontal distance along ray
                s = (dy * ax - dx * ay) / denom  # position along the segment
            hit2d = (np.abs(denom) > 1e-12) & (u > 1e-6) & (s >= 0.0) & (s <= 1.0)
            rho = np.where(hit2d, u, np.inf)
            z_hit = rho[None, :] * tan_e[:, None]
            ok = (z_hit >= wall.z0 - tz) & (z_hit <= wall.z1 - tz)
            slant = np.where(ok, rho[None, :] / cos_e[:, None], np.inf)
            np.minimum(ranges, slant, out=ranges)

        for pole in world.poles:
            px = cy * (pole.x - tx) + sy * (pole.y - ty)
            py = -sy * (pole.x - tx) + cy * (pole.y - ty)
            rho_p = math.hypot(px, py)
            if rho_p < 1e-6:
                continue
            alpha = math.atan2(py, px)
            col = int(round((alpha - az[0]) / (2.0 * np.pi / num_az))) % num_az
            z_hit = rho_p * tan_e
            ok = (z_hit >= pole.z0 - tz) & (z_hit <= pole.z1 - tz)
            slant = rho_p / cos_e
            better = ok & (slant < ranges[:, col])
            ranges[better, col] = slant[better]
            pole_az[better, col] = alpha

        scans = []
        for k in range(world.n_beams):
            mask = np.isfinite(ranges[k]) & (ranges[k] <= world.max_range)
            if not np.any(mask):
                continue
            r = ranges[k, mask]
            if world.sigma > 0.0:
                sig = np.full(r.shape, world.sigma)
                if world.far_range is not None:
                    sig[r > world.far_range] *= world.far_sigma_scale
                r = r + rng.normal(0.0, 1.0, size=r.shape) * sig
            alpha = np.where(np.isnan(pole_az[k, mask]), az[mask], pole_az[k, mask])
            xyz = np.empty((r.shape[0], 3))
            xyz[:, 0] = r * cos_e[k] * np.cos(alpha)
            xyz[:, 1] = r * cos_e[k] * np.sin(alpha)
            xyz[:, 2] = r * sin_e[k]
            scans.append(Scan(beam=k, xyz=xyz, intensity=np.full(r.shape[0], 0.5)))
        if origin_inv is None:
            origin_inv = pose.inverse()
        yield (Sweep(scans=scans, timestamp=i * world.timestamp_period, index=i),
               origin_inv.compose(pose))


def write_dataset(world: SyntheticWorld, out_dir: str | Path) -> Path:
    """Materialize the world as a KITTI-layout dataset.

    Layout: velodyne/NNNNNN.bin, poses.txt (ground truth, 12-number lines),
    times.txt, and run.cfg carrying the matching beam/timing keys.
    """
    out = Path(out_dir)
    (out / "velodyne").mkdir(parents=True, exist_ok=True)
    pose_lines = []
    times = []
    for sweep, pose in generate_sweeps(world):
        xyz_parts = [s.xyz for s in sweep.scans]
        inten_parts = [s.intensity for s in sweep.scans]
        cloud = PointCloud(
            xyz=np.concatenate(xyz_parts) if xyz_parts else np.empty((0, 3)),
            intensity=np.concatenate(inten_parts) if inten_parts else np.empty(0))
        write_kitti_bin(out / "velodyne" / f"{sweep.index:06d}.bin", cloud)
        m = pose.matrix()
        pose_lines.append(" ".join(f"{m[r, c]:.12e}" for r in range(3)
                                   for c in range(4)))
        times.append(f"{sweep.timestamp:.6f}")
    (out / "poses.txt").write_text("\n".join(pose_lines) + "\n")
    (out / "times.txt").write_text("\n".join(times) + "\n")
    cfg = {
        "beam_count": world.n_beams,
        "elevation_min_deg": world.elevation_min_deg,
        "elevation_max_deg": world.elevation_max_deg,
        "timestamp_period": world.timestamp_period,
    }
    (out / "run.cfg").write_text(
        "".join(f"{k} = {v}\n" for k, v in cfg.items()))
    (out / "world.json").write_text(json.dumps({
        "seed": world.seed, "sweeps": len(world.trajectory),
        "walls": len(world.walls), "poles": len(world.poles),
        "sigma": world.sigma, "far_range": world.far_range,
        "far_sigma_scale": world.far_sigma_scale,
    }, indent=2) + "\n")
    return out


def _split_wall_run(rng: np.random.Generator, start: np.ndarray, end: np.ndarray,
                    piece_len: float, tops: tuple[float, float],
                    z0: float = 0.0, gap_frac: float = 0.0) -> list[Wall]:
    """Chop a straight wall run into pieces with varied top heights.

    With gap_frac > 0 each piece is shortened symmetrically, so piece ends
    back onto open space and return clean vertical depth edges.
    """
    span = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
    length = float(np.linalg.norm(span))
    n = max(1, int(round(length / piece_len)))
    walls = []
    for j in range(n):
        a = np.asarray(start) + span * ((j + gap_frac / 2.0) / n)
        b = np.asarray(start) + span * ((j + 1 - gap_frac / 2.0) / n)
        top = float(rng.uniform(tops[0], tops[1]))
        walls.append(Wall(a=(float(a[0]), float(a[1])),
                          b=(float(b[0]), float(b[1])), z0=z0, z1=top))
    return walls


def _square_ring(rng: np.random.Generator, half: float, piece_len: float,
                 tops: tuple[float, float]) -> list[Wall]:
    corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
    walls = []
    for j in range(4):
        a = np.array(corners[j])
        b = np.array(corners[(j + 1) % 4])
        walls.extend(_split_wall_run(rng, a, b, piece_len, tops))
    return walls


def _rounded_square_path(n_sweeps: int, half: float, radius: float,
                         z: float, dwell: int = 0) -> list[Pose]:
    """Constant-speed loop: four straights joined by quarter-circle corners.

    The first `dwell` sweeps hold the start pose.  The estimator builds its
    first reference from scratch, and the first few solves run against a
    one- or two-sweep reference with extrapolated guesses; holding still
    while that reference fills out keeps their errors out of it.
    """
    straight = 2.0 * (half - radius)
    perimeter = 4.0 * straight + 2.0 * math.pi * radius
    poses = []
    for i in range(n_sweeps):
        s = (max(i - dwell, 0) / (n_sweeps - dwell)) * perimeter
        leg = s % perimeter
        # walk the four (straight, corner) pairs
        x = y = yaw = 0.0
        for side in range(4):
            phi = side * math.pi / 2.0
            if leg <= straight:
                # straight run along direction phi, offset to the side's start
                sx, sy = _side_start(side, half, radius)
                x = sx + leg * math.cos(phi)
                y = sy + leg * math.sin(phi)
                yaw = phi
                break
            leg -= straight
            arc = math.pi * radius / 2.0
            if leg <= arc:
                cxn, cyn = _corner_center(side, half, radius)
                theta = phi - math.pi / 2.0 + (leg / arc) * (math.pi / 2.0)
                x = cxn + radius * math.cos(theta)
                y = cyn + radius * math.sin(theta)
                yaw = theta + math.pi / 2.0
                break
            leg -= arc
        c, sn = math.cos(yaw), math.sin(yaw)
        poses.append(Pose(rotation=np.array([[c, -sn, 0.0], [sn, c, 0.0],
                                             [0.0, 0.0, 1.0]]),
                          translation=np.array([x, y, z])))
    return poses


def _side_start(side: int, half: float, radius: float) -> tuple[float, float]:
    starts = [(-(half - radius), -half), (half, -(half - radius)),
              (half - radius, half), (-half, half - radius)]
    return starts[side]


def _corner_center(side: int, half: float, radius: float) -> tuple[float, float]:
    centers = [(half - radius, -half + radius), (half - radius, half - radius),
               (-half + radius, half - radius), (-half + radius, -half + radius)]
    return centers[side]


def corridor_loop_world(seed: int, n_sweeps: int = 240,
                        sigma: float = 0.02,
                        half: float = 13.0) -> SyntheticWorld:
    """Square corridor circuit with corners: the construct-and-recover scene.

    The sensor drives the centerline of a corridor bounded by two wall
    rings whose piece tops vary, with poles planted along both walls.
    """
    rng = np.random.default_rng(seed)
    # Both rings are low parapet walls built from pieces of varied height.
    # Parapet top and bottom boundaries are fixed horizontal world lines; a
    # scan ring crossing one exits at a point ON that line, and such points
    # slide only along the line as the sensor moves, which point-to-line
    # residuals do not penalize.
    #
    # Scene layout notes, learned the hard way:
    #  - The inner ring stays low so beams clear it: the taller outer ring
    #    is then visible from anywhere on the circuit and gets mapped in
    #    the first sweeps, while estimates are still near truth.  Surfaces
    #    first observed late in the run are deposited at drifted poses and
    #    then serve as the reference for later solves, which is how height
    #    error turns into a random walk instead of staying bounded.
    #  - Wall tops stay under ~2.1 m so the rim of a panel 4 m to the
    #    side still falls inside the elevation cone.  A rim the beams
    #    cannot reach leaves one side of the corridor without a nearby
    #    height reference and the solves pick up a steady roll bias.
    #  - Panels are separated by gaps: a panel end backed by open space
    #    is a clean range discontinuity and yields a stable vertical edge
    #    line mid-leg.  Butted panels differing only in top height leave
    #    no range step at the joint.
    #  - Guardrail bands sit just below sensor height, so their rims cross
    #    the scan rings near zero elevation, where the ring spacing
    #    projects to the finest height increments: a continuous
    #    close-range height reference on both sides of every leg.  The
    #    rims run along the direction of travel and pin height, roll and
    #    pitch, leaving the along-track direction to panel ends and poles.
    walls = []
    for ring_half, n_pieces, lo, hi in ((half - 4.0, 6, 0.9, 1.3),
                                        (half + 4.0, 8, 1.6, 2.1)):
        s = ring_half
        ring = [(-s, -s), (s, -s), (s, s), (-s, s)]
        for i in range(4):
            a, b = np.array(ring[i], float), np.array(ring[(i + 1) % 4], float)
            for j in range(n_pieces):
                p = a + (b - a) * ((j + 0.06) / n_pieces)
                q = a + (b - a) * ((j + 0.94) / n_pieces)
                top = float(rng.uniform(lo, hi))
                walls.append(Wall((p[0], p[1]), (q[0], q[1]), 0.0, top))
    for edge in (half - 3.0, half + 3.0):
        corners = [(-edge, -edge), (edge, -edge), (edge, edge), (-edge, edge)]
        for i in range(4):
            walls.append(Wall(corners[i], corners[(i + 1) % 4], 0.50, 0.68))
    poles = []
    # courtyard towers: tall vertical lines visible from the whole circuit
    # with a large lever arm on the tilt directions
    for ang, rad in ((0.3, 2.5), (2.4, 3.1), (4.5, 2.8)):
        x, y = rad * math.cos(ang), rad * math.sin(ang)
        poles.append(Pole(x, y, 0.0, float(rng.uniform(6.0, 8.0))))
    for ring_half, inset in ((half - 4.0, 1.0), (half + 4.0, -1.0)):
        edge = ring_half + inset
        n_per_side = 10
        for side in range(4):
            for j in range(n_per_side):
                along = -ring_half + (j + 0.5) * (2.0 * ring_half / n_per_side)
                jitter = float(rng.uniform(-0.6, 0.6))
                h = float(rng.uniform(2.5, 5.5))
                if side == 0:
                    poles.append(Pole(along + jitter, -edge, 0.0, h))
                elif side == 1:
                    poles.append(Pole(edge, along + jitter, 0.0, h))
                elif side == 2:
                    poles.append(Pole(-(along + jitter), edge, 0.0, h))
                else:
                    poles.append(Pole(-edge, -(along + jitter), 0.0, h))
    # corner radius equals the corridor half-width so the arc wraps the
    # inner wall corner at constant clearance; the stationary lead-in lets
    # the reference mature before the platform starts moving
    trajectory = _rounded_square_path(n_sweeps, half, 4.0, 1.0,
                                      dwell=min(20, n_sweeps // 4))
    # 64 beams: the rail rims reward fine elevation sampling, and the ring
    # spacing near the horizon sets the quantization floor of every height
    # reference in the scene
    return SyntheticWorld(seed=seed, walls=walls, poles=poles,
                          trajectory=trajectory, sigma=sigma, n_beams=64)


def straight_corridor_world(seed: int, n_sweeps: int = 12, step: float = 1.0,
                            sigma: float = 0.0) -> SyntheticWorld:
    """Straight corridor along +x at constant speed."""
    rng = np.random.default_rng(seed)
    x0, x1 = -10.0, n_sweeps * step + 30.0
    walls = _split_wall_run(rng, np.array([x0, -4.0]), np.array([x1, -4.0]),
                            4.0, (1.2, 2.4), gap_frac=0.12)
    walls += _split_wall_run(rng, np.array([x0, 4.0]), np.array([x1, 4.0]),
                             5.0, (1.2, 2.4), gap_frac=0.12)
    # end caps close the corridor so forward motion is observable early
    walls += _split_wall_run(rng, np.array([x1, -4.0]), np.array([x1, 4.0]),
                             3.0, (1.5, 2.5))
    walls += _split_wall_run(rng, np.array([x0, 4.0]), np.array([x0, -4.0]),
                             3.0, (1.5, 2.5))
    # guardrails as in the loop scene: rims near zero elevation are the
    # densest height reference the beam pattern can produce
    walls.append(Wall((x0 + 1.0, -3.0), (x1 - 1.0, -3.0), 0.50, 0.68))
    walls.append(Wall((x0 + 1.0, 3.0), (x1 - 1.0, 3.0), 0.50, 0.68))
    poles = []
    for xp in np.arange(x0 + 2.0, x1 - 1.0, 4.0):
        for side in (-1.0, 1.0):
            poles.append(Pole(float(xp + rng.uniform(-0.5, 0.5)), side * 3.3,
                              0.0, float(rng.uniform(2.6, 4.5))))
    trajectory = [Pose(translation=np.array([i * step, 0.0, 1.0]))
                  for i in range(n_sweeps)]
    return SyntheticWorld(seed=seed, walls=walls, poles=poles,
                          trajectory=trajectory, sigma=sigma)


def static_plaza_world(seed: int, n_repeats: int = 10,
                       sigma: float = 0.0) -> SyntheticWorld:
    """Stationary sensor in a walled plaza with a pole ring."""
    rng = np.random.default_rng(seed)
    walls = _square_ring(rng, 15.0, 6.0, (1.5, 2.5))
    poles = []
    for j in range(8):
        ang = j * math.pi / 4.0 + 0.2
        poles.append(Pole(10.0 * math.cos(ang), 10.0 * math.sin(ang), 0.0,
                          float(rng.uniform(2.5, 3.2))))
    trajectory = [Pose(translation=np.array([0.0, 0.0, 1.0]))
                  for _ in range(n_repeats)]
    return SyntheticWorld(seed=seed, walls=walls, poles=poles,
                          trajectory=trajectory, sigma=sigma)


def ablation_world(seed: int, n_sweeps: int = 50,
                   sigma: float = 0.02) -> SyntheticWorld:
    """Mixed-range scene for the weighting ablation.

    Near structure (pole ring, two mid-range wall runs) is clean; the far
    wall ring is tall enough to be seen over the mid walls, and all returns
    beyond far_range carry far_sigma_scale times the base noise.
    """
    rng = np.random.default_rng(seed)
    poles = []
    for j in range(10):
        ang = j * 2.0 * math.pi / 10.0 + float(rng.uniform(-0.15, 0.15))
        rad = float(rng.uniform(6.0, 12.0))
        poles.append(Pole(rad * math.cos(ang), rad * math.sin(ang), 0.0,
                          float(rng.uniform(2.6, 3.4))))
    walls = _split_wall_run(rng, np.array([-18.0, -18.0]),
                            np.array([-18.0, 18.0]), 5.0, (1.5, 2.5))
    walls += _split_wall_run(rng, np.array([18.0, -18.0]),
                             np.array([18.0, 18.0]), 6.0, (1.5, 2.5))
    far = []
    corners = [(-55.0, -55.0), (55.0, -55.0), (55.0, 55.0), (-55.0, 55.0)]
    for j in range(4):
        far.extend(_split_wall_run(rng, np.array(corners[j]),
                                   np.array(corners[(j + 1) % 4]),
                                   7.0, (5.0, 8.0)))
    walls += far
    poses = []
    n = n_sweeps
    for i in range(n):
        theta = 2.0 * math.pi * i / n
        x = 3.0 * math.cos(theta)
        y = 3.0 * math.sin(theta)
        yaw = theta + math.pi / 2.0
        c, s = math.cos(yaw), math.sin(yaw)
        poses.append(Pose(rotation=np.array([[c, -s, 0.0], [s, c, 0.0],
                                             [0.0, 0.0, 1.0]]),
                          translation=np.array([x, y, 1.0])))
    return SyntheticWorld(seed=seed, walls=walls, poles=poles, trajectory=poses,
                          sigma=sigma, far_sigma_scale=3.0, far_range=30.0)


def loop_cell_stream(seed: int, n_insertions: int = 12000, half_extent: int = 8,
                     z_levels: int = 2) -> np.ndarray:
    """Revisit-heavy cell-index stream with many mirrored (i, j) pairs.

    Covers the block [-half_extent, half_extent]^2 x [0, z_levels) repeatedly
    in shuffled order; mirrored pairs (i, j, z) / (j, i, z) force key
    collisions under any permutation-symmetric hash.
    """
    rng = np.random.default_rng(seed)
    side = np.arange(-half_extent, half_extent + 1)
    ii, jj, zz = np.meshgrid(side, side, np.arange(z_levels), indexing="ij")
    block = np.stack([ii.ravel(), jj.ravel(), zz.ravel()], axis=1)
    reps = max(1, -(-n_insertions // block.shape[0]))
    stream = np.tile(block, (reps, 1))[:n_insertions]
    rng.shuffle(stream, axis=0)
    return stream


WORLD_FACTORIES = {
    "corridor": corridor_loop_world,
    "straight": straight_corridor_world,
    "static": static_plaza_world,
    "ablation": ablation_world,
}
