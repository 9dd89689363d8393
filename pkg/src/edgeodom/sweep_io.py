"""Point-cloud ingestion: KITTI binaries, generic CSV, beam segmentation,
and the range gate.

A raw cloud is held as flat arrays (``PointCloud``); ``split_scans`` turns
it into a ``Sweep`` of per-beam ``Scan`` objects ordered by azimuth, which
is the structure the feature extractor consumes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidIntervalError, MalformedFileError

_KITTI_RECORD_BYTES = 16


@dataclass
class PointCloud:
    """Unsegmented points: xyz in meters, intensity, optional beam index."""

    xyz: np.ndarray
    intensity: np.ndarray
    ring: np.ndarray | None = None

    def __len__(self) -> int:
        return self.xyz.shape[0]


@dataclass
class Scan:
    """Points of a single beam, ordered by azimuth (file order by default)."""

    beam: int
    xyz: np.ndarray
    intensity: np.ndarray

    def __len__(self) -> int:
        return self.xyz.shape[0]


@dataclass
class Sweep:
    """One full 360-degree acquisition, segmented per beam."""

    scans: list[Scan]
    timestamp: float = 0.0
    index: int = 0
    dropped: int = 0

    def __len__(self) -> int:
        return sum(len(s) for s in self.scans)


@dataclass(frozen=True)
class BeamModel:
    """Uniform elevation binning used when the data carries no ring index.

    Defaults model an HDL-64E: 64 beams spanning [-24.8, +2.0] degrees.
    Beam 0 is the lowest elevation.  A point is binned to the nearest bin
    center; elevations outside [min, max] fall outside every bin.
    """

    beam_count: int = 64
    elevation_min_deg: float = -24.8
    elevation_max_deg: float = 2.0

    def assign(self, xyz: np.ndarray) -> np.ndarray:
        """Beam index per point; -1 where the elevation is out of bounds."""
        elev = np.degrees(np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1])))
        lo, hi = self.elevation_min_deg, self.elevation_max_deg
        width = (hi - lo) / self.beam_count
        beams = np.floor((elev - lo) / width).astype(np.int64)
        beams = np.minimum(beams, self.beam_count - 1)  # hi itself maps to top beam
        beams[(elev < lo) | (elev > hi)] = -1
        return beams


def read_kitti_bin(path: str | Path) -> PointCloud:
    """Decode a KITTI velodyne file: consecutive float32 (x, y, z, intensity)."""
    raw = Path(path).read_bytes()
    if len(raw) % _KITTI_RECORD_BYTES:
        raise MalformedFileError(
            f"{path}: size {len(raw)} is not a multiple of {_KITTI_RECORD_BYTES}")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return PointCloud(xyz=data[:, :3].astype(np.float64),
                      intensity=data[:, 3].astype(np.float64))


def write_kitti_bin(path: str | Path, cloud: PointCloud) -> None:
    """Inverse of read_kitti_bin (float32 precision)."""
    data = np.empty((len(cloud), 4), dtype="<f4")
    data[:, :3] = cloud.xyz
    data[:, 3] = cloud.intensity
    Path(path).write_bytes(data.tobytes())


def read_csv(path: str | Path) -> PointCloud:
    """Read `x,y,z,intensity[,ring]` rows with a header line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedFileError(f"{path}: empty file") from None
        if header[:4] != ["x", "y", "z", "intensity"]:
            raise MalformedFileError(f"{path}: unexpected header {header!r}")
        has_ring = len(header) > 4 and header[4] == "ring"
        rows = [row for row in reader if row]
    xyz = np.zeros((len(rows), 3))
    intensity = np.zeros(len(rows))
    ring = np.zeros(len(rows), dtype=np.int64) if has_ring else None
    for i, row in enumerate(rows):
        xyz[i] = [float(row[0]), float(row[1]), float(row[2])]
        intensity[i] = float(row[3])
        if has_ring:
            ring[i] = int(row[4])
    return PointCloud(xyz=xyz, intensity=intensity, ring=ring)


def write_csv(path: str | Path, cloud: PointCloud) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if cloud.ring is not None:
            writer.writerow(["x", "y", "z", "intensity", "ring"])
            for p, inten, rng in zip(cloud.xyz, cloud.intensity, cloud.ring):
                writer.writerow([repr(p[0]), repr(p[1]), repr(p[2]), repr(inten), int(rng)])
        else:
            writer.writerow(["x", "y", "z", "intensity"])
            for p, inten in zip(cloud.xyz, cloud.intensity):
                writer.writerow([repr(p[0]), repr(p[1]), repr(p[2]), repr(inten)])


def read_cloud(path: str | Path) -> PointCloud:
    """Dispatch on extension: .bin (KITTI) or .csv."""
    path = Path(path)
    if path.suffix == ".bin":
        return read_kitti_bin(path)
    if path.suffix == ".csv":
        return read_csv(path)
    raise MalformedFileError(f"{path}: unsupported extension {path.suffix!r}")


def split_scans(cloud: PointCloud, beam_model: BeamModel | None = None, *,
                timestamp: float = 0.0, index: int = 0,
                sort_azimuth: bool = False) -> Sweep:
    """Segment a cloud into per-beam scans.

    A ring column, when present, is authoritative; otherwise beams come from
    elevation binning against ``beam_model``.  Points outside every bin are
    dropped and counted.  Within a scan, points keep file order unless
    ``sort_azimuth`` re-sorts them by atan2(y, x).
    """
    if cloud.ring is not None:
        beams = np.asarray(cloud.ring, dtype=np.int64)
    else:
        model = beam_model if beam_model is not None else BeamModel()
        beams = model.assign(cloud.xyz) if len(cloud) else np.empty(0, dtype=np.int64)

    dropped = int(np.count_nonzero(beams < 0))
    scans: list[Scan] = []
    for beam in np.unique(beams[beams >= 0]) if len(cloud) else []:
        mask = beams == beam
        xyz = cloud.xyz[mask]
        intensity = cloud.intensity[mask]
        if sort_azimuth:
            order = np.argsort(np.arctan2(xyz[:, 1], xyz[:, 0]), kind="stable")
            xyz = xyz[order]
            intensity = intensity[order]
        scans.append(Scan(beam=int(beam), xyz=xyz, intensity=intensity))
    return Sweep(scans=scans, timestamp=timestamp, index=index, dropped=dropped)


def range_filter(sweep: Sweep, r_min: float, r_max: float) -> Sweep:
    """Keep points whose 3D range lies in the closed interval [r_min, r_max]."""
    if not 0 <= r_min < r_max:
        raise InvalidIntervalError(f"need 0 <= r_min < r_max, got [{r_min}, {r_max}]")
    scans = []
    for scan in sweep.scans:
        r = np.linalg.norm(scan.xyz, axis=1)
        keep = (r >= r_min) & (r <= r_max)
        scans.append(Scan(beam=scan.beam, xyz=scan.xyz[keep],
                          intensity=scan.intensity[keep]))
    return Sweep(scans=scans, timestamp=sweep.timestamp, index=sweep.index,
                 dropped=sweep.dropped)
