"""LiDAR-only odometry and mapping from edge features.

Sweeps are segmented into per-beam scans, scored for curvature, and the
selected edge points are matched against lines in a local map drawn from a
spatially hashed global map; a damped least-squares solver over SE(3)
refines each pose.  See the README for the pipeline walk-through and CLI.
"""

from .config import RunConfig, load_config, parse_config_text
from .errors import (ConfigError, DegenerateGeometryError, EdgeOdomError,
                     EmptyMapError, InsufficientNeighborsError,
                     InvalidIntervalError, LengthMismatchError,
                     MalformedFileError, OutOfRangeError)
from .features import EdgeSet, FeatureConfig, extract_edges
from .geometry import (Pose, constant_velocity_prior, se3_apply, se3_compose,
                       se3_inverse, umeyama_align)
from .kernels import active_backend
from .metrics import RelErrorReport, ate, kitti_rel_errors
from .odometry import (CorrespondenceSet, OptimizerConfig, SolveReport,
                       build_correspondences, optimize_pose)
from .pipeline import (RunStats, Trajectory, VelocityEstimate, run_sequence,
                       run_sweeps)
from .sweep_io import (BeamModel, PointCloud, Scan, Sweep, range_filter,
                       read_kitti_bin, split_scans)
from .voxel_map import (GlobalMap, LocalMap, MapConfig, baseline_hash,
                        cell_hash, cell_index, knn, local_map, map_update,
                        table_entropy, voxel_downsample)

__version__ = "0.1.0"
