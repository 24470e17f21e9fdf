"""Kendall shape-space geometry and the KShapeNet skeleton action classifier."""

from .errors import (
    AntipodalError,
    DatasetError,
    DegenerateShapeError,
    DimensionError,
    KShapeError,
    TangencyError,
)
from .geometry import (
    exp_map,
    geodesic_distance,
    helmert_submatrix,
    log_map,
    parallel_transport,
    procrustes_rotation,
    rotation_euler_jacobian,
    rotation_from_euler,
    to_preshape,
)
from .model import KShapeNetConfig, Metrics, build_model, evaluate, forward, run_ablation, train
from .trajectory import Projection, ReferenceShape, SkeletonSequence

__version__ = "0.1.0"
