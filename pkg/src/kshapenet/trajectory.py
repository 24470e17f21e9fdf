"""Skeleton sequences to pre-shape trajectories to tangent-space feature arrays."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from . import geometry as geo
from .errors import AntipodalError, DegenerateShapeError, DimensionError

DEFAULT_FRAMES = 100


class Projection(str, Enum):
    """How a pre-shape trajectory becomes network input.

    ``NONE`` feeds flattened pre-shape coordinates (the ablation baseline).
    """

    NONE = "none"
    COMMON_REFERENCE = "common_reference"
    FIRST_FRAME = "first_frame"
    SHOOTING_PT = "shooting_pt"


@dataclass
class SkeletonSequence:
    id: str
    label: int
    frames: np.ndarray  # (T_raw, n, 3)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise DimensionError(
                f"sequence {self.id!r}: frames must be (T, n, 3), got {self.frames.shape}"
            )
        if not np.all(np.isfinite(self.frames)):
            raise DimensionError(f"sequence {self.id!r}: non-finite coordinates")
        self.label = int(self.label)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_joints(self):
        return self.frames.shape[1]


@dataclass
class ReferenceShape:
    shape: np.ndarray  # (n - 1, 3) pre-shape
    provenance: str = "user supplied"

    def __post_init__(self):
        self.shape = np.asarray(self.shape, dtype=np.float64)
        if abs(np.linalg.norm(self.shape) - 1.0) > 1e-12:
            raise DimensionError("reference shape must be a unit-norm pre-shape")


@dataclass
class PreShapeTrajectory:
    shapes: np.ndarray  # (T, n - 1, 3)
    aligned: bool = False

    def __len__(self):
        return self.shapes.shape[0]

    def __getitem__(self, i):
        return self.shapes[i]


@dataclass
class TangentTrajectory:
    data: np.ndarray  # (T, 3 (n - 1))
    projection: Projection
    reference: ReferenceShape | None = field(default=None)


def resample_sequence(seq, frames):
    """Resample every coordinate channel to ``frames`` uniform instants.

    Each of the ``3 n`` channels is fitted with a natural cubic spline over
    normalised time ``[0, 1]``.  Endpoints are copied verbatim.
    """
    frames = int(frames)
    if frames < 2:
        raise DimensionError(f"target frame count must be >= 2, got {frames}")
    if seq.n_frames < 2:
        raise DimensionError(f"sequence {seq.id!r} is too short to resample ({seq.n_frames} frame)")
    t_raw = np.linspace(0.0, 1.0, seq.n_frames)
    t_new = np.linspace(0.0, 1.0, frames)
    flat = seq.frames.reshape(seq.n_frames, -1)
    out = CubicSpline(t_raw, flat, axis=0, bc_type="natural")(t_new)
    out[0] = flat[0]
    out[-1] = flat[-1]
    return SkeletonSequence(seq.id, seq.label, out.reshape(frames, seq.n_joints, 3))


def sequence_to_trajectory(seq, ref=None, align=False):
    """Map every frame to the pre-shape sphere, optionally Procrustes-aligned to ``ref``."""
    if align and ref is None:
        raise ValueError("alignment requires a reference shape")
    shapes = np.empty((seq.n_frames, seq.n_joints - 1, 3))
    for i, frame in enumerate(seq.frames):
        try:
            pre = geo.to_preshape(frame)
        except DegenerateShapeError as exc:
            raise DegenerateShapeError(str(exc), frame=i, sequence_id=seq.id) from None
        if align:
            pre = geo.rotate(pre, geo.procrustes_rotation(ref.shape, pre))
        shapes[i] = pre
    return PreShapeTrajectory(shapes, aligned=align)


def _log_rows(base_of, traj):
    rows = np.empty((len(traj), traj.shapes[0].size))
    for i in range(len(traj)):
        try:
            rows[i] = geo.log_map(base_of(i), traj[i]).ravel()
        except AntipodalError:
            raise AntipodalError("log map undefined", index=i) from None
    return rows


def project_common(traj, ref):
    """Log map of every frame at the shared reference shape."""
    rows = _log_rows(lambda i: ref.shape, traj)
    return TangentTrajectory(rows, Projection.COMMON_REFERENCE, ref)


def project_first_frame(traj):
    """Log map of every frame at the trajectory's own first frame."""
    first = traj[0]
    rows = _log_rows(lambda i: first, traj)
    return TangentTrajectory(rows, Projection.FIRST_FRAME, None)


def project_shooting_pt(traj, ref):
    """Shooting vectors between consecutive frames, transported to ``ref``.

    Row 0 keeps the starting point as ``log_ref(traj[0])``; row ``i > 0`` is
    the one-step transport of ``log_{traj[i-1]}(traj[i])`` from
    ``traj[i-1]`` directly to the reference.
    """
    rows = np.empty((len(traj), traj.shapes[0].size))
    try:
        rows[0] = geo.log_map(ref.shape, traj[0]).ravel()
    except AntipodalError:
        raise AntipodalError("log map undefined", index=0) from None
    for i in range(1, len(traj)):
        try:
            shoot = geo.log_map(traj[i - 1], traj[i])
            rows[i] = geo.parallel_transport(traj[i - 1], ref.shape, shoot).ravel()
        except AntipodalError:
            raise AntipodalError("parallel transport undefined", index=i) from None
    return TangentTrajectory(rows, Projection.SHOOTING_PT, ref)


def preshape_rows(traj):
    """Flattened pre-shape coordinates, the no-projection baseline encoding."""
    return TangentTrajectory(traj.shapes.reshape(len(traj), -1).copy(), Projection.NONE, None)


def project(traj, projection, ref=None):
    projection = Projection(projection)
    if projection is Projection.NONE:
        return preshape_rows(traj)
    if projection is Projection.FIRST_FRAME:
        return project_first_frame(traj)
    if ref is None:
        raise ValueError(f"projection {projection.value!r} requires a reference shape")
    if projection is Projection.COMMON_REFERENCE:
        return project_common(traj, ref)
    return project_shooting_pt(traj, ref)


def row_to_matrix(row):
    """``3 (n - 1)`` row to a ``3 x (n - 1)`` matrix; column ``j`` is pseudo-joint ``j``."""
    row = np.asarray(row)
    if row.ndim != 1 or row.size % 3:
        raise DimensionError(f"row length must be divisible by 3, got shape {row.shape}")
    return row.reshape(-1, 3).T.copy()


def matrix_to_row(mat):
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != 3:
        raise DimensionError(f"expected a 3 x J matrix, got shape {mat.shape}")
    return mat.T.ravel().copy()


def reference_from_sequence(seq, provenance=None):
    """Pre-shape of a sequence's first frame, used as the default reference."""
    try:
        shape = geo.to_preshape(seq.frames[0])
    except DegenerateShapeError as exc:
        raise DegenerateShapeError(str(exc), frame=0, sequence_id=seq.id) from None
    return ReferenceShape(shape, provenance or f"frame 0 of sequence {seq.id}")


def encode_sequence(seq, ref, projection, align, frames):
    """Full preprocessing of one raw sequence into a ``(frames, 3 (n - 1))`` array."""
    traj = sequence_to_trajectory(resample_sequence(seq, frames), ref, align)
    return project(traj, projection, ref).data
