"""Synthetic articulated-figure action dataset.

A canonical stick figure is animated by per-class joint-angle curves.  Each
sequence then gets coordinate noise and a random global similarity
transform (rotation, translation, scale), the nuisance Kendall shape
analysis is meant to remove.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DatasetError
from .trajectory import SkeletonSequence

# (name, parent, rest offset from parent)
_BASE_FIGURE = [
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("chest", 0, (0.0, 0.5, 0.0)),
    ("head", 1, (0.0, 0.25, 0.0)),
    ("l_elbow", 1, (0.3, -0.05, 0.0)),
    ("l_hand", 3, (0.28, 0.0, 0.0)),
    ("r_elbow", 1, (-0.3, -0.05, 0.0)),
    ("r_hand", 5, (-0.28, 0.0, 0.0)),
    ("l_knee", 0, (0.12, -0.45, 0.0)),
    ("l_foot", 7, (0.0, -0.45, 0.05)),
    ("r_knee", 0, (-0.12, -0.45, 0.0)),
    ("r_foot", 9, (0.0, -0.45, 0.05)),
]
_EXTREMITIES = (2, 4, 6, 8, 10)


def canonical_figure(n):
    """Parents and rest offsets for an ``n``-joint figure.

    The first eleven joints form a basic humanoid; further joints are
    appended as short chains hanging off the extremities.
    """
    if n < 3:
        raise DatasetError(f"figure needs at least 3 joints, got {n}")
    parents = [p for _, p, _ in _BASE_FIGURE[:n]]
    offsets = [o for _, _, o in _BASE_FIGURE[:n]]
    tips = list(_EXTREMITIES)
    k = 0
    while len(parents) < n:
        slot = k % len(tips)
        parent = tips[slot]
        direction = np.asarray(offsets[parent], dtype=float)
        direction = direction / (np.linalg.norm(direction) or 1.0)
        parents.append(parent)
        offsets.append(tuple(0.1 * direction + 0.03 * np.array([0.0, 0.0, 1.0])))
        tips[slot] = len(parents) - 1
        k += 1
    return np.array(parents), np.array(offsets, dtype=float)


@dataclass
class MotionTemplate:
    """Joint-angle curves ``amp * sin(2 pi freq t + phase)`` about fixed per-joint axes."""

    name: str
    axes: np.ndarray  # (n, 3) unit vectors
    amplitudes: np.ndarray  # (n,) radians
    frequencies: np.ndarray  # (n,) cycles per sequence
    phases: np.ndarray  # (n,)

    def angles(self, t):
        t = np.asarray(t, dtype=float)[:, None]
        return self.amplitudes * np.sin(2 * np.pi * self.frequencies * t + self.phases)


@dataclass
class SyntheticSpec:
    classes: int = 3
    sequences_per_class: int = 30
    frames: int = 40
    joints: int = 8
    noise: float = 0.02
    test_fraction: float = 1.0 / 3.0
    seed: int = 0
    templates: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.noise < 0:
            raise DatasetError("noise must be non-negative")
        if self.classes < 2:
            raise DatasetError("need at least 2 classes")
        if self.sequences_per_class < 1 or self.frames < 2:
            raise DatasetError("need at least one sequence per class and two frames")
        if not 0.0 <= self.test_fraction < 1.0:
            raise DatasetError("test_fraction must lie in [0, 1)")


def make_templates(classes, joints, rng):
    templates = []
    for c in range(classes):
        axes = rng.normal(size=(joints, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        templates.append(
            MotionTemplate(
                name=f"action_{c}",
                axes=axes,
                amplitudes=rng.uniform(0.3, 1.2, size=joints),
                frequencies=rng.choice([0.5, 1.0, 1.5, 2.0], size=joints),
                phases=rng.uniform(0.0, 2 * np.pi, size=joints),
            )
        )
    return templates


def animate(template, parents, offsets, frames):
    """Forward kinematics of the figure under ``template``; returns ``(frames, n, 3)``."""
    n = len(parents)
    angles = template.angles(np.linspace(0.0, 1.0, frames))
    out = np.zeros((frames, n, 3))
    for f in range(frames):
        local = Rotation.from_rotvec(template.axes * angles[f][:, None]).as_matrix()
        glob = np.zeros((n, 3, 3))
        glob[0] = local[0]
        for j in range(1, n):
            p = parents[j]
            glob[j] = glob[p] @ local[j]
            out[f, j] = out[f, p] + glob[p] @ local[j] @ offsets[j]
    return out


def generate(spec):
    """Deterministic dataset from ``spec``.

    Returns ``(sequences, class_names, split)`` where ``split`` maps
    ``"train"``/``"test"`` to lists of sequence ids.
    """
    rng = np.random.default_rng(spec.seed)
    parents, offsets = canonical_figure(spec.joints)
    templates = spec.templates or make_templates(spec.classes, spec.joints, rng)
    if len(templates) != spec.classes:
        raise DatasetError("number of templates must equal number of classes")
    n_test = int(round(spec.test_fraction * spec.sequences_per_class))
    sequences, split = [], {"train": [], "test": []}
    for c, template in enumerate(templates):
        motion = animate(template, parents, offsets, spec.frames)
        for k in range(spec.sequences_per_class):
            frames = motion + spec.noise * rng.normal(size=motion.shape)
            R = Rotation.random(random_state=rng).as_matrix()
            scale = rng.uniform(0.5, 2.0)
            shift = rng.normal(scale=2.0, size=3)
            frames = scale * frames @ R.T + shift
            seq_id = f"c{c:02d}_s{k:03d}"
            sequences.append(SkeletonSequence(seq_id, c, frames))
            part = "test" if k >= spec.sequences_per_class - n_test else "train"
            split[part].append(seq_id)
    return sequences, [t.name for t in templates], split
