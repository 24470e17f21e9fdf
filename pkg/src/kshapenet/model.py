"""KShapeNet assembly, training and evaluation.

Layer order: transform (optional) -> conv -> conv -> max-pool -> LSTM -> dense.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, DimensionError
from .layers import (
    LSTM,
    AdamState,
    Conv1D,
    Dense,
    MaxPool1D,
    TransformLayer,
    TransformVariant,
    adam_step,
    softmax_cross_entropy,
)
from .trajectory import Projection, encode_sequence, reference_from_sequence

TRANSFORM_OFF = "off"


@dataclass
class KShapeNetConfig:
    frames: int = 100
    joints: int = 25
    classes: int = 60
    projection: str = Projection.COMMON_REFERENCE.value
    transform: str = TransformVariant.NONRIGID_ANGLE.value
    align: bool = True
    conv1_channels: int = 64
    conv1_kernel: int = 5
    conv2_channels: int = 64
    conv2_kernel: int = 3
    pool_window: int = 2
    lstm_hidden: int = 128
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    reference_id: str | None = None  # sequence whose first frame is the reference

    def __post_init__(self):
        self.projection = Projection(self.projection).value
        if self.transform != TRANSFORM_OFF:
            self.transform = TransformVariant(self.transform).value
        if self.frames < 4:
            raise DimensionError(f"frames must be >= 4, got {self.frames}")
        if self.classes < 2:
            raise DimensionError(f"need at least 2 classes, got {self.classes}")
        if self.joints < 3:
            raise DimensionError(f"need at least 3 joints, got {self.joints}")

    @property
    def features(self):
        return 3 * (self.joints - 1)

    @property
    def is_baseline(self):
        return self.projection == Projection.NONE.value and self.transform == TRANSFORM_OFF

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Dataset:
    """Encoded sequences ready for the network."""

    ids: list
    X: np.ndarray  # (N, T, D)
    y: np.ndarray  # (N,)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.ids = [str(i) for i in self.ids]
        if not (len(self.ids) == len(self.X) == len(self.y)):
            raise DatasetError("ids, X and y must have equal length")

    def __len__(self):
        return len(self.ids)


@dataclass
class Metrics:
    accuracy: float = float("nan")
    confusion: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    train_accuracy: float | None = None
    test_accuracy: float | None = None

    def to_dict(self):
        return dataclasses.asdict(self)


class Model:
    def __init__(self, config, reference, layers):
        self.config = config
        self.reference = reference
        self.layers = layers  # list of (name, layer)
        self.adam = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)

    @property
    def params(self):
        return {
            f"{name}.{key}": arr
            for name, layer in self.layers
            for key, arr in layer.params.items()
        }

    def layer(self, name):
        return dict(self.layers)[name]

    def forward_cache(self, X):
        X = np.asarray(X, dtype=np.float64)
        cfg = self.config
        if X.ndim != 3 or X.shape[1:] != (cfg.frames, cfg.features):
            raise DimensionError(f"expected (batch, {cfg.frames}, {cfg.features}), got {X.shape}")
        caches = []
        h = X
        for _, layer in self.layers:
            h, cache = layer.forward_cache(h)
            caches.append(cache)
        return h, caches

    def backward(self, caches, grad_logits):
        grads = {}
        g = grad_logits
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            g, layer_grads = layer.backward(cache, g)
            for key, val in layer_grads.items():
                grads[f"{name}.{key}"] = val
        return g, grads

    def loss_and_grads(self, X, y):
        logits, caches = self.forward_cache(X)
        loss, g = softmax_cross_entropy(logits, y)
        _, grads = self.backward(caches, g)
        return loss, grads

    def set_params(self, values):
        current = self.params
        for name, val in values.items():
            if name not in current:
                raise KeyError(f"unknown parameter {name!r}")
            val = np.asarray(val, dtype=np.float64)
            if val.shape != current[name].shape:
                raise DimensionError(f"{name}: shape {val.shape} != {current[name].shape}")
            current[name][...] = val


def build_model(config, reference=None):
    """Deterministically initialise every layer from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    layers = []
    if config.transform != TRANSFORM_OFF:
        layers.append(("transform", TransformLayer(config.transform, config.frames, config.joints - 1)))
    layers.append(("conv1", Conv1D(config.features, config.conv1_channels, config.conv1_kernel, rng)))
    layers.append(("conv2", Conv1D(config.conv1_channels, config.conv2_channels, config.conv2_kernel, rng)))
    if config.frames // config.pool_window < 1:
        raise DimensionError("pool window longer than sequence")
    layers.append(("pool", MaxPool1D(config.pool_window)))
    layers.append(("lstm", LSTM(config.conv2_channels, config.lstm_hidden, rng)))
    layers.append(("dense", Dense(config.lstm_hidden, config.classes, rng)))
    return Model(config, reference, layers)


def forward(model, X):
    return model.forward_cache(X)[0]


def _check_dataset(dataset, classes):
    if len(dataset) == 0:
        raise DatasetError("dataset is empty")
    if np.any(dataset.y < 0) or np.any(dataset.y >= classes):
        raise DatasetError(f"labels must lie in [0, {classes})")


def evaluate(model, dataset, batch_size=256):
    """Accuracy and confusion matrix (rows = true class, columns = prediction)."""
    K = model.config.classes
    _check_dataset(dataset, K)
    preds = np.concatenate(
        [
            forward(model, dataset.X[i : i + batch_size]).argmax(axis=1)
            for i in range(0, len(dataset), batch_size)
        ]
    )
    return metrics_from_predictions(preds, dataset.y, K)


def metrics_from_predictions(preds, labels, classes):
    confusion = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return Metrics(accuracy=accuracy, confusion=confusion.tolist())


def train(model, train_set, test_set=None, epochs=None, progress=None):
    """Mini-batch Adam on mean cross-entropy; updates ``model`` in place.

    Sequences are put in id order before the seeded shuffle, so the result
    does not depend on the order of ``train_set``.
    """
    cfg = model.config
    _check_dataset(train_set, cfg.classes)
    if test_set is not None:
        _check_dataset(test_set, cfg.classes)
    epochs = cfg.epochs if epochs is None else epochs
    canonical = np.array(sorted(range(len(train_set)), key=lambda i: train_set.ids[i]), dtype=np.int64)
    X = train_set.X[canonical]
    y = train_set.y[canonical]
    rng = np.random.default_rng([cfg.seed, 1])
    params = model.params
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(X[idx], y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            adam_step(params, grads, model.adam)
            total += loss * len(idx)
        losses.append(total / len(X))
        if progress is not None:
            progress(epoch, losses[-1])
    train_metrics = evaluate(model, train_set)
    final = evaluate(model, test_set) if test_set is not None else train_metrics
    final.epoch_losses = losses
    final.train_accuracy = train_metrics.accuracy
    final.test_accuracy = final.accuracy if test_set is not None else None
    return final


def encode_dataset(sequences, config, reference):
    """Run the preprocessing pipeline over raw sequences."""
    if not sequences:
        return Dataset([], np.zeros((0, config.frames, config.features)), [])
    X = np.stack(
        [
            encode_sequence(s, reference, config.projection, config.align, config.frames)
            for s in sequences
        ]
    )
    return Dataset([s.id for s in sequences], X, [s.label for s in sequences])


def default_reference(train_sequences, reference_id=None):
    """First frame of the first training sequence, or of ``reference_id`` if given."""
    if not train_sequences:
        raise DatasetError("no training sequences to take a reference from")
    if reference_id is None:
        return reference_from_sequence(train_sequences[0])
    for seq in train_sequences:
        if seq.id == reference_id:
            return reference_from_sequence(seq)
    raise DatasetError(f"reference sequence {reference_id!r} is not in the training split")


def fit_config(config, train_sequences, test_sequences, reference=None):
    """Encode, build and train one configuration; returns ``(model, metrics)``."""
    reference = reference or default_reference(train_sequences, config.reference_id)
    train_set = encode_dataset(train_sequences, config, reference)
    test_set = encode_dataset(test_sequences, config, reference)
    model = build_model(config, reference)
    return model, train(model, train_set, test_set)


ABLATION_ROWS = (
    "Baseline",
    "With transformation layer only",
    "With projection to tangent space only",
    "Full",
)


def ablation_configs(base):
    transform = base.transform if base.transform != TRANSFORM_OFF else TransformVariant.NONRIGID_ANGLE.value
    projection = (
        base.projection if base.projection != Projection.NONE.value else Projection.COMMON_REFERENCE.value
    )
    return [
        (ABLATION_ROWS[0], base.replace(projection=Projection.NONE.value, transform=TRANSFORM_OFF)),
        (ABLATION_ROWS[1], base.replace(projection=Projection.NONE.value, transform=transform)),
        (ABLATION_ROWS[2], base.replace(projection=projection, transform=TRANSFORM_OFF)),
        (ABLATION_ROWS[3], base.replace(projection=projection, transform=transform)),
    ]


def variant_configs(base):
    return [(v.value, base.replace(transform=v.value)) for v in TransformVariant]


def projection_configs(base):
    rows = (Projection.COMMON_REFERENCE, Projection.FIRST_FRAME, Projection.SHOOTING_PT)
    return [(p.value, base.replace(projection=p.value)) for p in rows]


def run_grid(named_configs, train_sequences, test_sequences, reference=None):
    """Train each ``(name, config)`` pair; returns a list of row dicts."""
    named_configs = list(named_configs)
    if reference is None and named_configs:
        reference = default_reference(train_sequences, named_configs[0][1].reference_id)
    rows = []
    for name, cfg in named_configs:
        _, metrics = fit_config(cfg, train_sequences, test_sequences, reference)
        rows.append(
            {
                "name": name,
                "projection": cfg.projection,
                "transform": cfg.transform,
                "seed": cfg.seed,
                "epochs": cfg.epochs,
                "train_accuracy": metrics.train_accuracy,
                "test_accuracy": metrics.test_accuracy,
                "final_loss": metrics.epoch_losses[-1] if metrics.epoch_losses else None,
            }
        )
    return rows


def run_ablation(base, train_sequences, test_sequences, reference=None):
    return run_grid(ablation_configs(base), train_sequences, test_sequences, reference)
