"""On-disk formats: sequence files, manifests, tangent-tensor files, checkpoints.

Sequence file (``.jsonl``)
    One JSON object per line with keys ``id`` (str), ``label`` (int),
    ``joints`` (int) and ``frames`` (list of frames, each a list of
    ``[x, y, z]``).  Other sources can be plugged in with
    :func:`register_reader`, keyed by file suffix.

Manifest (``.json``)
    ``{"format": "kshapenet-manifest", "version": 1, "sequences": <path
    relative to the manifest>, "joints": n, "classes": [...],
    "split": {"train": [ids], "test": [ids]}}``

Tangent-tensor file
    Line 1 is a JSON header (format, version, config, reference shape,
    frames, features, classes, and per-record id/label/split).  Then, for
    every record in header order, ``frames`` lines of ``features``
    space-separated floats written with 17 significant digits.

Checkpoint (``.json``)
    Format/version, config, reference shape, every parameter tensor as
    nested lists, and the Adam state.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .layers import AdamState
from .model import Dataset, KShapeNetConfig, build_model
from .trajectory import ReferenceShape, SkeletonSequence

MANIFEST_FORMAT = "kshapenet-manifest"
TANGENT_FORMAT = "kshapenet-tangent"
CHECKPOINT_FORMAT = "kshapenet-checkpoint"
FORMAT_VERSION = 1

_READERS = {}


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def register_reader(suffix, reader):
    """Register ``reader(path) -> list[SkeletonSequence]`` for files ending in ``suffix``."""
    _READERS[suffix.lower()] = reader


def sequence_to_record(seq):
    return {
        "id": seq.id,
        "label": int(seq.label),
        "joints": seq.n_joints,
        "frames": seq.frames.tolist(),
    }


def write_sequences(path, sequences):
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(json.dumps(sequence_to_record(seq), separators=(",", ":")) + "\n")


def _read_jsonl(path):
    sequences = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            seq = SkeletonSequence(rec["id"], rec["label"], rec["frames"])
            if seq.n_joints != rec["joints"]:
                raise DatasetError(
                    f"{path}:{lineno}: sequence {seq.id!r} declares {rec['joints']} joints "
                    f"but frames hold {seq.n_joints}"
                )
            sequences.append(seq)
    return sequences


register_reader(".jsonl", _read_jsonl)


def read_sequences(path):
    path = Path(path)
    reader = _READERS.get(path.suffix.lower())
    if reader is None:
        raise DatasetError(f"no sequence reader registered for {path.suffix!r}")
    return reader(path)


@dataclass
class Manifest:
    sequences: Path
    joints: int
    classes: list
    split: dict

    def load(self):
        """Read and validate the referenced sequences; returns ``(train, test)`` lists."""
        by_id = {}
        for seq in read_sequences(self.sequences):
            if seq.id in by_id:
                raise DatasetError(f"duplicate sequence id {seq.id!r}")
            if seq.n_joints != self.joints:
                raise DatasetError(f"sequence {seq.id!r} has {seq.n_joints} joints, expected {self.joints}")
            if not 0 <= seq.label < len(self.classes):
                raise DatasetError(f"sequence {seq.id!r} label {seq.label} outside class list")
            by_id[seq.id] = seq
        listed = list(self.split.get("train", [])) + list(self.split.get("test", []))
        if len(listed) != len(set(listed)):
            raise DatasetError("a sequence id appears in the split more than once")
        missing = [i for i in listed if i not in by_id]
        if missing:
            raise DatasetError(f"split references unknown ids: {missing[:5]}")
        unlisted = sorted(set(by_id) - set(listed))
        if unlisted:
            raise DatasetError(f"sequences missing from the split: {unlisted[:5]}")
        return [by_id[i] for i in self.split.get("train", [])], [by_id[i] for i in self.split.get("test", [])]


def write_manifest(path, sequences_path, joints, classes, split):
    path = Path(path)
    rel = Path(sequences_path)
    try:
        rel = rel.resolve().relative_to(path.resolve().parent)
    except ValueError:
        rel = rel.resolve()
    write_json(
        path,
        {
            "format": MANIFEST_FORMAT,
            "version": FORMAT_VERSION,
            "sequences": rel.as_posix(),
            "joints": int(joints),
            "classes": list(classes),
            "split": {"train": list(split["train"]), "test": list(split["test"])},
        },
    )


def read_manifest(path):
    path = Path(path)
    data = read_json(path)
    if data.get("format") != MANIFEST_FORMAT:
        raise DatasetError(f"{path} is not a dataset manifest")
    return Manifest(
        sequences=path.parent / data["sequences"],
        joints=int(data["joints"]),
        classes=list(data["classes"]),
        split={k: list(v) for k, v in data["split"].items()},
    )


@dataclass
class TangentFile:
    config: KShapeNetConfig
    reference: ReferenceShape | None
    classes: list
    train: Dataset
    test: Dataset


def _reference_to_json(ref):
    if ref is None:
        return None
    return {"shape": ref.shape.tolist(), "provenance": ref.provenance}


def _reference_from_json(data):
    if data is None:
        return None
    return ReferenceShape(np.array(data["shape"], dtype=np.float64), data["provenance"])


def write_tangent_file(path, config, reference, classes, train, test):
    records = [
        {"id": i, "label": int(l), "split": part}
        for part, ds in (("train", train), ("test", test))
        for i, l in zip(ds.ids, ds.y)
    ]
    header = {
        "format": TANGENT_FORMAT,
        "version": FORMAT_VERSION,
        "config": config.to_dict(),
        "reference": _reference_to_json(reference),
        "frames": config.frames,
        "features": config.features,
        "classes": list(classes),
        "records": records,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for ds in (train, test):
            for seq in ds.X:
                for row in seq:
                    fh.write(" ".join("%.17g" % v for v in row) + "\n")


def read_tangent_file(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != TANGENT_FORMAT:
            raise DatasetError(f"{path} is not a tangent-tensor file")
        if header.get("version") != FORMAT_VERSION:
            raise DatasetError(f"unsupported tangent file version {header.get('version')}")
        T, D = header["frames"], header["features"]
        records = header["records"]
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (len(records) * T, D):
        raise DatasetError(f"{path}: expected {len(records) * T} rows of {D} values, got {data.shape}")
    data = data.reshape(len(records), T, D)
    parts = {}
    for part in ("train", "test"):
        idx = [k for k, r in enumerate(records) if r["split"] == part]
        parts[part] = Dataset(
            [records[k]["id"] for k in idx],
            data[idx] if idx else np.zeros((0, T, D)),
            [records[k]["label"] for k in idx],
        )
    return TangentFile(
        config=KShapeNetConfig.from_dict(header["config"]),
        reference=_reference_from_json(header["reference"]),
        classes=header["classes"],
        train=parts["train"],
        test=parts["test"],
    )


def checkpoint_dict(model):
    adam = model.adam
    return {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "reference": _reference_to_json(model.reference),
        "params": {k: v.tolist() for k, v in model.params.items()},
        "adam": {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "step": adam.step,
            "m": {k: v.tolist() for k, v in adam.m.items()},
            "v": {k: v.tolist() for k, v in adam.v.items()},
        },
    }


def save_checkpoint(path, model):
    Path(path).write_text(json.dumps(checkpoint_dict(model), sort_keys=True) + "\n")


def load_checkpoint(path):
    data = read_json(path)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise DatasetError(f"{path} is not a checkpoint")
    if data.get("version") != FORMAT_VERSION:
        raise DatasetError(f"unsupported checkpoint version {data.get('version')}")
    model = build_model(KShapeNetConfig.from_dict(data["config"]), _reference_from_json(data["reference"]))
    model.set_params(data["params"])
    a = data["adam"]
    model.adam = AdamState(
        lr=a["lr"],
        beta1=a["beta1"],
        beta2=a["beta2"],
        eps=a["eps"],
        step=a["step"],
        m={k: np.array(v, dtype=np.float64) for k, v in a["m"].items()},
        v={k: np.array(v, dtype=np.float64) for k, v in a["v"].items()},
    )
    return model
