"""``kshapenet`` command-line interface."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .checks import run_checks
from .errors import KShapeError
from .model import (
    Dataset,
    KShapeNetConfig,
    ablation_configs,
    build_model,
    default_reference,
    encode_dataset,
    evaluate,
    projection_configs,
    run_grid,
    train,
    variant_configs,
)
from .synth import SyntheticSpec, generate


def _load_config_file(path):
    if path is None:
        return {}
    data = io.read_json(path)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def _model_config(args, joints, classes, base=None):
    values = base.to_dict() if base is not None else {}
    values.update(_load_config_file(args.config))
    for key in ("seed", "epochs", "frames"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    values["joints"] = joints
    values["classes"] = classes
    return KShapeNetConfig.from_dict(values)


def _load_manifest(path):
    manifest = io.read_manifest(path)
    train_seqs, test_seqs = manifest.load()
    return manifest, train_seqs, test_seqs


def _emit(obj, out):
    text = io.dumps(obj)
    if out is not None:
        Path(out).write_text(text)
    sys.stdout.write(text)


def cmd_synth(args):
    values = _load_config_file(args.config)
    for key in ("seed", "frames", "classes", "joints", "noise"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    if args.per_class is not None:
        values["sequences_per_class"] = args.per_class
    spec = SyntheticSpec(**values)
    sequences, classes, split = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_sequences(out / "sequences.jsonl", sequences)
    io.write_manifest(out / "manifest.json", out / "sequences.jsonl", spec.joints, classes, split)
    print(f"wrote {len(sequences)} sequences ({len(split['train'])} train / {len(split['test'])} test) to {out}")


def cmd_preprocess(args):
    manifest, train_seqs, test_seqs = _load_manifest(args.manifest)
    cfg = _model_config(args, manifest.joints, len(manifest.classes))
    ref = default_reference(train_seqs, cfg.reference_id)
    train_set = encode_dataset(train_seqs, cfg, ref)
    test_set = encode_dataset(test_seqs, cfg, ref)
    io.write_tangent_file(args.out, cfg, ref, manifest.classes, train_set, test_set)
    print(f"wrote {len(train_set)} train / {len(test_set)} test tangent trajectories to {args.out}")


def cmd_train(args):
    data = io.read_tangent_file(args.tangent)
    fixed = data.config
    cfg = _model_config(args, fixed.joints, fixed.classes, base=fixed)
    for key in ("frames", "projection", "align", "reference_id"):
        if getattr(cfg, key) != getattr(fixed, key):
            raise ValueError(f"{key!r} is fixed by the tangent file ({getattr(fixed, key)!r})")
    model = build_model(cfg, data.reference)
    log = (lambda e, l: print(f"epoch {e + 1:4d}  loss {l:.6f}", file=sys.stderr)) if args.verbose else None
    metrics = train(model, data.train, data.test if len(data.test) else None, progress=log)
    io.save_checkpoint(args.out, model)
    _emit(metrics.to_dict(), args.metrics)


def cmd_eval(args):
    model = io.load_checkpoint(args.checkpoint)
    data = io.read_tangent_file(args.tangent)
    if args.split == "all":
        ds = Dataset(
            data.train.ids + data.test.ids,
            np.concatenate([data.train.X, data.test.X]),
            np.concatenate([data.train.y, data.test.y]),
        )
    else:
        ds = getattr(data, args.split)
    _emit(evaluate(model, ds).to_dict(), args.out)


def _grid(args, make_configs):
    manifest, train_seqs, test_seqs = _load_manifest(args.manifest)
    if not test_seqs:
        raise KShapeError("grid commands need a non-empty test split")
    base = _model_config(args, manifest.joints, len(manifest.classes))
    ref = default_reference(train_seqs, base.reference_id)
    rows = []
    for r in range(args.repeats):
        rows.extend(run_grid(make_configs(base.replace(seed=base.seed + r)), train_seqs, test_seqs, ref))
    names = list(dict.fromkeys(row["name"] for row in rows))
    summary = []
    for name in names:
        mine = [row for row in rows if row["name"] == name]
        summary.append(
            {
                "name": name,
                "projection": mine[0]["projection"],
                "transform": mine[0]["transform"],
                "mean_train_accuracy": float(np.mean([m["train_accuracy"] for m in mine])),
                "mean_test_accuracy": float(np.mean([m["test_accuracy"] for m in mine])),
                "runs": len(mine),
            }
        )
    for row in summary:
        print(
            f"{row['name']:<40s} train {100 * row['mean_train_accuracy']:6.2f}%  "
            f"test {100 * row['mean_test_accuracy']:6.2f}%",
            file=sys.stderr,
        )
    table = {"config": base.to_dict(), "rows": summary, "runs": rows}
    if args.out is not None:
        Path(args.out).write_text(io.dumps(table))
    sys.stdout.write(io.dumps(table))


def cmd_check(args):
    results = run_checks(args.suite, seed=args.seed if args.seed is not None else 0)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _common(p, out_required=False, frames=True, epochs=True):
    p.add_argument("--config", help="JSON file with configuration overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=out_required)
    if frames:
        p.add_argument("--frames", type=int)
    if epochs:
        p.add_argument("--epochs", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="kshapenet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic skeleton-action dataset")
    _common(p, out_required=True, epochs=False)
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--joints", type=int)
    p.add_argument("--noise", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="encode a dataset into a tangent-tensor file")
    p.add_argument("manifest")
    _common(p, out_required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train on a tangent-tensor file, write a checkpoint")
    p.add_argument("tangent")
    _common(p, out_required=True, frames=False)
    p.add_argument("--metrics", help="also write metrics JSON here")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a tangent-tensor file")
    p.add_argument("checkpoint")
    p.add_argument("tangent")
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    for name, make, help_text in (
        ("ablate", ablation_configs, "baseline / +transform / +projection / full"),
        ("variants", variant_configs, "the four transformation-layer variants"),
        ("projections", projection_configs, "common reference / first frame / shooting-vector transport"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("manifest")
        _common(p)
        p.add_argument("--repeats", type=int, default=1, help="model seeds seed..seed+repeats-1")
        p.set_defaults(func=lambda a, make=make: _grid(a, make))

    p = sub.add_parser("check", help="run the built-in property suites")
    p.add_argument("suite", nargs="?", default="all", choices=["geometry", "gradients", "pipeline", "all"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (KShapeError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
