"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured value
and its threshold; the lines are also collected into a summary section at
the end of the pytest run.  Run on its own with

    pytest tests/test_acceptance.py -v
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from kshapenet import cli, geometry as geo
from kshapenet.checks import check_geometry, check_gradients, so3_drift_after_adam
from kshapenet.model import KShapeNetConfig, build_model, default_reference, encode_dataset, fit_config, forward, run_ablation
from kshapenet.synth import SyntheticSpec, generate
from kshapenet.trajectory import SkeletonSequence

from conftest import ACCEPTANCE_LINES, random_rotation

DESK_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.json"


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def desk_data(seed=0):
    seqs, _, split = generate(SyntheticSpec(classes=3, sequences_per_class=30, frames=40, joints=8, noise=0.02, seed=seed))
    by_id = {s.id: s for s in seqs}
    return [by_id[i] for i in split["train"]], [by_id[i] for i in split["test"]]


def test_geometry_suite():
    t0 = time.perf_counter()
    results = {r.name: r for r in check_geometry(n=25, trials=1000, seed=0)}
    elapsed = time.perf_counter() - t0
    wanted = {
        "exp(log) roundtrip": 1e-10,
        "log tangency": 1e-10,
        "transport isometry": 1e-9,
        "transport target tangency": 1e-9,
        "helmert orthonormality and zero row sums": 1e-12,
    }
    worst = {k: results[k].max_error for k in wanted}
    ok = all(worst[k] < tol for k, tol in wanted.items()) and elapsed < 10.0
    detail = ", ".join(f"{k} {worst[k]:.1e}<{wanted[k]:.0e}" for k in wanted)
    report("geometry suite (n=25, 1000 pairs)", ok, f"{detail}; {elapsed:.2f}s<10s")


def test_procrustes_recovery():
    rng = np.random.default_rng(2024)
    rot_err = dist = 0.0
    for _ in range(500):
        x = rng.normal(size=(24, 3))
        x /= np.linalg.norm(x)
        R = random_rotation(rng)
        y = x @ R  # y rotated by R.T; aligning y back needs R
        found = geo.procrustes_rotation(x, y)
        rot_err = max(rot_err, np.abs(found - R).max())
        dist = max(dist, geo.geodesic_distance(x, geo.rotate(y, found)))
    ok = rot_err < 1e-8 and dist < 1e-9
    report("procrustes recovery (500 planted)", ok, f"entry error {rot_err:.1e}<1e-8, distance {dist:.1e}<1e-9")


def test_gradient_master_check():
    t0 = time.perf_counter()
    results = check_gradients(seed=0)
    elapsed = time.perf_counter() - t0
    grads = [r for r in results if r.name.endswith("gradient")]
    layers = max(r.max_error for r in grads if r.name != "end-to-end model gradient")
    e2e = next(r.max_error for r in grads if r.name == "end-to-end model gradient")
    names = {r.name for r in grads}
    covered = all(
        any(key in n for n in names)
        for key in ("rigid_matrix", "rigid_angle", "nonrigid_matrix", "nonrigid_angle", "conv1d", "maxpool", "lstm", "dense", "cross-entropy")
    )
    ok = covered and layers < 1e-5 and e2e < 1e-4 and elapsed < 60.0
    report("gradient master check", ok, f"layers {layers:.1e}<1e-5, end-to-end {e2e:.1e}<1e-4; {elapsed:.2f}s<60s")


def test_so3_constraint():
    drift = so3_drift_after_adam(seed=0, steps=100)
    report("SO(3) after 100 Adam steps", drift < 1e-10, f"max(|O^T O - I|, |det O - 1|) {drift:.1e}<1e-10")


def test_pipeline_invariance():
    rng = np.random.default_rng(7)
    train_seqs, _ = desk_data(seed=0)
    ref = default_reference(train_seqs)
    cfg = KShapeNetConfig(frames=40, joints=8, classes=3, projection="common_reference", align=True, seed=1)
    model = build_model(cfg, ref)
    for p in model.params.values():
        p += 0.05 * rng.normal(size=p.shape)
    worst = 0.0
    for seq in train_seqs[:10]:
        R = random_rotation(rng)
        moved = SkeletonSequence(seq.id + "_m", seq.label, rng.uniform(0.2, 5.0) * seq.frames @ R.T + rng.normal(scale=10, size=3))
        X = encode_dataset([seq, moved], cfg, ref).X
        logits = forward(model, X)
        worst = max(worst, np.abs(logits[0] - logits[1]).max())
    report("pipeline similarity invariance", worst < 1e-6, f"max logit gap {worst:.1e}<1e-6")


def test_desk_scale_learning():
    train_seqs, test_seqs = desk_data(seed=0)
    cfg = KShapeNetConfig(frames=40, joints=8, classes=3, epochs=200, seed=0)
    t0 = time.perf_counter()
    _, metrics = fit_config(cfg, train_seqs, test_seqs)
    elapsed = time.perf_counter() - t0
    ok = metrics.train_accuracy >= 0.95 and metrics.test_accuracy >= 0.80 and elapsed < 300
    report(
        "desk-scale learning (3x(20+10), T=40, n=8)",
        ok,
        f"train {metrics.train_accuracy:.3f}>=0.95, test {metrics.test_accuracy:.3f}>=0.80, {elapsed:.1f}s<300s",
    )


def test_ablation_trend():
    desk = json.loads(DESK_CONFIG.read_text())
    full, base = [], []
    for seed in range(5):
        train_seqs, test_seqs = desk_data(seed=seed)
        cfg = KShapeNetConfig(frames=40, joints=8, classes=3, seed=seed, **desk)
        rows = {r["name"]: r for r in run_ablation(cfg, train_seqs, test_seqs)}
        base.append(rows["Baseline"]["test_accuracy"])
        full.append(rows["Full"]["test_accuracy"])
    ok = np.mean(full) >= np.mean(base)
    report("ablation trend over 5 seeds", ok, f"mean test Full {np.mean(full):.3f} >= Baseline {np.mean(base):.3f}")


def _cli(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out


def test_variant_grids(tmp_path, capsys):
    d = tmp_path / "data"
    assert _cli(["synth", "--out", d, "--per-class", 30, "--frames", 40, "--seed", 0], capsys)[0] == 0
    counts, finite = {}, True
    for command in ("variants", "projections"):
        code, out = _cli([command, d / "manifest.json", "--config", DESK_CONFIG, "--frames", 40], capsys)
        table = json.loads(out) if code == 0 else {"rows": [], "runs": []}
        counts[command] = len(table["rows"])
        finite &= code == 0 and all(np.isfinite(r["final_loss"]) for r in table["runs"])
    ok = counts == {"variants": 4, "projections": 3} and finite
    report("variant and projection grids", ok, f"rows {counts['variants']}/4 and {counts['projections']}/3, all finite: {finite}")


def test_determinism(tmp_path, capsys):
    quick = tmp_path / "quick.json"
    quick.write_text(json.dumps({**json.loads(DESK_CONFIG.read_text()), "epochs": 3}))
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        captured = {}
        steps = [
            ("synth", ["synth", "--out", d, "--per-class", 6, "--frames", 20, "--seed", 5]),
            ("preprocess", ["preprocess", d / "manifest.json", "--out", d / "t.txt", "--config", quick]),
            ("train", ["train", d / "t.txt", "--out", d / "c.json"]),
            ("eval", ["eval", d / "c.json", d / "t.txt"]),
            ("ablate", ["ablate", d / "manifest.json", "--config", quick, "--frames", 12]),
            ("variants", ["variants", d / "manifest.json", "--config", quick, "--frames", 12]),
            ("projections", ["projections", d / "manifest.json", "--config", quick, "--frames", 12]),
            ("check", ["check", "gradients", "--seed", 3]),
        ]
        for name, argv in steps:
            code, out = _cli(argv, capsys)
            assert code == 0, name
            captured[name] = out.replace(str(d), "<dir>")
        for f in ("sequences.jsonl", "manifest.json", "t.txt", "c.json"):
            captured[f] = (d / f).read_bytes()
        outputs.append(captured)
    differ = [k for k in outputs[0] if outputs[0][k] != outputs[1][k]]
    report("byte-identical reruns", not differ, f"{len(outputs[0])} outputs compared, differing: {differ or 'none'}")
