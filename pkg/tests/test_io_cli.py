import json

import numpy as np
import pytest

from kshapenet import checks, cli, io
from kshapenet import geometry as geo
from kshapenet.errors import DatasetError
from kshapenet.model import KShapeNetConfig, build_model, encode_dataset, train
from kshapenet.synth import SyntheticSpec, canonical_figure, generate
from kshapenet.trajectory import SkeletonSequence, reference_from_sequence

SMALL_NET = {
    "conv1_channels": 8,
    "conv2_channels": 8,
    "lstm_hidden": 8,
    "lr": 1e-3,
    "batch_size": 8,
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "net.json"
    path.write_text(json.dumps(SMALL_NET))
    return str(path)


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


class TestSynth:
    def test_counts_and_balance(self):
        seqs, classes, split = generate(SyntheticSpec(classes=3, sequences_per_class=20))
        assert len(seqs) == 60 and len(classes) == 3
        assert np.bincount([s.label for s in seqs]).tolist() == [20, 20, 20]
        assert (len(split["train"]), len(split["test"])) == (39, 21)
        assert sorted(split["train"] + split["test"]) == sorted(s.id for s in seqs)

    def test_split_sizes(self):
        _, _, split = generate(SyntheticSpec(classes=3, sequences_per_class=30))
        assert (len(split["train"]), len(split["test"])) == (60, 30)

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            seqs, _, _ = generate(SyntheticSpec(seed=4, sequences_per_class=4))
            io.write_sequences(tmp_path / f"{name}.jsonl", seqs)
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_seed_matters(self):
        a = generate(SyntheticSpec(seed=0, sequences_per_class=2))[0]
        b = generate(SyntheticSpec(seed=1, sequences_per_class=2))[0]
        assert not np.allclose(a[0].frames, b[0].frames)

    def test_noise_free_copies_share_shape(self):
        seqs, _, _ = generate(SyntheticSpec(classes=2, sequences_per_class=3, noise=0.0, frames=10))
        a, b = seqs[0], seqs[1]
        assert a.label == b.label
        assert not np.allclose(a.frames, b.frames)
        for fa, fb in zip(a.frames, b.frames):
            x, y = geo.to_preshape(fa), geo.to_preshape(fb)
            R = geo.procrustes_rotation(x, y)
            assert geo.geodesic_distance(x, geo.rotate(y, R)) < 1e-9
        x, y = geo.to_preshape(seqs[0].frames[5]), geo.to_preshape(seqs[3].frames[5])
        assert geo.geodesic_distance(x, geo.rotate(y, geo.procrustes_rotation(x, y))) > 1e-3

    @pytest.mark.parametrize("n", [3, 8, 11, 25])
    def test_figure_tree(self, n):
        parents, offsets = canonical_figure(n)
        assert parents[0] == -1 and len(parents) == n
        assert all(0 <= p < j for j, p in enumerate(parents) if j)
        assert offsets.shape == (n, 3)


class TestFiles:
    def test_manifest_roundtrip(self, tmp_path):
        seqs, classes, split = generate(SyntheticSpec(classes=2, sequences_per_class=3))
        io.write_sequences(tmp_path / "s.jsonl", seqs)
        io.write_manifest(tmp_path / "m.json", tmp_path / "s.jsonl", 8, classes, split)
        train_seqs, test_seqs = io.read_manifest(tmp_path / "m.json").load()
        assert [s.id for s in train_seqs] == split["train"]
        assert [s.id for s in test_seqs] == split["test"]
        by_id = {s.id: s for s in seqs}
        for s in train_seqs + test_seqs:
            np.testing.assert_array_equal(s.frames, by_id[s.id].frames)

    def test_manifest_rejects_unknown_id(self, tmp_path):
        seqs, classes, split = generate(SyntheticSpec(classes=2, sequences_per_class=2))
        io.write_sequences(tmp_path / "s.jsonl", seqs)
        split["test"].append("ghost")
        io.write_manifest(tmp_path / "m.json", tmp_path / "s.jsonl", 8, classes, split)
        with pytest.raises(DatasetError):
            io.read_manifest(tmp_path / "m.json").load()

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(DatasetError):
            io.read_sequences(tmp_path / "x.csv")

    def test_custom_reader(self, tmp_path):
        frames = np.arange(4 * 3 * 3, dtype=float).reshape(4, 3, 3) ** 1.5
        io.register_reader(".npy", lambda p: [SkeletonSequence(p.stem, 0, np.load(p))])
        np.save(tmp_path / "walk.npy", frames)
        (seq,) = io.read_sequences(tmp_path / "walk.npy")
        assert seq.id == "walk" and seq.n_joints == 3

    def test_tangent_file_bit_exact(self, tmp_path):
        seqs, classes, split = generate(SyntheticSpec(classes=2, sequences_per_class=3, frames=12))
        cfg = KShapeNetConfig(frames=10, joints=8, classes=2)
        ref = reference_from_sequence(seqs[0])
        tr = encode_dataset(seqs[:4], cfg, ref)
        te = encode_dataset(seqs[4:], cfg, ref)
        io.write_tangent_file(tmp_path / "t.txt", cfg, ref, classes, tr, te)
        back = io.read_tangent_file(tmp_path / "t.txt")
        assert back.config == cfg
        np.testing.assert_array_equal(back.reference.shape, ref.shape)
        np.testing.assert_array_equal(back.train.X, tr.X)
        np.testing.assert_array_equal(back.test.X, te.X)
        assert back.train.ids == tr.ids and back.test.y.tolist() == te.y.tolist()

    def test_checkpoint_roundtrip(self, tmp_path, rng):
        cfg = KShapeNetConfig(frames=8, joints=5, classes=2, conv1_channels=4, conv2_channels=4, lstm_hidden=3, epochs=2)
        model = build_model(cfg)
        X = rng.normal(size=(4, 8, 12))
        from kshapenet.model import Dataset, forward

        train(model, Dataset(list("abcd"), X, [0, 1, 0, 1]))
        io.save_checkpoint(tmp_path / "c.json", model)
        back = io.load_checkpoint(tmp_path / "c.json")
        for k, v in model.params.items():
            np.testing.assert_array_equal(back.params[k], v)
        assert back.adam.step == model.adam.step
        np.testing.assert_array_equal(forward(back, X), forward(model, X))


class TestPipelineEncoding:
    def test_reference_frame_encodes_to_zero(self):
        seqs, _, _ = generate(SyntheticSpec(classes=2, sequences_per_class=1, frames=12))
        cfg = KShapeNetConfig(frames=12, joints=8, classes=2)
        ref = reference_from_sequence(seqs[0])
        X = encode_dataset(seqs, cfg, ref).X
        assert np.abs(X[0, 0]).max() < 1e-12

    def test_exp_reconstructs_aligned_preshapes(self):
        seqs, _, _ = generate(SyntheticSpec(classes=2, sequences_per_class=2, frames=12))
        cfg = KShapeNetConfig(frames=12, joints=8, classes=2)
        ref = reference_from_sequence(seqs[0])
        X = encode_dataset(seqs[1:], cfg, ref).X[0]
        for t in range(12):
            z = geo.exp_map(ref.shape, X[t].reshape(7, 3))
            target = geo.to_preshape(seqs[1].frames[t])
            R = geo.procrustes_rotation(ref.shape, target)
            assert np.abs(z - geo.rotate(target, R)).max() < 1e-9


class TestCli:
    def pipeline(self, tmp_path, capsys, small_config, tag):
        d = tmp_path / tag
        assert run(["synth", "--out", d, "--per-class", 6, "--seed", 3], capsys)[0] == 0
        assert run(["preprocess", d / "manifest.json", "--out", d / "tangent.txt", "--frames", 20,
                    "--config", small_config], capsys)[0] == 0
        code, out = run(["train", d / "tangent.txt", "--out", d / "ckpt.json", "--epochs", 3,
                         "--metrics", d / "metrics.json"], capsys)
        assert code == 0
        assert json.loads(out.out) == json.loads((d / "metrics.json").read_text())
        code, out = run(["eval", d / "ckpt.json", d / "tangent.txt", "--split", "all", "--out", d / "eval.json"], capsys)
        assert code == 0
        return d

    def test_pipeline_byte_identical(self, tmp_path, capsys, small_config):
        a = self.pipeline(tmp_path, capsys, small_config, "a")
        b = self.pipeline(tmp_path, capsys, small_config, "b")
        for name in ("sequences.jsonl", "manifest.json", "tangent.txt", "ckpt.json", "metrics.json", "eval.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        metrics = json.loads((a / "eval.json").read_text())
        assert np.array(metrics["confusion"]).sum() == 18

    def test_train_refuses_projection_override(self, tmp_path, capsys, small_config):
        d = tmp_path / "x"
        run(["synth", "--out", d, "--per-class", 3], capsys)
        run(["preprocess", d / "manifest.json", "--out", d / "t.txt", "--config", small_config], capsys)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"projection": "first_frame"}))
        code, out = run(["train", d / "t.txt", "--out", d / "c.json", "--config", bad], capsys)
        assert code == 2 and "fixed by the tangent file" in out.err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code, out = run(["preprocess", tmp_path / "nope.json", "--out", tmp_path / "t.txt"], capsys)
        assert code == 2 and out.err.startswith("error:")

    @pytest.mark.parametrize("command, rows", [("ablate", 4), ("variants", 4), ("projections", 3)])
    def test_grid_commands(self, tmp_path, capsys, small_config, command, rows):
        d = tmp_path / "g"
        run(["synth", "--out", d, "--per-class", 3, "--frames", 12], capsys)
        code, out = run([command, d / "manifest.json", "--config", small_config, "--epochs", 1,
                         "--frames", 8, "--out", d / "table.json"], capsys)
        assert code == 0
        table = json.loads(out.out)
        assert len(table["rows"]) == rows
        assert all(np.isfinite(r["final_loss"]) for r in table["runs"])

    def test_check_exits_zero(self, capsys):
        code, out = run(["check", "pipeline"], capsys)
        assert code == 0 and "2/2 checks passed" in out.out


def test_theta_normalised_transport_is_caught():
    def wrong(x, y, u):
        theta = geo.geodesic_distance(x, y)
        v, w = geo.log_map(x, y), geo.log_map(y, x)
        return u - (float(np.vdot(v, u)) / theta) * (w + v)

    results = {r.name: r for r in checks.check_geometry(n=8, trials=50, transport=wrong)}
    assert not results["transport isometry"].passed
    good = {r.name: r for r in checks.check_geometry(n=8, trials=50)}
    assert good["transport isometry"].passed
