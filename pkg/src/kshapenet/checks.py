"""Self-check suites: geometry invariants, gradient checks, pipeline invariances.

Each suite returns a list of :class:`CheckResult`; ``passed`` compares the
measured worst-case error with a fixed tolerance.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
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
from .model import KShapeNetConfig, build_model, forward
from .trajectory import (
    ReferenceShape,
    SkeletonSequence,
    encode_sequence,
    project_common,
    sequence_to_trajectory,
)


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.max_error) and self.max_error < self.tolerance)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<48s} max_err={self.max_error:.3e}  tol={self.tolerance:.0e}"


def random_preshape(rng, n):
    return geo.to_preshape(rng.normal(size=(n, 3)))


def random_tangent(rng, base, scale=1.0):
    v = rng.normal(size=base.shape)
    v -= np.vdot(v, base) * base
    return scale * v


def random_rotation(rng):
    q = rng.normal(size=4)
    a, b, c, d = q / np.linalg.norm(q)
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
        ]
    )


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def numerical_gradient(f, x, step=1e-6):
    """Central differences of scalar ``f`` w.r.t. array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + step
        up = f()
        flat[k] = old - step
        down = f()
        flat[k] = old
        gflat[k] = (up - down) / (2 * step)
    return grad


def check_geometry(n=25, trials=1000, seed=0, transport=geo.parallel_transport):
    rng = np.random.default_rng(seed)
    out = []

    err = 0.0
    for m in range(2, 41):
        H = geo.helmert_submatrix(m)
        err = max(err, np.abs(H @ H.T - np.eye(m - 1)).max(), np.abs(H.sum(axis=1)).max())
    out.append(CheckResult("helmert orthonormality and zero row sums", err, 1e-12))

    err = 0.0
    for _ in range(100):
        X = rng.normal(size=(n, 3))
        base = geo.to_preshape(X)
        moved = geo.to_preshape(rng.uniform(0.1, 10.0) * X + rng.normal(scale=5.0, size=3))
        err = max(err, np.abs(moved - base).max())
    out.append(CheckResult("pre-shape translation/scale invariance", err, 1e-12))

    roundtrip = tangency = norm_gap = iso = target = 0.0
    log_exp = 0.0
    for _ in range(trials):
        x, y = random_preshape(rng, n), random_preshape(rng, n)
        v = geo.log_map(x, y)
        roundtrip = max(roundtrip, np.abs(geo.exp_map(x, v) - y).max())
        tangency = max(tangency, abs(np.vdot(v, x)))
        norm_gap = max(norm_gap, abs(np.linalg.norm(v) - geo.geodesic_distance(x, y)))

        w = random_tangent(rng, x, scale=rng.uniform(0.0, 3.0) / np.sqrt(3 * (n - 1)))
        if np.linalg.norm(w) < np.pi - 1e-3:
            log_exp = max(log_exp, np.abs(geo.log_map(x, geo.exp_map(x, w)) - w).max())

        u, z = random_tangent(rng, x), random_tangent(rng, x)
        pu, pz = transport(x, y, u), transport(x, y, z)
        scale = max(1.0, np.linalg.norm(u) * np.linalg.norm(z))
        iso = max(iso, abs(np.vdot(pu, pz) - np.vdot(u, z)) / scale)
        target = max(target, abs(np.vdot(pu, y)) / max(1.0, np.linalg.norm(u)))
    out.append(CheckResult("exp(log) roundtrip", roundtrip, 1e-10))
    out.append(CheckResult("log(exp) roundtrip", log_exp, 1e-10))
    out.append(CheckResult("log tangency", tangency, 1e-10))
    out.append(CheckResult("log norm equals geodesic distance", norm_gap, 1e-10))
    out.append(CheckResult("transport isometry", iso, 1e-9))
    out.append(CheckResult("transport target tangency", target, 1e-9))

    rot_err = dist_err = 0.0
    for _ in range(500):
        x = random_preshape(rng, n)
        R = random_rotation(rng)
        y = geo.rotate(x, R.T)  # y @ R.T == x
        Rhat = geo.procrustes_rotation(x, y)
        rot_err = max(rot_err, np.abs(Rhat - R).max())
        dist_err = max(dist_err, geo.geodesic_distance(x, geo.rotate(y, Rhat)))
    out.append(CheckResult("procrustes planted rotation recovery", rot_err, 1e-8))
    out.append(CheckResult("procrustes post-alignment distance", dist_err, 1e-9))

    worse = 0.0
    for _ in range(200):
        x, y = random_preshape(rng, n), random_preshape(rng, n)
        after = geo.geodesic_distance(x, geo.rotate(y, geo.procrustes_rotation(x, y)))
        worse = max(worse, after - geo.geodesic_distance(x, y))
    out.append(CheckResult("procrustes never increases distance", max(worse, 0.0), 1e-12))

    angles = rng.uniform(-np.pi, np.pi, size=(10000, 3))
    R = geo.batch_rotation_from_euler(angles)
    orth = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max()
    det = np.abs(np.linalg.det(R) - 1.0).max()
    out.append(CheckResult("euler rotations in SO(3)", max(orth, det), 1e-12))

    jac = 0.0
    h = 1e-6
    for a in angles[:1000]:
        J = geo.rotation_euler_jacobian(a)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (geo.rotation_from_euler(a + e) - geo.rotation_from_euler(a - e)) / (2 * h)
            jac = max(jac, relative_error(J[k], fd))
    out.append(CheckResult("euler jacobian vs finite differences", jac, 1e-6))
    return out


def _layer_check(layer, x, rng, step=1e-6):
    """Worst relative error over the input and every parameter of ``layer``."""
    out, cache = layer.forward_cache(x)
    R = rng.normal(size=out.shape)
    gx, grads = layer.backward(cache, R)

    def loss():
        return float(np.sum(layer.forward(x) * R))

    errs = [relative_error(gx, numerical_gradient(loss, x, step))]
    for name, p in layer.params.items():
        errs.append(relative_error(grads[name], numerical_gradient(loss, p, step)))
    return max(errs)


def _tiny_model_config(transform, seed):
    return KShapeNetConfig(
        frames=8,
        joints=5,
        classes=2,
        transform=transform,
        conv1_channels=4,
        conv1_kernel=3,
        conv2_channels=3,
        conv2_kernel=3,
        lstm_hidden=3,
        seed=seed,
    )


def end_to_end_gradient_error(transform, seed=0, step=1e-6):
    rng = np.random.default_rng(seed)
    model = build_model(_tiny_model_config(transform, seed))
    for name, p in model.params.items():
        if name.startswith("transform."):
            p += 0.3 * rng.normal(size=p.shape)
    X = 0.5 * rng.normal(size=(3, 8, 12))
    y = rng.integers(0, 2, size=3)
    _, grads = model.loss_and_grads(X, y)

    def loss():
        return softmax_cross_entropy(forward(model, X), y)[0]

    return max(relative_error(grads[name], numerical_gradient(loss, p, step)) for name, p in model.params.items())


def check_gradients(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    T, J, B = 4, 3, 2
    for variant in TransformVariant:
        layer = TransformLayer(variant, T, J)
        for p in layer.params.values():
            p += 0.5 * rng.normal(size=p.shape)
        x = rng.normal(size=(B, T, 3 * J))
        out.append(CheckResult(f"transform {variant.value} gradient", _layer_check(layer, x, rng), 1e-5))

    conv = Conv1D(3, 4, 3, rng)
    out.append(CheckResult("conv1d gradient", _layer_check(conv, rng.normal(size=(B, 6, 3)), rng), 1e-5))

    # well-separated values keep finite differences away from argmax ties
    x = rng.permutation(np.arange(B * 7 * 3, dtype=float)).reshape(B, 7, 3) * 0.1
    out.append(CheckResult("maxpool gradient", _layer_check(MaxPool1D(2), x, rng), 1e-5))

    lstm = LSTM(2, 2, rng)
    out.append(CheckResult("lstm gradient", _layer_check(lstm, rng.normal(size=(B, 3, 2)), rng), 1e-5))

    dense = Dense(5, 3, rng)
    out.append(CheckResult("dense gradient", _layer_check(dense, rng.normal(size=(B, 5)), rng), 1e-5))

    logits = rng.normal(size=(4, 3))
    labels = rng.integers(0, 3, size=4)
    _, g = softmax_cross_entropy(logits, labels)
    fd = numerical_gradient(lambda: softmax_cross_entropy(logits, labels)[0], logits)
    out.append(CheckResult("softmax cross-entropy gradient", relative_error(g, fd), 1e-5))

    e2e = max(end_to_end_gradient_error(t, seed) for t in ["off"] + [v.value for v in TransformVariant])
    out.append(CheckResult("end-to-end model gradient", e2e, 1e-4))

    out.append(CheckResult("angle kernels stay in SO(3) under Adam", so3_drift_after_adam(seed), 1e-10))
    return out


def so3_drift_after_adam(seed=0, steps=100):
    """Worst SO(3) violation of angle-variant kernels after ``steps`` Adam updates."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for variant in (TransformVariant.RIGID_ANGLE, TransformVariant.NONRIGID_ANGLE):
        layer = TransformLayer(variant, 5, 4)
        state = AdamState(lr=0.05)
        for _ in range(steps):
            x = rng.normal(size=(3, 5, 12))
            out, cache = layer.forward_cache(x)
            _, grads = layer.backward(cache, rng.normal(size=out.shape))
            adam_step(layer.params, grads, state)
        K = layer.kernels().reshape(-1, 3, 3)
        orth = np.abs(np.swapaxes(K, -1, -2) @ K - np.eye(3)).max()
        det = np.abs(np.linalg.det(K) - 1.0).max()
        worst = max(worst, orth, det)
    return float(worst)


def check_pipeline(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    n, T_raw, T = 8, 12, 10
    base = rng.normal(size=(n, 3))
    frames = base + 0.2 * np.cumsum(rng.normal(size=(T_raw, n, 3)), axis=0)
    seq = SkeletonSequence("a", 0, frames)
    ref = ReferenceShape(geo.to_preshape(frames[0]), "first frame")
    cfg = KShapeNetConfig(
        frames=T, joints=n, classes=3, conv1_channels=8, conv2_channels=8, lstm_hidden=8, seed=seed
    )
    model = build_model(cfg, ref)
    for p in model.params.values():
        if p.ndim:
            p += 0.1 * rng.normal(size=p.shape)
    R = random_rotation(rng)
    moved = SkeletonSequence("b", 0, 3.7 * frames @ R.T + np.array([4.0, -2.0, 9.0]))
    enc = [encode_sequence(s, ref, cfg.projection, True, T) for s in (seq, moved)]
    logits = forward(model, np.stack(enc))
    out.append(CheckResult("logits invariant to similarity transform", np.abs(logits[0] - logits[1]).max(), 1e-6))

    traj = sequence_to_trajectory(seq, ref, align=True)
    tangent = project_common(traj, ref)
    err = max(
        np.abs(geo.exp_map(ref.shape, row.reshape(ref.shape.shape)) - traj[i]).max()
        for i, row in enumerate(tangent.data)
    )
    out.append(CheckResult("common-reference encoding is lossless", err, 1e-9))
    return out


SUITES = {"geometry": check_geometry, "gradients": check_gradients, "pipeline": check_pipeline}


def run_checks(which="all", seed=0):
    names = list(SUITES) if which == "all" else [which]
    results = []
    for name in names:
        results.extend(SUITES[name](seed=seed))
    return results
