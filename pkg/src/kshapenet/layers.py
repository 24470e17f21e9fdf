"""Differentiable layers with hand-written backward passes.

Every layer keeps its trainable tensors in ``self.params`` (a dict of float64
arrays) and exposes

* ``forward(x) -> out``
* ``forward_cache(x) -> (out, cache)``
* ``backward(cache, grad_out) -> (grad_in, grads)`` with ``grads`` keyed like
  ``self.params``.

Sequence tensors are laid out ``(batch, time, features)``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DatasetError, DimensionError
from .geometry import batch_rotation_euler_jacobian, batch_rotation_from_euler


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class TransformVariant(str, Enum):
    RIGID_MATRIX = "rigid_matrix"
    RIGID_ANGLE = "rigid_angle"
    NONRIGID_MATRIX = "nonrigid_matrix"
    NONRIGID_ANGLE = "nonrigid_angle"

    @property
    def rigid(self):
        return self in (TransformVariant.RIGID_MATRIX, TransformVariant.RIGID_ANGLE)

    @property
    def angle_based(self):
        return self in (TransformVariant.RIGID_ANGLE, TransformVariant.NONRIGID_ANGLE)


class TransformLayer:
    """Per-frame (rigid) or per-frame-per-joint (non-rigid) 3x3 kernels.

    Each input row of length ``3 J`` is viewed as ``J`` pseudo-joints and every
    joint vector is multiplied on the left by its kernel.  Matrix variants
    learn the kernels directly (no orthogonality is enforced); angle variants
    learn Euler angles and rebuild rotation kernels on every forward pass.
    Parameters are indexed by frame position and shared across the batch.
    Initialised to the identity transform.
    """

    def __init__(self, variant, frames, joints):
        self.variant = TransformVariant(variant)
        self.frames = int(frames)
        self.joints = int(joints)
        lead = (self.frames,) if self.variant.rigid else (self.frames, self.joints)
        if self.variant.angle_based:
            self.params = {"angles": np.zeros(lead + (3,))}
        else:
            self.params = {"kernels": np.broadcast_to(np.eye(3), lead + (3, 3)).copy()}

    def kernels(self):
        if self.variant.angle_based:
            return batch_rotation_from_euler(self.params["angles"])
        return self.params["kernels"]

    def _check(self, x):
        if x.ndim != 3 or x.shape[1:] != (self.frames, 3 * self.joints):
            raise DimensionError(
                f"transform layer expects (batch, {self.frames}, {3 * self.joints}), got {x.shape}"
            )

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        q = x.reshape(x.shape[0], self.frames, self.joints, 3)
        if self.variant.angle_based:
            K, dK = batch_rotation_euler_jacobian(self.params["angles"])
        else:
            K, dK = self.params["kernels"], None
        if self.variant.rigid:
            h = np.einsum("tkl,btjl->btjk", K, q)
        else:
            h = np.einsum("tjkl,btjl->btjk", K, q)
        return h.reshape(x.shape), (q, K, dK)

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, grad_out):
        q, K, dK = cache
        g = np.asarray(grad_out, dtype=np.float64).reshape(q.shape)
        if self.variant.rigid:
            gK = np.einsum("btjk,btjl->tkl", g, q)
            gx = np.einsum("tkl,btjk->btjl", K, g)
        else:
            gK = np.einsum("btjk,btjl->tjkl", g, q)
            gx = np.einsum("tjkl,btjk->btjl", K, g)
        if self.variant.angle_based:
            grads = {"angles": np.einsum("...kl,...akl->...a", gK, dK)}
        else:
            grads = {"kernels": gK}
        return gx.reshape(g.shape[0], self.frames, 3 * self.joints), grads


class Conv1D:
    """Temporal cross-correlation with zero "same" padding, stride 1, then ReLU."""

    def __init__(self, in_channels, out_channels, kernel_size, rng=None, stride=1):
        if kernel_size % 2 != 1:
            raise DimensionError(f"kernel_size must be odd, got {kernel_size}")
        if stride != 1:
            raise NotImplementedError("only stride 1 is supported")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = stride
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(self.in_channels * self.kernel_size)
        self.params = {
            "weight": _uniform(rng, bound, (self.out_channels, self.in_channels, self.kernel_size)),
            "bias": _uniform(rng, bound, (self.out_channels,)),
        }

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise DimensionError(f"conv expects (batch, T, {self.in_channels}), got {x.shape}")
        T = x.shape[1]
        if T < self.kernel_size:
            raise DimensionError(f"sequence length {T} shorter than kernel {self.kernel_size}")
        pad = self.kernel_size // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        B = x.shape[0]
        # im2col: one row of C * k taps per output position
        cols = sliding_window_view(xp, self.kernel_size, axis=1).reshape(B * T, -1)
        W = self.params["weight"].reshape(self.out_channels, -1)
        pre = (cols @ W.T).reshape(B, T, self.out_channels) + self.params["bias"]
        return np.maximum(pre, 0.0), (x.shape, cols, pre)

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, grad_out):
        shape, cols, pre = cache
        g = grad_out * (pre > 0.0)
        g2 = g.reshape(-1, self.out_channels)
        W = self.params["weight"]
        grads = {
            "weight": (g2.T @ cols).reshape(W.shape),
            "bias": g.sum(axis=(0, 1)),
        }
        T = shape[1]
        pad = self.kernel_size // 2
        dcols = (g2 @ W.reshape(self.out_channels, -1)).reshape(shape[0], T, shape[2], self.kernel_size)
        dxp = np.zeros((shape[0], T + 2 * pad, shape[2]))
        for k in range(self.kernel_size):
            dxp[:, k : k + T, :] += dcols[..., k]
        return dxp[:, pad : pad + T, :], grads


class MaxPool1D:
    """Non-overlapping temporal max pooling; trailing frames that do not fill a window are dropped."""

    def __init__(self, window=2):
        self.window = int(window)
        self.params = {}

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        B, T, C = x.shape
        if T < self.window:
            raise DimensionError(f"sequence length {T} shorter than pool window {self.window}")
        Tp = T // self.window
        win = x[:, : Tp * self.window].reshape(B, Tp, self.window, C)
        arg = win.argmax(axis=2)  # first maximum on ties
        out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]
        return out, (x.shape, arg)

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, grad_out):
        (B, T, C), arg = cache
        Tp = arg.shape[1]
        dwin = np.zeros((B, Tp, self.window, C))
        np.put_along_axis(dwin, arg[:, :, None, :], grad_out[:, :, None, :], axis=2)
        dx = np.zeros((B, T, C))
        dx[:, : Tp * self.window] = dwin.reshape(B, Tp * self.window, C)
        return dx, {}


class LSTM:
    """Single-layer LSTM returning the final hidden state.

    Gate blocks inside ``W`` (4H x F), ``U`` (4H x H) and ``b`` (4H) are
    ordered input, forget, candidate, output.  Initial states are zero.
    """

    def __init__(self, input_size, hidden_size, rng=None):
        self.input_size = int(input_size)
        self.hidden_size = int(hidden_size)
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(self.hidden_size)
        H4 = 4 * self.hidden_size
        self.params = {
            "W": _uniform(rng, bound, (H4, self.input_size)),
            "U": _uniform(rng, bound, (H4, self.hidden_size)),
            "b": _uniform(rng, bound, (H4,)),
        }

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise DimensionError(f"LSTM expects (batch, T, {self.input_size}), got {x.shape}")
        B, T, _ = x.shape
        H = self.hidden_size
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        steps = []
        for t in range(T):
            z = x[:, t] @ W.T + h @ U.T + b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = _sigmoid(z[:, 3 * H :])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            steps.append((h, c, i, f, g, o, tc))
            h = o * tc
            c = c_new
        return h, (x, steps)

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, grad_out):
        x, steps = cache
        W, U = self.params["W"], self.params["U"]
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros_like(self.params["b"])
        dx = np.zeros_like(x)
        dh = np.asarray(grad_out, dtype=np.float64)
        dc = np.zeros_like(dh)
        for t in reversed(range(x.shape[1])):
            h_prev, c_prev, i, f, g, o, tc = steps[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dW += dz.T @ x[:, t]
            dU += dz.T @ h_prev
            db += dz.sum(axis=0)
            dx[:, t] = dz @ W
            dh = dz @ U
            dc = dc * f
        return dx, {"W": dW, "U": dU, "b": db}


class Dense:
    """Affine map ``x @ W.T + b`` with ``W`` shaped (classes, features)."""

    def __init__(self, features, classes, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(features)
        self.params = {
            "weight": _uniform(rng, bound, (int(classes), int(features))),
            "bias": _uniform(rng, bound, (int(classes),)),
        }

    def forward_cache(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.params["weight"].shape[1]:
            raise DimensionError(
                f"dense layer expects {self.params['weight'].shape[1]} features, got {x.shape[-1]}"
            )
        return x @ self.params["weight"].T + self.params["bias"], x

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, grad_out):
        x = cache
        grads = {"weight": grad_out.T @ x, "bias": grad_out.sum(axis=0)}
        return grad_out @ self.params["weight"], grads


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logits.shape
    if labels.shape != (B,):
        raise DimensionError(f"expected {B} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= K):
        raise DatasetError(f"labels must lie in [0, {K})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - lse[:, None]
    rows = np.arange(B)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / B


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied to ``params`` in place.

    Returns ``(params, state)`` for convenience.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# functional spellings of the layer methods


def transform_forward(layer, x):
    return layer.forward(x)


def transform_backward(layer, x, grad_out):
    _, cache = layer.forward_cache(x)
    return layer.backward(cache, grad_out)


def conv1d_forward(layer, x):
    return layer.forward(x)


def conv1d_backward(layer, x, grad_out):
    _, cache = layer.forward_cache(x)
    return layer.backward(cache, grad_out)


def maxpool_forward(x, window=2):
    return MaxPool1D(window).forward(x)


def maxpool_backward(x, grad_out, window=2):
    pool = MaxPool1D(window)
    _, cache = pool.forward_cache(x)
    return pool.backward(cache, grad_out)[0]


def lstm_forward(layer, x):
    return layer.forward(x)


def lstm_backward(layer, x, grad_out):
    _, cache = layer.forward_cache(x)
    return layer.backward(cache, grad_out)


def dense_forward(layer, x):
    return layer.forward(x)


def dense_backward(layer, x, grad_out):
    _, cache = layer.forward_cache(x)
    return layer.backward(cache, grad_out)
