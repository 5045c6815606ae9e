"""Parameters, forward pass and backpropagation of the melody network.

Layout: ``n_layers`` blocks of (conv -> batchnorm -> ReLU -> dropout), then a
1x1 convolution to a single map and a sigmoid. Every convolution keeps the
spatial size, so a 128x64 window maps to a 128x64 probability window.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import bn_backward, bn_forward, conv_backward, conv_forward, sigmoid

__all__ = ["Architecture", "ModelParams", "init_params", "forward", "loss_and_grad", "predict_batch"]


@dataclass(frozen=True)
class Architecture:
    channels: int = 21
    kernel: tuple[int, int] = (32, 16)
    n_layers: int = 2
    in_shape: tuple[int, int] = (128, 64)
    bn_momentum: float = 0.1

    def to_dict(self) -> dict:
        return {"channels": self.channels, "kernel": list(self.kernel), "n_layers": self.n_layers,
                "in_shape": list(self.in_shape), "bn_momentum": self.bn_momentum}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(int(d["channels"]), tuple(d["kernel"]), int(d["n_layers"]),
                   tuple(d["in_shape"]), float(d.get("bn_momentum", 0.1)))


@dataclass
class ModelParams:
    """Learnable tensors (``weights``) and batchnorm running statistics (``buffers``)."""

    arch: Architecture
    weights: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, copy.deepcopy(self.weights), copy.deepcopy(self.buffers))

    def l1_keys(self) -> list[str]:
        return [k for k in self.weights if k.endswith(".weight")]

    @property
    def dtype(self):
        return self.weights["head.weight"].dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.arch, {k: v.astype(dtype) for k, v in self.weights.items()},
                           {k: v.astype(dtype) for k, v in self.buffers.items()})

    def check_finite(self):
        for name, arr in {**self.weights, **self.buffers}.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"parameter {name} has non-finite values")


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(arch: Architecture = Architecture(), seed: int | np.random.Generator = 0,
                zero: bool = False, head_bias: float = 0.0) -> ModelParams:
    """Glorot-uniform kernels, zero conv biases, unit batchnorm scale.

    ``head_bias`` sets the initial output logit. ``zero=True`` gives all-zero
    kernels and biases (the network then outputs 0.5).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    kh, kw = arch.kernel
    c = arch.channels
    weights, buffers = {}, {}
    cin = 1
    for i in range(1, arch.n_layers + 1):
        shape = (c, cin, kh, kw)
        w = np.zeros(shape) if zero else _glorot(rng, shape, cin * kh * kw, c * kh * kw)
        weights[f"conv{i}.weight"] = w
        weights[f"conv{i}.bias"] = np.zeros(c)
        weights[f"bn{i}.gamma"] = np.ones(c)
        weights[f"bn{i}.beta"] = np.zeros(c)
        buffers[f"bn{i}.running_mean"] = np.zeros(c)
        buffers[f"bn{i}.running_var"] = np.ones(c)
        cin = c
    weights["head.weight"] = np.zeros(c) if zero else _glorot(rng, (c,), c, 1)
    weights["head.bias"] = np.zeros(1) if zero else np.full(1, float(head_bias))
    return ModelParams(arch, weights, buffers)


def _as_batch(params: ModelParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=params.dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or tuple(x.shape[1:]) != tuple(params.arch.in_shape):
        raise ValueError(f"expected window(s) of shape {params.arch.in_shape}, got {x.shape}")
    return x, single


def _forward(params: ModelParams, x: np.ndarray, train: bool, rng, dropout_p: float):
    """Run the network on ``(B, H, W)`` input; returns output, caches, new buffers."""
    w = params.weights
    # activations are (H, W, B, C) so FFT spectra reshape to (freq, B, C) without copies
    h = x.transpose(1, 2, 0)[..., None]
    caches = []
    new_buffers = dict(params.buffers)
    for i in range(1, params.arch.n_layers + 1):
        z, conv_cache = conv_forward(h, w[f"conv{i}.weight"], w[f"conv{i}.bias"])
        a, bn_cache, rm, rv = bn_forward(
            z, w[f"bn{i}.gamma"], w[f"bn{i}.beta"],
            params.buffers[f"bn{i}.running_mean"], params.buffers[f"bn{i}.running_var"],
            train, params.arch.bn_momentum)
        new_buffers[f"bn{i}.running_mean"] = rm
        new_buffers[f"bn{i}.running_var"] = rv
        relu = a > 0
        h = a * relu
        drop = None
        if train and dropout_p > 0:
            drop = ((rng.random(h.shape) >= dropout_p) / (1.0 - dropout_p)).astype(h.dtype)
            h = h * drop
        caches.append((conv_cache, bn_cache, relu, drop))
    head_in = h
    logits = head_in @ w["head.weight"] + w["head.bias"][0]
    out = sigmoid(logits).transpose(2, 0, 1)
    return out, (caches, head_in), new_buffers


def forward(params: ModelParams, window, mode: str = "eval", rng=None, dropout_p: float = 0.3):
    """Melody probability map for one ``(H, W)`` window or a ``(B, H, W)`` batch.

    In ``eval`` mode dropout is off and batchnorm uses running statistics, so
    the result is deterministic. ``train`` mode uses batch statistics and
    inverted dropout drawn from ``rng``; running statistics are not updated here.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")
    params.check_finite()
    x, single = _as_batch(params, window)
    train = mode == "train"
    if train and rng is None:
        rng = np.random.default_rng()
    out, _, _ = _forward(params, x, train, rng, dropout_p if train else 0.0)
    return out[0] if single else out


def predict_batch(params: ModelParams, windows) -> np.ndarray:
    """Eval-mode forward pass over a stack of windows."""
    return forward(params, windows, "eval")


def loss_and_grad(params: ModelParams, inputs, targets, l1_coeff: float = 0.0,
                  dropout_p: float = 0.0, rng=None, update_buffers: bool = False):
    """Train-mode MSE + L1 loss and its gradient w.r.t. every learnable tensor.

    ``inputs`` and ``targets`` are ``(B, H, W)`` stacks. Batchnorm uses batch
    statistics. Returns ``(loss, grads)`` or, with ``update_buffers=True``,
    ``(loss, grads, new_buffers)`` carrying the updated running statistics.
    """
    x, _ = _as_batch(params, inputs)
    t = np.asarray(targets, dtype=x.dtype).reshape(x.shape)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if dropout_p > 0 and rng is None:
        raise ValueError("dropout requires an explicit rng")
    w = params.weights
    out, (caches, head_in), new_buffers = _forward(params, x, True, rng, dropout_p)

    diff = out - t
    mse = float(np.mean(diff ** 2))
    l1 = float(sum(np.abs(w[k]).sum() for k in params.l1_keys()))
    loss = mse + l1_coeff * l1

    grads = {}
    dlogits = (2.0 / diff.size) * diff * out * (1.0 - out)
    dlogits = dlogits.transpose(1, 2, 0)
    grads["head.weight"] = np.einsum("hwbc,hwb->c", head_in, dlogits)
    grads["head.bias"] = np.array([dlogits.sum()], dtype=x.dtype)
    dh = dlogits[..., None] * w["head.weight"]
    for i in range(params.arch.n_layers, 0, -1):
        conv_cache, bn_cache, relu, drop = caches[i - 1]
        if drop is not None:
            dh = dh * drop
        da = dh * relu
        dz, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = bn_backward(da, bn_cache)
        dh, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = conv_backward(
            dz, conv_cache, need_dx=i > 1)
    if l1_coeff:
        for k in params.l1_keys():
            grads[k] = grads[k] + l1_coeff * np.sign(w[k])
    grads = {k: grads[k] for k in w}
    if update_buffers:
        return loss, grads, new_buffers
    return loss, grads
