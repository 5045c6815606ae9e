"""Forward/backward kernels for the fully-convolutional melody network.

Convolutions are "same"-padded cross-correlations computed in the frequency
domain: one real FFT per input map, a per-frequency channel-mixing matmul, one
inverse FFT per output map. For 32x16 kernels over 128x64 maps this is far
cheaper than direct summation.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft

__all__ = [
    "fast_len",
    "conv_forward",
    "conv_backward",
    "conv_direct",
    "bn_forward",
    "bn_backward",
    "sigmoid",
]

BN_EPS = 1e-5


@lru_cache(maxsize=None)
def fast_len(n: int) -> int:
    """Smallest 2-3-5-smooth integer >= n."""
    m = max(int(n), 1)
    while True:
        k = m
        for p in (2, 3, 5):
            while k % p == 0:
                k //= p
        if k == 1:
            return m
        m += 1


def _pads(kh: int, kw: int) -> tuple[int, int]:
    # leading pad; the trailing pad takes the remainder for even kernels
    return (kh - 1) // 2, (kw - 1) // 2


def _plan(h: int, w: int, kh: int, kw: int) -> tuple[int, int]:
    return fast_len(h + kh - 1), fast_len(w + kw - 1)


def _shifted(a: np.ndarray, pt: int, pl: int, h: int, w: int) -> np.ndarray:
    """``out[i, j] = a[(i - pt) % Hf, (j - pl) % Wf]`` for ``i < h``, ``j < w``."""
    rows = (np.arange(h) - pt) % a.shape[0]
    cols = (np.arange(w) - pl) % a.shape[1]
    return a[rows][:, cols]


def conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Same-padded cross-correlation in spatial-first layout.

    ``x`` is ``(H, W, B, Cin)`` and ``weight`` is ``(Cout, Cin, kh, kw)``;
    ``y[i, j, b, o] = bias[o] + sum_{c,u,v} weight[o, c, u, v] * x[i + u - pt, j + v - pl, b, c]``
    with zeros outside the map, ``pt = (kh - 1) // 2`` and ``pl = (kw - 1) // 2``.
    """
    H, W, B, cin = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels, kernel expects {cin_w}")
    Hf, Wf = _plan(H, W, kh, kw)
    pt, pl = _pads(kh, kw)
    xf = sfft.rfftn(x, s=(Hf, Wf), axes=(0, 1))
    kf = sfft.rfftn(weight.transpose(2, 3, 1, 0), s=(Hf, Wf), axes=(0, 1))
    nf = xf.shape[0] * xf.shape[1]
    xm = xf.reshape(nf, B, cin)
    km = kf.reshape(nf, cin, cout)
    yf = (xm @ np.conj(km)).reshape(xf.shape[:2] + (B, cout))
    full = sfft.irfftn(yf, s=(Hf, Wf), axes=(0, 1))
    y = _shifted(full, pt, pl, H, W) + bias
    return y, (xm, km, x.shape, weight.shape, (Hf, Wf))


def conv_backward(dy: np.ndarray, cache, need_dx: bool = True):
    """Gradients of :func:`conv_forward` w.r.t. input, weight and bias."""
    xm, km, (H, W, B, cin), (cout, _, kh, kw), (Hf, Wf) = cache
    pt, pl = _pads(kh, kw)
    d = np.zeros((Hf, Wf, B, cout), dtype=dy.dtype)
    d[np.ix_((np.arange(H) - pt) % Hf, (np.arange(W) - pl) % Wf)] = dy
    df = sfft.rfftn(d, axes=(0, 1))
    fshape = df.shape[:2]
    dm = df.reshape(-1, B, cout)
    # dK[c, o] = sum_b X[b, c] conj(D[b, o])
    dkf = (xm.transpose(0, 2, 1) @ np.conj(dm)).reshape(fshape + (cin, cout))
    dw = sfft.irfftn(dkf, s=(Hf, Wf), axes=(0, 1))[:kh, :kw].transpose(3, 2, 0, 1)
    db = dy.sum(axis=(0, 1, 2))
    dx = None
    if need_dx:
        # dX[b, c] = sum_o D[b, o] K[c, o]
        dxf = (dm @ km.transpose(0, 2, 1)).reshape(fshape + (B, cin))
        dx = sfft.irfftn(dxf, s=(Hf, Wf), axes=(0, 1))[:H, :W]
    return dx, np.ascontiguousarray(dw), db


def conv_direct(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Reference same-padded cross-correlation by explicit shifted sums (same layout)."""
    H, W, B, cin = x.shape
    cout, _, kh, kw = weight.shape
    pt, pl = _pads(kh, kw)
    xp = np.zeros((H + kh - 1, W + kw - 1, B, cin))
    xp[pt:pt + H, pl:pl + W] = x
    y = np.zeros((H, W, B, cout))
    for u in range(kh):
        for v in range(kw):
            y += xp[u:u + H, v:v + W] @ weight[:, :, u, v].T
    return y + bias


def bn_forward(x, gamma, beta, running_mean, running_var, train: bool,
               momentum: float = 0.1, eps: float = BN_EPS):
    """Per-channel batch normalization over every axis but the last.

    Returns ``(y, cache, new_running_mean, new_running_var)``. In eval mode
    the running statistics are used and returned unchanged.
    """
    axes = tuple(range(x.ndim - 1))
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        n = x.size // x.shape[-1]
        unbiased = var * n / max(n - 1, 1)
        new_mean = (1 - momentum) * running_mean + momentum * mean
        new_var = (1 - momentum) * running_var + momentum * unbiased
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std, gamma), new_mean, new_var


def bn_backward(dy, cache):
    """Backward pass of train-mode batch normalization."""
    xhat, inv_std, gamma = cache
    axes = tuple(range(dy.ndim - 1))
    n = dy.size // dy.shape[-1]
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dx = (gamma * inv_std / n) * (n * dy - dbeta - xhat * dgamma)
    return dx, dgamma, dbeta


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
