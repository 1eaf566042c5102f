"""Layer specs and the functional forward/backward math.

Activations are NCHW with N == 1 at the public boundary; the functional
helpers below work on (C, H, W) arrays. Convolution weights are stored as
(out, in, kh, kw) for every conv kind, including the 2x2 stride-2
transposed conv. All multiply-accumulate goes through numpy GEMMs so
results do not depend on the kernel backend.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import ShapeError

LAYER_KINDS = (
    "conv3x3", "conv1x1", "transposed_conv2x2", "batchnorm",
    "relu", "maxpool2x2", "concat_skip", "softmax_channel",
)

BN_EPS = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    in_channels: int
    out_channels: int
    skip_source: Optional[str] = None  # concat_skip only

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"{self.name}: unknown layer kind {self.kind!r}")


# ---------------------------------------------------------------------------
# functional forward / transpose / backward pieces
# ---------------------------------------------------------------------------

def conv3x3_fwd(x, w, b=None):
    c, h, wd = x.shape
    o = w.shape[0]
    cols = K.im2col3x3(np.ascontiguousarray(x))
    y = (w.reshape(o, c * 9) @ cols).reshape(o, h, wd)
    if b is not None:
        y += b[:, None, None]
    return y


def conv3x3_bwd_input(dy, w):
    # adjoint of conv3x3_fwd w.r.t. x; also the LRP redistribution transpose
    o, c = w.shape[0], w.shape[1]
    _, h, wd = dy.shape
    cols = w.reshape(o, c * 9).T @ dy.reshape(o, h * wd)
    return K.col2im3x3(np.ascontiguousarray(cols), h, wd)


def conv3x3_bwd_weights(x, dy):
    c, h, wd = x.shape
    o = dy.shape[0]
    cols = K.im2col3x3(np.ascontiguousarray(x))
    dw = (dy.reshape(o, h * wd) @ cols.T).reshape(o, c, 3, 3)
    db = dy.sum(axis=(1, 2))
    return dw, db


def conv1x1_fwd(x, w, b=None):
    c, h, wd = x.shape
    o = w.shape[0]
    y = (w.reshape(o, c) @ x.reshape(c, h * wd)).reshape(o, h, wd)
    if b is not None:
        y += b[:, None, None]
    return y


def conv1x1_bwd_input(dy, w):
    o, c = w.shape[0], w.shape[1]
    _, h, wd = dy.shape
    return (w.reshape(o, c).T @ dy.reshape(o, h * wd)).reshape(c, h, wd)


def conv1x1_bwd_weights(x, dy):
    c, h, wd = x.shape
    o = dy.shape[0]
    dw = (dy.reshape(o, h * wd) @ x.reshape(c, h * wd).T).reshape(o, c, 1, 1)
    return dw, dy.sum(axis=(1, 2))


def tconv2x2_fwd(x, w, b=None):
    # out[o, 2i+di, 2j+dj] = sum_c w[o, c, di, dj] * x[c, i, j]; taps never overlap
    c, h, wd = x.shape
    o = w.shape[0]
    xf = x.reshape(c, h * wd)
    y = np.empty((o, 2 * h, 2 * wd), dtype=x.dtype)
    for di in (0, 1):
        for dj in (0, 1):
            y[:, di::2, dj::2] = (w[:, :, di, dj] @ xf).reshape(o, h, wd)
    if b is not None:
        y += b[:, None, None]
    return y


def tconv2x2_bwd_input(dy, w):
    o, c = w.shape[0], w.shape[1]
    h, wd = dy.shape[1] // 2, dy.shape[2] // 2
    dx = np.zeros((c, h * wd), dtype=dy.dtype)
    for di in (0, 1):
        for dj in (0, 1):
            tap = np.ascontiguousarray(dy[:, di::2, dj::2]).reshape(o, h * wd)
            dx += w[:, :, di, dj].T @ tap
    return dx.reshape(c, h, wd)


def tconv2x2_bwd_weights(x, dy):
    c, h, wd = x.shape
    o = dy.shape[0]
    xf = x.reshape(c, h * wd)
    dw = np.empty((o, c, 2, 2), dtype=x.dtype)
    for di in (0, 1):
        for dj in (0, 1):
            tap = np.ascontiguousarray(dy[:, di::2, dj::2]).reshape(o, h * wd)
            dw[:, :, di, dj] = tap @ xf.T
    return dw, dy.sum(axis=(1, 2))


def batchnorm_fwd(x, gamma, beta, mean, var, eps=BN_EPS):
    inv = gamma / np.sqrt(var + eps)
    return x * inv[:, None, None] + (beta - mean * inv)[:, None, None]


def batchnorm_batch_stats(x):
    # spatial statistics per channel, biased variance
    mean = x.mean(axis=(1, 2))
    var = x.var(axis=(1, 2))
    return mean, var


def batchnorm_bwd(dy, x, gamma, mean, var, eps=BN_EPS):
    # training mode: mean/var are functions of x (biased, over H*W)
    n = x.shape[1] * x.shape[2]
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None, None]) * inv[:, None, None]
    dgamma = (dy * xhat).sum(axis=(1, 2))
    dbeta = dy.sum(axis=(1, 2))
    dx = (gamma * inv)[:, None, None] * (
        dy
        - (dbeta / n)[:, None, None]
        - xhat * (dgamma / n)[:, None, None]
    )
    return dx, dgamma, dbeta


def relu_fwd(x):
    return np.maximum(x, 0)


def relu_bwd(dy, x):
    return np.where(x > 0, dy, 0)


def maxpool_fwd(x):
    return K.maxpool2x2(np.ascontiguousarray(x))


def maxpool_bwd(dy, idx, h, w):
    return K.maxpool2x2_scatter(np.ascontiguousarray(dy), idx, h, w)


def softmax_channel_fwd(z):
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def softmax_channel_bwd(dp, p):
    # dz_j = p_j * (dp_j - sum_k dp_k p_k), per pixel over the channel axis
    dot = (dp * p).sum(axis=0, keepdims=True)
    return p * (dp - dot)


# ---------------------------------------------------------------------------
# shape algebra + dispatch
# ---------------------------------------------------------------------------

def output_dims(layer, in_dims, skip_dims=None):
    """Output (C, H, W) of ``layer`` for input (C, H, W); pure shape algebra."""
    c, h, w = in_dims
    k = layer.kind
    if c != layer.in_channels and k != "concat_skip":
        raise ShapeError(f"{layer.name}: expected {layer.in_channels} input "
                         f"channels, got {c}")
    if k in ("conv3x3", "conv1x1"):
        return (layer.out_channels, h, w)
    if k == "transposed_conv2x2":
        return (layer.out_channels, 2 * h, 2 * w)
    if k in ("batchnorm", "relu", "softmax_channel"):
        return (c, h, w)
    if k == "maxpool2x2":
        if h % 2 or w % 2:
            raise ShapeError(f"{layer.name}: maxpool needs even H, W, got {h}x{w}")
        return (c, h // 2, w // 2)
    if k == "concat_skip":
        if skip_dims is None:
            raise ShapeError(f"{layer.name}: concat requires a skip input")
        sc, sh, sw = skip_dims
        if (sh, sw) != (h, w):
            raise ShapeError(f"{layer.name}: skip {sh}x{sw} != input {h}x{w}")
        if c + sc != layer.out_channels:
            raise ShapeError(f"{layer.name}: {c}+{sc} channels != "
                             f"{layer.out_channels}")
        return (layer.out_channels, h, w)
    raise ShapeError(f"{layer.name}: unknown layer kind {k!r}")


def _check_weight(layer, weights, suffix, dims):
    arr = weights.get(f"{layer.name}.{suffix}")
    if arr is None:
        raise ShapeError(f"{layer.name}: missing weight array '.{suffix}'")
    if tuple(arr.shape) != tuple(dims):
        raise ShapeError(f"{layer.name}.{suffix}: dims {arr.shape} != {dims}")
    return arr


def apply_layer(layer, x, weights, skip=None, training=False, batch_stats=None):
    """Apply one layer to a 1xCxHxW tensor; returns the 1xC'xH'xW' output.

    ``skip`` supplies the second input of concat layers. For batchnorm,
    ``training=True`` normalizes with batch statistics (stored into
    ``batch_stats`` keyed by layer name when a dict is passed) instead of
    the running ones.
    """
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"{layer.name}: expected 1xCxHxW input, got {x.shape}")
    xs = x[0]
    k = layer.kind
    out_dims = output_dims(layer, xs.shape,
                           skip[0].shape if skip is not None else None)
    if k == "conv3x3":
        w = _check_weight(layer, weights, "w",
                          (layer.out_channels, layer.in_channels, 3, 3))
        b = _check_weight(layer, weights, "b", (layer.out_channels,))
        y = conv3x3_fwd(xs, w, b)
    elif k == "conv1x1":
        w = _check_weight(layer, weights, "w",
                          (layer.out_channels, layer.in_channels, 1, 1))
        b = _check_weight(layer, weights, "b", (layer.out_channels,))
        y = conv1x1_fwd(xs, w, b)
    elif k == "transposed_conv2x2":
        w = _check_weight(layer, weights, "w",
                          (layer.out_channels, layer.in_channels, 2, 2))
        b = _check_weight(layer, weights, "b", (layer.out_channels,))
        y = tconv2x2_fwd(xs, w, b)
    elif k == "batchnorm":
        gamma = _check_weight(layer, weights, "gamma", (layer.in_channels,))
        beta = _check_weight(layer, weights, "beta", (layer.in_channels,))
        if training:
            mean, var = batchnorm_batch_stats(xs)
            if batch_stats is not None:
                batch_stats[layer.name] = (mean, var)
        else:
            mean = _check_weight(layer, weights, "mean", (layer.in_channels,))
            var = _check_weight(layer, weights, "var", (layer.in_channels,))
        y = batchnorm_fwd(xs, gamma, beta, mean, var)
    elif k == "relu":
        y = relu_fwd(xs)
    elif k == "maxpool2x2":
        y, _ = maxpool_fwd(xs)
    elif k == "concat_skip":
        y = np.concatenate([xs, skip[0]], axis=0)
    elif k == "softmax_channel":
        y = softmax_channel_fwd(xs)
    else:
        raise ShapeError(f"{layer.name}: unknown layer kind {k!r}")
    if y.shape != out_dims:
        raise ShapeError(f"{layer.name}: produced {y.shape}, expected {out_dims}")
    if not np.isfinite(y).all():
        raise ShapeError(f"{layer.name}: non-finite values in output")
    return y[None]
