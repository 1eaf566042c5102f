"""Relevance propagation under the alpha1 rule (positive contributions only).

For a linear unit with inputs x_i and weights w_ij the relevance of an
output j is redistributed as

    R_i = sum_j (z_ij+ / (sum_i' z_i'j+ + eps)) * R_j,    z_ij = x_i * w_ij

with biases excluded from the denominators, so total relevance is
conserved whenever all biases are zero. ReLU passes relevance through,
max pooling routes it to the argmax input, concat splits it by channel
range, and batchnorm is folded into the preceding conv before
redistribution (canonization), which keeps the rule well defined.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DotsegError
from .layers import (BN_EPS, conv1x1_bwd_input, conv1x1_fwd, conv3x3_bwd_input,
                     conv3x3_fwd, maxpool_bwd, maxpool_fwd, tconv2x2_bwd_input,
                     tconv2x2_fwd)
from .network import INPUT, execution_plan, resolve_trunk_layer

STABILIZER = 1e-9

PRE_SOFTMAX = {"seg": "seg.conv", "cc": "cc.conv3"}


@dataclass
class OutputTarget:
    """Which output scores to explain: a pixel set on one head's class."""
    head: str
    pixels: list = field(default_factory=list)  # (row, col) pairs
    class_index: int = 1


def init_relevance(model, trace, target):
    """Relevance seed at the head's pre-softmax layer.

    Each target pixel gets max(0, pre-softmax score of the target class);
    everything else is zero.
    """
    if target.head not in PRE_SOFTMAX:
        raise DotsegError(f"unknown head {target.head!r}")
    pre = trace.outputs[PRE_SOFTMAX[target.head]]
    pixels = np.atleast_2d(np.asarray(list(target.pixels), dtype=np.intp))
    if pixels.size == 0:
        raise DotsegError("empty pixel set for relevance initialization")
    h, w = pre.shape[2], pre.shape[3]
    if (pixels < 0).any() or (pixels[:, 0] >= h).any() or (pixels[:, 1] >= w).any():
        raise DotsegError("target pixels out of bounds")
    rel = np.zeros_like(pre)
    rows, cols = pixels[:, 0], pixels[:, 1]
    rel[0, target.class_index, rows, cols] = np.maximum(
        pre[0, target.class_index, rows, cols], 0)
    return rel


_LINEAR_OPS = {
    "conv3x3": (conv3x3_fwd, conv3x3_bwd_input),
    "conv1x1": (conv1x1_fwd, conv1x1_bwd_input),
    "transposed_conv2x2": (tconv2x2_fwd, tconv2x2_bwd_input),
}


def _zplus(kind, x, w, rel):
    """Redistribute rel through a linear layer by positive contributions."""
    fwd, adj = _LINEAR_OPS[kind]
    wp = np.maximum(w, 0)
    if x.min() >= 0:
        zp = fwd(x, wp)
        s = rel / (zp + STABILIZER)
        return x * adj(s, wp)
    wn = np.minimum(w, 0)
    xp = np.maximum(x, 0)
    xn = np.minimum(x, 0)
    zp = fwd(xp, wp) + fwd(xn, wn)
    s = rel / (zp + STABILIZER)
    return xp * adj(s, wp) + xn * adj(s, wn)


def lrp_alpha1_layer(layer, input_activation, relevance_out, weights,
                     bn_scale=None):
    """Propagate relevance through one layer.

    ``input_activation``/``relevance_out`` are 1xCxHxW. ``bn_scale``
    carries the folded batchnorm scale for canonized conv+BN pairs.
    Returns the input relevance; concat returns the (main, skip) pair.
    """
    kind = layer.kind
    if kind == "relu":
        return relevance_out
    if kind == "concat_skip":
        c = layer.in_channels
        return relevance_out[:, :c], relevance_out[:, c:]
    x = input_activation[0]
    rel = relevance_out[0]
    if kind in _LINEAR_OPS:
        w = weights[f"{layer.name}.w"]
        if bn_scale is not None:
            w = w * bn_scale[:, None, None, None]
        return _zplus(kind, x, w, rel)[None]
    if kind == "maxpool2x2":
        _, idx = maxpool_fwd(x)
        return maxpool_bwd(rel, idx, x.shape[1], x.shape[2])[None]
    if kind == "batchnorm":
        raise DotsegError(f"{layer.name}: batchnorm is canonized into the "
                          "preceding conv; no standalone rule")
    raise DotsegError(f"{layer.name}: no relevance rule for kind {kind!r}")


def _bn_fold_scale(model, trace, bn_name):
    w = model.weights
    if bn_name in trace.bn_stats:
        _, var = trace.bn_stats[bn_name]
    else:
        var = w[f"{bn_name}.var"]
    return w[f"{bn_name}.gamma"] / np.sqrt(var + BN_EPS)


def explain(model, trace, target, stop_layer=None):
    """Propagate relevance from ``target`` back to ``stop_layer`` or the input.

    Returns the 1xCxHxW relevance of the stop layer's output, or, when
    ``stop_layer`` is None, the HxW input heatmap (channels summed).
    """
    steps = execution_plan(model, heads=(target.head,))
    by_name = {s.layer.name: s for s in steps}
    if stop_layer is not None:
        stop_layer = resolve_trunk_layer(model, stop_layer)
        nxt = steps[[s.layer.name for s in steps].index(stop_layer) + 1]
        if nxt.layer.kind == "batchnorm":
            raise DotsegError(f"{stop_layer}: inside a canonized conv-BN pair; "
                              "stop at the block output instead")
    rel = {PRE_SOFTMAX[target.head]: init_relevance(model, trace, target)}

    def add(name, r):
        if name in rel:
            rel[name] = rel[name] + r
        else:
            rel[name] = r

    for step in reversed(steps):
        name = step.layer.name
        if name == stop_layer:
            return rel.get(name, np.zeros_like(trace.outputs[name]))
        r = rel.pop(name, None)
        if r is None:
            continue
        kind = step.layer.kind
        if kind == "softmax_channel":
            raise DotsegError("relevance must start below the softmax")
        if kind == "batchnorm":
            # canonize: redistribute straight to the conv's input
            conv_step = by_name[step.input_name]
            scale = _bn_fold_scale(model, trace, name)
            rin = lrp_alpha1_layer(conv_step.layer,
                                   trace.outputs[conv_step.input_name], r,
                                   model.weights, bn_scale=scale)
            add(conv_step.input_name, rin)
        elif kind == "concat_skip":
            r_main, r_skip = lrp_alpha1_layer(step.layer, None, r, model.weights)
            add(step.input_name, r_main)
            add(step.skip_name, r_skip)
        else:
            rin = lrp_alpha1_layer(step.layer, trace.outputs[step.input_name],
                                   r, model.weights)
            add(step.input_name, rin)
    heat = rel.get(INPUT)
    if heat is None:
        heat = np.zeros_like(trace.outputs[INPUT])
    return heat[0].sum(axis=0)


def heatmap_to_u8(heatmap):
    """Max-normalized 8-bit grayscale rendering of a relevance heatmap."""
    m = float(np.max(heatmap))
    if m <= 0:
        return np.zeros(heatmap.shape, dtype=np.uint8)
    return np.clip(heatmap / m * 255.0, 0, 255).astype(np.uint8)
