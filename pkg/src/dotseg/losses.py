"""Masked cross-entropy, feature re-weighting, and the two total losses.

The seg head is trained against the Voronoi and cluster label maps, the
cc head against the enlarged point labels plus (optionally) the
re-weighted term: the cc prediction is explained back to a trunk layer,
the feature map there is scaled by ``relevance / max|relevance| + 1``,
the network is re-run from that layer, and the cross entropy of the new
cc output is added.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .lrp import OutputTarget, explain
from .network import forward, forward_from, resolve_trunk_layer

IGNORE = 255
PROB_CLAMP = 1e-7


@dataclass
class LossWeights:
    alpha_v: float = 50.0
    alpha_c: float = 50.0
    alpha_p: float = 200.0
    alpha_frw: float = 0.0

    @classmethod
    def defaults(cls, frw_enabled):
        if frw_enabled:
            return cls(50.0, 50.0, 100.0, 100.0)
        return cls(50.0, 50.0, 200.0, 0.0)


@dataclass
class FrwConfig:
    layer: str = "enc1"  # enc1 / enc3 / bottleneck (any trunk block works)
    enabled: bool = False
    confidence: float = 0.1  # cc probability that seeds the explanation


def masked_cross_entropy(pred, label):
    """Mean -log p(true class) over non-ignore pixels; 0 if all ignored.

    ``pred`` is a 1x2xHxW probability map, ``label`` an HxW map with
    values {0, 1, IGNORE}. Probabilities are clamped at 1e-7.
    """
    label = np.asarray(label)
    if pred.shape[2:] != label.shape:
        raise ShapeError(f"prediction {pred.shape[2:]} vs label {label.shape}")
    valid = label != IGNORE
    if not valid.any():
        return 0.0
    rows, cols = np.nonzero(valid)
    cls = label[rows, cols].astype(np.intp)
    p = pred[0, cls, rows, cols].astype(np.float64)
    return float(np.mean(-np.log(np.maximum(p, PROB_CLAMP))))


def frw_weights(relevance):
    """Per-element weights: relevance / max|relevance| + 1, in [0, 2]."""
    m = np.max(np.abs(relevance))
    if m == 0:
        return np.ones_like(relevance)
    return relevance / m + 1


def frw_reweight(feature, relevance):
    """Hadamard product of the feature map with its re-weighting map."""
    if feature.shape != relevance.shape:
        raise ShapeError(f"feature {feature.shape} vs relevance "
                         f"{relevance.shape}")
    if np.max(np.abs(relevance)) == 0:
        return feature.copy()
    return frw_weights(relevance) * feature


def select_frw_target(y_cc, gt_p, confidence=0.1):
    """Pixels whose positive-class cc probability clears the confidence
    threshold; falls back to the positive label pixels, else None."""
    rows, cols = np.nonzero(y_cc[0, 1] >= confidence)
    if rows.size == 0:
        rows, cols = np.nonzero(np.asarray(gt_p) == 1)
    if rows.size == 0:
        return None
    return OutputTarget(head="cc", pixels=list(zip(rows.tolist(), cols.tolist())))


def reweighted_cc_trace(model, trace, gt_p, cfg, training=False):
    """Explain, re-weight and re-run; returns (new trace, relevance)."""
    layer = resolve_trunk_layer(model, cfg.layer)
    target = select_frw_target(trace.outputs["cc.softmax"], gt_p,
                               cfg.confidence)
    f_l = trace.outputs[layer]
    if target is None:
        rel = np.zeros_like(f_l)
    else:
        rel = explain(model, trace, target, stop_layer=layer)
    f_hat = frw_reweight(f_l, rel)
    trace2 = forward_from(model, trace, layer, f_hat, heads=("cc",),
                          training=training)
    return trace2, rel


def frw_loss(model, image, gt_p, cfg, trace=None, training=False):
    """Cross entropy of the re-weighted cc output against the point labels."""
    if trace is None:
        _, _, trace = forward(model, image, training=training)
    trace2, _ = reweighted_cc_trace(model, trace, gt_p, cfg, training=training)
    return masked_cross_entropy(trace2.outputs["cc.softmax"], gt_p)


def total_losses(model, image, gt_v, gt_c, gt_p, weights, cfg,
                 training=False):
    """(loss_seg, loss_cc) for one image.

    loss_seg = a_V * CE(y_seg, GT_V) + a_C * CE(y_seg, GT_C)
    loss_cc  = a_P * CE(y_cc, GT_P) + a_FRW * frw_loss   (0 when disabled)
    """
    y_seg, y_cc, trace = forward(model, image, training=training)
    loss_seg = (weights.alpha_v * masked_cross_entropy(y_seg, gt_v)
                + weights.alpha_c * masked_cross_entropy(y_seg, gt_c))
    loss_cc = weights.alpha_p * masked_cross_entropy(y_cc, gt_p)
    if cfg is not None and cfg.enabled and weights.alpha_frw != 0:
        loss_cc += weights.alpha_frw * frw_loss(model, image, gt_p, cfg,
                                                trace=trace, training=training)
    return loss_seg, loss_cc
