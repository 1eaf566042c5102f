"""Reverse-mode gradients of the two training losses.

Gradients are exact for the loss as optimized: the re-weighting map from
the relevance explanation is treated as a constant (stop-gradient), so
the re-run branch contributes through the shared layer weights and
through the feature map it was spliced into, but not through the
explanation itself.
"""

import numpy as np

from .losses import (IGNORE, PROB_CLAMP, LossWeights, frw_weights,
                     masked_cross_entropy, reweighted_cc_trace)
from .layers import (batchnorm_bwd, conv1x1_bwd_input, conv1x1_bwd_weights,
                     conv3x3_bwd_input, conv3x3_bwd_weights, maxpool_bwd,
                     maxpool_fwd, relu_bwd, softmax_channel_bwd,
                     tconv2x2_bwd_input, tconv2x2_bwd_weights)
from .network import execution_plan, forward, resolve_trunk_layer


def masked_ce_prob_grad(pred, label):
    """dLoss/dProbabilities for the masked clamped cross entropy."""
    label = np.asarray(label)
    valid = label != IGNORE
    g = np.zeros_like(pred)
    n = int(valid.sum())
    if n == 0:
        return g
    rows, cols = np.nonzero(valid)
    cls = label[rows, cols].astype(np.intp)
    p = pred[0, cls, rows, cols]
    g[0, cls, rows, cols] = np.where(p > PROB_CLAMP, -1.0 / (p * n), 0.0)
    return g


def trainable_weight_names(model, frozen=()):
    names = []
    for spec in model.all_layers():
        if spec.name in frozen:
            continue
        if spec.kind in ("conv3x3", "conv1x1", "transposed_conv2x2"):
            names += [f"{spec.name}.w", f"{spec.name}.b"]
        elif spec.kind == "batchnorm":
            names += [f"{spec.name}.gamma", f"{spec.name}.beta"]
    return names


def _backward_steps(model, steps, acts, bn_stats, dacts, grads, frozen,
                    route=None):
    """Walk ``steps`` in reverse, accumulating input/weight gradients.

    ``route(name, grad)`` redirects gradients of activations that are not
    produced inside this walk (used by the re-run branch); by default all
    gradients accumulate in ``dacts``.
    """
    w = model.weights

    def push(name, g):
        if route is not None and route(name, g):
            return
        dacts[name] = dacts[name] + g if name in dacts else g

    for step in reversed(steps):
        name = step.layer.name
        dy4 = dacts.pop(name, None)
        if dy4 is None:
            continue
        kind = step.layer.kind
        dy = dy4[0]
        x_in = acts[step.input_name]
        if kind == "conv3x3":
            push(step.input_name, conv3x3_bwd_input(dy, w[f"{name}.w"])[None])
            if step.layer.name not in frozen:
                dw, db = conv3x3_bwd_weights(x_in[0], dy)
                grads[f"{name}.w"] += dw
                grads[f"{name}.b"] += db
        elif kind == "conv1x1":
            push(step.input_name, conv1x1_bwd_input(dy, w[f"{name}.w"])[None])
            if step.layer.name not in frozen:
                dw, db = conv1x1_bwd_weights(x_in[0], dy)
                grads[f"{name}.w"] += dw
                grads[f"{name}.b"] += db
        elif kind == "transposed_conv2x2":
            push(step.input_name, tconv2x2_bwd_input(dy, w[f"{name}.w"])[None])
            if step.layer.name not in frozen:
                dw, db = tconv2x2_bwd_weights(x_in[0], dy)
                grads[f"{name}.w"] += dw
                grads[f"{name}.b"] += db
        elif kind == "batchnorm":
            mean, var = bn_stats[name]
            dx, dgamma, dbeta = batchnorm_bwd(dy, x_in[0], w[f"{name}.gamma"],
                                              mean, var)
            push(step.input_name, dx[None])
            if step.layer.name not in frozen:
                grads[f"{name}.gamma"] += dgamma
                grads[f"{name}.beta"] += dbeta
        elif kind == "relu":
            push(step.input_name, relu_bwd(dy, x_in[0])[None])
        elif kind == "maxpool2x2":
            _, idx = maxpool_fwd(x_in[0])
            push(step.input_name,
                 maxpool_bwd(dy, idx, x_in.shape[2], x_in.shape[3])[None])
        elif kind == "concat_skip":
            c = step.layer.in_channels
            push(step.input_name, dy4[:, :c])
            push(step.skip_name, dy4[:, c:])
        elif kind == "softmax_channel":
            push(step.input_name, softmax_channel_bwd(dy, acts[name][0])[None])


def loss_and_grads(model, image, gt_v, gt_c, gt_p, loss_weights, frw_cfg,
                   frozen=()):
    """One training-mode forward/backward pass.

    Returns (grads, parts, trace) where parts has keys loss_seg, loss_cc,
    loss_frw and grads maps every trainable weight name to its gradient.
    """
    lw = loss_weights or LossWeights()
    y_seg, y_cc, trace = forward(model, image, training=True)
    grads = {n: np.zeros_like(model.weights[n])
             for n in trainable_weight_names(model, frozen)}
    dacts = {}

    ce_v = masked_cross_entropy(y_seg, gt_v)
    ce_c = masked_cross_entropy(y_seg, gt_c)
    ce_p = masked_cross_entropy(y_cc, gt_p)
    dacts["seg.softmax"] = (lw.alpha_v * masked_ce_prob_grad(y_seg, gt_v)
                            + lw.alpha_c * masked_ce_prob_grad(y_seg, gt_c))
    dacts["cc.softmax"] = lw.alpha_p * masked_ce_prob_grad(y_cc, gt_p)

    loss_frw = 0.0
    frw_on = frw_cfg is not None and frw_cfg.enabled and lw.alpha_frw != 0
    if frw_on:
        layer_l = resolve_trunk_layer(model, frw_cfg.layer)
        trace2, rel = reweighted_cc_trace(model, trace, gt_p, frw_cfg,
                                          training=True)
        y_cc_hat = trace2.outputs["cc.softmax"]
        loss_frw = masked_cross_entropy(y_cc_hat, gt_p)
        w_map = frw_weights(rel)

        steps_cc = execution_plan(model, heads=("cc",))
        rerun = set(trace2.recomputed)
        rerun_steps = [s for s in steps_cc if s.layer.name in rerun]
        dacts2 = {"cc.softmax": lw.alpha_frw
                  * masked_ce_prob_grad(y_cc_hat, gt_p)}
        d_fhat = [np.zeros_like(trace2.outputs[layer_l])]

        def route(name, g):
            # grads falling off the re-run subgraph go to the original
            # graph; grads into the spliced feature map are collected here
            if name == layer_l:
                d_fhat[0] = d_fhat[0] + g
                return True
            if name not in rerun:
                dacts[name] = dacts[name] + g if name in dacts else g
                return True
            return False

        _backward_steps(model, rerun_steps, trace2.outputs, trace2.bn_stats,
                        dacts2, grads, frozen, route=route)
        # stop-gradient through the re-weighting map
        dacts[layer_l] = dacts.get(layer_l, 0) + w_map * d_fhat[0]

    steps_all = execution_plan(model)
    _backward_steps(model, steps_all, trace.outputs, trace.bn_stats, dacts,
                    grads, frozen)

    parts = {
        "loss_seg": lw.alpha_v * ce_v + lw.alpha_c * ce_c,
        "loss_cc": lw.alpha_p * ce_p + lw.alpha_frw * loss_frw,
        "loss_frw": loss_frw,
    }
    return grads, parts, trace


def backward(model, image, gt_v, gt_c, gt_p, loss_weights=None, frw_cfg=None,
             frozen=()):
    """Gradient map (weight name -> array) of loss_seg + loss_cc."""
    grads, _, _ = loss_and_grads(model, image, gt_v, gt_c, gt_p,
                                 loss_weights, frw_cfg, frozen)
    return grads
