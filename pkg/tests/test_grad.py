"""Analytic gradients against central finite differences (double precision).

The re-weighting map is a stop-gradient constant, so the difference
oracle evaluates the loss with the map frozen at the base point; that is
the function the optimizer actually descends.
"""

import numpy as np

from dotseg.grad import backward, loss_and_grads, trainable_weight_names
from dotseg.losses import (FrwConfig, LossWeights, frw_weights,
                           masked_cross_entropy, reweighted_cc_trace)
from dotseg.network import (forward, forward_from, new_model,
                            resolve_trunk_layer)

IGNORE = 255
FD_STEP = 1e-5
REL_TOL = 1e-5
ABS_TOL = 1e-6
MAG_FLOOR = 1e-4


def make_problem(seed=3, frw_layer=None):
    rng = np.random.default_rng(seed)
    model = new_model(depth=2, width=4, seed=seed, dtype=np.float64)
    for k in model.weights:
        if k.endswith(".b"):
            model.weights[k] = rng.normal(0, 0.1, model.weights[k].shape)
        elif k.endswith(".gamma"):
            model.weights[k] = 1.0 + 0.3 * rng.standard_normal(
                model.weights[k].shape)
    image = rng.random((1, 3, 8, 8))
    gt_v = rng.integers(0, 2, (8, 8)).astype(np.uint8)
    gt_v[0, :3] = IGNORE
    gt_c = rng.integers(0, 2, (8, 8)).astype(np.uint8)
    gt_p = np.zeros((8, 8), np.uint8)
    gt_p[3:6, 3:6] = 1
    if frw_layer is None:
        lw = LossWeights(50, 50, 200, 0)
        cfg = FrwConfig(enabled=False)
    else:
        lw = LossWeights(50, 50, 100, 100)
        cfg = FrwConfig(layer=frw_layer, enabled=True)
    return model, image, (gt_v, gt_c, gt_p), lw, cfg


def frozen_loss_fn(model, image, gts, lw, cfg):
    """Total loss with the re-weighting map pinned at the base point."""
    gt_v, gt_c, gt_p = gts
    if cfg.enabled:
        _, _, trace0 = forward(model, image, training=True)
        layer = resolve_trunk_layer(model, cfg.layer)
        _, rel0 = reweighted_cc_trace(model, trace0, gt_p, cfg, training=True)
        w0 = frw_weights(rel0)

    def loss():
        y_seg, y_cc, trace = forward(model, image, training=True)
        total = (lw.alpha_v * masked_cross_entropy(y_seg, gt_v)
                 + lw.alpha_c * masked_cross_entropy(y_seg, gt_c)
                 + lw.alpha_p * masked_cross_entropy(y_cc, gt_p))
        if cfg.enabled:
            f_hat = w0 * trace.outputs[layer]
            trace2 = forward_from(model, trace, layer, f_hat, heads=("cc",),
                                  training=True)
            total += lw.alpha_frw * masked_cross_entropy(
                trace2.outputs["cc.softmax"], gt_p)
        return total

    return loss


def check_gradients(model, image, gts, lw, cfg, per_array=4, seed=0):
    grads, _, _ = loss_and_grads(model, image, *gts, lw, cfg)
    loss = frozen_loss_fn(model, image, gts, lw, cfg)
    rng = np.random.default_rng(seed)
    for name in sorted(grads):
        flat = model.weights[name].reshape(-1)
        pick = rng.choice(flat.size, size=min(per_array, flat.size),
                          replace=False)
        for i in pick:
            orig = flat[i]
            flat[i] = orig + FD_STEP
            lp = loss()
            flat[i] = orig - FD_STEP
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / (2 * FD_STEP)
            an = grads[name].reshape(-1)[i]
            scale = max(abs(fd), abs(an))
            if scale > MAG_FLOOR:
                assert abs(fd - an) / scale < REL_TOL, \
                    f"{name}[{i}]: analytic {an} vs fd {fd}"
            else:
                assert abs(fd - an) < ABS_TOL, \
                    f"{name}[{i}]: analytic {an} vs fd {fd}"


class TestGradients:
    def test_plain_losses_match_fd(self):
        check_gradients(*make_problem(seed=3, frw_layer=None))

    def test_frw_enc1_matches_fd(self):
        check_gradients(*make_problem(seed=4, frw_layer="enc1"))

    def test_frw_bottleneck_matches_fd(self):
        check_gradients(*make_problem(seed=5, frw_layer="bottleneck"),
                        per_array=3)

    def test_zero_loss_weights_zero_gradients(self):
        model, image, gts, _, _ = make_problem(seed=6)
        grads = backward(model, image, *gts, LossWeights(0, 0, 0, 0),
                         FrwConfig(enabled=False))
        assert grads  # every trainable array present
        for g in grads.values():
            assert (g == 0).all()

    def test_frozen_layer_absent_from_map(self):
        model, image, gts, lw, cfg = make_problem(seed=7)
        frozen = ("enc1.conv1", "cc.bn2")
        grads = backward(model, image, *gts, lw, cfg, frozen=frozen)
        assert "enc1.conv1.w" not in grads and "enc1.conv1.b" not in grads
        assert "cc.bn2.gamma" not in grads
        assert "enc1.conv2.w" in grads
        assert set(grads) == set(trainable_weight_names(model, frozen))

    def test_frw_zero_relevance_bitwise_reduction(self):
        model, image, gts, lw, _ = make_problem(seed=8, frw_layer="enc1")
        model.weights["cc.conv3.b"] = np.array([0.0, -100.0])
        cfg = FrwConfig(layer="enc1", enabled=True)
        _, parts, _ = loss_and_grads(model, image, *gts, lw, cfg)
        y_seg, y_cc, _ = forward(model, image, training=True)
        assert parts["loss_frw"] == masked_cross_entropy(y_cc, gts[2])
