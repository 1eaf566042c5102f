"""Desk-scale trainer: Adam, flip/rot90/crop augmentation, loss logging."""

import csv
from collections import namedtuple

import numpy as np

from .errors import DataError
from .grad import loss_and_grads
from .losses import LossWeights

Sample = namedtuple("Sample", "name image gt_v gt_c gt_p")

BN_MOMENTUM = 0.1


class Adam:
    """Standard Adam with bias correction; per-array first/second moments."""

    def __init__(self, lr=0.001, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, weights, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name in sorted(grads):
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            weights[name] = weights[name] - scale * self.m[name] / (
                np.sqrt(self.v[name]) + self.eps)


def augment_sample(rng, image, maps, patch_size=None):
    """Random crop to patch_size, flips, and a 90-degree rotation.

    ``image`` is 1x3xHxW, ``maps`` a list of HxW label maps; all are
    transformed identically. Draws from ``rng`` in a fixed order.
    """
    h, w = image.shape[2], image.shape[3]
    if patch_size is not None and (patch_size > h or patch_size > w):
        raise DataError(f"patch {patch_size} larger than image {h}x{w}")
    if patch_size is not None and (patch_size < h or patch_size < w):
        top = int(rng.integers(0, h - patch_size + 1))
        left = int(rng.integers(0, w - patch_size + 1))
        image = image[:, :, top:top + patch_size, left:left + patch_size]
        maps = [m[top:top + patch_size, left:left + patch_size] for m in maps]
    if rng.random() < 0.5:
        image = image[:, :, :, ::-1]
        maps = [m[:, ::-1] for m in maps]
    if rng.random() < 0.5:
        image = image[:, :, ::-1, :]
        maps = [m[::-1, :] for m in maps]
    k = int(rng.integers(0, 4))
    if k:
        image = np.rot90(image, k, axes=(2, 3))
        maps = [np.rot90(m, k) for m in maps]
    return np.ascontiguousarray(image), [np.ascontiguousarray(m) for m in maps]


def update_running_stats(model, trace, momentum=BN_MOMENTUM):
    """Fold the batch statistics of one step into the running estimates."""
    for name, (mean, var) in trace.bn_stats.items():
        dtype = model.weights[f"{name}.mean"].dtype
        model.weights[f"{name}.mean"] = (
            (1 - momentum) * model.weights[f"{name}.mean"]
            + momentum * mean.astype(dtype))
        model.weights[f"{name}.var"] = (
            (1 - momentum) * model.weights[f"{name}.var"]
            + momentum * var.astype(dtype))


def train(model, dataset, epochs=200, lr=0.001, betas=(0.9, 0.999),
          loss_weights=None, frw_cfg=None, patch_size=None, augment=True,
          seed=0, frozen=(), log_path=None, epoch_callback=None):
    """Train in place for ``epochs`` sweeps; returns (model, loss_log).

    The loss log holds one dict per epoch with the mean loss_seg,
    loss_cc and loss_frw. Deterministic for a given seed.
    """
    if not dataset:
        raise DataError("empty training dataset")
    lw = loss_weights or LossWeights.defaults(
        frw_cfg is not None and frw_cfg.enabled)
    opt = Adam(lr=lr, betas=betas)
    rng = np.random.default_rng(seed)
    log = []
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        sums = {"loss_seg": 0.0, "loss_cc": 0.0, "loss_frw": 0.0}
        for i in order:
            s = dataset[i]
            image, (gt_v, gt_c, gt_p) = s.image, (s.gt_v, s.gt_c, s.gt_p)
            if augment:
                image, (gt_v, gt_c, gt_p) = augment_sample(
                    rng, image, [gt_v, gt_c, gt_p], patch_size)
            grads, parts, trace = loss_and_grads(
                model, image, gt_v, gt_c, gt_p, lw, frw_cfg, frozen)
            opt.step(model.weights, grads)
            update_running_stats(model, trace)
            for k in sums:
                sums[k] += parts[k]
        row = {"epoch": epoch, **{k: v / len(dataset) for k, v in sums.items()}}
        log.append(row)
        if epoch_callback is not None:
            epoch_callback(epoch, model, row)
    if log_path is not None:
        write_loss_log(log_path, log)
    return model, log


def write_loss_log(path, log):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "loss_seg", "loss_cc", "loss_frw"])
        writer.writeheader()
        for row in log:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
