"""Shared constructions: handcrafted models and benchmark images."""

import numpy as np

from dotseg.labels import CELL, IGNORE
from dotseg.network import new_model


def zero_bias_model(depth=2, width=4, seed=0, dtype=np.float32,
                    randomize_bn=True):
    """Random net with all biases zero and zero-centred batchnorm, so
    relevance propagation conserves mass exactly (up to the stabilizer)."""
    model = new_model(depth=depth, width=width, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed + 1)
    for name in model.weights:
        if name.endswith(".b") or name.endswith(".beta") or name.endswith(".mean"):
            model.weights[name] = np.zeros_like(model.weights[name])
        elif randomize_bn and name.endswith(".gamma"):
            model.weights[name] = (
                0.5 + rng.random(model.weights[name].shape)).astype(dtype)
        elif randomize_bn and name.endswith(".var"):
            model.weights[name] = (
                0.5 + rng.random(model.weights[name].shape)).astype(dtype)
    return model


def purpleness_model():
    """Handcrafted D=1, W=4 net whose relevance heatmaps trace cell shapes.

    Channel 0 of enc1 detects 'blue minus green' (positive inside the
    synthetic purple cells, negative on the pink background). The decoder
    and cc head apply all-ones 3x3 kernels, so explaining a cc blob
    spreads relevance onto detector-positive pixels within a few hops:
    the heatmap support is exactly the nearby cell body.
    """
    m = new_model(depth=1, width=4, seed=0)
    for k in m.weights:
        if k.endswith(".gamma") or k.endswith(".var"):
            m.weights[k] = np.ones_like(m.weights[k])
        else:
            m.weights[k] = np.zeros_like(m.weights[k])
    w = m.weights
    w["enc1.conv1.w"][0, 2, 1, 1] = 1.0   # + blue
    w["enc1.conv1.w"][0, 1, 1, 1] = -1.0  # - green
    w["enc1.conv1.b"][0] = -0.03
    w["enc1.conv1.b"][1:] = -1.0          # channels 1..3 stay dark
    w["enc1.conv2.w"][0, 0, 1, 1] = 1.0
    w["enc1.conv2.b"][1:] = -1.0
    w["bottleneck.conv1.w"][0, 0, 1, 1] = 1.0
    w["bottleneck.conv1.b"][1:] = -1.0
    w["bottleneck.conv2.w"][0, 0, 1, 1] = 1.0
    w["bottleneck.conv2.b"][1:] = -1.0
    w["up1.w"][0, 0] = 1.0                # nearest-neighbour upsample
    w["dec1.conv1.w"][0, 4] = 1.0         # all-ones 3x3 over the skip channel
    w["dec1.conv1.b"][1:] = -1.0
    w["dec1.conv2.w"][0, 0] = 1.0         # all-ones 3x3
    w["dec1.conv2.b"][1:] = -1.0
    w["seg.conv.w"][1, 0, 0, 0] = 1.0
    w["cc.conv1.w"][0, 0] = 1.0           # all-ones 3x3
    w["cc.conv1.b"][1:] = -1.0
    w["cc.conv2.w"][0, 0] = 1.0           # all-ones 3x3
    w["cc.conv2.b"][1:] = -1.0
    w["cc.conv3.w"][1, 0, 0, 0] = 1.0
    w["cc.conv3.b"][1] = -0.02
    return m


def disk_benchmark(h=80, w=80, n=12, seed=3, ring_width=2.2):
    """Dark disks with a mid-tone ring on bright ground; the expected
    clustering is disks=cell, ground=background, ring=ignore, verifiable
    pixel by pixel."""
    rng = np.random.default_rng(seed)
    img = np.empty((h, w, 3))
    img[:] = (0.90, 0.90, 0.88)
    truth = np.zeros((h, w), np.uint8)
    pts = []
    occupied = np.zeros((h, w), bool)
    tries = 0
    while len(pts) < n and tries < 500:
        tries += 1
        r0, c0 = int(rng.integers(9, h - 9)), int(rng.integers(9, w - 9))
        rr, cc = np.mgrid[0:h, 0:w]
        d2 = (rr - r0) ** 2 + (cc - c0) ** 2
        rad = rng.uniform(4, 6)
        if (occupied & (d2 <= (rad + ring_width + 3) ** 2)).any():
            continue
        disk = d2 <= rad ** 2
        ring = (d2 <= (rad + ring_width) ** 2) & ~disk
        img[disk] = (0.25, 0.15, 0.55)
        img[ring] = (0.58, 0.52, 0.71)
        truth[disk] = CELL
        truth[ring] = IGNORE
        occupied |= d2 <= (rad + ring_width + 1) ** 2
        pts.append((r0, c0))
    return img.astype(np.float32), truth, pts


def random_labels(rng, h, w, p_ignore=0.2):
    lab = rng.integers(0, 2, (h, w)).astype(np.uint8)
    lab[rng.random((h, w)) < p_ignore] = IGNORE
    return lab
