"""PNG round trips for images, label maps, instance maps and overlays."""

import numpy as np
from PIL import Image

from .errors import DataError


def write_image_rgb(path, image):
    """HxWx3 float [0,1] -> 8-bit RGB PNG."""
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def read_image_rgb(path):
    """8-bit RGB PNG -> HxWx3 float32 in [0,1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def image_to_nchw(image):
    """HxWx3 -> 1x3xHxW float32."""
    return np.ascontiguousarray(
        np.asarray(image, dtype=np.float32).transpose(2, 0, 1)[None])


def write_label_map(path, label):
    Image.fromarray(np.asarray(label, dtype=np.uint8), mode="L").save(path)


def read_label_map(path):
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim != 2:
        raise DataError(f"{path}: label map must be single-channel")
    return arr


def write_instance_map(path, instances):
    arr = np.asarray(instances)
    if arr.min() < 0 or arr.max() > 65535:
        raise DataError("instance ids must fit 16-bit")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def read_instance_map(path):
    with Image.open(path) as im:
        arr = np.asarray(im)
    return arr.astype(np.int32)


def write_gray8(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


def instance_palette(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(60, 255, size=(max(n, 1), 3)).astype(np.uint8)


def overlay_instances(image, instances, cc_points=None):
    """8-bit RGB rendering: per-instance colors blended over the image."""
    instances = np.asarray(instances)
    base = np.clip(np.asarray(image) * 255.0, 0, 255).astype(np.float32)
    n = int(instances.max())
    colors = instance_palette(n)
    out = base.copy()
    for inst_id in range(1, n + 1):
        m = instances == inst_id
        out[m] = 0.45 * base[m] + 0.55 * colors[inst_id - 1]
    out = out.astype(np.uint8)
    if cc_points:
        h, w = instances.shape
        for p in cc_points:
            r0, r1 = max(0, p.row - 1), min(h, p.row + 2)
            c0, c1 = max(0, p.col - 1), min(w, p.col + 2)
            out[r0:r1, p.col] = (255, 0, 0)
            out[p.row, c0:c1] = (255, 0, 0)
    return out
