"""Probability maps to instances: cleanup, splitting, expansion.

Instances live in HxW int32 maps with ids 1..K (0 = background) and are
kept contiguous and raster-ordered by first pixel throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError
from .lrp import OutputTarget, explain

STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass
class PostprocessConfig:
    cc_confidence: float = 0.1
    heatmap_threshold: float = 0.05  # fraction of the heatmap maximum
    overlap_threshold: float = 0.5
    min_object_size: int = 5
    seg_threshold: float = 0.5

    def __post_init__(self):
        for f in ("cc_confidence", "heatmap_threshold", "overlap_threshold",
                  "seg_threshold"):
            v = getattr(self, f)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{f}={v} outside [0, 1]")
        if self.min_object_size < 1:
            raise DataError("min_object_size must be >= 1")


@dataclass(frozen=True)
class CcPoint:
    row: int
    col: int
    source_blob_id: int


def renumber_instances(instances):
    """Relabel ids to 1..K in raster order of each instance's first pixel."""
    instances = np.asarray(instances)
    flat = instances.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids != 0
    order = np.argsort(first[keep])
    lut = np.zeros(int(ids.max()) + 1 if ids.size else 1, dtype=np.int32)
    lut[ids[keep][order]] = np.arange(1, keep.sum() + 1)
    return lut[instances]


def morph_cleanup(binary, min_object_size=5):
    """Fill holes, label 8-connected components, drop the small ones.

    Holes are background components not 4-connected to the border.
    Returns an instance map renumbered 1..K in raster order.
    """
    binary = np.asarray(binary, dtype=bool)
    filled = ndimage.binary_fill_holes(binary)
    lab, n = ndimage.label(filled, structure=STRUCT8)
    if n:
        sizes = np.bincount(lab.ravel())
        small = sizes < min_object_size
        small[0] = False
        lab[small[lab]] = 0
    return renumber_instances(lab)


def instance_sizes(instances):
    return np.bincount(instances.ravel())


def condense_cc(cc_prob, cfg):
    """Threshold + cleanup the cc probability map, one point per blob."""
    points, _ = condense_cc_blobs(cc_prob, cfg)
    return points


def condense_cc_blobs(cc_prob, cfg):
    """Like :func:`condense_cc` but also returns the blob instance map."""
    cc_prob = np.asarray(cc_prob)
    if cc_prob.min() < 0 or cc_prob.max() > 1:
        raise DataError("cc probabilities outside [0, 1]")
    blobs = morph_cleanup(cc_prob >= cfg.cc_confidence, cfg.min_object_size)
    points = []
    for blob_id in range(1, int(blobs.max()) + 1):
        rows, cols = np.nonzero(blobs == blob_id)  # raster order
        r = int(np.floor(rows.mean() + 0.5))
        c = int(np.floor(cols.mean() + 0.5))
        if blobs[r, c] != blob_id:
            # centroid off-blob: snap to nearest blob pixel (L1, raster ties)
            snap = np.argmin(np.abs(rows - r) + np.abs(cols - c))
            r, c = int(rows[snap]), int(cols[snap])
        points.append(CcPoint(r, c, blob_id))
    return points, blobs


def split_instances(instances, cc_points):
    """Split every instance that covers two or more cc points.

    Each pixel of such an instance is reassigned to the L1-nearest
    contained point (ties to the raster-earlier point). The foreground
    pixel set is unchanged; ids are renumbered 1..K'.
    """
    instances = np.asarray(instances, dtype=np.int32)
    out = instances.copy()
    contained = {}
    for p in sorted(cc_points, key=lambda p: (p.row, p.col)):
        owner = int(instances[p.row, p.col])
        if owner > 0:
            contained.setdefault(owner, []).append(p)
    next_id = int(instances.max()) + 1
    for owner in sorted(contained):
        pts = contained[owner]
        if len(pts) < 2:
            continue
        rows, cols = np.nonzero(instances == owner)
        d = (np.abs(rows[:, None] - [p.row for p in pts])
             + np.abs(cols[:, None] - [p.col for p in pts]))
        nearest = d.argmin(axis=1)  # first minimum = raster-earlier point
        out[rows, cols] = next_id + nearest
        next_id += len(pts)
    return renumber_instances(out)


def overlap_ratio(a, b):
    """|a & b| / min(|a|, |b|) for two boolean pixel masks."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 or nb == 0:
        raise DataError("overlap_ratio of an empty pixel set")
    return int((a & b).sum()) / min(na, nb)


def expand_cc(instances, cc_points, model, trace, cfg, cc_blobs=None,
              artifacts=None):
    """Grow orphan cc points into new instances via relevance heatmaps.

    A point is an orphan when its pixel lies on background of
    ``instances``. Its source blob is explained back to the input, the
    max-normalized heatmap is thresholded, and the 8-connected component
    containing the point becomes a candidate (minus pixels already owned).
    Candidates that are empty, smaller than min_object_size, or whose raw
    component overlaps an existing instance by more than
    overlap_threshold are discarded. Existing instances are never
    modified. ``cc_blobs`` defaults to re-condensing the traced cc output;
    pass the blob map when the points came from elsewhere.
    """
    instances = np.asarray(instances, dtype=np.int32)
    if cc_blobs is None:
        _, cc_blobs = condense_cc_blobs(trace.outputs["cc.softmax"][0, 1], cfg)
    out = instances.copy()
    next_id = int(out.max()) + 1
    for p in sorted(cc_points, key=lambda p: (p.row, p.col)):
        if instances[p.row, p.col] != 0:
            continue
        blob_pixels = np.argwhere(cc_blobs == p.source_blob_id)
        if blob_pixels.size == 0:
            continue
        heat = explain(model, trace,
                       OutputTarget(head="cc", pixels=blob_pixels))
        # the trace may come from a padded forward pass; padding is
        # bottom/right only, so cropping keeps coordinates aligned
        heat = heat[:instances.shape[0], :instances.shape[1]]
        peak = float(heat.max())
        if peak <= 0:
            continue
        mask = heat >= cfg.heatmap_threshold * peak
        if not mask[p.row, p.col]:
            continue
        comp_lab, _ = ndimage.label(mask, structure=STRUCT8)
        raw = comp_lab == comp_lab[p.row, p.col]
        candidate = raw & (out == 0)
        if int(candidate.sum()) < cfg.min_object_size:
            continue
        # overlap test on the raw thresholded component vs existing cells
        sizes = instance_sizes(out)
        hit = np.bincount(out[raw].ravel(), minlength=sizes.size)
        raw_n = int(raw.sum())
        ratios = [hit[j] / min(raw_n, int(sizes[j]))
                  for j in range(1, sizes.size) if hit[j] > 0]
        if ratios and max(ratios) > cfg.overlap_threshold:
            continue
        out[candidate] = next_id
        if artifacts is not None:
            artifacts.append({"point": p, "instance_id": next_id,
                              "heatmap": heat})
        next_id += 1
    return out


def binarize_seg(y_seg, cfg):
    """Foreground mask from the 1x2xHxW seg probability map."""
    return np.asarray(y_seg)[0, 1] >= cfg.seg_threshold
