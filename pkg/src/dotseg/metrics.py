"""Pixel- and object-level evaluation: accuracy, F1, object DICE, AJI."""

import json
import math

import numpy as np


def pixel_metrics(pred_fg, gt_fg):
    """(accuracy, f1) for boolean foreground masks; f1 = 1 if both empty."""
    pred_fg = np.asarray(pred_fg, dtype=bool)
    gt_fg = np.asarray(gt_fg, dtype=bool)
    tp = int((pred_fg & gt_fg).sum())
    fp = int((pred_fg & ~gt_fg).sum())
    fn = int((~pred_fg & gt_fg).sum())
    tn = pred_fg.size - tp - fp - fn
    accuracy = (tp + tn) / pred_fg.size
    f1 = 1.0 if (2 * tp + fp + fn) == 0 else 2 * tp / (2 * tp + fp + fn)
    return accuracy, f1


def _compact(instances):
    """Instance map with ids relabelled to 1..K (order preserved)."""
    instances = np.asarray(instances)
    ids = np.unique(instances)
    ids = ids[ids != 0]
    lut = np.zeros(int(instances.max()) + 1 if ids.size else 1, dtype=np.int64)
    lut[ids] = np.arange(1, ids.size + 1)
    return lut[instances], ids.size


def _overlap_matrix(gt, pred, ng, ns):
    joint = gt.astype(np.int64) * (ns + 1) + pred.astype(np.int64)
    counts = np.bincount(joint.ravel(), minlength=(ng + 1) * (ns + 1))
    return counts.reshape(ng + 1, ns + 1)


def object_dice(gt, pred):
    """Size-weighted symmetric mean of per-object Dice scores.

    Every ground-truth object is matched to the prediction with maximal
    pixel overlap and vice versa (ties to the lowest id, Dice 0 when
    nothing overlaps); each side is weighted by object size. 1 when both
    maps are empty, 0 when exactly one is.
    """
    gt, ng = _compact(gt)
    pred, ns = _compact(pred)
    if ng == 0 and ns == 0:
        return 1.0
    if ng == 0 or ns == 0:
        return 0.0
    m = _overlap_matrix(gt, pred, ng, ns)
    g_sizes = m.sum(axis=1)  # index 0 = background
    s_sizes = m.sum(axis=0)
    g_total = int(g_sizes[1:].sum())
    s_total = int(s_sizes[1:].sum())
    terms_g = []
    for i in range(1, ng + 1):
        j = int(m[i, 1:].argmax()) + 1
        inter = int(m[i, j])
        dice = 0.0 if inter == 0 else 2 * inter / int(g_sizes[i] + s_sizes[j])
        terms_g.append(int(g_sizes[i]) / g_total * dice)
    terms_s = []
    for j in range(1, ns + 1):
        i = int(m[1:, j].argmax()) + 1
        inter = int(m[i, j])
        dice = 0.0 if inter == 0 else 2 * inter / int(g_sizes[i] + s_sizes[j])
        terms_s.append(int(s_sizes[j]) / s_total * dice)
    return 0.5 * (math.fsum(terms_g) + math.fsum(terms_s))


def aji(gt, pred):
    """Aggregated Jaccard index.

    Each ground-truth object picks the prediction with the highest
    Jaccard overlap (ties to the lowest id); intersections and unions
    accumulate over these pairs, unmatched ground truth adds its own
    size to the union, and every prediction never used as a best match
    adds its size to the union. 1 when both maps are empty, 0 when
    exactly one is.
    """
    gt, ng = _compact(gt)
    pred, ns = _compact(pred)
    if ng == 0 and ns == 0:
        return 1.0
    if ng == 0 or ns == 0:
        return 0.0
    m = _overlap_matrix(gt, pred, ng, ns)
    g_sizes = m.sum(axis=1)
    s_sizes = m.sum(axis=0)
    c = 0
    u = 0
    used = set()
    for i in range(1, ng + 1):
        inter = m[i, 1:]
        union = g_sizes[i] + s_sizes[1:] - inter
        jac = inter / union
        j = int(jac.argmax()) + 1
        if m[i, j] == 0:
            u += int(g_sizes[i])
            continue
        c += int(m[i, j])
        u += int(g_sizes[i] + s_sizes[j] - m[i, j])
        used.add(j)
    for j in range(1, ns + 1):
        if j not in used:
            u += int(s_sizes[j])
    return c / u


def image_report(gt_instances, pred_instances):
    """The four metrics for one image as a dict."""
    acc, f1 = pixel_metrics(np.asarray(pred_instances) > 0,
                            np.asarray(gt_instances) > 0)
    return {
        "acc": acc,
        "pixel_f1": f1,
        "dice_obj": object_dice(gt_instances, pred_instances),
        "aji": aji(gt_instances, pred_instances),
    }


def dataset_report(per_image):
    """Report with per-image rows and unweighted dataset means."""
    keys = ("acc", "pixel_f1", "dice_obj", "aji")
    mean = {k: (math.fsum(r[k] for r in per_image.values()) / len(per_image)
                if per_image else 0.0) for k in keys}
    return {"per_image": {name: per_image[name] for name in sorted(per_image)},
            "mean": mean}


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1)
