"""Coarse label maps from dot annotations: cluster, Voronoi, enlarged point.

Label codes: 0 = background, 1 = cell, 255 = ignore (picked to survive
8-bit image round trips).
"""

import csv
import warnings

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2

from .errors import DataError

BACKGROUND = 0
CELL = 1
IGNORE = 255

# weight of the distance-to-point feature relative to the color channels
DIST_FEATURE_WEIGHT = 0.5


def check_points(points, h, w):
    """Validate (row, col) annotations: in bounds, no duplicates."""
    pts = [(int(r), int(c)) for r, c in points]
    if len(set(pts)) != len(pts):
        raise DataError("duplicate annotation points")
    for r, c in pts:
        if not (0 <= r < h and 0 <= c < w):
            raise DataError(f"point ({r}, {c}) outside {h}x{w} image")
    return pts


def nearest_point_distance(points, h, w):
    """Per-pixel Euclidean distance to the nearest annotation point."""
    rr, cc = np.mgrid[0:h, 0:w]
    best = np.full((h, w), np.inf)
    for r, c in points:
        d = np.sqrt((rr - r) ** 2.0 + (cc - c) ** 2.0)
        np.minimum(best, d, out=best)
    return best


def cluster_labels(image, points, k=3, seed=0,
                   dist_weight=DIST_FEATURE_WEIGHT):
    """K-Means coarse labels over (R, G, B, distance) pixel features.

    The cluster holding the most annotation points becomes cell; of the
    two remaining, the one with larger mean distance-to-point becomes
    background and the last is ignore. Degenerate clusterings are
    re-seeded up to 5 times before raising.
    """
    if k != 3:
        raise DataError(f"cluster labeling requires k=3, got {k}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[0], image.shape[1]
    pts = check_points(points, h, w)
    if not pts:
        raise DataError("cluster labels need at least one point")
    d = nearest_point_distance(pts, h, w)
    dmax = d.max()
    if dmax > 0:
        d = d / dmax
    feats = np.concatenate([image.reshape(h * w, 3),
                            dist_weight * d.reshape(h * w, 1)], axis=1)
    assign = None
    for attempt in range(5):
        try:
            with warnings.catch_warnings():
                # the ++ init warns on degenerate data; handled by the retry
                warnings.simplefilter("ignore", RuntimeWarning)
                _, labels = kmeans2(feats, k, minit="++",
                                    seed=seed + attempt, missing="raise")
        except ClusterError:
            continue
        if len(np.unique(labels)) == k:
            assign = labels
            break
    if assign is None:
        raise DataError("K-Means failed to produce 3 non-empty clusters "
                        "after 5 seeds")
    assign = assign.reshape(h, w)
    rows = np.array([p[0] for p in pts])
    cols = np.array([p[1] for p in pts])
    point_counts = np.bincount(assign[rows, cols], minlength=k)
    cell = int(point_counts.argmax())
    rest = [c for c in range(k) if c != cell]
    mean_d = [d[assign == c].mean() for c in rest]
    background = rest[int(np.argmax(mean_d))]
    out = np.full((h, w), IGNORE, dtype=np.uint8)
    out[assign == cell] = CELL
    out[assign == background] = BACKGROUND
    return out


def voronoi_labels(points, h, w):
    """Voronoi-partition labels: ridges background, point squares cell.

    Each pixel is assigned to its nearest point; pixels 8-adjacent to a
    different region become background (a ~2 px ridge), the 3x3 squares
    around the points become cell, everything else is ignore.
    """
    pts = check_points(points, h, w)
    if not pts:
        raise DataError("voronoi labels need at least one point")
    out = np.full((h, w), IGNORE, dtype=np.uint8)
    if len(pts) > 1:
        region = nearest_point_region(pts, h, w)
        ridge = np.zeros((h, w), dtype=bool)
        ridge[:, :-1] |= region[:, :-1] != region[:, 1:]
        ridge[:, 1:] |= region[:, :-1] != region[:, 1:]
        ridge[:-1, :] |= region[:-1, :] != region[1:, :]
        ridge[1:, :] |= region[:-1, :] != region[1:, :]
        ridge[:-1, :-1] |= region[:-1, :-1] != region[1:, 1:]
        ridge[1:, 1:] |= region[:-1, :-1] != region[1:, 1:]
        ridge[:-1, 1:] |= region[:-1, 1:] != region[1:, :-1]
        ridge[1:, :-1] |= region[:-1, 1:] != region[1:, :-1]
        out[ridge] = BACKGROUND
    _paint_squares(out, pts, CELL)
    return out


def nearest_point_region(points, h, w):
    """Index of the nearest point per pixel (ties to the lowest index)."""
    rr, cc = np.mgrid[0:h, 0:w]
    best = np.full((h, w), np.inf)
    region = np.zeros((h, w), dtype=np.int32)
    for i, (r, c) in enumerate(points):
        d = (rr - r) ** 2.0 + (cc - c) ** 2.0
        closer = d < best
        region[closer] = i
        best[closer] = d[closer]
    return region


def _paint_squares(out, pts, value):
    h, w = out.shape
    for r, c in pts:
        out[max(0, r - 1):min(h, r + 2), max(0, c - 1):min(w, c + 2)] = value


def enlarged_point_labels(points, h, w):
    """3x3 cell squares around each point (clipped); everything else
    background, no ignore pixels."""
    pts = check_points(points, h, w)
    out = np.zeros((h, w), dtype=np.uint8)
    _paint_squares(out, pts, CELL)
    return out


def read_points_csv(path):
    """Points from a CSV with header ``row,col``, zero-indexed."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["row", "col"]:
            raise DataError(f"{path}: expected 'row,col' header")
        pts = []
        for line in reader:
            if not line:
                continue
            pts.append((int(line[0]), int(line[1])))
    return pts


def write_points_csv(path, points):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col"])
        for r, c in points:
            writer.writerow([int(r), int(c)])
