"""Synthetic ellipse-cell benchmark data with exact instance ground truth.

Cells are dark purple ellipses on a light pink background (so a color
contrast exists in individual channels, not just in luminance), with
optional touching pairs (clumps) and a fraction of small cells. Point
annotations are the instance centroids.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError

BG_COLOR = np.array([0.88, 0.84, 0.78])
CELL_COLOR = np.array([0.40, 0.22, 0.58])
SMALL_RADIUS = (2.0, 3.0)
STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass
class SyntheticSpec:
    count: int = 16
    height: int = 64
    width: int = 64
    cells: tuple = (6, 10)
    radius: tuple = (4.0, 7.0)
    clump_fraction: float = 0.0  # fraction of cells placed in touching pairs
    small_fraction: float = 0.0  # fraction of cells drawn at SMALL_RADIUS
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.clump_fraction <= 1 and 0 <= self.small_fraction <= 1):
            raise DataError("fractions must lie in [0, 1]")
        if self.cells[0] > self.cells[1] or self.cells[0] < 1:
            raise DataError(f"bad cell count range {self.cells}")
        if self.radius[0] > self.radius[1] or self.radius[0] <= 0:
            raise DataError(f"bad radius range {self.radius}")


@dataclass
class SyntheticImage:
    name: str
    image: np.ndarray      # HxWx3 float32 in [0, 1]
    instances: np.ndarray  # HxW int32, exact ground truth
    points: list           # (row, col) per instance, in id order
    small_ids: list        # instance ids drawn at small radius


def _ellipse_mask(h, w, center, axes, phi):
    r0, c0 = center
    a, b = axes
    rr, cc = np.mgrid[0:h, 0:w]
    dr, dc = rr - r0, cc - c0
    u = (dr * math.cos(phi) + dc * math.sin(phi)) / a
    v = (-dr * math.sin(phi) + dc * math.cos(phi)) / b
    return u * u + v * v <= 1.0


def _draw_axes(rng, radius_range):
    a = rng.uniform(*radius_range)
    b = a * rng.uniform(0.65, 1.0)
    phi = rng.uniform(0, math.pi)
    return (a, b), phi


def generate_synthetic(spec):
    """Deterministic dataset for ``spec``; returns SyntheticImage records."""
    rng = np.random.default_rng(spec.seed)
    return [_one_image(rng, spec, f"img_{i:03d}") for i in range(spec.count)]


def _one_image(rng, spec, name):
    h, w = spec.height, spec.width
    n = int(rng.integers(spec.cells[0], spec.cells[1] + 1))
    n_pairs = int(round(spec.clump_fraction * n / 2))
    n_small = int(round(spec.small_fraction * n))
    n_small = min(n_small, n - 2 * n_pairs)
    n_single = n - 2 * n_pairs - n_small

    instances = np.zeros((h, w), dtype=np.int32)
    occupied = np.zeros((h, w), dtype=bool)
    small_ids = []
    next_id = 1

    def commit(mask):
        nonlocal next_id
        instances[mask] = next_id
        occupied[mask] = True
        next_id += 1
        return next_id - 1

    for _ in range(n_pairs):
        m1, center1, a1 = _place_single(rng, spec, occupied, spec.radius)
        commit(m1)
        m2 = _place_partner(rng, spec, occupied, m1, center1, a1)
        commit(m2)
    for _ in range(n_single):
        mask, _, _ = _place_single(rng, spec, occupied, spec.radius)
        commit(mask)
    for _ in range(n_small):
        mask, _, _ = _place_single(rng, spec, occupied, SMALL_RADIUS)
        small_ids.append(commit(mask))

    image = np.empty((h, w, 3))
    image[:] = BG_COLOR
    for inst_id in range(1, next_id):
        shade = rng.uniform(-0.06, 0.06)  # same shift per channel keeps hue
        image[instances == inst_id] = np.clip(CELL_COLOR + shade, 0, 1)
    if spec.noise > 0:
        image += rng.normal(0, spec.noise, image.shape)
    image = np.clip(image, 0, 1).astype(np.float32)

    points = []
    for inst_id in range(1, next_id):
        rows, cols = np.nonzero(instances == inst_id)
        r = int(np.floor(rows.mean() + 0.5))
        c = int(np.floor(cols.mean() + 0.5))
        if instances[r, c] != inst_id:
            snap = np.argmin(np.abs(rows - r) + np.abs(cols - c))
            r, c = int(rows[snap]), int(cols[snap])
        points.append((r, c))
    return SyntheticImage(name, image, instances, points, small_ids)


def _place_single(rng, spec, occupied, radius_range, attempts=1000):
    h, w = occupied.shape
    blocked = ndimage.binary_dilation(occupied, structure=STRUCT8)
    for _ in range(attempts):
        axes, phi = _draw_axes(rng, radius_range)
        margin = int(math.ceil(axes[0])) + 1
        if 2 * margin >= min(h, w):
            raise DataError("image too small for the requested cell radius")
        center = (int(rng.integers(margin, h - margin)),
                  int(rng.integers(margin, w - margin)))
        mask = _ellipse_mask(h, w, center, axes, phi)
        if mask.sum() < 4:
            continue
        if (blocked & mask).any():
            continue
        return mask, center, axes[0]
    raise DataError("infeasible packing after 1000 placement attempts")


def _place_partner(rng, spec, occupied, m1, center1, a1, attempts=200):
    """A second ellipse touching (8-adjacent, no overlap kept) the first."""
    h, w = occupied.shape
    others = occupied & ~m1
    near1 = ndimage.binary_dilation(m1, structure=STRUCT8)
    blocked = ndimage.binary_dilation(others, structure=STRUCT8)
    for _ in range(attempts):
        axes, phi = _draw_axes(rng, spec.radius)
        theta = rng.uniform(0, 2 * math.pi)
        for dist in np.arange(a1 + axes[0] + 2.0, 1.0, -1.0):
            r = int(round(center1[0] + dist * math.sin(theta)))
            c = int(round(center1[1] + dist * math.cos(theta)))
            margin = int(math.ceil(axes[0])) + 1
            if not (margin <= r < h - margin and margin <= c < w - margin):
                break
            mask = _ellipse_mask(h, w, (r, c), axes, phi)
            eff = mask & ~occupied
            if (blocked & eff).any():
                break  # would clump with a third cell; new direction
            if eff.sum() < max(4, int(0.75 * mask.sum())):
                break  # too much overlap already; new direction
            if (near1 & eff).any():
                return eff
    raise DataError("could not place a touching partner cell")
