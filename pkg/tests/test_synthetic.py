"""Synthetic dataset generator contracts."""

import numpy as np
import pytest
from scipy import ndimage

from dotseg.errors import DataError
from dotseg.synthetic import SyntheticSpec, generate_synthetic

S8 = np.ones((3, 3), bool)


class TestGenerate:
    def test_deterministic_per_seed(self):
        a = generate_synthetic(SyntheticSpec(count=3, seed=5))
        b = generate_synthetic(SyntheticSpec(count=3, seed=5))
        for x, y in zip(a, b):
            assert (x.image == y.image).all()
            assert (x.instances == y.instances).all()
            assert x.points == y.points

    def test_clump_zero_no_adjacency(self):
        recs = generate_synthetic(SyntheticSpec(
            count=4, height=64, width=64, cells=(6, 9), clump_fraction=0.0,
            seed=1))
        for r in recs:
            lab, n = ndimage.label(r.instances > 0, structure=S8)
            assert n == r.instances.max()

    def test_clump_pairs_touch(self):
        recs = generate_synthetic(SyntheticSpec(
            count=3, height=96, width=96, cells=(8, 10), clump_fraction=0.4,
            seed=2))
        found_pair = 0
        for r in recs:
            lab, n = ndimage.label(r.instances > 0, structure=S8)
            found_pair += n < r.instances.max()
        assert found_pair == len(recs)

    def test_points_inside_instances(self):
        recs = generate_synthetic(SyntheticSpec(count=5, cells=(5, 10), seed=3))
        for r in recs:
            for i, (row, col) in enumerate(r.points):
                assert r.instances[row, col] == i + 1

    def test_cells_darker_than_background(self):
        rec = generate_synthetic(SyntheticSpec(count=1, noise=0.0, seed=4))[0]
        lum = rec.image.mean(axis=2)
        assert lum[rec.instances > 0].mean() < lum[rec.instances == 0].mean()

    def test_small_fraction_produces_small_cells(self):
        rec = generate_synthetic(SyntheticSpec(
            count=1, cells=(8, 8), small_fraction=0.25, seed=6))[0]
        assert len(rec.small_ids) == 2
        sizes = np.bincount(rec.instances.ravel())
        normal = [sizes[i] for i in range(1, rec.instances.max() + 1)
                  if i not in rec.small_ids]
        assert max(sizes[i] for i in rec.small_ids) < min(normal)

    def test_instance_ids_contiguous(self):
        rec = generate_synthetic(SyntheticSpec(count=1, seed=7))[0]
        ids = np.unique(rec.instances)
        assert (ids == np.arange(0, rec.instances.max() + 1)).all()

    def test_infeasible_packing_errors(self):
        with pytest.raises(DataError):
            generate_synthetic(SyntheticSpec(
                count=1, height=24, width=24, cells=(40, 40), radius=(5, 6),
                seed=0))

    def test_bad_fractions_rejected(self):
        with pytest.raises(DataError):
            SyntheticSpec(clump_fraction=1.5)
        with pytest.raises(DataError):
            SyntheticSpec(cells=(5, 2))
