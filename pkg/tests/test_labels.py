"""Coarse label generation: cluster, Voronoi, enlarged point."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dotseg.errors import DataError
from dotseg.labels import (BACKGROUND, CELL, IGNORE, cluster_labels,
                           enlarged_point_labels, read_points_csv,
                           voronoi_labels, write_points_csv)

from helpers import disk_benchmark
from oracles import nearest_point_oracle


def spaced_points(rng, h, w, n, min_sep=3.0):
    pts = []
    for _ in range(500):
        cand = (int(rng.integers(0, h)), int(rng.integers(0, w)))
        if all((cand[0] - p[0]) ** 2 + (cand[1] - p[1]) ** 2 >= min_sep ** 2
               for p in pts):
            pts.append(cand)
        if len(pts) == n:
            break
    return pts


class TestClusterLabels:
    def test_disk_benchmark_recovered(self):
        img, truth, pts = disk_benchmark(seed=3)
        out = cluster_labels(img, pts, seed=0)
        assert (out == truth).mean() >= 0.99

    def test_points_inside_one_blob_become_cell(self):
        img, truth, pts = disk_benchmark(seed=4)
        out = cluster_labels(img, pts, seed=0)
        rows = np.array([p[0] for p in pts])
        cols = np.array([p[1] for p in pts])
        assert (out[rows, cols] == CELL).all()

    def test_uniform_image_degenerate(self):
        img = np.full((16, 16, 3), 0.5, np.float32)
        with pytest.raises(DataError, match="K-Means"):
            cluster_labels(img, [(8, 8)], seed=0, dist_weight=0.0)

    def test_k_not_three_rejected(self):
        img = np.zeros((8, 8, 3), np.float32)
        with pytest.raises(DataError, match="k=3"):
            cluster_labels(img, [(4, 4)], k=4)

    def test_only_three_codes(self):
        img, _, pts = disk_benchmark(seed=5)
        out = cluster_labels(img, pts, seed=0)
        assert set(np.unique(out)) <= {BACKGROUND, CELL, IGNORE}

    def test_assignment_invariant_to_cluster_permutation(self, monkeypatch):
        # same partition, renamed cluster indices -> identical label map
        import dotseg.labels as labels_mod
        img, _, pts = disk_benchmark(seed=6)
        out0 = cluster_labels(img, pts, seed=0)
        real = labels_mod.kmeans2
        perm = np.array([2, 0, 1])

        def permuted(feats, k, **kw):
            cb, lab = real(feats, k, **kw)
            return cb[np.argsort(perm)], perm[lab]

        monkeypatch.setattr(labels_mod, "kmeans2", permuted)
        out1 = cluster_labels(img, pts, seed=0)
        assert (out0 == out1).all()


class TestVoronoiLabels:
    def test_two_points_on_a_row(self):
        out = voronoi_labels([(0, 0), (0, 9)], 1, 10)
        assert out[0, 4] == BACKGROUND and out[0, 5] == BACKGROUND
        assert out[0, 0] == CELL and out[0, 1] == CELL
        assert out[0, 8] == CELL and out[0, 9] == CELL
        assert out[0, 2] == IGNORE and out[0, 7] == IGNORE

    def test_single_point(self):
        out = voronoi_labels([(3, 3)], 7, 7)
        assert (out != BACKGROUND).all()
        assert (out[2:5, 2:5] == CELL).all()
        assert np.count_nonzero(out == CELL) == 9

    def test_symmetric_square_layout(self):
        pts = [(2, 2), (2, 9), (9, 2), (9, 9)]
        out = voronoi_labels(pts, 12, 12)
        ridge = out == BACKGROUND
        np.testing.assert_array_equal(ridge, ridge[::-1, :])
        np.testing.assert_array_equal(ridge, ridge[:, ::-1])
        np.testing.assert_array_equal(ridge, ridge.T)

    def test_cell_pixels_nearest_their_point(self, rng):
        for _ in range(10):
            h = int(rng.integers(8, 33))
            w = int(rng.integers(8, 33))
            pts = spaced_points(rng, h, w, int(rng.integers(2, 8)))
            out = voronoi_labels(pts, h, w)
            for r, c in np.argwhere(out == CELL):
                i = nearest_point_oracle(pts, r, c)
                p = pts[i]
                assert max(abs(p[0] - r), abs(p[1] - c)) <= 1

    def test_no_points_rejected(self):
        with pytest.raises(DataError):
            voronoi_labels([], 4, 4)


class TestEnlargedPointLabels:
    def test_interior_point_nine_pixels(self):
        out = enlarged_point_labels([(5, 5)], 11, 11)
        assert int((out == CELL).sum()) == 9
        assert (out[4:7, 4:7] == CELL).all()

    def test_corner_point_clipped_to_four(self):
        out = enlarged_point_labels([(0, 0)], 8, 8)
        assert int((out == CELL).sum()) == 4

    def test_overlapping_squares_union(self):
        # hand union: {cols 0-1} u {cols 1-3} over rows 0-1 -> 8 pixels
        out = enlarged_point_labels([(0, 0), (0, 2)], 8, 8)
        assert int((out == CELL).sum()) == 8
        assert (out[0:2, 0:4] == CELL).all()
        # adjacent points whose squares overlap by a full column -> 6
        out = enlarged_point_labels([(0, 0), (0, 1)], 8, 8)
        assert int((out == CELL).sum()) == 6
        assert (out[0:2, 0:3] == CELL).all()

    def test_no_ignore_pixels(self, rng):
        pts = spaced_points(rng, 16, 16, 4)
        out = enlarged_point_labels(pts, 16, 16)
        assert set(np.unique(out)) <= {BACKGROUND, CELL}

    @given(r=st.integers(0, 15), c=st.integers(0, 15))
    @settings(max_examples=30, deadline=None)
    def test_clipped_square_count(self, r, c):
        out = enlarged_point_labels([(r, c)], 16, 16)
        rows = min(r + 1, 15) - max(r - 1, 0) + 1
        cols = min(c + 1, 15) - max(c - 1, 0) + 1
        assert int((out == CELL).sum()) == rows * cols


class TestPointsIO:
    def test_round_trip(self, tmp_path):
        pts = [(0, 1), (5, 7), (9, 3)]
        write_points_csv(tmp_path / "p.csv", pts)
        assert read_points_csv(tmp_path / "p.csv") == pts

    def test_bad_header(self, tmp_path):
        (tmp_path / "p.csv").write_text("x,y\n1,2\n")
        with pytest.raises(DataError, match="header"):
            read_points_csv(tmp_path / "p.csv")

    def test_duplicates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            enlarged_point_labels([(1, 1), (1, 1)], 4, 4)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(DataError, match="outside"):
            enlarged_point_labels([(9, 1)], 4, 4)
