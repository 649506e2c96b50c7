#!/usr/bin/env python3
"""
Unit tests for window_matcher module.
"""

import csv
import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from global_constants import (
    APPEARANCE_ONLY,
    TEST_SEED,
    TEST_TEMPLATE_BOX,
    TEST_TEXTURE_SIZE,
)
from image_core import (
    AlignmentError,
    EmptyResultError,
    Image,
    MatchConfig,
    ScaleGrid,
    SizeError,
    Window,
    crop,
)
from nn_search import build_ann_table
from patch_features import patchify
from similarity_measures import sds_score
from window_matcher import (
    candidate_sizes,
    export_result,
    generate_candidates,
    match,
    round_to_patch,
    write_score_map_csv,
)


def naive_ssd_match(template, target, stride):
    """Exhaustive SSD search, first maximum in row-major order."""
    t = template.data
    h, w = t.shape[:2]
    best, best_score = None, -np.inf
    for y in range(0, target.height - h + 1, stride):
        for x in range(0, target.width - w + 1, stride):
            q = target.data[y:y + h, x:x + w]
            score = -float(np.sum((t - q) ** 2))
            if score > best_score:
                best, best_score = Window(x, y, w, h), score
    return best, best_score


class TestCandidates(unittest.TestCase):
    """Test candidate window generation."""

    def test_round_to_patch(self):
        """Test rounding to the patch grid with a floor of one patch."""
        self.assertEqual(round_to_patch(7.0, 2), 8)
        self.assertEqual(round_to_patch(6.9, 2), 6)
        self.assertEqual(round_to_patch(0.4, 2), 2)

    def test_single_scale_count(self):
        """Test the window count of a single-scale sweep."""
        for stride in (2, 4, 10):
            grid = ScaleGrid.fixed(stride)
            with self.subTest(stride=stride):
                count = sum(1 for _ in generate_candidates(10, 10, 4, 4,
                                                           grid, 2))
                per_axis = (10 - 4) // stride + 1
                self.assertEqual(count, per_axis * per_axis)

    def test_scan_order(self):
        """Test rows are scanned before columns within a scale."""
        cands = list(generate_candidates(8, 6, 4, 4, ScaleGrid.fixed(2), 2))
        self.assertEqual([c.window.as_tuple()[:2] for c in cands],
                         [(0, 0), (2, 0), (4, 0), (0, 2), (2, 2), (4, 2)])
        self.assertTrue(all((c.sx, c.sy) == (1.0, 1.0) for c in cands))

    def test_default_grid_count(self):
        """Test the count over the default grid on a 100x100 target."""
        grid = ScaleGrid.from_range(stride=2)
        count = sum(1 for _ in generate_candidates(100, 100, 20, 20,
                                                   grid, 2))
        per_axis = sum((100 - w) // 2 + 1 for w in range(10, 41, 2))
        self.assertEqual(count, per_axis * per_axis)

    def test_duplicate_sizes_are_merged(self):
        """Test scale pairs rounding to the same size are listed once."""
        grid = ScaleGrid.from_range(1.0, 1.2, 0.1, stride=2)
        sizes = candidate_sizes(4, 4, grid, 2)
        self.assertEqual(len({(s.w, s.h) for s in sizes}), len(sizes))
        self.assertEqual((sizes[0].sx, sizes[0].sy), (1.0, 1.0))

    def test_closest_scale_keeps_size(self):
        """Test a merged size keeps the pair closest to its extent."""
        grid = ScaleGrid.from_range(0.8, 1.2, 0.1, stride=2, tied_axes=True)
        sizes = candidate_sizes(8, 8, grid, 2)
        self.assertEqual([(s.w, s.sx) for s in sizes],
                         [(6, 0.8), (8, 1.0), (10, 1.2)])
        tied = ScaleGrid((0.875, 1.125), (0.875, 1.125), 4, tied_axes=True)
        self.assertEqual([(s.w, s.sx) for s in candidate_sizes(8, 8, tied,
                                                                4)],
                         [(8, 0.875)])

    def test_errors(self):
        """Test empty, misaligned and undersized inputs."""
        with self.assertRaises(EmptyResultError):
            generate_candidates(8, 8, 20, 20, ScaleGrid.fixed(2), 2)
        with self.assertRaises(AlignmentError):
            generate_candidates(8, 8, 4, 4, ScaleGrid.fixed(3), 2)
        with self.assertRaises(SizeError):
            generate_candidates(8, 8, 1, 4, ScaleGrid.fixed(2), 2)


class TestMatch(unittest.TestCase):
    """Test match."""

    def setUp(self):
        """Create a random texture and a template cut from it."""
        rng = np.random.default_rng(TEST_SEED)
        self.reference = Image(rng.random(
            (TEST_TEXTURE_SIZE, TEST_TEXTURE_SIZE, 3)))
        self.box = Window(*TEST_TEMPLATE_BOX)
        self.template = crop(self.reference, self.box)
        self.cfg = MatchConfig(distance_mode=APPEARANCE_ONLY)

    def test_self_match(self):
        """Test the template is found at its own location and scale."""
        result = match(self.template, self.reference, self.cfg)
        self.assertEqual(result.best, self.box)
        self.assertEqual(result.best_scale, (1.0, 1.0))
        self.assertEqual(result.measure, "sds")
        self.assertEqual(result.score_map.shape, (12, 12))
        self.assertTrue(np.isnan(result.score_map[11, 11]))

    def test_self_match_score(self):
        """Test the self-match score equals n**3 / guard."""
        result = match(self.template, self.reference, self.cfg,
                       grid=ScaleGrid.fixed(2))
        self.assertAlmostEqual(result.best_score, 16 ** 3)

    def test_scale_maps_match_direct_scores(self):
        """Test per-scale map entries equal direct SDS evaluation."""
        grid = ScaleGrid.from_range(0.5, 1.5, 0.5, stride=2)
        result = match(self.template, self.reference, self.cfg, grid=grid,
                       keep_scale_maps=True)
        T = patchify(self.template, 2, self.cfg.rank_radius)
        G = patchify(self.reference, 2, self.cfg.rank_radius)
        table = build_ann_table(T, G, self.cfg)
        layer = result.per_scale_maps[(1.5, 0.5)]
        for gy, gx in ((0, 0), (3, 2), (10, 6)):
            with self.subTest(cell=(gy, gx)):
                window = G.window(gx, gy, 6, 2)
                self.assertAlmostEqual(layer[gy, gx],
                                       sds_score(T, window, table, self.cfg))
        np.testing.assert_array_equal(
            result.score_map,
            np.fmax.reduce(np.stack(list(result.per_scale_maps.values()))))

    def test_jobs_do_not_change_result(self):
        """Test one and two workers give identical results."""
        grid = ScaleGrid.from_range(0.8, 1.2, 0.2, stride=2)
        serial = match(self.template, self.reference, self.cfg, grid=grid)
        parallel = match(self.template, self.reference, self.cfg, grid=grid,
                         jobs=2)
        self.assertEqual(serial.best, parallel.best)
        self.assertEqual(serial.candidates, parallel.candidates)
        np.testing.assert_array_equal(serial.score_map, parallel.score_map)

    def test_ssd_matches_naive_search(self):
        """Test SSD matching equals an exhaustive naive search."""
        rng = np.random.default_rng(TEST_SEED + 1)
        target = Image(rng.random((8, 8)))
        template = Image(rng.random((4, 4)))
        result = match(template, target, MatchConfig(measure="ssd"))
        best, best_score = naive_ssd_match(template, target, 2)
        self.assertEqual(result.best, best)
        self.assertAlmostEqual(result.best_score, best_score)
        self.assertEqual(result.candidates, 9)

    def test_fixed_scale_measure_ignores_grid(self):
        """Test NSDS only scores template-sized windows."""
        result = match(self.template, self.reference,
                       self.cfg.replace(measure="nsds"))
        self.assertEqual(result.best_scale, (1.0, 1.0))
        self.assertEqual(result.candidates, 9 * 9)
        self.assertEqual(result.best, self.box)

    def test_template_too_large(self):
        """Test a template wider than the target at every scale."""
        big = Image(np.zeros((4, 60)))
        with self.assertRaises(EmptyResultError):
            match(big, self.reference, self.cfg)


class TestExport(unittest.TestCase):
    """Test result export helpers."""

    def setUp(self):
        """Create a scratch directory."""
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_csv_keeps_nan_and_precision(self):
        """Test the CSV keeps exact values and marks empty cells."""
        path = os.path.join(self.tmpdir, "map.csv")
        write_score_map_csv(path, np.array([[0.1, np.nan]]))
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows, [["0.1", "nan"]])

    def test_export_result(self):
        """Test record, CSV and PGM are written."""
        rng = np.random.default_rng(TEST_SEED)
        target = Image(rng.random((8, 8)))
        template = crop(target, Window(2, 2, 4, 4))
        cfg = MatchConfig(measure="ssd")
        grid = ScaleGrid.fixed(2)
        result = match(template, target, cfg, grid=grid)
        export_result(self.tmpdir, result, cfg, grid, "match.json",
                      "map.csv", "map.pgm")
        for name in ("match.json", "map.csv", "map.pgm"):
            self.assertTrue(os.path.exists(os.path.join(self.tmpdir, name)))
        with open(os.path.join(self.tmpdir, "match.json")) as f:
            record = json.load(f)
        self.assertEqual(record["version"], 1)
        self.assertEqual(record["best_window"], [2, 2, 4, 4])
        self.assertEqual(record["config"]["measure"], "ssd")
        self.assertEqual(record["grid"]["spatial_stride"], 2)


if __name__ == '__main__':
    unittest.main()
