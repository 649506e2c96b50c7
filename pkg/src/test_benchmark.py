#!/usr/bin/env python3
"""
Unit tests for benchmark module.
"""

import csv
import os
import shutil
import tempfile
import unittest

import numpy as np

from benchmark import (
    ALL_SUBSET,
    BenchPair,
    SuccessCurve,
    config_labels,
    format_tag,
    ngt_curve,
    ngt_window,
    overlap_rate,
    parse_tag,
    read_annotations,
    run_benchmark,
    success_curve,
    write_annotations,
)
from global_constants import (
    AUC_FILE_NAME,
    CURVES_FILE_NAME,
    PER_PAIR_FILE_NAME,
    TEST_SEED,
    TEST_TEMPLATE_BOX,
    TEST_TEXTURE_SIZE,
)
from image_core import (
    BenchmarkError,
    Image,
    MatchConfig,
    ParameterError,
    ScaleGrid,
    Window,
)
from image_io import save_image
from synthetic_pairs import synthetic_suite


class TestOverlapAndCurves(unittest.TestCase):
    """Test overlap_rate, success_curve and the NGT baseline."""

    def test_overlap_rate(self):
        """Test identical, disjoint and shifted windows."""
        a = Window(0, 0, 2, 2)
        self.assertEqual(overlap_rate(a, a), 1.0)
        self.assertEqual(overlap_rate(a, Window(5, 5, 2, 2)), 0.0)
        self.assertAlmostEqual(overlap_rate(a, Window(1, 0, 2, 2)), 1 / 3.0)

    def test_success_curve_example(self):
        """Test four overlaps against three thresholds."""
        curve = success_curve([0.2, 0.4, 0.6, 0.8], (0.25, 0.5, 0.75))
        self.assertEqual(curve.success_rate, (0.75, 0.5, 0.25))
        self.assertAlmostEqual(curve.auc, 0.5)

    def test_flat_curves(self):
        """Test all-one and all-zero overlaps."""
        thresholds = (0.1, 0.5, 0.9)
        self.assertEqual(success_curve([1.0, 1.0], thresholds).auc, 1.0)
        self.assertEqual(success_curve([0.0, 0.0], thresholds).auc, 0.0)

    def test_curve_validation(self):
        """Test malformed curves are rejected."""
        with self.assertRaises(ParameterError):
            SuccessCurve((0.5, 0.2), (1.0, 0.5), 0.75)
        with self.assertRaises(ParameterError):
            SuccessCurve((0.2, 0.5), (0.5, 1.0), 0.75)
        with self.assertRaises(ParameterError):
            SuccessCurve((0.2,), (0.5, 1.0), 0.75)
        with self.assertRaises(ParameterError):
            success_curve([], (0.5,))

    def test_ngt_window(self):
        """Test template-sized boxes at the ground-truth centre."""
        template = Window(0, 0, 8, 8)
        self.assertEqual(ngt_window(template, Window(4, 4, 16, 16)),
                         Window(8, 8, 8, 8))
        same = BenchPair("p", "r", template, "t", Window(3, 5, 8, 8))
        wide = BenchPair("q", "r", template, "t", Window(4, 4, 16, 16))
        curve = ngt_curve([same, wide], (0.2, 0.5))
        self.assertEqual(curve.success_rate, (1.0, 0.5))


class TestAnnotations(unittest.TestCase):
    """Test tags and annotation files."""

    def setUp(self):
        """Create a scratch directory."""
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_tags(self):
        """Test tag parsing and formatting."""
        tags = parse_tag("rotation;theta=30;sx=1.0")
        self.assertEqual(tags, {"category": "rotation", "theta": "30",
                                "sx": "1.0"})
        self.assertEqual(format_tag(tags), "rotation;theta=30;sx=1.0")
        self.assertEqual(parse_tag(""), {"category": ALL_SUBSET})
        self.assertEqual(parse_tag("k=v")["category"], ALL_SUBSET)

    def test_write_then_read(self):
        """Test annotation files keep boxes, tags and absolute paths."""
        pair = BenchPair("p1", os.path.join(self.tmpdir, "img", "ref.png"),
                         Window(1, 2, 3, 4),
                         os.path.join(self.tmpdir, "img", "tgt.png"),
                         Window(5, 6, 7, 8), {"category": "scaling"})
        path = os.path.join(self.tmpdir, "pairs.csv")
        write_annotations(path, [pair])
        with open(path, newline='') as f:
            row = next(csv.DictReader(f))
        self.assertEqual(row["ref_path"], os.path.join("img", "ref.png"))
        self.assertEqual(read_annotations(path), [pair])

    def test_missing_columns(self):
        """Test files without the annotation columns are rejected."""
        path = os.path.join(self.tmpdir, "bad.csv")
        with open(path, 'w') as f:
            f.write("ref_path,tx\nref.png,0\n")
        with self.assertRaises(ParameterError) as ctx:
            read_annotations(path)
        self.assertIn("target_path", str(ctx.exception))

    def test_config_labels(self):
        """Test repeated measures get numbered labels."""
        cfgs = [MatchConfig(), MatchConfig(measure="bbs"), MatchConfig()]
        self.assertEqual(config_labels(cfgs), ["sds", "bbs", "sds#2"])


class TestRunBenchmark(unittest.TestCase):
    """Test run_benchmark on exact-copy pairs."""

    def setUp(self):
        """Write a reference image and build self-match pairs."""
        self.tmpdir = tempfile.mkdtemp()
        rng = np.random.default_rng(TEST_SEED)
        data = np.round(rng.random((TEST_TEXTURE_SIZE, TEST_TEXTURE_SIZE,
                                    3)) * 255) / 255
        self.ref_path = os.path.join(self.tmpdir, "ref.png")
        save_image(self.ref_path, Image(data))
        box = Window(*TEST_TEMPLATE_BOX)
        self.pairs = [
            BenchPair(f"p{i}", self.ref_path, box, self.ref_path, box,
                      {"category": "identity" if i % 2 else "rotation"})
            for i in range(5)]
        self.cfgs = [MatchConfig(measure="ssd"), MatchConfig(measure="sad")]
        self.grid = ScaleGrid.fixed(2)

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def _with_missing(self, count):
        missing = os.path.join(self.tmpdir, "absent.png")
        return [BenchPair(p.pair_id, missing, p.template_box, missing,
                          p.gt_box, p.tags) if i < count else p
                for i, p in enumerate(self.pairs)]

    def test_exact_copies_succeed(self):
        """Test exact copies reach overlap 1 for every config."""
        report = run_benchmark(self.pairs, self.cfgs, (0.5, 0.9),
                               grid=self.grid)
        self.assertEqual(report.labels, ["ssd", "sad"])
        for label in report.labels:
            self.assertEqual(report.curves[label].auc, 1.0)
        self.assertIn(("ssd", "identity"), report.subset_curves)
        self.assertEqual(report.ngt[ALL_SUBSET].auc, 1.0)
        self.assertEqual(len(report.rows), 10)

    def test_report_files(self):
        """Test curves, AUC and per-pair files are written."""
        report = run_benchmark(self.pairs[:2], self.cfgs, (0.5, 0.9),
                               grid=self.grid)
        out_dir = os.path.join(self.tmpdir, "out")
        report.write(out_dir)
        with open(os.path.join(out_dir, CURVES_FILE_NAME), newline='') as f:
            rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["threshold", "ssd", "sad"])
        self.assertEqual(len(rows), 3)
        with open(os.path.join(out_dir, AUC_FILE_NAME), newline='') as f:
            auc_rows = list(csv.DictReader(f))
        self.assertIn({"label": "ngt", "subset": ALL_SUBSET, "auc": "1.0"},
                      auc_rows)
        self.assertTrue(os.path.exists(os.path.join(out_dir,
                                                    PER_PAIR_FILE_NAME)))

    def test_score_maps_dumped(self):
        """Test one score map per pair and config."""
        map_dir = os.path.join(self.tmpdir, "maps")
        run_benchmark(self.pairs[:1], self.cfgs, (0.5,), grid=self.grid,
                      map_dir=map_dir)
        self.assertEqual(sorted(os.listdir(map_dir)),
                         ["p0_sad.pgm", "p0_ssd.pgm"])

    def test_unreadable_pair_is_skipped(self):
        """Test one unreadable pair of five is skipped with a warning."""
        with self.assertLogs("benchmark", level="WARNING"):
            report = run_benchmark(self._with_missing(1), self.cfgs, (0.5,),
                                   grid=self.grid)
        self.assertEqual(report.skipped, ["p0"])
        self.assertEqual(len(report.rows), 8)

    def test_too_many_skipped(self):
        """Test more than a fifth of unreadable pairs fails the run."""
        with self.assertRaises(BenchmarkError):
            run_benchmark(self._with_missing(2), self.cfgs, (0.5,),
                          grid=self.grid)

    def test_empty_inputs(self):
        """Test empty pair or config lists are rejected."""
        with self.assertRaises(ParameterError):
            run_benchmark([], self.cfgs)
        with self.assertRaises(ParameterError):
            run_benchmark(self.pairs, [])


if __name__ == '__main__':
    unittest.main()


class TestSyntheticSuiteBenchmark(unittest.TestCase):
    """Test the matchers on slices of the generated synthetic suite."""

    @classmethod
    def setUpClass(cls):
        """Generate the full suite once."""
        cls.tmpdir = tempfile.mkdtemp()
        cls.pairs = synthetic_suite(cls.tmpdir, seed=0)

    @classmethod
    def tearDownClass(cls):
        """Remove the suite."""
        shutil.rmtree(cls.tmpdir, ignore_errors=True)

    def _slice(self, scales):
        return [p for p in self.pairs
                if p.tags["theta"] == "0" and p.tags["occlusion"] == "0"
                and p.tags["sx"] in scales]

    def test_identity_pairs_are_found(self):
        """Test every unrotated, unscaled, unoccluded copy is recovered."""
        pairs = self._slice(("1",))
        self.assertEqual(len(pairs), 9)
        grid = ScaleGrid.from_range(0.8, 1.2, 0.2, stride=2)
        self.assertIn((1.2, 0.8), grid.scale_pairs())
        report = run_benchmark(pairs, [MatchConfig(measure="sds")],
                               grid=grid)
        for row in report.rows:
            with self.subTest(pair=row["pair_id"]):
                self.assertGreaterEqual(row["overlap"], 0.99)
                self.assertEqual((row["sx"], row["sy"]), (1.0, 1.0))

    def test_sds_wins_on_enlarged_objects(self):
        """Test multi-scale SDS beats fixed-scale measures and NGT."""
        pairs = self._slice(("1.5", "1.9"))
        self.assertEqual(len(pairs), 18)
        grid = ScaleGrid.from_range(0.5, 2.0, 0.25, stride=2,
                                    tied_axes=True)
        cfgs = [MatchConfig(measure=name) for name in ("sds", "nsds", "bbs")]
        report = run_benchmark(pairs, cfgs, grid=grid)
        sds = report.curves["sds"].auc
        self.assertGreater(sds, report.curves["nsds"].auc)
        self.assertGreater(sds, report.curves["bbs"].auc)
        self.assertGreater(sds, report.ngt[ALL_SUBSET].auc)
