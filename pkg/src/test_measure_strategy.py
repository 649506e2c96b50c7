#!/usr/bin/env python3
"""
Unit tests for measure_strategy - Strategy pattern for similarity measures.
"""

import pickle
import unittest
from unittest.mock import patch

import numpy as np

from global_constants import APPEARANCE_LOCATION, APPEARANCE_RANK, TEST_SEED
from image_core import Image, MatchConfig
from measure_strategy import (
    BbsMeasure,
    DdisMeasure,
    NsdsMeasure,
    SddisMeasure,
    SdsMeasure,
    SimilarityMeasure,
    SsdMeasure,
)
from nn_search import build_ann_table, build_index
from patch_features import patchify
from similarity_measures import bbs_score, ddis_score, sds_score, ssd_score


class MeasureTestCase(unittest.TestCase):
    """Shared template and target patch sets."""

    def setUp(self):
        """Create a random template and target."""
        rng = np.random.default_rng(TEST_SEED)
        self.template = patchify(Image(rng.random((8, 8))), 2, 2)
        self.target = patchify(Image(rng.random((16, 16))), 2, 2)
        self.windows = [self.target.window(0, 0, 4, 4),
                        self.target.window(2, 3, 5, 4),
                        self.target.window(4, 1, 3, 6)]


class TestSimilarityMeasureBase(MeasureTestCase):
    """Test SimilarityMeasure abstract base class."""

    def test_cannot_instantiate_abstract_class(self):
        """Test that abstract base class cannot be instantiated."""
        with self.assertRaises(TypeError):
            SimilarityMeasure(MatchConfig())

    def test_score_before_prepare(self):
        """Test scoring an unprepared measure raises RuntimeError."""
        for measure in (SdsMeasure(MatchConfig()),
                        BbsMeasure(MatchConfig(measure='bbs'))):
            with self.subTest(measure=measure.get_measure_name()):
                with self.assertRaises(RuntimeError):
                    measure.score(self.windows[0])

    def test_multi_scale_flags(self):
        """Test only SDS and SDDIS sweep scales."""
        cfg = MatchConfig()
        self.assertTrue(SdsMeasure(cfg).multi_scale)
        self.assertTrue(SddisMeasure(cfg).multi_scale)
        self.assertFalse(NsdsMeasure(cfg).multi_scale)
        self.assertFalse(DdisMeasure(cfg).multi_scale)
        self.assertFalse(BbsMeasure(cfg).multi_scale)

    def test_score_windows(self):
        """Test score_windows scores each window in order."""
        measure = SsdMeasure(MatchConfig(measure='ssd'))
        measure.prepare(self.template, self.target)
        scores = measure.score_windows([self.windows[0]])
        self.assertEqual(scores.shape, (1,))
        self.assertAlmostEqual(scores[0],
                               ssd_score(self.template, self.windows[0]))


class TestSdsMeasure(MeasureTestCase):
    """Test SdsMeasure."""

    def test_matches_score_function(self):
        """Test the prepared measure equals sds_score."""
        cfg = MatchConfig(ann_k=3)
        measure = SdsMeasure(cfg)
        measure.prepare(self.template, self.target)
        table = build_ann_table(self.template, self.target, cfg)
        for i, window in enumerate(self.windows):
            with self.subTest(window=i):
                self.assertAlmostEqual(
                    measure.score(window),
                    sds_score(self.template, window, table, cfg))

    def test_global_nn_lookup(self):
        """Test location-free modes precompute target NNs."""
        measure = SdsMeasure(MatchConfig())
        measure.prepare(self.template, self.target)
        self.assertTrue(measure.location_free)
        self.assertEqual(len(measure.nn_of_window(self.windows[1])),
                         self.windows[1].n)

    def test_window_ranked_target_searches_changed_rows(self):
        """Test windows ranking their own pixels get their own NNs."""
        rng = np.random.default_rng(TEST_SEED + 1)
        target = patchify(Image(rng.random((16, 16))), 2, 2,
                          window_ranks=True)
        cfg = MatchConfig()
        measure = SdsMeasure(cfg)
        measure.prepare(self.template, target)
        index = build_index(self.template, cfg)
        for gx, gy, gw, gh in ((0, 0, 4, 4), (2, 3, 5, 4), (0, 0, 8, 8)):
            window = target.window(gx, gy, gw, gh)
            expected, _ = index.nearest(
                window.feature_matrix(APPEARANCE_RANK, cfg.lam))
            with self.subTest(window=(gx, gy, gw, gh)):
                np.testing.assert_array_equal(measure.nn_of_window(window),
                                              expected)

    def test_location_mode_searches_per_window(self):
        """Test location-dependent modes skip the precomputation."""
        cfg = MatchConfig(distance_mode=APPEARANCE_LOCATION)
        measure = SdsMeasure(cfg)
        measure.prepare(self.template, self.target)
        self.assertFalse(measure.location_free)
        self.assertIsNone(measure.nn_of_window(self.windows[0]))
        table = build_ann_table(self.template, self.target, cfg)
        self.assertAlmostEqual(
            measure.score(self.windows[1]),
            sds_score(self.template, self.windows[1], table, cfg))

    def test_prepare_uses_cache_dir(self):
        """Test the ANN table comes from the cache helper."""
        cfg = MatchConfig()
        table = build_ann_table(self.template, self.target, cfg)
        with patch('measure_strategy.cached_ann_table',
                   return_value=table) as mock_cached:
            measure = SdsMeasure(cfg, cache_dir='/tmp/sds-cache')
            measure.prepare(self.template, self.target)
        mock_cached.assert_called_once_with(self.template, self.target, cfg,
                                            '/tmp/sds-cache')
        self.assertIs(measure.table, table)

    def test_pickled_measure_scores_the_same(self):
        """Test a pickled prepared measure rebuilds its index lazily."""
        measure = SdsMeasure(MatchConfig(distance_mode=APPEARANCE_LOCATION))
        measure.prepare(self.template, self.target)
        expected = measure.score(self.windows[2])
        clone = pickle.loads(pickle.dumps(measure))
        self.assertIsNone(clone._index)
        self.assertAlmostEqual(clone.score(self.windows[2]), expected)


class TestBaselineMeasures(MeasureTestCase):
    """Test DDIS and BBS measures against their score functions."""

    def test_ddis(self):
        """Test DdisMeasure equals ddis_score."""
        cfg = MatchConfig(measure='ddis')
        measure = DdisMeasure(cfg)
        measure.prepare(self.template, self.target)
        for window in self.windows:
            self.assertAlmostEqual(measure.score(window),
                                   ddis_score(self.template, window, cfg))

    def test_bbs(self):
        """Test BbsMeasure equals bbs_score."""
        cfg = MatchConfig(measure='bbs')
        measure = BbsMeasure(cfg)
        measure.prepare(self.template, self.target)
        for window in self.windows:
            self.assertAlmostEqual(measure.score(window),
                                   bbs_score(self.template, window, cfg))


if __name__ == '__main__':
    unittest.main()
