#!/usr/bin/env python3
"""Unit tests for MeasureStrategyFactory."""

import unittest

from image_core import ConfigError, MatchConfig
from measure_strategy import (
    BbsMeasure,
    DdisMeasure,
    DisMeasure,
    NsdsMeasure,
    SadMeasure,
    SddisMeasure,
    SdsMeasure,
    SsdMeasure,
)
from measure_strategy_factory import MeasureStrategyFactory


class TestMeasureStrategyFactory(unittest.TestCase):
    """Test MeasureStrategyFactory."""

    def test_factory_creates_each_measure(self):
        """Test every registered name maps to its class."""
        expected = {
            'sds': SdsMeasure,
            'nsds': NsdsMeasure,
            'ddis': DdisMeasure,
            'sddis': SddisMeasure,
            'bbs': BbsMeasure,
            'dis': DisMeasure,
            'ssd': SsdMeasure,
            'sad': SadMeasure,
        }
        for name, measure_class in expected.items():
            with self.subTest(name=name):
                measure = MeasureStrategyFactory.create_measure(
                    name, MatchConfig())
                self.assertIsInstance(measure, measure_class)
                self.assertEqual(measure.get_measure_name(), name)

    def test_factory_is_case_insensitive(self):
        """Test names are matched case-insensitively."""
        measure = MeasureStrategyFactory.create_measure('BBS', MatchConfig())
        self.assertIsInstance(measure, BbsMeasure)

    def test_factory_create_for_config(self):
        """Test the measure named by the config is created."""
        cfg = MatchConfig(measure='ddis')
        measure = MeasureStrategyFactory.create_for_config(cfg, '/tmp/c')
        self.assertIsInstance(measure, DdisMeasure)
        self.assertIs(measure.cfg, cfg)
        self.assertEqual(measure.cache_dir, '/tmp/c')

    def test_factory_raises_on_unknown_measure(self):
        """Test factory raises ConfigError on unknown measure."""
        with self.assertRaises(ConfigError) as ctx:
            MeasureStrategyFactory.create_measure('ncc', MatchConfig())
        self.assertIn('Unknown measure', str(ctx.exception))
        self.assertIn('ncc', str(ctx.exception))

    def test_factory_get_available_measures(self):
        """Test factory returns available measures."""
        measures = MeasureStrategyFactory.get_available_measures()
        self.assertIn('sds', measures)
        self.assertIn('bbs', measures)
        self.assertEqual(len(measures), 8)

    def test_factory_register_new_measure(self):
        """Test factory can register new measures."""
        class CustomMeasure(SsdMeasure):
            def get_measure_name(self):
                return 'custom'

        MeasureStrategyFactory.register_measure('custom', CustomMeasure)
        measure = MeasureStrategyFactory.create_measure(
            'custom', MatchConfig())
        self.assertIsInstance(measure, CustomMeasure)

        # Clean up
        del MeasureStrategyFactory._measures['custom']


if __name__ == '__main__':
    unittest.main()
