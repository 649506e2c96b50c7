#!/usr/bin/env python3
"""
Factory for creating SimilarityMeasure instances.

Implements the Factory pattern to encapsulate measure creation logic.
"""

from image_core import ConfigError
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


class MeasureStrategyFactory:
    """
    Factory for creating similarity measure instances.

    Encapsulates the logic for selecting and instantiating
    the appropriate measure based on its name.
    """

    # Measure registry - maps measure names to measure classes
    _measures = {
        'sds': SdsMeasure,
        'nsds': NsdsMeasure,
        'ddis': DdisMeasure,
        'sddis': SddisMeasure,
        'bbs': BbsMeasure,
        'dis': DisMeasure,
        'ssd': SsdMeasure,
        'sad': SadMeasure,
    }

    @classmethod
    def create_measure(cls, name, cfg, cache_dir=None):
        """
        Create appropriate SimilarityMeasure instance.

        Args:
            name: Measure name
            cfg: MatchConfig passed to the measure
            cache_dir: Optional ANN table cache directory

        Returns:
            SimilarityMeasure instance

        Raises:
            ConfigError: If name is not recognized
        """
        name = str(name).lower()
        if name not in cls._measures:
            available = list(cls._measures.keys())
            raise ConfigError(f"Unknown measure: {name}. "
                              f"Available: {available}")

        measure_class = cls._measures[name]
        return measure_class(cfg, cache_dir)

    @classmethod
    def create_for_config(cls, cfg, cache_dir=None):
        """Create the measure named by cfg.measure."""
        return cls.create_measure(cfg.measure, cfg, cache_dir)

    @classmethod
    def get_available_measures(cls):
        """
        Return list of available measure names.

        Returns:
            list: Available measure names
        """
        return list(cls._measures.keys())

    @classmethod
    def register_measure(cls, name, measure_class):
        """
        Register a new measure (for extensibility).

        Args:
            name: Measure name
            measure_class: Measure class to register
        """
        cls._measures[name] = measure_class
