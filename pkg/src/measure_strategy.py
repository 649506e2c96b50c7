#!/usr/bin/env python3
"""
SimilarityMeasure classes for sdsmatch.

This module provides the Strategy pattern for the similarity measures the
window matcher can run:
- SdsMeasure: scalable diversity similarity over the multi-scale grid
- NsdsMeasure: SDS restricted to the template scale
- DdisMeasure / SddisMeasure: deformable diversity, fixed / multi-scale
- BbsMeasure: best-buddies (mutual NN) similarity
- DisMeasure: plain diversity count
- SsdMeasure / SadMeasure: pixel-difference baselines

A measure is prepared once per (template, target) pair and then scores any
number of windows of that target. Prepared state is read-only, so one
prepared measure can be shipped to every worker of a process pool.
"""

import logging
from abc import ABC, abstractmethod

import numpy as np

from ann_cache import cached_ann_table
from global_constants import APPEARANCE_LOCATION, APPEARANCE_RANK
from nn_search import build_index
from similarity_measures import (
    bbs_score,
    ddis_score,
    dis_score,
    sad_score,
    sds_score,
    ssd_score,
)

logger = logging.getLogger(__name__)


class SimilarityMeasure(ABC):
    """
    Abstract base class for similarity measures.

    Defines the interface and common functionality for all measures.
    Subclasses implement score() for one window of the prepared target.
    """

    # Whether the measure sweeps the full scale grid
    multi_scale = False

    def __init__(self, cfg, cache_dir=None):
        """
        Initialize measure.

        Args:
            cfg: MatchConfig with the measure parameters
            cache_dir: Optional ANN table cache directory
        """
        self.cfg = cfg
        self.cache_dir = cache_dir
        self.template = None
        self.target = None

    def prepare(self, template, target):
        """
        Bind the measure to a template and the full target patch set.

        Args:
            template: template PatchSet (T)
            target: full target PatchSet; scored windows are its subsets
        """
        self.template = template
        self.target = target

    @abstractmethod
    def score(self, window):
        """
        Score one window of the prepared target.

        Args:
            window: PatchSet subset of the target (global_index set)

        Returns:
            float: larger is more similar
        """

    @abstractmethod
    def get_measure_name(self):
        """
        Get the name of this measure.

        Returns:
            str: Measure name
        """

    def score_windows(self, windows):
        """Score a sequence of windows; returns a float array."""
        return np.array([self.score(w) for w in windows], dtype=np.float64)

    def _require_prepared(self):
        if self.template is None or self.target is None:
            raise RuntimeError(
                f"{self.get_measure_name()} measure used before prepare()")


class NearestNeighbourMeasure(SimilarityMeasure):
    """
    Base for measures built on the window -> template NN.

    When the patch distance ignores location, the NN of a window patch does
    not depend on the window, so it is computed once for every target
    patch and looked up per window.
    """

    def __init__(self, cfg, cache_dir=None):
        super().__init__(cfg, cache_dir)
        self._index = None
        self._nn_global = None

    @property
    def location_free(self):
        return self.cfg.resolved_distance_mode != APPEARANCE_LOCATION

    @property
    def index(self):
        """Template NN index, rebuilt lazily after unpickling."""
        if self._index is None:
            self._require_prepared()
            self._index = build_index(self.template, self.cfg)
        return self._index

    def prepare(self, template, target):
        super().prepare(template, target)
        self._index = None
        self._nn_global = None
        if self.location_free:
            mode = self.cfg.resolved_distance_mode
            rows, _ = self.index.nearest(
                target.feature_matrix(mode, self.cfg.lam))
            self._nn_global = rows

    def nn_of_window(self, window):
        """
        NN rows in T of the window patches, or None to search.

        Rows whose window ranks differ from the target's (border patches of
        a window that ranks its own pixels) are searched again.
        """
        if self._nn_global is None or window.global_index is None:
            return None
        nn = self._nn_global[window.global_index]
        if self.cfg.resolved_distance_mode != APPEARANCE_RANK:
            return nn
        changed = np.any(window.rank != self.target.rank[window.global_index],
                         axis=1)
        if np.any(changed):
            nn = nn.copy()
            features = window.feature_matrix(APPEARANCE_RANK, self.cfg.lam)
            nn[changed], _ = self.index.nearest(features[changed])
        return nn

    def __getstate__(self):
        state = self.__dict__.copy()
        state['_index'] = None
        return state


class SdsMeasure(NearestNeighbourMeasure):
    """
    Scalable diversity similarity over the multi-scale window grid.

    Builds the ANN table of the template over the whole target once in
    prepare(); tau counts of every window are then plain lookups.
    """

    multi_scale = True

    def __init__(self, cfg, cache_dir=None):
        super().__init__(cfg, cache_dir)
        self.table = None

    def prepare(self, template, target):
        super().prepare(template, target)
        self.table = cached_ann_table(template, target, self.cfg,
                                      self.cache_dir)
        logger.debug("%s prepared: n=%d M=%d k=%d",
                     self.get_measure_name(), template.n, target.n,
                     self.table.k)

    def score(self, window):
        self._require_prepared()
        nn = self.nn_of_window(window)
        if nn is None:
            return sds_score(self.template, window, self.table, self.cfg,
                             index=self.index)
        return sds_score(self.template, window, self.table, self.cfg,
                         nn_of_q=nn)

    def get_measure_name(self):
        return "sds"


class NsdsMeasure(SdsMeasure):
    """SDS evaluated at the template scale only."""

    multi_scale = False

    def get_measure_name(self):
        return "nsds"


class DisMeasure(NearestNeighbourMeasure):
    """Diversity count of template NN attractors."""

    def score(self, window):
        self._require_prepared()
        nn = self.nn_of_window(window)
        if nn is None:
            return dis_score(self.template, window, self.cfg,
                             index=self.index)
        return dis_score(self.template, window, self.cfg, nn_of_q=nn)

    def get_measure_name(self):
        return "dis"


class DdisMeasure(NearestNeighbourMeasure):
    """Deformable diversity similarity at the template scale."""

    def score(self, window):
        self._require_prepared()
        nn = self.nn_of_window(window)
        if nn is None:
            return ddis_score(self.template, window, self.cfg,
                              index=self.index)
        return ddis_score(self.template, window, self.cfg, nn_of_q=nn)

    def get_measure_name(self):
        return "ddis"


class SddisMeasure(DdisMeasure):
    """Deformable diversity similarity over the multi-scale grid."""

    multi_scale = True

    def get_measure_name(self):
        return "sddis"


class BbsMeasure(SimilarityMeasure):
    """Best-buddies similarity: mutual NN pairs over min(n, m)."""

    def score(self, window):
        self._require_prepared()
        return bbs_score(self.template, window, self.cfg)

    def get_measure_name(self):
        return "bbs"


class SsdMeasure(SimilarityMeasure):
    """Negated sum of squared differences at the template scale."""

    def score(self, window):
        self._require_prepared()
        return ssd_score(self.template, window)

    def get_measure_name(self):
        return "ssd"


class SadMeasure(SimilarityMeasure):
    """Negated sum of absolute differences at the template scale."""

    def score(self, window):
        self._require_prepared()
        return sad_score(self.template, window)

    def get_measure_name(self):
        return "sad"
