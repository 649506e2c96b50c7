#!/usr/bin/env python3
"""
Multi-scale sliding-window matcher for sdsmatch.

Generates candidate windows over the scale grid, aligned to the target
patch grid, scores each with the configured measure and keeps the best
window together with a per-cell likelihood map (max over scales).
With the rank distance, every window ranks its own pixels, so an exact
copy of the template gets the template's rank features.

Work is partitioned by window size: every (sx, sy) pair that survives
rounding becomes one task. Tasks run in-process with jobs == 1 or on a
ProcessPoolExecutor otherwise; results are merged in scan order, so the
outcome never depends on the worker count.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import chain
from typing import Dict, Optional, Tuple

import numpy as np

from cache_file_version import CacheFileVersion
from global_constants import APPEARANCE_RANK
from image_core import (
    AlignmentError,
    EmptyResultError,
    ScaleGrid,
    SizeError,
    Window,
)
from image_io import save_map_pgm
from measure_strategy_factory import MeasureStrategyFactory
from patch_features import patchify

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    """One candidate window and the scale pair that produced it."""

    window: Window
    sx: float
    sy: float


@dataclass(frozen=True)
class WindowSize:
    """Rounded window extent in pixels for one scale pair."""

    w: int
    h: int
    sx: float
    sy: float


def round_to_patch(value, p):
    """Round a pixel extent to the nearest multiple of p (at least p)."""
    return max(p, int(p * math.floor(value / p + 0.5)))


def candidate_sizes(template_w, template_h, grid, p):
    """
    Rounded window sizes of the grid in scan order.

    Scale pairs that round to the same size share one entry, placed where
    the size first appears. The entry keeps the pair whose nominal extent
    (sx * template_w, sy * template_h) lies closest to the rounded size;
    ties go to the earlier pair.
    """
    best = {}
    for sx, sy in grid.scale_pairs():
        w = round_to_patch(sx * template_w, p)
        h = round_to_patch(sy * template_h, p)
        error = abs(sx * template_w - w) + abs(sy * template_h - h)
        if (w, h) not in best or error < best[(w, h)][0]:
            best[(w, h)] = (error, WindowSize(w, h, sx, sy))
    return [size for _, size in best.values()]


def _fitting_sizes(target_w, target_h, template_w, template_h, grid, p):
    if template_w < p or template_h < p:
        raise SizeError(
            f"Template {template_w}x{template_h} smaller than one {p}px patch")
    if grid.spatial_stride % p:
        raise AlignmentError(
            f"Stride {grid.spatial_stride} is not a multiple of the "
            f"{p}px patch size")
    sizes = [size for size in
             candidate_sizes(template_w, template_h, grid, p)
             if size.w <= target_w and size.h <= target_h]
    if not sizes:
        raise EmptyResultError(
            f"No candidate window of a {template_w}x{template_h} template "
            f"fits the {target_w}x{target_h} target")
    return sizes


def _anchors(extent, size, stride):
    return range(0, extent - size + 1, stride)


def _size_candidates(size, target_w, target_h, stride):
    for y in _anchors(target_h, size.h, stride):
        for x in _anchors(target_w, size.w, stride):
            yield Candidate(Window(x, y, size.w, size.h), size.sx, size.sy)


def generate_candidates(target_w, target_h, template_w, template_h, grid, p):
    """
    Candidate windows in scan order: scale pairs, then rows, then columns.

    Args:
        target_w, target_h: target extent in pixels (patch grid extent)
        template_w, template_h: template extent in pixels
        grid: ScaleGrid with the scale pairs and the spatial stride
        p: patch size

    Returns:
        iterator of Candidate

    Raises:
        SizeError: if the template is smaller than one patch
        AlignmentError: if the stride is not a multiple of p
        EmptyResultError: if no window fits the target
    """
    sizes = _fitting_sizes(target_w, target_h, template_w, template_h,
                           grid, p)
    return chain.from_iterable(
        _size_candidates(size, target_w, target_h, grid.spatial_stride)
        for size in sizes)


def score_size(measure, size, stride):
    """
    Score every window of one size.

    Returns:
        np.ndarray: (rows, cols) scores over the anchors in scan order
    """
    target = measure.target
    p = target.patch_size
    extent_w, extent_h = target.grid_w * p, target.grid_h * p
    gw, gh = size.w // p, size.h // p
    scores = np.array(
        [measure.score(target.window(c.window.x // p, c.window.y // p,
                                     gw, gh))
         for c in _size_candidates(size, extent_w, extent_h, stride)],
        dtype=np.float64)
    return scores.reshape(len(_anchors(extent_h, size.h, stride)),
                          len(_anchors(extent_w, size.w, stride)))


_worker_measure = None


def _init_worker(measure):
    global _worker_measure
    _worker_measure = measure


def _score_size_task(args):
    size, stride = args
    return score_size(_worker_measure, size, stride)


def _score_all(measure, sizes, stride, jobs):
    if jobs <= 1 or len(sizes) == 1:
        return [score_size(measure, size, stride) for size in sizes]
    workers = min(jobs, len(sizes))
    with ProcessPoolExecutor(max_workers=workers,
                             initializer=_init_worker,
                             initargs=(measure,)) as executor:
        return list(executor.map(_score_size_task,
                                 [(size, stride) for size in sizes]))


@dataclass
class MatchResult:
    """
    Outcome of one match run.

    Attributes:
        best: best window in target pixels
        best_scale: (sx, sy) of the best window
        best_score: score of the best window
        score_map: (grid_h, grid_w) max over scales of the window anchored
                   at each patch cell; NaN where no window is anchored
        per_scale_maps: same layout per (sx, sy), only when requested
        measure: measure name
        candidates: number of windows scored
    """

    best: Window
    best_scale: Tuple[float, float]
    best_score: float
    score_map: np.ndarray
    per_scale_maps: Optional[Dict[Tuple[float, float], np.ndarray]]
    measure: str
    candidates: int

    def to_record(self):
        """Structured record of the result (JSON-compatible)."""
        return {
            "measure": self.measure,
            "best_window": list(self.best.as_tuple()),
            "best_scale": list(self.best_scale),
            "best_score": self.best_score,
            "candidates": self.candidates,
            "score_map_shape": list(self.score_map.shape),
        }


def match(template, target, cfg, grid=None, jobs=1, keep_scale_maps=False,
          cache_dir=None):
    """
    Locate template in target.

    Args:
        template: template Image
        target: target Image
        cfg: MatchConfig
        grid: ScaleGrid; fixed-scale measures always use {1.0}
        jobs: worker processes
        keep_scale_maps: also return one score map per scale pair
        cache_dir: optional ANN table cache directory

    Returns:
        MatchResult; ties go to the first window in scan order
    """
    if grid is None:
        grid = ScaleGrid.from_range(stride=cfg.patch_size)
    measure = MeasureStrategyFactory.create_for_config(cfg, cache_dir)
    if not measure.multi_scale:
        grid = ScaleGrid.fixed(grid.spatial_stride)

    p = cfg.patch_size
    T = patchify(template, p, cfg.rank_radius)
    G = patchify(target, p, cfg.rank_radius,
                 window_ranks=cfg.resolved_distance_mode == APPEARANCE_RANK)
    sizes = _fitting_sizes(G.grid_w * p, G.grid_h * p,
                           T.grid_w * p, T.grid_h * p, grid, p)
    stride = grid.spatial_stride

    measure.prepare(T, G)
    logger.info("Scoring %s over %d window sizes (jobs=%d)",
                measure.get_measure_name(), len(sizes), jobs)
    all_scores = _score_all(measure, sizes, stride, jobs)

    score_map = np.full((G.grid_h, G.grid_w), np.nan)
    per_scale = {} if keep_scale_maps else None
    best = None
    best_size = None
    best_score = -np.inf
    candidates = 0
    for size, scores in zip(sizes, all_scores):
        candidates += scores.size
        cell = stride // p
        rows, cols = scores.shape
        region = (slice(0, rows * cell, cell), slice(0, cols * cell, cell))
        score_map[region] = np.fmax(score_map[region], scores)
        if per_scale is not None:
            layer = np.full((G.grid_h, G.grid_w), np.nan)
            layer[region] = scores
            per_scale[(size.sx, size.sy)] = layer
        iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
        if scores[iy, ix] > best_score:
            best_score = float(scores[iy, ix])
            best = Window(ix * stride, iy * stride, size.w, size.h)
            best_size = size

    logger.info("Best %s window %s at scale (%.2f, %.2f), score %.6g",
                measure.get_measure_name(), best.as_tuple(), best_size.sx,
                best_size.sy, best_score)
    return MatchResult(best=best,
                       best_scale=(best_size.sx, best_size.sy),
                       best_score=best_score,
                       score_map=score_map,
                       per_scale_maps=per_scale,
                       measure=measure.get_measure_name(),
                       candidates=candidates)


def write_match_record(path, result, cfg, grid=None):
    """Write the match record as versioned JSON."""
    record = result.to_record()
    record["config"] = cfg.to_dict()
    if grid is not None:
        record["grid"] = grid.to_dict()
    CacheFileVersion.add_version_to_data(record)
    with open(path, 'w') as f:
        json.dump(record, f, indent=2)


def write_score_map_csv(path, score_map):
    """Write raw map values, one grid row per CSV row ('nan' if empty)."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        for row in score_map:
            writer.writerow([repr(float(v)) for v in row])


def write_score_map_pgm(path, score_map):
    """Write the map as a normalised 8-bit PGM."""
    save_map_pgm(path, score_map)


def export_result(out_dir, result, cfg, grid, record_name, csv_name,
                  pgm_name):
    """Write record, CSV and PGM of a result into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    write_match_record(os.path.join(out_dir, record_name), result, cfg, grid)
    write_score_map_csv(os.path.join(out_dir, csv_name), result.score_map)
    write_score_map_pgm(os.path.join(out_dir, pgm_name), result.score_map)
