#!/usr/bin/env python3
"""
Monte-Carlo studies of the similarity measures on random point sets.

Points stand in for patches: every point becomes a one-patch entry of a
PatchSet, so the studies run through the same measure code as the image
matcher. Three studies are provided:
- expectation_map_1d: E[measure] over the (mu, sigma) grid of N(mu, sigma)
  windows against N(0, 1) templates
- scale_estimation_trials: how often argmax_s of a measure lands on the
  true object scale when the target mixes the object with background
- rotation_map_2d: E[measure] over (sigma2, theta) for rotated 2D sets

Every grid cell draws from its own stream SeedSequence([seed, *cell]), so
results do not depend on the number of workers.
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from global_constants import (
    POINT_RANK_RADIUS_2D,
    STATLAB_BACKGROUND_RANGE,
    STATLAB_GT_SCALES,
    STATLAB_MU_GRID,
    STATLAB_SCALE_GRID,
    STATLAB_SET_SIZE,
    STATLAB_SIGMA2_GRID,
    STATLAB_SIGMA_GRID,
    STATLAB_TARGET_SIZE,
    STATLAB_THETA_GRID,
    STATLAB_TRIALS,
)
from image_core import MatchConfig, ParameterError
from measure_strategy_factory import MeasureStrategyFactory
from patch_features import PatchSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianSpec:
    """
    Gaussian model of a random point set.

    Args:
        dim: 1 or 2
        mean: scalar (1D) or 2-vector (2D)
        sigma: standard deviation in 1D
        sigma1, sigma2: axis standard deviations in 2D before rotation
        theta: rotation in radians applied to 2D draws
    """

    dim: int
    mean: Union[float, Tuple[float, float]] = 0.0
    sigma: float = 1.0
    sigma1: float = 1.0
    sigma2: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim}")
        for name in ("sigma", "sigma1", "sigma2"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if self.dim == 2 and np.ndim(self.mean) == 0:
            object.__setattr__(self, "mean",
                               (float(self.mean), float(self.mean)))


@dataclass(frozen=True)
class ExpectationMap:
    """
    Monte-Carlo estimates of a measure over a 2D parameter grid.

    mean and stderr have shape (len(axis1), len(axis2)).
    """

    axis1_name: str
    axis1: Tuple[float, ...]
    axis2_name: str
    axis2: Tuple[float, ...]
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    measure: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if not np.all(np.isfinite(self.mean)):
            raise ParameterError("Expectation estimates must be finite")

    def argmax(self):
        """(axis1 value, axis2 value) of the largest mean."""
        i, j = np.unravel_index(int(np.argmax(self.mean)), self.mean.shape)
        return self.axis1[i], self.axis2[j]

    def row_relative_variation(self):
        """(max - min) / mean along axis2, one value per axis1 entry."""
        span = self.mean.max(axis=1) - self.mean.min(axis=1)
        return span / np.abs(self.mean.mean(axis=1))


@dataclass
class ScaleStudy:
    """
    Outcome of the scale-estimation study.

    Attributes:
        s_grid: candidate scales
        histograms: GT scale -> normalised frequency of argmax_s per s
        expectation: mean score over (GT scale, s)
    """

    measure: str
    s_grid: Tuple[float, ...]
    histograms: Dict[float, np.ndarray] = field(default_factory=dict)
    expectation: Optional[ExpectationMap] = None

    def mode(self, gt_scale):
        """Most frequent estimated scale for one GT scale."""
        return self.s_grid[int(np.argmax(self.histograms[gt_scale]))]


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_point_set(spec, count, rng_seed):
    """
    Draw count i.i.d. points from spec.

    Args:
        spec: GaussianSpec
        count: number of points (>= 1)
        rng_seed: int, SeedSequence or Generator

    Returns:
        np.ndarray: (count,) in 1D, (count, 2) in 2D
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    rng = _rng(rng_seed)
    if spec.dim == 1:
        return rng.normal(float(spec.mean), spec.sigma, count)
    pts = rng.normal(0.0, 1.0, (count, 2)) * [spec.sigma1, spec.sigma2]
    c, s = np.cos(spec.theta), np.sin(spec.theta)
    rotation = np.array([[c, -s], [s, c]])
    return pts @ rotation.T + np.asarray(spec.mean, dtype=np.float64)


def _line_layout(count):
    idx = np.arange(count, dtype=np.float64)
    location = np.stack([(idx + 0.5) / count, np.full(count, 0.5)], axis=1)
    positions = np.stack([idx, np.zeros(count)], axis=1)
    return location, positions


def point_patch_set_1d(values, r):
    """
    One-point patches of a 1D point set, ordered by value.

    Appearance is the value; points sit at their index along a line, which
    gives locations on the unit line and index positions for the radius
    term. The rank of a point counts the points within r index steps whose
    value does not exceed its own, divided by r**2.

    The set indexes itself (global_index = row), so it can serve both as a
    window and as the search space of a template.

    Args:
        values: (n,) point values
        r: rank neighbourhood in index steps
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(values, kind="stable")
    v = values[order]
    n = len(v)
    counts = np.zeros(n)
    for d in range(-r, r + 1):
        lo, hi = max(0, -d), min(n, n - d)
        counts[lo:hi] += v[lo:hi] >= v[lo + d:hi + d]
    location, positions = _line_layout(n)
    return PatchSet(width=n, height=1, patch_size=1, grid_w=n, grid_h=1,
                    appearance=v[:, np.newaxis],
                    location=location,
                    rank=(counts / float(r * r))[:, np.newaxis],
                    positions=positions,
                    global_index=np.arange(n))


def point_subset_1d(parent, rows):
    """
    Window of a 1D point set made of the given parent rows.

    Features come from the parent; the subset is laid out on its own line.
    """
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    location, positions = _line_layout(len(rows))
    return PatchSet(width=len(rows), height=1, patch_size=1,
                    grid_w=len(rows), grid_h=1,
                    appearance=parent.appearance[rows],
                    location=location,
                    rank=parent.rank[rows],
                    positions=positions,
                    global_index=rows)


def point_patch_set_2d(points, r=POINT_RANK_RADIUS_2D):
    """
    One-point patches of a 2D point set.

    Appearance is the distance from the set centroid; location and
    position are the coordinates. The rank of a point counts the points
    within distance r whose appearance does not exceed its own, divided by
    r**2. Appearance and rank are therefore unchanged by rotating the set.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    radius = np.sqrt(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1))
    delta = pts[:, np.newaxis, :] - pts[np.newaxis, :, :]
    near = np.sum(delta * delta, axis=2) <= r * r
    lower = radius[:, np.newaxis] >= radius[np.newaxis, :]
    counts = np.count_nonzero(near & lower, axis=1)
    # grid extents of 1 keep location distances in coordinate units
    return PatchSet(width=len(pts), height=1, patch_size=1, grid_w=1,
                    grid_h=1,
                    appearance=radius[:, np.newaxis],
                    location=pts,
                    rank=(counts / float(r * r))[:, np.newaxis],
                    positions=pts,
                    global_index=np.arange(len(pts)))


def _measure_for(name, cfg):
    cfg = (cfg or MatchConfig()).replace(measure=name)
    return MeasureStrategyFactory.create_for_config(cfg)


def _score(measure, T, Q, target):
    measure.prepare(T, target)
    return measure.score(Q)


def _summarise(values):
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return float(values.mean()), 0.0
    return (float(values.mean()),
            float(values.std(ddof=1) / np.sqrt(len(values))))


def _run_cells(func, tasks, jobs):
    if jobs <= 1 or len(tasks) == 1:
        return [func(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as executor:
        return list(executor.map(func, tasks))


def _expectation_cell_1d(task):
    name, cfg, t_size, q_size, mu, sigma, trials, seed, cell = task
    rng = np.random.default_rng(np.random.SeedSequence([seed, cell]))
    measure = _measure_for(name, cfg)
    r = measure.cfg.rank_radius
    values = []
    for _ in range(trials):
        t = sample_point_set(GaussianSpec(1, 0.0, sigma=1.0), t_size, rng)
        q = sample_point_set(GaussianSpec(1, mu, sigma=sigma), q_size, rng)
        T = point_patch_set_1d(t, r)
        Q = point_patch_set_1d(q, r)
        values.append(_score(measure, T, Q, Q))
    return _summarise(values)


def expectation_map_1d(measure="sds", t_size=STATLAB_SET_SIZE,
                       q_size=STATLAB_SET_SIZE, mu_grid=STATLAB_MU_GRID,
                       sigma_grid=STATLAB_SIGMA_GRID, trials=STATLAB_TRIALS,
                       seed=0, cfg=None, jobs=1):
    """
    Expectation of a measure between N(0, 1) and N(mu, sigma) point sets.

    The window set doubles as the ANN search space of the template.

    Returns:
        ExpectationMap over (mu, sigma)
    """
    if not mu_grid or not sigma_grid:
        raise ParameterError("Grids must not be empty")
    tasks = []
    for i, mu in enumerate(mu_grid):
        for j, sigma in enumerate(sigma_grid):
            cell = i * len(sigma_grid) + j
            tasks.append((measure, cfg, t_size, q_size, float(mu),
                          float(sigma), trials, seed, cell))
    logger.info("Expectation map of %s: %d cells x %d trials", measure,
                len(tasks), trials)
    results = _run_cells(_expectation_cell_1d, tasks, jobs)
    shape = (len(mu_grid), len(sigma_grid))
    return ExpectationMap(
        axis1_name="mu", axis1=tuple(mu_grid),
        axis2_name="sigma", axis2=tuple(sigma_grid),
        mean=np.array([m for m, _ in results]).reshape(shape),
        stderr=np.array([e for _, e in results]).reshape(shape),
        trials=trials, measure=measure)


def interpolate_nearest(values, count):
    """Resample sorted values to count points by nearest-neighbour index."""
    src = np.floor((np.arange(count) + 0.5) * len(values) / count)
    return values[np.clip(src.astype(np.int64), 0, len(values) - 1)]


def _window_rows(object_rows, background_rows, size):
    """Window rows: object rows in target order, then background."""
    if size <= len(object_rows):
        return interpolate_nearest(object_rows, size)
    extra = background_rows[:size - len(object_rows)]
    return np.concatenate([object_rows, extra])


def _scale_cell(task):
    (name, cfg, gt_index, gt, t_size, target_size, s_grid, bg_range,
     trials, seed, degenerate) = task
    measure = _measure_for(name, cfg)
    r = measure.cfg.rank_radius
    object_size = int(round(gt * t_size))
    picks = np.zeros(len(s_grid))
    scores = np.zeros((trials, len(s_grid)))
    for trial in range(trials):
        rng = np.random.default_rng(
            np.random.SeedSequence([seed, gt_index, trial]))
        t = np.sort(sample_point_set(GaussianSpec(1, 0.0, sigma=1.0),
                                     t_size, rng))
        obj = rng.permutation(interpolate_nearest(t, object_size))
        bg_count = target_size - object_size
        if degenerate:
            background = np.resize(t, bg_count)
        else:
            low, high = bg_range
            mu_b = rng.uniform(low, high)
            sigma_b = low + (high - low) * (1.0 - rng.uniform())
            background = rng.normal(mu_b, sigma_b, bg_count)
        target_values = np.concatenate([obj, background])
        T = point_patch_set_1d(t, r)
        target = point_patch_set_1d(target_values, r)
        raw_to_row = np.argsort(np.argsort(target_values, kind="stable"),
                                kind="stable")
        object_rows = raw_to_row[:object_size]
        background_rows = raw_to_row[object_size:]
        measure.prepare(T, target)
        for k, s in enumerate(s_grid):
            size = int(round(s * t_size))
            rows = _window_rows(object_rows, background_rows, size)
            scores[trial, k] = measure.score(point_subset_1d(target, rows))
        picks[int(np.argmax(scores[trial]))] += 1
    mean = scores.mean(axis=0)
    if trials > 1:
        stderr = scores.std(axis=0, ddof=1) / np.sqrt(trials)
    else:
        stderr = np.zeros(len(s_grid))
    return picks / trials, mean, stderr


def scale_estimation_trials(measure="sds", t_size=STATLAB_SET_SIZE,
                            target_size=STATLAB_TARGET_SIZE,
                            gt_scales=STATLAB_GT_SCALES,
                            s_grid=STATLAB_SCALE_GRID,
                            background_range=STATLAB_BACKGROUND_RANGE,
                            trials=STATLAB_TRIALS, seed=0, cfg=None, jobs=1,
                            degenerate_background=False):
    """
    Estimate the object scale by maximising a measure over s.

    Every trial draws a template T of t_size points, stretches it to
    gt * t_size object points by nearest-neighbour interpolation, places
    them in the target in random order and adds background points from
    N(mu_b, sigma_b) with mu_b, sigma_b uniform in background_range.
    Windows of s * t_size points take evenly spaced object points in
    target order, so a window smaller than the object is a random subset
    of it. Larger windows hold the whole object plus background points.

    Args:
        degenerate_background: fill the background with copies of T

    Raises:
        ParameterError: if an object or a window exceeds the target
    """
    for gt in gt_scales:
        if int(round(gt * t_size)) > target_size:
            raise ParameterError(
                f"GT scale {gt} needs more than {target_size} points")
    if int(round(max(s_grid) * t_size)) > target_size:
        raise ParameterError(
            f"Scale {max(s_grid)} needs more than {target_size} points")
    tasks = [(measure, cfg, i, float(gt), t_size, target_size,
              tuple(s_grid), tuple(background_range), trials, seed,
              degenerate_background)
             for i, gt in enumerate(gt_scales)]
    logger.info("Scale estimation with %s: %d GT scales x %d trials",
                measure, len(tasks), trials)
    results = _run_cells(_scale_cell, tasks, jobs)
    study = ScaleStudy(measure=measure, s_grid=tuple(s_grid))
    for gt, (hist, _, _) in zip(gt_scales, results):
        study.histograms[float(gt)] = hist
    study.expectation = ExpectationMap(
        axis1_name="gt_scale", axis1=tuple(float(g) for g in gt_scales),
        axis2_name="s", axis2=tuple(s_grid),
        mean=np.array([m for _, m, _ in results]),
        stderr=np.array([e for _, _, e in results]),
        trials=trials, measure=measure)
    return study


def scale_expectation_map(measure="sds", gt_scales=STATLAB_GT_SCALES,
                          s_grid=STATLAB_SCALE_GRID, trials=STATLAB_TRIALS,
                          seed=0, cfg=None, jobs=1, **kwargs):
    """Mean score over (GT scale, s) of the scale-estimation protocol."""
    return scale_estimation_trials(measure, gt_scales=gt_scales,
                                   s_grid=s_grid, trials=trials, seed=seed,
                                   cfg=cfg, jobs=jobs, **kwargs).expectation


def _rotation_cell(task):
    names, cfg, n, sigma2, theta, trials, seed, cell = task
    rng = np.random.default_rng(np.random.SeedSequence([seed, *cell]))
    measures = [_measure_for(name, cfg) for name in names]
    values = [[] for _ in names]
    for _ in range(trials):
        t = sample_point_set(GaussianSpec(2, sigma1=1.0, sigma2=sigma2),
                             n, rng)
        q = sample_point_set(GaussianSpec(2, sigma1=1.0, sigma2=sigma2,
                                          theta=theta), n, rng)
        T = point_patch_set_2d(t)
        Q = point_patch_set_2d(q)
        for k, measure in enumerate(measures):
            values[k].append(_score(measure, T, Q, Q))
    return [_summarise(v) for v in values]


def rotation_map_2d(measures=("bbs", "sds"), sigma2_grid=STATLAB_SIGMA2_GRID,
                    theta_grid=STATLAB_THETA_GRID, trials=STATLAB_TRIALS,
                    seed=0, n=STATLAB_SET_SIZE, cfg=None, jobs=1):
    """
    Expectation of measures between a 2D set and a rotated draw.

    T and Q both come from N((0, 0), diag(1, sigma2**2)); Q is rotated by
    theta. All measures of a cell see the same draws.

    Returns:
        dict: measure name -> ExpectationMap over (sigma2, theta)
    """
    if any(s <= 0 for s in sigma2_grid):
        raise ParameterError("sigma2 values must be > 0")
    tasks = [(tuple(measures), cfg, n, float(s2), float(th), trials, seed,
              (i, j))
             for i, s2 in enumerate(sigma2_grid)
             for j, th in enumerate(theta_grid)]
    logger.info("Rotation maps of %s: %d cells x %d trials",
                ",".join(measures), len(tasks), trials)
    results = _run_cells(_rotation_cell, tasks, jobs)
    shape = (len(sigma2_grid), len(theta_grid))
    maps = {}
    for k, name in enumerate(measures):
        maps[name] = ExpectationMap(
            axis1_name="sigma2", axis1=tuple(sigma2_grid),
            axis2_name="theta", axis2=tuple(theta_grid),
            mean=np.array([cell[k][0] for cell in results]).reshape(shape),
            stderr=np.array([cell[k][1] for cell in results]).reshape(shape),
            trials=trials, measure=name)
    return maps


def write_expectation_csv(path, emap):
    """Write one row per cell: axis1, axis2, mean, stderr, trials."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow([emap.axis1_name, emap.axis2_name, "mean", "stderr",
                         "trials"])
        for i, a in enumerate(emap.axis1):
            for j, b in enumerate(emap.axis2):
                writer.writerow([repr(float(a)), repr(float(b)),
                                 repr(float(emap.mean[i, j])),
                                 repr(float(emap.stderr[i, j])),
                                 emap.trials])


def write_histogram_csv(path, study):
    """Write the scale histograms: gt_scale, s, frequency."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(["gt_scale", "s", "frequency"])
        for gt, hist in study.histograms.items():
            for s, freq in zip(study.s_grid, hist):
                writer.writerow([repr(gt), repr(float(s)),
                                 repr(float(freq))])
