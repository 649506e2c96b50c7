#!/usr/bin/env python3
"""
Benchmark harness for sdsmatch.

Reads annotated (reference, template box, target, ground-truth box) pairs,
runs the matcher for every configured measure and scores the returned
windows by their overlap with the ground truth. Success curves sweep an
overlap threshold; their AUC is the mean success rate.

Annotation CSV columns:
    ref_path, tx, ty, tw, th, target_path, gx, gy, gw, gh, tag
Image paths are relative to the CSV file. The tag holds the subset
category followed by optional key=value parameters, separated by ';'.
"""

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from global_constants import (
    ANNOTATION_COLUMNS,
    AUC_FILE_NAME,
    CURVES_FILE_NAME,
    DEFAULT_THRESHOLDS,
    MAX_SKIPPED_FRACTION,
    PER_PAIR_FILE_NAME,
)
from image_core import (
    BenchmarkError,
    ParameterError,
    SdsError,
    Window,
    crop,
)
from image_io import load_image, save_map_pgm
from window_matcher import match

logger = logging.getLogger(__name__)

ALL_SUBSET = "all"


def parse_tag(tag):
    """Split 'category;k=v;...' into a dict with a 'category' entry."""
    parts = [p.strip() for p in str(tag or "").split(";") if p.strip()]
    tags = {"category": parts[0] if parts and "=" not in parts[0]
            else ALL_SUBSET}
    for part in parts:
        if "=" in part:
            key, value = part.split("=", 1)
            tags[key.strip()] = value.strip()
    return tags


def format_tag(tags):
    """Inverse of parse_tag."""
    extras = [f"{k}={v}" for k, v in tags.items() if k != "category"]
    return ";".join([tags.get("category", ALL_SUBSET)] + extras)


@dataclass(frozen=True)
class BenchPair:
    """
    One annotated template / target pair.

    Attributes:
        pair_id: identifier used in the logs
        ref_path: image the template is cropped from
        template_box: template window inside the reference image
        target_path: image searched by the matcher
        gt_box: ground-truth window inside the target
        tags: 'category' plus free-form parameters
    """

    pair_id: str
    ref_path: str
    template_box: Window
    target_path: str
    gt_box: Window
    tags: Dict[str, str] = field(default_factory=dict)

    @property
    def category(self):
        return self.tags.get("category", ALL_SUBSET)


@dataclass(frozen=True)
class SuccessCurve:
    """Success rate per overlap threshold; auc is the mean rate."""

    thresholds: Tuple[float, ...]
    success_rate: Tuple[float, ...]
    auc: float

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        rates = np.asarray(self.success_rate, dtype=np.float64)
        if len(t) == 0 or len(t) != len(rates):
            raise ParameterError("Thresholds and rates must align")
        if np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] > 1:
            raise ParameterError("Thresholds must ascend within [0, 1]")
        if np.any(np.diff(rates) > 0):
            raise ParameterError("Success rate must be non-increasing")


def overlap_rate(wr, wg):
    """Intersection over union of two windows in pixel counts."""
    inter = wr.intersection_area(wg)
    union = wr.area + wg.area - inter
    return inter / float(union)


def success_curve(overlaps, thresholds=DEFAULT_THRESHOLDS):
    """
    Fraction of overlaps reaching each threshold.

    Raises:
        ParameterError: on an empty overlap list
    """
    overlaps = np.asarray(overlaps, dtype=np.float64)
    if overlaps.size == 0:
        raise ParameterError("No overlaps to build a success curve from")
    rates = tuple(float(np.mean(overlaps >= t)) for t in thresholds)
    return SuccessCurve(tuple(float(t) for t in thresholds), rates,
                        float(np.mean(rates)))


def ngt_window(template_box, gt_box):
    """Template-sized window centred on the ground-truth centroid."""
    cx, cy = gt_box.center
    x = int(np.floor(cx - template_box.w / 2.0 + 0.5))
    y = int(np.floor(cy - template_box.h / 2.0 + 0.5))
    return Window(x, y, template_box.w, template_box.h)


def ngt_overlap(pair):
    return overlap_rate(ngt_window(pair.template_box, pair.gt_box),
                        pair.gt_box)


def ngt_curve(pairs, thresholds=DEFAULT_THRESHOLDS):
    """Success curve of fixed-size boxes at the ground-truth centroids."""
    return success_curve([ngt_overlap(p) for p in pairs], thresholds)


def _window_from(row, keys):
    return Window(*(int(row[k]) for k in keys))


def read_annotations(path):
    """
    Read an annotation CSV into BenchPairs.

    Raises:
        ParameterError: on missing columns or malformed rows
    """
    base = os.path.dirname(os.path.abspath(path))
    pairs = []
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        missing = set(ANNOTATION_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ParameterError(
                f"Annotation file lacks columns: {sorted(missing)}")
        for i, row in enumerate(reader):
            try:
                pairs.append(BenchPair(
                    pair_id=row.get("pair_id") or f"pair{i:04d}",
                    ref_path=os.path.join(base, row["ref_path"]),
                    template_box=_window_from(row, ("tx", "ty", "tw", "th")),
                    target_path=os.path.join(base, row["target_path"]),
                    gt_box=_window_from(row, ("gx", "gy", "gw", "gh")),
                    tags=parse_tag(row["tag"])))
            except (TypeError, ValueError) as e:
                raise ParameterError(
                    f"Bad annotation row {i + 2} in {path}: {e}") from e
    return pairs


def write_annotations(path, pairs):
    """Write pairs as an annotation CSV; paths relative to its directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(("pair_id",) + ANNOTATION_COLUMNS)
        for p in pairs:
            writer.writerow([p.pair_id,
                             os.path.relpath(p.ref_path, base),
                             *p.template_box.as_tuple(),
                             os.path.relpath(p.target_path, base),
                             *p.gt_box.as_tuple(),
                             format_tag(p.tags)])


def config_labels(cfgs):
    """Column label per config: the measure name, numbered on repeats."""
    labels = []
    for cfg in cfgs:
        label = cfg.measure
        if label in labels:
            label = f"{cfg.measure}#{len(labels)}"
        labels.append(label)
    return labels


@dataclass
class BenchReport:
    """
    Results of a benchmark run.

    Attributes:
        labels: column label per config
        curves: label -> SuccessCurve over all pairs
        subset_curves: (label, category) -> SuccessCurve
        ngt: category -> NGT SuccessCurve (ALL_SUBSET included)
        rows: per (pair, config) result dicts
        skipped: ids of pairs that could not be evaluated
    """

    labels: List[str]
    thresholds: Tuple[float, ...]
    curves: Dict[str, SuccessCurve] = field(default_factory=dict)
    subset_curves: Dict[Tuple[str, str], SuccessCurve] = \
        field(default_factory=dict)
    ngt: Dict[str, SuccessCurve] = field(default_factory=dict)
    rows: List[dict] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    def write(self, out_dir):
        """Write curves.csv, auc.csv and per_pair.csv into out_dir."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, CURVES_FILE_NAME), 'w',
                  newline='') as f:
            writer = csv.writer(f)
            writer.writerow(["threshold"] + self.labels)
            for i, t in enumerate(self.thresholds):
                writer.writerow([repr(t)] +
                                [repr(self.curves[label].success_rate[i])
                                 for label in self.labels])
        with open(os.path.join(out_dir, AUC_FILE_NAME), 'w',
                  newline='') as f:
            writer = csv.writer(f)
            writer.writerow(["label", "subset", "auc"])
            for label in self.labels:
                writer.writerow([label, ALL_SUBSET,
                                 repr(self.curves[label].auc)])
            for (label, subset), curve in sorted(self.subset_curves.items()):
                writer.writerow([label, subset, repr(curve.auc)])
            for subset, curve in sorted(self.ngt.items()):
                writer.writerow(["ngt", subset, repr(curve.auc)])
        with open(os.path.join(out_dir, PER_PAIR_FILE_NAME), 'w',
                  newline='') as f:
            fields = ["pair_id", "category", "label", "measure", "x", "y",
                      "w", "h", "sx", "sy", "score", "overlap"]
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row[k] for k in fields})


def _evaluate_pair(task):
    """Run every config on one pair; returns (rows, skip_reason)."""
    pair, cfgs, labels, grid, map_dir = task
    try:
        reference = load_image(pair.ref_path)
        template = crop(reference, pair.template_box)
        target = load_image(pair.target_path)
    except (OSError, SdsError) as e:
        return [], str(e)
    rows = []
    for cfg, label in zip(cfgs, labels):
        try:
            result = match(template, target, cfg, grid)
        except SdsError as e:
            return [], f"{label}: {e}"
        if map_dir:
            save_map_pgm(os.path.join(map_dir,
                                      f"{pair.pair_id}_{label}.pgm"),
                         result.score_map)
        x, y, w, h = result.best.as_tuple()
        rows.append({
            "pair_id": pair.pair_id, "category": pair.category,
            "label": label, "measure": cfg.measure,
            "x": x, "y": y, "w": w, "h": h,
            "sx": result.best_scale[0], "sy": result.best_scale[1],
            "score": result.best_score,
            "overlap": overlap_rate(result.best, pair.gt_box),
        })
    return rows, None


def run_benchmark(pairs, cfgs, thresholds=DEFAULT_THRESHOLDS, grid=None,
                  jobs=1, map_dir=None):
    """
    Match every pair with every config and build success curves.

    Args:
        pairs: list of BenchPair
        cfgs: list of MatchConfig
        thresholds: ascending overlap thresholds in [0, 1]
        grid: ScaleGrid for the multi-scale measures
        jobs: worker processes (one pair per task)
        map_dir: optional directory receiving one PGM score map per run

    Returns:
        BenchReport

    Raises:
        ParameterError: on empty inputs
        BenchmarkError: if more than MAX_SKIPPED_FRACTION of pairs fail
    """
    if not pairs or not cfgs:
        raise ParameterError("Benchmark needs at least one pair and config")
    labels = config_labels(cfgs)
    if map_dir:
        os.makedirs(map_dir, exist_ok=True)
    tasks = [(pair, list(cfgs), labels, grid, map_dir) for pair in pairs]
    if jobs <= 1 or len(tasks) == 1:
        outcomes = [_evaluate_pair(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            outcomes = list(ex.map(_evaluate_pair, tasks))

    report = BenchReport(labels=labels,
                         thresholds=tuple(float(t) for t in thresholds))
    evaluated = []
    for pair, (rows, reason) in zip(pairs, outcomes):
        if reason is not None:
            logger.warning("Skipping pair %s: %s", pair.pair_id, reason)
            report.skipped.append(pair.pair_id)
            continue
        evaluated.append(pair)
        report.rows.extend(rows)

    if len(report.skipped) > MAX_SKIPPED_FRACTION * len(pairs):
        raise BenchmarkError(
            f"{len(report.skipped)} of {len(pairs)} pairs could not be "
            f"evaluated")
    if not evaluated:
        raise BenchmarkError("No pair could be evaluated")

    categories = sorted({p.category for p in evaluated} - {ALL_SUBSET})
    for label in labels:
        overlaps = [r["overlap"] for r in report.rows if r["label"] == label]
        report.curves[label] = success_curve(overlaps, thresholds)
        for category in categories:
            subset = [r["overlap"] for r in report.rows
                      if r["label"] == label and r["category"] == category]
            report.subset_curves[(label, category)] = \
                success_curve(subset, thresholds)
    report.ngt[ALL_SUBSET] = ngt_curve(evaluated, thresholds)
    for category in categories:
        report.ngt[category] = ngt_curve(
            [p for p in evaluated if p.category == category], thresholds)
    logger.info("Benchmark done: %d pairs, %d skipped", len(evaluated),
                len(report.skipped))
    return report
