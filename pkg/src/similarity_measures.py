#!/usr/bin/env python3
"""
Similarity measures for sdsmatch.

Pure scoring functions between a template patch set T and a candidate
window patch set Q:
- sds_score: scalable diversity similarity, built from the diversity
  counts epsilon (window -> template NN) and tau (template ANN lists over
  the target), the scale normalisation U and the polar radius penalty
- bbs_score: bidirectional (mutual) nearest-neighbour count
- dis_score: number of distinct template patches attracting a window NN
- ddis_score: deformation-weighted diversity
- ssd_score / sad_score: negated pixel difference sums (fixed scale)

Larger is more similar for every measure.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from global_constants import RADIUS_SCALING_AXIS, RADIUS_SCALING_SQRT
from image_core import AlignmentError, SizeError
from nn_search import build_index, squared_distances


@dataclass(frozen=True)
class DiversityStats:
    """
    Diversity counts of one (template, window) pair.

    Attributes:
        epsilon: per template patch, number of window patches whose NN it is
        tau: per window patch, number of template ANN lists containing it
        s: scale ratio m / n
        nn_of_q: per window patch, row of its NN in the template
    """

    epsilon: Optional[np.ndarray]
    tau: Optional[np.ndarray]
    s: float
    nn_of_q: Optional[np.ndarray]


def scale_ratio(T, Q):
    """Patch-count ratio s = m / n."""
    return Q.n / float(T.n)


def nearest_in_template(T, Q, cfg, index=None, distance_mode=None):
    """
    Row in T of the nearest template patch of every window patch.

    Args:
        index: optional prebuilt NNIndex over T (must match the mode)
        distance_mode: overrides cfg.resolved_distance_mode
    """
    mode = distance_mode or cfg.resolved_distance_mode
    if index is None:
        index = build_index(T, cfg, mode)
    rows, _ = index.nearest(Q.feature_matrix(mode, cfg.lam))
    return rows


def epsilon_counts(T, Q, cfg, index=None, nn_of_q=None):
    """
    Count, for every template patch, the window patches whose NN it is.

    Args:
        nn_of_q: precomputed NN rows of Q in T (skips the search)

    Returns:
        DiversityStats with epsilon, nn_of_q and s filled in
    """
    if nn_of_q is None:
        nn_of_q = nearest_in_template(T, Q, cfg, index)
    nn_of_q = np.asarray(nn_of_q, dtype=np.int64)
    epsilon = np.bincount(nn_of_q, minlength=T.n)
    return DiversityStats(epsilon=epsilon, tau=None, s=scale_ratio(T, Q),
                          nn_of_q=nn_of_q)


def tau_counts(T, Q, table):
    """
    Number of template ANN lists containing each window patch.

    Args:
        T: template PatchSet the table was built for
        Q: window PatchSet taken from the table's target grid
        table: AnnTable of (T, target)

    Raises:
        AlignmentError: if Q is not a window of the target grid
        SizeError: if the table belongs to another template
    """
    if Q.global_index is None:
        raise AlignmentError("Window is not a subset of the target grid")
    if table.template_size != T.n:
        raise SizeError(f"ANN table has {table.template_size} template "
                        f"rows, template has {T.n}")
    if Q.global_index.max(initial=0) >= table.target_size:
        raise AlignmentError("Window rows exceed the target grid")
    tau = table.tau_global[Q.global_index]
    return DiversityStats(epsilon=None, tau=tau, s=scale_ratio(T, Q),
                          nn_of_q=None)


def polar_radius(ps, patch_index):
    """Distance of a patch from the geometric centre of its set."""
    return float(ps.radii[patch_index])


def u_term(eps, s):
    """
    Scale normalisation over the template patches with epsilon > 0.

    Each such patch contributes exp(min(s / epsilon, 1) - 1): a full unit
    while it attracts no more than s window patches, less beyond that.
    """
    eps = np.asarray(eps, dtype=np.float64)
    hits = eps[eps > 0]
    if hits.size == 0:
        return 0.0
    ratio = s / hits
    exponent = np.where(ratio >= 1.0, 1.0, ratio) - 1.0
    return float(np.exp(exponent).sum())


def scaled_template_radii(T, Q, nn_of_q, cfg):
    """
    Template-side radius of the SDS penalty for every window patch.

    With axis scaling the offset of the template NN from the template pole
    is stretched by the per-axis grid ratio (Q.grid_w / T.grid_w,
    Q.grid_h / T.grid_h) before taking its length; on a 1D point set this
    is s * rho(NN). Area and sqrt scaling multiply rho(NN) by s or sqrt(s).
    """
    nn = np.asarray(nn_of_q, dtype=np.int64)
    if cfg.radius_scaling == RADIUS_SCALING_AXIS:
        ratio = np.array([Q.grid_w / float(T.grid_w),
                          Q.grid_h / float(T.grid_h)])
        offsets = (T.positions[nn] - T.pole) * ratio
        return np.sqrt(np.sum(offsets * offsets, axis=1))
    s = scale_ratio(T, Q)
    factor = np.sqrt(s) if cfg.radius_scaling == RADIUS_SCALING_SQRT else s
    return factor * T.radii[nn]


def sds_from_counts(epsilon, tau, scaled_radii, window_radii, s, cfg):
    """
    Combine diversity counts and radii into the SDS value.

    score = (1 / s) * #{tau != 0} * #{epsilon != 0} * U
            / (denom_guard + sum_j |rho(q_j) - scaled_radii_j|)

    scaled_radii holds the template-side radius of every window patch, see
    scaled_template_radii.
    """
    count = np.count_nonzero(tau) * np.count_nonzero(epsilon)
    if count == 0:
        return 0.0
    u = u_term(epsilon, s)
    penalty = np.abs(window_radii - scaled_radii).sum()
    return float(count * u / (s * (cfg.denom_guard + penalty)))


def sds_score(T, Q, table, cfg, index=None, nn_of_q=None):
    """
    Scalable diversity similarity of window Q against template T.

    Args:
        T: template PatchSet
        Q: window PatchSet of the table's target grid
        table: AnnTable of (T, target)
        cfg: MatchConfig
        index: optional prebuilt NNIndex over T
        nn_of_q: optional precomputed NN rows of Q in T

    Returns:
        float: finite, >= 0
    """
    if Q.n < 1:
        raise SizeError("Empty window")
    stats = epsilon_counts(T, Q, cfg, index=index, nn_of_q=nn_of_q)
    tau = tau_counts(T, Q, table).tau
    scaled = scaled_template_radii(T, Q, stats.nn_of_q, cfg)
    return sds_from_counts(stats.epsilon, tau, scaled, Q.radii, stats.s, cfg)


def mutual_nn_count(T, Q, cfg):
    """Number of (t, q) pairs that are each other's nearest neighbour."""
    mode = cfg.resolved_distance_mode
    dist = squared_distances(T.feature_matrix(mode, cfg.lam),
                             Q.feature_matrix(mode, cfg.lam))
    nn_of_t = np.argmin(dist, axis=1)
    nn_of_q = np.argmin(dist, axis=0)
    return int(np.count_nonzero(nn_of_t[nn_of_q] == np.arange(Q.n)))


def bbs_score(T, Q, cfg):
    """Mutual NN pairs normalised by min(n, m); lies in [0, 1]."""
    return mutual_nn_count(T, Q, cfg) / float(min(T.n, Q.n))


def dis_score(T, Q, cfg, index=None, nn_of_q=None):
    """Distinct template patches attracting a window NN, over min(n, m)."""
    stats = epsilon_counts(T, Q, cfg, index=index, nn_of_q=nn_of_q)
    return np.count_nonzero(stats.epsilon) / float(min(T.n, Q.n))


def ddis_score(T, Q, cfg, index=None, nn_of_q=None):
    """
    Deformable diversity similarity.

    With weighting enabled every window patch q_j contributes
    exp(1 - kappa_j) / (1 + r_j), where kappa_j is the epsilon count of its
    template NN and r_j the location distance to that NN in template patch
    units. Without weighting the score reduces to dis_score.
    """
    stats = epsilon_counts(T, Q, cfg, index=index, nn_of_q=nn_of_q)
    c = 1.0 / min(T.n, Q.n)
    if not cfg.ddis_weighting:
        return c * np.count_nonzero(stats.epsilon)
    nn = stats.nn_of_q
    kappa = stats.epsilon[nn].astype(np.float64)
    dims = min(2, Q.location.shape[1])
    units = np.array([T.grid_w, T.grid_h], dtype=np.float64)[:dims]
    delta = (Q.location[:, :dims] - T.location[nn, :dims]) * units
    r = np.sqrt(np.sum(delta * delta, axis=1))
    return float(c * np.sum(np.exp(1.0 - kappa) / (1.0 + r)))


def _check_same_size(T, Q):
    if T.appearance.shape != Q.appearance.shape:
        raise SizeError(f"Pixel-difference measures need equal sizes: "
                        f"{T.appearance.shape} vs {Q.appearance.shape}")


def ssd_score(T, Q):
    """Negated sum of squared pixel differences."""
    _check_same_size(T, Q)
    diff = T.appearance - Q.appearance
    return -float(np.sum(diff * diff))


def sad_score(T, Q):
    """Negated sum of absolute pixel differences."""
    _check_same_size(T, Q)
    return -float(np.sum(np.abs(T.appearance - Q.appearance)))
