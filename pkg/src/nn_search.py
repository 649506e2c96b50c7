#!/usr/bin/env python3
"""
Nearest-neighbour search for sdsmatch.

NNIndex answers exact 1-NN and k-NN queries against a set of patch feature
rows. Results are ordered by distance, ties broken by the lowest row index,
so repeated builds and queries are deterministic.

AnnTable stores the k nearest target patches of every template patch
together with its inverted map (target patch -> template patches), built
once per (template, target) pair.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from global_constants import (
    APPEARANCE_LOCATION,
    APPEARANCE_ONLY,
    APPEARANCE_RANK,
    KDTREE_LEAF_SIZE,
    KDTREE_MAX_DIM,
    TIE_RADIUS_SLACK,
)
from image_core import ConfigError, FeatureTypeError, SizeError

logger = logging.getLogger(__name__)

# Below this many reference rows a vectorised scan beats the tree
SCAN_MAX_ROWS = 256
# Upper bound on elements of one pairwise-difference block
BLOCK_ELEMENTS = 4_000_000


def squared_distances(queries, reference):
    """
    Pairwise squared Euclidean distances, (q, M).

    Computed from explicit differences so equal rows give exactly 0.
    """
    q, d = queries.shape
    m = reference.shape[0]
    out = np.empty((q, m), dtype=np.float64)
    rows = max(1, BLOCK_ELEMENTS // max(1, m * d))
    for start in range(0, q, rows):
        block = queries[start:start + rows]
        diff = block[:, np.newaxis, :] - reference[np.newaxis, :, :]
        out[start:start + rows] = np.einsum("qmd,qmd->qm", diff, diff)
    return out


def patch_vector(patch, mode, lam):
    """Feature row of a single Patch for the given distance mode."""
    appearance = np.asarray(patch.appearance, dtype=np.float64).ravel()
    if mode == APPEARANCE_ONLY:
        return appearance
    if mode == APPEARANCE_RANK:
        other = np.asarray(patch.rank, dtype=np.float64).ravel()
    elif mode == APPEARANCE_LOCATION:
        other = np.asarray(patch.location, dtype=np.float64).ravel()
    else:
        raise ConfigError(f"Unknown distance mode: {mode}")
    return np.concatenate([appearance, np.sqrt(lam) * other])


class NNIndex:
    """
    Exact nearest-neighbour index over reference feature rows.

    A cKDTree serves feature dimensions up to KDTREE_MAX_DIM; higher
    dimensions and small reference sets use a vectorised linear scan.
    """

    def __init__(self, reference, distance_mode=APPEARANCE_ONLY, lam=0.0):
        """
        Initialize index.

        Args:
            reference: (M, d) feature matrix, one row per patch
            distance_mode: mode the rows were built with
            lam: weight the rows were built with

        Raises:
            SizeError: if reference is empty
        """
        ref = np.array(reference, dtype=np.float64)
        if ref.ndim == 1:
            ref = ref[:, np.newaxis]
        if ref.shape[0] < 1:
            raise SizeError("Cannot build an index over an empty set")
        ref.setflags(write=False)
        self.reference = ref
        self.distance_mode = distance_mode
        self.lam = lam
        self._tree = None
        if ref.shape[1] <= KDTREE_MAX_DIM and ref.shape[0] > SCAN_MAX_ROWS:
            self._tree = cKDTree(ref, leafsize=KDTREE_LEAF_SIZE)

    @property
    def size(self):
        return self.reference.shape[0]

    @property
    def dim(self):
        return self.reference.shape[1]

    @property
    def uses_tree(self):
        return self._tree is not None

    def _as_queries(self, queries):
        arr = np.asarray(queries, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.shape[1] != self.dim:
            raise FeatureTypeError(
                f"Query dimension {arr.shape[1]} != index dimension "
                f"{self.dim}")
        return arr

    def knn(self, queries, k):
        """
        Return the k nearest reference rows of every query row.

        Args:
            queries: (q, d) matrix or a single d-vector
            k: neighbours per query, clamped to the index size

        Returns:
            tuple: (indices, squared_distances), both (q, min(k, M)),
                   ordered by distance then by row index
        """
        arr = self._as_queries(queries)
        k = max(1, min(int(k), self.size))
        if self._tree is None:
            return self._scan_knn(arr, k)
        return self._tree_knn(arr, k)

    def nearest(self, queries):
        """Return (indices, squared_distances) of the 1-NN, shape (q,)."""
        idx, dist = self.knn(queries, 1)
        return idx[:, 0], dist[:, 0]

    def _scan_knn(self, queries, k):
        dist = squared_distances(queries, self.reference)
        if k == 1:
            idx = np.argmin(dist, axis=1)[:, np.newaxis]
        else:
            idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
        return idx, np.take_along_axis(dist, idx, axis=1)

    def _tree_knn(self, queries, k):
        approx, _ = self._tree.query(queries, k=k)
        approx = np.asarray(approx).reshape(len(queries), k)
        radii = approx[:, -1] * (1.0 + TIE_RADIUS_SLACK) + TIE_RADIUS_SLACK
        candidates = self._tree.query_ball_point(queries, r=radii)
        idx = np.empty((len(queries), k), dtype=np.int64)
        dist = np.empty((len(queries), k), dtype=np.float64)
        for row, cand in enumerate(candidates):
            cand = np.asarray(cand, dtype=np.int64)
            diff = self.reference[cand] - queries[row]
            d = np.einsum("md,md->m", diff, diff)
            order = np.lexsort((cand, d))[:k]
            idx[row] = cand[order]
            dist[row] = d[order]
        return idx, dist


def build_index(ps, cfg, distance_mode=None):
    """
    Build the exact NN index over a PatchSet.

    Args:
        ps: PatchSet to index
        cfg: MatchConfig supplying lambda and the default distance mode
        distance_mode: optional override of cfg.resolved_distance_mode

    Raises:
        SizeError: if ps is empty
    """
    mode = distance_mode or cfg.resolved_distance_mode
    return NNIndex(ps.feature_matrix(mode, cfg.lam), mode, cfg.lam)


def nn_query(idx, q):
    """
    Return (row, squared distance) of the nearest indexed patch to q.

    Ties go to the lowest row index.

    Raises:
        FeatureTypeError: on a dimension mismatch
    """
    vec = patch_vector(q, idx.distance_mode, idx.lam)
    rows, dist = idx.nearest(vec)
    return int(rows[0]), float(dist[0])


@dataclass(frozen=True)
class AnnTable:
    """
    k nearest target patches of every template patch, plus the transpose.

    Attributes:
        forward: (n, k) target rows per template patch, nearest first
        distances: (n, k) squared distances matching forward
        target_size: number M of target patches
        inv_ptr: (M + 1,) offsets into inv_rows per target patch
        inv_rows: template rows whose lists contain each target patch
    """

    forward: np.ndarray
    distances: np.ndarray
    target_size: int
    inv_ptr: np.ndarray
    inv_rows: np.ndarray

    @classmethod
    def from_forward(cls, forward, distances, target_size):
        """Build the table and its inverted map from forward lists."""
        forward = np.asarray(forward, dtype=np.int64)
        flat = forward.ravel()
        order = np.argsort(flat, kind="stable")
        inv_rows = (order // forward.shape[1]).astype(np.int64)
        counts = np.bincount(flat, minlength=target_size)
        inv_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(forward, np.asarray(distances, dtype=np.float64),
                   int(target_size), inv_ptr, inv_rows)

    @property
    def template_size(self):
        return self.forward.shape[0]

    @property
    def k(self):
        return self.forward.shape[1]

    @property
    def tau_global(self):
        """Number of template lists containing each target patch."""
        return np.diff(self.inv_ptr)

    def inverted(self, j):
        """Template rows whose ANN lists contain target row j."""
        return self.inv_rows[self.inv_ptr[j]:self.inv_ptr[j + 1]]


def build_ann_table(template, target, cfg):
    """
    Exact k-NN of every template patch over all target patches.

    Args:
        template: template PatchSet (T)
        target: full target PatchSet
        cfg: MatchConfig (ann_k, lam, distance mode)

    Returns:
        AnnTable with min(k, M) entries per template patch
    """
    mode = cfg.resolved_distance_mode
    k = cfg.ann_k
    if k > target.n:
        logger.warning("ann_k=%d exceeds %d target patches, clamping",
                       k, target.n)
        k = target.n
    index = NNIndex(target.feature_matrix(mode, cfg.lam), mode, cfg.lam)
    forward, distances = index.knn(template.feature_matrix(mode, cfg.lam), k)
    logger.debug("ANN table built: n=%d M=%d k=%d tree=%s",
                 template.n, target.n, k, index.uses_tree)
    return AnnTable.from_forward(forward, distances, target.n)
