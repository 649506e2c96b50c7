#!/usr/bin/env python3
"""
On-disk cache of ANN tables for sdsmatch.

Tables are keyed by (template hash, target hash, config hash) and stored as
versioned .npz archives so repeated CLI runs over the same pair skip the
k-NN build. The cache directory comes from the SDS_CACHE_DIR environment
variable unless one is passed explicitly.
"""

import hashlib
import logging
import os

import numpy as np

from cache_file_version import CacheFileVersion
from global_constants import CACHE_DIR_ENV, CACHE_FILE_SUFFIX
from nn_search import AnnTable, build_ann_table

logger = logging.getLogger(__name__)


def cache_key(template, target, cfg):
    """Hex key over the template, target and the settings used."""
    h = hashlib.sha256()
    h.update(template.digest().encode())
    h.update(target.digest().encode())
    settings = f"{cfg.resolved_distance_mode}|{cfg.lam!r}|{cfg.ann_k}"
    h.update(settings.encode())
    return h.hexdigest()


def cache_dir_from_env():
    """Return the cache directory from SDS_CACHE_DIR, or None."""
    value = os.environ.get(CACHE_DIR_ENV, "").strip()
    return value or None


def _cache_path(cache_dir, key):
    return os.path.join(cache_dir, f"ann_{key}{CACHE_FILE_SUFFIX}")


def save_ann_table(cache_dir, key, table):
    """
    Save an ANN table under key.

    Args:
        cache_dir: Directory holding the archives (created if missing)
        key: Cache key from cache_key()
        table: AnnTable to store
    """
    try:
        os.makedirs(cache_dir, exist_ok=True)
        path = _cache_path(cache_dir, key)
        tmp_path = path + ".tmp"
        with open(tmp_path, 'wb') as f:
            np.savez(f,
                     version=np.int64(CacheFileVersion.get_current_version()),
                     key=np.str_(key),
                     forward=table.forward,
                     distances=table.distances,
                     target_size=np.int64(table.target_size))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except OSError as e:
        logger.warning("Could not save ANN cache entry: %s", e)


def load_ann_table(cache_dir, key):
    """
    Load the ANN table stored under key.

    Returns:
        AnnTable if a valid current-version entry exists, None otherwise
    """
    path = _cache_path(cache_dir, key)
    if not os.path.exists(path):
        return None

    try:
        with np.load(path, allow_pickle=False) as archive:
            is_valid, error = CacheFileVersion.validate_archive(archive, key)
            if not is_valid:
                logger.warning("Ignoring ANN cache entry %s: %s", path, error)
                return None
            return AnnTable.from_forward(archive['forward'],
                                         archive['distances'],
                                         int(archive['target_size']))
    except (OSError, ValueError) as e:
        logger.warning("Error loading ANN cache entry %s: %s", path, e)
        return None


def clear_ann_cache(cache_dir):
    """Remove every ANN archive in cache_dir; returns the count removed."""
    removed = 0
    if not os.path.isdir(cache_dir):
        return removed
    for name in os.listdir(cache_dir):
        if name.startswith("ann_") and name.endswith(CACHE_FILE_SUFFIX):
            try:
                os.remove(os.path.join(cache_dir, name))
                removed += 1
            except OSError as e:
                logger.warning("Could not remove %s: %s", name, e)
    return removed


def cached_ann_table(template, target, cfg, cache_dir=None):
    """
    Return the ANN table for (template, target, cfg), using the cache.

    Args:
        cache_dir: explicit cache directory; defaults to SDS_CACHE_DIR.
                   Without either, the table is always rebuilt.
    """
    cache_dir = cache_dir or cache_dir_from_env()
    if not cache_dir:
        return build_ann_table(template, target, cfg)

    key = cache_key(template, target, cfg)
    table = load_ann_table(cache_dir, key)
    if table is not None:
        logger.info("ANN table loaded from cache (%s)", key[:12])
        return table

    table = build_ann_table(template, target, cfg)
    save_ann_table(cache_dir, key, table)
    return table
