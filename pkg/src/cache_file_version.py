#!/usr/bin/env python3
"""
Cache file version management for sdsmatch.

Handles versioning and validation of on-disk ANN table archives and JSON
records so that files written by an older layout are detected and rebuilt
instead of being misread.
"""


class CacheFileVersion:
    """
    Manages the format version of cache archives and output records.

    Version history:
    - v1: ANN archive holds forward, distances, target_size; JSON records
          carry a top-level 'version' field
    """

    CURRENT_VERSION = 1

    REQUIRED_ARRAYS = ("version", "forward", "distances", "target_size",
                       "key")

    @classmethod
    def get_current_version(cls):
        """Return the current cache file version."""
        return cls.CURRENT_VERSION

    @classmethod
    def add_version_to_data(cls, record):
        """
        Add version number to a record before saving.

        Args:
            record: Dictionary written as JSON

        Returns:
            Dictionary with version field added
        """
        record['version'] = cls.CURRENT_VERSION
        return record

    @classmethod
    def check_version(cls, version):
        """
        Compare a stored version with the current one.

        Args:
            version: Version read from a file (None if missing)

        Returns:
            tuple: (is_current, warning_message)
        """
        if version is None:
            return False, "Cache entry has no version field"
        version = int(version)
        if version > cls.CURRENT_VERSION:
            return False, (f"Cache entry is from newer version "
                           f"(v{version}), current version is "
                           f"v{cls.CURRENT_VERSION}")
        if version < cls.CURRENT_VERSION:
            return False, (f"Found older cache format (v{version}), "
                           f"rebuilding as v{cls.CURRENT_VERSION}")
        return True, None

    @classmethod
    def validate_archive(cls, archive, expected_key):
        """
        Validate that an ANN archive is complete and belongs to a key.

        Args:
            archive: Mapping of array names (e.g. a loaded NpzFile)
            expected_key: Cache key the caller is looking for

        Returns:
            tuple: (is_valid, error_message)
        """
        for name in cls.REQUIRED_ARRAYS:
            if name not in archive:
                return False, f"Missing required array: {name}"

        is_current, warning = cls.check_version(archive['version'])
        if not is_current:
            return False, warning

        if str(archive['key']) != expected_key:
            return False, "Cache key mismatch"

        forward = archive['forward']
        if forward.ndim != 2 or forward.shape != archive['distances'].shape:
            return False, "Forward table and distances disagree in shape"

        return True, None
