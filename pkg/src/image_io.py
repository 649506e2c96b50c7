#!/usr/bin/env python3
"""
Image file I/O for sdsmatch.

Reads and writes PNG and binary PPM/PGM through Pillow. Pixel values are
normalised to [0, 1] at load time whatever the source bit depth.
"""

import os

import numpy as np
from PIL import Image as PILImage

from global_constants import PGM_MAX_VALUE, UINT8_MAX, UINT16_MAX
from image_core import FeatureTypeError, Image, SizeError

_SUPPORTED_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


def _check_suffix(path):
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix not in _SUPPORTED_SUFFIXES:
        raise FeatureTypeError(f"Unsupported image format: {path}")
    return suffix


def load_image(path):
    """
    Load a grayscale or RGB image normalised to [0, 1].

    Args:
        path: PNG, PPM or PGM file

    Returns:
        Image: 1-channel for grayscale sources, 3-channel otherwise

    Raises:
        FileNotFoundError: if path does not exist
        FeatureTypeError: on unsupported formats
    """
    _check_suffix(path)
    with PILImage.open(path) as pil:
        mode = pil.mode
        if mode.startswith("I"):
            arr = np.asarray(pil, dtype=np.float64)
            scale = UINT16_MAX if arr.max(initial=0) <= UINT16_MAX else \
                float(arr.max())
            return Image(np.clip(arr / scale, 0.0, 1.0))
        if mode in ("1", "L", "LA"):
            arr = np.asarray(pil.convert("L"), dtype=np.float64)
        else:
            arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
    return Image(arr / UINT8_MAX)


def to_uint8(img):
    """Quantise an Image to an (H, W) or (H, W, 3) uint8 array."""
    arr = np.rint(img.data * UINT8_MAX).astype(np.uint8)
    if img.channels == 1:
        return arr[:, :, 0]
    return arr


def save_image(path, img):
    """
    Write an Image as 8-bit PNG, PPM or PGM (chosen by suffix).

    Raises:
        FeatureTypeError: on unsupported formats or RGB written to PGM
    """
    suffix = _check_suffix(path)
    if suffix == ".pgm" and img.channels != 1:
        raise FeatureTypeError("PGM output requires a 1-channel image")
    arr = to_uint8(img)
    PILImage.fromarray(arr).save(path)


def normalise_map(values):
    """
    Rescale a float map to [0, 1] over its finite entries.

    Non-finite cells become 0; a constant map becomes all zeros.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise SizeError("Cannot normalise an empty map")
    finite = np.isfinite(arr)
    out = np.zeros_like(arr)
    if not finite.any():
        return out
    lo = arr[finite].min()
    hi = arr[finite].max()
    if hi > lo:
        out[finite] = (arr[finite] - lo) / (hi - lo)
    return out


def save_map_pgm(path, values):
    """Write a float map as a normalised 8-bit binary PGM."""
    norm = normalise_map(values)
    arr = np.rint(norm * PGM_MAX_VALUE).astype(np.uint8)
    PILImage.fromarray(arr).save(path, format="PPM")
