#!/usr/bin/env python3
"""
Core types for sdsmatch - images, windows, scale grids and configuration.

Every type here is immutable after construction so it can be shared by
worker processes without copying concerns. The module also defines the
exception hierarchy used by the rest of the package.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from global_constants import (
    APPEARANCE_LOCATION,
    APPEARANCE_ONLY,
    APPEARANCE_RANK,
    DEFAULT_ANN_K,
    DEFAULT_DENOM_GUARD,
    DEFAULT_LAMBDA,
    DEFAULT_MEASURE,
    DEFAULT_PATCH_SIZE,
    DEFAULT_RADIUS_SCALING,
    DEFAULT_RANK_RADIUS,
    DEFAULT_SCALE_MAX,
    DEFAULT_SCALE_MIN,
    DEFAULT_SCALE_STEP,
    DISTANCE_MODES,
    MEASURE_NAMES,
    RADIUS_SCALINGS,
    SCALE_DECIMALS,
)


class SdsError(Exception):
    """Root of all errors raised by sdsmatch."""


class BoundsError(SdsError, ValueError):
    """A window reaches outside its host image."""


class SizeError(SdsError, ValueError):
    """An input is too small or two inputs have incompatible sizes."""


class AlignmentError(SdsError, ValueError):
    """A window does not sit on the target patch grid."""


class ParameterError(SdsError, ValueError):
    """A parameter value is outside its admissible range."""


class ConfigError(SdsError, ValueError):
    """A configuration value or file is invalid."""


class EmptyResultError(SdsError, ValueError):
    """No candidate window fits the target image."""


class FeatureTypeError(SdsError, TypeError):
    """Feature vectors or channels do not have the expected shape."""


class BenchmarkError(SdsError, RuntimeError):
    """Too many benchmark pairs could not be evaluated."""


# Default nearest-neighbour distance per measure
MEASURE_DISTANCE_MODES = {
    "sds": APPEARANCE_RANK,
    "nsds": APPEARANCE_RANK,
    "dis": APPEARANCE_RANK,
    "bbs": APPEARANCE_LOCATION,
    "ddis": APPEARANCE_ONLY,
    "sddis": APPEARANCE_ONLY,
    "ssd": APPEARANCE_ONLY,
    "sad": APPEARANCE_ONLY,
}


@dataclass(frozen=True)
class Image:
    """
    H x W x C pixel array with values normalised to [0, 1].

    Args:
        data: array of shape (H, W) or (H, W, C) with C in {1, 3}
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise FeatureTypeError(
                f"Image must have 1 or 3 channels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise SizeError(f"Image has empty extent: {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("Image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ParameterError("Image values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[2]

    def digest(self):
        """Return a hex digest of the pixel content (cache keys)."""
        h = hashlib.sha256()
        h.update(np.asarray(self.data.shape, dtype=np.int64).tobytes())
        h.update(self.data.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class Window:
    """Axis-aligned integer rectangle: top-left (x, y), extent (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.w <= 0 or self.h <= 0:
            raise ParameterError(
                f"Window extent must be positive, got {self.w}x{self.h}")

    @property
    def area(self):
        return self.w * self.h

    @property
    def right(self):
        return self.x + self.w

    @property
    def bottom(self):
        return self.y + self.h

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def inside(self, width, height):
        """Return True if the window lies fully inside width x height."""
        return (self.x >= 0 and self.y >= 0 and
                self.right <= width and self.bottom <= height)

    def offset(self, dx, dy):
        """Return this window shifted by (dx, dy)."""
        return Window(self.x + dx, self.y + dy, self.w, self.h)

    def intersection_area(self, other):
        ix = max(0, min(self.right, other.right) - max(self.x, other.x))
        iy = max(0, min(self.bottom, other.bottom) - max(self.y, other.y))
        return ix * iy

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h)


def _scale_values(start, stop, step):
    if step <= 0:
        raise ConfigError(f"Scale step must be positive, got {step}")
    if stop < start:
        raise ConfigError(f"Scale range is empty: {start}..{stop}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, SCALE_DECIMALS)
                 for i in range(count))


@dataclass(frozen=True)
class ScaleGrid:
    """
    Candidate scale factors per axis plus the sliding stride.

    With tied_axes the grid only visits sx == sy, taking values from
    sx_values.
    """

    sx_values: Tuple[float, ...]
    sy_values: Tuple[float, ...]
    spatial_stride: int = DEFAULT_PATCH_SIZE
    tied_axes: bool = False

    def __post_init__(self):
        sx = tuple(float(v) for v in self.sx_values)
        sy = tuple(float(v) for v in self.sy_values)
        for name, values in (("sx_values", sx), ("sy_values", sy)):
            if not values:
                raise ConfigError(f"{name} must not be empty")
            if any(v <= 0 for v in values):
                raise ConfigError(f"{name} must be positive: {values}")
            if list(values) != sorted(values):
                raise ConfigError(f"{name} must be sorted ascending")
        if int(self.spatial_stride) < 1:
            raise ConfigError("spatial_stride must be >= 1")
        object.__setattr__(self, "sx_values", sx)
        object.__setattr__(self, "sy_values", sy)
        object.__setattr__(self, "spatial_stride", int(self.spatial_stride))

    @classmethod
    def from_range(cls, scale_min=DEFAULT_SCALE_MIN,
                   scale_max=DEFAULT_SCALE_MAX, scale_step=DEFAULT_SCALE_STEP,
                   stride=DEFAULT_PATCH_SIZE, tied_axes=False):
        """Build a grid sweeping [scale_min, scale_max] on both axes."""
        values = _scale_values(scale_min, scale_max, scale_step)
        return cls(values, values, stride, tied_axes)

    @classmethod
    def fixed(cls, stride=DEFAULT_PATCH_SIZE):
        """Single-scale grid {1.0} used by the fixed-scale measures."""
        return cls((1.0,), (1.0,), stride, False)

    def scale_pairs(self):
        """
        Return the (sx, sy) pairs in scan order.

        Returns:
            list: sx outer, sy inner; the diagonal only with tied axes
        """
        if self.tied_axes:
            return [(s, s) for s in self.sx_values]
        return [(sx, sy) for sx in self.sx_values for sy in self.sy_values]

    def to_dict(self):
        return {
            "sx_values": list(self.sx_values),
            "sy_values": list(self.sy_values),
            "spatial_stride": self.spatial_stride,
            "tied_axes": self.tied_axes,
        }


@dataclass(frozen=True)
class MatchConfig:
    """
    Matching parameters.

    Args:
        patch_size: side p of the square non-overlapped patches
        lam: weight of the rank / location term in the patch distance
        rank_radius: radius r of the circle used for appearance ranks
        ann_k: neighbour count k of the target-side ANN sets
        measure: one of MEASURE_NAMES
        distance_mode: patch distance; None selects the measure default
        denom_guard: positive constant added to the SDS denominator
        radius_scaling: how the SDS radius term scales the template side,
                        one of RADIUS_SCALINGS
        ddis_weighting: apply the DDIS deformation / diversity weighting
    """

    patch_size: int = DEFAULT_PATCH_SIZE
    lam: float = DEFAULT_LAMBDA
    rank_radius: int = DEFAULT_RANK_RADIUS
    ann_k: int = DEFAULT_ANN_K
    measure: str = DEFAULT_MEASURE
    distance_mode: Optional[str] = None
    denom_guard: float = DEFAULT_DENOM_GUARD
    radius_scaling: str = DEFAULT_RADIUS_SCALING
    ddis_weighting: bool = True

    def __post_init__(self):
        if int(self.patch_size) < 1:
            raise ConfigError("patch_size must be >= 1")
        if int(self.rank_radius) < 1:
            raise ConfigError("rank_radius must be >= 1")
        if int(self.ann_k) < 1:
            raise ConfigError("ann_k must be >= 1")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError("lam must be a finite value >= 0")
        if not np.isfinite(self.denom_guard) or self.denom_guard <= 0:
            raise ConfigError("denom_guard must be > 0")
        measure = str(self.measure).lower()
        if measure not in MEASURE_NAMES:
            raise ConfigError(f"Unknown measure: {self.measure}. "
                              f"Available: {list(MEASURE_NAMES)}")
        if (self.distance_mode is not None and
                self.distance_mode not in DISTANCE_MODES):
            raise ConfigError(f"Unknown distance_mode: {self.distance_mode}")
        if self.radius_scaling not in RADIUS_SCALINGS:
            raise ConfigError(
                f"Unknown radius_scaling: {self.radius_scaling}. "
                f"Available: {list(RADIUS_SCALINGS)}")
        object.__setattr__(self, "measure", measure)
        object.__setattr__(self, "patch_size", int(self.patch_size))
        object.__setattr__(self, "rank_radius", int(self.rank_radius))
        object.__setattr__(self, "ann_k", int(self.ann_k))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "denom_guard", float(self.denom_guard))

    @property
    def resolved_distance_mode(self):
        """Distance mode in effect: explicit value or measure default."""
        if self.distance_mode is not None:
            return self.distance_mode
        return MEASURE_DISTANCE_MODES[self.measure]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return {f.name: getattr(self, f.name)
                for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, values):
        """
        Build a config from a mapping, rejecting unknown keys.

        Raises:
            ConfigError: on unknown keys or invalid values
        """
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        try:
            return cls(**values)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e

    def digest(self):
        """Stable hash over every field (cache keys)."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def crop(img, win):
    """
    Return the sub-image covered by win.

    Raises:
        BoundsError: if win is not fully inside img
    """
    if not win.inside(img.width, img.height):
        raise BoundsError(
            f"Window {win.as_tuple()} outside {img.width}x{img.height} image")
    return Image(img.data[win.y:win.bottom, win.x:win.right, :])


def to_intensity(img):
    """Return a 1-channel image; RGB is reduced by the unweighted mean."""
    if img.channels == 1:
        return img
    return Image(img.data.mean(axis=2, keepdims=True))
