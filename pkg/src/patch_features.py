#!/usr/bin/env python3
"""
Patch features for sdsmatch.

Splits images into non-overlapped p x p patches and attaches three feature
vectors to every patch:
- appearance (A): the concatenated pixel values
- location (L): the patch centre normalised to [0, 1] within the set
- rank (R): the per-pixel appearance ranks inside a circle of radius r

Rank features only depend on the ordering of intensities, which makes them
unaffected by rotation and by monotone intensity changes.
"""

import functools
import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from global_constants import (
    APPEARANCE_LOCATION,
    APPEARANCE_ONLY,
    APPEARANCE_RANK,
)
from image_core import (
    AlignmentError,
    BoundsError,
    ConfigError,
    FeatureTypeError,
    ParameterError,
    SizeError,
    to_intensity,
)


@dataclass(frozen=True)
class Patch:
    """Feature vectors of a single patch."""

    appearance: np.ndarray
    location: np.ndarray
    rank: np.ndarray


@functools.lru_cache(maxsize=8)
def circle_offsets(r):
    """
    Return the (dy, dx) offsets of the discrete circle of radius r.

    The circle holds every pixel at Euclidean distance <= r, centre included.
    """
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    mask = dx * dx + dy * dy <= r * r
    return np.stack([dy[mask], dx[mask]], axis=1)


def rank_map(intensity, r):
    """
    Per-pixel appearance rank inside a circle of radius r.

    Each value counts the circle pixels p (clipped to the image) with
    intensity(centre) >= intensity(p), divided by r**2. The centre always
    counts itself, so every value is >= 1 / r**2.

    Args:
        intensity: 1-channel Image
        r: circle radius in pixels (>= 1)

    Returns:
        np.ndarray: (H, W) float array

    Raises:
        FeatureTypeError: on multi-channel input
        ParameterError: if r < 1
    """
    if intensity.channels != 1:
        raise FeatureTypeError(
            f"rank_map needs a 1-channel image, got {intensity.channels}")
    if r < 1:
        raise ParameterError(f"Rank radius must be >= 1, got {r}")
    return _rank_values(intensity.data[:, :, 0], r)


def _rank_values(values, r):
    h, w = values.shape
    # +inf outside the block never satisfies centre >= neighbour
    padded = np.pad(values, r, mode="constant", constant_values=np.inf)
    counts = np.zeros((h, w), dtype=np.float64)
    for dy, dx in circle_offsets(r):
        shifted = padded[r + dy:r + dy + h, r + dx:r + dx + w]
        counts += values >= shifted
    return counts / float(r * r)


def _rank_rows(ranks, p):
    gh, gw = ranks.shape[0] // p, ranks.shape[1] // p
    return ranks[:gh * p, :gw * p].reshape(gh, p, gw, p) \
        .transpose(0, 2, 1, 3).reshape(gh * gw, p * p)


@dataclass(frozen=True)
class PatchSet:
    """
    Grid of patches with per-patch feature rows in row-major grid order.

    Args:
        width, height: source extent in pixels (point count for point sets)
        patch_size: side p of every patch
        grid_w, grid_h: patch grid extents
        appearance: (n, p*p*C) appearance rows
        location: (n, d) normalised locations
        rank: (n, p*p) rank rows
        positions: (n, 2) grid coordinates (gx, gy) used for polar radii
        global_index: row indices into the parent set for window subsets
        intensity: optional (grid_h*p, grid_w*p) intensity pixels; when set,
                   windows rank their pixels with circles clipped at the
                   window border, as a cropped template does
        rank_radius: circle radius used with intensity
    """

    width: int
    height: int
    patch_size: int
    grid_w: int
    grid_h: int
    appearance: np.ndarray
    location: np.ndarray
    rank: np.ndarray
    positions: np.ndarray
    global_index: Optional[np.ndarray] = None
    intensity: Optional[np.ndarray] = None
    rank_radius: int = 0

    def __post_init__(self):
        for name in ("appearance", "location", "rank", "positions"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, np.newaxis]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.appearance.shape[0]
        if n < 1:
            raise SizeError("PatchSet must hold at least one patch")
        for name in ("location", "rank", "positions"):
            if getattr(self, name).shape[0] != n:
                raise FeatureTypeError(f"{name} rows do not match patches")
        if self.global_index is not None:
            idx = np.array(self.global_index, dtype=np.int64)
            idx.setflags(write=False)
            object.__setattr__(self, "global_index", idx)
        if self.intensity is not None:
            pixels = np.array(self.intensity, dtype=np.float64)
            if pixels.shape != (self.grid_h * self.patch_size,
                                self.grid_w * self.patch_size):
                raise FeatureTypeError("intensity does not cover the grid")
            if self.rank_radius < 1:
                raise ParameterError("rank_radius must be >= 1")
            pixels.setflags(write=False)
            object.__setattr__(self, "intensity", pixels)

    @property
    def n(self):
        return self.appearance.shape[0]

    @property
    def pole(self):
        """Geometric centre of the patch positions."""
        return self.positions.mean(axis=0)

    @property
    def radii(self):
        """Polar radius of every patch about the pole."""
        delta = self.positions - self.pole
        return np.sqrt(np.sum(delta * delta, axis=1))

    def patch(self, i):
        return Patch(self.appearance[i], self.location[i], self.rank[i])

    def feature_matrix(self, mode, lam):
        """
        Stack features so that squared Euclidean distance between rows
        equals the patch distance of the given mode.

        Raises:
            ConfigError: on an unknown mode
        """
        if mode == APPEARANCE_ONLY:
            return self.appearance
        weight = np.sqrt(lam)
        if mode == APPEARANCE_RANK:
            return np.hstack([self.appearance, weight * self.rank])
        if mode == APPEARANCE_LOCATION:
            return np.hstack([self.appearance, weight * self.location])
        raise ConfigError(f"Unknown distance mode: {mode}")

    def window(self, gx, gy, gw, gh):
        """
        Return the sub-grid patch set starting at grid cell (gx, gy).

        Locations are renormalised within the window and appearance rows are
        shared with this set. Rank rows are shared too, unless this set
        holds intensity pixels; then they are recomputed on the window
        block. The result records its rows in this set as global_index.

        Raises:
            BoundsError: if the sub-grid leaves this grid
        """
        if (gx < 0 or gy < 0 or gw < 1 or gh < 1 or
                gx + gw > self.grid_w or gy + gh > self.grid_h):
            raise BoundsError(
                f"Grid window ({gx}, {gy}, {gw}, {gh}) outside "
                f"{self.grid_w}x{self.grid_h} grid")
        rows = ((gy + np.arange(gh))[:, np.newaxis] * self.grid_w +
                (gx + np.arange(gw))[np.newaxis, :]).ravel()
        global_rows = rows if self.global_index is None else \
            self.global_index[rows]
        p = self.patch_size
        if self.intensity is None:
            rank = self.rank[rows]
        else:
            block = self.intensity[gy * p:(gy + gh) * p,
                                   gx * p:(gx + gw) * p]
            rank = _rank_rows(_rank_values(block, self.rank_radius), p)
        return PatchSet(
            width=gw * p,
            height=gh * p,
            patch_size=p,
            grid_w=gw,
            grid_h=gh,
            appearance=self.appearance[rows],
            location=grid_locations(gw, gh),
            rank=rank,
            positions=grid_positions(gw, gh),
            global_index=global_rows,
        )

    def pixel_window(self, win):
        """
        Return the patch subset covered by a pixel window.

        Raises:
            AlignmentError: if win is not aligned to the patch grid
        """
        p = self.patch_size
        if win.x % p or win.y % p or win.w % p or win.h % p:
            raise AlignmentError(
                f"Window {win.as_tuple()} not aligned to {p}px patch grid")
        return self.window(win.x // p, win.y // p, win.w // p, win.h // p)

    def digest(self):
        h = hashlib.sha256()
        for arr in (self.appearance, self.location, self.rank,
                    self.positions):
            h.update(np.asarray(arr.shape, dtype=np.int64).tobytes())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@functools.lru_cache(maxsize=256)
def grid_positions(grid_w, grid_h):
    """(gx, gy) coordinates of a grid in row-major order (read-only)."""
    gy, gx = np.divmod(np.arange(grid_w * grid_h), grid_w)
    pos = np.stack([gx, gy], axis=1).astype(np.float64)
    pos.setflags(write=False)
    return pos


@functools.lru_cache(maxsize=256)
def grid_locations(grid_w, grid_h):
    """Patch centres of a grid normalised to [0, 1] (read-only)."""
    pos = grid_positions(grid_w, grid_h)
    loc = np.stack([(pos[:, 0] + 0.5) / grid_w,
                    (pos[:, 1] + 0.5) / grid_h], axis=1)
    loc.setflags(write=False)
    return loc


def patchify(img, p, r, window_ranks=False):
    """
    Split an image into non-overlapped p x p patches.

    Trailing rows and columns beyond the last full patch are dropped. Ranks
    are computed on the intensity of the whole image.

    Args:
        img: source Image
        p: patch size in pixels
        r: rank radius in pixels
        window_ranks: keep the intensity so that windows of the set rank
                      their own pixels only

    Returns:
        PatchSet: grid_w = width // p, grid_h = height // p

    Raises:
        SizeError: if the image is smaller than one patch
    """
    if p < 1:
        raise ParameterError(f"Patch size must be >= 1, got {p}")
    if img.width < p or img.height < p:
        raise SizeError(
            f"Image {img.width}x{img.height} smaller than one {p}px patch")
    gw, gh = img.width // p, img.height // p
    c = img.channels
    data = img.data[:gh * p, :gw * p, :]
    appearance = data.reshape(gh, p, gw, p, c).transpose(0, 2, 1, 3, 4) \
        .reshape(gh * gw, p * p * c)
    intensity = to_intensity(img)
    rank = _rank_rows(rank_map(intensity, r), p)
    return PatchSet(
        width=img.width,
        height=img.height,
        patch_size=p,
        grid_w=gw,
        grid_h=gh,
        appearance=appearance,
        location=grid_locations(gw, gh),
        rank=rank,
        positions=grid_positions(gw, gh),
        intensity=(intensity.data[:gh * p, :gw * p, 0] if window_ranks
                   else None),
        rank_radius=r,
    )


def _check_lengths(a, b, second):
    if a.appearance.shape != b.appearance.shape:
        raise FeatureTypeError(
            f"Appearance lengths differ: {a.appearance.shape} vs "
            f"{b.appearance.shape}")
    if getattr(a, second).shape != getattr(b, second).shape:
        raise FeatureTypeError(f"{second} lengths differ")


def distance_al(a, b, lam):
    """Squared appearance distance plus lam times squared location distance."""
    _check_lengths(a, b, "location")
    da = np.asarray(a.appearance) - np.asarray(b.appearance)
    dl = np.asarray(a.location) - np.asarray(b.location)
    return float(np.dot(da, da) + lam * np.dot(dl, dl))


def distance_ar(a, b, lam):
    """Squared appearance distance plus lam times squared rank distance."""
    _check_lengths(a, b, "rank")
    da = np.asarray(a.appearance) - np.asarray(b.appearance)
    dr = np.asarray(a.rank) - np.asarray(b.rank)
    return float(np.dot(da, da) + lam * np.dot(dr, dr))


def patch_distance(a, b, mode, lam):
    """Dispatch to the distance of the given mode."""
    if mode == APPEARANCE_RANK:
        return distance_ar(a, b, lam)
    if mode == APPEARANCE_LOCATION:
        return distance_al(a, b, lam)
    if mode == APPEARANCE_ONLY:
        return distance_al(a, b, 0.0)
    raise ConfigError(f"Unknown distance mode: {mode}")
