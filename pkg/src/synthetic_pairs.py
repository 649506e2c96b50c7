#!/usr/bin/env python3
"""
Synthetic benchmark pairs with known ground truth.

A template is scaled, rotated (nearest-neighbour resampling) and pasted
into a background at a random position. The ground-truth box is the tight
box of the pasted pixels. Optional occlusion covers a vertical strip of
the pasted region with a flat colour; optional Gaussian noise is added to
the whole target.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.ndimage import gaussian_filter

from benchmark import BenchPair, format_tag, write_annotations
from global_constants import (
    ANNOTATION_FILE_NAME,
    DEFAULT_PATCH_SIZE,
    SYNTH_ANGLES_DEG,
    SYNTH_BACKGROUND_SIZE,
    SYNTH_BACKGROUNDS,
    SYNTH_NOISE_SIGMA,
    SYNTH_OCCLUSIONS,
    SYNTH_REFERENCE_SIZE,
    SYNTH_SCALES,
    SYNTH_TEMPLATE_SIZE,
    SYNTH_TEMPLATES,
    SYNTH_TEXTURE_SMOOTHING,
)
from image_core import Image, ParameterError, Window, crop
from image_io import save_image

logger = logging.getLogger(__name__)

# cos / sin below this are treated as exact zeros (right angles)
_TRIG_EPS = 1e-12


@dataclass(frozen=True)
class SyntheticPair:
    """Generated target image with its ground truth and parameters."""

    target: Image
    gt_box: Window
    tags: Dict[str, str]

    def bench_pair(self, pair_id, ref_path, template_box, target_path):
        """BenchPair for this target once its images are on disk."""
        return BenchPair(pair_id=pair_id, ref_path=ref_path,
                         template_box=template_box, target_path=target_path,
                         gt_box=self.gt_box, tags=dict(self.tags))


def smooth_texture(rng, height, width, channels=3,
                   sigma=SYNTH_TEXTURE_SMOOTHING):
    """Gaussian-smoothed white noise stretched to [0, 1] per channel."""
    noise = rng.random((height, width, channels))
    out = np.empty_like(noise)
    for c in range(channels):
        layer = gaussian_filter(noise[:, :, c], sigma=sigma, mode="reflect")
        lo, hi = layer.min(), layer.max()
        out[:, :, c] = (layer - lo) / (hi - lo) if hi > lo else 0.5
    return Image(out)


def _trig(theta_deg):
    theta = math.radians(theta_deg)
    c, s = math.cos(theta), math.sin(theta)
    c = 0.0 if abs(c) < _TRIG_EPS else c
    s = 0.0 if abs(s) < _TRIG_EPS else s
    return c, s


def transform_template(template, sx, sy, theta_deg):
    """
    Scale then rotate a template by inverse nearest-neighbour mapping.

    Returns:
        tuple: (pixels (h, w, C), mask (h, w)) of the transformed template
    """
    if sx <= 0 or sy <= 0:
        raise ParameterError(f"Scales must be positive: ({sx}, {sy})")
    h, w = template.height, template.width
    sw = max(1, int(round(sx * w)))
    sh = max(1, int(round(sy * h)))
    c, s = _trig(theta_deg)
    out_w = max(1, int(round(abs(sw * c) + abs(sh * s))))
    out_h = max(1, int(round(abs(sw * s) + abs(sh * c))))

    v, u = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    dx = u + 0.5 - out_w / 2.0
    dy = v + 0.5 - out_h / 2.0
    xs = c * dx + s * dy + sw / 2.0
    ys = -s * dx + c * dy + sh / 2.0
    mask = (xs >= 0) & (xs < sw) & (ys >= 0) & (ys < sh)
    tx = np.clip(np.floor(xs * w / sw).astype(np.int64), 0, w - 1)
    ty = np.clip(np.floor(ys * h / sh).astype(np.int64), 0, h - 1)
    pixels = template.data[ty, tx, :]
    return pixels, mask


def _tight_box(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return Window(cols[0], rows[0], cols[-1] - cols[0] + 1,
                  rows[-1] - rows[0] + 1)


def transform_category(sx, sy, theta_deg):
    """Subset name of a transformation."""
    rotated = (theta_deg % 360.0) != 0.0
    scaled = not (sx == 1.0 and sy == 1.0)
    if rotated and scaled:
        return "rotation-scaling"
    if rotated:
        return "rotation"
    if scaled:
        return "scaling"
    return "identity"


def generate_synthetic_pair(bg, template, sx, sy, theta_deg,
                            occlusion_frac=0.0, noise_sigma=0.0, seed=0,
                            align=1):
    """
    Paste a transformed template into a background.

    Args:
        bg: background Image (channels must match the template)
        template: template Image
        sx, sy: scale factors
        theta_deg: rotation in degrees (counter-clockwise)
        occlusion_frac: fraction of the pasted box width to occlude
        noise_sigma: standard deviation of additive pixel noise
        seed: random seed (paste position, occluder, noise)
        align: paste coordinates are multiples of align

    Returns:
        SyntheticPair

    Raises:
        ParameterError: if the transformed template does not fit
    """
    if bg.channels != template.channels:
        raise ParameterError("Background and template channels differ")
    if not 0.0 <= occlusion_frac < 1.0:
        raise ParameterError("occlusion_frac must lie in [0, 1)")
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    pixels, mask = transform_template(template, sx, sy, theta_deg)
    ph, pw = mask.shape
    if pw > bg.width or ph > bg.height:
        raise ParameterError(
            f"Transformed template {pw}x{ph} does not fit the "
            f"{bg.width}x{bg.height} background")

    rng = np.random.default_rng(seed)
    x0 = align * int(rng.integers(0, (bg.width - pw) // align + 1))
    y0 = align * int(rng.integers(0, (bg.height - ph) // align + 1))
    data = np.array(bg.data)
    region = data[y0:y0 + ph, x0:x0 + pw]
    region[mask] = pixels[mask]
    box = _tight_box(mask).offset(x0, y0)

    if occlusion_frac > 0:
        strip = max(1, int(round(occlusion_frac * box.w)))
        colour = rng.random(bg.channels)
        start = box.x if rng.random() < 0.5 else box.right - strip
        data[box.y:box.bottom, start:start + strip] = colour
    if noise_sigma > 0:
        data = np.clip(data + rng.normal(0.0, noise_sigma, data.shape),
                       0.0, 1.0)

    tags = {
        "category": transform_category(sx, sy, theta_deg),
        "theta": f"{theta_deg:g}",
        "sx": f"{sx:g}",
        "sy": f"{sy:g}",
        "occlusion": f"{occlusion_frac:g}",
        "noise": f"{noise_sigma:g}",
    }
    logger.debug("Synthetic pair %s at %s", format_tag(tags), box.as_tuple())
    return SyntheticPair(target=Image(data), gt_box=box, tags=tags)


def suite_parameters():
    """(background, template, theta, scale, occlusion) in suite order."""
    return [(b, t, theta, scale, occ)
            for b in range(SYNTH_BACKGROUNDS)
            for t in range(SYNTH_TEMPLATES)
            for theta in SYNTH_ANGLES_DEG
            for scale in SYNTH_SCALES
            for occ in SYNTH_OCCLUSIONS]


def synthetic_suite(out_dir, count=None, seed=0,
                    noise_sigma=SYNTH_NOISE_SIGMA):
    """
    Write the synthetic benchmark suite with its annotation CSV.

    References are smooth textures with the template box in the middle;
    targets paste the transformed template into separate backgrounds.
    With count larger than the parameter table the table is repeated with
    fresh pair seeds.

    Returns:
        list of BenchPair (also written to out_dir/pairs.csv)
    """
    params = suite_parameters()
    count = len(params) if count is None else int(count)
    if count < 1:
        raise ParameterError("count must be >= 1")
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)

    root = np.random.SeedSequence(seed)
    bg_seeds, ref_seeds, pair_seeds = root.spawn(3)
    backgrounds = [smooth_texture(np.random.default_rng(s),
                                  SYNTH_BACKGROUND_SIZE,
                                  SYNTH_BACKGROUND_SIZE)
                   for s in bg_seeds.spawn(SYNTH_BACKGROUNDS)]
    offset = (SYNTH_REFERENCE_SIZE - SYNTH_TEMPLATE_SIZE) // 2
    template_box = Window(offset, offset, SYNTH_TEMPLATE_SIZE,
                          SYNTH_TEMPLATE_SIZE)
    ref_paths = []
    templates = []
    for t, s in enumerate(ref_seeds.spawn(SYNTH_TEMPLATES)):
        reference = smooth_texture(np.random.default_rng(s),
                                   SYNTH_REFERENCE_SIZE,
                                   SYNTH_REFERENCE_SIZE)
        path = os.path.join(image_dir, f"ref_{t:02d}.png")
        save_image(path, reference)
        ref_paths.append(path)
        templates.append(crop(reference, template_box))

    pairs = []
    for i, pair_seed in enumerate(pair_seeds.spawn(count)):
        b, t, theta, scale, occ = params[i % len(params)]
        synthetic = generate_synthetic_pair(
            backgrounds[b], templates[t], scale, scale, theta, occ,
            noise_sigma, pair_seed, align=DEFAULT_PATCH_SIZE)
        # Stored images are 8-bit; the box is unaffected by quantisation
        target_path = os.path.join(image_dir, f"target_{i:04d}.png")
        save_image(target_path, synthetic.target)
        pairs.append(synthetic.bench_pair(f"synth{i:04d}", ref_paths[t],
                                          template_box, target_path))
    write_annotations(os.path.join(out_dir, ANNOTATION_FILE_NAME), pairs)
    logger.info("Wrote %d synthetic pairs to %s", len(pairs), out_dir)
    return pairs
