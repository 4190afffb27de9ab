"""Training-time augmentations.

Object-aware mask perturbation (kernel radius scales with object size),
simulated user strokes, and joint photometric/geometric augmentation that
applies one transform to every layer of a sample so pairing invariants
survive.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .annotate import CounterfactualPair
from .imaging import morphology
from .synth import CompositeSample


@dataclass(frozen=True)
class AugmentConfig:
    morph_scale: float = 0.1          # kernel radius = round(morph_scale * sqrt(area))
    flip_prob: float = 0.5
    crop_fraction: tuple[float, float] = (0.8, 1.0)
    color_jitter: float = 0.05        # additive per-channel offset amplitude
    stroke_width: tuple[int, int] = (2, 4)

    def __post_init__(self):
        if self.morph_scale < 0:
            raise ValueError("morph_scale must be >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")
        lo, hi = self.crop_fraction
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError("crop_fraction must satisfy 0 < lo <= hi <= 1")
        if self.color_jitter < 0:
            raise ValueError("color_jitter must be >= 0")


def object_aware_morph(mask: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Dilate or erode (equal odds) with a radius adapted to the object size.

    radius = max(1, round(morph_scale * sqrt(area))).  An erosion that would
    wipe the mask out falls back to the original.
    """
    area = float(np.sum(mask))
    if area == 0:
        raise ValueError("mask is empty")
    radius = max(1, round(cfg.morph_scale * math.sqrt(area)))
    mode = "dilate" if rng.random() < 0.5 else "erode"
    out = morphology(mask, radius, mode)
    if mode == "erode" and out.sum() == 0:
        return mask.copy()
    return out


def _rasterize_polyline(points, shape, width: int) -> np.ndarray:
    """Mark pixels along consecutive segments, then thicken by dilation."""
    stroke = np.zeros(shape)
    for (r0, c0), (r1, c1) in zip(points[:-1], points[1:]):
        steps = int(max(abs(r1 - r0), abs(c1 - c0))) * 2 + 1
        t = np.linspace(0.0, 1.0, steps)
        rr = np.clip(np.rint(r0 + t * (r1 - r0)).astype(int), 0, shape[0] - 1)
        cc = np.clip(np.rint(c0 + t * (c1 - c0)).astype(int), 0, shape[1] - 1)
        stroke[rr, cc] = 1.0
    if width > 1:
        stroke = morphology(stroke, width // 2, "dilate")
    return stroke


def simulate_stroke(object_mask: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """A user-scribble stand-in for the object mask.

    A 3-6 point polyline sampled inside the object, rasterized at a random
    stroke width, accepted when it covers 20-150% of the object area.  After
    50 failed draws falls back to object_aware_morph.
    """
    area = float(np.sum(object_mask))
    if area == 0:
        raise ValueError("object mask is empty")
    rows, cols = np.nonzero(object_mask)
    for _ in range(50):
        n_pts = int(rng.integers(3, 7))
        idx = rng.integers(0, rows.size, size=n_pts)
        points = list(zip(rows[idx].tolist(), cols[idx].tolist()))
        width = int(rng.integers(cfg.stroke_width[0], cfg.stroke_width[1] + 1))
        stroke = _rasterize_polyline(points, object_mask.shape, width)
        cover = stroke.sum() / area
        if 0.2 <= cover <= 1.5:
            return stroke
    return object_aware_morph(object_mask, cfg, rng)


def _transform_planes(planes, top, left, ch, cw, flip: bool):
    out = []
    for p in planes:
        q = p[top : top + ch, left : left + cw]
        if flip:
            q = q[:, ::-1]
        out.append(np.ascontiguousarray(q))
    return out


def sample_augment(sample, cfg: AugmentConfig, rng):
    """Crop + flip + color-offset a sample, same transform on every layer.

    Accepts a CompositeSample or a CounterfactualPair and returns the same
    type.  The crop window must keep at least half of the object-effect
    area (object area for bare pairs); after 50 rejected draws a center
    crop is used.  The color offset shifts images only, identically, so
    input == ground truth still holds outside the (cropped) mask.
    """
    if isinstance(sample, CompositeSample):
        images = [sample.composite, sample.ground_truth]
        masks = [sample.object_mask, sample.object_effect_mask]
        anchor = sample.object_effect_mask
    elif isinstance(sample, CounterfactualPair):
        images = [sample.input, sample.ground_truth]
        masks = [sample.object_mask]
        anchor = sample.object_mask
    else:
        raise TypeError(f"cannot augment {type(sample).__name__}")

    h, w = anchor.shape
    frac = float(rng.uniform(*cfg.crop_fraction))
    ch = max(1, round(h * frac))
    cw = max(1, round(w * frac))

    need = 0.5 * anchor.sum()
    top, left = (h - ch) // 2, (w - cw) // 2  # center fallback
    for _ in range(50):
        r = int(rng.integers(0, h - ch + 1))
        c = int(rng.integers(0, w - cw + 1))
        if anchor[r : r + ch, c : c + cw].sum() >= need:
            top, left = r, c
            break

    flip = rng.random() < cfg.flip_prob
    offset = rng.uniform(-cfg.color_jitter, cfg.color_jitter, size=3)

    images = _transform_planes(images, top, left, ch, cw, flip)
    masks = _transform_planes(masks, top, left, ch, cw, flip)
    images = [np.clip(img + offset[None, None, :], 0.0, 1.0) for img in images]

    if isinstance(sample, CompositeSample):
        return replace(
            sample,
            composite=images[0],
            ground_truth=images[1],
            object_mask=masks[0],
            object_effect_mask=masks[1],
        )
    return CounterfactualPair(
        input=images[0], ground_truth=images[1], object_mask=masks[0]
    )
