"""Counterfactual pair annotation.

Given a before/after image pair of the same scene and the object mask, this
module derives the object-effect mask from the pixel difference, splits off
the effect-only mask, extracts a per-channel alpha layer for the foreground
(object plus its shadow/reflection), and estimates a coarse light direction
so extracted foregrounds can later be composed consistently.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoEffectError
from .imaging import as_float_array, morphology, require_binary

DEFAULT_DIFF_THRESHOLD = 0.05  # ~13/255
DEFAULT_EPSILON = 1e-6
N_DIRECTION_BINS = 8


@dataclass(frozen=True)
class CounterfactualPair:
    """Same scene with and without the object, plus the object mask."""

    input: np.ndarray         # (H, W, 3) with the object
    ground_truth: np.ndarray  # (H, W, 3) without the object
    object_mask: np.ndarray   # (H, W) binary

    def __post_init__(self):
        inp = as_float_array(self.input, "input")
        gt = as_float_array(self.ground_truth, "ground_truth")
        obj = require_binary(self.object_mask, "object_mask")
        if inp.shape != gt.shape:
            raise ValueError(f"input {inp.shape} != ground_truth {gt.shape}")
        if inp.ndim != 3 or inp.shape[2] != 3:
            raise ValueError(f"images must be (H, W, 3), got {inp.shape}")
        if obj.shape != inp.shape[:2]:
            raise ValueError(f"object_mask {obj.shape} != image {inp.shape[:2]}")
        object.__setattr__(self, "input", inp)
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "object_mask", obj)

    @property
    def shape(self):
        return self.object_mask.shape


@dataclass(frozen=True)
class AnnotationSet:
    """Masks derived from one pair: object, effect-only, and their union."""

    object_mask: np.ndarray
    effect_mask: np.ndarray
    object_effect_mask: np.ndarray
    threshold_used: float

    def __post_init__(self):
        m_o = require_binary(self.object_mask, "object_mask")
        m_e = require_binary(self.effect_mask, "effect_mask")
        m_fg = require_binary(self.object_effect_mask, "object_effect_mask")
        if not (m_o.shape == m_e.shape == m_fg.shape):
            raise ValueError("annotation masks must share one shape")
        if np.any(m_o * m_e != 0.0):
            raise ValueError("object and effect masks must be disjoint")
        if np.any(np.maximum(m_o, m_e) != m_fg):
            raise ValueError("object_effect_mask must be the union of the parts")


@dataclass(frozen=True)
class ForegroundAsset:
    """Extracted object layer reusable for compositing.

    ``alpha`` is per-channel in [-1, 1]: exactly 1 on the object, exactly 0
    outside the object-effect region, and the relative darkening (or
    brightening, negative) inside the effect region.  ``color`` holds the
    object pixels and is 0 elsewhere, so blending reduces to pure background
    attenuation in the effect region.
    """

    color: np.ndarray        # (H, W, 3)
    alpha: np.ndarray        # (H, W, 3) in [-1, 1]
    object_mask: np.ndarray  # (H, W) binary
    effect_mask: np.ndarray  # (H, W) binary
    direction_bin: int       # 0..7, counterclockwise from east
    asset_id: str = field(default="")

    def __post_init__(self):
        color = as_float_array(self.color, "color")
        alpha = as_float_array(self.alpha, "alpha")
        m_o = require_binary(self.object_mask, "object_mask")
        m_e = require_binary(self.effect_mask, "effect_mask")
        if color.shape != alpha.shape or color.shape[:2] != m_o.shape:
            raise ValueError("asset layer shapes are inconsistent")
        if np.abs(alpha).max() > 1.0:
            raise ValueError("alpha must lie in [-1, 1]")
        if not 0 <= self.direction_bin < N_DIRECTION_BINS:
            raise ValueError(f"direction_bin must be in 0..7, got {self.direction_bin}")
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "object_mask", m_o)
        object.__setattr__(self, "effect_mask", m_e)

    @property
    def object_effect_mask(self) -> np.ndarray:
        return np.maximum(self.object_mask, self.effect_mask)

    @property
    def shape(self):
        return self.object_mask.shape


def diff_mask(pair: CounterfactualPair, threshold: float = DEFAULT_DIFF_THRESHOLD) -> np.ndarray:
    """Object-effect mask from the pixel-wise difference of the pair.

    A pixel is foreground when the max-channel absolute difference exceeds
    ``threshold``.  A radius-1 morphological closing then suppresses
    single-pixel sensor noise, and the object region is force-included.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    delta = np.abs(pair.input - pair.ground_truth).max(axis=2)
    raw = (delta > threshold).astype(np.float64)
    closed = morphology(morphology(raw, 1, "dilate"), 1, "erode")
    return np.maximum(closed, pair.object_mask)


def derive_effect_mask(object_effect_mask: np.ndarray, object_mask: np.ndarray) -> np.ndarray:
    """Effect-only mask: the object-effect region minus the object itself."""
    m_fg = require_binary(object_effect_mask, "object_effect_mask")
    m_o = require_binary(object_mask, "object_mask")
    if m_fg.shape != m_o.shape:
        raise ValueError(f"mask shapes differ: {m_fg.shape} vs {m_o.shape}")
    return m_fg * (1.0 - m_o)


def estimate_shadow_direction(object_mask: np.ndarray, effect_mask: np.ndarray) -> int:
    """Quantized direction from the object centroid to the effect centroid.

    Eight 45-degree bins, bin 0 centered on +x (east), counterclockwise.
    """
    m_o = require_binary(object_mask, "object_mask")
    m_e = require_binary(effect_mask, "effect_mask")
    if m_o.sum() == 0:
        raise ValueError("object mask is empty")
    if m_e.sum() == 0:
        raise NoEffectError("effect mask is empty; direction is undefined")

    def centroid(m):
        rows, cols = np.nonzero(m)
        return rows.mean(), cols.mean()

    ro, co = centroid(m_o)
    re, ce = centroid(m_e)
    dx = ce - co
    dy = -(re - ro)  # image rows grow downward; north is negative row
    angle = math.degrees(math.atan2(dy, dx))
    return int(math.floor((angle + 22.5) / 45.0)) % N_DIRECTION_BINS


def extract_alpha(
    pair: CounterfactualPair,
    annotations: AnnotationSet,
    epsilon: float = DEFAULT_EPSILON,
    direction_bin: int | None = None,
    asset_id: str = "",
) -> ForegroundAsset:
    """Per-channel alpha layer of the foreground object with its effects.

    alpha = 0 outside the object-effect region, 1 on the object, and
    (I_gt - I_in) / (I_gt + epsilon) in the effect region, clamped to
    [-1, 1].  The color layer keeps the input pixels on the object and is 0
    elsewhere.  ``direction_bin`` overrides the automatic estimate (needed
    when the effect mask is empty).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if annotations.object_mask.shape != pair.shape:
        raise ValueError("annotations do not match the pair size")

    m_o = annotations.object_mask[:, :, None]
    m_e = annotations.effect_mask[:, :, None]

    ratio = (pair.ground_truth - pair.input) / (pair.ground_truth + epsilon)
    alpha = m_o * 1.0 + m_e * np.clip(ratio, -1.0, 1.0)
    color = pair.input * m_o

    if direction_bin is None:
        direction_bin = estimate_shadow_direction(
            annotations.object_mask, annotations.effect_mask
        )
    return ForegroundAsset(
        color=color,
        alpha=alpha,
        object_mask=annotations.object_mask,
        effect_mask=annotations.effect_mask,
        direction_bin=direction_bin,
        asset_id=asset_id,
    )


def annotate_pair(
    pair: CounterfactualPair,
    threshold: float = DEFAULT_DIFF_THRESHOLD,
    epsilon: float = DEFAULT_EPSILON,
    direction_bin: int | None = None,
    asset_id: str = "",
) -> tuple[AnnotationSet, ForegroundAsset]:
    """Full annotation of one pair: masks plus the foreground asset."""
    m_fg = diff_mask(pair, threshold)
    m_e = derive_effect_mask(m_fg, pair.object_mask)
    annotations = AnnotationSet(
        object_mask=pair.object_mask,
        effect_mask=m_e,
        object_effect_mask=m_fg,
        threshold_used=threshold,
    )
    asset = extract_alpha(pair, annotations, epsilon, direction_bin, asset_id)
    return annotations, asset
