"""Composite training-pair synthesis.

Places extracted foreground assets (object + effect layers) onto background
scenes by per-channel alpha blending.  Placement is restricted to flat
regions, multi-object composites keep a single light direction, and the
whole dataset generation is a pure function of its seed.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .annotate import ForegroundAsset
from .errors import DirectionMismatchError, PlacementError
from .imaging import as_float_array, require_binary, resample

log = logging.getLogger(__name__)

DEFAULT_SCALE_RANGE = (0.5, 1.5)
MAX_PLACEMENT_ATTEMPTS = 100


@dataclass
class BackgroundScene:
    """A clean background plus the mask of pixels eligible for placement.

    ``depth`` and ``semantic_labels`` are precomputed maps ingested from
    files; ``select_placement`` turns them into ``flat_region``.
    """

    image: np.ndarray                       # (H, W, 3)
    flat_region: np.ndarray | None = None   # (H, W) binary
    depth: np.ndarray | None = None         # (H, W) nonnegative
    semantic_labels: np.ndarray | None = None  # (H, W) integer ids
    scene_id: str = ""

    def __post_init__(self):
        self.image = as_float_array(self.image, "image")
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {self.image.shape}")
        if self.flat_region is not None:
            self.flat_region = require_binary(self.flat_region, "flat_region")
            if self.flat_region.shape != self.image.shape[:2]:
                raise ValueError("flat_region size differs from image")

    @property
    def shape(self):
        return self.image.shape[:2]


class Provenance(NamedTuple):
    asset_id: str
    position: tuple[int, int]  # top-left (row, col)
    scale: float


@dataclass(frozen=True)
class CompositeSample:
    """A synthesized input/ground-truth pair with its union masks."""

    composite: np.ndarray           # (H, W, 3), backgrounds + blended assets
    ground_truth: np.ndarray        # (H, W, 3), the clean background
    object_mask: np.ndarray         # union of placed object masks
    object_effect_mask: np.ndarray  # union of placed object-effect masks
    provenance: tuple[Provenance, ...] = field(default=())

    def __post_init__(self):
        comp = as_float_array(self.composite, "composite")
        gt = as_float_array(self.ground_truth, "ground_truth")
        m_o = require_binary(self.object_mask, "object_mask")
        m_fg = require_binary(self.object_effect_mask, "object_effect_mask")
        if comp.shape != gt.shape or comp.shape[:2] != m_fg.shape or m_o.shape != m_fg.shape:
            raise ValueError("sample field shapes are inconsistent")
        outside = m_fg == 0.0
        if not np.array_equal(comp[outside], gt[outside]):
            raise ValueError("composite must equal ground truth outside the object-effect mask")
        object.__setattr__(self, "composite", comp)
        object.__setattr__(self, "ground_truth", gt)
        object.__setattr__(self, "object_mask", m_o)
        object.__setattr__(self, "object_effect_mask", m_fg)
        object.__setattr__(self, "provenance", tuple(self.provenance))


def select_placement(
    scene: BackgroundScene,
    flat_classes: set[int],
    depth_grad_threshold: float,
) -> np.ndarray:
    """Eligible-placement mask from semantic labels and depth gradients.

    A pixel qualifies when its label is one of ``flat_classes`` and the
    central-difference depth-gradient magnitude is at most the threshold.
    Falls back to a preset ``flat_region`` when the maps are absent.
    """
    if scene.semantic_labels is None or scene.depth is None:
        if scene.flat_region is not None:
            return scene.flat_region.copy()
        raise ValueError(
            "scene has neither (semantic_labels, depth) nor a preset flat_region"
        )
    labels = np.asarray(scene.semantic_labels)
    depth = as_float_array(scene.depth, "depth")
    if labels.shape != scene.shape or depth.shape != scene.shape:
        raise ValueError("semantic_labels/depth size differs from image")

    label_ok = np.isin(labels, sorted(flat_classes))

    h, w = depth.shape
    rows = np.arange(h)
    cols = np.arange(w)
    gx = (depth[:, np.minimum(cols + 1, w - 1)] - depth[:, np.maximum(cols - 1, 0)]) / 2.0
    gy = (depth[np.minimum(rows + 1, h - 1), :] - depth[np.maximum(rows - 1, 0), :]) / 2.0
    grad_ok = np.hypot(gx, gy) <= depth_grad_threshold

    return (label_ok & grad_ok).astype(np.float64)


class _Layers(NamedTuple):
    color: np.ndarray
    alpha: np.ndarray
    object_mask: np.ndarray
    effect_mask: np.ndarray
    fg_mask: np.ndarray


def _scaled_layers(asset: ForegroundAsset, scale: float) -> _Layers:
    """Asset layers resampled by ``scale`` (scale 1 passes through untouched)."""
    if not np.isfinite(scale) or scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    m_fg = asset.object_effect_mask
    if scale == 1.0:
        return _Layers(asset.color, asset.alpha, asset.object_mask, asset.effect_mask, m_fg)
    h, w = asset.shape
    nh = max(1, round(h * scale))
    nw = max(1, round(w * scale))
    color = resample(asset.color, nh, nw, "bilinear")
    alpha = resample(asset.alpha, nh, nw, "bilinear")
    m_o = (resample(asset.object_mask, nh, nw, "bilinear") >= 0.5).astype(np.float64)
    m_fg = (resample(m_fg, nh, nw, "bilinear") >= 0.5).astype(np.float64)
    # interpolation bleeds alpha past the mask edge; cut it so composites
    # stay bit-exact outside the pasted object-effect region
    alpha = alpha * m_fg[:, :, None]
    m_e = m_fg * (1.0 - m_o)
    return _Layers(color, alpha, m_o, m_e, m_fg)


def _check_placement(bg: BackgroundScene, layers: _Layers, position: tuple[int, int]) -> None:
    row, col = position
    ah, aw = layers.fg_mask.shape
    h, w = bg.shape
    if row < 0 or col < 0 or row + ah > h or col + aw > w:
        raise PlacementError(
            f"asset tile {ah}x{aw} at {position} exceeds the {h}x{w} background"
        )
    if bg.flat_region is None:
        raise ValueError("scene has no flat_region; run select_placement first")
    window = bg.flat_region[row : row + ah, col : col + aw]
    footprint = layers.object_mask == 1.0
    if not np.all(window[footprint] == 1.0):
        raise PlacementError(f"object footprint at {position} leaves the eligible region")


def _blend_into(composite, masks, layers: _Layers, position):
    row, col = position
    ah, aw = layers.fg_mask.shape
    m_o_union, m_fg_union = masks
    tile = composite[row : row + ah, col : col + aw]
    blended = (1.0 - layers.alpha) * tile + layers.alpha * layers.color
    composite[row : row + ah, col : col + aw] = np.clip(blended, 0.0, 1.0)
    region = (slice(row, row + ah), slice(col, col + aw))
    m_o_union[region] = np.maximum(m_o_union[region], layers.object_mask)
    m_fg_union[region] = np.maximum(m_fg_union[region], layers.fg_mask)


def compose(
    bg: BackgroundScene,
    asset: ForegroundAsset,
    position: tuple[int, int],
    scale: float = 1.0,
) -> CompositeSample:
    """Blend one asset onto a background: out = (1 - alpha)*bg + alpha*color."""
    layers = _scaled_layers(asset, scale)
    _check_placement(bg, layers, position)

    composite = bg.image.copy()
    m_o = np.zeros(bg.shape)
    m_fg = np.zeros(bg.shape)
    _blend_into(composite, (m_o, m_fg), layers, position)
    return CompositeSample(
        composite=composite,
        ground_truth=bg.image,
        object_mask=m_o,
        object_effect_mask=m_fg,
        provenance=(Provenance(asset.asset_id, tuple(position), float(scale)),),
    )


def compose_multi(
    bg: BackgroundScene,
    assets: Sequence[ForegroundAsset],
    positions: Sequence[tuple[int, int]] | None = None,
    scales: Sequence[float] | None = None,
    rng_seed: int | None = None,
) -> CompositeSample:
    """Blend several same-light-direction assets onto one background.

    Painting order is ascending footprint-bottom row, so the visually
    nearest asset (largest bottom row) lands last and occludes the others.
    Omitted positions/scales are sampled from ``rng_seed``.
    """
    if len(assets) == 0:
        raise ValueError("assets must be non-empty")
    bins = {a.direction_bin for a in assets}
    if len(bins) > 1:
        raise DirectionMismatchError(f"assets mix direction bins {sorted(bins)}")

    rng = None
    if scales is None or positions is None:
        rng = np.random.default_rng(rng_seed)
    if scales is None:
        scales = [float(rng.uniform(*DEFAULT_SCALE_RANGE)) for _ in assets]
    if len(scales) != len(assets):
        raise ValueError("scales length differs from assets")
    layer_list = [_scaled_layers(a, s) for a, s in zip(assets, scales)]
    if positions is None:
        positions = [_sample_position(rng, bg, layers) for layers in layer_list]
    if len(positions) != len(assets):
        raise ValueError("positions length differs from assets")

    for layers, pos in zip(layer_list, positions):
        _check_placement(bg, layers, pos)

    def bottom_row(idx):
        layers = layer_list[idx]
        on_rows = np.nonzero(layers.object_mask.any(axis=1))[0]
        local = int(on_rows[-1]) if on_rows.size else layers.object_mask.shape[0] - 1
        return positions[idx][0] + local

    order = sorted(range(len(assets)), key=bottom_row)

    composite = bg.image.copy()
    m_o = np.zeros(bg.shape)
    m_fg = np.zeros(bg.shape)
    provenance = []
    for idx in order:
        _blend_into(composite, (m_o, m_fg), layer_list[idx], positions[idx])
        provenance.append(
            Provenance(assets[idx].asset_id, tuple(positions[idx]), float(scales[idx]))
        )
    return CompositeSample(
        composite=composite,
        ground_truth=bg.image,
        object_mask=m_o,
        object_effect_mask=m_fg,
        provenance=tuple(provenance),
    )


def _sample_position(rng, bg: BackgroundScene, layers: _Layers) -> tuple[int, int]:
    """Rejection-sample a top-left position whose footprint stays eligible."""
    ah, aw = layers.fg_mask.shape
    h, w = bg.shape
    if ah > h or aw > w:
        raise PlacementError(f"asset tile {ah}x{aw} larger than background {h}x{w}")
    footprint = layers.object_mask == 1.0
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        row = int(rng.integers(0, h - ah + 1))
        col = int(rng.integers(0, w - aw + 1))
        window = bg.flat_region[row : row + ah, col : col + aw]
        if np.all(window[footprint] == 1.0):
            return row, col
    raise PlacementError(
        f"no eligible placement found in {MAX_PLACEMENT_ATTEMPTS} attempts"
    )


def synth_dataset(
    bgs: Sequence[BackgroundScene],
    assets: Sequence[ForegroundAsset],
    n: int,
    multi_prob: float,
    rng_seed: int,
    scale_range: tuple[float, float] = DEFAULT_SCALE_RANGE,
) -> list[CompositeSample]:
    """Generate ``n`` composites, reproducibly from ``rng_seed``.

    Each sample draws one background and either a single asset or, with
    probability ``multi_prob``, 2-4 assets sharing a direction bin.  Samples
    that cannot be placed are skipped with a warning, so the result may be
    shorter than ``n``.  Sample i depends only on (rng_seed, i), which keeps
    parallel and serial runs identical.
    """
    if not bgs or not assets:
        raise ValueError("background and asset pools must be non-empty")
    if not 0.0 <= multi_prob <= 1.0:
        raise ValueError(f"multi_prob must lie in [0, 1], got {multi_prob}")

    by_bin: dict[int, list[int]] = {}
    for i, a in enumerate(assets):
        by_bin.setdefault(a.direction_bin, []).append(i)

    samples = []
    children = np.random.SeedSequence(rng_seed).spawn(n)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        bg = bgs[int(rng.integers(0, len(bgs)))]
        first = int(rng.integers(0, len(assets)))
        multi = rng.random() < multi_prob
        if multi:
            pool = by_bin[assets[first].direction_bin]
            count = int(rng.integers(2, 5))
            extra = rng.choice(pool, size=count - 1, replace=len(pool) < count)
            chosen = [first] + [int(j) for j in extra]
        else:
            chosen = [first]
        scales = [float(rng.uniform(*scale_range)) for _ in chosen]
        try:
            layer_list = [_scaled_layers(assets[j], s) for j, s in zip(chosen, scales)]
            positions = [_sample_position(rng, bg, layers) for layers in layer_list]
            if len(chosen) == 1:
                sample = compose(bg, assets[chosen[0]], positions[0], scales[0])
            else:
                sample = compose_multi(
                    bg, [assets[j] for j in chosen], positions, scales
                )
        except PlacementError as exc:
            log.warning("sample %d skipped: %s", i, exc)
            continue
        samples.append(sample)
    return samples
