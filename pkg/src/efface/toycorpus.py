"""Procedural 32x32 counterfactual scenes with exact ground truth.

Each scene is a flat-textured background with mild noise, one randomly
colored rectangle or ellipse object, and a synthetic shadow rendered as a
multiplicative darkening (factor 0.4-0.7) offset along one of the eight
light-direction bins.  Because the shadow is exactly I_in = f * I_gt, the
true per-channel alpha is the constant 1 - f on the effect region, so
every pipeline stage has an exact oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from .annotate import CounterfactualPair, estimate_shadow_direction
from .net.train import TrainItem

SCENE_SIZE = 32
SHADOW_FACTOR_RANGE = (0.4, 0.7)
_HALF_EXTENTS = (4, 6)     # object half width/height in pixels
_SHADOW_OFFSET = (4, 6)    # centroid offset of the shadow in pixels


@dataclass(frozen=True)
class ToyScene:
    """A generated pair plus the by-construction ground truth annotations."""

    pair: CounterfactualPair
    effect_mask: np.ndarray
    object_effect_mask: np.ndarray
    alpha: np.ndarray          # exact per-channel alpha, (H, W, 3)
    direction_bin: int
    shadow_factor: float

    def train_item(self) -> TrainItem:
        return TrainItem(
            self.pair.input,
            self.pair.ground_truth,
            self.pair.object_mask,
            self.object_effect_mask,
        )


def _object_mask(rng, size):
    half_h = int(rng.integers(_HALF_EXTENTS[0], _HALF_EXTENTS[1] + 1))
    half_w = int(rng.integers(_HALF_EXTENTS[0], _HALF_EXTENTS[1] + 1))
    dist = int(rng.integers(_SHADOW_OFFSET[0], _SHADOW_OFFSET[1] + 1))
    bin_idx = int(rng.integers(0, 8))
    theta = math.radians(45.0 * bin_idx)
    dcol = round(dist * math.cos(theta))
    drow = -round(dist * math.sin(theta))  # rows grow downward

    row_min = half_h + max(0, -drow) + 1
    row_max = size - 1 - half_h - max(0, drow) - 1
    col_min = half_w + max(0, -dcol) + 1
    col_max = size - 1 - half_w - max(0, dcol) - 1
    cr = int(rng.integers(row_min, row_max + 1))
    cc = int(rng.integers(col_min, col_max + 1))

    rows = np.arange(size)[:, None]
    cols = np.arange(size)[None, :]
    if rng.random() < 0.5:
        mask = (np.abs(rows - cr) <= half_h) & (np.abs(cols - cc) <= half_w)
    else:
        mask = ((rows - cr) / half_h) ** 2 + ((cols - cc) / half_w) ** 2 <= 1.0
    return mask.astype(np.float64), drow, dcol


def make_scene(rng: np.random.Generator, size: int = SCENE_SIZE) -> ToyScene:
    """One procedural scene drawn from ``rng``."""
    base = rng.uniform(0.25, 0.85, size=3)
    noise = rng.uniform(-0.02, 0.02, size=(size, size, 3))
    bg = np.clip(base[None, None, :] + noise, 0.0, 1.0)

    m_o, drow, dcol = _object_mask(rng, size)
    shifted = np.zeros_like(m_o)
    src = m_o[
        max(0, -drow) : size - max(0, drow),
        max(0, -dcol) : size - max(0, dcol),
    ]
    shifted[
        max(0, drow) : size - max(0, -drow),
        max(0, dcol) : size - max(0, -dcol),
    ] = src
    m_e = shifted * (1.0 - m_o)
    m_fg = np.maximum(m_o, m_e)

    factor = float(rng.uniform(*SHADOW_FACTOR_RANGE))
    color = rng.uniform(0.05, 0.95, size=3)

    image = bg.copy()
    e = m_e == 1.0
    o = m_o == 1.0
    image[e] = factor * bg[e]
    image[o] = color

    alpha = np.zeros((size, size, 3))
    alpha[e] = 1.0 - factor
    alpha[o] = 1.0

    pair = CounterfactualPair(input=image, ground_truth=bg, object_mask=m_o)
    return ToyScene(
        pair=pair,
        effect_mask=m_e,
        object_effect_mask=m_fg,
        alpha=alpha,
        direction_bin=estimate_shadow_direction(m_o, m_e),
        shadow_factor=factor,
    )


def make_corpus(n: int, seed: int, size: int = SCENE_SIZE) -> list[ToyScene]:
    """``n`` scenes, reproducible from ``seed`` (scene i uses sub-seed i)."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [make_scene(np.random.default_rng(c), size) for c in children]
