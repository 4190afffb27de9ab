"""Attention-guided fusion.

Turns the object-token attention map into a softened full-resolution mask
and uses it to copy-paste the generated result over the original input:
generated pixels inside the predicted object-effect region, original pixels
everywhere else.  Where the soft mask is exactly 0 the output is a
bit-exact copy of the original.
"""

from dataclasses import dataclass

import numpy as np

from .imaging import gaussian_blur, resample
from .net.model import AttentionMap

DEFAULT_CLAMP_FLOOR = 0.02


@dataclass(frozen=True)
class FusionConfig:
    blur_sigma: float | None = None   # None: image_side / 32
    clamp_floor: float = DEFAULT_CLAMP_FLOOR

    def __post_init__(self):
        if self.blur_sigma is not None and self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")
        if not 0.0 <= self.clamp_floor < 1.0:
            raise ValueError("clamp_floor must lie in [0, 1)")

    def sigma_for(self, out_h: int, out_w: int) -> float:
        if self.blur_sigma is not None:
            return self.blur_sigma
        return max(out_h, out_w) / 32.0


def attention_to_mask(
    attn: AttentionMap,
    out_h: int,
    out_w: int,
    cfg: FusionConfig = FusionConfig(),
) -> np.ndarray:
    """Soft object-effect mask from the object-token attention slice.

    Floor-clamp, bilinear upsample, Gaussian blur, then divide by the max
    (all-zero stays all-zero) and clamp to [0, 1].
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be >= 1, got {out_h}x{out_w}")
    a = attn.object_map()
    a = np.where(a < cfg.clamp_floor, 0.0, a)
    up = resample(a, out_h, out_w, "bilinear")
    soft = gaussian_blur(up, cfg.sigma_for(out_h, out_w))
    peak = soft.max()
    if peak == 0.0:
        return np.zeros((out_h, out_w))
    return np.clip(soft / peak, 0.0, 1.0)


def fuse(original: np.ndarray, generated: np.ndarray, soft_mask: np.ndarray) -> np.ndarray:
    """Per-channel blend: mask * generated + (1 - mask) * original."""
    original = np.asarray(original, dtype=np.float64)
    generated = np.asarray(generated, dtype=np.float64)
    soft_mask = np.asarray(soft_mask, dtype=np.float64)
    if original.shape != generated.shape:
        raise ValueError(f"image shapes differ: {original.shape} vs {generated.shape}")
    if soft_mask.shape != original.shape[:2]:
        raise ValueError(f"mask shape {soft_mask.shape} differs from {original.shape[:2]}")
    m = soft_mask[:, :, None]
    return m * generated + (1.0 - m) * original
