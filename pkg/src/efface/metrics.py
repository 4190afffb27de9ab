"""Fidelity and mask-agreement metrics.

PSNR uses peak 1.0 (images live in [0, 1]) and is capped at 99 dB so
aggregates over identical pairs stay finite.  PSNR-BG restricts the error
to pixels outside a foreground mask, which is the background-preservation
measure the fusion stage is judged by.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import UndefinedRegionError
from .imaging import as_float_array, require_binary

PSNR_CAP_DB = 99.0


def _check_pair(a, b):
    a = as_float_array(a, "a")
    b = as_float_array(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _mse_to_db(mse: float) -> float:
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over all pixels and channels."""
    a, b = _check_pair(a, b)
    return _mse_to_db(float(np.mean((a - b) ** 2)))


def psnr_bg(a: np.ndarray, b: np.ndarray, fg_mask: np.ndarray) -> float:
    """PSNR restricted to pixels where the foreground mask is 0."""
    a, b = _check_pair(a, b)
    fg_mask = require_binary(fg_mask, "fg_mask")
    if fg_mask.shape != a.shape[:2]:
        raise ValueError(f"fg_mask shape {fg_mask.shape} differs from {a.shape[:2]}")
    bg = fg_mask == 0.0
    if not np.any(bg):
        raise UndefinedRegionError("fg_mask covers the whole image")
    return _mse_to_db(float(np.mean((a[bg] - b[bg]) ** 2)))


class MaskMetrics(NamedTuple):
    recall: float
    precision: float
    iou: float


def mask_metrics(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> MaskMetrics:
    """Recall/precision/IoU of a soft mask against a binary ground truth.

    The prediction is binarized at ``threshold`` (>=).  Conventions for
    empty denominators: recall with empty gt is 1, precision with empty
    prediction is 1, IoU with empty union is 1.
    """
    pred = as_float_array(pred, "pred")
    gt = require_binary(gt, "gt")
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    p = pred >= threshold
    g = gt == 1.0
    inter = float(np.sum(p & g))
    n_gt = float(np.sum(g))
    n_pred = float(np.sum(p))
    union = n_gt + n_pred - inter
    recall = inter / n_gt if n_gt > 0 else 1.0
    precision = inter / n_pred if n_pred > 0 else 1.0
    iou = inter / union if union > 0 else 1.0
    return MaskMetrics(recall, precision, iou)


def diff_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel max-channel absolute difference, (H, W) in [0, 1]."""
    a, b = _check_pair(a, b)
    return np.abs(a - b).max(axis=2)


def heat_colormap(values: np.ndarray) -> np.ndarray:
    """Monochrome-to-heat map: black -> red -> yellow -> white.

    r = min(1, 3v), g = min(1, max(0, 3v - 1)), b = min(1, max(0, 3v - 2)).
    """
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    r = np.clip(3.0 * v, 0.0, 1.0)
    g = np.clip(3.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * v - 2.0, 0.0, 1.0)
    return np.stack([r, g, b], axis=2)


def diff_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Color-rendered difference image; see ``diff_values`` for raw values."""
    return heat_colormap(diff_values(a, b))


@dataclass
class MetricReport:
    """Per-sample metric rows plus mean aggregates."""

    per_sample: list[dict] = field(default_factory=list)

    def add(self, **values) -> None:
        self.per_sample.append({k: float(v) for k, v in values.items()})

    def aggregate(self) -> dict:
        if not self.per_sample:
            return {}
        keys = sorted({k for row in self.per_sample for k in row})
        return {
            k: float(np.mean([row[k] for row in self.per_sample if k in row]))
            for k in keys
        }

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate(),
            "count": len(self.per_sample),
            "per_sample": self.per_sample,
        }
