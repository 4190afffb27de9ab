"""Deterministic low-level image and mask operations.

Conventions used everywhere in this package:

- an image is a float64 array of shape (H, W, 3) with values in [0, 1],
- a mask is a float64 array of shape (H, W) with values in [0, 1]; a
  *binary* mask contains only 0.0 and 1.0,
- PNG files are 8-bit (images RGB, masks grayscale); per-channel alpha
  layers are 16-bit RGB PNGs scaled from [-1, 1] to [0, 65535].

All operations are pure functions; none mutates its input.
"""

import math

import cv2
import numpy as np
from PIL import Image as PILImage

from ._kernels import minmax_filter, resize_area, resize_bilinear, sep_convolve

MASK_BINARY_THRESHOLD = 128  # on 8-bit loads when a binary mask is required


def as_float_array(a, name="array"):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def is_binary(mask: np.ndarray) -> bool:
    return bool(np.all((mask == 0.0) | (mask == 1.0)))


def require_binary(mask: np.ndarray, name="mask") -> np.ndarray:
    mask = as_float_array(mask, name)
    if mask.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {mask.shape}")
    if not is_binary(mask):
        raise ValueError(f"{name} must be binary (only 0 and 1)")
    return mask


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG as a (H, W, 3) float64 array in [0, 1]."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_image(img: np.ndarray, path) -> None:
    img = np.asarray(img, dtype=np.float64)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path)


def load_mask(path, binary: bool = False) -> np.ndarray:
    """Read an 8-bit grayscale PNG as a (H, W) float64 mask in [0, 1].

    With ``binary=True`` the 8-bit values are thresholded at 128.
    """
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    if binary:
        return (arr >= MASK_BINARY_THRESHOLD).astype(np.float64)
    return arr / 255.0


def save_mask(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask, dtype=np.float64)
    data = np.clip(np.rint(mask * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path)


def load_alpha(path) -> np.ndarray:
    """Read a 16-bit RGB PNG alpha layer as (H, W, 3) float64 in [-1, 1]."""
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise ValueError(f"cannot read alpha PNG: {path}")
    if data.dtype != np.uint16 or data.ndim != 3 or data.shape[2] != 3:
        raise ValueError(f"alpha PNG must be 16-bit RGB: {path}")
    rgb = data[:, :, ::-1].astype(np.float64)  # cv2 stores BGR
    return rgb / 65535.0 * 2.0 - 1.0


def save_alpha(alpha: np.ndarray, path) -> None:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 3 or alpha.shape[2] != 3:
        raise ValueError(f"alpha must be (H, W, 3), got {alpha.shape}")
    codes = np.clip(np.rint((alpha + 1.0) / 2.0 * 65535.0), 0, 65535)
    bgr = codes.astype(np.uint16)[:, :, ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(bgr)):
        raise OSError(f"failed to write alpha PNG: {path}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _per_channel(arr, fn):
    if arr.ndim == 2:
        return fn(np.ascontiguousarray(arr))
    planes = [fn(np.ascontiguousarray(arr[:, :, c])) for c in range(arr.shape[2])]
    return np.stack(planes, axis=2)


def _clip_to_input_range(out: np.ndarray, src: np.ndarray) -> np.ndarray:
    # Results are convex combinations of the input, so mathematically they
    # lie inside the input's range; this only strips float round-off dust.
    return np.clip(out, src.min(), src.max())


def gaussian_blur(arr: np.ndarray, sigma: float):
    """Separable Gaussian blur with clamp-to-edge borders.

    Works on (H, W) masks and (H, W, 3) images alike.  ``sigma == 0``
    returns the input unchanged.
    """
    if not math.isfinite(sigma):
        raise ValueError(f"sigma must be finite, got {sigma}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    arr = np.asarray(arr, dtype=np.float64)
    if sigma == 0:
        return arr
    k = gaussian_kernel(sigma)
    out = _per_channel(arr, lambda ch: sep_convolve(ch, k))
    return _clip_to_input_range(out, arr)


def morphology(mask: np.ndarray, radius: int, mode: str) -> np.ndarray:
    """Dilate (max filter) or erode (min filter) a binary mask.

    Square structuring element of side 2*radius + 1; radius 0 is identity.
    """
    if mode not in ("dilate", "erode"):
        raise ValueError(f"mode must be 'dilate' or 'erode', got {mode!r}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    mask = require_binary(mask)
    if radius == 0:
        return mask.copy()
    return minmax_filter(np.ascontiguousarray(mask), int(radius), mode == "dilate")


def resample(arr: np.ndarray, new_height: int, new_width: int, mode: str):
    """Resize with half-pixel-center bilinear or exact area averaging.

    Bilinear is the upsampling path (attention maps, asset scaling); area
    is the downsampling path (masks to attention resolution).  A same-size
    call returns the input unchanged.
    """
    if mode not in ("bilinear", "area"):
        raise ValueError(f"mode must be 'bilinear' or 'area', got {mode!r}")
    if new_height < 1 or new_width < 1:
        raise ValueError(f"target size must be >= 1, got {new_height}x{new_width}")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape[:2] == (new_height, new_width):
        return arr
    kern = resize_bilinear if mode == "bilinear" else resize_area
    out = _per_channel(arr, lambda ch: kern(ch, new_height, new_width))
    return _clip_to_input_range(out, arr)
