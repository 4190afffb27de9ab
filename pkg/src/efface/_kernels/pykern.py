"""NumPy implementations of the low-level 2-D kernels.

This is the fallback lane used when the compiled extension is unavailable,
and the reference the extension is tested against.  Both lanes perform the
same floating-point operations in the same order so results agree
bit-for-bit wherever the operation promises exactness:

- separable convolution accumulates taps in ascending tap order,
- min/max filtering is order-independent anyway,
- bilinear resampling uses the nested-lerp form a + f*(b - a), which keeps
  constant inputs exactly constant,
- area resampling accumulates unnormalized overlap weights in ascending
  source order and divides by the cell area once at the very end, so
  integer-factor downsamples of binary masks are exact block means.

All functions take C-contiguous float64 2-D arrays and return new arrays.
"""

import numpy as np


def sep_convolve(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Convolve rows then columns with the 1-D kernel ``k``, clamp-to-edge."""
    h, w = a.shape
    taps = k.shape[0]
    r = (taps - 1) // 2

    cols = np.arange(w)
    tmp = np.zeros_like(a)
    for t in range(taps):
        idx = np.clip(cols + (t - r), 0, w - 1)
        tmp += k[t] * a[:, idx]

    rows = np.arange(h)
    out = np.zeros_like(a)
    for t in range(taps):
        idx = np.clip(rows + (t - r), 0, h - 1)
        out += k[t] * tmp[idx, :]
    return out


def minmax_filter(a: np.ndarray, radius: int, use_max: bool) -> np.ndarray:
    """Square-window max (dilate) or min (erode) filter of the given radius.

    Clamp-to-edge indexing, which for min/max equals restricting the window
    to the image.
    """
    h, w = a.shape
    rows = np.arange(h)
    cols = np.arange(w)
    pick = np.maximum if use_max else np.minimum
    out = a.copy()
    for dr in range(-radius, radius + 1):
        ri = np.clip(rows + dr, 0, h - 1)
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                continue
            ci = np.clip(cols + dc, 0, w - 1)
            out = pick(out, a[np.ix_(ri, ci)])
    return out


def resize_bilinear(a: np.ndarray, oh: int, ow: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center source mapping."""
    h, w = a.shape
    scale_y = h / oh
    scale_x = w / ow

    sy = (np.arange(oh) + 0.5) * scale_y - 0.5
    sx = (np.arange(ow) + 0.5) * scale_x - 0.5
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)

    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)

    tl = a[np.ix_(y0, x0)]
    tr = a[np.ix_(y0, x1)]
    bl = a[np.ix_(y1, x0)]
    br = a[np.ix_(y1, x1)]

    top = tl + fx * (tr - tl)
    bot = bl + fx * (br - bl)
    return top + fy * (bot - top)


def _area_axis0(a: np.ndarray, oh: int) -> np.ndarray:
    """Unnormalized overlap-weighted row reduction to ``oh`` rows."""
    h = a.shape[0]
    out = np.zeros((oh, a.shape[1]), dtype=a.dtype)
    for i in range(oh):
        lo = (i * h) / oh
        hi = ((i + 1) * h) / oh
        r0 = int(np.floor(lo))
        r1 = min(int(np.ceil(hi)), h)
        for r in range(r0, r1):
            wgt = min(hi, r + 1.0) - max(lo, float(r))
            if wgt > 0.0:
                out[i] += wgt * a[r]
    return out


def resize_area(a: np.ndarray, oh: int, ow: int) -> np.ndarray:
    """Exact box-average resampling (overlap-weighted, one final division)."""
    h, w = a.shape
    acc = _area_axis0(a, oh)
    acc = _area_axis0(np.ascontiguousarray(acc.T), ow).T
    return acc / ((h / oh) * (w / ow))
