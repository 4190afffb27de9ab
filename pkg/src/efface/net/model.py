"""Forward and hand-derived backward passes of the toy denoiser.

Everything is float64 and functional: ops return (output, cache) and the
matching backward consumes the cache, so analytic gradients can be checked
against central finite differences to tight tolerances.  Batched internals
are channel-first; the public wrappers at the bottom take single-sample
(H, W, 3) images.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import NumericError
from ..imaging import resample
from .arch import (
    ATTN_SIDE,
    IMG_SIZE,
    MODEL_DIM,
    N_SPATIAL,
    N_TEXT_TOKENS,
    N_TOKENS,
    OBJECT_TOKEN,
    validate_params,
)

# Spatial features are standardized (parameter-free layer norm) before the
# query projection.  Raw encoder magnitudes are seed-dependent and can
# either saturate the softmax at init (frozen attention) or couple so
# weakly that the mask loss cannot shape the map under plain SGD; the
# normalization pins the initial logit scale while leaving attention
# sharpness learnable through the query/key magnitudes.
_NORM_EPS = 1e-12
_ATTN_SCALE = 1.0 / np.sqrt(MODEL_DIM)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def dsilu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def sinusoidal_features(t, dim=MODEL_DIM):
    """Fixed sin/cos embedding of integer noise levels, (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def conv2d(x, w, b, stride):
    """3x3 convolution, zero padding 1, given stride."""
    bsz, c, h, _w = x.shape
    o = w.shape[0]
    xpad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xpad, (3, 3), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]             # (B, C, OH, OW, 3, 3)
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(bsz, c * 9, -1)
    out = w.reshape(o, -1) @ cols + b[:, None]      # (B, O, L)
    cache = (cols, x.shape, w, stride)
    return out.reshape(bsz, o, oh, ow), cache


def conv2d_backward(dout, cache):
    cols, x_shape, w, stride = cache
    bsz, c, h, w_in = x_shape
    o = w.shape[0]
    dout2 = dout.reshape(bsz, o, -1)                # (B, O, L)

    dw = (
        dout2.transpose(1, 0, 2).reshape(o, -1)
        @ cols.transpose(1, 0, 2).reshape(c * 9, -1).T
    ).reshape(w.shape)
    db = dout2.sum(axis=(0, 2))

    dcols = w.reshape(o, -1).T @ dout2              # (B, C*9, L)
    oh, ow = dout.shape[2], dout.shape[3]
    dcols = dcols.reshape(bsz, c, 3, 3, oh, ow)
    dxpad = np.zeros((bsz, c, h + 2, w_in + 2))
    for ki in range(3):
        for kj in range(3):
            dxpad[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += (
                dcols[:, :, ki, kj]
            )
    dx = dxpad[:, :, 1 : 1 + h, 1 : 1 + w_in]
    return dx, dw, db


def upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2_backward(dout):
    b, c, h, w = dout.shape
    return dout.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def standardize(x):
    """Zero-mean unit-variance along the last axis; returns (out, cache)."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    r = np.sqrt((xc**2).mean(axis=-1, keepdims=True) + _NORM_EPS)
    return xc / r, r


def standardize_backward(dy, y, r):
    d = y.shape[-1]
    dxc = (dy - y * (dy * y).sum(axis=-1, keepdims=True) / d) / r
    return dxc - dxc.mean(axis=-1, keepdims=True)


def softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dattn, attn):
    inner = (dattn * attn).sum(axis=-1, keepdims=True)
    return attn * (dattn - inner)


# ---------------------------------------------------------------------------
# guidance branch (object encoder + projection MLP + token stack)
# ---------------------------------------------------------------------------

def guidance_forward(i_in, m_o, drop, params):
    """Token stack (B, 5, 32): 4 text tokens + projected object embedding.

    ``drop`` is a boolean (B,) array; dropped items use the learned null
    token instead of the object embedding.
    """
    bsz = i_in.shape[0]
    g = i_in * m_o
    o1p, c1 = conv2d(g, params["obj1_w"], params["obj1_b"], stride=2)
    o1 = silu(o1p)
    o2p, c2 = conv2d(o1, params["obj2_w"], params["obj2_b"], stride=2)
    o2 = silu(o2p)
    pooled = o2.mean(axis=(2, 3))                           # (B, 16)
    m1p = pooled @ params["mlp1_w"].T + params["mlp1_b"]
    m1 = silu(m1p)
    obj_tok = m1 @ params["mlp2_w"].T + params["mlp2_b"]    # (B, 32)

    keep = ~drop
    tok5 = np.where(keep[:, None], obj_tok, params["null_token"][None, :])
    text = np.broadcast_to(params["text_tokens"], (bsz, N_TEXT_TOKENS, MODEL_DIM))
    tokens = np.concatenate([text, tok5[:, None, :]], axis=1)
    cache = (c1, o1p, c2, o2p, o2.shape, pooled, m1p, m1, keep)
    return tokens, cache


def guidance_backward(dtokens, cache, params, grads):
    c1, o1p, c2, o2p, o2_shape, pooled, m1p, m1, keep = cache

    _acc(grads, "text_tokens", dtokens[:, :N_TEXT_TOKENS, :].sum(axis=0))
    dtok5 = dtokens[:, N_TOKENS - 1, :]                     # (B, 32)
    _acc(grads, "null_token", dtok5[~keep].sum(axis=0))

    dobj = dtok5 * keep[:, None]
    _acc(grads, "mlp2_w", dobj.T @ m1)
    _acc(grads, "mlp2_b", dobj.sum(axis=0))
    dm1 = dobj @ params["mlp2_w"]
    dm1p = dm1 * dsilu(m1p)
    _acc(grads, "mlp1_w", dm1p.T @ pooled)
    _acc(grads, "mlp1_b", dm1p.sum(axis=0))
    dpooled = dm1p @ params["mlp1_w"]

    _b, _c, ph, pw = o2_shape
    do2 = np.broadcast_to(dpooled[:, :, None, None] / (ph * pw), o2_shape)
    do2p = do2 * dsilu(o2p)
    do1, dw2, db2 = conv2d_backward(do2p, c2)
    _acc(grads, "obj2_w", dw2)
    _acc(grads, "obj2_b", db2)
    do1p = do1 * dsilu(o1p)
    _, dw1, db1 = conv2d_backward(do1p, c1)
    _acc(grads, "obj1_w", dw1)
    _acc(grads, "obj1_b", db1)


# ---------------------------------------------------------------------------
# main branch (encoder + cross-attention + decoder)
# ---------------------------------------------------------------------------

def net_forward(z, i_in, m_o, t, tokens, params):
    """Denoiser core: predicts the clean image and returns attention weights."""
    bsz = z.shape[0]
    x = np.concatenate([z, i_in, m_o], axis=1)              # (B, 7, 32, 32)
    h1p, ce1 = conv2d(x, params["enc1_w"], params["enc1_b"], stride=2)
    h1 = silu(h1p)
    h2p, ce2 = conv2d(h1, params["enc2_w"], params["enc2_b"], stride=2)
    h2 = silu(h2p)

    se = sinusoidal_features(t)                             # (B, 32), constant
    temb = se @ params["time_w"].T + params["time_b"]
    h = h2 + temb[:, :, None, None]

    f = h.reshape(bsz, MODEL_DIM, N_SPATIAL).transpose(0, 2, 1)  # (B, 64, 32)
    fn, rf = standardize(f)
    q = fn @ params["wq"].T
    k = tokens @ params["wk"].T
    v = tokens @ params["wv"].T
    logits = (q @ k.transpose(0, 2, 1)) * _ATTN_SCALE       # (B, 64, 5)
    attn = softmax_rows(logits)
    ctx = attn @ v                                          # (B, 64, 32)
    proj = ctx @ params["wo"].T
    f2 = f + proj

    hsp = f2.transpose(0, 2, 1).reshape(bsz, MODEL_DIM, ATTN_SIDE, ATTN_SIDE)
    u1 = upsample2(hsp)
    d1p, cd1 = conv2d(u1, params["dec1_w"], params["dec1_b"], stride=1)
    d1 = silu(d1p)
    u2 = upsample2(d1)
    x0, cd2 = conv2d(u2, params["dec2_w"], params["dec2_b"], stride=1)

    cache = (ce1, h1p, ce2, h2p, se, fn, rf, q, k, v, attn, ctx, tokens, cd1, d1p, cd2)
    return x0, attn, cache


def net_backward(dx0, dattn_extra, cache, params, grads):
    """Backward through the main branch; returns the token gradient.

    ``dattn_extra`` injects the mask-loss derivative directly at the
    attention weights (None to skip).
    """
    ce1, h1p, ce2, h2p, se, f, qn, rq, k, v, attn, ctx, tokens, cd1, d1p, cd2 = cache
    bsz = dx0.shape[0]

    du2, dw, db = conv2d_backward(dx0, cd2)
    _acc(grads, "dec2_w", dw)
    _acc(grads, "dec2_b", db)
    dd1 = upsample2_backward(du2)
    dd1p = dd1 * dsilu(d1p)
    du1, dw, db = conv2d_backward(dd1p, cd1)
    _acc(grads, "dec1_w", dw)
    _acc(grads, "dec1_b", db)
    dhsp = upsample2_backward(du1)

    df2 = dhsp.reshape(bsz, MODEL_DIM, N_SPATIAL).transpose(0, 2, 1)
    dproj = df2
    df = df2.copy()

    _acc(grads, "wo", _mat_grad(dproj, ctx))
    dctx = dproj @ params["wo"]
    dattn = dctx @ v.transpose(0, 2, 1)
    if dattn_extra is not None:
        dattn = dattn + dattn_extra
    dv = attn.transpose(0, 2, 1) @ dctx

    dlogits = softmax_backward(dattn, attn)
    dqn = dlogits @ k
    dk = dlogits.transpose(0, 2, 1) @ qn
    dq = l2_normalize_backward(dqn, qn, rq)

    _acc(grads, "wq", _mat_grad(dq, f))
    df += dq @ params["wq"]
    _acc(grads, "wk", _mat_grad(dk, tokens))
    _acc(grads, "wv", _mat_grad(dv, tokens))
    dtokens = dk @ params["wk"] + dv @ params["wv"]

    dh = df.transpose(0, 2, 1).reshape(bsz, MODEL_DIM, ATTN_SIDE, ATTN_SIDE)
    dtemb = dh.sum(axis=(2, 3))
    _acc(grads, "time_w", dtemb.T @ se)
    _acc(grads, "time_b", dtemb.sum(axis=0))

    dh2p = dh * dsilu(h2p)
    dh1, dw, db = conv2d_backward(dh2p, ce2)
    _acc(grads, "enc2_w", dw)
    _acc(grads, "enc2_b", db)
    dh1p = dh1 * dsilu(h1p)
    _, dw, db = conv2d_backward(dh1p, ce1)
    _acc(grads, "enc1_w", dw)
    _acc(grads, "enc1_b", db)
    return dtokens


def _mat_grad(dout, inp):
    """Weight gradient of y = inp @ W.T for stacked (B, L, D) tensors."""
    return dout.reshape(-1, dout.shape[-1]).T @ inp.reshape(-1, inp.shape[-1])


def _acc(grads, name, value):
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


# ---------------------------------------------------------------------------
# attention map + mask loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttentionMap:
    """Row-stochastic cross-attention weights, spatial positions x tokens."""

    weights: np.ndarray  # (64, 5)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (N_SPATIAL, N_TOKENS):
            raise ValueError(f"attention must be {(N_SPATIAL, N_TOKENS)}, got {w.shape}")
        if np.any(w < 0) or np.abs(w.sum(axis=1) - 1.0).max() > 1e-5:
            raise ValueError("attention rows must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)

    def object_map(self) -> np.ndarray:
        """The object-token slice as an (8, 8) spatial map."""
        return self.weights[:, OBJECT_TOKEN].reshape(ATTN_SIDE, ATTN_SIDE)


class MaskLossResult(NamedTuple):
    value: float
    degenerate: bool


def mask_to_grid(m_fg: np.ndarray) -> np.ndarray:
    """Area-downsample a mask to the attention grid, binarized at 0.5."""
    small = resample(np.asarray(m_fg, dtype=np.float64), ATTN_SIDE, ATTN_SIDE, "area")
    return (small >= 0.5).astype(np.float64)


def mask_loss(attn, m_fg: np.ndarray) -> MaskLossResult:
    """Background-minus-foreground mean of the object-token attention.

    Minimizing this drives attention toward the object-effect region.  The
    mask is reduced to the 8x8 attention grid first; if that grid is all
    foreground or all background the loss is 0 with the degenerate flag set.
    """
    weights = attn.weights if isinstance(attn, AttentionMap) else np.asarray(attn)
    if weights.shape != (N_SPATIAL, N_TOKENS):
        raise ValueError(f"attention must be {(N_SPATIAL, N_TOKENS)}, got {weights.shape}")
    grid = mask_to_grid(m_fg)
    n_fg = grid.sum()
    n_bg = grid.size - n_fg
    if n_fg == 0 or n_bg == 0:
        return MaskLossResult(0.0, True)
    a = weights[:, OBJECT_TOKEN].reshape(ATTN_SIDE, ATTN_SIDE)
    value = (a * (1.0 - grid)).sum() / n_bg - (a * grid).sum() / n_fg
    return MaskLossResult(float(value), False)


def mask_loss_grad(grid: np.ndarray) -> np.ndarray:
    """d(mask_loss)/d(object-token attention) for a non-degenerate grid."""
    n_fg = grid.sum()
    n_bg = grid.size - n_fg
    return ((1.0 - grid) / n_bg - grid / n_fg).reshape(N_SPATIAL)


# ---------------------------------------------------------------------------
# public single-sample wrappers
# ---------------------------------------------------------------------------

def _check_image(img, name):
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (IMG_SIZE, IMG_SIZE, 3):
        raise ValueError(f"{name} must be {IMG_SIZE}x{IMG_SIZE}x3, got {img.shape}")
    return img


def _check_mask(mask, name):
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (IMG_SIZE, IMG_SIZE):
        raise ValueError(f"{name} must be {IMG_SIZE}x{IMG_SIZE}, got {mask.shape}")
    return mask


def build_guidance(i_in, m_o, params, drop: bool = False) -> np.ndarray:
    """Guidance token sequence (5, 32) for one sample."""
    validate_params(params)
    i_in = _check_image(i_in, "i_in")
    m_o = _check_mask(m_o, "m_o")
    tokens, _ = guidance_forward(
        i_in.transpose(2, 0, 1)[None],
        m_o[None, None],
        np.array([drop]),
        params,
    )
    return tokens[0]


def forward(z_t, i_in, m_o, t: int, tokens, params):
    """One denoising forward pass; returns (x0 prediction, AttentionMap)."""
    validate_params(params)
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.shape != (3, IMG_SIZE, IMG_SIZE):
        raise ValueError(f"z_t must be 3x{IMG_SIZE}x{IMG_SIZE}, got {z_t.shape}")
    i_in = _check_image(i_in, "i_in")
    m_o = _check_mask(m_o, "m_o")
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.shape != (N_TOKENS, MODEL_DIM):
        raise ValueError(f"tokens must be {(N_TOKENS, MODEL_DIM)}, got {tokens.shape}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if not (np.all(np.isfinite(z_t)) and np.all(np.isfinite(i_in)) and np.all(np.isfinite(m_o))):
        raise NumericError("non-finite values in forward inputs")

    x0, attn, _ = net_forward(
        z_t[None],
        i_in.transpose(2, 0, 1)[None],
        m_o[None, None],
        np.array([t]),
        tokens[None],
        params,
    )
    return x0[0].transpose(1, 2, 0), AttentionMap(attn[0])
