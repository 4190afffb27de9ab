"""Deterministic 20-step sampler with optional classifier-free guidance.

Starts from pure noise and alternates x0 prediction with a deterministic
re-noising to the next (less noisy) level.  With cfg_scale > 1 the
prediction is extrapolated away from a null-guidance branch; at
cfg_scale == 1 the null branch is never evaluated.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from .arch import IMG_SIZE, flatten_params, validate_params
from .model import AttentionMap, _check_image, _check_mask, guidance_forward, net_forward
from .train import NoiseSchedule


@dataclass(frozen=True)
class InferResult:
    output: np.ndarray              # (H, W, 3) in [0, 1]
    attention: AttentionMap         # final-step attention (conditional branch)
    trace: tuple[AttentionMap, ...] | None = None  # per step when collected


def infer(
    i_in,
    m_o,
    params,
    steps: int = 20,
    cfg_scale: float = 1.0,
    seed: int = 0,
    collect_trace: bool = False,
) -> InferResult:
    """Run the full denoising loop on one input image + object mask."""
    validate_params(params)
    if not np.all(np.isfinite(flatten_params(params))):
        raise NumericError("parameters contain non-finite values")
    if cfg_scale < 1:
        raise ValueError(f"cfg_scale must be >= 1, got {cfg_scale}")
    i_in = _check_image(i_in, "i_in")
    m_o = _check_mask(m_o, "m_o")
    if not (np.all(np.isfinite(i_in)) and np.all(np.isfinite(m_o))):
        raise NumericError("non-finite inference inputs")

    schedule = NoiseSchedule(steps)
    i_in_b = i_in.transpose(2, 0, 1)[None]
    m_o_b = m_o[None, None]

    tokens_cond, _ = guidance_forward(i_in_b, m_o_b, np.array([False]), params)
    tokens_null = None
    if cfg_scale > 1:
        tokens_null, _ = guidance_forward(i_in_b, m_o_b, np.array([True]), params)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((1, 3, IMG_SIZE, IMG_SIZE))

    trace = [] if collect_trace else None
    x0 = None
    attn_final = None
    for t in range(schedule.levels, 0, -1):
        t_arr = np.array([t])
        x0_cond, attn, _ = net_forward(z, i_in_b, m_o_b, t_arr, tokens_cond, params)
        if tokens_null is not None:
            x0_null, _, _ = net_forward(z, i_in_b, m_o_b, t_arr, tokens_null, params)
            x0 = x0_null + cfg_scale * (x0_cond - x0_null)
        else:
            x0 = x0_cond
        if not np.all(np.isfinite(x0)):
            raise NumericError(f"non-finite prediction at level {t}")
        attn_final = AttentionMap(attn[0])
        if trace is not None:
            trace.append(attn_final)
        if t > 1:
            ab = schedule.at(t)
            eps_hat = (z - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
            ab_next = schedule.at(t - 1)
            z = np.sqrt(ab_next) * x0 + np.sqrt(1.0 - ab_next) * eps_hat

    output = np.clip(x0[0].transpose(1, 2, 0), 0.0, 1.0)
    return InferResult(
        output=output,
        attention=attn_final,
        trace=tuple(trace) if trace is not None else None,
    )
