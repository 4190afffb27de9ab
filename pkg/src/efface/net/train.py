"""Training loop, loss assembly, SGD-momentum updates, gradient checking.

The objective per item is MSE(x0 prediction, clean image) plus
lambda * mask-loss on the object-token attention.  Noise levels, noise
draws, and guidance dropout are all sampled from one seeded generator in a
fixed order, so a training run is a pure function of (data, config, seed).
"""

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import DivergenceError
from ..imaging import as_float_array, require_binary
from .arch import (
    ATTN_SIDE,
    DEFAULT_LEVELS,
    IMG_SIZE,
    N_SPATIAL,
    N_TOKENS,
    OBJECT_TOKEN,
    PARAM_SHAPES,
    flatten_params,
    init_params,
    unflatten_params,
)
from .model import (
    guidance_backward,
    guidance_forward,
    mask_loss_grad,
    mask_to_grid,
    net_backward,
    net_forward,
)


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal fractions, linear from 0.9999 down to 0.02."""

    levels: int = DEFAULT_LEVELS
    alpha_bar: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("schedule needs at least 2 levels")
        ab = self.alpha_bar
        if ab is None:
            ab = np.linspace(0.9999, 0.02, self.levels)
        ab = np.asarray(ab, dtype=np.float64)
        if ab.shape != (self.levels,):
            raise ValueError("alpha_bar length differs from levels")
        if np.any(ab <= 0) or np.any(ab >= 1) or np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing within (0, 1)")
        object.__setattr__(self, "alpha_bar", ab)

    def at(self, t: int) -> float:
        """Signal fraction at level t, t in [1, levels] (1 = least noisy)."""
        if not 1 <= t <= self.levels:
            raise ValueError(f"t must lie in [1, {self.levels}], got {t}")
        return float(self.alpha_bar[t - 1])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lambda_mask: float = 0.1
    learning_rate: float = 1e-3
    momentum: float = 0.9
    guidance_drop_prob: float = 0.1
    cfg_scale: float = 1.0
    levels: int = DEFAULT_LEVELS
    seed: int = 0

    def __post_init__(self):
        if self.lambda_mask < 0:
            raise ValueError("lambda_mask must be >= 0")
        if self.cfg_scale < 1:
            raise ValueError("cfg_scale must be >= 1")
        if not 0.0 <= self.guidance_drop_prob <= 1.0:
            raise ValueError("guidance_drop_prob must lie in [0, 1]")


class TrainItem(NamedTuple):
    """One supervised example: input image, clean target, and masks."""

    input: np.ndarray              # (H, W, 3) with the object
    ground_truth: np.ndarray       # (H, W, 3) without it
    object_mask: np.ndarray        # (H, W) binary
    object_effect_mask: np.ndarray  # (H, W) binary


def make_train_item(input, ground_truth, object_mask, object_effect_mask) -> TrainItem:
    item = TrainItem(
        as_float_array(input, "input"),
        as_float_array(ground_truth, "ground_truth"),
        require_binary(object_mask, "object_mask"),
        require_binary(object_effect_mask, "object_effect_mask"),
    )
    for a in item[:2]:
        if a.shape != (IMG_SIZE, IMG_SIZE, 3):
            raise ValueError(f"images must be {IMG_SIZE}x{IMG_SIZE}x3, got {a.shape}")
    return item


class FrozenBatch(NamedTuple):
    """A batch with all randomness resolved; the loss is deterministic in it."""

    z: np.ndarray        # (B, 3, H, W) noisy targets
    i_in: np.ndarray     # (B, 3, H, W)
    m_o: np.ndarray      # (B, 1, H, W)
    i_gt: np.ndarray     # (B, 3, H, W)
    t: np.ndarray        # (B,) int levels
    drop: np.ndarray     # (B,) bool guidance dropout
    grids: np.ndarray    # (B, 8, 8) binarized masks at attention resolution
    degenerate: np.ndarray  # (B,) bool


def make_frozen_batch(
    items: Sequence[TrainItem],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    drop_prob: float,
) -> FrozenBatch:
    """Sample noise level, noise, and dropout for each item, then freeze."""
    if len(items) == 0:
        raise ValueError("batch must be non-empty")
    i_in = np.stack([it.input.transpose(2, 0, 1) for it in items])
    i_gt = np.stack([it.ground_truth.transpose(2, 0, 1) for it in items])
    m_o = np.stack([it.object_mask[None] for it in items])
    grids = np.stack([mask_to_grid(it.object_effect_mask) for it in items])

    bsz = len(items)
    t = rng.integers(1, schedule.levels + 1, size=bsz)
    noise = rng.standard_normal(i_gt.shape)
    drop = rng.random(bsz) < drop_prob

    ab = schedule.alpha_bar[t - 1][:, None, None, None]
    z = np.sqrt(ab) * i_gt + np.sqrt(1.0 - ab) * noise

    n_fg = grids.sum(axis=(1, 2))
    degenerate = (n_fg == 0) | (n_fg == grids[0].size)
    return FrozenBatch(z, i_in, m_o, i_gt, t, drop, grids, degenerate)


def batch_loss(params, batch: FrozenBatch, lambda_mask: float, want_grads: bool = True):
    """(mse, mean mask loss, total, grads-or-None) for a frozen batch."""
    bsz = batch.z.shape[0]
    tokens, gcache = guidance_forward(batch.i_in, batch.m_o, batch.drop, params)
    x0, attn, ncache = net_forward(
        batch.z, batch.i_in, batch.m_o, batch.t, tokens, params
    )

    resid = x0 - batch.i_gt
    mse = float(np.mean(resid**2))

    active = ~batch.degenerate
    mask_vals = np.zeros(bsz)
    dattn = None
    if np.any(active):
        a_col = attn[:, :, OBJECT_TOKEN].reshape(bsz, ATTN_SIDE, ATTN_SIDE)
        n_fg = batch.grids.sum(axis=(1, 2))
        n_bg = batch.grids[0].size - n_fg
        with np.errstate(invalid="ignore", divide="ignore"):
            per = (a_col * (1.0 - batch.grids)).sum(axis=(1, 2)) / n_bg - (
                a_col * batch.grids
            ).sum(axis=(1, 2)) / n_fg
        mask_vals[active] = per[active]
    mask_mean = float(mask_vals.mean())
    total = mse + lambda_mask * mask_mean

    if not want_grads:
        return mse, mask_mean, total, None

    grads: dict[str, np.ndarray] = {}
    dx0 = 2.0 * resid / resid.size
    if lambda_mask != 0.0 and np.any(active):
        dattn = np.zeros((bsz, N_SPATIAL, N_TOKENS))
        scale = lambda_mask / bsz
        for b in np.nonzero(active)[0]:
            dattn[b, :, OBJECT_TOKEN] = scale * mask_loss_grad(batch.grids[b])
    dtokens = net_backward(dx0, dattn, ncache, params, grads)
    guidance_backward(dtokens, gcache, params, grads)
    for name, shape in PARAM_SHAPES.items():
        if name not in grads:
            grads[name] = np.zeros(shape)
    return mse, mask_mean, total, grads


@dataclass(frozen=True)
class LossReport:
    step: int
    mse: float
    mask_loss: float
    total: float


def sgd_update(params, grads, velocity, learning_rate, momentum):
    """Classic momentum: v <- mu*v + g; p <- p - lr*v.  Returns new dicts."""
    new_params = {}
    new_velocity = {}
    for name in PARAM_SHAPES:
        v = momentum * velocity[name] + grads[name] if velocity else grads[name]
        new_velocity[name] = v
        new_params[name] = params[name] - learning_rate * v
    return new_params, new_velocity


def train_step(
    items: Sequence[TrainItem],
    cfg: TrainConfig,
    schedule: NoiseSchedule,
    params,
    velocity=None,
    rng: np.random.Generator | None = None,
    step: int = 0,
):
    """One SGD step on a batch; returns (params', velocity', LossReport)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    batch = make_frozen_batch(items, schedule, rng, cfg.guidance_drop_prob)
    mse, mask_mean, total, grads = batch_loss(params, batch, cfg.lambda_mask)
    if not np.isfinite(total):
        raise DivergenceError(
            f"non-finite loss at step {step}: mse={mse}, mask={mask_mean}"
        )
    params, velocity = sgd_update(
        params, grads, velocity, cfg.learning_rate, cfg.momentum
    )
    return params, velocity, LossReport(step, mse, mask_mean, total)


@dataclass
class TrainResult:
    params: dict
    reports: list[LossReport]
    epoch_mse: list[float]
    config: TrainConfig


def train(
    items: Sequence[TrainItem],
    cfg: TrainConfig,
    params=None,
    log_path=None,
) -> TrainResult:
    """Full training run; deterministic given (items, cfg, initial params)."""
    if len(items) == 0:
        raise ValueError("training set is empty")
    schedule = NoiseSchedule(cfg.levels)
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(cfg.seed)
    velocity = None

    reports: list[LossReport] = []
    epoch_mse: list[float] = []
    log_fh = open(log_path, "w") if log_path else None
    try:
        step = 0
        for _epoch in range(cfg.epochs):
            order = rng.permutation(len(items))
            losses = []
            for lo in range(0, len(items), cfg.batch_size):
                batch_items = [items[i] for i in order[lo : lo + cfg.batch_size]]
                params, velocity, report = train_step(
                    batch_items, cfg, schedule, params, velocity, rng, step
                )
                reports.append(report)
                losses.append(report.mse)
                if log_fh:
                    log_fh.write(json.dumps(asdict(report), sort_keys=True) + "\n")
                step += 1
            epoch_mse.append(float(np.mean(losses)))
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(params, reports, epoch_mse, cfg)


def finite_diff_grad(params, batch: FrozenBatch, lambda_mask, indices, step=1e-4):
    """Central finite differences of the batch loss at selected flat indices."""
    vec = flatten_params(params)
    out = np.zeros(len(indices))
    for n, idx in enumerate(indices):
        for sign in (+1.0, -1.0):
            probe = vec.copy()
            probe[idx] += sign * step
            _, _, total, _ = batch_loss(
                unflatten_params(probe), batch, lambda_mask, want_grads=False
            )
            out[n] += sign * total
    return out / (2.0 * step)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def gradient_check(
    params,
    batch: FrozenBatch,
    count: int,
    lambda_mask: float = 0.1,
    fd_step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and finite-difference gradients.

    ``count`` scalar parameters are drawn at random without replacement;
    relative error is |ga - gfd| / max(1e-8, |ga| + |gfd|).
    """
    _, _, _, grads = batch_loss(params, batch, lambda_mask, want_grads=True)
    flat_grad = flatten_params(grads)
    rng = np.random.default_rng(seed)
    count = min(count, flat_grad.size)
    indices = rng.choice(flat_grad.size, size=count, replace=False)
    numeric = finite_diff_grad(params, batch, lambda_mask, indices, fd_step)
    return max_relative_error(flat_grad[indices], numeric)
