"""Toy denoiser: a small trainable network with supervised cross-attention."""

from .arch import (
    ATTN_SIDE,
    DEFAULT_LEVELS,
    IMG_SIZE,
    MODEL_DIM,
    N_TOKENS,
    OBJECT_TOKEN,
    PARAM_SHAPES,
    flatten_params,
    init_params,
    load_checkpoint,
    n_params,
    save_checkpoint,
    unflatten_params,
)
from .model import (
    AttentionMap,
    MaskLossResult,
    build_guidance,
    forward,
    mask_loss,
    mask_to_grid,
)
from .sampling import InferResult, infer
from .train import (
    FrozenBatch,
    LossReport,
    NoiseSchedule,
    TrainConfig,
    TrainItem,
    TrainResult,
    batch_loss,
    finite_diff_grad,
    gradient_check,
    make_frozen_batch,
    make_train_item,
    max_relative_error,
    train,
    train_step,
)

__all__ = [
    "ATTN_SIDE",
    "DEFAULT_LEVELS",
    "IMG_SIZE",
    "MODEL_DIM",
    "N_TOKENS",
    "OBJECT_TOKEN",
    "PARAM_SHAPES",
    "AttentionMap",
    "FrozenBatch",
    "InferResult",
    "LossReport",
    "MaskLossResult",
    "NoiseSchedule",
    "TrainConfig",
    "TrainItem",
    "TrainResult",
    "batch_loss",
    "build_guidance",
    "finite_diff_grad",
    "flatten_params",
    "forward",
    "gradient_check",
    "infer",
    "init_params",
    "load_checkpoint",
    "make_frozen_batch",
    "make_train_item",
    "mask_loss",
    "mask_to_grid",
    "max_relative_error",
    "n_params",
    "save_checkpoint",
    "train",
    "train_step",
    "unflatten_params",
]
