"""Architecture constants, parameter initialization, and checkpoint I/O.

The denoiser is deliberately tiny and fully explicit so its gradients can
be hand-derived and finite-difference checked:

- encoder: two stride-2 3x3 convs, 7 -> 16 -> 32 channels (32x32 -> 8x8),
- a learned linear projection of a fixed sinusoidal step embedding,
- one single-head cross-attention block over 64 spatial queries and
  5 guidance tokens (4 learned text tokens + 1 projected object token),
- object encoder: two stride-2 3x3 convs (3 -> 8 -> 16) with global average
  pooling, followed by a two-layer MLP (16 -> 32 -> 32),
- a learned null token substituted for the object token under guidance
  dropout,
- decoder: two nearest-upsample + 3x3 conv stages, 32 -> 16 -> 3.

Parameters live in an insertion-ordered dict of float64 arrays; the
declaration order below fixes both the flat-vector layout used by the
gradient checker and the checkpoint byte layout.
"""

import json
import struct
from collections import OrderedDict

import numpy as np

IMG_SIZE = 32
IN_CHANNELS = 7          # noisy latent (3) + input image (3) + object mask (1)
ENC1_CHANNELS = 16
MODEL_DIM = 32           # encoder output channels == attention model dim
ATTN_SIDE = 8
N_SPATIAL = ATTN_SIDE * ATTN_SIDE
N_TEXT_TOKENS = 4
N_TOKENS = N_TEXT_TOKENS + 1
OBJECT_TOKEN = N_TOKENS - 1  # index of the object-token attention column
OBJ1_CHANNELS = 8
OBJ2_CHANNELS = 16
DEC1_CHANNELS = 16
OUT_CHANNELS = 3
DEFAULT_LEVELS = 20

PARAM_SHAPES: "OrderedDict[str, tuple[int, ...]]" = OrderedDict(
    [
        ("enc1_w", (ENC1_CHANNELS, IN_CHANNELS, 3, 3)),
        ("enc1_b", (ENC1_CHANNELS,)),
        ("enc2_w", (MODEL_DIM, ENC1_CHANNELS, 3, 3)),
        ("enc2_b", (MODEL_DIM,)),
        ("time_w", (MODEL_DIM, MODEL_DIM)),
        ("time_b", (MODEL_DIM,)),
        ("wq", (MODEL_DIM, MODEL_DIM)),
        ("wk", (MODEL_DIM, MODEL_DIM)),
        ("wv", (MODEL_DIM, MODEL_DIM)),
        ("wo", (MODEL_DIM, MODEL_DIM)),
        ("text_tokens", (N_TEXT_TOKENS, MODEL_DIM)),
        ("null_token", (MODEL_DIM,)),
        ("obj1_w", (OBJ1_CHANNELS, OUT_CHANNELS, 3, 3)),
        ("obj1_b", (OBJ1_CHANNELS,)),
        ("obj2_w", (OBJ2_CHANNELS, OBJ1_CHANNELS, 3, 3)),
        ("obj2_b", (OBJ2_CHANNELS,)),
        ("mlp1_w", (MODEL_DIM, OBJ2_CHANNELS)),
        ("mlp1_b", (MODEL_DIM,)),
        ("mlp2_w", (MODEL_DIM, MODEL_DIM)),
        ("mlp2_b", (MODEL_DIM,)),
        ("dec1_w", (DEC1_CHANNELS, MODEL_DIM, 3, 3)),
        ("dec1_b", (DEC1_CHANNELS,)),
        ("dec2_w", (OUT_CHANNELS, DEC1_CHANNELS, 3, 3)),
        ("dec2_b", (OUT_CHANNELS,)),
    ]
)

_CHECKPOINT_MAGIC = b"EFFTOY01"


def init_params(seed: int) -> dict[str, np.ndarray]:
    """Seeded initialization: He for convs, Xavier-style for linears."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in PARAM_SHAPES.items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        elif name in ("text_tokens", "null_token"):
            params[name] = rng.normal(0.0, 0.5, size=shape)
        elif len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        else:
            fan_in, fan_out = shape[1], shape[0]
            params[name] = rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)
    return params


def n_params() -> int:
    return sum(int(np.prod(s)) for s in PARAM_SHAPES.values())


def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name in PARAM_SHAPES])


def unflatten_params(vec: np.ndarray) -> dict[str, np.ndarray]:
    params = {}
    pos = 0
    for name, shape in PARAM_SHAPES.items():
        size = int(np.prod(shape))
        params[name] = vec[pos : pos + size].reshape(shape).copy()
        pos += size
    if pos != vec.size:
        raise ValueError(f"flat vector has {vec.size} entries, expected {pos}")
    return params


def validate_params(params: dict[str, np.ndarray]) -> None:
    for name, shape in PARAM_SHAPES.items():
        if name not in params:
            raise ValueError(f"missing parameter {name!r}")
        if params[name].shape != shape:
            raise ValueError(
                f"parameter {name!r} has shape {params[name].shape}, expected {shape}"
            )


def save_checkpoint(params: dict[str, np.ndarray], path, meta: dict | None = None) -> None:
    """Versioned blob: magic, length-prefixed JSON header, float32 data.

    Arrays are serialized little-endian in declaration order.
    """
    validate_params(params)
    header = {
        "format": "efface-toynet",
        "version": 1,
        "param_shapes": {k: list(v) for k, v in PARAM_SHAPES.items()},
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    data = flatten_params(params).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(data)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a toy-net checkpoint: {path}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        raw = fh.read()
    vec = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if vec.size != n_params():
        raise ValueError(
            f"checkpoint holds {vec.size} parameters, expected {n_params()}"
        )
    return unflatten_params(vec), header.get("meta", {})
