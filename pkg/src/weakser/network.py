"""Desk-scale audio emotion classifier in plain numpy.

Two architectures: a flattened ``linear`` softmax model and a ``small_cnn``
(two valid-padded conv blocks with ReLU and stride 2, global average pool,
linear head).  Forward, softmax cross-entropy, and exact analytic gradients
are implemented directly so training is fully deterministic and cheap to
verify against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ModelConfig",
    "backward",
    "cross_entropy",
    "forward",
    "init_params",
    "softmax",
]

ARCHITECTURES = ("linear", "small_cnn")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and shape description for the classifier."""

    input_frames: int
    input_bins: int = 50
    architecture: str = "small_cnn"
    conv_channels: tuple[int, int] = (8, 16)
    kernel_size: int = 5
    conv_stride: int = 2
    num_classes: int = 4
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self) -> None:
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.input_frames < 1 or self.input_bins < 1:
            raise ValueError("input dimensions must be positive")
        if self.kernel_size < 1 or self.conv_stride < 1 or any(
            c < 1 for c in self.conv_channels
        ):
            raise ValueError("architecture parameters must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.architecture == "small_cnn":
            h, w = self.conv_output_shape()
            if h < 1 or w < 1:
                raise ValueError(
                    f"input {self.input_frames}x{self.input_bins} too small for "
                    f"two {self.kernel_size}x{self.kernel_size} stride-"
                    f"{self.conv_stride} conv blocks"
                )

    def conv_output_shape(self) -> tuple[int, int]:
        h, w = self.input_frames, self.input_bins
        for _ in self.conv_channels:
            h = (h - self.kernel_size) // self.conv_stride + 1
            w = (w - self.kernel_size) // self.conv_stride + 1
        return h, w

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["conv_channels"] = tuple(d.get("conv_channels", (8, 16)))
        return cls(**d)


def init_params(config: ModelConfig) -> dict[str, np.ndarray]:
    """Seeded parameter initialization: fan-in-scaled uniform weights, zero
    biases.  Conv kernels are stored ``[in_ch, k, k, out_ch]`` and linear
    weights ``[in_features, out_features]``."""
    rng = np.random.default_rng(config.seed)
    dtype = config.np_dtype
    k = config.kernel_size
    params: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in):
        limit = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    if config.architecture == "linear":
        n_in = config.input_frames * config.input_bins
        params["head_w"] = uniform((n_in, config.num_classes), n_in)
        params["head_b"] = np.zeros(config.num_classes, dtype=dtype)
        return params

    c1, c2 = config.conv_channels
    params["conv1_w"] = uniform((1, k, k, c1), 1 * k * k)
    params["conv1_b"] = np.zeros(c1, dtype=dtype)
    params["conv2_w"] = uniform((c1, k, k, c2), c1 * k * k)
    params["conv2_b"] = np.zeros(c2, dtype=dtype)
    params["head_w"] = uniform((c2, config.num_classes), c2)
    params["head_b"] = np.zeros(config.num_classes, dtype=dtype)
    return params


def _im2col(x: np.ndarray, k: int, s: int) -> np.ndarray:
    """NHWC input to patch matrix [B, Ho, Wo, C*k*k]."""
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # [B, H', W', C, k, k]
    win = win[:, ::s, ::s]
    b, ho, wo = win.shape[:3]
    return np.ascontiguousarray(win).reshape(b, ho, wo, -1)


def _conv_forward(x, w, b, s):
    cin, k = w.shape[0], w.shape[1]
    cols = _im2col(x, k, s)
    out = cols @ w.reshape(-1, w.shape[-1]) + b
    return out, cols


def _conv_backward(dout, cols, x_shape, w, s):
    cin, k, _, cout = w.shape
    b, ho, wo, _ = dout.shape
    dmat = dout.reshape(-1, cout)
    dw = (cols.reshape(-1, cin * k * k).T @ dmat).reshape(w.shape)
    db = dmat.sum(axis=0)
    dcols = (dmat @ w.reshape(-1, cout).T).reshape(b, ho, wo, cin, k, k)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for ki in range(k):
        for kj in range(k):
            dx[:, ki : ki + s * ho : s, kj : kj + s * wo : s, :] += dcols[:, :, :, :, ki, kj]
    return dx, dw, db


def _check_batch(config: ModelConfig, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=config.np_dtype)
    if batch.ndim != 3 or batch.shape[1:] != (config.input_frames, config.input_bins):
        raise ValueError(
            f"batch shape {batch.shape} does not match required "
            f"[B, {config.input_frames}, {config.input_bins}]"
        )
    return batch


def _forward_cache(config: ModelConfig, params, batch) -> tuple[np.ndarray, dict]:
    x = _check_batch(config, batch)
    if config.architecture == "linear":
        flat = x.reshape(x.shape[0], -1)
        logits = flat @ params["head_w"] + params["head_b"]
        return logits, {"flat": flat}

    s = config.conv_stride
    h = x[..., None]  # NHWC with one input channel
    z1, cols1 = _conv_forward(h, params["conv1_w"], params["conv1_b"], s)
    a1 = np.maximum(z1, 0.0)
    z2, cols2 = _conv_forward(a1, params["conv2_w"], params["conv2_b"], s)
    a2 = np.maximum(z2, 0.0)
    pool = a2.mean(axis=(1, 2))
    logits = pool @ params["head_w"] + params["head_b"]
    cache = {
        "x": h,
        "z1": z1,
        "a1": a1,
        "z2": z2,
        "a2": a2,
        "pool": pool,
        "cols1": cols1,
        "cols2": cols2,
    }
    return logits, cache


def forward(config: ModelConfig, params, batch) -> np.ndarray:
    """Logits ``[B, num_classes]`` for a feature batch ``[B, frames, bins]``."""
    logits, _ = _forward_cache(config, params, batch)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy and its gradient w.r.t. the logits.

    ``labels`` are integer class indices; ``dlogits`` is
    ``(softmax - onehot) / B``.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(b), labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    return loss, dlogits.astype(logits.dtype)


def backward(config: ModelConfig, params, batch, labels) -> tuple[float, dict]:
    """Mean cross-entropy loss and its exact gradients for every parameter."""
    logits, cache = _forward_cache(config, params, batch)
    loss, dlogits = cross_entropy(logits, labels)
    grads: dict[str, np.ndarray] = {}

    if config.architecture == "linear":
        flat = cache["flat"]
        grads["head_w"] = flat.T @ dlogits
        grads["head_b"] = dlogits.sum(axis=0)
        return loss, grads

    s = config.conv_stride
    pool = cache["pool"]
    grads["head_w"] = pool.T @ dlogits
    grads["head_b"] = dlogits.sum(axis=0)
    dpool = dlogits @ params["head_w"].T

    a2 = cache["a2"]
    _, h2, w2, _ = a2.shape
    da2 = np.broadcast_to(dpool[:, None, None, :], a2.shape) / (h2 * w2)
    dz2 = da2 * (cache["z2"] > 0)
    da1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(
        dz2, cache["cols2"], cache["a1"].shape, params["conv2_w"], s
    )
    dz1 = da1 * (cache["z1"] > 0)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(
        dz1, cache["cols1"], cache["x"].shape, params["conv1_w"], s
    )
    return loss, grads
