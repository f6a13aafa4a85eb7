"""Minimal convolutional policy/value network with hand-written gradients.

Fixed architecture: three 2x2 convolutions (32/64/64 channels, stride 1,
zero padding on the bottom/right edge so H x W is preserved), ReLU
activations, then a dense policy head producing one logit per board cell
and a dense value head producing a scalar. Forward and backward are plain
numpy; convolution is an im2col patch matrix times a flattened kernel, so
the heavy lifting lands in BLAS.

Storage is float32; gradient checking runs the same code in float64 by
initializing parameters with dtype=np.float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteValue, ShapeError

CONV_WIDTHS = (32, 64, 64)

ARRAY_ORDER = (
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
    "policy_w", "policy_b", "value_w", "value_b",
)

_CKPT_MAGIC = "blastlab-ckpt v1"


@dataclass
class NetworkParams:
    """All learnable arrays plus the input geometry they were built for."""

    height: int
    width: int
    in_channels: int
    channel_legend: tuple[str, ...]
    arrays: dict[str, np.ndarray]
    init_scheme: str = "orthogonal-scaled"

    @property
    def param_count(self) -> int:
        return sum(int(a.size) for a in self.arrays.values())

    @property
    def n_actions(self) -> int:
        return self.height * self.width

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.height, self.width, self.in_channels,
                             self.channel_legend,
                             {k: v.copy() for k, v in self.arrays.items()},
                             self.init_scheme)


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float,
                dtype) -> np.ndarray:
    a = rng.standard_normal((rows, cols))
    if rows < cols:
        q, r = np.linalg.qr(a.T)
        q = q.T
        d = np.sign(np.diag(r))
        q = (d[:, None] * q)[:rows, :cols]
    else:
        q, r = np.linalg.qr(a)
        d = np.sign(np.diag(r))
        q = (q * d[None, :])[:rows, :cols]
    return (gain * q).astype(dtype)


def init_params(height: int, width: int, in_channels: int,
                channel_legend: tuple[str, ...] | None = None,
                seed: int = 0, dtype=np.float32) -> NetworkParams:
    """Orthogonally initialized parameters; deterministic in the seed.

    Gains: sqrt(2) for the ReLU trunk, 0.01 for the policy head (a
    near-uniform starting policy), 1.0 for the value head. Biases zero.
    """
    if channel_legend is None:
        channel_legend = tuple(f"ch{i}" for i in range(in_channels))
    if len(channel_legend) != in_channels:
        raise ShapeError("channel_legend length must match in_channels")
    rng = np.random.default_rng(np.random.SeedSequence([seed, height, width, in_channels]))
    n_act = height * width
    feat = n_act * CONV_WIDTHS[2]
    arrays: dict[str, np.ndarray] = {}
    c_in = in_channels
    relu_gain = float(np.sqrt(2.0))
    for i, c_out in enumerate(CONV_WIDTHS, start=1):
        k = _orthogonal(rng, 4 * c_in, c_out, relu_gain, dtype)
        arrays[f"conv{i}_w"] = k.reshape(2, 2, c_in, c_out)
        arrays[f"conv{i}_b"] = np.zeros(c_out, dtype)
        c_in = c_out
    arrays["policy_w"] = _orthogonal(rng, feat, n_act, 0.01, dtype)
    arrays["policy_b"] = np.zeros(n_act, dtype)
    arrays["value_w"] = _orthogonal(rng, feat, 1, 1.0, dtype)
    arrays["value_b"] = np.zeros(1, dtype)
    return NetworkParams(height, width, in_channels, channel_legend, arrays)


def _check_finite(name: str, *tensors: np.ndarray) -> None:
    for t in tensors:
        if not np.isfinite(t).all():
            raise NonFiniteValue(f"non-finite values in {name}")


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (H, W, C) or (B, H, W, C), got {x.shape}")


def _patches(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B, H, W, 4C) im2col for a 2x2 window, padded bottom/right."""
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 1, w + 1, c), x.dtype)
    xp[:, :h, :w] = x
    return np.concatenate(
        (xp[:, :h, :w], xp[:, :h, 1:], xp[:, 1:, :w], xp[:, 1:, 1:]), axis=3)


def conv2d_forward(x: np.ndarray, kernel: np.ndarray,
                   bias: np.ndarray | None = None) -> np.ndarray:
    """Cross-correlate with a 2x2 kernel, preserving the spatial dims.

    x: (H, W, Cin) or (B, H, W, Cin); kernel: (2, 2, Cin, Cout).
    """
    xb, squeeze = _as_batch(x)
    if kernel.ndim != 4 or kernel.shape[:2] != (2, 2) or kernel.shape[2] != xb.shape[3]:
        raise ShapeError(f"kernel {kernel.shape} does not fit input {x.shape}")
    c_out = kernel.shape[3]
    p = _patches(xb)
    y = p.reshape(-1, p.shape[3]) @ kernel.reshape(-1, c_out)
    if bias is not None:
        y += bias
    y = y.reshape(xb.shape[0], xb.shape[1], xb.shape[2], c_out)
    return y[0] if squeeze else y


def conv2d_backward(x: np.ndarray, kernel: np.ndarray,
                    dy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward: returns (dx, dkernel, dbias)."""
    xb, squeeze = _as_batch(x)
    dyb, _ = _as_batch(dy)
    if dyb.shape[:3] != xb.shape[:3] or dyb.shape[3] != kernel.shape[3]:
        raise ShapeError(f"dy {dy.shape} does not fit input {x.shape}")
    b, h, w, c_in = xb.shape
    c_out = kernel.shape[3]
    p = _patches(xb)
    dy_flat = dyb.reshape(-1, c_out)
    dkernel = (p.reshape(-1, 4 * c_in).T @ dy_flat).reshape(2, 2, c_in, c_out)
    dbias = dy_flat.sum(axis=0)
    dp = (dy_flat @ kernel.reshape(-1, c_out).T).reshape(b, h, w, 4 * c_in)
    dxp = np.zeros((b, h + 1, w + 1, c_in), xb.dtype)
    dxp[:, :h, :w] += dp[..., 0 * c_in:1 * c_in]
    dxp[:, :h, 1:] += dp[..., 1 * c_in:2 * c_in]
    dxp[:, 1:, :w] += dp[..., 2 * c_in:3 * c_in]
    dxp[:, 1:, 1:] += dp[..., 3 * c_in:4 * c_in]
    dx = dxp[:, :h, :w]
    return (dx[0] if squeeze else dx), dkernel, dbias


def forward_batch(params: NetworkParams, x: np.ndarray,
                  need_cache: bool = False):
    """Batched trunk + heads. Returns (logits (B, H*W), values (B,), cache)."""
    if x.ndim != 4 or x.shape[1:] != (params.height, params.width, params.in_channels):
        raise ShapeError(
            f"input {x.shape} does not match network "
            f"({params.height}, {params.width}, {params.in_channels})")
    a = params.arrays
    z1 = conv2d_forward(x, a["conv1_w"], a["conv1_b"])
    a1 = np.maximum(z1, 0)
    z2 = conv2d_forward(a1, a["conv2_w"], a["conv2_b"])
    a2 = np.maximum(z2, 0)
    z3 = conv2d_forward(a2, a["conv3_w"], a["conv3_b"])
    a3 = np.maximum(z3, 0)
    flat = a3.reshape(x.shape[0], -1)
    logits = flat @ a["policy_w"] + a["policy_b"]
    values = (flat @ a["value_w"] + a["value_b"])[:, 0]
    _check_finite("forward outputs", logits, values)
    cache = (x, z1, a1, z2, a2, z3, flat) if need_cache else None
    return logits, values, cache


def forward(params: NetworkParams, obs) -> tuple[np.ndarray, float]:
    """Single-observation forward pass: raw logits (masking happens downstream)."""
    tensor = obs.tensor if hasattr(obs, "tensor") else obs
    logits, values, _ = forward_batch(params, np.asarray(tensor, np.float32)[None])
    return logits[0], float(values[0])


def backward_batch(params: NetworkParams, cache, dlogits: np.ndarray,
                   dvalues: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of (logits, values) contracted with (dlogits, dvalues)."""
    x, z1, a1, z2, a2, z3, flat = cache
    a = params.arrays
    grads: dict[str, np.ndarray] = {}
    grads["policy_w"] = flat.T @ dlogits
    grads["policy_b"] = dlogits.sum(axis=0)
    grads["value_w"] = (flat.T @ dvalues)[:, None]
    grads["value_b"] = np.asarray([dvalues.sum()], flat.dtype)
    dflat = dlogits @ a["policy_w"].T + dvalues[:, None] * a["value_w"][:, 0][None, :]
    da3 = dflat.reshape(z3.shape)
    dz3 = da3 * (z3 > 0)
    da2, grads["conv3_w"], grads["conv3_b"] = conv2d_backward(a2, a["conv3_w"], dz3)
    dz2 = da2 * (z2 > 0)
    da1, grads["conv2_w"], grads["conv2_b"] = conv2d_backward(a1, a["conv2_w"], dz2)
    dz1 = da1 * (z1 > 0)
    _, grads["conv1_w"], grads["conv1_b"] = conv2d_backward(x, a["conv1_w"], dz1)
    _check_finite("gradients", *grads.values())
    return grads


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over unmasked entries; masked entries get exactly 0."""
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    stable = z - zmax
    log_norm = np.log(np.exp(stable).sum(axis=-1, keepdims=True))
    return stable - log_norm


def masked_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy along the last axis with 0 * log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
    return -plogp.sum(axis=-1)


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: NetworkParams) -> "AdamState":
        return cls(0,
                   {k: np.zeros_like(v) for k, v in params.arrays.items()},
                   {k: np.zeros_like(v) for k, v in params.arrays.items()})


def adam_step(arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh arrays and state."""
    b1, b2 = betas
    t = state.step + 1
    new_arrays: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in arrays.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad {name} shape {g.shape} != param {p.shape}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_arrays[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_arrays, AdamState(t, new_m, new_v)


def save_checkpoint(params: NetworkParams, path) -> None:
    """Versioned header + JSON metadata + raw little-endian arrays."""
    header = {
        "height": params.height,
        "width": params.width,
        "in_channels": params.in_channels,
        "channel_legend": list(params.channel_legend),
        "init_scheme": params.init_scheme,
        "arrays": [
            {"name": name, "shape": list(params.arrays[name].shape),
             "dtype": params.arrays[name].dtype.str.replace(">", "<")}
            for name in ARRAY_ORDER
        ],
    }
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC.encode() + b"\n")
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for name in ARRAY_ORDER:
            arr = params.arrays[name]
            f.write(np.ascontiguousarray(arr, arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> NetworkParams:
    """Bit-exact inverse of save_checkpoint."""
    with open(path, "rb") as f:
        magic = f.readline().strip().decode()
        if magic != _CKPT_MAGIC:
            raise ShapeError(f"not a checkpoint file: {path}")
        header = json.loads(f.readline().decode())
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            dtype = np.dtype(spec["dtype"])
            n_bytes = int(np.prod(shape)) * dtype.itemsize
            buf = f.read(n_bytes)
            if len(buf) != n_bytes:
                raise ShapeError(f"truncated checkpoint: {path}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype).reshape(shape).copy()
    return NetworkParams(header["height"], header["width"], header["in_channels"],
                         tuple(header["channel_legend"]), arrays,
                         header["init_scheme"])
