"""Lightweight temporal encoder with an index-distance attention kernel.

Frame ``i`` attends to frame ``j`` with weight proportional to
``exp(-|i - j| / sigma)``, so the attention matrix never looks at feature
content.  Because the kernel is a two-sided exponential decay, ``W @ X`` can be
evaluated with one forward and one backward scan in ``O(n * dim)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimMismatch, LengthMismatch, NonFinite, ShapeMismatch

DEFAULT_SIGMA = 0.8
LN_EPS = 1e-5
PROB_CLAMP = 1e-7
TOPK_DIVISOR = 16


class OpCounter:
    """Tally of multiply-add operations, for checking asymptotic cost."""

    def __init__(self):
        self.madds = 0

    def add(self, k: int) -> None:
        self.madds += int(k)


@dataclass(frozen=True, eq=False)
class DistanceKernel:
    n: int
    sigma: float
    rows: np.ndarray


def build_kernel(n: int, sigma: float = DEFAULT_SIGMA, counter: OpCounter | None = None) -> DistanceKernel:
    if n < 1:
        raise ShapeMismatch(f"kernel length must be >= 1, got {n}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    idx = np.arange(n)
    logits = -np.abs(idx[:, None] - idx[None, :]) / sigma
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    if counter is not None:
        counter.add(n * n)
    w.setflags(write=False)
    return DistanceKernel(n, float(sigma), w)


def apply_kernel_dense(kernel: DistanceKernel, X, counter: OpCounter | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != kernel.n:
        raise ShapeMismatch(f"input {X.shape} does not match kernel length {kernel.n}")
    if counter is not None:
        counter.add(kernel.n * kernel.n * X.shape[1])
    return kernel.rows @ X


def apply_kernel_scan(X, sigma: float = DEFAULT_SIGMA, counter: OpCounter | None = None) -> np.ndarray:
    """``W @ X`` for the distance kernel, via two decay scans (no n x n matrix).

    ``F_i = x_i + rho * F_{i-1}`` and ``B_i = rho * (x_{i+1} + B_{i+1})`` with
    ``rho = exp(-1/sigma)``; the row normaliser is the same pair of scans on ones.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeMismatch(f"input must be (n>=1, dim), got {X.shape}")
    n, d = X.shape
    rho = math.exp(-1.0 / sigma)

    fwd = np.empty_like(X)
    fwd_den = np.empty(n)
    fwd[0] = X[0]
    fwd_den[0] = 1.0
    for i in range(1, n):
        fwd[i] = X[i] + rho * fwd[i - 1]
        fwd_den[i] = 1.0 + rho * fwd_den[i - 1]

    bwd = np.zeros_like(X)
    bwd_den = np.zeros(n)
    for i in range(n - 2, -1, -1):
        bwd[i] = rho * (X[i + 1] + bwd[i + 1])
        bwd_den[i] = rho * (1.0 + bwd_den[i + 1])

    if counter is not None:
        # two vector scans, two scalar scans, one add and one divide per entry
        counter.add(2 * (n - 1) * d + 2 * (n - 1) + 2 * n * d)
    return (fwd + bwd) / (fwd_den + bwd_den)[:, None]


@dataclass(eq=False)
class TemporalEncoderParams:
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ffn_w1: np.ndarray  # (dim, hidden)
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray  # (hidden, dim)
    ffn_b2: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray  # shape (1,)

    @property
    def dim(self) -> int:
        return self.ln1_gain.shape[0]

    @property
    def ffn_hidden(self) -> int:
        return self.ffn_b1.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "TemporalEncoderParams":
        return TemporalEncoderParams(**{k: v.copy() for k, v in self.tensors().items()})

    def validate(self) -> None:
        d, h = self.dim, self.ffn_hidden
        shapes = param_shapes(d, h)
        for name, arr in self.tensors().items():
            if arr.shape != shapes[name]:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            if not np.isfinite(arr).all():
                raise NonFinite(f"parameter {name} is not finite")


def param_shapes(dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "ln1_gain": (dim,),
        "ln1_bias": (dim,),
        "ffn_w1": (dim, hidden),
        "ffn_b1": (hidden,),
        "ffn_w2": (hidden, dim),
        "ffn_b2": (dim,),
        "ln2_gain": (dim,),
        "ln2_bias": (dim,),
        "head_w": (dim,),
        "head_b": (1,),
    }


def init_params(dim: int, ffn_hidden: int | None = None, seed: int = 0) -> TemporalEncoderParams:
    """Unit LN gains, zero biases, fan-in scaled Gaussian weights."""
    hidden = ffn_hidden if ffn_hidden is not None else 2 * dim
    rng = np.random.default_rng(seed)
    return TemporalEncoderParams(
        ln1_gain=np.ones(dim),
        ln1_bias=np.zeros(dim),
        ffn_w1=rng.normal(0.0, 1.0 / math.sqrt(dim), (dim, hidden)),
        ffn_b1=np.zeros(hidden),
        ffn_w2=rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, dim)),
        ffn_b2=np.zeros(dim),
        ln2_gain=np.ones(dim),
        ln2_bias=np.zeros(dim),
        head_w=rng.normal(0.0, 1.0 / math.sqrt(dim), dim),
        head_b=np.zeros(1),
    )


def layer_norm(x, gain, bias, eps: float = LN_EPS) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def silu(u):
    return u / (1.0 + np.exp(-u))


def sigmoid(u):
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def ffn(z, params: TemporalEncoderParams) -> np.ndarray:
    return silu(z @ params.ffn_w1 + params.ffn_b1) @ params.ffn_w2 + params.ffn_b2


def encode_mixed(mixed, params: TemporalEncoderParams) -> np.ndarray:
    """Both encoder stages applied to already kernel-mixed frames."""
    mixed = np.asarray(mixed, dtype=np.float64)
    if mixed.ndim != 2 or mixed.shape[1] != params.dim:
        raise ShapeMismatch(f"input {mixed.shape} does not match encoder dim {params.dim}")
    stage1 = layer_norm(mixed, params.ln1_gain, params.ln1_bias)
    out = layer_norm(ffn(stage1, params) + stage1, params.ln2_gain, params.ln2_bias)
    if not np.isfinite(out).all():
        raise NonFinite("encoder output is not finite")
    return out


def encode(X, params: TemporalEncoderParams, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.dim:
        raise ShapeMismatch(f"input {X.shape} does not match encoder dim {params.dim}")
    if not np.isfinite(X).all():
        raise NonFinite("encoder input is not finite")
    return encode_mixed(apply_kernel_scan(X, sigma), params)


def topk_count(n: int) -> int:
    return max(1, math.ceil(n / TOPK_DIVISOR))


def topk_mean(scores) -> float:
    s = np.asarray(scores, dtype=np.float64)
    k = topk_count(len(s))
    return float(np.sort(s)[-k:].mean())


@dataclass(frozen=True, eq=False)
class FrameScores:
    frame: np.ndarray
    pooled: float


def frame_logits(psi, params: TemporalEncoderParams) -> np.ndarray:
    return np.asarray(psi, dtype=np.float64) @ params.head_w + params.head_b[0]


def classify(psi, params: TemporalEncoderParams) -> FrameScores:
    probs = sigmoid(frame_logits(psi, params))
    return FrameScores(probs, topk_mean(probs))


def bce_loss(pred, labels) -> float:
    p = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise LengthMismatch("empty prediction vector")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


# checkpoint file: "RVP1", u32 dim, u32 hidden, u32 prompt_len, then float32 tensors
CHECKPOINT_MAGIC = b"RVP1"
_CKPT_HEADER = struct.Struct("<3I")


def save_checkpoint(path, params: TemporalEncoderParams, prompts: np.ndarray) -> None:
    prompts = np.asarray(prompts, dtype=np.float64).reshape(-1, params.dim)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(_CKPT_HEADER.pack(params.dim, params.ffn_hidden, prompts.shape[0]))
        for arr in params.tensors().values():
            f.write(np.asarray(arr, dtype="<f4").tobytes(order="C"))
        f.write(prompts.astype("<f4").tobytes(order="C"))


def load_checkpoint(path) -> tuple[TemporalEncoderParams, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    if len(raw) < 4 + _CKPT_HEADER.size:
        raise DimMismatch(f"{path}: truncated checkpoint header")
    dim, hidden, plen = _CKPT_HEADER.unpack_from(raw, 4)
    shapes = param_shapes(dim, hidden)
    total = sum(math.prod(s) for s in shapes.values()) + plen * dim
    body = raw[4 + _CKPT_HEADER.size:]
    if len(body) != 4 * total:
        raise DimMismatch(f"{path}: payload size does not match dim={dim}, hidden={hidden}, prompts={plen}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    if not np.isfinite(values).all():
        raise NonFinite(f"{path}: checkpoint contains NaN or Inf")
    tensors, pos = {}, 0
    for name, shape in shapes.items():
        size = math.prod(shape)
        tensors[name] = values[pos:pos + size].reshape(shape).copy()
        pos += size
    prompts = values[pos:].reshape(plen, dim).copy()
    return TemporalEncoderParams(**tensors), prompts
