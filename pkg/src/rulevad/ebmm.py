"""Behavior monitoring over a patch grid.

Two stages per patch: the change from the previous frame, and the deviation
from the mean of its 4-neighbourhood in the current frame.  Their elementwise
magnitudes form a saliency vector; a softmax over the per-patch mean saliency
weights the patches into one behavior vector per frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import GridMismatch, InputError, NonFinite

DEFAULT_ALPHA = 0.2


@dataclass(frozen=True)
class PatchGrid:
    rows: int
    cols: int
    neighbor_scheme: str = "four-neighbor"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise GridMismatch(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if self.neighbor_scheme != "four-neighbor":
            raise GridMismatch(f"unsupported neighbor scheme {self.neighbor_scheme!r}")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def neighbors(self, k: int) -> list[int]:
        r, c = divmod(k, self.cols)
        out = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < self.rows and 0 <= cc < self.cols:
                out.append(rr * self.cols + cc)
        return out


@dataclass(frozen=True, eq=False)
class BehaviorOutput:
    saliency_vectors: np.ndarray  # (n, m, d)
    saliency_scalars: np.ndarray  # (n, m)
    attention: np.ndarray  # (n, m)
    behavior_features: np.ndarray  # (n, d)


def temporal_diff(patch_features) -> np.ndarray:
    """Per-patch change from the previous frame; the first frame is all zeros."""
    p = np.asarray(patch_features, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] < 1 or p.shape[1] < 1:
        raise GridMismatch(f"patch features must be (n>=1, m>=1, d), got {p.shape}")
    out = np.zeros_like(p)
    out[1:] = p[1:] - p[:-1]
    return out


def spatial_suppress(frame_patches, grid: PatchGrid) -> np.ndarray:
    """Subtract the 4-neighbour mean from every patch of one frame (or a stack of frames).

    Accepts ``(m, d)`` or ``(n, m, d)``. A 1x1 grid has no neighbours and maps to zeros.
    """
    p = np.asarray(frame_patches, dtype=np.float64)
    single = p.ndim == 2
    if single:
        p = p[None]
    if p.ndim != 3 or p.shape[1] != grid.size:
        raise GridMismatch(f"{p.shape[-2] if p.ndim >= 2 else '?'} patches for a {grid.rows}x{grid.cols} grid")
    n, _, d = p.shape
    g = p.reshape(n, grid.rows, grid.cols, d)
    total = np.zeros_like(g)
    count = np.zeros((grid.rows, grid.cols))
    total[:, 1:] += g[:, :-1]
    count[1:] += 1
    total[:, :-1] += g[:, 1:]
    count[:-1] += 1
    total[:, :, 1:] += g[:, :, :-1]
    count[:, 1:] += 1
    total[:, :, :-1] += g[:, :, 1:]
    count[:, :-1] += 1
    out = np.zeros_like(g)
    has = count > 0
    out[:, has] = g[:, has] - total[:, has] / count[has][:, None]
    out = out.reshape(n, grid.size, d)
    return out[0] if single else out


def patch_attention(saliency_scalars, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Softmax of ``alpha * s`` over the last axis (patches), max-subtracted."""
    s = np.asarray(saliency_scalars, dtype=np.float64)
    if s.shape[-1] < 1:
        raise GridMismatch("need at least one patch")
    if not np.isfinite(alpha):
        raise InputError(f"alpha must be finite, got {alpha}")
    z = alpha * s
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def behavior_feature(patch_features, grid: PatchGrid, alpha: float = DEFAULT_ALPHA) -> BehaviorOutput:
    p = np.asarray(patch_features, dtype=np.float64)
    if p.ndim != 3 or p.shape[1] != grid.size:
        raise GridMismatch(f"patch features {p.shape} do not match a {grid.rows}x{grid.cols} grid")
    if not np.isfinite(p).all():
        raise NonFinite("patch features contain NaN or Inf")
    sal = np.abs(temporal_diff(p)) + np.abs(spatial_suppress(p, grid))
    scalars = sal.mean(axis=-1)
    att = patch_attention(scalars, alpha)
    feats = np.einsum("nm,nmd->nd", att, sal)
    return BehaviorOutput(sal, scalars, att, feats)


def fused_input(features, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Scene features plus behavior features, the input of the temporal encoder.

    Sets without patch data contribute the scene channel only.
    """
    scene = np.asarray(features.frame_features, dtype=np.float64)
    if features.n_patches == 0:
        return scene.copy()
    grid = PatchGrid(features.grid_rows, features.grid_cols)
    return scene + behavior_feature(features.patch_features, grid, alpha).behavior_features


@dataclass(frozen=True)
class ComplexityEstimate:
    ebmm_ops: int
    flow_ops: int
    ratio: Fraction

    def __str__(self):
        return f"ebmm_ops={self.ebmm_ops} flow_ops={self.flow_ops} ratio={float(self.ratio):g}"


def complexity_estimate(n: int, m: int, d: int, hw: int, kernel: int, iters: int) -> ComplexityEstimate:
    """Operation counts of patch monitoring (n*m*d) against dense optical flow (n*HW*K*I).

    Integer arithmetic is exact at any size; the ratio is kept as a Fraction.
    """
    args = dict(n=n, m=m, d=d, hw=hw, kernel=kernel, iters=iters)
    for name, v in args.items():
        if isinstance(v, float) and v.is_integer():
            v = int(v)
            args[name] = v
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise InputError(f"{name} must be a positive integer, got {v!r}")
    ebmm = args["n"] * args["m"] * args["d"]
    flow = args["n"] * args["hw"] * args["kernel"] * args["iters"]
    return ComplexityEstimate(ebmm, flow, Fraction(ebmm, flow))
