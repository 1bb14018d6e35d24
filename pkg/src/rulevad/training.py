"""Joint training of the temporal encoder, classifier head and prompt bank.

Gradients are derived by hand (reverse mode, float64) for the summed objective
of video/frame BCE, text-video alignment and normal-vs-abnormal text contrast.
Feature tensors and token vectors are constants: the kernel-mixed frame
matrix of each video is computed once and never differentiated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import align
from .ebmm import DEFAULT_ALPHA, fused_input
from .errors import EmptyDataset, GradientNonFinite, InputError, TooFewClasses
from .feature_store import (
    DatasetManifest,
    VideoFeatureSet,
    load_features,
    load_frame_labels,
    load_transcript,
)
from .lite_temporal import (
    DEFAULT_SIGMA,
    LN_EPS,
    PROB_CLAMP,
    FrameScores,
    TemporalEncoderParams,
    apply_kernel_scan,
    classify,
    encode_mixed,
    init_params,
    sigmoid,
    topk_count,
)
from .rulemine import MiningConfig, TransactionDB, mine, rules_to_text, transcript_to_transactions

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 500
    batch: int = 16
    seed: int = 0
    max_video_len: int = 256
    alpha: float = DEFAULT_ALPHA
    sigma: float = DEFAULT_SIGMA
    tau: float = align.DEFAULT_TAU
    delta: float = align.DEFAULT_DELTA
    lambda1: float = 5e-4
    lambda2: float = 6e-4
    prompt_len: int = align.DEFAULT_PROMPT_LEN
    ffn_hidden: int = 0  # 0 means 2 * dim
    bce_mode: str = "video"
    normal_class: str = "Normal"
    min_support: float = 0.3
    min_confidence: float = 0.8
    max_rules: int = 8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InputError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.max_video_len < 1:
            raise InputError("max_video_len must be >= 1")
        if self.batch < 1:
            raise InputError("batch must be >= 1")
        if self.bce_mode not in ("video", "frame"):
            raise InputError(f"bce_mode must be 'video' or 'frame', got {self.bce_mode!r}")


@dataclass(eq=False)
class Model:
    encoder: TemporalEncoderParams
    prompts: np.ndarray  # (prompt_len, dim)

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.encoder.tensors(), "prompts": self.prompts}

    def copy(self) -> "Model":
        return Model(self.encoder.copy(), self.prompts.copy())

    @classmethod
    def init(cls, dim: int, prompt_len: int = align.DEFAULT_PROMPT_LEN, ffn_hidden: int | None = None,
             seed: int = 0) -> "Model":
        return cls(init_params(dim, ffn_hidden or None, seed), align.PromptBank.init(prompt_len, dim, seed).vectors)


@dataclass(eq=False)
class VideoItem:
    video_id: str
    mixed: np.ndarray  # kernel-mixed fused features, (n, dim), read-only
    label: int
    class_index: int
    frame_labels: np.ndarray | None = None


@dataclass(eq=False)
class ClassText:
    names: list[str]
    token_sums: np.ndarray  # (classes, dim)
    token_counts: np.ndarray  # (classes,)
    normal_index: int
    rule_texts: list[list[str]] = field(default_factory=list)


@dataclass(frozen=True)
class LossConfig:
    tau: float = align.DEFAULT_TAU
    delta: float = align.DEFAULT_DELTA
    lambda1: float = 5e-4
    lambda2: float = 6e-4
    bce_mode: str = "video"
    reduction: str = "mean"

    @classmethod
    def from_train(cls, cfg: TrainConfig) -> "LossConfig":
        return cls(cfg.tau, cfg.delta, cfg.lambda1, cfg.lambda2, cfg.bce_mode)


@dataclass(eq=False)
class Batch:
    """Videos plus optional class texts; without texts only the BCE term is active."""

    videos: list[VideoItem]
    text: ClassText | None = None
    loss: LossConfig = field(default_factory=LossConfig)


@dataclass
class LossParts:
    bce: float
    align: float
    contrast: float

    @property
    def total(self) -> float:
        return align.total_loss(self.align, self.contrast, self.bce)


# ---------------------------------------------------------------- forward/backward


def _ln_forward(x, gain, bias):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def _ln_backward(dy, gain, cache):
    xhat, inv = cache
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
    return dx, dgain, dbias


def _encoder_forward(mixed, p: TemporalEncoderParams):
    stage1, ln1 = _ln_forward(mixed, p.ln1_gain, p.ln1_bias)
    pre = stage1 @ p.ffn_w1 + p.ffn_b1
    sig = sigmoid(pre)
    act = pre * sig
    resid = act @ p.ffn_w2 + p.ffn_b2 + stage1
    psi, ln2 = _ln_forward(resid, p.ln2_gain, p.ln2_bias)
    return psi, (stage1, ln1, pre, sig, act, ln2)


def _encoder_backward(dpsi, p: TemporalEncoderParams, cache, g: dict) -> None:
    stage1, ln1, pre, sig, act, ln2 = cache
    dresid, dg2, db2 = _ln_backward(dpsi, p.ln2_gain, ln2)
    g["ln2_gain"] += dg2
    g["ln2_bias"] += db2
    g["ffn_w2"] += act.T @ dresid
    g["ffn_b2"] += dresid.sum(axis=0)
    dpre = (dresid @ p.ffn_w2.T) * (sig + pre * sig * (1.0 - sig))
    g["ffn_w1"] += stage1.T @ dpre
    g["ffn_b1"] += dpre.sum(axis=0)
    dstage1 = dresid + dpre @ p.ffn_w1.T
    _, dg1, db1 = _ln_backward(dstage1, p.ln1_gain, ln1)
    g["ln1_gain"] += dg1
    g["ln1_bias"] += db1


def _bce_terms(prob, y):
    """Per-element clamped BCE and its derivative w.r.t. the unclamped probability."""
    p = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    inside = (prob >= PROB_CLAMP) & (prob <= 1.0 - PROB_CLAMP)
    dprob = np.where(inside, -y / p + (1.0 - y) / (1.0 - p), 0.0)
    return loss, dprob


def _unit_backward(dt, t, norm):
    return (dt - t * np.dot(t, dt)) / norm


def loss_and_grad(model: Model, batch: Batch) -> tuple[LossParts, dict[str, np.ndarray]]:
    """Total loss components and exact gradients for every trainable tensor."""
    p = model.encoder
    cfg = batch.loss
    if not batch.videos:
        raise EmptyDataset("empty batch")
    g = {k: np.zeros_like(v) for k, v in model.tensors().items()}

    fwd = []
    for v in batch.videos:
        psi, cache = _encoder_forward(v.mixed, p)
        logits = psi @ p.head_w + p.head_b[0]
        fwd.append((psi, cache, logits, sigmoid(logits)))

    # BCE over pooled video scores (weak labels) or over every frame
    dpsi = [np.zeros_like(f[0]) for f in fwd]
    dlogits = [np.zeros_like(f[2]) for f in fwd]
    if cfg.bce_mode == "video":
        denom = len(fwd) if cfg.reduction == "mean" else 1
        bce = 0.0
        for i, (v, (_, _, _, prob)) in enumerate(zip(batch.videos, fwd)):
            k = topk_count(len(prob))
            top = np.argsort(prob, kind="mergesort")[-k:]
            pooled = prob[top].mean()
            loss, dpooled = _bce_terms(np.array([pooled]), float(v.label))
            bce += loss[0] / denom
            dlogits[i][top] += dpooled[0] / denom / k * prob[top] * (1.0 - prob[top])
    else:
        n_total = sum(len(f[3]) for f in fwd)
        denom = n_total if cfg.reduction == "mean" else 1
        bce = 0.0
        for i, (v, (_, _, _, prob)) in enumerate(zip(batch.videos, fwd)):
            if v.frame_labels is None:
                raise InputError(f"video {v.video_id!r} has no frame labels for frame-level BCE")
            loss, dprob = _bce_terms(prob, v.frame_labels.astype(np.float64))
            bce += loss.sum() / denom
            dlogits[i] += dprob / denom * prob * (1.0 - prob)

    l_align = l_contrast = 0.0
    text = batch.text
    if text is not None:
        n_cls = len(text.names)
        if n_cls < 2:
            raise TooFewClasses("alignment needs at least two classes")
        prompts = model.prompts
        P = prompts.shape[0]
        counts = text.token_counts + P
        e = (prompts.sum(axis=0) + text.token_sums) / counts[:, None]
        e_norm = np.linalg.norm(e, axis=1)
        if not (e_norm > 0).all():
            raise align.DegenerateEmbedding("a class text embedding has zero norm")
        T = e / e_norm[:, None]
        dT = np.zeros_like(T)

        # one aggregated video embedding per class present in the batch
        present = sorted({v.class_index for v in batch.videos})
        members = {c: [i for i, v in enumerate(batch.videos) if v.class_index == c] for c in present}
        units, means = {}, {}
        for i, (psi, *_rest) in enumerate(fwd):
            m = psi.mean(axis=0)
            nm = np.linalg.norm(m)
            if not nm > 0:
                raise align.DegenerateEmbedding(f"video {batch.videos[i].video_id!r} embeds to zero")
            means[i] = nm
            units[i] = m / nm
        agg = np.array([np.mean([units[i] for i in members[c]], axis=0) for c in present])
        agg_norm = np.linalg.norm(agg, axis=1)
        if not (agg_norm > 0).all():
            raise align.DegenerateEmbedding("a class video embedding has zero norm")
        V = agg / agg_norm[:, None]

        Ts = T[present]
        scaled = (Ts @ V.T) / cfg.tau
        scaled -= scaled.max(axis=1, keepdims=True)
        logp = scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))
        reg = float(np.sum(prompts**2))
        l_align = -float(np.trace(logp)) + cfg.lambda1 * reg
        dM = (np.exp(logp) - np.eye(len(present))) / cfg.tau
        dT[present] += dM @ V
        dV = dM.T @ Ts
        g["prompts"] += 2.0 * cfg.lambda1 * prompts

        n = text.normal_index
        cos = T @ T[n]
        active = (cos - cfg.delta > 0.0)
        active[n] = False
        l_contrast = float(np.sum((cos - cfg.delta)[active])) + cfg.lambda2 * reg
        dT[active] += T[n]
        dT[n] += T[active].sum(axis=0)
        g["prompts"] += 2.0 * cfg.lambda2 * prompts

        de = np.array([_unit_backward(dT[c], T[c], e_norm[c]) for c in range(n_cls)])
        g["prompts"] += (de / counts[:, None]).sum(axis=0)[None, :]

        for row, c in enumerate(present):
            dagg = _unit_backward(dV[row], V[row], agg_norm[row])
            for i in members[c]:
                du = dagg / len(members[c])
                dmean = _unit_backward(du, units[i], means[i])
                dpsi[i] += dmean[None, :] / fwd[i][0].shape[0]

    for i, (psi, cache, _, _) in enumerate(fwd):
        g["head_w"] += psi.T @ dlogits[i]
        g["head_b"] += dlogits[i].sum()
        dpsi[i] += np.outer(dlogits[i], p.head_w)
        _encoder_backward(dpsi[i], p, cache, g)

    for name, arr in g.items():
        if not np.isfinite(arr).all():
            raise GradientNonFinite(f"gradient of {name} is not finite")
    return LossParts(float(bce), l_align, l_contrast), g


def loss_value(model: Model, batch: Batch) -> LossParts:
    return loss_and_grad(model, batch)[0]


def grad(model: Model, batch: Batch) -> dict[str, np.ndarray]:
    return loss_and_grad(model, batch)[1]


# ---------------------------------------------------------------- gradient check


@dataclass
class GradReport:
    per_tensor: dict[str, float]

    @property
    def overall(self) -> float:
        return max(self.per_tensor.values(), default=0.0)


def relative_error(a, f) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)


def fd_check(objective, tensors: dict[str, np.ndarray], epsilon: float = 1e-4, coords: int = 200,
             seed: int = 0) -> GradReport:
    """Central differences on a seeded sample of coordinates of each tensor.

    ``objective(tensors) -> (loss, grads)``; tensors are perturbed in place and restored.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    _, analytic = objective(tensors)
    rng = np.random.default_rng(seed)
    report = {}
    for name, arr in tensors.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size) if flat.size <= coords else rng.choice(flat.size, coords, replace=False)
        worst = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + epsilon
            up = objective(tensors)[0]
            flat[j] = orig - epsilon
            down = objective(tensors)[0]
            flat[j] = orig
            fd = (up - down) / (2.0 * epsilon)
            worst = max(worst, float(relative_error(analytic[name].reshape(-1)[j], fd)))
        report[name] = worst
    return GradReport(report)


def finite_diff_check(model: Model, batch: Batch, epsilon: float = 1e-4, coords: int = 200,
                      seed: int = 0) -> GradReport:
    work = model.copy()
    tensors = work.tensors()

    def objective(_):
        parts, g = loss_and_grad(work, batch)
        return parts.total, g

    return fd_check(objective, tensors, epsilon, coords, seed)


# ---------------------------------------------------------------- data preparation


def subsample_indices(n: int, max_len: int) -> np.ndarray:
    """Evenly spaced frame indices when ``n`` exceeds ``max_len``."""
    if n <= max_len:
        return np.arange(n)
    return np.floor(np.arange(max_len) * (n / max_len)).astype(np.int64)


def subsample_features(fs: VideoFeatureSet, max_len: int) -> VideoFeatureSet:
    idx = subsample_indices(fs.n_frames, max_len)
    if len(idx) == fs.n_frames:
        return fs
    return VideoFeatureSet(fs.video_id, fs.frame_features[idx], fs.patch_features[idx], fs.grid_rows, fs.grid_cols)


def mix_features(fs: VideoFeatureSet, alpha: float, sigma: float) -> np.ndarray:
    mixed = apply_kernel_scan(fused_input(fs, alpha), sigma)
    mixed.setflags(write=False)
    return mixed


def class_rule_texts(transcripts_by_class: dict[str, list], cfg: TrainConfig) -> dict[str, list[str]]:
    """Rendered rules mined from each class's transcripts, the class name appended as an item."""
    out = {}
    mcfg = MiningConfig(cfg.min_support, cfg.min_confidence)
    for name, transcripts in transcripts_by_class.items():
        db = TransactionDB.concat(transcript_to_transactions(t, name) for t in transcripts)
        texts = rules_to_text(mine(db, mcfg).rules, cfg.max_rules) if len(db) else []
        out[name] = texts or [name]
    return out


def build_class_text(names: list[str], rule_texts: dict[str, list[str]], embedder: align.TextEmbedder,
                     normal_index: int) -> ClassText:
    sums, counts = [], []
    for name in names:
        s, c = align.token_sum(rule_texts[name], embedder)
        sums.append(s)
        counts.append(c)
    return ClassText(list(names), np.array(sums), np.array(counts, dtype=np.float64), normal_index,
                     [rule_texts[n] for n in names])


@dataclass(eq=False)
class PreparedDataset:
    videos: list[VideoItem]
    text: ClassText | None
    dim: int


def resolve_normal_index(names: list[str], labels_by_class: dict[str, set], normal_class: str) -> int:
    if normal_class in names:
        return names.index(normal_class)
    normals = [n for n in names if labels_by_class[n] == {0}]
    if len(normals) == 1:
        return names.index(normals[0])
    raise InputError(f"cannot identify the normal class (no class named {normal_class!r})")


def prepare_dataset(manifest: DatasetManifest, cfg: TrainConfig,
                    embedder: align.TextEmbedder | None = None) -> PreparedDataset:
    if len(manifest) == 0:
        raise EmptyDataset("manifest has no entries")
    names = manifest.class_names
    videos, transcripts = [], {n: [] for n in names}
    labels_by_class = {n: set() for n in names}
    dim = None
    for e in manifest:
        fs = load_features(e.feature_path, e.video_id)
        if dim is None:
            dim = fs.dim
        elif fs.dim != dim:
            raise InputError(f"video {e.video_id!r} has dim {fs.dim}, expected {dim}")
        n_orig = fs.n_frames
        idx = subsample_indices(n_orig, cfg.max_video_len)
        fs = subsample_features(fs, cfg.max_video_len)
        frame_labels = None
        if e.frame_labels_path is not None:
            frame_labels = load_frame_labels(e.frame_labels_path)
            if len(frame_labels) != n_orig:
                raise InputError(f"video {e.video_id!r}: {len(frame_labels)} frame labels for {n_orig} frames")
            frame_labels = frame_labels[idx]
        if e.transcript_path is not None:
            transcripts[e.class_name].append(load_transcript(e.transcript_path, e.video_id))
        labels_by_class[e.class_name].add(e.video_label)
        videos.append(VideoItem(e.video_id, mix_features(fs, cfg.alpha, cfg.sigma), e.video_label,
                                names.index(e.class_name), frame_labels))
    text = None
    if len(names) >= 2:
        embedder = embedder or align.TextEmbedder(dim, seed=cfg.seed)
        normal = resolve_normal_index(names, labels_by_class, cfg.normal_class)
        text = build_class_text(names, class_rule_texts(transcripts, cfg), embedder, normal)
    return PreparedDataset(videos, text, dim)


# ---------------------------------------------------------------- optimisation


class AdamW:
    """Moment-based updates with decoupled weight decay."""

    def __init__(self, tensors: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k, theta in tensors.items():
            gk = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * gk
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * gk * gk
            theta *= 1.0 - c.learning_rate * c.weight_decay
            theta -= c.learning_rate * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


@dataclass
class TrainResult:
    model: Model
    history: list[tuple[int, float, float, float, float]]  # step, bce, align, contrast, total
    text: ClassText | None = None


def batch_order(n: int, batch: int, steps: int, seed: int):
    """Deterministic mini-batches: reshuffle each epoch from one seeded generator."""
    rng = np.random.default_rng(seed)
    perm, pos = rng.permutation(n), 0
    for _ in range(steps):
        idx = []
        while len(idx) < min(batch, n):
            if pos == n:
                perm, pos = rng.permutation(n), 0
            idx.append(int(perm[pos]))
            pos += 1
        yield idx


def train(dataset: DatasetManifest | PreparedDataset, cfg: TrainConfig, model: Model | None = None) -> TrainResult:
    if isinstance(dataset, DatasetManifest):
        dataset = prepare_dataset(dataset, cfg)
    if not dataset.videos:
        raise EmptyDataset("no videos to train on")
    model = model.copy() if model is not None else Model.init(
        dataset.dim, cfg.prompt_len, cfg.ffn_hidden or None, cfg.seed)
    tensors = model.tensors()
    opt = AdamW(tensors, cfg)
    loss_cfg = LossConfig.from_train(cfg)
    history = []
    for step, idx in enumerate(batch_order(len(dataset.videos), cfg.batch, cfg.max_steps, cfg.seed)):
        batch = Batch([dataset.videos[i] for i in idx], dataset.text, loss_cfg)
        parts, g = loss_and_grad(model, batch)
        history.append((step, parts.bce, parts.align, parts.contrast, parts.total))
        if not math.isfinite(parts.total):
            raise GradientNonFinite(f"loss diverged at step {step}")
        opt.step(tensors, g)
        if step % 50 == 0:
            log.debug("step %d total %.5f bce %.5f", step, parts.total, parts.bce)
    return TrainResult(model, history, dataset.text)


def score_video(model: Model, fs: VideoFeatureSet, alpha: float = DEFAULT_ALPHA,
                sigma: float = DEFAULT_SIGMA) -> FrameScores:
    return score_mixed(model, mix_features(fs, alpha, sigma))


def score_mixed(model: Model, mixed) -> FrameScores:
    return classify(encode_mixed(mixed, model.encoder), model.encoder)


def config_fields(cls) -> dict:
    return {f.name: f.default for f in fields(cls)}
