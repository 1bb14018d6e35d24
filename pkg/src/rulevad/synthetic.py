"""Seeded synthetic data: toy surveillance videos and transaction databases."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feature_store import (
    DetectionTranscript,
    VideoFeatureSet,
    write_features,
    write_frame_labels,
    write_manifest,
    write_transcript,
)
from .rulemine import TransactionDB

BENCH_UNIVERSE = 200
BENCH_EXPONENT = 0.75


def random_db(rng: np.random.Generator, max_items: int = 12, max_transactions: int = 200) -> TransactionDB:
    """Random DB with a random item count, size and per-item inclusion rate."""
    k = int(rng.integers(1, max_items + 1))
    n = int(rng.integers(0, max_transactions + 1))
    rates = rng.uniform(0.05, 0.8, k)
    present = rng.random((n, k)) < rates
    names = [f"i{j:02d}" for j in range(k)]
    return TransactionDB(tuple(frozenset(names[j] for j in np.nonzero(row)[0]) for row in present))


def bench_db(n_transactions: int, avg_len: int, seed: int = 0, universe: int = BENCH_UNIVERSE,
             exponent: float = BENCH_EXPONENT) -> TransactionDB:
    """Power-law item popularity over a fixed label universe.

    Item ``r`` (0-based popularity rank) has weight ``(r + 1) ** -exponent``.
    Each transaction draws a length from Poisson(avg_len) clipped to
    ``[1, universe]`` and samples that many distinct items by weight.  The
    generator is ``numpy.random.default_rng([seed, n_transactions, avg_len])``.
    """
    rng = np.random.default_rng([seed, n_transactions, avg_len])
    w = (np.arange(universe) + 1.0) ** -exponent
    # Gumbel top-k gives weighted sampling without replacement in one vectorised pass
    logw = np.log(w)
    lengths = np.clip(rng.poisson(avg_len, n_transactions), 1, universe)
    names = [f"L{r:03d}" for r in range(universe)]
    out = []
    for start in range(0, n_transactions, 4096):
        stop = min(start + 4096, n_transactions)
        keys = logw + rng.gumbel(size=(stop - start, universe))
        order = np.argsort(-keys, axis=1)
        for row, length in zip(order, lengths[start:stop]):
            out.append(frozenset(names[j] for j in row[:length]))
    return TransactionDB(tuple(out))


# ---------------------------------------------------------------- toy videos


@dataclass(frozen=True)
class ToySpec:
    n_videos: int = 200
    anomaly_classes: tuple[str, ...] = ("Fight", "Explosion")
    normal_class: str = "Normal"
    anomalous_fraction: float = 0.5
    n_frames: int = 32
    dim: int = 64
    grid: tuple[int, int] = (3, 3)
    scene_scale: float = 1.0
    noise: float = 0.3
    burst_amplitude: float = 4.0
    burst_fraction: tuple[float, float] = (0.25, 0.5)
    seed: int = 0
    markers: dict = field(default_factory=lambda: {
        "Fight": ("Stick",),
        "Explosion": ("Fire", "Smoke"),
    })


@dataclass(eq=False)
class ToyVideo:
    features: VideoFeatureSet
    transcript: DetectionTranscript
    label: int
    class_name: str
    frame_labels: np.ndarray


def make_toy_dataset(spec: ToySpec = ToySpec()) -> list[ToyVideo]:
    """Normal videos hold a static scene; anomalous ones carry a burst of a moving object.

    During a burst one patch (wandering over the grid) carries a class-specific
    signature vector, and the transcript reports that class's marker objects
    next to the ubiquitous ``People``.  Burst frames are the positive frame labels.
    """
    rng = np.random.default_rng([spec.seed, 0x70A])
    d, n = spec.dim, spec.n_frames
    rows, cols = spec.grid
    m = rows * cols
    scene_dir = rng.normal(size=d)
    scene_dir *= spec.scene_scale * np.sqrt(d) / np.linalg.norm(scene_dir)
    signatures = {c: rng.normal(size=d) for c in spec.anomaly_classes}

    n_anom = int(round(spec.n_videos * spec.anomalous_fraction))
    classes = [spec.normal_class] * (spec.n_videos - n_anom)
    classes += [spec.anomaly_classes[i % len(spec.anomaly_classes)] for i in range(n_anom)]
    rng.shuffle(classes)

    videos = []
    for vi, cls in enumerate(classes):
        anomalous = cls != spec.normal_class
        background = rng.normal(size=(m, d))
        patches = background[None] + spec.noise * rng.normal(size=(n, m, d))
        scene = scene_dir[None] + spec.noise * rng.normal(size=(n, d))
        frame_labels = np.zeros(n, dtype=np.int64)
        if anomalous:
            lo, hi = spec.burst_fraction
            length = int(rng.integers(max(2, int(lo * n)), max(3, int(hi * n)) + 1))
            start = int(rng.integers(0, n - length + 1))
            frame_labels[start:start + length] = 1
            pos = int(rng.integers(m))
            sig = signatures[cls]
            for t in range(start, start + length):
                r, c = divmod(pos, cols)
                moves = [(r + dr, c + dc) for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                         if 0 <= r + dr < rows and 0 <= c + dc < cols]
                r, c = moves[int(rng.integers(len(moves)))]
                pos = r * cols + c
                patches[t, pos] += spec.burst_amplitude * sig
        features = VideoFeatureSet(f"v{vi:04d}", scene.astype(np.float32), patches.astype(np.float32),
                                   rows, cols)
        frames = []
        for t in range(n):
            objects = {}
            if rng.random() < 0.9:
                objects["People"] = int(rng.integers(1, 4))
            if rng.random() < 0.3:
                objects["Car"] = int(rng.integers(1, 3))
            if rng.random() < 0.2:
                objects["Bag"] = 1
            if frame_labels[t]:
                objects.setdefault("People", 2)
                for marker in spec.markers.get(cls, ()):
                    if rng.random() < 0.95:
                        objects[marker] = int(rng.integers(1, 3))
            frames.append((t, objects))
        videos.append(ToyVideo(features, DetectionTranscript(features.video_id, tuple(frames)),
                               int(anomalous), cls, frame_labels))
    return videos


def write_toy_dataset(directory, spec: ToySpec = ToySpec()) -> Path:
    """Write features, transcripts, frame labels and a manifest; return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for v in make_toy_dataset(spec):
        vid = v.features.video_id
        write_features(directory / f"{vid}.rvf", v.features)
        write_transcript(directory / f"{vid}.jsonl", v.transcript)
        write_frame_labels(directory / f"{vid}.labels", v.frame_labels)
        entries.append({
            "video_id": vid,
            "feature_path": f"{vid}.rvf",
            "transcript_path": f"{vid}.jsonl",
            "video_label": v.label,
            "class_name": v.class_name,
            "frame_labels_path": f"{vid}.labels",
        })
    path = directory / "manifest.json"
    write_manifest(path, entries)
    return path


# ---------------------------------------------------------------- model instances


def random_batch(seed: int, dim: int = 16, max_frames: int = 12, n_classes: int = 3, n_videos: int = 4,
                 bce_mode: str = "video", prompt_len: int = 4, reduction: str = "mean"):
    """A perturbed model and a full-loss batch for gradient checks.

    Gains, biases and prompts are drawn away from their init values so every
    term of the loss has a nonzero, well-conditioned gradient.
    """
    from .training import Batch, ClassText, LossConfig, Model, VideoItem

    rng = np.random.default_rng([seed, 0xB47C])
    model = Model.init(dim, prompt_len, None, seed)
    for name, arr in model.tensors().items():
        arr += rng.normal(scale=0.3 if name != "prompts" else 0.1, size=arr.shape)
    videos = []
    for i in range(n_videos):
        n = int(rng.integers(1, max_frames + 1))
        cls = int(rng.integers(n_classes))
        frame_labels = (rng.random(n) < 0.5).astype(np.int64)
        videos.append(VideoItem(f"r{i}", rng.normal(size=(n, dim)), int(cls != 0), cls, frame_labels))
    text = ClassText([f"c{j}" for j in range(n_classes)], rng.normal(size=(n_classes, dim)),
                     rng.integers(1, 6, n_classes).astype(np.float64), 0)
    # large lambdas so the regularisers are visible to the check
    loss = LossConfig(tau=0.5, delta=0.1, lambda1=0.05, lambda2=0.06, bce_mode=bce_mode, reduction=reduction)
    return model, Batch(videos, text, loss)
