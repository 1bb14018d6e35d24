"""Loading and validation of feature tensors, detection transcripts and manifests.

Feature files (``RVF1``) hold per-frame global vectors and an optional
per-frame patch grid.  Transcripts are JSON lines, one detector record per
frame.  Manifests are JSON lists tying a video id to its files and labels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    DuplicateVideoId,
    MissingFile,
    NonFinite,
    NonMonotonicFrames,
    ParseError,
)

FEATURE_MAGIC = b"RVF1"
_HEADER = struct.Struct("<4I")
_F32 = np.dtype("<f4")

MANIFEST_FIELDS = (
    "video_id",
    "feature_path",
    "transcript_path",
    "video_label",
    "class_name",
    "frame_labels_path",
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VideoFeatureSet:
    """Frame features ``(n, dim)`` and patch features ``(n, rows*cols, dim)``.

    Arrays are float32 and read-only. A set without patch data has
    ``grid_rows == grid_cols == 0`` and a patch array of shape ``(n, 0, dim)``.
    """

    video_id: str
    frame_features: np.ndarray
    patch_features: np.ndarray | None = None
    grid_rows: int = 0
    grid_cols: int = 0

    def __post_init__(self):
        ff = np.ascontiguousarray(self.frame_features, dtype=_F32)
        if ff.ndim != 2 or ff.shape[0] < 1 or ff.shape[1] < 1:
            raise DimMismatch(f"frame_features must be (n>=1, dim>=1), got {ff.shape}")
        n, dim = ff.shape
        m = self.grid_rows * self.grid_cols
        if self.patch_features is None:
            pf = np.zeros((n, 0, dim), dtype=_F32)
        else:
            pf = np.ascontiguousarray(self.patch_features, dtype=_F32)
        if m == 0:
            pf = pf.reshape(n, 0, dim) if pf.size == 0 else pf
        if pf.shape != (n, m, dim):
            raise DimMismatch(
                f"patch_features shape {pf.shape} != ({n}, {m}, {dim}); "
                "patch dim must equal frame dim"
            )
        if not (np.isfinite(ff).all() and np.isfinite(pf).all()):
            raise NonFinite(f"video {self.video_id!r} contains NaN or Inf")
        object.__setattr__(self, "frame_features", _frozen(ff))
        object.__setattr__(self, "patch_features", _frozen(pf))

    @property
    def n_frames(self) -> int:
        return self.frame_features.shape[0]

    @property
    def dim(self) -> int:
        return self.frame_features.shape[1]

    @property
    def n_patches(self) -> int:
        return self.grid_rows * self.grid_cols


def write_features(path, fs: VideoFeatureSet) -> None:
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(_HEADER.pack(fs.n_frames, fs.grid_rows, fs.grid_cols, fs.dim))
        f.write(fs.frame_features.astype(_F32).tobytes(order="C"))
        if fs.n_patches:
            f.write(fs.patch_features.astype(_F32).tobytes(order="C"))


def load_features(path, video_id: str | None = None) -> VideoFeatureSet:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"feature file not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise BadMagic(f"{path}: not a feature file (magic {raw[:4]!r})")
    if len(raw) < 4 + _HEADER.size:
        raise DimMismatch(f"{path}: truncated header")
    n, rows, cols, dim = _HEADER.unpack_from(raw, 4)
    body = raw[4 + _HEADER.size:]
    m = rows * cols
    expected = n * dim + n * m * dim
    if len(body) != expected * 4:
        raise DimMismatch(
            f"{path}: header declares n={n}, grid={rows}x{cols}, dim={dim} "
            f"({expected} floats) but payload holds {len(body) / 4:g}"
        )
    if n < 1 or dim < 1:
        raise DimMismatch(f"{path}: n_frames and dim must be >= 1")
    values = np.frombuffer(body, dtype=_F32)
    if not np.isfinite(values).all():
        raise NonFinite(f"{path}: payload contains NaN or Inf")
    frames = values[: n * dim].reshape(n, dim).copy()
    patches = values[n * dim:].reshape(n, m, dim).copy()
    return VideoFeatureSet(
        video_id=video_id if video_id is not None else path.stem,
        frame_features=frames,
        patch_features=patches,
        grid_rows=rows,
        grid_cols=cols,
    )


@dataclass(frozen=True)
class DetectionTranscript:
    """Per-frame object counts as reported by an open-vocabulary detector."""

    video_id: str
    frames: tuple[tuple[int, dict[str, int]], ...] = ()

    def __post_init__(self):
        last = None
        for idx, objects in self.frames:
            if last is not None and idx <= last:
                raise NonMonotonicFrames(
                    f"transcript {self.video_id!r}: frame {idx} follows frame {last}"
                )
            last = idx
            for label, count in objects.items():
                if not isinstance(label, str) or not label:
                    raise ParseError(f"bad label {label!r} in frame {idx}")
                if not isinstance(count, int) or isinstance(count, bool) or count < 1:
                    raise ParseError(f"bad count {count!r} for {label!r} in frame {idx}")

    @property
    def labels(self) -> set[str]:
        return {label for _, objects in self.frames for label in objects}


def write_transcript(path, t: DetectionTranscript) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for idx, objects in t.frames:
            f.write(json.dumps({"frame": idx, "objects": dict(sorted(objects.items()))}))
            f.write("\n")


def load_transcript(path, video_id: str | None = None) -> DetectionTranscript:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"transcript not found: {path}")
    frames = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", path, lineno) from None
            if not isinstance(rec, dict) or set(rec) != {"frame", "objects"}:
                raise ParseError("record must have exactly 'frame' and 'objects'", path, lineno)
            idx, objects = rec["frame"], rec["objects"]
            if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
                raise ParseError(f"frame must be a non-negative integer, got {idx!r}", path, lineno)
            if not isinstance(objects, dict):
                raise ParseError("objects must be a map", path, lineno)
            for label, count in objects.items():
                if not label:
                    raise ParseError("empty object label", path, lineno)
                if not isinstance(count, int) or isinstance(count, bool) or count < 1:
                    raise ParseError(f"count for {label!r} must be a positive integer", path, lineno)
            if frames and idx <= frames[-1][0]:
                raise NonMonotonicFrames(
                    f"{path}:{lineno}: frame {idx} follows frame {frames[-1][0]}"
                )
            frames.append((idx, dict(objects)))
    return DetectionTranscript(video_id if video_id is not None else path.stem, tuple(frames))


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    feature_path: Path
    video_label: int
    class_name: str
    transcript_path: Path | None = None
    frame_labels_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def class_names(self) -> list[str]:
        return sorted({e.class_name for e in self.entries})


def load_manifest(path) -> DatasetManifest:
    """Read a JSON manifest; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", path, e.lineno) from None
    if isinstance(data, dict) and "entries" in data:
        data = data["entries"]
    if not isinstance(data, list):
        raise ParseError("manifest must be a list of entries", path)

    base = path.parent
    seen = set()
    entries = []
    for i, rec in enumerate(data):
        if not isinstance(rec, dict):
            raise ParseError(f"entry {i} is not a map", path)
        unknown = set(rec) - set(MANIFEST_FIELDS)
        if unknown:
            raise ParseError(f"entry {i}: unknown fields {sorted(unknown)}", path)
        for key in ("video_id", "feature_path", "video_label", "class_name"):
            if key not in rec:
                raise ParseError(f"entry {i}: missing field {key!r}", path)
        vid = rec["video_id"]
        if not isinstance(vid, str) or not vid:
            raise ParseError(f"entry {i}: video_id must be a nonempty string", path)
        if vid in seen:
            raise DuplicateVideoId(f"{path}: duplicate video_id {vid!r}")
        seen.add(vid)
        label = rec["video_label"]
        if label not in (0, 1) or isinstance(label, bool):
            raise ParseError(f"entry {vid!r}: video_label must be 0 or 1", path)

        def resolve(key):
            value = rec.get(key)
            if value in (None, ""):
                return None
            p = Path(value)
            p = p if p.is_absolute() else base / p
            if not p.is_file():
                raise MissingFile(f"{path}: entry {vid!r} references missing {key} {p}")
            return p

        entries.append(
            ManifestEntry(
                video_id=vid,
                feature_path=resolve("feature_path"),
                video_label=int(label),
                class_name=str(rec["class_name"]),
                transcript_path=resolve("transcript_path"),
                frame_labels_path=resolve("frame_labels_path"),
            )
        )
    return DatasetManifest(tuple(entries))


def write_manifest(path, entries: list[dict]) -> None:
    rows = [{k: e.get(k) for k in MANIFEST_FIELDS} for e in entries]
    Path(path).write_text(json.dumps(rows, indent=1), encoding="utf-8")


def load_frame_labels(path) -> np.ndarray:
    """Whitespace-separated 0/1 values, one per frame."""
    path = Path(path)
    try:
        values = [int(tok) for tok in path.read_text().split()]
    except ValueError:
        raise ParseError("frame labels must be integers 0/1", path) from None
    if any(v not in (0, 1) for v in values):
        raise ParseError("frame labels must be 0 or 1", path)
    return np.asarray(values, dtype=np.int64)


def write_frame_labels(path, labels) -> None:
    Path(path).write_text(" ".join(str(int(v)) for v in labels) + "\n")
