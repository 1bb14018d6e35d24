"""Text/video alignment: toy text embedding of rule strings, similarity matrix, losses.

The text encoder is a stand-in: a text embedding is the normalised mean of the
learnable prompt vectors and one vector per token.  Token vectors come either
from a table file (``RVE1``) or from a seeded hash, so runs are reproducible
without any pretrained model.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DegenerateEmbedding,
    DimMismatch,
    IndexOutOfRange,
    ShapeMismatch,
    TooFewClasses,
    UnknownToken,
)

DEFAULT_TAU = 0.07
DEFAULT_DELTA = 0.1
DEFAULT_PROMPT_LEN = 8
PROMPT_INIT_STD = 0.02
_MASK64 = (1 << 64) - 1
_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def _splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def hash_vector(token: str, seed: int, dim: int) -> np.ndarray:
    """``dim`` values in [-1, 1) from splitmix64 seeded by blake2b-64 of (seed, token)."""
    digest = hashlib.blake2b(f"{seed}\x00{token}".encode("utf-8"), digest_size=8).digest()
    gen = _splitmix64(int.from_bytes(digest, "little"))
    return np.array([2.0 * ((next(gen) >> 11) * 2.0**-53) - 1.0 for _ in range(dim)])


@dataclass
class TextEmbedder:
    dim: int
    mode: str = "seeded-hash"
    seed: int = 0
    table: dict[str, np.ndarray] | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in ("seeded-hash", "table-lookup"):
            raise ValueError(f"unknown embedder mode {self.mode!r}")
        if self.mode == "table-lookup" and self.table is None:
            raise ValueError("table-lookup mode needs a table")

    def vector(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            if self.mode == "table-lookup":
                if token not in self.table:
                    raise UnknownToken(f"token {token!r} not in embedding table")
                v = np.asarray(self.table[token], dtype=np.float64)
            else:
                v = hash_vector(token, self.seed, self.dim)
            v.setflags(write=False)
            self._cache[token] = v
        return v

    @classmethod
    def from_table_file(cls, path) -> "TextEmbedder":
        dim, table = load_embedding_table(path)
        return cls(dim=dim, mode="table-lookup", table=table)


EMBED_MAGIC = b"RVE1"


def save_embedding_table(path, table: dict[str, np.ndarray]) -> None:
    dims = {len(v) for v in table.values()}
    if len(dims) > 1:
        raise DimMismatch("all table vectors must share one dimension")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<II", dim, len(table)))
        for token, vec in table.items():
            b = token.encode("utf-8")
            f.write(struct.pack("<H", len(b)))
            f.write(b)
            f.write(np.asarray(vec, dtype="<f4").tobytes())


def load_embedding_table(path) -> tuple[int, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != EMBED_MAGIC:
        raise BadMagic(f"{path}: not an embedding table")
    dim, count = struct.unpack_from("<II", raw, 4)
    pos, table = 12, {}
    try:
        for _ in range(count):
            (blen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            token = raw[pos:pos + blen].decode("utf-8")
            pos += blen
            vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos).astype(np.float64)
            pos += 4 * dim
            table[token] = vec
    except (struct.error, ValueError) as e:
        raise DimMismatch(f"{path}: truncated embedding table ({e})") from None
    if pos != len(raw):
        raise DimMismatch(f"{path}: {len(raw) - pos} trailing bytes")
    return dim, table


@dataclass(eq=False)
class PromptBank:
    vectors: np.ndarray  # (prompt_len, dim)

    @property
    def prompt_len(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def init(cls, prompt_len: int, dim: int, seed: int = 0) -> "PromptBank":
        rng = np.random.default_rng([seed, 0x5052])
        return cls(rng.normal(0.0, PROMPT_INIT_STD, (prompt_len, dim)))


def token_sum(rule_strings, embedder: TextEmbedder) -> tuple[np.ndarray, int]:
    """Sum of token vectors over all rule strings, and the token count."""
    total = np.zeros(embedder.dim)
    count = 0
    for text in rule_strings:
        for tok in tokenize(text):
            total = total + embedder.vector(tok)
            count += 1
    return total, count


def _normalize(v, what: str) -> np.ndarray:
    norm = np.linalg.norm(v)
    if not norm > 0 or not np.isfinite(norm):
        raise DegenerateEmbedding(f"{what} has zero norm")
    return v / norm


def embed_text(rule_strings, prompts: PromptBank | np.ndarray | None, embedder: TextEmbedder) -> np.ndarray:
    vecs = prompts.vectors if isinstance(prompts, PromptBank) else prompts
    vecs = np.zeros((0, embedder.dim)) if vecs is None else np.asarray(vecs, dtype=np.float64)
    total, count = token_sum(rule_strings, embedder)
    count += vecs.shape[0]
    if count == 0:
        raise DegenerateEmbedding("no tokens and no prompt vectors")
    return _normalize((vecs.sum(axis=0) + total) / count, "text embedding")


def video_embedding(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 2 or psi.shape[0] < 1:
        raise ShapeMismatch(f"psi must be (n>=1, dim), got {psi.shape}")
    return _normalize(psi.mean(axis=0), "video embedding")


def alignment_matrix(text, video) -> np.ndarray:
    """Rows are text classes, columns are video embeddings."""
    t = np.asarray(text, dtype=np.float64)
    v = np.asarray(video, dtype=np.float64)
    if t.ndim != 2 or t.shape != v.shape:
        raise ShapeMismatch(f"text {t.shape} and video {v.shape} must both be (m, dim)")
    return t @ v.T


def row_softmax_tau(M, tau: float = DEFAULT_TAU) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    z = np.asarray(M, dtype=np.float64) / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sq_norm(theta) -> float:
    if theta is None:
        return 0.0
    return float(np.sum(np.asarray(theta, dtype=np.float64) ** 2))


def alignment_loss(P, labels, lambda1: float, theta_align=None) -> float:
    P = np.asarray(P, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (P.shape[0],):
        raise ShapeMismatch(f"{labels.size} labels for {P.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= P.shape[1]):
        raise IndexOutOfRange(f"labels must index columns 0..{P.shape[1] - 1}")
    picked = P[np.arange(P.shape[0]), labels]
    return float(-np.sum(np.log(np.maximum(picked, np.finfo(float).tiny)))) + lambda1 * sq_norm(theta_align)


def contrastive_loss(class_embeddings, normal_index: int, delta: float = DEFAULT_DELTA,
                     lambda2: float = 0.0, theta_contrast=None) -> float:
    """Hinge on the cosine between the normal class and each abnormal class."""
    E = np.asarray(class_embeddings, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 2:
        raise TooFewClasses("contrastive loss needs at least two classes")
    if not 0 <= normal_index < E.shape[0]:
        raise IndexOutOfRange(f"normal index {normal_index} out of range")
    unit = E / np.linalg.norm(E, axis=1, keepdims=True)
    cos = unit @ unit[normal_index]
    hinge = np.maximum(0.0, np.delete(cos, normal_index) - delta)
    return float(hinge.sum()) + lambda2 * sq_norm(theta_contrast)


def total_loss(l_align: float, l_contrast: float, l_bce: float) -> float:
    return l_align + l_contrast + l_bce
