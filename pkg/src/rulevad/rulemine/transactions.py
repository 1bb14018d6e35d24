from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from ..errors import InvalidConfig
from ..feature_store import DetectionTranscript


@dataclass(frozen=True)
class TransactionDB:
    transactions: tuple[frozenset, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "transactions", tuple(frozenset(t) for t in self.transactions)
        )

    def __len__(self):
        return len(self.transactions)

    @property
    def item_universe(self) -> tuple[str, ...]:
        return tuple(sorted({x for t in self.transactions for x in t}))

    @classmethod
    def concat(cls, dbs: Iterable["TransactionDB"]) -> "TransactionDB":
        return cls(tuple(t for db in dbs for t in db.transactions))


@dataclass(frozen=True)
class MiningConfig:
    min_support: float = 0.5
    min_confidence: float = 0.8
    n_chunks: int = 1

    def __post_init__(self):
        for name in ("min_support", "min_confidence"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise InvalidConfig(f"{name} must be in [0, 1], got {v!r}")
        if not isinstance(self.n_chunks, int) or self.n_chunks < 1:
            raise InvalidConfig(f"n_chunks must be a positive integer, got {self.n_chunks!r}")


def as_fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**9)


def min_support_count(min_support: float, n_transactions: int) -> int:
    """Smallest count meeting the threshold; never below 1 so absent itemsets stay out."""
    return max(1, math.ceil(as_fraction(min_support) * n_transactions))


def meets_confidence(support_f: int, support_s: int, min_confidence) -> bool:
    """``support_f / support_s >= min_confidence`` in exact rational arithmetic."""
    q = min_confidence if isinstance(min_confidence, Fraction) else as_fraction(min_confidence)
    return support_f * q.denominator >= q.numerator * support_s


def transcript_to_transactions(t: DetectionTranscript, class_label: str | None = None) -> TransactionDB:
    """One transaction per frame holding the labels present (counts collapse to membership)."""
    extra = {class_label} if class_label is not None else set()
    return TransactionDB(tuple(frozenset(objects) | extra for _, objects in t.frames))


def chunk_bounds(n: int, n_chunks: int) -> list[tuple[int, int]]:
    """Contiguous, near-equal, non-overlapping ``[start, stop)`` ranges covering ``range(n)``."""
    base, extra = divmod(n, n_chunks)
    bounds, start = [], 0
    for i in range(n_chunks):
        stop = start + base + (1 if i < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def count_items(transactions) -> Counter:
    c = Counter()
    for t in transactions:
        c.update(t)
    return c


def item_order(support: dict) -> tuple:
    """Frequency descending, ties broken lexicographically."""
    return tuple(sorted(support, key=lambda x: (-support[x], x)))
