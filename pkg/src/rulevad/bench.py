"""Sequential vs multi-process mining wall-clock comparison on synthetic transactions."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

from .errors import InputError, InvariantError
from .rulemine import MiningConfig, mine
from .synthetic import bench_db

BENCH_COLUMNS = (
    "avg_transaction_length",
    "min_support_pct",
    "sequential_seconds",
    "parallel_seconds",
    "workers",
    "ratio",
)


@dataclass(frozen=True)
class BenchRow:
    avg_transaction_length: int
    min_support_pct: float
    sequential_seconds: float
    parallel_seconds: float
    workers: int

    @property
    def ratio(self) -> float:
        if self.sequential_seconds <= 0:
            return 1.0
        return self.parallel_seconds / self.sequential_seconds


def _timed(fn, repeats: int):
    best, result = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_mining(lengths, support_pcts, db_size: int, workers: int, seed: int = 0,
                 min_confidence: float = 0.8, repeats: int = 1) -> list[BenchRow]:
    """Time ``mine`` with one chunk on one worker against ``workers`` chunks on ``workers`` processes.

    Both runs must return identical results; a mismatch is an internal error.
    """
    if workers < 1:
        raise InputError("workers must be >= 1")
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    rows = []
    for length in lengths:
        db = bench_db(db_size, length, seed)
        for pct in support_pcts:
            seq_cfg = MiningConfig(pct / 100.0, min_confidence, 1)
            par_cfg = MiningConfig(pct / 100.0, min_confidence, workers)
            t_seq, r_seq = _timed(lambda: mine(db, seq_cfg, 1), repeats)
            t_par, r_par = _timed(lambda: mine(db, par_cfg, workers), repeats)
            if r_seq != r_par:
                raise InvariantError(f"parallel result differs at length={length}, support={pct}%")
            rows.append(BenchRow(length, pct, t_seq, t_par, workers))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r.avg_transaction_length, f"{r.min_support_pct:g}", f"{r.sequential_seconds:.6f}",
                    f"{r.parallel_seconds:.6f}", r.workers, f"{r.ratio:.4f}"])
    return buf.getvalue()
