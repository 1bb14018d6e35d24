"""Multi-process FP-Growth: chunked counting, per-chunk trees, merge, parallel mining."""

from __future__ import annotations

import json
import multiprocessing as mp
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

from ..errors import MissingSubsetSupport
from .fptree import FPTree, build_fp_tree, merge_trees, mine_frequent, mine_item
from .transactions import (
    MiningConfig,
    TransactionDB,
    as_fraction,
    chunk_bounds,
    count_items,
    item_order,
    meets_confidence,
    min_support_count,
)


@dataclass(frozen=True, order=True)
class FrequentItemset:
    items: tuple[str, ...]
    support_count: int
    support_fraction: float


@dataclass(frozen=True, order=True)
class AssociationRule:
    antecedent: tuple[str, ...]
    consequent: tuple[str, ...]
    support_count: int
    support_fraction: float
    confidence: float

    def to_record(self) -> dict:
        return {
            "antecedent": list(self.antecedent),
            "consequent": list(self.consequent),
            "support": self.support_fraction,
            "confidence": self.confidence,
        }


class MiningResult(NamedTuple):
    frequents: tuple[FrequentItemset, ...]
    rules: tuple[AssociationRule, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "frequents": [[list(f.items), f.support_count] for f in self.frequents],
                "rules": [r.to_record() for r in self.rules],
            },
            sort_keys=True,
        )


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# Shared read-only state (the transaction tuple, later the global tree) reaches
# forked workers through the pool initializer instead of being pickled per task.
_WORKER_STATE = None


def _init_worker(state):
    global _WORKER_STATE
    _WORKER_STATE = state


def _count_chunk(bounds):
    start, stop = bounds
    return count_items(_WORKER_STATE[start:stop])


def _build_chunk(args):
    (start, stop), order, min_count, support = args
    return build_fp_tree(_WORKER_STATE[start:stop], order, min_count, support).to_nodes()


def _mine_item(args):
    item, min_count = args
    return mine_item(_WORKER_STATE, item, min_count)


@contextmanager
def _pool(workers: int, state):
    if workers <= 1:
        _init_worker(state)
        try:
            yield None
        finally:
            _init_worker(None)
        return
    methods = mp.get_all_start_methods()
    ctx = mp.get_context("fork" if "fork" in methods else None)
    with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker,
                             initargs=(state,)) as ex:
        yield ex


def global_count(db: TransactionDB, n_chunks: int = 1, workers: int = 1) -> dict[str, int]:
    """Item supports summed over per-chunk counts."""
    with _pool(workers, db.transactions) as ex:
        return _global_count(len(db), n_chunks, ex)


def _global_count(n: int, n_chunks: int, ex) -> dict:
    bounds = chunk_bounds(n, n_chunks)
    parts = map(_count_chunk, bounds) if ex is None else ex.map(_count_chunk, bounds)
    total = Counter()
    for c in parts:
        total.update(c)
    return dict(total)


def build_global_tree(db: TransactionDB, min_count: int, support: dict, n_chunks: int = 1,
                      workers: int = 1) -> FPTree:
    """Build one tree per chunk under the shared global order and merge them."""
    with _pool(workers, db.transactions) as ex:
        return _build_global_tree(len(db), min_count, support, n_chunks, ex)


def _build_global_tree(n, min_count, support, n_chunks, ex) -> FPTree:
    order = item_order(support)
    frequent_support = {x: c for x, c in support.items() if c >= min_count}
    tasks = [(b, order, min_count, frequent_support) for b in chunk_bounds(n, n_chunks)]
    if ex is None:
        chunk_trees = [build_fp_tree(_WORKER_STATE[s:e], order, min_count, frequent_support)
                       for (s, e), *_ in tasks]
    else:
        chunk_trees = [FPTree.from_nodes(order, enc) for enc in ex.map(_build_chunk, tasks)]
    return merge_trees(chunk_trees)


def mine_tree(tree: FPTree, min_count: int, workers: int = 1) -> dict[tuple, int]:
    """Conditional mining, one task per top-level suffix item when ``workers > 1``."""
    if workers <= 1:
        return mine_frequent(tree, min_count)
    with _pool(workers, tree) as ex:
        return mine_frequent(
            tree, min_count,
            lambda items: ex.map(_mine_item, [(x, max(1, min_count)) for x in items]),
        )


def generate_rules(frequents: dict[tuple, int], min_confidence: float, n_transactions: int):
    """Rules ``s -> f \\ s`` for every frequent ``f`` and nonempty proper subset ``s``.

    ``frequents`` maps sorted item tuples to support counts and must be closed
    under subsets.
    """
    q = as_fraction(min_confidence)
    rules = []
    for f, sup_f in frequents.items():
        if len(f) < 2:
            continue
        for r in range(1, len(f)):
            for s in combinations(f, r):
                sup_s = frequents.get(s)
                if sup_s is None:
                    raise MissingSubsetSupport(f"subset {s} of frequent itemset {f} has no support")
                if meets_confidence(sup_f, sup_s, q):
                    rest = tuple(x for x in f if x not in s)
                    rules.append(AssociationRule(s, rest, sup_f, sup_f / n_transactions, sup_f / sup_s))
    rules.sort()
    return tuple(rules)


def _canonical_frequents(raw: dict[tuple, int]) -> dict[tuple, int]:
    return {tuple(sorted(k)): v for k, v in raw.items()}


def finalize(frequents: dict[tuple, int], min_confidence: float, n: int) -> MiningResult:
    fs = tuple(sorted(
        (FrequentItemset(k, v, v / n) for k, v in frequents.items()),
        key=lambda f: (len(f.items), f.items),
    ))
    return MiningResult(fs, generate_rules(frequents, min_confidence, n))


def mine(db: TransactionDB, config: MiningConfig, workers: int = 1) -> MiningResult:
    """Count, order, build chunk trees, merge, mine conditional bases, derive rules.

    The result does not depend on ``config.n_chunks`` or ``workers``.
    """
    n = len(db)
    if n == 0:
        return MiningResult((), ())
    min_count = min_support_count(config.min_support, n)
    with _pool(workers, db.transactions) as ex:
        support = _global_count(n, config.n_chunks, ex)
        tree = _build_global_tree(n, min_count, support, config.n_chunks, ex)
    raw = mine_tree(tree, min_count, workers)
    return finalize(_canonical_frequents(raw), config.min_confidence, n)


def _fmt_items(items) -> str:
    return "{" + ",".join(sorted(items)) + "}"


def rule_to_text(rule: AssociationRule) -> str:
    return (f"{_fmt_items(rule.antecedent)} => {_fmt_items(rule.consequent)} "
            f"(sup={rule.support_fraction:.3f}, conf={rule.confidence:.3f})")


def ordered_rules(rules, max_rules: int | None = None) -> list[AssociationRule]:
    """Strongest first: confidence, then support, then rendered text."""
    ordered = sorted(rules, key=lambda r: (-r.confidence, -r.support_fraction, rule_to_text(r)))
    return ordered if max_rules is None else ordered[:max_rules]


def rules_to_text(rules, max_rules: int | None = None) -> list[str]:
    return [rule_to_text(r) for r in ordered_rules(rules, max_rules)]
