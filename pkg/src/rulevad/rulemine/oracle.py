"""Exhaustive Apriori-style reference miner for differential testing."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..errors import UniverseTooLarge
from .mcp import AssociationRule, FrequentItemset, MiningResult
from .transactions import MiningConfig, TransactionDB, min_support_count

MAX_UNIVERSE = 20


def apriori_oracle(db: TransactionDB, config: MiningConfig) -> MiningResult:
    """Count every nonempty subset of the item universe by scanning all transactions.

    Single-threaded and exponential in the universe size; confidences are
    compared as exact fractions.
    """
    universe = db.item_universe
    if len(universe) > MAX_UNIVERSE:
        raise UniverseTooLarge(f"{len(universe)} items exceeds the oracle limit of {MAX_UNIVERSE}")
    n = len(db)
    if n == 0:
        return MiningResult((), ())
    bit = {x: 1 << i for i, x in enumerate(universe)}
    tx = np.array([sum(bit[x] for x in t) for t in db.transactions], dtype=np.int64)
    masks = np.arange(1, 1 << len(universe), dtype=np.int64)
    counts = np.zeros(len(masks), dtype=np.int64)
    for start in range(0, len(masks), 4096):
        block = masks[start:start + 4096]
        counts[start:start + 4096] = ((tx[None, :] & block[:, None]) == block[:, None]).sum(axis=1)

    need = min_support_count(config.min_support, n)
    support = {int(m): int(c) for m, c in zip(masks, counts) if c >= need}

    def items_of(mask):
        return tuple(x for x in universe if mask & bit[x])

    frequents = sorted(
        (FrequentItemset(items_of(m), c, c / n) for m, c in support.items()),
        key=lambda f: (len(f.items), f.items),
    )
    min_conf = Fraction(config.min_confidence).limit_denominator(10**9)
    rules = []
    for f_mask, sup_f in support.items():
        # walk every nonempty proper submask
        s = (f_mask - 1) & f_mask
        while s:
            sup_s = support[s]
            if Fraction(sup_f, sup_s) >= min_conf:
                rules.append(AssociationRule(items_of(s), items_of(f_mask & ~s), sup_f, sup_f / n, sup_f / sup_s))
            s = (s - 1) & f_mask
    rules.sort()
    return MiningResult(tuple(frequents), tuple(rules))
