from .fptree import FPNode, FPTree, build_fp_tree, merge_trees, mine_frequent
from .mcp import (
    AssociationRule,
    FrequentItemset,
    MiningResult,
    build_global_tree,
    default_workers,
    generate_rules,
    global_count,
    mine,
    mine_tree,
    ordered_rules,
    rule_to_text,
    rules_to_text,
)
from .oracle import apriori_oracle
from .transactions import (
    MiningConfig,
    TransactionDB,
    item_order,
    min_support_count,
    transcript_to_transactions,
)

__all__ = [
    "AssociationRule",
    "FPNode",
    "FPTree",
    "FrequentItemset",
    "MiningConfig",
    "MiningResult",
    "TransactionDB",
    "apriori_oracle",
    "build_fp_tree",
    "build_global_tree",
    "default_workers",
    "generate_rules",
    "global_count",
    "item_order",
    "merge_trees",
    "min_support_count",
    "mine",
    "mine_frequent",
    "mine_tree",
    "ordered_rules",
    "rule_to_text",
    "rules_to_text",
    "transcript_to_transactions",
]
