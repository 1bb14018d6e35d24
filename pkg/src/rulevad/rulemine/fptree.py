"""FP-tree with path-wise merge and FP-Growth conditional mining."""

from __future__ import annotations

from itertools import combinations
from typing import Iterable

from ..errors import OrderMismatch


class FPNode:
    __slots__ = ("item", "count", "children", "parent")

    def __init__(self, item, count, parent):
        self.item = item
        self.count = count
        self.children = {}
        self.parent = parent


class FPTree:
    """Prefix tree over items sorted by a shared total order.

    ``item_order`` lists items from most to least frequent; every root-to-node
    path respects it.  ``header`` maps each item to its nodes in insertion order.
    """

    def __init__(self, item_order: Iterable):
        self.item_order = tuple(item_order)
        self.rank = {x: i for i, x in enumerate(self.item_order)}
        self.root = FPNode(None, 0, None)
        self.header: dict = {}

    def __len__(self):
        return sum(len(v) for v in self.header.values())

    @property
    def is_empty(self) -> bool:
        return not self.root.children

    def insert(self, path, count: int = 1) -> None:
        """Insert an already ordered path, adding ``count`` along shared prefixes."""
        node = self.root
        node.count += count
        for item in path:
            child = node.children.get(item)
            if child is None:
                child = FPNode(item, count, node)
                node.children[item] = child
                self.header.setdefault(item, []).append(child)
            else:
                child.count += count
            node = child

    def sort_path(self, items) -> list:
        rank = self.rank
        return sorted((x for x in items if x in rank), key=rank.__getitem__)

    def support(self, item) -> int:
        return sum(n.count for n in self.header.get(item, ()))

    def conditional_base(self, item) -> list[tuple[tuple, int]]:
        """Prefix paths (root side first) ending just above each node of ``item``."""
        base = []
        for node in self.header.get(item, ()):
            path = []
            p = node.parent
            while p.item is not None:
                path.append(p.item)
                p = p.parent
            if path:
                base.append((tuple(reversed(path)), node.count))
        return base

    def _sorted_children(self, node):
        rank = self.rank
        return sorted(node.children.values(), key=lambda c: rank[c.item])

    def canonical(self):
        """Nested ``(item, count, children)`` tuples with children in item order."""

        def walk(node):
            return tuple((c.item, c.count, walk(c)) for c in self._sorted_children(node))

        return walk(self.root)

    def paths(self) -> list[tuple[tuple, int]]:
        """Every node's path paired with the count of transactions ending there.

        Re-inserting these paths reproduces the tree exactly.
        """
        out = []
        stack = [(self.root, ())]
        while stack:
            node, prefix = stack.pop()
            ending = node.count - sum(c.count for c in node.children.values())
            if node.item is not None and ending > 0:
                out.append((prefix, ending))
            for c in reversed(self._sorted_children(node)):
                stack.append((c, prefix + (c.item,)))
        return out

    @classmethod
    def from_paths(cls, item_order, paths) -> "FPTree":
        tree = cls(item_order)
        for path, count in paths:
            tree.insert(path, count)
        return tree

    def to_nodes(self) -> tuple[int, list[tuple[int, object, int]]]:
        """Compact pre-order encoding ``(root_count, [(parent_index, item, count), ...])``.

        Index 0 is the root; a node's parent always precedes it.
        """
        out = []
        stack = [(self.root, 0)]
        while stack:
            node, idx = stack.pop()
            for child in node.children.values():
                out.append((idx, child.item, child.count))
                stack.append((child, len(out)))
        return self.root.count, out

    @classmethod
    def from_nodes(cls, item_order, encoded) -> "FPTree":
        root_count, nodes = encoded
        tree = cls(item_order)
        tree.root.count = root_count
        index = [tree.root]
        header = tree.header
        for parent_idx, item, count in nodes:
            parent = index[parent_idx]
            node = FPNode(item, count, parent)
            parent.children[item] = node
            header.setdefault(item, []).append(node)
            index.append(node)
        return tree

    def single_path(self):
        """The node chain if the tree has no branching, else None."""
        chain = []
        node = self.root
        while node.children:
            if len(node.children) > 1:
                return None
            node = next(iter(node.children.values()))
            chain.append(node)
        return chain

    def check_invariants(self) -> None:
        rank = self.rank
        stack = [self.root]
        seen = {}
        while stack:
            node = stack.pop()
            kids = node.children.values()
            assert node is self.root or node.count >= sum(c.count for c in kids)
            for c in kids:
                if node.item is not None:
                    assert rank[c.item] > rank[node.item], "path not in item order"
                seen[c.item] = seen.get(c.item, 0) + 1
                stack.append(c)
        assert set(seen) == set(self.header)
        assert all(seen[x] == len(v) for x, v in self.header.items())


def build_fp_tree(transactions, item_order, min_count: int = 0, support: dict | None = None) -> FPTree:
    """Insert each transaction restricted to items whose support reaches ``min_count``.

    ``support`` should hold global counts when building a chunk tree; by default
    it is counted over ``transactions`` themselves.
    """
    transactions = list(transactions)
    if support is None:
        support = {}
        for t in transactions:
            for x in t:
                support[x] = support.get(x, 0) + 1
    keep = [x for x in item_order if support.get(x, 0) >= min_count]
    tree = FPTree(item_order)
    keep_rank = {x: tree.rank[x] for x in keep}
    for t in transactions:
        path = sorted((x for x in t if x in keep_rank), key=keep_rank.__getitem__)
        if path:
            tree.insert(path)
    return tree


def merge_trees(trees) -> FPTree:
    """Node-wise sum: coinciding nodes add counts, new nodes are grafted."""
    trees = list(trees)
    if not trees:
        raise ValueError("merge_trees needs at least one tree")
    order = trees[0].item_order
    for t in trees[1:]:
        if t.item_order != order:
            raise OrderMismatch("trees were built with different item orders")
    merged = FPTree(order)
    for t in trees:
        merged.root.count += t.root.count
        stack = [(t.root, merged.root)]
        while stack:
            src, dst = stack.pop()
            for item, child in src.children.items():
                target = dst.children.get(item)
                if target is None:
                    target = FPNode(item, child.count, dst)
                    dst.children[item] = target
                    merged.header.setdefault(item, []).append(target)
                else:
                    target.count += child.count
                stack.append((child, target))
    return merged


def _mine_tree(tree: FPTree, suffix: tuple, min_count: int, out: dict) -> None:
    chain = tree.single_path()
    if chain is not None:
        # every combination of a single path is frequent at its deepest node's count
        for r in range(1, len(chain) + 1):
            for combo in combinations(chain, r):
                count = combo[-1].count
                if count >= min_count:
                    out[tuple(n.item for n in combo) + suffix] = count
        return
    for item in sorted(tree.header, key=tree.rank.__getitem__, reverse=True):
        count = tree.support(item)
        if count < min_count:
            continue
        new_suffix = (item,) + suffix
        out[new_suffix] = count
        _mine_base(tree.conditional_base(item), tree.item_order, new_suffix, min_count, out)


def _mine_base(base, item_order, suffix: tuple, min_count: int, out: dict) -> None:
    if not base:
        return
    support = {}
    for path, count in base:
        for x in path:
            support[x] = support.get(x, 0) + count
    frequent = {x for x, c in support.items() if c >= min_count}
    if not frequent:
        return
    cond = FPTree(item_order)
    for path, count in base:
        kept = [x for x in path if x in frequent]
        if kept:
            cond.insert(kept, count)
    _mine_tree(cond, suffix, min_count, out)


def mine_suffix(item, base, item_order, support: int, min_count: int) -> dict:
    """All frequent itemsets whose least frequent member is ``item``."""
    out = {}
    if support >= min_count:
        out[(item,)] = support
        _mine_base(base, item_order, (item,), min_count, out)
    return out


def mine_item(tree: FPTree, item, min_count: int) -> dict:
    return mine_suffix(item, tree.conditional_base(item), tree.item_order, tree.support(item), min_count)


def mine_frequent(tree: FPTree, min_count: int, map_items=None) -> dict[tuple, int]:
    """FP-Growth over ``tree``: itemset (items in tree order) -> exact support count.

    Each top-level suffix item is an independent task; ``map_items(items)``, when
    given, must yield ``mine_item(tree, item, min_count)`` for every item (for
    example from worker processes).  Suffixes are disjoint, so the union needs
    no reconciliation.
    """
    min_count = max(1, min_count)
    items = sorted(tree.header, key=tree.rank.__getitem__, reverse=True)
    out: dict[tuple, int] = {}
    parts = (mine_item(tree, x, min_count) for x in items) if map_items is None else map_items(items)
    for part in parts:
        out.update(part)
    return out
