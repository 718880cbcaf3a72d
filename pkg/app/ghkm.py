"""Minimal GHKM rules from a target tree, a source sentence and an alignment.

The alignment links terminal positions of the tree (its k-th leaf) to source
positions. A node's span is the set of source positions linked to its yield;
its closure is the contiguous hull of the span. A node is a frontier node when
its span is nonempty and its closure contains no position linked to a leaf
outside its yield. Every internal frontier node yields one rule whose
left-hand side reaches down to the nearest frontier descendants.
"""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union
import logging

import pandas as pd

from app.aligners import Alignment
from app.exceptions import OverlappingVariableSpans, ValidationError
from app.treebank import ConstituencyTree, Internal, Leaf

TERMINAL_TYPE = "TER"
DEFAULT_TOP_K = 5

Span = Tuple[int, int]


@dataclass(frozen=True)
class GhkmRule:
    lhs: str
    rhs: Tuple[str, ...]
    count: int = 1
    reordering: bool = False
    source_span: Optional[Span] = field(default=None, compare=False)
    variable_spans: Tuple[Span, ...] = field(default=(), compare=False)

    @property
    def rhs_text(self) -> str:
        return " ".join(self.rhs)

    @property
    def key(self) -> Tuple[str, Tuple[str, ...]]:
        return self.lhs, self.rhs


@dataclass
class _Node:
    tree: ConstituencyTree
    children: List['_Node']
    leaves: Tuple[int, ...]
    span: FrozenSet[int] = frozenset()
    frontier: bool = False

    @property
    def is_leaf(self) -> bool:
        return isinstance(self.tree, Leaf)

    @property
    def closure(self) -> Optional[Span]:
        return (min(self.span), max(self.span)) if self.span else None

    @property
    def label(self) -> str:
        return TERMINAL_TYPE if self.is_leaf else self.tree.label


def _annotate(tree: ConstituencyTree, links: Dict[int, FrozenSet[int]], counter: List[int]) -> _Node:
    if isinstance(tree, Leaf):
        index = counter[0]
        counter[0] += 1
        return _Node(tree, [], (index,), links.get(index, frozenset()))
    children = [_annotate(child, links, counter) for child in tree.children]
    leaves = tuple(i for child in children for i in child.leaves)
    span = frozenset().union(*(child.span for child in children))
    return _Node(tree, children, leaves, span)


def _mark_frontier(node: _Node, links: Dict[int, FrozenSet[int]], total: Counter) -> None:
    if node.span:
        inside = Counter(s for leaf in node.leaves for s in links.get(leaf, ()))
        low, high = node.closure
        node.frontier = not any(total[s] > inside[s] for s in range(low, high + 1))
    for child in node.children:
        _mark_frontier(child, links, total)


def _frontier_descendants(node: _Node) -> List[_Node]:
    found = []
    for child in node.children:
        if child.frontier:
            found.append(child)
        elif not child.is_leaf:
            found.extend(_frontier_descendants(child))
    return found


def _render_lhs(node: _Node, lexical: bool, variables: List[_Node]) -> str:
    parts = []
    for child in node.children:
        if child.frontier and not (lexical and child.is_leaf):
            parts.append(f"x{len(variables)}:{child.label}")
            variables.append(child)
        elif child.is_leaf:
            parts.append(child.tree.text)
        else:
            parts.append(_render_lhs(child, lexical, variables))
    return f"{node.tree.label}(" + " ".join(parts) + ")"


def _build_rule(node: _Node, src_tokens: Sequence[str]) -> GhkmRule:
    lexical = all(d.is_leaf for d in _frontier_descendants(node))
    variables: List[_Node] = []
    lhs = _render_lhs(node, lexical, variables)
    spans = [v.closure for v in variables]
    for i, (low_a, high_a) in enumerate(spans):
        for low_b, high_b in spans[i + 1:]:
            if low_a <= high_b and low_b <= high_a:
                raise OverlappingVariableSpans(f"Variables of {lhs} cover overlapping source spans")
    starts = {low: (index, high) for index, (low, high) in enumerate(spans)}
    rhs: List[str] = []
    order: List[int] = []
    low, high = node.closure
    position = low
    while position <= high:
        if position in starts:
            index, end = starts[position]
            rhs.append(f"x{index}")
            order.append(index)
            position = end + 1
        else:
            rhs.append(f'"{src_tokens[position]}"')
            position += 1
    return GhkmRule(lhs, tuple(rhs), 1, order != sorted(order), node.closure, tuple(spans))


def extract_ghkm(tree: ConstituencyTree, src_tokens: Sequence[str], alignment: Alignment) -> List[GhkmRule]:
    """Minimal rules in pre-order of their root nodes."""
    links: Dict[int, set] = {}
    for target, source in alignment.pairs:
        if not 0 <= source < len(src_tokens):
            raise ValidationError(f"Source index {source} out of range for {len(src_tokens)} tokens")
        links.setdefault(target, set()).add(source)
    frozen = {target: frozenset(sources) for target, sources in links.items()}
    root = _annotate(tree, frozen, [0])
    if links and max(links) >= len(root.leaves):
        raise ValidationError(f"Target index {max(links)} out of range for {len(root.leaves)} terminals")
    total = Counter(s for sources in frozen.values() for s in sources)
    _mark_frontier(root, frozen, total)

    rules: List[GhkmRule] = []
    pending = [root]
    while pending:
        node = pending.pop()
        if node.frontier and not node.is_leaf:
            try:
                rules.append(_build_rule(node, src_tokens))
            except OverlappingVariableSpans as e:
                logging.warning(f"Skipping rule: {e}")
        pending.extend(reversed(node.children))
    return rules


# -- aggregation --------------------------------------------------------------

def count_rules(rules: Iterable[GhkmRule]) -> List[GhkmRule]:
    """Merges identical rules, summing their counts; sorted by (lhs, rhs)."""
    counts: Counter = Counter()
    reordering: Dict[Tuple[str, Tuple[str, ...]], bool] = {}
    for rule in rules:
        counts[rule.key] += rule.count
        reordering[rule.key] = rule.reordering
    return [GhkmRule(lhs, rhs, counts[(lhs, rhs)], reordering[(lhs, rhs)])
            for lhs, rhs in sorted(counts)]


@dataclass(frozen=True)
class RuleGroup:
    lhs: str
    reordering_total: int
    entries: Tuple[GhkmRule, ...]


def group_rules(rules: Iterable[GhkmRule], k: int = DEFAULT_TOP_K) -> List[RuleGroup]:
    """Groups by lhs, most reordering occurrences first; top ``k`` rhs per group."""
    by_lhs: Dict[str, List[GhkmRule]] = {}
    for rule in count_rules(rules):
        by_lhs.setdefault(rule.lhs, []).append(rule)
    groups = []
    for lhs, members in by_lhs.items():
        total = sum(rule.count for rule in members if rule.reordering)
        ranked = sorted(members, key=lambda rule: (-rule.count, rule.rhs_text))[:k]
        groups.append(RuleGroup(lhs, total, tuple(ranked)))
    return sorted(groups, key=lambda group: (-group.reordering_total, group.lhs))


def groups_to_dataframe(groups: Sequence[RuleGroup]) -> pd.DataFrame:
    rows = [{"lhs": group.lhs, "reordering_total": group.reordering_total, "rhs": rule.rhs_text,
             "count": rule.count, "reordering": rule.reordering}
            for group in groups for rule in group.entries]
    return pd.DataFrame(rows, columns=["lhs", "reordering_total", "rhs", "count", "reordering"])


@dataclass(frozen=True)
class RuleStatistics:
    total_rules: int
    reordering_rules: int
    top_reordering_rule: Optional[Tuple[str, str]]
    top_rule_sentences: int
    sentences: int

    @property
    def reordering_share(self) -> float:
        return self.reordering_rules / self.total_rules if self.total_rules else 0.0

    @property
    def top_rule_sentence_share(self) -> float:
        return self.top_rule_sentences / self.sentences if self.sentences else 0.0


def rule_statistics(rules_per_sentence: Sequence[Sequence[GhkmRule]]) -> RuleStatistics:
    """Counts distinct rules, the reordering share and the reach of the most common reordering rule."""
    merged = count_rules(rule for rules in rules_per_sentence for rule in rules)
    reordering = [rule for rule in merged if rule.reordering]
    top = min(reordering, key=lambda rule: (-rule.count, rule.lhs, rule.rhs_text)) if reordering else None
    reach = sum(1 for rules in rules_per_sentence if top and any(r.key == top.key for r in rules))
    return RuleStatistics(len(merged), len(reordering),
                          (top.lhs, top.rhs_text) if top else None, reach, len(rules_per_sentence))


# -- rules file ---------------------------------------------------------------

def write_rules(rules: Iterable[GhkmRule], path: Union[str, Path], encoding: str = "utf-8") -> None:
    with open(path, "w", encoding=encoding) as handle:
        for rule in rules:
            handle.write(f"{rule.lhs}\t{rule.rhs_text}\t{rule.count}\t{int(rule.reordering)}\n")


def read_rules(path: Union[str, Path], encoding: str = "utf-8") -> List[GhkmRule]:
    rules = []
    with open(path, encoding=encoding) as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 4:
                raise ValidationError(f"Malformed rule on line {number} of {path}")
            lhs, rhs, count, flag = fields
            try:
                rules.append(GhkmRule(lhs, tuple(rhs.split()), int(count), flag == "1"))
            except ValueError as e:
                raise ValidationError(f"Malformed rule count on line {number} of {path}") from e
    return rules
