"""Complexity and feature metrics over parsed Haskell sources.

Cyclomatic complexity is computed two independent ways: by lowering a
function's construct tree to a control-flow graph and applying
``E - N + 2P``, and by counting decision points directly. Both follow the
same conventions:

* ``if``: one decision.
* ``case`` with n alternatives: n - 1 decisions (multi-equation functions
  are folded into a case over their equations).
* guard set with n guards: n - 1 decisions when the last guard is
  ``otherwise``/``True``, n otherwise (the pattern-match failure path).
* ``&&`` / ``||``: one decision each (short-circuit).
* list-comprehension guard: one decision.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import MalformedGraph
from .source import model as m
from .source.model import ConstructNode, FunctionUnit, SourceFile


@dataclass(frozen=True)
class ControlFlowGraph:
    nodes: frozenset[int]
    edges: frozenset[tuple[int, int]]
    entry: int
    exit: int | None = None
    components: int = 1


@dataclass(frozen=True)
class ComplexityResult:
    per_function: Mapping[str, int]
    total: int


FEATURE_KINDS = (
    "lambda",
    "do_block",
    "class_decl",
    "instance_decl",
    "constrained_signature",
    "bind_operator",
    "higher_order_application",
)
BIND_OPERATORS = (">>=", "=<<", ">>")


@dataclass(frozen=True)
class FeatureCount:
    per_feature: Mapping[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_feature.values())

    def __add__(self, other: "FeatureCount") -> "FeatureCount":
        c = Counter(self.per_feature)
        c.update(other.per_feature)
        return FeatureCount({k: c.get(k, 0) for k in FEATURE_KINDS})


def _tree(unit: FunctionUnit | ConstructNode) -> ConstructNode:
    return unit.constructs if isinstance(unit, FunctionUnit) else unit


class _CfgBuilder:
    def __init__(self):
        self.count = 1  # node 0 is the entry
        self.edges: set[tuple[int, int]] = set()

    def new(self) -> int:
        self.count += 1
        return self.count - 1

    def join(self, frontier: list[int]) -> int:
        if len(frontier) == 1:
            return frontier[0]
        j = self.new()
        for f in frontier:
            self.edges.add((f, j))
        return j

    def branch(self, frontier: list[int], k: int) -> list[int]:
        src = self.join(frontier)
        arms = [self.new() for _ in range(k)]
        for a in arms:
            self.edges.add((src, a))
        return arms

    def seq(self, children, frontier: list[int]) -> list[int]:
        for child in children:
            frontier = self.lower(child, frontier)
        return frontier

    def lower(self, node: ConstructNode, frontier: list[int]) -> list[int]:
        kind = node.kind
        if kind == m.IF:
            cond, then, else_ = node.children
            arms = self.branch(self.lower(cond, frontier), 2)
            return self.lower(then, [arms[0]]) + self.lower(else_, [arms[1]])
        if kind == m.CASE:
            scrut, *alts = node.children
            arms = self.branch(self.lower(scrut, frontier), node.n)
            out: list[int] = []
            for arm, alt in zip(arms, alts):
                out += self.lower(alt, [arm])
            return out
        if kind == m.GUARDS:
            k = node.n if node.exhaustive else node.n + 1
            arms = self.branch(frontier, k)
            out = []
            for arm, guarded in zip(arms, node.children):
                out += self.lower(guarded, [arm])
            # non-exhaustive guards: the fall-through arm carries on as-is
            return out + arms[node.n:]
        if kind in (m.AND, m.OR):
            return self.branch(self.seq(node.children, frontier), 2)
        if kind == m.LC_GUARD:
            return self.branch(self.seq(node.children, frontier), 2)
        return self.seq(node.children, frontier)


def build_cfg(unit: FunctionUnit | ConstructNode) -> ControlFlowGraph:
    """Lower a construct tree to a single-entry, single-exit graph."""
    b = _CfgBuilder()
    frontier = b.lower(_tree(unit), [0])
    exit_node = b.new()
    for f in frontier:
        b.edges.add((f, exit_node))
    nodes = frozenset(range(b.count))
    return ControlFlowGraph(nodes, frozenset(b.edges), entry=0, exit=exit_node, components=1)


def weakly_connected_components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> int:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(n) for n in parent})


def cyclomatic_complexity(cfg: ControlFlowGraph) -> int:
    for a, b in cfg.edges:
        if a not in cfg.nodes or b not in cfg.nodes:
            raise MalformedGraph(f"edge ({a}, {b}) references an unknown node")
    if cfg.entry not in cfg.nodes:
        raise MalformedGraph(f"entry {cfg.entry} is not a node")
    return len(cfg.edges) - len(cfg.nodes) + 2 * cfg.components


def decision_count_cc(unit: FunctionUnit | ConstructNode) -> int:
    total = 1
    for node in _tree(unit).walk():
        if node.kind == m.IF:
            total += 1
        elif node.kind == m.CASE:
            total += node.n - 1
        elif node.kind == m.GUARDS:
            total += node.n - 1 if node.exhaustive else node.n
        elif node.kind in (m.AND, m.OR, m.LC_GUARD):
            total += 1
    return total


def total_complexity(results: Iterable[int]) -> int:
    return sum(results)


def branching_depth(unit: FunctionUnit | ConstructNode) -> int:
    def depth(node: ConstructNode) -> int:
        below = max((depth(c) for c in node.children), default=0)
        return below + (1 if node.kind in m.CONTROL_KINDS else 0)

    return depth(_tree(unit))


def function_complexity(unit: FunctionUnit) -> int:
    return cyclomatic_complexity(build_cfg(unit))


def file_complexity(file: SourceFile) -> ComplexityResult:
    per = {d.name: function_complexity(d) for d in file.declarations}
    return ComplexityResult(per, total_complexity(per.values()))


def project_complexity(files: Iterable[SourceFile]) -> ComplexityResult:
    per: dict[str, int] = {}
    for f in files:
        for d in f.declarations:
            per[f"{f.path}::{d.name}"] = function_complexity(d)
    return ComplexityResult(per, total_complexity(per.values()))


def feature_count(file: SourceFile) -> FeatureCount:
    c = Counter({k: 0 for k in FEATURE_KINDS})
    for d in file.declarations:
        for node in d.constructs.walk():
            if node.kind == m.LAMBDA:
                c["lambda"] += 1
            elif node.kind == m.DO:
                c["do_block"] += 1
            elif node.kind == m.APPLICATION:
                c["higher_order_application"] += 1
        c["bind_operator"] += sum(d.identifiers_used[op] for op in BIND_OPERATORS)
    c["class_decl"] += file.class_decls
    c["instance_decl"] += file.instance_decls
    c["constrained_signature"] += sum(1 for s in file.signatures if s.constrained)
    return FeatureCount(dict(c))


def project_feature_count(files: Iterable[SourceFile]) -> FeatureCount:
    acc = FeatureCount({k: 0 for k in FEATURE_KINDS})
    for f in files:
        acc = acc + feature_count(f)
    return acc


def max_branching_depth(files: Iterable[SourceFile]) -> int:
    return max((branching_depth(d) for f in files for d in f.declarations), default=0)
