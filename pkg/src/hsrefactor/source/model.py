"""Structural model of a parsed Haskell file."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

# control constructs; the rest are structural
BODY = "Body"
IF = "If"
CASE = "CaseAlt"
GUARDS = "GuardSet"
LAMBDA = "Lambda"
LET = "LetIn"
WHERE = "WhereBlock"
DO = "DoBlock"
AND = "BooleanAnd"
OR = "BooleanOr"
LC_GUARD = "ListComprehensionGuard"
APPLICATION = "Application"

NODE_KINDS = (BODY, IF, CASE, GUARDS, LAMBDA, LET, WHERE, DO, AND, OR, LC_GUARD, APPLICATION)
CONTROL_KINDS = frozenset({IF, CASE, GUARDS})


@dataclass(frozen=True)
class ConstructNode:
    """One node of a function's construct tree.

    Layout of ``children`` by kind:

    * ``If``: exactly three Body nodes (condition, then-branch, else-branch).
    * ``CaseAlt``: a scrutinee Body followed by one Body per alternative;
      ``n`` is the number of alternatives.
    * ``GuardSet``: one Body per guarded branch; ``n`` is the number of guards
      and ``exhaustive`` records a trailing ``otherwise``/``True`` guard.
    * everything else: children evaluated in sequence.
    """

    kind: str
    children: tuple["ConstructNode", ...] = ()
    n: int = 0
    exhaustive: bool = True

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise ValueError(f"unknown construct kind {self.kind!r}")
        if self.kind == CASE and (self.n < 1 or len(self.children) != self.n + 1):
            raise ValueError("CaseAlt needs n >= 1 alternatives plus a scrutinee")
        if self.kind == GUARDS and (self.n < 1 or len(self.children) != self.n):
            raise ValueError("GuardSet needs n >= 1 guarded branches")
        if self.kind == IF and len(self.children) != 3:
            raise ValueError("If needs condition, then and else children")

    def walk(self) -> Iterator["ConstructNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def size(self) -> int:
        return sum(1 for _ in self.walk())

    def count(self, kind: str) -> int:
        return sum(1 for node in self.walk() if node.kind == kind)


def body(*children: ConstructNode) -> ConstructNode:
    return ConstructNode(BODY, tuple(children))


def if_node(cond: ConstructNode, then: ConstructNode, else_: ConstructNode) -> ConstructNode:
    return ConstructNode(IF, (cond, then, else_))


def case_node(scrutinee: ConstructNode, alts: list[ConstructNode]) -> ConstructNode:
    return ConstructNode(CASE, (scrutinee, *alts), n=len(alts))


def guard_node(arms: list[ConstructNode], exhaustive: bool) -> ConstructNode:
    return ConstructNode(GUARDS, tuple(arms), n=len(arms), exhaustive=exhaustive)


def leaf(kind: str, *children: ConstructNode) -> ConstructNode:
    return ConstructNode(kind, tuple(children))


@dataclass(frozen=True)
class ImportDecl:
    module: str
    names: tuple[str, ...] | None
    line: int
    qualified: bool = False
    alias: str | None = None
    hiding: bool = False
    # True when the list names a type with its constructors, e.g. Maybe(..)
    has_subordinates: bool = False


@dataclass(frozen=True)
class FunctionUnit:
    name: str
    has_type_signature: bool
    span: tuple[int, int]
    constructs: ConstructNode
    identifiers_used: Counter = field(compare=False, hash=False)
    signature: str | None = None
    code_lines: int = 0


@dataclass(frozen=True)
class ParseGap:
    span: tuple[int, int]
    reason: str


@dataclass(frozen=True)
class Signature:
    names: tuple[str, ...]
    text: str
    span: tuple[int, int]
    constrained: bool


@dataclass(frozen=True)
class SourceFile:
    path: str
    module_name: str | None
    imports: tuple[ImportDecl, ...]
    declarations: tuple[FunctionUnit, ...]
    raw_line_count: int
    code_line_count: int
    blank_line_count: int = 0
    comment_line_count: int = 0
    exports: tuple[str, ...] | None = None
    signatures: tuple[Signature, ...] = ()
    class_decls: int = 0
    instance_decls: int = 0
    other_identifiers: Counter = field(default_factory=Counter, compare=False, hash=False)
    gaps: tuple[ParseGap, ...] = ()
    lines: tuple[str, ...] = field(default=(), repr=False, compare=False, hash=False)

    @property
    def declaration_names(self) -> list[str]:
        return [d.name for d in self.declarations]
