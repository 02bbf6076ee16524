"""The 42-item Haskell refactoring checklist and its statically checkable subset."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from . import metrics
from .source import SourceFile, find_unused_imports

STATIC = "static"
LINT_TOOL = "lint_tool"
LLM = "llm"
REPORT_ONLY = "report_only"
DETECTION_MODES = (STATIC, LINT_TOOL, LLM, REPORT_ONLY)

CATEGORIES = {
    1: "Code Cleanup & Simplification",
    2: "Readability & Style",
    3: "Module & Dependency Management",
    4: "Abstraction & Reusability",
    5: "Safety & Robustness",
    6: "Performance Optimization",
    7: "Functional Idiom",
    8: "Continuous Improvement",
}

_ITEMS = [
    (1, 1, "Remove unused imports"),
    (2, 1, "Remove dead code (unused functions or values)"),
    (3, 1, "Eliminate redundant let or where bindings"),
    (4, 1, "Remove duplicate or repeated code"),
    (5, 1, "Simplify boolean expressions and conditions"),
    (6, 1, "Remove unnecessary parentheses and lambdas"),
    (7, 1, "Collapse nested case or if statements"),
    (8, 2, "Use descriptive function and variable names"),
    (9, 2, "Add explicit type signatures to all top-level functions"),
    (10, 2, "Add type annotations where inference harms readability"),
    (11, 2, "Split large functions into smaller helpers"),
    (12, 2, "Use where or let clauses meaningfully"),
    (13, 2, "Use point-free style where it improves readability"),
    (14, 2, "Avoid overusing point-free style when it hurts clarity"),
    (15, 3, "Organize code into coherent modules"),
    (16, 3, "Follow the single-responsibility principle in modules"),
    (17, 3, "Avoid circular module dependencies"),
    (18, 3, "Export only what's necessary from modules"),
    (19, 3, "Hide internal implementations in module exports"),
    (20, 4, "Abstract common logic using higher-order functions"),
    (21, 4, "Define reusable patterns with typeclasses or pattern synonyms"),
    (22, 5, "Prefer pure functions and minimize side effects"),
    (23, 5, "Use monads and applicatives appropriately"),
    (24, 5, "Avoid partial functions like head, tail, fromJust"),
    (25, 5, "Handle all data constructors explicitly in pattern matches"),
    (26, 5, "Use strictness annotations (BangPatterns, seq) to avoid space leaks"),
    (27, 6, "Use foldl' for strict folding over large data"),
    (28, 6, "Avoid creating unnecessary intermediate data structures"),
    (29, 6, "Consider streaming libraries (conduit, pipes, etc.) for large data"),
    (30, 6, "Replace primitive types with newtype or data for stronger type safety"),
    (31, 6, "Benchmark and profile critical sections after refactoring"),
    (32, 7, "Prefer map, foldr, foldl', zipWith, etc., over manual recursion"),
    (33, 7, "Choose between list comprehensions and monadic code based on readability"),
    (34, 7, "Use pattern matching instead of if-then-else where appropriate"),
    (35, 7, "Use applicative style for independent computations"),
    (36, 7, "Use maybe, either, or pattern guards to handle optional/alternative flows"),
    (37, 7, "Avoid String in performance-sensitive code (use Text or ByteString)"),
    (38, 8, "Use NonEmpty lists where empty lists are invalid"),
    (39, 8, "Format code consistently (indentation, spacing, alignment)"),
    (40, 8, "Use tools like hlint, weeder, and ghcid for continuous feedback"),
    (41, 8, "Use literate Haskell (.lhs) where inline documentation is beneficial"),
    (42, 8, "Use compiler warnings (-Wall, -Werror) to catch issues early"),
]

_STATIC_IDS = {1, 2, 9, 11, 24, 37}
_LINT_IDS = {3, 5, 6, 7, 13, 32, 34}
_REPORT_IDS = {39, 40, 41, 42}

PARTIAL_FUNCTIONS = ("head", "tail", "fromJust", "init", "last")

LONG_FUNCTION_THRESHOLD = 30
CC_THRESHOLD = 10
DEPTH_THRESHOLD = 3

# complexity flags reuse the closest checklist item
HIGH_CC_ITEM = 11
DEEP_NESTING_ITEM = 7


def _mode(item_id: int) -> str:
    if item_id in _STATIC_IDS:
        return STATIC
    if item_id in _LINT_IDS:
        return LINT_TOOL
    if item_id in _REPORT_IDS:
        return REPORT_ONLY
    return LLM


@dataclass(frozen=True)
class ChecklistItem:
    id: int
    category: int
    category_name: str
    description: str
    detection_mode: str


@dataclass(frozen=True)
class SmellFinding:
    item_id: int
    file: str
    span: tuple[int, int] | None
    evidence: str
    source: str = STATIC

    def sort_key(self):
        line = self.span[0] if self.span else 0
        return (self.file, line, self.item_id, self.evidence)


@dataclass
class SmellReport:
    findings: list[SmellFinding]
    per_category_counts: dict[int, int]
    metrics: Any = None
    thresholds: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "findings": [
                {
                    "item_id": f.item_id,
                    "file": f.file,
                    "span": list(f.span) if f.span else None,
                    "evidence": f.evidence,
                    "source": f.source,
                }
                for f in self.findings
            ],
            "per_category_counts": {str(k): v for k, v in sorted(self.per_category_counts.items())},
            "thresholds": dict(self.thresholds),
        }

    def render(self) -> str:
        """Plain-text listing used as agent prompt context."""
        if not self.findings:
            return "No static findings."
        by_id = {item.id: item for item in load_checklist()}
        lines = []
        for f in self.findings:
            where = f"{f.file}:{f.span[0]}" if f.span else f.file
            lines.append(f"- [{f.item_id}] {by_id[f.item_id].description} @ {where}: {f.evidence}")
        return "\n".join(lines)


def load_checklist() -> list[ChecklistItem]:
    return [
        ChecklistItem(i, cat, CATEGORIES[cat], desc, _mode(i))
        for i, cat, desc in _ITEMS
    ]


def item(item_id: int) -> ChecklistItem:
    for it in load_checklist():
        if it.id == item_id:
            return it
    raise KeyError(item_id)


_STRING_TYPE = re.compile(r"(?<![\w'.])String(?![\w'])")


def _dead_code(file: SourceFile) -> list[SmellFinding]:
    # only meaningful when the module restricts its exports
    if file.exports is None:
        return []
    exported = set(file.exports)
    used: Counter = Counter(file.other_identifiers)
    findings = []
    for d in file.declarations:
        if d.name in exported or d.name == "main":
            continue
        referenced = used[d.name] > 0 or any(
            other.identifiers_used[d.name] for other in file.declarations if other is not d
        )
        if not referenced:
            findings.append(SmellFinding(2, file.path, d.span, f"top-level '{d.name}' is never used or exported"))
    return findings


def run_static_checks(
    files: Iterable[SourceFile],
    metrics_snapshot: Any = None,
    *,
    long_function_threshold: int = LONG_FUNCTION_THRESHOLD,
    cc_threshold: int = CC_THRESHOLD,
    depth_threshold: int = DEPTH_THRESHOLD,
) -> SmellReport:
    findings: list[SmellFinding] = []
    for f in files:
        for imp in find_unused_imports(f):
            findings.append(SmellFinding(1, f.path, (imp.line, imp.line), f"import {imp.module} ({', '.join(imp.names)}) unused"))
        findings.extend(_dead_code(f))
        for d in f.declarations:
            if not d.has_type_signature:
                findings.append(SmellFinding(9, f.path, d.span, f"'{d.name}' has no type signature"))
            if d.code_lines > long_function_threshold:
                findings.append(SmellFinding(11, f.path, d.span, f"'{d.name}' spans {d.code_lines} code lines"))
            cc = metrics.function_complexity(d)
            if cc > cc_threshold:
                findings.append(SmellFinding(HIGH_CC_ITEM, f.path, d.span, f"high-cc: '{d.name}' has cyclomatic complexity {cc}"))
            depth = metrics.branching_depth(d)
            if depth > depth_threshold:
                findings.append(SmellFinding(DEEP_NESTING_ITEM, f.path, d.span, f"deep-nesting: '{d.name}' nests {depth} control structures"))
            for partial in PARTIAL_FUNCTIONS:
                for line in _lines_using(f, d, partial):
                    findings.append(SmellFinding(24, f.path, (line, line), f"partial function '{partial}' in '{d.name}'"))
            if d.signature and _STRING_TYPE.search(d.signature):
                findings.append(SmellFinding(37, f.path, d.span, f"'{d.name}' signature mentions String"))
    findings.sort(key=SmellFinding.sort_key)
    counts = {c: 0 for c in CATEGORIES}
    by_id = {it.id: it for it in load_checklist()}
    for fd in findings:
        counts[by_id[fd.item_id].category] += 1
    return SmellReport(
        findings,
        counts,
        metrics_snapshot,
        {
            "long_function": long_function_threshold,
            "cc": cc_threshold,
            "depth": depth_threshold,
        },
    )


_IDENT_CACHE: dict[str, re.Pattern] = {}


def _lines_using(file: SourceFile, unit, name: str) -> list[int]:
    if not unit.identifiers_used[name]:
        return []
    pat = _IDENT_CACHE.setdefault(name, re.compile(rf"(?<![\w'.]){re.escape(name)}(?![\w'])"))
    # qualified uses such as Maybe.fromJust also count
    qpat = re.compile(rf"\b[A-Z][\w.]*\.{re.escape(name)}(?![\w'])")
    out = []
    for ln in range(unit.span[0], unit.span[1] + 1):
        text = _strip_comment(file.lines[ln - 1])
        if pat.search(text) or qpat.search(text):
            out.append(ln)
    return out


def _strip_comment(line: str) -> str:
    # drop string literals then a trailing line comment
    line = re.sub(r'"(?:\\.|[^"\\])*"', '""', line)
    return re.split(r"--(?![!#$%&*+./<=>?@\\^|~:])", line, maxsplit=1)[0]


@dataclass(frozen=True)
class RefactoringPattern:
    name: str
    smell: str
    before: str
    after: str


def pattern_catalog() -> list[RefactoringPattern]:
    return [
        RefactoringPattern(
            "compose-map-filter",
            "nested map/filter chains",
            "map f (filter p (map g xs))",
            "(map f . filter p . map g) xs",
        ),
        RefactoringPattern(
            "operator-section",
            "lambda that only applies an operator",
            "map (\\x -> x * 2) xs",
            "map (* 2) xs",
        ),
        RefactoringPattern(
            "descriptive-name",
            "unclear function name",
            "proc xs = sum (map snd xs)",
            "totalQuantity items = sum (map snd items)",
        ),
    ]


def render_catalog(patterns: Iterable[RefactoringPattern] | None = None) -> str:
    patterns = pattern_catalog() if patterns is None else patterns
    blocks = []
    for p in patterns:
        blocks.append(f"* {p.smell} ({p.name})\n  before: {p.before}\n  after:  {p.after}")
    return "\n".join(blocks)


def counts_by_category(findings: Iterable[SmellFinding]) -> Mapping[int, int]:
    by_id = {it.id: it for it in load_checklist()}
    return Counter(by_id[f.item_id].category for f in findings)
