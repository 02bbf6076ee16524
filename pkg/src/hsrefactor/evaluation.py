"""Pre/post improvement percentages, size-category aggregation and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from . import metrics as _metrics
from .errors import EmptyInput, SchemaMismatch, ZeroBaseline
from .source.model import SourceFile
from .toolchain import LintCounts, ProfileStats

SCHEMA_VERSION = 1

METRICS = (
    "loc",
    "cyclomatic_complexity",
    "branching_depth",
    "suggestions",
    "warnings",
    "errors",
    "runtime",
    "memory",
)
GROUPS: dict[str, tuple[str, ...]] = {
    "complexity": ("loc", "cyclomatic_complexity", "branching_depth"),
    "quality": ("suggestions", "warnings", "errors"),
    "performance": ("runtime", "memory"),
}
SIZE_CATEGORIES = ("large", "medium", "small")

# column captions used in the markdown tables
_HEADERS = {
    "loc": "LOC",
    "cyclomatic_complexity": "CC",
    "branching_depth": "BD",
    "suggestions": "Sugg",
    "warnings": "Warn",
    "errors": "Err",
    "runtime": "Runtime",
    "memory": "Memory",
}
_GROUP_HEADERS = {
    "complexity": "Avg. Code Complexity",
    "quality": "Avg. Code Quality",
    "performance": "Avg. Performance",
}

SMALL_MAX = 500
MEDIUM_MAX = 2000


def size_category(loc: int) -> str:
    if loc < SMALL_MAX:
        return "small"
    if loc <= MEDIUM_MAX:
        return "medium"
    return "large"


def round2(value: float) -> float:
    """Half-up rounding to two decimals, for presentation only."""
    # snap away binary noise first so a mean like 7.6049999... still rounds as 7.605
    snapped = Decimal(repr(value)).quantize(Decimal("1e-9"), rounding=ROUND_HALF_UP)
    return float(snapped.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def fmt2(value: float | None) -> str:
    return "n/a" if value is None else f"{round2(value):.2f}"


def improvement_raw(pre: float, post: float) -> float:
    if pre == 0:
        raise ZeroBaseline("baseline is zero; improvement is undefined")
    if pre < 0 or post < 0:
        raise ValueError("metric values must be non-negative")
    return (pre - post) / pre * 100.0


def improvement_percent(pre: float, post: float) -> float:
    """(pre - post) / pre * 100 rounded half-up to 2 decimals."""
    return round2(improvement_raw(pre, post))


@dataclass
class MetricsSnapshot:
    loc: int
    total_cc: int
    max_branching_depth: int
    feature_count: int = 0
    lint: LintCounts | None = None
    profile: ProfileStats | None = None
    captured_at: str | None = None
    label: str = "pre"
    per_function_cc: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("loc", "total_cc", "max_branching_depth", "feature_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.label not in ("pre", "post"):
            raise ValueError(f"label must be 'pre' or 'post', got {self.label!r}")

    def values(self) -> dict[str, int | None]:
        lint, prof = self.lint, self.profile
        return {
            "loc": self.loc,
            "cyclomatic_complexity": self.total_cc,
            "branching_depth": self.max_branching_depth,
            "suggestions": lint.suggestions if lint else None,
            "warnings": lint.warnings if lint else None,
            "errors": lint.errors if lint else None,
            "runtime": prof.total_ticks if prof else None,
            "memory": prof.total_alloc_bytes if prof else None,
        }

    def to_dict(self, *, with_timestamp: bool = True) -> dict:
        out = {
            "label": self.label,
            "loc": self.loc,
            "total_cc": self.total_cc,
            "max_branching_depth": self.max_branching_depth,
            "feature_count": self.feature_count,
            "lint": self.lint.to_dict() if self.lint else None,
            "profile": self.profile.to_dict() if self.profile else None,
            "per_function_cc": dict(sorted(self.per_function_cc.items())),
        }
        if with_timestamp:
            out["captured_at"] = self.captured_at
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsSnapshot":
        try:
            lint = data.get("lint")
            prof = data.get("profile")
            return cls(
                loc=int(data["loc"]),
                total_cc=int(data["total_cc"]),
                max_branching_depth=int(data["max_branching_depth"]),
                feature_count=int(data.get("feature_count", 0)),
                lint=LintCounts(int(lint["suggestions"]), int(lint["warnings"]), int(lint["errors"])) if lint else None,
                profile=ProfileStats(int(prof["total_ticks"]), int(prof["total_alloc_bytes"])) if prof else None,
                captured_at=data.get("captured_at"),
                label=data.get("label", "pre"),
                per_function_cc={k: int(v) for k, v in (data.get("per_function_cc") or {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"bad snapshot: {exc}") from exc


def snapshot_from_sources(
    files: Sequence[SourceFile],
    *,
    lint: LintCounts | None = None,
    profile: ProfileStats | None = None,
    label: str = "pre",
    captured_at: str | None = None,
) -> MetricsSnapshot:
    cc = _metrics.project_complexity(files)
    return MetricsSnapshot(
        loc=sum(f.code_line_count for f in files),
        total_cc=cc.total,
        max_branching_depth=_metrics.max_branching_depth(files),
        feature_count=_metrics.project_feature_count(files).total,
        lint=lint,
        profile=profile,
        captured_at=captured_at,
        label=label,
        per_function_cc=dict(cc.per_function),
    )


@dataclass
class ImprovementReport:
    """One project's per-metric improvements, kept at full precision."""

    project: str
    size_category: str
    per_metric: dict[str, float | None]

    def __post_init__(self):
        if self.size_category not in SIZE_CATEGORIES:
            raise SchemaMismatch(f"unknown size category {self.size_category!r}")
        unknown = set(self.per_metric) - set(METRICS)
        if unknown:
            raise SchemaMismatch(f"unknown metrics {sorted(unknown)}")
        self.per_metric = {m: self.per_metric.get(m) for m in METRICS}

    @property
    def groups(self) -> dict[str, tuple[str, ...]]:
        return GROUPS

    @classmethod
    def from_snapshots(cls, project: str, pre: MetricsSnapshot, post: MetricsSnapshot) -> "ImprovementReport":
        before, after = pre.values(), post.values()
        per: dict[str, float | None] = {}
        for m in METRICS:
            if before[m] is None or after[m] is None:
                per[m] = None
                continue
            try:
                per[m] = improvement_raw(before[m], after[m])
            except ZeroBaseline:
                per[m] = None
        return cls(project, size_category(pre.loc), per)

    def to_dict(self) -> dict:
        return {"project": self.project, "size_category": self.size_category, "per_metric": dict(self.per_metric)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ImprovementReport":
        try:
            per = {k: (None if v is None else float(v)) for k, v in data["per_metric"].items()}
            return cls(str(data["project"]), str(data["size_category"]), per)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise SchemaMismatch(f"bad improvement row: {exc}") from exc


@dataclass
class AggregateReport:
    per_category_averages: dict[tuple[str, str], float | None]
    total_averages: dict[str, float | None]
    per_category_group_averages: dict[tuple[str, str], float | None]

    def categories(self) -> list[str]:
        present = {c for c, _ in self.per_category_averages}
        return [c for c in SIZE_CATEGORIES if c in present]

    def to_dict(self) -> dict:
        cats = self.categories()
        return {
            "per_category_averages": {c: {m: self.per_category_averages[(c, m)] for m in METRICS} for c in cats},
            "total_averages": {m: self.total_averages[m] for m in METRICS},
            "per_category_group_averages": {
                c: {g: self.per_category_group_averages[(c, g)] for g in GROUPS} for c in cats
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AggregateReport":
        try:
            return cls(
                {(c, m): v for c, row in data["per_category_averages"].items() for m, v in row.items()},
                dict(data["total_averages"]),
                {(c, g): v for c, row in data["per_category_group_averages"].items() for g, v in row.items()},
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaMismatch(f"bad aggregate: {exc}") from exc


def _mean(values: Iterable[float | None]) -> float | None:
    present = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return fmean(present) if present else None


def aggregate(rows: Sequence[ImprovementReport]) -> AggregateReport:
    if not rows:
        raise EmptyInput("aggregate needs at least one row")
    per_cat: dict[tuple[str, str], float | None] = {}
    groups: dict[tuple[str, str], float | None] = {}
    for cat in SIZE_CATEGORIES:
        members = [r for r in rows if r.size_category == cat]
        if not members:
            continue
        for m in METRICS:
            per_cat[(cat, m)] = _mean(r.per_metric[m] for r in members)
        for g, member_metrics in GROUPS.items():
            groups[(cat, g)] = _mean(per_cat[(cat, m)] for m in member_metrics)
    total = {m: _mean(r.per_metric[m] for r in rows) for m in METRICS}
    return AggregateReport(per_cat, total, groups)


def _ordered(rows: Sequence[ImprovementReport]) -> list[ImprovementReport]:
    rank = {c: i for i, c in enumerate(SIZE_CATEGORIES)}
    # stable: keeps input order inside a category
    return sorted(rows, key=lambda r: rank[r.size_category])


def _markdown(agg: AggregateReport, rows: Sequence[ImprovementReport], meta: Mapping | None) -> str:
    out = ["# Improvement report", ""]
    for k, v in (meta or {}).items():
        out.append(f"- {k}: {v}")
    if meta:
        out.append("")
    out.append("## Post-refactoring improvements (%)")
    out.append("")
    out.append("| Size | Project | " + " | ".join(_HEADERS[m] for m in METRICS) + " |")
    out.append("|---" * (len(METRICS) + 2) + "|")
    ordered = _ordered(rows)
    for cat in agg.categories():
        for r in (r for r in ordered if r.size_category == cat):
            cells = " | ".join(fmt2(r.per_metric[m]) for m in METRICS)
            out.append(f"| {cat.capitalize()} | {r.project} | {cells} |")
        cells = " | ".join(fmt2(agg.per_category_averages[(cat, m)]) for m in METRICS)
        out.append(f"| | Average ({cat.capitalize()}) | {cells} |")
    cells = " | ".join(fmt2(agg.total_averages[m]) for m in METRICS)
    out.append(f"| | Total Average | {cells} |")
    out.append("")
    out.append("## Category-wise comparison (%)")
    out.append("")
    out.append("| Category | " + " | ".join(_GROUP_HEADERS[g] for g in GROUPS) + " |")
    out.append("|---" * (len(GROUPS) + 1) + "|")
    for cat in agg.categories():
        cells = " | ".join(fmt2(agg.per_category_group_averages[(cat, g)]) for g in GROUPS)
        out.append(f"| {cat.capitalize()} | {cells} |")
    return "\n".join(out) + "\n"


def rows_to_csv(rows: Sequence[ImprovementReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["project", "size_category", *METRICS])
    for r in rows:
        w.writerow([r.project, r.size_category, *("" if r.per_metric[m] is None else repr(r.per_metric[m]) for m in METRICS)])
    return buf.getvalue()


def load_rows_csv(text: str) -> list[ImprovementReport]:
    reader = csv.DictReader(io.StringIO(text))
    need = {"project", "size_category", *METRICS}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        missing = sorted(need - set(reader.fieldnames or ()))
        raise SchemaMismatch(f"row CSV is missing columns {missing}")
    rows = []
    for rec in reader:
        try:
            per = {m: (float(rec[m]) if rec[m].strip() else None) for m in METRICS}
        except ValueError as exc:
            raise SchemaMismatch(f"non-numeric value in row {rec['project']!r}: {exc}") from exc
        rows.append(ImprovementReport(rec["project"].strip(), rec["size_category"].strip().lower(), per))
    if not rows:
        raise EmptyInput("row CSV has no data rows")
    return rows


def emit_report(
    agg: AggregateReport,
    rows: Sequence[ImprovementReport],
    format: str = "json",
    meta: Mapping | None = None,
) -> str:
    if format == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "meta": dict(meta or {}),
            "rows": [r.to_dict() for r in rows],
            "aggregate": agg.to_dict(),
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if format == "markdown":
        return _markdown(agg, rows, meta)
    if format == "csv":
        return rows_to_csv(rows)
    raise ValueError(f"unknown report format {format!r}")


def parse_report(text: str) -> tuple[AggregateReport | None, list[ImprovementReport]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"report is not JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch("unsupported report schema_version")
    rows = [ImprovementReport.from_dict(r) for r in doc.get("rows", [])]
    if doc.get("aggregate") is None:
        return None, rows  # a failed pipeline run has nothing to aggregate
    return AggregateReport.from_dict(doc["aggregate"]), rows
