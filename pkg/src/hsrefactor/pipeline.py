"""Five-phase refactoring state machine over a workspace copy of a project.

Analysis -> Refactoring -> Verification -> (Finalized | Debugging),
Debugging -> Verification, and Debugging -> Failed once the debug budget
is spent. Any phase may also end in Failed when a backend call fails.

Outputs live next to the workspace::

    <out>/<project>/workspace/      refactored code
    <out>/<project>/audit.ndjson    one record per agent call
    <out>/<project>/finalization.md
    <out>/<project>/report.json
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import agents, checklist
from .agents import AgentMessage, AuditLog
from .errors import (
    AuthFailure,
    BackendRefusal,
    BackendUnavailable,
    ContextOverflow,
    HsRefactorError,
    MalformedPayload,
    NoExecutableTarget,
    NoSourcesFound,
    PathEscape,
    ToolchainMissing,
    ToolMissing,
    WorkspaceNotWritable,
)
from .evaluation import (
    METRICS,
    SCHEMA_VERSION,
    ImprovementReport,
    MetricsSnapshot,
    aggregate,
    emit_report,
    fmt2,
    snapshot_from_sources,
)
from .source import discover_sources, parse_source
from .source.parser import DEFAULT_EXCLUDES
from .toolchain import LintCounts

log = logging.getLogger(__name__)

ANALYSIS = "Analysis"
REFACTORING = "Refactoring"
VERIFICATION = "Verification"
DEBUGGING = "Debugging"
FINALIZED = "Finalized"
FAILED = "Failed"
TERMINAL = frozenset({FINALIZED, FAILED})

ALLOWED_TRANSITIONS = frozenset(
    {
        (ANALYSIS, REFACTORING),
        (REFACTORING, VERIFICATION),
        (VERIFICATION, FINALIZED),
        (VERIFICATION, DEBUGGING),
        (DEBUGGING, VERIFICATION),
        (DEBUGGING, FAILED),
        # a backend failure aborts whatever phase is running
        (ANALYSIS, FAILED),
        (REFACTORING, FAILED),
        (VERIFICATION, FAILED),
    }
)

# backend failures that end the run as Failed instead of propagating
_ABORTING = (BackendUnavailable, BackendRefusal, ContextOverflow, AuthFailure)

FILE_MARKER = re.compile(r"^=== FILE: (?P<path>.+?) ===[ \t]*$", re.M)
REFACTOR_KINDS = frozenset({agents.EXPERT_OUT, agents.LEAD_OUT, agents.DEBUG_OUT})


@dataclass
class PipelineConfig:
    toolchain: Any
    max_debug_iterations: int = 3
    max_tokens: int = agents.DEFAULT_MAX_TOKENS
    temperature: float = agents.DEFAULT_TEMPERATURE
    project_name: str | None = None
    clock: Callable[[], float] = time.time

    def __post_init__(self):
        if self.max_debug_iterations < 1:
            raise ValueError("max_debug_iterations must be >= 1")


@dataclass(frozen=True)
class Transition:
    phase: str
    at: float


@dataclass
class VerificationReport:
    compile_ok: bool
    tests_ok: bool
    lint_ok: bool
    style_ok: bool
    lint_delta: tuple[tuple[int, int, int], tuple[int, int, int]] | None = None
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.compile_ok and self.tests_ok and self.lint_ok and self.style_ok

    def to_dict(self) -> dict:
        return {
            "compile_ok": self.compile_ok,
            "tests_ok": self.tests_ok,
            "lint_ok": self.lint_ok,
            "style_ok": self.style_ok,
            "lint_delta": [list(self.lint_delta[0]), list(self.lint_delta[1])] if self.lint_delta else None,
            "failures": list(self.failures),
        }

    def render(self) -> str:
        lines = [
            f"compile: {'ok' if self.compile_ok else 'FAILED'}",
            f"tests: {'ok' if self.tests_ok else 'FAILED'}",
            f"lint: {'ok' if self.lint_ok else 'FAILED'}",
            f"style: {'ok' if self.style_ok else 'FAILED'}",
        ]
        if self.lint_delta:
            (s0, w0, e0), (s1, w1, e1) = self.lint_delta
            lines.append(f"lint counts (suggestions/warnings/errors): before {s0}/{w0}/{e0}, after {s1}/{w1}/{e1}")
        if self.failures:
            lines.append("failures:")
            lines.extend(f"- {f}" for f in self.failures)
        return "\n".join(lines)


@dataclass(frozen=True)
class FileChange:
    path: str
    role: str
    lines_before: int
    lines_after: int

    @property
    def summary(self) -> str:
        return f"rewritten by {self.role} ({self.lines_before} -> {self.lines_after} lines)"


@dataclass
class FinalizationDoc:
    strategies_used: list[str]
    changes_made: list[tuple[str, str]]
    improvements: ImprovementReport | None

    def render(self) -> str:
        out = ["# Refactoring summary", "", "## Strategies used", ""]
        out += [f"- {s}" for s in self.strategies_used] or ["- (none recorded)"]
        out += ["", "## Changes made", ""]
        out += [f"- `{path}`: {summary}" for path, summary in self.changes_made] or ["- (no files changed)"]
        if self.improvements is not None:
            out += ["", "## Improvements (%)", "", "| Metric | Improvement |", "|---|---|"]
            out += [f"| {m} | {fmt2(self.improvements.per_metric[m])} |" for m in METRICS]
        return "\n".join(out) + "\n"


@dataclass
class PipelineState:
    phase: str
    project: Path
    max_debug_iterations: int
    artifacts: dict[str, Any] = field(default_factory=dict)
    messages: list[AgentMessage] = field(default_factory=list)
    debug_iteration: int = 0
    history: list[Transition] = field(default_factory=list)
    changes: list[FileChange] = field(default_factory=list)
    failure: str | None = None

    def transition(self, phase: str, clock: Callable[[], float]) -> None:
        if (self.phase, phase) not in ALLOWED_TRANSITIONS:
            raise HsRefactorError(f"illegal transition {self.phase} -> {phase}")
        now = clock()
        # keep history strictly increasing even on coarse clocks
        if self.history and now <= self.history[-1].at:
            now = self.history[-1].at + 1e-6
        self.phase = phase
        self.history.append(Transition(phase, now))

    def add(self, msg: AgentMessage) -> None:
        self.messages.append(msg)
        self.artifacts[msg.kind] = msg


# ---------------------------------------------------------------- workspace


def tree_digest(root: str | Path) -> str:
    """SHA-256 over every file path and content under root."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(b"\0")
            h.update(p.read_bytes())
            h.update(b"\0")
    return h.hexdigest()


def prepare_workspace(project: str | Path, out_dir: str | Path, name: str | None = None) -> Path:
    """Copy project into <out>/<name>/workspace and return the workspace path."""
    project = Path(project).resolve()
    out_dir = Path(out_dir).resolve()
    if out_dir == project or project in out_dir.parents:
        raise WorkspaceNotWritable(f"output directory {out_dir} lies inside the project")
    run_dir = out_dir / (name or project.name)
    workspace = run_dir / "workspace"
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        if workspace.exists():
            shutil.rmtree(workspace)
        for stale in ("audit.ndjson", "report.json", "finalization.md"):
            (run_dir / stale).unlink(missing_ok=True)
        shutil.copytree(project, workspace, ignore=shutil.ignore_patterns(*DEFAULT_EXCLUDES, ".git"))
    except OSError as exc:
        raise WorkspaceNotWritable(str(exc)) from exc
    return workspace


def render_sources(workspace: Path, paths: Sequence[Path]) -> str:
    blocks = []
    for p in paths:
        rel = p.relative_to(workspace).as_posix()
        text = p.read_text(encoding="utf-8", errors="replace")
        blocks.append(f"=== FILE: {rel} ===\n{text.rstrip()}\n")
    return "\n".join(blocks)


def _source_paths(workspace: Path) -> list[Path]:
    return [Path(p) for p in discover_sources(workspace)]


def _parse_all(workspace: Path):
    files = []
    for p in _source_paths(workspace):
        rel = p.relative_to(workspace).as_posix()
        files.append(parse_source(p.read_bytes(), rel))
    return files


# ---------------------------------------------------------------- apply


def parse_file_blocks(payload: str) -> list[tuple[str, str]]:
    marks = list(FILE_MARKER.finditer(payload))
    if not marks:
        raise MalformedPayload("payload contains no file blocks")
    blocks = []
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(payload)
        body = payload[m.end():end]
        body = body[1:] if body.startswith("\n") else body
        blocks.append((m.group("path").strip(), body.rstrip("\n") + "\n"))
    return blocks


def _check_path(workspace: Path, rel: str) -> Path:
    if not rel or os.path.isabs(rel) or rel.startswith(("/", "\\")) or re.match(r"^[A-Za-z]:", rel):
        raise PathEscape(f"absolute target path {rel!r}")
    if ".." in re.split(r"[\\/]", rel):
        raise PathEscape(f"target {rel!r} leaves the workspace")
    target = (workspace / rel).resolve()
    if workspace.resolve() not in target.parents:
        raise PathEscape(f"target {rel!r} resolves outside the workspace")
    return target


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _sane(rel: str, text: str) -> str | None:
    """Reason the content is unacceptable, or None."""
    if not rel.endswith(".hs"):
        return None
    try:
        parsed = parse_source(text, rel)
    except HsRefactorError as exc:
        return str(exc)
    if parsed.gaps:
        return f"does not parse: {parsed.gaps[0].reason} (line {parsed.gaps[0].span[0]})"
    return None


def apply_refactoring(
    workspace: str | Path,
    role_output: AgentMessage,
    rejections: list[tuple[str, str]] | None = None,
) -> list[FileChange]:
    if role_output.kind not in REFACTOR_KINDS:
        raise MalformedPayload(f"{role_output.kind} messages carry no file edits")
    workspace = Path(workspace)
    blocks = parse_file_blocks(role_output.payload)
    # validate every target before touching anything
    targets = [_check_path(workspace, rel) for rel, _ in blocks]
    applied = []
    for (rel, text), target in zip(blocks, targets):
        reason = _sane(rel, text)
        if reason is not None:
            log.warning("rejected %s from %s: %s", rel, role_output.from_role, reason)
            if rejections is not None:
                rejections.append((rel, reason))
            continue
        old = target.read_text(encoding="utf-8", errors="replace") if target.exists() else None
        if old == text:
            continue
        atomic_write(target, text)
        applied.append(FileChange(rel, role_output.from_role, old.count("\n") if old else 0, text.count("\n")))
    return applied


# ---------------------------------------------------------------- verify


def verify(workspace: str | Path, toolchain, baseline: LintCounts | None) -> VerificationReport:
    """Compile, test, lint and style gates in that order, stopping at the first failure."""

    def call(fn):
        try:
            return fn(workspace)
        except ToolMissing as exc:
            raise ToolchainMissing(str(exc)) from exc

    compiled = call(toolchain.run_compile_check)
    if not compiled.ok:
        return VerificationReport(False, False, False, False, None, [str(d) for d in compiled.errors])
    tests = call(toolchain.run_tests)
    if not tests.ok:
        return VerificationReport(True, False, False, False, None, list(tests.failures) or ["test suite failed"])
    post = call(toolchain.run_lint)
    failures = []
    delta = None
    lint_ok = style_ok = True
    if baseline is not None:
        delta = (baseline.as_tuple(), post.as_tuple())
        if post.warnings > baseline.warnings or post.errors > baseline.errors:
            lint_ok = False
            failures.append(
                f"lint regressed: warnings {baseline.warnings} -> {post.warnings}, errors {baseline.errors} -> {post.errors}"
            )
    if not lint_ok:
        return VerificationReport(True, True, False, False, delta, failures)
    if baseline is not None and post.suggestions > baseline.suggestions:
        style_ok = False
        failures.append(f"style regressed: suggestions {baseline.suggestions} -> {post.suggestions}")
    return VerificationReport(True, True, lint_ok, style_ok, delta, failures)


# ---------------------------------------------------------------- phases


class _Run:
    def __init__(self, workspace: Path, backend, config: PipelineConfig):
        self.ws = workspace
        self.run_dir = workspace.parent
        self.backend = backend
        self.cfg = config
        self.tc = config.toolchain
        self.audit = AuditLog(self.run_dir / "audit.ndjson")
        self.state = PipelineState(ANALYSIS, workspace, config.max_debug_iterations)
        self.state.history.append(Transition(ANALYSIS, config.clock()))
        self.name = config.project_name or self.run_dir.name
        self.pre: MetricsSnapshot | None = None
        self.post: MetricsSnapshot | None = None
        self.rejections: list[tuple[str, str]] = []

    def invoke(self, role: str, extra: Sequence[AgentMessage] = ()) -> AgentMessage:
        msg = agents.invoke(
            agents.ROLES[role],
            [*self.state.messages, *extra],
            self.backend,
            audit=self.audit,
            max_tokens=self.cfg.max_tokens,
            temperature=self.cfg.temperature,
        )
        self.state.add(msg)
        return msg

    def source_message(self, paths: Sequence[Path] | None = None) -> AgentMessage:
        paths = _source_paths(self.ws) if paths is None else paths
        return AgentMessage.make("pipeline", agents.SOURCE_CODE, render_sources(self.ws, paths))

    def apply(self, msg: AgentMessage) -> None:
        try:
            self.state.changes += apply_refactoring(self.ws, msg, self.rejections)
        except MalformedPayload as exc:
            log.warning("%s produced no usable file blocks: %s", msg.from_role, exc)

    def lint(self) -> LintCounts:
        try:
            return self.tc.run_lint(self.ws)
        except ToolMissing as exc:
            raise ToolchainMissing(str(exc)) from exc

    def profile(self):
        try:
            return self.tc.run_profile(self.ws)
        except NoExecutableTarget as exc:
            log.info("profiling skipped: %s", exc)
            return None

    # phase bodies

    def analysis(self) -> None:
        files = _parse_all(self.ws)
        if not files:
            raise NoSourcesFound(f"no .hs files under {self.ws}")
        self.pre = snapshot_from_sources(files, lint=self.lint(), profile=self.profile(), label="pre")
        smells = checklist.run_static_checks(files, self.pre)
        self.state.artifacts["pre_snapshot"] = self.pre
        self.state.artifacts[agents.STATIC_SMELLS] = smells
        self.state.add(self.source_message())
        self.state.messages.append(AgentMessage.make("pipeline", agents.STATIC_SMELLS, smells.render()))
        try:
            self.invoke("ContextStructure")
        except ContextOverflow:
            # summarise file by file and stitch the overviews together
            parts = []
            for p in _source_paths(self.ws):
                msg = agents.invoke(agents.ROLES["ContextStructure"], [self.source_message([p])], self.backend, audit=self.audit)
                parts.append(msg.payload)
            self.state.add(AgentMessage.make("ContextStructure", agents.STRUCTURE, "\n\n".join(parts)))
        self.invoke("CodeSmells")

    def refactoring(self) -> None:
        self.invoke("RefactorStrategy")
        expert_parts = []
        for p in _source_paths(self.ws):
            out = agents.invoke(
                agents.ROLES["RefactorExpert"],
                [*self.state.messages, self.source_message([p])],
                self.backend,
                audit=self.audit,
                max_tokens=self.cfg.max_tokens,
                temperature=self.cfg.temperature,
            )
            self.apply(out)
            expert_parts.append(out.payload)
        self.state.add(AgentMessage.make("RefactorExpert", agents.EXPERT_OUT, "\n".join(expert_parts)))
        self.state.add(self.source_message())
        try:
            self.apply(self.invoke("RefactorLead"))
        except ContextOverflow:
            lead_parts = []
            for p in _source_paths(self.ws):
                out = agents.invoke(
                    agents.ROLES["RefactorLead"],
                    [*self.state.messages, self.source_message([p])],
                    self.backend,
                    audit=self.audit,
                )
                self.apply(out)
                lead_parts.append(out.payload)
            self.state.add(AgentMessage.make("RefactorLead", agents.LEAD_OUT, "\n".join(lead_parts)))

    def verification(self) -> VerificationReport:
        report = verify(self.ws, self.tc, self.pre.lint if self.pre else None)
        self.state.artifacts[agents.VERIFICATION] = report
        self.state.messages.append(AgentMessage.make("pipeline", agents.VERIFICATION, report.render()))
        self.invoke("TestingValidation")
        return report

    def debug(self) -> None:
        report: VerificationReport = self.state.artifacts[agents.VERIFICATION]
        paths = _source_paths(self.ws)
        blamed = [p for p in paths if any(p.relative_to(self.ws).as_posix() in f for f in report.failures)]
        self.state.add(self.source_message(blamed or paths))
        self.apply(self.invoke("Debug"))
        self.state.debug_iteration += 1

    def finalize(self) -> None:
        files = _parse_all(self.ws)
        self.post = snapshot_from_sources(files, lint=self.lint(), profile=self.profile(), label="post")
        self.state.artifacts["post_snapshot"] = self.post

    # driver

    def run(self) -> PipelineState:
        st, clock = self.state, self.cfg.clock
        try:
            self.analysis()
            st.transition(REFACTORING, clock)
            self.refactoring()
            st.transition(VERIFICATION, clock)
            while True:
                report = self.verification()
                if report.passed:
                    self.finalize()
                    st.transition(FINALIZED, clock)
                    break
                st.transition(DEBUGGING, clock)
                debug_cycle(self)
                if st.phase == FAILED:
                    st.failure = f"verification still failing after {st.debug_iteration} debug iterations"
                    break
        except _ABORTING as exc:
            st.failure = f"{type(exc).__name__}: {exc}"
            log.error("pipeline failed: %s", st.failure)
            st.transition(FAILED, clock)
        self.write_outputs()
        return st

    def write_outputs(self) -> None:
        st = self.state
        improvement = None
        if st.phase == FINALIZED and self.pre and self.post:
            improvement = ImprovementReport.from_snapshots(self.name, self.pre, self.post)
            st.artifacts["ImprovementReport"] = improvement
            doc = FinalizationDoc(_strategies(st), [(c.path, c.summary) for c in st.changes], improvement)
            st.artifacts["FinalizationDoc"] = doc
            atomic_write(self.run_dir / "finalization.md", doc.render())
        verification = st.artifacts.get(agents.VERIFICATION)
        meta = {
            "project": self.name,
            "status": st.phase,
            "debug_iteration": st.debug_iteration,
            "max_debug_iterations": st.max_debug_iterations,
            "transitions": [t.phase for t in st.history],
            "failure": st.failure,
            "verification": verification.to_dict() if verification else None,
            "snapshots": {
                "pre": self.pre.to_dict(with_timestamp=False) if self.pre else None,
                "post": self.post.to_dict(with_timestamp=False) if self.post else None,
            },
            "changes": [{"path": c.path, "summary": c.summary} for c in st.changes],
            "rejected": [{"path": p, "reason": r} for p, r in self.rejections],
            "profile_protocol": getattr(self.tc, "profile_protocol", None),
            "audit_entries": len(self.audit.entries),
        }
        rows = [improvement] if improvement else []
        agg = aggregate(rows) if rows else None
        if agg is not None:
            text = emit_report(agg, rows, "json", meta)
        else:
            text = json.dumps(
                {"schema_version": SCHEMA_VERSION, "meta": meta, "rows": [], "aggregate": None},
                indent=2,
                sort_keys=True,
                ensure_ascii=False,
            ) + "\n"
        atomic_write(self.run_dir / "report.json", text)


def _strategies(state: PipelineState) -> list[str]:
    msg = state.artifacts.get(agents.STRATEGY)
    if msg is None:
        return []
    items = []
    for line in msg.payload.splitlines():
        line = line.strip()
        m = re.match(r"^(?:[-*]|\d+[.)])\s+(.*)", line)
        if m:
            items.append(m.group(1))
    return items or [ln.strip() for ln in msg.payload.splitlines() if ln.strip()][:10]


def run_pipeline(workspace: str | Path, backend, config: PipelineConfig) -> PipelineState:
    """Run every phase on an already prepared workspace copy."""
    workspace = Path(workspace)
    if not workspace.is_dir():
        raise WorkspaceNotWritable(f"workspace {workspace} does not exist")
    if not os.access(workspace, os.W_OK):
        raise WorkspaceNotWritable(f"workspace {workspace} is not writable")
    return _Run(workspace, backend, config).run()


def debug_cycle(run: _Run) -> PipelineState:
    """One Debugging step: ask the Debug agent for fixes and return to Verification."""
    st = run.state
    if st.phase != DEBUGGING:
        raise HsRefactorError(f"debug_cycle needs phase Debugging, not {st.phase}")
    if st.debug_iteration >= st.max_debug_iterations:
        st.transition(FAILED, run.cfg.clock)
        return st
    run.debug()
    st.transition(VERIFICATION, run.cfg.clock)
    return st
