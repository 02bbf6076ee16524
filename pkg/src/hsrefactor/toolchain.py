"""Adapters for lint, compiler, test-suite and profiler runs.

Each adapter has a real mode (subprocess on the project's own toolchain)
and a fixture mode that replays recorded outputs from a directory. Both
modes feed the same parsers, so a recording parses exactly like the live
output it was captured from.

Fixture directory layout: ``lint.json``, ``compile.log``, ``tests.log``
and ``profile.prof``. A numbered series (``compile.1.log``,
``compile.2.log``, ...) is replayed one file per call, the last one
repeating.
"""

from __future__ import annotations

import json
import logging
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedToolOutput, NoExecutableTarget, ToolMissing

log = logging.getLogger(__name__)

SEVERITIES = ("Suggestion", "Warning", "Error")
DEFAULT_TIMEOUT = 300.0


@dataclass(frozen=True)
class LintFinding:
    severity: str
    hint: str
    file: str
    line: int


@dataclass(frozen=True)
class LintCounts:
    suggestions: int = 0
    warnings: int = 0
    errors: int = 0
    findings: tuple[LintFinding, ...] = ()

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.suggestions, self.warnings, self.errors)

    def to_dict(self) -> dict:
        return {"suggestions": self.suggestions, "warnings": self.warnings, "errors": self.errors}


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    file: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}: {self.severity}: {self.message}"


@dataclass(frozen=True)
class CompileResult:
    ok: bool
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


@dataclass(frozen=True)
class TestResult:
    ok: bool
    ran: bool
    failures: tuple[str, ...] = ()


@dataclass(frozen=True)
class CostCentre:
    name: str
    module: str
    time_share: float
    alloc_share: float


@dataclass(frozen=True)
class ProfileStats:
    total_ticks: int
    total_alloc_bytes: int
    per_cost_centre: tuple[CostCentre, ...] = ()
    total_seconds: float | None = None

    def to_dict(self) -> dict:
        return {"total_ticks": self.total_ticks, "total_alloc_bytes": self.total_alloc_bytes}


# ---------------------------------------------------------------- parsers


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    return data.decode("utf-8", errors="replace")


def parse_lint_json(data: bytes | str) -> LintCounts:
    """Parse HLint ``--json`` output into severity counts."""
    text = _decode(data).strip()
    if not text:
        raise MalformedToolOutput("empty lint output")
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedToolOutput(f"lint output is not JSON: {exc}") from exc
    if not isinstance(records, list):
        raise MalformedToolOutput("lint output must be a JSON array")
    findings = []
    for rec in records:
        if not isinstance(rec, dict) or "severity" not in rec:
            raise MalformedToolOutput(f"lint record without severity: {rec!r}")
        sev = rec["severity"]
        if sev == "Ignore":
            continue
        if sev not in SEVERITIES:
            raise MalformedToolOutput(f"unknown lint severity {sev!r}")
        try:
            line = int(rec.get("startLine", 0))
        except (TypeError, ValueError) as exc:
            raise MalformedToolOutput(f"bad line number in {rec!r}") from exc
        findings.append(LintFinding(sev, str(rec.get("hint", "")), str(rec.get("file", "")), line))
    return LintCounts(
        suggestions=sum(f.severity == "Suggestion" for f in findings),
        warnings=sum(f.severity == "Warning" for f in findings),
        errors=sum(f.severity == "Error" for f in findings),
        findings=tuple(findings),
    )


_GHC_DIAG = re.compile(
    r"^(?P<file>[^\s:][^:\n]*?):"
    r"(?:(?P<line>\d+):(?P<col>\d+)(?:-\d+)?|\((?P<line2>\d+),\d+\)-\(\d+,\d+\)):"
    r"\s*(?P<sev>error|warning)\b:?(?P<rest>.*)$"
)
# source excerpt lines GHC prints under a diagnostic
_GUTTER = re.compile(r"^\s*\d*\s*\|")
_NO_LOC = re.compile(r"^<no location info>:\s*(?P<sev>error|warning)\b:?(?P<rest>.*)$")


def parse_compile_log(data: bytes | str) -> CompileResult:
    """Parse GHC/cabal build output. ok is true iff there are no errors."""
    lines = _decode(data).splitlines()
    diags: list[Diagnostic] = []
    idx = 0
    while idx < len(lines):
        line = lines[idx]
        mt = _GHC_DIAG.match(line)
        nl = _NO_LOC.match(line) if mt is None else None
        if mt is None and nl is None:
            idx += 1
            continue
        rest = (mt or nl).group("rest").strip()
        body = [rest] if rest else []
        idx += 1
        while idx < len(lines) and lines[idx].startswith((" ", "\t")) and lines[idx].strip():
            if not _GUTTER.match(lines[idx]):
                body.append(lines[idx].strip())
            idx += 1
        if mt is not None:
            ln = int(mt.group("line") or mt.group("line2"))
            diags.append(Diagnostic(mt.group("sev"), mt.group("file"), ln, " ".join(body)))
        else:
            diags.append(Diagnostic(nl.group("sev"), "<no location info>", 0, " ".join(body)))
    ok = not any(d.severity == "error" for d in diags)
    return CompileResult(ok, tuple(diags))


_TEST_SUITE = re.compile(r"^Test suite (?P<name>\S+): (?P<status>PASS|FAIL)\b", re.M)
_HSPEC = re.compile(r"^(?P<n>\d+) examples?, (?P<f>\d+) failures?", re.M)


def parse_test_log(data: bytes | str) -> TestResult:
    text = _decode(data)
    failures = [f"test suite {m.group('name')} failed" for m in _TEST_SUITE.finditer(text) if m.group("status") == "FAIL"]
    suites = list(_TEST_SUITE.finditer(text))
    for m in _HSPEC.finditer(text):
        if int(m.group("f")):
            failures.append(f"{m.group('f')} of {m.group('n')} examples failed")
    if not suites and not list(_HSPEC.finditer(text)):
        raise MalformedToolOutput("test log has no suite summary")
    return TestResult(ok=not failures, ran=True, failures=tuple(failures))


_TOTAL_TIME = re.compile(r"total time\s*=\s*(?P<secs>[\d.]+)\s*secs\s*\(\s*(?P<ticks>[\d,]+)\s*ticks")
_TOTAL_ALLOC = re.compile(r"total alloc\s*=\s*(?P<bytes>[\d,]+)\s*bytes")
_FLOAT = re.compile(r"^\d+(?:\.\d+)?$")


def _int(s: str) -> int:
    # profiles print thousands separators: 1,234,567
    return int(s.replace(",", ""))


def parse_prof(data: bytes | str) -> ProfileStats:
    """Parse a GHC ``.prof`` time/allocation report."""
    text = _decode(data)
    mt = _TOTAL_TIME.search(text)
    ma = _TOTAL_ALLOC.search(text)
    if mt is None or ma is None:
        raise MalformedToolOutput("profile is missing the total time/alloc header")
    centres: list[CostCentre] = []
    lines = text.splitlines()
    header = next((i for i, ln in enumerate(lines) if re.match(r"^\s*COST CENTRE\s+MODULE", ln)), None)
    if header is not None:
        idx = header + 1
        while idx < len(lines) and not lines[idx].strip():
            idx += 1
        while idx < len(lines) and lines[idx].strip():
            parts = lines[idx].split()
            if len(parts) < 4 or not (_FLOAT.match(parts[-1]) and _FLOAT.match(parts[-2])):
                raise MalformedToolOutput(f"bad cost-centre row: {lines[idx]!r}")
            centres.append(CostCentre(parts[0], parts[1], float(parts[-2]), float(parts[-1])))
            idx += 1
        if not centres:
            raise MalformedToolOutput("cost-centre table has no rows")
    return ProfileStats(
        total_ticks=_int(mt.group("ticks")),
        total_alloc_bytes=_int(ma.group("bytes")),
        per_cost_centre=tuple(centres),
        total_seconds=float(mt.group("secs")),
    )


# ---------------------------------------------------------------- adapters


PROFILE_PROTOCOL_DEFAULT = "project default executable, no arguments, +RTS -p -RTS"


@dataclass
class FixtureToolchain:
    """Replays recorded tool outputs from a directory."""

    fixture_dir: Path
    _calls: dict[str, int] = field(default_factory=dict, repr=False)
    mode: str = "fixture"
    profile_protocol: str = "recorded fixture"

    def __post_init__(self):
        self.fixture_dir = Path(self.fixture_dir)
        if not self.fixture_dir.is_dir():
            raise ToolMissing(f"fixture directory {self.fixture_dir} does not exist")

    def _recorded(self, stem: str, ext: str) -> Path | None:
        n = self._calls.get(stem, 0) + 1
        self._calls[stem] = n
        series = sorted(
            self.fixture_dir.glob(f"{stem}.*{ext}"),
            key=lambda p: int(p.name[len(stem) + 1:-len(ext)]) if p.name[len(stem) + 1:-len(ext)].isdigit() else 0,
        )
        series = [p for p in series if p.name[len(stem) + 1:-len(ext)].isdigit()]
        if series:
            return series[min(n, len(series)) - 1]
        single = self.fixture_dir / f"{stem}{ext}"
        return single if single.exists() else None

    def run_lint(self, workspace=None) -> LintCounts:
        path = self._recorded("lint", ".json")
        if path is None:
            raise ToolMissing(f"no recorded lint output in {self.fixture_dir}")
        return parse_lint_json(path.read_bytes())

    def run_compile_check(self, workspace=None) -> CompileResult:
        path = self._recorded("compile", ".log")
        if path is None:
            raise ToolMissing(f"no recorded compile log in {self.fixture_dir}")
        return parse_compile_log(path.read_bytes())

    def run_tests(self, workspace=None) -> TestResult:
        path = self._recorded("tests", ".log")
        if path is None:
            return TestResult(ok=True, ran=False)
        return parse_test_log(path.read_bytes())

    def run_profile(self, workspace=None, target: str | None = None) -> ProfileStats:
        path = self._recorded("profile", ".prof")
        if path is None:
            raise NoExecutableTarget("no recorded profile: library-only project")
        return parse_prof(path.read_bytes())


@dataclass
class RealToolchain:
    """Runs hlint, cabal/ghc and the profiled executable as subprocesses."""

    timeout: float = DEFAULT_TIMEOUT
    lint_cmd: tuple[str, ...] = ("hlint", ".", "--json")
    build_cmd: tuple[str, ...] = ("cabal", "build", "all", "--ghc-options=-Wall")
    test_cmd: tuple[str, ...] = ("cabal", "test", "all")
    profile_cmd: tuple[str, ...] | None = None
    mode: str = "real"

    @property
    def profile_protocol(self) -> str:
        return " ".join(self.profile_cmd) if self.profile_cmd else PROFILE_PROTOCOL_DEFAULT

    def _run(self, cmd, cwd) -> subprocess.CompletedProcess:
        if shutil.which(cmd[0]) is None:
            raise ToolMissing(f"{cmd[0]} not found on PATH")
        log.info("running %s in %s", " ".join(cmd), cwd)
        try:
            return subprocess.run(
                list(cmd), cwd=cwd, capture_output=True, timeout=self.timeout, check=False
            )
        except subprocess.TimeoutExpired as exc:
            raise MalformedToolOutput(f"{cmd[0]} timed out after {self.timeout}s") from exc

    def run_lint(self, workspace) -> LintCounts:
        proc = self._run(self.lint_cmd, workspace)
        return parse_lint_json(proc.stdout or b"[]")

    def run_compile_check(self, workspace) -> CompileResult:
        proc = self._run(self.build_cmd, workspace)
        result = parse_compile_log(proc.stdout + b"\n" + proc.stderr)
        if proc.returncode != 0 and result.ok:
            tail = _decode(proc.stderr).strip().splitlines()[-1:] or ["build failed"]
            diags = result.diagnostics + (Diagnostic("error", "<build>", 0, tail[0]),)
            return CompileResult(False, diags)
        return result

    def run_tests(self, workspace) -> TestResult:
        cabal_files = list(Path(workspace).glob("*.cabal"))
        if not any("test-suite" in p.read_text(errors="replace") for p in cabal_files):
            return TestResult(ok=True, ran=False)
        proc = self._run(self.test_cmd, workspace)
        try:
            result = parse_test_log(proc.stdout + b"\n" + proc.stderr)
        except MalformedToolOutput:
            result = TestResult(ok=proc.returncode == 0, ran=True, failures=() if proc.returncode == 0 else ("test run failed",))
        return result

    def _executable(self, workspace) -> str:
        for cabal in sorted(Path(workspace).glob("*.cabal")):
            m = re.search(r"^executable\s+(\S+)", cabal.read_text(errors="replace"), re.M)
            if m:
                return m.group(1)
        raise NoExecutableTarget("no executable stanza: library-only project")

    def run_profile(self, workspace, target: str | None = None) -> ProfileStats:
        exe = target or self._executable(workspace)
        cmd = self.profile_cmd or ("cabal", "run", exe, "--enable-profiling", "--", "+RTS", "-p", "-RTS")
        self._run(cmd, workspace)
        prof = Path(workspace) / f"{exe}.prof"
        if not prof.exists():
            raise MalformedToolOutput(f"profiled run produced no {prof.name}")
        return parse_prof(prof.read_bytes())


def make_toolchain(mode: str, fixture_dir: str | Path | None = None, **kwargs):
    if mode == "fixture":
        if fixture_dir is None:
            raise ToolMissing("fixture mode needs a fixture directory")
        return FixtureToolchain(Path(fixture_dir))
    if mode == "real":
        return RealToolchain(**kwargs)
    raise ValueError(f"unknown toolchain mode {mode!r}")
