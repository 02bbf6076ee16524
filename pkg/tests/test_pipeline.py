import json
from pathlib import Path

import pytest

from conftest import FIXTURES, INVENTORY, run_scenario
from hsrefactor import agents
from hsrefactor import pipeline as pl
from hsrefactor.errors import (
    HsRefactorError,
    MalformedPayload,
    NoSourcesFound,
    PathEscape,
    WorkspaceNotWritable,
)
from hsrefactor import toolchain as tc
from hsrefactor.toolchain import CompileResult, Diagnostic, FixtureToolchain, LintCounts

SCEN = FIXTURES / "scenarios"


def _edges(history):
    phases = [t.phase for t in history]
    return list(zip(phases, phases[1:]))


def test_happy_path_finalizes(tmp_path):
    st, run_dir = run_scenario("happy", tmp_path)
    assert st.phase == pl.FINALIZED and st.debug_iteration == 0
    assert [t.phase for t in st.history] == ["Analysis", "Refactoring", "Verification", "Finalized"]
    report = json.loads((run_dir / "report.json").read_text())
    assert report["meta"]["status"] == "Finalized"
    assert report["rows"][0]["per_metric"]["runtime"] == pytest.approx(20.0)
    assert (run_dir / "finalization.md").exists()
    assert len((run_dir / "audit.ndjson").read_text().splitlines()) == report["meta"]["audit_entries"]


def test_report_is_byte_identical_across_runs(tmp_path):
    _, a = run_scenario("happy", tmp_path / "a")
    _, b = run_scenario("happy", tmp_path / "b")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "audit.ndjson").read_bytes() == (b / "audit.ndjson").read_bytes()


def test_always_fail_terminates(tmp_path):
    st, run_dir = run_scenario("always_fail", tmp_path)
    assert st.phase == pl.FAILED and st.debug_iteration == 3
    assert len(st.history) - 1 == 2 * 3 + 4
    assert not (run_dir / "finalization.md").exists()
    assert json.loads((run_dir / "report.json").read_text())["aggregate"] is None


@pytest.mark.parametrize("limit", [1, 2, 5])
def test_debug_limit_is_respected(tmp_path, limit):
    st, _ = run_scenario("always_fail", tmp_path, max_debug_iterations=limit)
    assert st.phase == pl.FAILED and st.debug_iteration == limit
    assert len(st.history) - 1 == 2 * limit + 4


def test_fix_once(tmp_path):
    st, _ = run_scenario("fix_once", tmp_path)
    assert st.phase == pl.FINALIZED and st.debug_iteration == 1


@pytest.mark.parametrize("scenario", ["happy", "always_fail", "fix_once"])
def test_history_follows_allowed_edges(tmp_path, scenario):
    st, _ = run_scenario(scenario, tmp_path)
    for edge in _edges(st.history):
        assert edge in pl.ALLOWED_TRANSITIONS
    times = [t.at for t in st.history]
    assert times == sorted(set(times))


@pytest.mark.parametrize("scenario", ["happy", "always_fail", "fix_once"])
def test_original_tree_untouched(tmp_path, scenario):
    before = pl.tree_digest(INVENTORY)
    st, _ = run_scenario(scenario, tmp_path)
    assert pl.tree_digest(INVENTORY) == before
    assert st.project != INVENTORY


def test_illegal_transition_rejected():
    st = pl.PipelineState(pl.ANALYSIS, Path("."), 3)
    with pytest.raises(HsRefactorError):
        st.transition(pl.FINALIZED, lambda: 1.0)


def test_backend_outage_fails_run(tmp_path):
    ws = pl.prepare_workspace(INVENTORY, tmp_path, "inv")
    backend = agents.mock_backend({("ContextStructure", "*"): {"error": "unavailable"}})
    cfg = pl.PipelineConfig(FixtureToolchain(SCEN / "happy" / "toolchain"))
    st = pl.run_pipeline(ws, backend, cfg)
    assert st.phase == pl.FAILED and "BackendUnavailable" in st.failure


def test_no_sources(tmp_path):
    (tmp_path / "proj").mkdir()
    (tmp_path / "proj" / "README").write_text("nothing\n")
    ws = pl.prepare_workspace(tmp_path / "proj", tmp_path / "out")
    cfg = pl.PipelineConfig(FixtureToolchain(SCEN / "happy" / "toolchain"))
    with pytest.raises(NoSourcesFound):
        pl.run_pipeline(ws, agents.mock_backend({}), cfg)


def test_output_inside_project_rejected(tmp_path):
    proj = tmp_path / "proj"
    proj.mkdir()
    with pytest.raises(WorkspaceNotWritable):
        pl.prepare_workspace(proj, proj / "out")


def _edit(payload, kind=agents.LEAD_OUT):
    return agents.AgentMessage.make("RefactorLead", kind, payload)


@pytest.mark.parametrize("target", ["../evil.hs", "/etc/passwd", "C:/x.hs", "src/../../x.hs"])
def test_path_escape_changes_nothing(tmp_path, target):
    ws = pl.prepare_workspace(INVENTORY, tmp_path, "inv")
    before = pl.tree_digest(ws)
    payload = f"=== FILE: src/Ok.hs ===\nx = 1\n=== FILE: {target} ===\ny = 2\n"
    with pytest.raises(PathEscape):
        pl.apply_refactoring(ws, _edit(payload))
    assert pl.tree_digest(ws) == before


def test_invalid_block_rejected_valid_block_applied(tmp_path):
    ws = pl.prepare_workspace(INVENTORY, tmp_path, "inv")
    payload = "=== FILE: src/Good.hs ===\nmodule Good where\n\ng = 1\n=== FILE: src/Bad.hs ===\nmodule Bad where\n\nb = (1 +\n"
    rejected = []
    changes = pl.apply_refactoring(ws, _edit(payload), rejected)
    assert [c.path for c in changes] == ["src/Good.hs"]
    assert [r[0] for r in rejected] == ["src/Bad.hs"]
    assert not (ws / "src" / "Bad.hs").exists()


def test_unchanged_content_is_not_a_change(tmp_path):
    ws = pl.prepare_workspace(INVENTORY, tmp_path, "inv")
    same = (ws / "app" / "Main.hs").read_text()
    assert pl.apply_refactoring(ws, _edit(f"=== FILE: app/Main.hs ===\n{same}")) == []


def test_payload_without_blocks():
    with pytest.raises(MalformedPayload):
        pl.parse_file_blocks("no edits here")
    with pytest.raises(MalformedPayload):
        pl.apply_refactoring(".", _edit("x", kind=agents.STRATEGY))


def test_parse_file_blocks_ignores_preamble():
    blocks = pl.parse_file_blocks("notes\n=== FILE: a.hs ===\na = 1\n\n=== FILE: b.hs ===\nb = 2")
    assert blocks == [("a.hs", "a = 1\n"), ("b.hs", "b = 2\n")]


class _Tools:
    def __init__(self, compile_ok=True, tests_ok=True, lint=(7, 3, 2)):
        self.compile_ok, self.tests_ok, self.lint = compile_ok, tests_ok, lint

    def run_compile_check(self, ws):
        return CompileResult(self.compile_ok, () if self.compile_ok else (Diagnostic("error", "A.hs", 1, "boom"),))

    def run_tests(self, ws):
        return tc.TestResult(self.tests_ok, True, () if self.tests_ok else ("spec",))

    def run_lint(self, ws):
        return LintCounts(*self.lint)


def test_verify_lint_delta():
    rep = pl.verify(".", _Tools(lint=(7, 3, 2)), LintCounts(10, 5, 2))
    assert rep.passed and rep.lint_delta == ((10, 5, 2), (7, 3, 2))


def test_verify_fails_fast_on_compile():
    rep = pl.verify(".", _Tools(compile_ok=False), LintCounts(1, 1, 1))
    assert not rep.passed and not rep.tests_ok and rep.lint_delta is None
    assert rep.failures == ["A.hs:1: error: boom"]


def test_verify_test_failure():
    rep = pl.verify(".", _Tools(tests_ok=False), None)
    assert rep.compile_ok and not rep.tests_ok and not rep.passed


def test_verify_lint_and_style_regressions():
    assert not pl.verify(".", _Tools(lint=(1, 6, 0)), LintCounts(5, 5, 0)).lint_ok
    rep = pl.verify(".", _Tools(lint=(6, 1, 0)), LintCounts(5, 5, 0))
    assert rep.lint_ok and not rep.style_ok


def test_config_rejects_zero_iterations():
    with pytest.raises(ValueError):
        pl.PipelineConfig(None, max_debug_iterations=0)
