import json
import subprocess
import sys

import pytest

from conftest import FIXTURES, INVENTORY, SCENARIOS
from hsrefactor.cli import main
from hsrefactor.pipeline import tree_digest


def _refactor(out, scenario="happy", *extra):
    return main([
        "refactor", str(INVENTORY),
        "--out", str(out),
        "--backend", "mock",
        "--script", str(SCENARIOS / scenario / "script.yaml"),
        "--toolchain-fixtures", str(SCENARIOS / scenario / "toolchain"),
        "--name", "inventory",
        *extra,
    ])


def test_analyze_writes_metrics(tmp_path, capsys):
    assert main(["analyze", str(INVENTORY), "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    smells = json.loads((tmp_path / "smells.json").read_text())
    assert metrics["loc"] > 0 and metrics["gaps"] == []
    assert metrics["lint"] is None
    assert {f["item_id"] for f in smells["findings"]} >= {1, 9, 24}
    assert "findings" in capsys.readouterr().out


def test_analyze_with_recorded_tools(tmp_path):
    tools = SCENARIOS / "happy" / "toolchain"
    assert main(["analyze", str(INVENTORY), "--out", str(tmp_path), "--toolchain-fixtures", str(tools)]) == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["lint"] == {"suggestions": 3, "warnings": 2, "errors": 1}


def test_analyze_reports_gaps(tmp_path):
    (tmp_path / "src").mkdir()
    (tmp_path / "src" / "B.hs").write_text("ok = 1\n\nbroken = (1 +\n")
    assert main(["analyze", str(tmp_path / "src"), "--out", str(tmp_path / "o")]) == 2


def test_analyze_missing_path(tmp_path):
    assert main(["analyze", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 1


def test_refactor_exit_codes(tmp_path, capsys):
    before = tree_digest(INVENTORY)
    assert _refactor(tmp_path / "a") == 0
    assert "Finalized" in capsys.readouterr().out
    assert _refactor(tmp_path / "b", "always_fail") == 1
    assert tree_digest(INVENTORY) == before


def test_refactor_report_identical_across_runs(tmp_path):
    assert _refactor(tmp_path / "a") == 0
    assert _refactor(tmp_path / "b") == 0
    a = (tmp_path / "a" / "inventory" / "report.json").read_bytes()
    b = (tmp_path / "b" / "inventory" / "report.json").read_bytes()
    assert a == b


def test_refactor_remote_without_credential(tmp_path, monkeypatch):
    monkeypatch.delenv("HSREFACTOR_API_KEY", raising=False)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("backend: remote\nremote:\n  endpoint: https://llm.invalid/v1\n  model: m\n")
    code = main([
        "refactor", str(INVENTORY), "--config", str(cfg), "--out", str(tmp_path / "o"),
        "--toolchain-fixtures", str(SCENARIOS / "happy" / "toolchain"),
    ])
    assert code == 1
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("bogus: 1\n")
    assert main(["analyze", str(INVENTORY), "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_verify_command(tmp_path):
    tools = FIXTURES / "toolchain"
    ws = tmp_path / "ws"
    ws.mkdir()
    fx = tmp_path / "fx"
    fx.mkdir()
    (fx / "compile.log").write_bytes((tools / "ghc_clean" / "compile.log").read_bytes())
    (fx / "lint.json").write_bytes((tools / "hlint_empty" / "lint.json").read_bytes())
    code = main([
        "verify", str(ws), "--out", str(tmp_path / "o"),
        "--toolchain-fixtures", str(fx),
        "--baseline-lint", str(tools / "hlint_mixed" / "lint.json"),
    ])
    assert code == 0
    report = json.loads((tmp_path / "o" / "verification.json").read_text())
    assert report["lint_delta"] == [[3, 2, 1], [0, 0, 0]]


def test_evaluate_rows_and_report(tmp_path, capsys):
    rows = FIXTURES / "evaluation" / "improvement_rows.csv"
    assert main(["evaluate", "--rows", str(rows), "--out", str(tmp_path), "--csv"]) == 0
    assert (tmp_path / "report.csv").exists()
    md = (tmp_path / "report.md").read_text()
    assert "Total Average | 8.90 |" in md
    capsys.readouterr()
    assert main(["report", str(tmp_path / "report.json"), "--format", "markdown"]) == 0
    assert capsys.readouterr().out == md


def test_evaluate_identical_snapshots(tmp_path):
    assert main(["analyze", str(INVENTORY), "--out", str(tmp_path)]) == 0
    m = str(tmp_path / "metrics.json")
    assert main(["evaluate", "--pre", m, "--post", m, "--out", str(tmp_path / "e")]) == 0
    md = (tmp_path / "e" / "report.md").read_text()
    assert "| Small | project | 0.00 | 0.00 |" in md


def test_evaluate_corrupted_snapshot(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"loc": ')
    assert main(["evaluate", "--pre", str(bad), "--post", str(bad), "--out", str(tmp_path)]) == 1


def test_select_repos_byte_identical(tmp_path):
    args = ["select-repos", "--repo-fixtures", str(FIXTURES / "repos" / "funnel"), "--reference-date", "2025-06-30"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "funnel.json").read_bytes()
    assert a == (tmp_path / "b" / "funnel.json").read_bytes()
    assert json.loads(a)["per_step_counts"][0] == ["step1_search", 213]


def test_report_on_failed_run(tmp_path):
    assert _refactor(tmp_path, "always_fail") == 1
    assert main(["report", str(tmp_path / "inventory" / "report.json")]) == 1


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hsrefactor.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("analyze", "refactor", "verify", "evaluate", "select-repos", "report"):
        assert cmd in proc.stdout


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
