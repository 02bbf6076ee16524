"""Command-line entry point: ``hsrefactor <command> ...``.

Configuration comes from an optional YAML file (``--config``); command-line
flags override it. Credentials are only ever read from environment
variables named in the config.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import date
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__, agents, checklist, evaluation, metrics, pipeline, repo_select, toolchain
from .errors import (
    AuthFailure,
    HsRefactorError,
    NoExecutableTarget,
    NoSourcesFound,
    SchemaMismatch,
    ToolMissing,
    UnreadableInput,
)
from .source import discover_sources, parse_source

log = logging.getLogger("hsrefactor")

DEFAULTS: dict[str, Any] = {
    "backend": "mock",
    "mock_script": None,
    "remote": {},
    "max_debug_iterations": 3,
    "thresholds": {"cc": checklist.CC_THRESHOLD, "depth": checklist.DEPTH_THRESHOLD, "long_function": checklist.LONG_FUNCTION_THRESHOLD},
    "toolchain": {"mode": "real", "fixture_dir": None, "timeout": toolchain.DEFAULT_TIMEOUT, "profile_command": None},
    "repos": {"mode": "live", "fixture_dir": None, "token_env": "GITHUB_TOKEN", "loc_file": None},
    "reference_date": None,
    "out": "hsrefactor-out",
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def load_config(path: str | None) -> dict:
    cfg = _merge(DEFAULTS, {})
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise SchemaMismatch(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise SchemaMismatch("config file must hold a mapping")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise SchemaMismatch(f"unknown config keys {sorted(unknown)}")
        cfg = _merge(cfg, data)
    return cfg


def _apply_flags(cfg: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "backend", None):
        cfg["backend"] = args.backend
    if getattr(args, "fixture_mode", False):
        cfg["toolchain"]["mode"] = "fixture"
        cfg["repos"]["mode"] = "fixture"
    for flag, section, key in (
        ("toolchain_fixtures", "toolchain", "fixture_dir"),
        ("repo_fixtures", "repos", "fixture_dir"),
        ("loc_file", "repos", "loc_file"),
    ):
        if getattr(args, flag, None):
            cfg[section][key] = getattr(args, flag)
            if key == "fixture_dir":
                cfg[section]["mode"] = "fixture"
    if getattr(args, "script", None):
        cfg["mock_script"] = args.script
    if getattr(args, "max_debug_iterations", None):
        cfg["max_debug_iterations"] = args.max_debug_iterations
    if getattr(args, "reference_date", None):
        cfg["reference_date"] = args.reference_date
    return cfg


def make_toolchain(cfg: dict):
    tc = cfg["toolchain"]
    if tc["mode"] == "fixture":
        return toolchain.make_toolchain("fixture", tc["fixture_dir"])
    cmd = tuple(tc["profile_command"]) if tc.get("profile_command") else None
    return toolchain.RealToolchain(timeout=float(tc["timeout"]), profile_cmd=cmd)


def make_backend(cfg: dict):
    if cfg["backend"] == "mock":
        if not cfg.get("mock_script"):
            raise HsRefactorError("mock backend needs a script (--script or mock_script in config)")
        return agents.load_script(cfg["mock_script"])
    if cfg["backend"] == "remote":
        backend = agents.remote_backend(cfg["remote"])
        if not os.environ.get(backend.api_key_env):
            raise AuthFailure(f"credential variable {backend.api_key_env} is not set")
        return backend
    raise HsRefactorError(f"unknown backend {cfg['backend']!r}")


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_analyze(args, cfg) -> int:
    root = Path(args.path)
    if not root.exists():
        raise NoSourcesFound(f"{root} does not exist")
    paths = [root] if root.is_file() else discover_sources(root)
    if not paths:
        raise NoSourcesFound(f"no .hs files under {root}")
    files, gaps = [], []
    for p in paths:
        rel = p.name if root.is_file() else p.relative_to(root).as_posix()
        try:
            f = parse_source(p.read_bytes(), rel)
        except (UnreadableInput, OSError) as exc:
            gaps.append({"file": rel, "span": None, "reason": str(exc)})
            continue
        files.append(f)
        gaps += [{"file": rel, "span": list(g.span), "reason": g.reason} for g in f.gaps]
    lint = profile = None
    if args.with_tools or (cfg["toolchain"]["mode"] == "fixture" and cfg["toolchain"]["fixture_dir"]):
        tc = make_toolchain(cfg)
        try:
            lint = tc.run_lint(root)
        except ToolMissing as exc:
            log.warning("lint skipped: %s", exc)
        try:
            profile = tc.run_profile(root)
        except (ToolMissing, NoExecutableTarget) as exc:
            log.warning("profiling skipped: %s", exc)
    snap = evaluation.snapshot_from_sources(files, lint=lint, profile=profile, label="pre")
    th = cfg["thresholds"]
    smells = checklist.run_static_checks(
        files, snap, long_function_threshold=th["long_function"], cc_threshold=th["cc"], depth_threshold=th["depth"]
    )
    out = _out_dir(cfg)
    mdoc = snap.to_dict(with_timestamp=False)
    mdoc["features"] = dict(metrics.project_feature_count(files).per_feature)
    mdoc["gaps"] = gaps
    _write_json(out / "metrics.json", mdoc)
    _write_json(out / "smells.json", smells.to_dict())
    print(f"{len(files)} files, LOC {snap.loc}, total CC {snap.total_cc}, max depth {snap.max_branching_depth}, {len(smells.findings)} findings")
    if gaps:
        print(f"{len(gaps)} parse gaps; see metrics.json", file=sys.stderr)
        return 2
    return 0


def cmd_refactor(args, cfg) -> int:
    backend = make_backend(cfg)  # fails before anything is copied
    tc = make_toolchain(cfg)
    workspace = pipeline.prepare_workspace(args.path, _out_dir(cfg), args.name)
    conf = pipeline.PipelineConfig(toolchain=tc, max_debug_iterations=int(cfg["max_debug_iterations"]), project_name=args.name)
    state = pipeline.run_pipeline(workspace, backend, conf)
    print(" -> ".join(t.phase for t in state.history))
    report = workspace.parent / "report.json"
    if state.phase == pipeline.FINALIZED:
        print(f"finalized; see {workspace.parent / 'finalization.md'}")
        return 0
    print(f"failed: {state.failure}; report at {report}", file=sys.stderr)
    return 1


def cmd_verify(args, cfg) -> int:
    tc = make_toolchain(cfg)
    baseline = toolchain.parse_lint_json(Path(args.baseline_lint).read_bytes()) if args.baseline_lint else None
    report = pipeline.verify(Path(args.path), tc, baseline)
    _write_json(_out_dir(cfg) / "verification.json", report.to_dict())
    print(report.render())
    return 0 if report.passed else 1


def _read_snapshot(path: str) -> evaluation.MetricsSnapshot:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read snapshot {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaMismatch(f"snapshot {path} is not an object")
    return evaluation.MetricsSnapshot.from_dict(data)


def cmd_evaluate(args, cfg) -> int:
    if args.rows:
        rows = evaluation.load_rows_csv(Path(args.rows).read_text(encoding="utf-8"))
    elif args.pre and args.post:
        pre, post = _read_snapshot(args.pre), _read_snapshot(args.post)
        rows = [evaluation.ImprovementReport.from_snapshots(args.project or "project", pre, post)]
    else:
        raise SchemaMismatch("evaluate needs --rows or both --pre and --post")
    agg = evaluation.aggregate(rows)
    out = _out_dir(cfg)
    (out / "report.json").write_text(evaluation.emit_report(agg, rows, "json"), encoding="utf-8")
    (out / "report.md").write_text(evaluation.emit_report(agg, rows, "markdown"), encoding="utf-8")
    if args.csv:
        (out / "report.csv").write_text(evaluation.emit_report(agg, rows, "csv"), encoding="utf-8")
    print(f"wrote {out / 'report.json'} and {out / 'report.md'}")
    return 0


def cmd_select_repos(args, cfg) -> int:
    rc = cfg["repos"]
    loc_map = repo_select.load_loc_map(rc["loc_file"]) if rc.get("loc_file") else None
    if rc["mode"] == "fixture":
        if not rc.get("fixture_dir"):
            raise HsRefactorError("fixture mode needs --repo-fixtures or repos.fixture_dir")
        source = repo_select.FixtureSource(rc["fixture_dir"])
    else:
        source = repo_select.GitHubSource(token_env=rc["token_env"], loc_map=loc_map)
    ref = cfg.get("reference_date")
    ref_date = date.fromisoformat(str(ref)) if ref else date.today()
    report = repo_select.run_funnel(source, repo_select.FunnelConfig(reference_date=ref_date))
    out = _out_dir(cfg) / "funnel.json"
    out.write_text(report.to_json(), encoding="utf-8")
    for name, n in report.per_step_counts:
        print(f"{name}: {n}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_report(args, cfg) -> int:
    agg, rows = evaluation.parse_report(Path(args.report).read_text(encoding="utf-8"))
    if agg is None:
        raise SchemaMismatch("report has no aggregate section (did the run fail?)")
    text = evaluation.emit_report(agg, rows, args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML configuration file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--backend", choices=("mock", "remote"), default=argparse.SUPPRESS)
    common.add_argument(
        "--fixture-mode", action="store_true", default=argparse.SUPPRESS, help="replay recorded tool and API outputs"
    )
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="hsrefactor", description="Analyze, refactor and evaluate Haskell codebases.", parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="metrics and static smells for a project")
    p.add_argument("path")
    p.add_argument("--toolchain-fixtures", help="recorded tool outputs")
    p.add_argument("--with-tools", action="store_true", help="also run lint and profiler")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("refactor", parents=[common], help="run the multi-agent refactoring pipeline")
    p.add_argument("path")
    p.add_argument("--name", help="project name (default: directory name)")
    p.add_argument("--script", help="mock backend script (YAML)")
    p.add_argument("--toolchain-fixtures", help="recorded tool outputs")
    p.add_argument("--max-debug-iterations", type=int)
    p.set_defaults(func=cmd_refactor)

    p = sub.add_parser("verify", parents=[common], help="run the verification gates on a workspace")
    p.add_argument("path")
    p.add_argument("--baseline-lint", help="lint JSON of the pre-refactor state")
    p.add_argument("--toolchain-fixtures", help="recorded tool outputs")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", parents=[common], help="improvement report from snapshots or rows")
    p.add_argument("--pre", help="pre-refactor metrics.json")
    p.add_argument("--post", help="post-refactor metrics.json")
    p.add_argument("--project", help="project name for a snapshot pair")
    p.add_argument("--rows", help="CSV of per-project improvement rows")
    p.add_argument("--csv", action="store_true", help="also write report.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("select-repos", parents=[common], help="repository selection funnel")
    p.add_argument("--repo-fixtures", help="directory of repository metadata documents")
    p.add_argument("--loc-file", help="JSON map of repository name to LOC")
    p.add_argument("--reference-date", help="YYYY-MM-DD anchor for the activity window")
    p.set_defaults(func=cmd_select_repos)

    p = sub.add_parser("report", parents=[common], help="re-render a report.json")
    p.add_argument("report")
    p.add_argument("--format", choices=("markdown", "json", "csv"), default="markdown")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _apply_flags(load_config(getattr(args, "config", None)), args)
        return args.func(args, cfg)
    except HsRefactorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
