import itertools
from pathlib import Path

import pytest
from hypothesis import strategies as st

from hsrefactor import agents, pipeline
from hsrefactor.source import model as m
from hsrefactor.toolchain import FixtureToolchain

FIXTURES = Path(__file__).parent / "fixtures"
INVENTORY = FIXTURES / "projects" / "inventory"
SCENARIOS = FIXTURES / "scenarios"


def run_scenario(name: str, out_dir: Path, max_debug_iterations: int = 3):
    """Run the inventory project through a scripted scenario; returns (state, run_dir)."""
    ws = pipeline.prepare_workspace(INVENTORY, out_dir, "inventory")
    ticks = itertools.count(1)
    cfg = pipeline.PipelineConfig(
        toolchain=FixtureToolchain(SCENARIOS / name / "toolchain"),
        max_debug_iterations=max_debug_iterations,
        project_name="inventory",
        clock=lambda: float(next(ticks)),
    )
    backend = agents.load_script(SCENARIOS / name / "script.yaml")
    return pipeline.run_pipeline(ws, backend, cfg), ws.parent

_SEQ_KINDS = (m.LAMBDA, m.LET, m.WHERE, m.DO, m.AND, m.OR, m.LC_GUARD, m.APPLICATION)


@st.composite
def construct_trees(draw, depth: int = 5):
    """Structured construct trees with nesting depth at most ``depth``."""
    if depth <= 1:
        return m.body()
    kids = st.lists(construct_trees(depth - 1), min_size=0, max_size=2)
    choice = draw(st.sampled_from(("body", "if", "case", "guards", "seq")))
    sub = construct_trees(depth - 1)
    if choice == "if":
        return m.if_node(draw(sub), draw(sub), draw(sub))
    if choice == "case":
        return m.case_node(draw(sub), draw(st.lists(sub, min_size=1, max_size=4)))
    if choice == "guards":
        return m.guard_node(draw(st.lists(sub, min_size=1, max_size=4)), draw(st.booleans()))
    if choice == "seq":
        return m.leaf(draw(st.sampled_from(_SEQ_KINDS)), *draw(kids))
    return m.body(*draw(kids))


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES
