import json

import pytest
from hypothesis import given, settings

from conftest import FIXTURES, construct_trees
from hsrefactor import metrics
from hsrefactor.errors import MalformedGraph
from hsrefactor.source import model as m
from hsrefactor.source import parse_path, parse_source


def unit(src: str, name: str | None = None):
    f = parse_source(src, "T.hs")
    assert not f.gaps, f.gaps
    return f.declarations[0] if name is None else next(d for d in f.declarations if d.name == name)


def test_straight_line_cfg():
    cfg = metrics.build_cfg(m.body())
    assert (len(cfg.nodes), len(cfg.edges)) == (2, 1)
    assert metrics.cyclomatic_complexity(cfg) == 1


def test_single_if_cfg():
    cfg = metrics.build_cfg(m.if_node(m.body(), m.body(), m.body()))
    assert (len(cfg.nodes), len(cfg.edges)) == (4, 4)
    assert metrics.cyclomatic_complexity(cfg) == 2


def test_formula_on_explicit_graph():
    nodes = frozenset(range(7))
    edges = frozenset({(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 6), (5, 6), (1, 6)})
    assert metrics.cyclomatic_complexity(metrics.ControlFlowGraph(nodes, edges, 0, 6)) == 4


def test_dangling_edge_is_malformed():
    cfg = metrics.ControlFlowGraph(frozenset({0, 1}), frozenset({(0, 1), (1, 9)}), 0, 1)
    with pytest.raises(MalformedGraph):
        metrics.cyclomatic_complexity(cfg)


def test_components_counted():
    assert metrics.weakly_connected_components(range(4), [(0, 1), (2, 3)]) == 2


@pytest.mark.parametrize(
    "src, expected",
    [
        ("f x = x\n", 1),
        ("f x = if x then 1 else 2\n", 2),
        ("f x = case x of\n  1 -> a\n  2 -> b\n  _ -> c\n", 3),
        ("f x\n  | x > 0 = 1\n  | otherwise = 0\n", 2),
        ("f x\n  | x > 0 = 1\n  | x < 0 = 2\n", 3),
        ("f 0 = 1\nf n = n\n", 2),
        ("f a b = a && b || a\n", 3),
        ("f xs = [x | x <- xs, x > 0]\n", 2),
    ],
)
def test_parsed_cc(src, expected):
    u = unit(src)
    assert metrics.function_complexity(u) == expected
    assert metrics.decision_count_cc(u) == expected


@settings(max_examples=250, deadline=None)
@given(construct_trees(depth=5))
def test_cfg_formula_matches_decision_count(tree):
    assert metrics.cyclomatic_complexity(metrics.build_cfg(tree)) == metrics.decision_count_cc(tree)


@settings(max_examples=150, deadline=None)
@given(construct_trees(depth=5))
def test_wrapping_in_if_adds_one_level(tree):
    wrapped = m.if_node(m.body(), tree, m.body())
    assert metrics.branching_depth(wrapped) == metrics.branching_depth(tree) + 1


@settings(max_examples=100, deadline=None)
@given(construct_trees(depth=5))
def test_cc_monotone_under_added_branch(tree):
    wrapped = m.body(tree, m.if_node(m.body(), m.body(), m.body()))
    assert metrics.decision_count_cc(wrapped) == metrics.decision_count_cc(tree) + 1


def test_straight_line_depth_zero():
    assert metrics.branching_depth(unit("f x = g (h x)\n")) == 0


def test_nested_depth():
    src = "f x = if a then (case x of\n  1 -> if b then 1 else 2\n  _ -> 3) else 0\n"
    assert metrics.branching_depth(unit(src)) == 3


def test_corpus_golden_complexity_and_features():
    golden = json.loads((FIXTURES / "corpus" / "golden.json").read_text())
    for name, exp in golden.items():
        f = parse_path(FIXTURES / "corpus" / name)
        got = {d.name: metrics.function_complexity(d) for d in f.declarations}
        assert got == exp["cc"], name
        for fn, depth in exp.get("depth", {}).items():
            assert metrics.branching_depth(next(d for d in f.declarations if d.name == fn)) == depth
        fc = metrics.feature_count(f)
        assert fc.total == exp["features"], (name, fc.per_feature)
        for kind, n in exp.get("per_feature", {}).items():
            assert fc.per_feature[kind] == n, (name, kind)


def test_project_totals_are_sums():
    files = [parse_path(p) for p in sorted((FIXTURES / "corpus").glob("*.hs"))]
    res = metrics.project_complexity(files)
    assert res.total == sum(metrics.file_complexity(f).total for f in files)
    total = metrics.project_feature_count(files)
    assert total.total == sum(metrics.feature_count(f).total for f in files)
    assert set(total.per_feature) == set(metrics.FEATURE_KINDS)


def test_feature_count_addition():
    a = metrics.FeatureCount({"lambda": 1})
    b = metrics.FeatureCount({"lambda": 2, "do_block": 1})
    assert (a + b).per_feature["lambda"] == 3
    assert (a + b).total == 4
