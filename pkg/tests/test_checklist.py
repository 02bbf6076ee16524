import json
from collections import Counter

import pytest

from conftest import FIXTURES
from hsrefactor import checklist
from hsrefactor.source import parse_path, parse_source


def test_checklist_has_42_items_in_order():
    items = checklist.load_checklist()
    assert [i.id for i in items] == list(range(1, 43))
    sizes = Counter(i.category for i in items)
    assert [sizes[c] for c in sorted(sizes)] == [7, 7, 5, 2, 5, 5, 6, 5]


def test_every_item_has_a_known_mode():
    for it in checklist.load_checklist():
        assert it.detection_mode in checklist.DETECTION_MODES
        assert it.description
        assert it.category_name == checklist.CATEGORIES[it.category]


def test_statically_checked_items():
    modes = {i.id: i.detection_mode for i in checklist.load_checklist()}
    for item_id in (1, 2, 9, 11, 24, 37):
        assert modes[item_id] == checklist.STATIC


def test_unknown_item_rejected():
    with pytest.raises(KeyError):
        checklist.item(43)


def _seeded():
    f = parse_path(FIXTURES / "smells" / "Seeded.hs")
    return checklist.run_static_checks([f])


def test_seeded_file_yields_exactly_expected_findings():
    expected = json.loads((FIXTURES / "smells" / "expected.json").read_text())["findings"]
    report = _seeded()
    got = [(f.item_id, f.span[0]) for f in report.findings]
    assert got == [(e["item_id"], e["line"]) for e in expected]
    for f, e in zip(report.findings, expected):
        if "evidence_prefix" in e:
            assert f.evidence.startswith(e["evidence_prefix"])


def test_findings_are_sorted_and_counts_consistent():
    report = _seeded()
    assert report.findings == sorted(report.findings, key=checklist.SmellFinding.sort_key)
    assert sum(report.per_category_counts.values()) == len(report.findings)
    for cat, n in checklist.counts_by_category(report.findings).items():
        assert report.per_category_counts[cat] == n


def test_clean_file_has_no_findings():
    src = "module Clean (double) where\n\ndouble :: Int -> Int\ndouble x = x * 2\n"
    assert checklist.run_static_checks([parse_source(src, "Clean.hs")]).findings == []


def test_partial_function_in_comment_or_string_ignored():
    src = 'module P (f) where\n\nf :: Int -> Int\nf x = x -- head\n\ng :: Int\ng = length "fromJust"\n'
    report = checklist.run_static_checks([parse_source(src, "P.hs")])
    assert all(f.item_id != 24 for f in report.findings)


def test_thresholds_are_configurable():
    body = "\n".join(f"  , {i}" for i in range(5))
    src = f"module L (xs) where\n\nxs :: [Int]\nxs =\n  [ 0\n{body}\n  ]\n"
    f = parse_source(src, "L.hs")
    assert not [x for x in checklist.run_static_checks([f]).findings if x.item_id == 11]
    tight = checklist.run_static_checks([f], long_function_threshold=3)
    assert [x.item_id for x in tight.findings] == [11]
    assert tight.thresholds["long_function"] == 3


def test_report_renders_and_serializes():
    report = _seeded()
    text = report.render()
    assert text.count("\n") == len(report.findings) - 1
    d = report.to_dict()
    assert json.loads(json.dumps(d)) == d
    assert set(d["per_category_counts"]) == {str(c) for c in checklist.CATEGORIES}


def test_pattern_catalog_renders_before_and_after():
    text = checklist.render_catalog()
    for p in checklist.pattern_catalog():
        assert p.before in text and p.after in text
