import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from hsrefactor.errors import UnreadableInput
from hsrefactor.source import discover_sources, find_unused_imports, parse_path, parse_source
from hsrefactor.source import model as m
from hsrefactor.source.layout import resolve
from hsrefactor.source.lexer import scan

CORPUS = FIXTURES / "corpus"


def test_lexer_line_kinds():
    res = scan("-- c\n\nx = 1 {- b -}\n{- multi\n line -}\n")
    assert res.line_kinds == ["comment", "blank", "code", "comment", "comment"]


def test_lexer_operator_that_starts_with_dashes():
    toks = scan("x = a --> b\n").tokens
    assert [t.text for t in toks] == ["x", "=", "a", "-->", "b"]


def test_lexer_char_versus_prime():
    toks = scan("f' x = 'a'\n").tokens
    assert toks[0].text == "f'" and toks[-1].kind == "char"


def test_lexer_qualified_names():
    toks = scan("y = Map.lookup k Map.empty\n").tokens
    assert toks[2].text == "Map.lookup" and toks[2].base == "lookup"


def test_layout_inserts_virtual_braces():
    toks = resolve(scan("f = do\n  a\n  b\n").tokens)
    kinds = [t.kind for t in toks if t.kind in ("vopen", "vsemi", "vclose")]
    assert kinds == ["vopen", "vsemi", "vclose"]


def test_corpus_declaration_names():
    golden = json.loads((CORPUS / "golden.json").read_text())
    for name, exp in golden.items():
        f = parse_path(CORPUS / name)
        assert f.declaration_names == exp["decls"], name
        assert f.gaps == (), name


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.hs")), ids=lambda p: p.name)
def test_loc_decomposition(path):
    f = parse_path(path)
    assert f.code_line_count + f.comment_line_count + f.blank_line_count == f.raw_line_count


def test_comment_and_pragma_lines():
    f = parse_path(CORPUS / "c10_comments.hs")
    assert f.comment_line_count == 6
    # the INLINE pragma counts as code
    assert f.code_line_count == 6


def test_parse_is_deterministic():
    text = (CORPUS / "c20_types.hs").read_text()
    assert parse_source(text, "a.hs") == parse_source(text, "a.hs")


def test_bom_is_ignored():
    plain = parse_source("f = 1\n", "a.hs")
    bom = parse_source("﻿".encode() + b"f = 1\n", "a.hs")
    assert bom.declaration_names == plain.declaration_names


def test_bad_utf8_is_unreadable():
    with pytest.raises(UnreadableInput):
        parse_source(b"f = \xff\xfe\n", "bad.hs")


def test_broken_declaration_becomes_gap():
    f = parse_source("good = 1\n\nbad = (1 +\n\nalso = 2\n", "g.hs")
    assert "good" in f.declaration_names and "also" in f.declaration_names
    assert len(f.gaps) == 1 and f.gaps[0].span[0] == 3


def test_empty_file():
    f = parse_source("", "e.hs")
    assert f.declarations == () and f.raw_line_count == 0


def test_module_header_and_exports():
    f = parse_path(CORPUS / "c02_guards.hs")
    assert f.module_name == "Guards"
    assert list(f.exports) == ["classify", "sign"]


def test_imports():
    f = parse_path(CORPUS / "c04_do.hs")
    mods = {i.module: i for i in f.imports}
    assert mods["Data.Map"].qualified and mods["Data.Map"].alias == "Map"
    assert mods["Control.Monad"].names == ("forM_", "when")


def test_unused_import_detection():
    f = parse_path(CORPUS / "c15_typeclass_constraints.hs")
    assert find_unused_imports(f) == []
    g = parse_source("import Data.List (nub, sort)\nf = sort\n", "u.hs")
    assert [i.module for i in find_unused_imports(g)] == []
    h = parse_source("import Data.List (nub)\nf = 1\n", "u.hs")
    assert [i.module for i in find_unused_imports(h)] == ["Data.List"]


def test_signatures_attached():
    f = parse_path(CORPUS / "c01_basic.hs")
    typed = {d.name: d.has_type_signature for d in f.declarations}
    assert typed == {"add": True, "double": True, "greeting": False}


def test_discover_sources_skips_build_dirs(tmp_path):
    (tmp_path / "src").mkdir()
    (tmp_path / "src" / "A.hs").write_text("a = 1\n")
    (tmp_path / "dist-newstyle").mkdir()
    (tmp_path / "dist-newstyle" / "B.hs").write_text("b = 1\n")
    assert [p.name for p in discover_sources(tmp_path)] == ["A.hs"]


def test_where_folds_local_equations():
    f = parse_path(CORPUS / "c16_let.hs")
    collatz = next(d for d in f.declarations if d.name == "collatz")
    assert collatz.constructs.count(m.WHERE) == 1
    assert collatz.constructs.count(m.CASE) == 1


_ident = st.from_regex(r"[a-z][a-z0-9]{0,6}", fullmatch=True).filter(
    lambda s: s not in {"if", "then", "else", "case", "of", "let", "in", "do", "where", "data", "type",
                        "class", "instance", "module", "import", "newtype", "deriving", "infix", "infixl", "infixr", "mdo", "rec", "proc"}
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_ident, min_size=1, max_size=8, unique=True))
def test_generated_bindings_round_trip(names):
    src = "".join(f"{n} :: Int\n{n} = 1\n\n" for n in names)
    f = parse_source(src, "gen.hs")
    assert f.declaration_names == names
    assert all(d.has_type_signature for d in f.declarations)


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=200))
def test_parser_total_on_bytes(data):
    try:
        f = parse_source(data, "fuzz.hs")
    except UnreadableInput:
        return
    assert f.code_line_count + f.comment_line_count + f.blank_line_count == f.raw_line_count
