"""Lightweight structural parser for Haskell modules.

Not a compiler front end: it splits a module into top-level items by the
offside rule, recognises imports, signatures and function bindings, and
builds a construct tree per function. Anything it cannot make sense of is
recorded as a parse gap rather than attributed to a neighbouring
declaration.
"""

from __future__ import annotations

import logging
from collections import Counter
from pathlib import Path

from ..errors import UnreadableInput
from . import model as m
from .layout import LayoutError, resolve
from .lexer import RESERVED_IDS, RESERVED_OPS, Token, scan

log = logging.getLogger(__name__)

_OTHER_DECL_KEYWORDS = frozenset({
    "data", "newtype", "type", "class", "instance", "deriving", "infix",
    "infixl", "infixr", "foreign", "default",
})
_BIND_OPS = frozenset({">>=", "=<<", ">>"})
_OPEN = {"(": ")", "[": "]", "{": "}"}


class ParseError(Exception):
    pass


# --------------------------------------------------------------------------
# top-level item splitting


def _split_items(tokens: list[Token]) -> list[list[Token]]:
    items: list[list[Token]] = []
    for tok in tokens:
        # closing brackets / "where" in column 1 continue a module header
        continues = tok.kind == "special" and tok.text in (")", "]", ",") or tok.is_kw("where")
        if (tok.col == 1 and not continues) or not items:
            items.append([tok])
        else:
            items[-1].append(tok)
    return items


def _depth0_positions(toks: list[Token], pred) -> list[int]:
    depth = 0
    hits = []
    for idx, t in enumerate(toks):
        if t.kind == "special" and t.text in _OPEN:
            depth += 1
        elif t.kind == "special" and t.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and pred(t):
            hits.append(idx)
    return hits


def _first_depth0(toks: list[Token], pred) -> int | None:
    hits = _depth0_positions(toks, pred)
    return hits[0] if hits else None


def _is_plain_op(t: Token) -> bool:
    return t.kind == "op" and t.text not in RESERVED_OPS and t.text not in ("!", "~", "@")


def binding_name(lhs: list[Token]) -> str | None:
    """Name bound by an equation's left-hand side, or None for pattern bindings."""
    if not lhs:
        return None
    first = lhs[0]
    # infix definition with backticks: x `op` y
    ticks = [i for i, t in enumerate(lhs) if t.is_special("`")]
    if len(ticks) >= 2 and ticks[1] == ticks[0] + 2 and lhs[ticks[0] + 1].kind == "varid":
        depth_ok = _first_depth0(lhs, lambda t: t.is_special("`"))
        if depth_ok is not None and depth_ok == ticks[0]:
            return lhs[ticks[0] + 1].text
    if first.kind == "varid" and first.text not in RESERVED_IDS:
        if len(lhs) > 1 and _is_plain_op(lhs[1]):
            return lhs[1].text
        return first.text
    if first.is_special("("):
        # (op) a b = ...
        if len(lhs) >= 3 and lhs[1].kind == "op" and lhs[2].is_special(")"):
            return lhs[1].text
        ops = _depth0_positions(lhs, _is_plain_op)
        if ops:
            return lhs[ops[0]].text
        # (f . g) x = ... style parenthesised function head
        if len(lhs) >= 2 and lhs[1].kind == "varid" and lhs[1].text not in RESERVED_IDS:
            inner_close = _matching(lhs, 0)
            if inner_close is not None and inner_close + 1 < len(lhs):
                return lhs[1].text
        return None
    if first.kind in ("conid", "number", "string", "char") or first.is_special("["):
        ops = _depth0_positions(lhs, _is_plain_op)
        if ops and lhs[ops[0]].text != ":":
            return lhs[ops[0]].text
    return None


def _matching(toks: list[Token], open_idx: int) -> int | None:
    depth = 0
    for idx in range(open_idx, len(toks)):
        t = toks[idx]
        if t.kind == "special" and t.text in _OPEN:
            depth += 1
        elif t.kind == "special" and t.text in (")", "]", "}"):
            depth -= 1
            if depth == 0:
                return idx
    return None


# --------------------------------------------------------------------------
# construct recognition


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    # -- token helpers
    def peek(self, off: int = 0) -> Token | None:
        j = self.i + off
        return self.toks[j] if j < len(self.toks) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of declaration")
        self.i += 1
        return tok

    def at_eof(self) -> bool:
        return self.i >= len(self.toks)

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t is not None and t.is_kw(word)

    def at_op(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.is_op(text)

    def at_kind(self, kind: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == kind

    def expect_op(self, text: str) -> None:
        t = self.peek()
        if t is None or not t.is_op(text):
            raise ParseError(f"expected {text!r}, got {t.text if t else 'end'!r}")
        self.i += 1

    def expect_kw(self, word: str) -> None:
        while self.at_kind("vsemi"):
            self.i += 1
        if not self.at_kw(word):
            t = self.peek()
            raise ParseError(f"expected {word!r}, got {t.text if t else 'end'!r}")
        self.i += 1

    # -- declarations
    def skip_lhs(self, seps: tuple[str, ...]) -> list[Token]:
        """Consume a left-hand side up to a separator op at bracket depth 0."""
        start = self.i
        depth = 0
        while True:
            t = self.peek()
            if t is None or (depth == 0 and t.kind in ("vsemi", "vclose")):
                raise ParseError("left-hand side without right-hand side")
            if t.kind == "special" and t.text in _OPEN:
                depth += 1
            elif t.kind == "special" and t.text in (")", "]", "}"):
                depth -= 1
            elif t.kind == "vopen":
                depth += 1
            elif t.kind == "vclose":
                depth -= 1
            elif depth == 0 and t.kind == "op" and (t.text in seps or t.text == "|"):
                break
            self.i += 1
        return self.toks[start:self.i]

    def rhs(self, sep: str, stop: frozenset[str] = frozenset()) -> list[m.ConstructNode]:
        nodes: list[m.ConstructNode] = []
        if self.at_op("|"):
            arms = []
            last_guard: list[Token] = []
            while self.at_op("|"):
                self.advance()
                start = self.i
                cond = self.qualifiers({sep})
                last_guard = self.toks[start:self.i]
                self.expect_op(sep)
                rest = self.expr(stop)
                arms.append(m.body(*cond, *rest))
            exhaustive = len(last_guard) == 1 and last_guard[0].text in ("otherwise", "True")
            nodes.append(m.guard_node(arms, exhaustive))
        else:
            self.expect_op(sep)
            nodes.extend(self.expr(stop))
        if self.at_kw("where"):
            self.advance()
            nodes.append(m.leaf(m.WHERE, *self.bindings()))
        return nodes

    def qualifiers(self, seps: set[str]) -> list[m.ConstructNode]:
        out: list[m.ConstructNode] = []
        while True:
            out.extend(self.expr(frozenset(seps | {","})))
            if self.peek() is not None and self.peek().is_special(","):
                self.advance()
                continue
            return out

    def bindings(self) -> list[m.ConstructNode]:
        """A block of local declarations; consecutive equations of one name fold into a case."""
        groups: list[tuple[str | None, list[m.ConstructNode]]] = []
        for item in self.block(self.local_binding):
            if item is None:
                continue
            name, node = item
            if name is not None and groups and groups[-1][0] == name:
                groups[-1][1].append(node)
            else:
                groups.append((name, [node]))
        out = []
        for _, eqs in groups:
            out.append(eqs[0] if len(eqs) == 1 else m.body(m.case_node(m.body(), eqs)))
        return out

    def local_binding(self):
        # signatures and fixity declarations carry no control flow
        if self.at_kw("infixl") or self.at_kw("infixr") or self.at_kw("infix"):
            self.skip_item()
            return None
        sig = self._looks_like_signature()
        if sig:
            self.skip_item()
            return None
        lhs = self.skip_lhs(("=",))
        return binding_name(lhs), m.body(*self.rhs("="))

    def _looks_like_signature(self) -> bool:
        depth = 0
        j = self.i
        while j < len(self.toks):
            t = self.toks[j]
            if t.kind == "special" and t.text in _OPEN or t.kind == "vopen":
                depth += 1
            elif t.kind == "special" and t.text in (")", "]", "}") or t.kind == "vclose":
                if depth == 0:
                    return False
                depth -= 1
            elif depth == 0 and t.kind == "vsemi":
                return False
            elif depth == 0 and t.kind == "op":
                if t.text == "::":
                    return True
                if t.text in ("=", "|"):
                    return False
            j += 1
        return False

    def skip_item(self) -> None:
        depth = 0
        while not self.at_eof():
            t = self.peek()
            if t.kind == "vopen":
                depth += 1
            elif t.kind == "vclose":
                if depth == 0:
                    return
                depth -= 1
            elif t.kind == "vsemi" and depth == 0:
                return
            self.i += 1

    def block(self, item_fn) -> list:
        t = self.peek()
        if t is None or t.kind != "vopen":
            raise ParseError("expected block")
        self.advance()
        items = []
        while True:
            t = self.peek()
            if t is None:
                raise ParseError("unterminated block")
            if t.kind == "vclose":
                self.advance()
                return items
            if t.kind == "vsemi":
                self.advance()
                continue
            items.append(item_fn())
            t = self.peek()
            if t is None or t.kind not in ("vsemi", "vclose"):
                raise ParseError(f"unexpected {t.text if t else 'end'!r} in block")

    # -- expressions
    def expr(self, stop: frozenset[str] = frozenset()) -> list[m.ConstructNode]:
        nodes: list[m.ConstructNode] = []
        prev_atom = False
        after_dollar = False
        while True:
            t = self.peek()
            if t is None or t.kind in ("vsemi", "vclose"):
                return nodes
            if t.text in stop and t.kind in ("op", "special", "varid"):
                return nodes
            if t.kind == "special" and t.text in (")", "]", "}", ","):
                return nodes
            if t.kind == "varid" and t.text in ("then", "else", "of", "in", "where"):
                return nodes
            if t.is_op("|") or t.is_op("="):
                return nodes
            if t.kind == "vopen":
                raise ParseError("stray block")

            if t.kind == "varid" and t.text == "if":
                nodes.append(self.if_expr(stop))
                prev_atom = True
            elif t.kind == "varid" and t.text == "case":
                nodes.append(self.case_expr(stop))
                prev_atom = True
            elif t.is_op("\\"):
                lam = self.lambda_expr(stop)
                nodes.append(m.leaf(m.APPLICATION, lam) if after_dollar else lam)
                prev_atom = True
            elif t.kind == "varid" and t.text == "let":
                nodes.append(self.let_expr(stop))
                prev_atom = True
            elif t.kind == "varid" and t.text in ("do", "mdo"):
                self.advance()
                nodes.append(m.leaf(m.DO, *self.block(self.statement)))
                prev_atom = True
            elif t.kind == "special" and t.text in ("(", "[", "{"):
                inner, literal = self.bracket()
                if literal and prev_atom:
                    nodes.append(m.leaf(m.APPLICATION, *inner))
                else:
                    nodes.extend(inner)
                prev_atom = True
            elif t.is_op("&&"):
                self.advance()
                nodes.append(m.leaf(m.AND))
                prev_atom = False
            elif t.is_op("||"):
                self.advance()
                nodes.append(m.leaf(m.OR))
                prev_atom = False
            else:
                self.advance()
                if t.kind == "special" and t.text == "`":
                    # backticked operator: `div`
                    if self.peek() is not None and self.peek().kind in ("varid", "conid"):
                        self.advance()
                    if self.peek() is not None and self.peek().is_special("`"):
                        self.advance()
                    prev_atom = False
                elif t.kind == "op":
                    prev_atom = False
                else:
                    prev_atom = t.kind in ("varid", "conid", "number", "string", "char")
            after_dollar = self.toks[self.i - 1].is_op("$") if self.i else False

    def statement(self) -> m.ConstructNode:
        return m.body(*self.expr(frozenset()))

    def if_expr(self, stop: frozenset[str]) -> m.ConstructNode:
        self.advance()
        if self.at_op("|"):
            arms = []
            last_guard: list[Token] = []
            while self.at_op("|"):
                self.advance()
                start = self.i
                cond = self.qualifiers({"->"})
                last_guard = self.toks[start:self.i]
                self.expect_op("->")
                arms.append(m.body(*cond, *self.expr(stop)))
                while self.at_kind("vsemi") and self.peek(1) is not None and self.peek(1).is_op("|"):
                    self.advance()
            exhaustive = len(last_guard) == 1 and last_guard[0].text in ("otherwise", "True")
            return m.guard_node(arms, exhaustive)
        cond = self.expr(frozenset({"then"}))
        self.expect_kw("then")
        then = self.expr(frozenset({"else"}))
        self.expect_kw("else")
        else_ = self.expr(stop)
        return m.if_node(m.body(*cond), m.body(*then), m.body(*else_))

    def case_expr(self, stop: frozenset[str]) -> m.ConstructNode:
        self.advance()
        scrut = self.expr(frozenset({"of"}))
        self.expect_kw("of")
        alts = self.block(self.alternative)
        if not alts:
            return m.body(*scrut)
        return m.case_node(m.body(*scrut), alts)

    def alternative(self) -> m.ConstructNode:
        self.skip_lhs(("->",))
        return m.body(*self.rhs("->"))

    def lambda_expr(self, stop: frozenset[str]) -> m.ConstructNode:
        self.advance()
        if self.at_kw("case"):
            self.advance()
            alts = self.block(self.alternative)
            if not alts:
                return m.leaf(m.LAMBDA)
            return m.leaf(m.LAMBDA, m.case_node(m.body(), alts))
        self.skip_lhs(("->",))
        self.expect_op("->")
        return m.leaf(m.LAMBDA, *self.expr(stop))

    def let_expr(self, stop: frozenset[str]) -> m.ConstructNode:
        self.advance()
        binds = self.bindings()
        if self.at_kw("in"):
            self.advance()
            binds.append(m.body(*self.expr(stop)))
        return m.leaf(m.LET, *binds)

    def bracket(self) -> tuple[list[m.ConstructNode], bool]:
        """Parse a bracketed group; report whether it is a function literal."""
        open_tok = self.advance()
        close = _OPEN[open_tok.text]
        start = self.i
        nodes: list[m.ConstructNode] = []
        while True:
            nodes.extend(self.expr(frozenset({"=", "|", "->", "<-"})))
            t = self.peek()
            if t is None:
                raise ParseError(f"unclosed {open_tok.text!r}")
            if t.is_special(close):
                break
            if open_tok.text == "[" and t.is_op("|"):
                self.advance()
                nodes.extend(self.comprehension_qualifiers())
                continue
            if t.is_special(",") or t.kind in ("op", "vsemi"):
                self.advance()
                continue
            raise ParseError(f"unexpected {t.text!r} inside {open_tok.text!r}")
        end = self.i
        self.advance()
        literal = False
        if open_tok.text == "(" and end > start:
            inner = self.toks[start:end]
            first, last = inner[0], inner[-1]
            if first.is_op("\\") and len(nodes) == 1 and nodes[0].kind == m.LAMBDA:
                literal = True
            elif _is_section_op(first) and not first.is_op("-"):
                literal = True
            elif _is_section_op(last) and len(inner) > 1:
                literal = True
            elif first.is_special("`") or (last.is_special("`") and len(inner) > 3):
                literal = True
        return nodes, literal

    def comprehension_qualifiers(self) -> list[m.ConstructNode]:
        out: list[m.ConstructNode] = []
        while True:
            start = self.i
            if self.at_kw("let"):
                self.advance()
                out.append(m.leaf(m.LET, *self.bindings()))
            else:
                part = self.expr(frozenset({",", "|"}))
                toks = self.toks[start:self.i]
                generator = _first_depth0(toks, lambda t: t.is_op("<-")) is not None
                out.extend(part) if generator else out.append(m.leaf(m.LC_GUARD, *part))
            t = self.peek()
            if t is not None and t.is_special(","):
                self.advance()
                continue
            return out


def _is_section_op(t: Token) -> bool:
    return t.kind == "op" and t.text not in ("\\", "..", "::", "=", "<-", "->", "@", "~", "=>", "'", "''")


def parse_equation(tokens: list[Token]) -> tuple[str | None, list[m.ConstructNode]]:
    """Parse one top-level equation into its name and construct nodes."""
    try:
        laid_out = resolve(tokens)
    except LayoutError as exc:
        raise ParseError(str(exc)) from exc
    p = _Parser(laid_out)
    lhs = p.skip_lhs(("=",))
    name = binding_name(lhs)
    nodes = p.rhs("=")
    if not p.at_eof():
        t = p.peek()
        raise ParseError(f"unexpected {t.text or t.kind!r} at line {t.line}")
    return name, nodes


# --------------------------------------------------------------------------
# imports, signatures, module header


def _parse_import(toks: list[Token]) -> m.ImportDecl | None:
    i = 1
    qualified = False
    words = toks
    while i < len(words) and (words[i].is_kw("safe") or words[i].is_kw("qualified") or words[i].kind == "string"):
        if words[i].text == "qualified":
            qualified = True
        i += 1
    if i >= len(words) or words[i].kind != "conid":
        return None
    module = words[i].text
    i += 1
    alias = None
    hiding = False
    names: list[str] | None = None
    subordinates = False
    while i < len(words):
        t = words[i]
        if t.is_kw("qualified"):
            qualified = True
            i += 1
        elif t.is_kw("as") and i + 1 < len(words):
            alias = words[i + 1].text
            i += 2
        elif t.is_kw("hiding"):
            hiding = True
            i += 1
        elif t.is_special("("):
            close = _matching(words, i)
            if close is None:
                return None
            names, subordinates = _import_names(words[i + 1:close])
            i = close + 1
        else:
            i += 1
    return m.ImportDecl(
        module=module,
        names=tuple(names) if names is not None else None,
        line=toks[0].line,
        qualified=qualified,
        alias=alias,
        hiding=hiding,
        has_subordinates=subordinates,
    )


def _import_names(toks: list[Token]) -> tuple[list[str], bool]:
    names: list[str] = []
    subordinates = False
    depth = 0
    j = 0
    while j < len(toks):
        t = toks[j]
        if t.is_special("("):
            if depth == 0 and j + 2 < len(toks) and toks[j + 1].kind == "op" and toks[j + 2].is_special(")") and (
                j == 0 or toks[j - 1].is_special(",")
            ):
                names.append(toks[j + 1].text)
                j += 3
                continue
            depth += 1
            if depth == 1:
                subordinates = True
        elif t.is_special(")"):
            depth -= 1
        elif depth == 0 and t.kind in ("varid", "conid") and t.text not in ("type", "pattern"):
            names.append(t.text)
        j += 1
    return names, subordinates


def _parse_exports(toks: list[Token]) -> tuple[str, ...] | None:
    open_idx = next((i for i, t in enumerate(toks) if t.is_special("(")), None)
    where_idx = next((i for i, t in enumerate(toks) if t.is_kw("where")), len(toks))
    if open_idx is None or open_idx > where_idx:
        return None
    close = _matching(toks, open_idx)
    if close is None:
        return None
    names, _ = _import_names(toks[open_idx + 1:close])
    return tuple(names)


def _signature(toks: list[Token]) -> m.Signature | None:
    dc = _first_depth0(toks, lambda t: t.is_op("::"))
    if dc is None:
        return None
    head = toks[:dc]
    names = []
    j = 0
    while j < len(head):
        t = head[j]
        if t.kind == "varid" and t.text not in RESERVED_IDS:
            names.append(t.text)
        elif t.is_special("(") and j + 2 < len(head) and head[j + 1].kind == "op":
            names.append(head[j + 1].text)
            j += 2
        elif not t.is_special(","):
            return None
        j += 1
    if not names:
        return None
    body_toks = toks[dc + 1:]
    text = " ".join(t.text for t in body_toks)
    constrained = any(t.is_op("=>") for t in body_toks)
    return m.Signature(tuple(names), text, (toks[0].line, toks[-1].line), constrained)


# --------------------------------------------------------------------------
# entry points


def _identifiers(toks: list[Token]) -> Counter:
    c: Counter = Counter()
    for t in toks:
        if t.kind in ("varid", "conid") and t.text not in RESERVED_IDS:
            c[t.base] += 1
            if t.base != t.text:
                c[t.text] += 1
        elif t.kind == "op" and t.text not in RESERVED_OPS:
            c[t.base] += 1
    return c


def parse_source(text: str | bytes, path: str = "<memory>") -> m.SourceFile:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UnreadableInput(f"{path}: not valid UTF-8 ({exc.reason})") from exc
    if text.startswith("﻿"):
        text = text[1:]
    scanned = scan(text)
    lines = tuple(text.splitlines())
    kinds = scanned.line_kinds
    gaps: list[m.ParseGap] = [m.ParseGap((ln, ln), msg) for ln, msg in scanned.errors]

    module_name = None
    exports = None
    imports: list[m.ImportDecl] = []
    signatures: list[m.Signature] = []
    class_decls = instance_decls = 0
    other_ids: Counter = Counter()
    equations: list[tuple[str, list[Token], list[m.ConstructNode] | None, str | None]] = []

    for item in _split_items(scanned.tokens):
        toks = [t for t in item if t.kind not in ("pragma", "cpp")]
        if not toks:
            continue
        first = toks[0]
        span = (toks[0].line, toks[-1].line)
        if first.is_kw("module"):
            if len(toks) > 1 and toks[1].kind == "conid":
                module_name = toks[1].text
            exports = _parse_exports(toks)
            continue
        if first.is_kw("import"):
            imp = _parse_import(toks)
            if imp is None:
                gaps.append(m.ParseGap(span, "unrecognised import"))
            else:
                imports.append(imp)
            continue
        if first.kind == "varid" and first.text in _OTHER_DECL_KEYWORDS or (
            first.is_kw("pattern") and len(toks) > 1 and toks[1].kind == "conid"
        ):
            if first.text == "class":
                class_decls += 1
            elif first.text == "instance":
                instance_decls += 1
            other_ids.update(_identifiers(toks[1:]))
            continue
        if first.is_op("$"):
            other_ids.update(_identifiers(toks))
            continue

        if _first_depth0(toks, lambda t: t.is_op("::")) is not None and (
            (_first_depth0(toks, lambda t: t.is_op("=")) or len(toks)) > _first_depth0(toks, lambda t: t.is_op("::"))
        ):
            sig = _signature(toks)
            if sig is None:
                gaps.append(m.ParseGap(span, "unrecognised signature"))
            else:
                signatures.append(sig)
                other_ids.update(_identifiers(toks[_first_depth0(toks, lambda t: t.is_op("::")) + 1:]))
            continue

        eq_pos = _first_depth0(toks, lambda t: t.is_op("=") or t.is_op("|"))
        if eq_pos is None:
            if first.kind == "varid" and first.text not in RESERVED_IDS:
                # top-level Template Haskell splice such as: makeLenses ''Config
                other_ids.update(_identifiers(toks))
            else:
                gaps.append(m.ParseGap(span, f"unrecognised top-level item starting {first.text!r}"))
            continue
        name = binding_name(toks[:eq_pos])
        if name is None:
            gaps.append(m.ParseGap(span, "pattern binding or unrecognised left-hand side"))
            continue
        try:
            _, nodes = parse_equation(toks)
        except ParseError as exc:
            log.debug("%s:%d: %s", path, span[0], exc)
            equations.append((name, toks, None, str(exc)))
            continue
        equations.append((name, toks, nodes, None))

    # group consecutive equations of the same function
    sig_by_name = {}
    for sig in signatures:
        for nm in sig.names:
            sig_by_name.setdefault(nm, sig)
    declarations: list[m.FunctionUnit] = []
    seen: set[str] = set()
    idx = 0
    while idx < len(equations):
        name = equations[idx][0]
        j = idx
        while j < len(equations) and equations[j][0] == name:
            j += 1
        group = equations[idx:j]
        idx = j
        start = group[0][1][0].line
        end = group[-1][1][-1].line
        failed = [err for _, _, nodes, err in group if nodes is None]
        if failed:
            gaps.append(m.ParseGap((start, end), f"{name}: {failed[0]}"))
            continue
        if name in seen:
            gaps.append(m.ParseGap((start, end), f"{name}: non-contiguous redefinition"))
            continue
        seen.add(name)
        if len(group) == 1:
            root = m.body(*group[0][2])
        else:
            root = m.body(m.case_node(m.body(), [m.body(*nodes) for _, _, nodes, _ in group]))
        ids: Counter = Counter()
        for _, toks, _, _ in group:
            eq_pos = _first_depth0(toks, lambda t: t.is_op("=") or t.is_op("|"))
            ids.update(_identifiers(toks[eq_pos:]))
        sig = sig_by_name.get(name)
        code_lines = sum(1 for ln in range(start, end + 1) if kinds[ln - 1] == "code")
        declarations.append(
            m.FunctionUnit(
                name=name,
                has_type_signature=sig is not None,
                span=(start, end),
                constructs=root,
                identifiers_used=ids,
                signature=sig.text if sig else None,
                code_lines=code_lines,
            )
        )

    gaps.sort(key=lambda g: g.span)
    return m.SourceFile(
        path=path,
        module_name=module_name,
        imports=tuple(imports),
        declarations=tuple(declarations),
        raw_line_count=len(lines),
        code_line_count=kinds.count("code"),
        blank_line_count=kinds.count("blank"),
        comment_line_count=kinds.count("comment"),
        exports=exports,
        signatures=tuple(signatures),
        class_decls=class_decls,
        instance_decls=instance_decls,
        other_identifiers=other_ids,
        gaps=tuple(gaps),
        lines=lines,
    )


def parse_path(path: str | Path, root: str | Path | None = None) -> m.SourceFile:
    path = Path(path)
    rel = str(path.relative_to(root)) if root is not None else str(path)
    return parse_source(path.read_bytes(), rel)


DEFAULT_EXCLUDES = ("dist-newstyle", ".stack-work")


def discover_sources(root: str | Path, pattern: str = "**/*.hs", excludes=DEFAULT_EXCLUDES) -> list[Path]:
    root = Path(root)
    found = []
    for p in sorted(root.glob(pattern)):
        if not p.is_file():
            continue
        parts = p.relative_to(root).parts
        if any(part in excludes for part in parts):
            continue
        found.append(p)
    return found


def count_loc(file: m.SourceFile) -> tuple[int, int]:
    return file.raw_line_count, file.code_line_count


def find_unused_imports(file: m.SourceFile) -> list[m.ImportDecl]:
    """Imports with an explicit name list none of whose names is used.

    Conservative: open imports, ``hiding`` imports, instance-only imports
    (``import M ()``) and lists naming constructors via ``T(..)`` are never
    reported.
    """
    used: Counter = Counter(file.other_identifiers)
    for d in file.declarations:
        used.update(d.identifiers_used)
    out = []
    for imp in file.imports:
        if imp.names is None or imp.hiding or not imp.names or imp.has_subordinates:
            continue
        if not any(used[name] for name in imp.names):
            out.append(imp)
    return out


def render_spans(file: m.SourceFile) -> str:
    """Source text keeping only declaration (and signature) lines, others blanked."""
    keep: set[int] = set()
    for d in file.declarations:
        keep.update(range(d.span[0], d.span[1] + 1))
    for s in file.signatures:
        keep.update(range(s.span[0], s.span[1] + 1))
    out = [line if i + 1 in keep else "" for i, line in enumerate(file.lines)]
    return "\n".join(out) + ("\n" if out else "")
