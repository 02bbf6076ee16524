"""Character-level scanner for Haskell source.

Produces a flat token stream with 1-based line/column positions and a
per-line classification (code / comment / blank) used for LOC counting.
Comments are dropped; pragmas and CPP directives come through as opaque
tokens so callers can skip them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

SYMBOL_CHARS = frozenset("!#$%&*+./<=>?@\\^|-~:")
SPECIAL_CHARS = frozenset("(),;[]`{}")

RESERVED_IDS = frozenset({
    "case", "class", "data", "default", "deriving", "do", "else", "foreign",
    "if", "import", "in", "infix", "infixl", "infixr", "instance", "let",
    "mdo", "module", "newtype", "of", "then", "type", "where",
})
RESERVED_OPS = frozenset({"..", ":", "::", "=", "\\", "|", "<-", "->", "@", "~", "=>"})

_NUMBER = re.compile(
    r"0[xX][0-9a-fA-F_]+|0[oO][0-7_]+|0[bB][01_]+"
    r"|\d[\d_]*(?:\.\d[\d_]*)?(?:[eE][+-]?\d+)?"
)
_CHAR_LIT = re.compile(r"'(?:\\(?:[^']|')[^']{0,8}|[^'\\\n])'")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int

    def is_op(self, text: str | None = None) -> bool:
        return self.kind == "op" and (text is None or self.text == text)

    def is_special(self, text: str) -> bool:
        return self.kind == "special" and self.text == text

    def is_kw(self, text: str) -> bool:
        return self.kind == "varid" and self.text == text

    @property
    def base(self) -> str:
        """Unqualified name: ``Map.lookup`` -> ``lookup``."""
        if self.kind in ("varid", "conid", "op") and "." in self.text:
            head, sep, tail = self.text.rpartition(".")
            if sep and head and head[0].isupper() and tail:
                return tail
        return self.text


@dataclass
class ScanResult:
    tokens: list[Token]
    line_kinds: list[str]  # per line: "code", "comment" or "blank"
    errors: list[tuple[int, str]]


def _is_ident_start(ch: str) -> bool:
    return ch == "_" or ch.isalpha()


def _is_ident_char(ch: str) -> bool:
    return ch == "_" or ch == "'" or ch.isalnum()


def _is_symbol(ch: str) -> bool:
    if ch in SYMBOL_CHARS:
        return True
    # unicode operators such as "→" or "∘"
    return ord(ch) > 127 and not ch.isalnum() and not ch.isspace() and ch not in "\"'_"


def scan(text: str) -> ScanResult:
    lines = text.splitlines()
    n_lines = len(lines)
    has_code = [False] * (n_lines + 2)
    has_comment = [False] * (n_lines + 2)
    tokens: list[Token] = []
    errors: list[tuple[int, str]] = []

    # normalise line endings so positions follow splitlines()
    src = "\n".join(lines)
    i, line, col = 0, 1, 1
    n = len(src)

    def advance_to(j: int, mark: list[bool] | None) -> None:
        nonlocal i, line, col
        while i < j:
            ch = src[i]
            if ch == "\n":
                line += 1
                col = 1
            else:
                if mark is not None and not ch.isspace():
                    mark[line] = True
                col += 8 - (col - 1) % 8 if ch == "\t" else 1
            i += 1

    while i < n:
        ch = src[i]
        if ch == "\n" or ch.isspace():
            advance_to(i + 1, None)
            continue

        # CPP directive: '#' in the first column
        if ch == "#" and col == 1:
            end = src.find("\n", i)
            end = n if end < 0 else end
            tokens.append(Token("cpp", src[i:end], line, col))
            advance_to(end, has_code)
            continue

        if src.startswith("{-#", i):
            end = src.find("#-}", i + 3)
            if end < 0:
                errors.append((line, "unterminated pragma"))
                end = n
            else:
                end += 3
            tokens.append(Token("pragma", src[i:end], line, col))
            advance_to(end, has_code)
            continue

        if src.startswith("{-", i):
            depth, j = 1, i + 2
            while j < n and depth:
                if src.startswith("{-", j):
                    depth += 1
                    j += 2
                elif src.startswith("-}", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth:
                errors.append((line, "unterminated block comment"))
            advance_to(j, has_comment)
            continue

        if ch == '"':
            j = i + 1
            closed = False
            while j < n:
                c = src[j]
                if c == "\\":
                    # string gap: backslash, whitespace (may span lines), backslash
                    k = j + 1
                    if k < n and src[k].isspace():
                        while k < n and src[k].isspace():
                            k += 1
                        j = k + 1
                        continue
                    j += 2
                    continue
                if c == "\n":
                    break
                if c == '"':
                    closed = True
                    j += 1
                    break
                j += 1
            if not closed:
                errors.append((line, "unterminated string literal"))
            tokens.append(Token("string", src[i:j], line, col))
            advance_to(j, has_code)
            continue

        if ch == "'":
            prev = src[i - 1] if i else " "
            m = _CHAR_LIT.match(src, i)
            if m and not _is_ident_char(prev):
                tokens.append(Token("char", m.group(), line, col))
                advance_to(m.end(), has_code)
                continue
            # TH name quote or promoted constructor
            j = i + 1
            while j < n and src[j] == "'":
                j += 1
            tokens.append(Token("op", src[i:j], line, col))
            advance_to(j, has_code)
            continue

        if _is_ident_start(ch):
            j = i
            kind = "varid"
            while True:
                k = j
                while k < n and _is_ident_char(src[k]):
                    k += 1
                word = src[j:k]
                kind = "conid" if word[0].isupper() else "varid"
                # qualified name continues after "Con."
                if kind == "conid" and k + 1 < n and src[k] == ".":
                    nxt = src[k + 1]
                    if _is_ident_start(nxt):
                        j = k + 1
                        continue
                    if _is_symbol(nxt):
                        e = k + 1
                        while e < n and _is_symbol(src[e]):
                            e += 1
                        k = e
                        kind = "op"
                j = k
                break
            word = src[i:j]
            tokens.append(Token(kind, word, line, col))
            advance_to(j, has_code)
            continue

        if ch.isdigit():
            m = _NUMBER.match(src, i)
            j = m.end() if m else i + 1
            tokens.append(Token("number", src[i:j], line, col))
            advance_to(j, has_code)
            continue

        if ch in SPECIAL_CHARS:
            tokens.append(Token("special", ch, line, col))
            advance_to(i + 1, has_code)
            continue

        if _is_symbol(ch):
            j = i
            while j < n and _is_symbol(src[j]):
                j += 1
            run = src[i:j]
            if len(run) >= 2 and set(run) == {"-"}:
                end = src.find("\n", i)
                end = n if end < 0 else end
                advance_to(end, has_comment)
                continue
            tokens.append(Token("op", run, line, col))
            advance_to(j, has_code)
            continue

        tokens.append(Token("unknown", ch, line, col))
        advance_to(i + 1, has_code)

    line_kinds = []
    for ln in range(1, n_lines + 1):
        if has_code[ln]:
            line_kinds.append("code")
        elif has_comment[ln] and lines[ln - 1].strip():
            line_kinds.append("comment")
        else:
            line_kinds.append("blank")
    return ScanResult(tokens, line_kinds, errors)
