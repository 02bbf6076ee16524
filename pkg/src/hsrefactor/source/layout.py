"""Offside-rule resolution for one top-level item.

Inserts virtual ``vopen``/``vsemi``/``vclose`` tokens after the layout
keywords (``where``, ``let``, ``do``, ``mdo``, ``of``, ``\\case``). The
report's parse-error(t) rule is approximated by closing implicit blocks
on ``in``, ``then``, ``else``, ``of``, closing brackets and commas.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lexer import Token

LAYOUT_KEYWORDS = frozenset({"where", "let", "do", "mdo", "of"})
_CLOSERS = {")": "(", "]": "[", "}": "{"}


class LayoutError(Exception):
    pass


@dataclass
class _Ctx:
    kind: str  # implicit | explicit | bracket | if | then | case
    col: int = 0
    opener: str = ""


def _virtual(kind: str, at: Token) -> Token:
    return Token(kind, "", at.line, at.col)


def resolve(tokens: list[Token]) -> list[Token]:
    toks = [t for t in tokens if t.kind not in ("pragma", "cpp")]
    out: list[Token] = []
    stack: list[_Ctx] = [_Ctx("implicit", 1, "top")]
    pending: str | None = None

    def close_implicit(ctx: _Ctx, at: Token) -> None:
        if ctx.kind == "implicit" and ctx.opener != "top":
            out.append(_virtual("vclose", at))

    def innermost_implicit_col() -> int:
        top = stack[-1]
        return top.col if top.kind == "implicit" else 0

    def pop_to(pred, at: Token, barrier=("bracket", "explicit")) -> _Ctx | None:
        """Pop contexts above the first one matching pred; return it (still on stack)."""
        for idx in range(len(stack) - 1, -1, -1):
            ctx = stack[idx]
            if pred(ctx):
                while len(stack) - 1 > idx:
                    close_implicit(stack.pop(), at)
                return ctx
            if ctx.kind in barrier:
                return None
        return None

    for idx, t in enumerate(toks):
        first_on_line = idx == 0 or toks[idx - 1].line != t.line
        opened_here = False

        if pending is not None:
            opener, pending = pending, None
            if t.is_special("{"):
                stack.append(_Ctx("explicit", 0, opener))
                out.append(_virtual("vopen", t))
                continue
            if t.col > innermost_implicit_col():
                stack.append(_Ctx("implicit", t.col, opener))
                out.append(_virtual("vopen", t))
                opened_here = True
            else:
                out.append(_virtual("vopen", t))
                out.append(_virtual("vclose", t))

        if first_on_line and not opened_here and idx > 0:
            while len(stack) > 1:
                top = stack[-1]
                if top.kind == "implicit" and (t.col < top.col or (t.is_kw("where") and t.col == top.col)):
                    close_implicit(stack.pop(), t)
                elif top.kind in ("if", "then", "case") and _has_dedent_below(stack, t.col):
                    stack.pop()
                else:
                    break
            top = stack[-1]
            if (
                top.kind == "implicit"
                and top.opener != "top"
                and t.col == top.col
                and not (t.kind == "varid" and t.text in ("then", "else", "of"))
            ):
                out.append(_virtual("vsemi", t))

        if t.kind == "special":
            if t.text in ("(", "["):
                stack.append(_Ctx("bracket", opener=t.text))
            elif t.text == "{":
                stack.append(_Ctx("bracket", opener="{"))
            elif t.text in _CLOSERS:
                want = _CLOSERS[t.text]
                while len(stack) > 1 and stack[-1].kind not in ("bracket", "explicit"):
                    close_implicit(stack.pop(), t)
                top = stack[-1]
                if t.text == "}" and top.kind == "explicit":
                    stack.pop()
                    out.append(_virtual("vclose", t))
                    continue
                if top.kind != "bracket" or top.opener != want:
                    raise LayoutError(f"unbalanced {t.text!r} at line {t.line}")
                stack.pop()
            elif t.text == ",":
                pop_to(lambda c: c.kind == "bracket", t, barrier=("explicit",))
            elif t.text == ";" and stack[-1].kind == "explicit":
                out.append(_virtual("vsemi", t))
                continue
        elif t.kind == "varid":
            word = t.text
            if word == "then":
                ctx = pop_to(lambda c: c.kind == "if", t)
                if ctx is not None:
                    ctx.kind = "then"
            elif word == "else":
                if pop_to(lambda c: c.kind == "then", t) is not None:
                    stack.pop()
            elif word == "of":
                if pop_to(lambda c: c.kind == "case", t) is not None:
                    stack.pop()
                pending = "of"
            elif word == "in":
                ctx = pop_to(lambda c: c.kind == "implicit" and c.opener == "let", t)
                if ctx is not None:
                    close_implicit(stack.pop(), t)
            elif word == "if":
                nxt = toks[idx + 1] if idx + 1 < len(toks) else None
                if not (nxt is not None and nxt.is_op("|")):
                    stack.append(_Ctx("if"))
            elif word == "case":
                prev = toks[idx - 1] if idx else None
                if prev is not None and prev.is_op("\\"):
                    pending = "\\case"
                else:
                    stack.append(_Ctx("case"))
            elif word in LAYOUT_KEYWORDS:
                if word == "where" and not first_on_line:
                    pop_to(
                        lambda c: c.kind == "implicit" and c.opener in ("where", "top", "let"),
                        t,
                    )
                pending = word
        out.append(t)

    last = toks[-1] if toks else Token("eof", "", 1, 1)
    if pending is not None:
        out.append(_virtual("vopen", last))
        out.append(_virtual("vclose", last))
    while len(stack) > 1:
        ctx = stack.pop()
        if ctx.kind == "bracket":
            raise LayoutError(f"unclosed {ctx.opener!r}")
        if ctx.kind == "explicit":
            raise LayoutError("unclosed explicit block")
        close_implicit(ctx, last)
    return out


def _has_dedent_below(stack: list[_Ctx], col: int) -> bool:
    # an if/then/case marker sits above an implicit block the line dedents out of
    for ctx in reversed(stack):
        if ctx.kind == "implicit":
            return col < ctx.col
        if ctx.kind in ("bracket", "explicit"):
            return False
    return False
