"""Surface syntax for the functional language: one program term per file."""

from __future__ import annotations

import re

from ..names import Label, Name, NameSupply
from . import syntax as G


class ParseError(Exception):
    pass


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<sym>\(\+\)|\(&\)|\(\)|-o|[()\\.,:{}*!?=]|\b1\b)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
""", re.VERBOSE)

_KEYWORDS = {"let", "in", "new", "spawn", "send", "recv", "select", "case",
             "of", "end"}


class _Toks:
    def __init__(self, src: str):
        self.toks: list[tuple[str, str, int]] = []
        i = 0
        while i < len(src):
            m = _TOKEN_RE.match(src, i)
            if not m:
                raise ParseError(f"unexpected character {src[i]!r} at offset {i}")
            i = m.end()
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(), m.start()))
        self.toks.append(("eof", "", len(src)))
        self.i = 0

    def peek(self, k: int = 0) -> tuple[str, str, int]:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> tuple[str, str, int]:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text: str, k: int = 0) -> bool:
        return self.peek(k)[1] == text

    def expect(self, text: str) -> None:
        t = self.next()
        if t[1] != text:
            raise ParseError(f"expected {text!r}, found {t[1]!r} at offset {t[2]}")


class _P:
    def __init__(self, toks: _Toks, supply: NameSupply):
        self.t = toks
        self.supply = supply
        self.scope: list[dict[str, Name]] = [{}]
        self.free: dict[str, Name] = {}

    def lookup(self, ident: str) -> Name:
        for frame in reversed(self.scope):
            if ident in frame:
                return frame[ident]
        if ident not in self.free:
            self.free[ident] = self.supply.fresh(ident)
        return self.free[ident]

    def bind(self, ident: str) -> Name:
        n = self.supply.fresh(ident)
        self.scope[-1][ident] = n
        return n

    def ident(self) -> str:
        k, text, pos = self.t.next()
        if k != "ident" or text in _KEYWORDS:
            raise ParseError(f"expected identifier, found {text!r} at offset {pos}")
        return text

    # -- types ---------------------------------------------------------------

    def type_(self) -> G.CgvType:
        left = self.prod_type()
        if self.t.at("-o"):
            self.t.next()
            return G.Arrow(left, self.type_())
        return left

    def prod_type(self) -> G.CgvType:
        left = self.type_atom()
        if self.t.at("*"):
            self.t.next()
            return G.Prod(left, self.prod_type())
        return left

    def session_arms(self) -> tuple[tuple[str, G.SessionT], ...]:
        self.t.expect("{")
        arms = []
        while True:
            l = self.ident()
            self.t.expect(":")
            s = self.type_()
            if not isinstance(s, G.SessionT):
                raise ParseError(f"branch continuation for {l} is not a session type")
            arms.append((l, s))
            if self.t.at(","):
                self.t.next()
                continue
            break
        self.t.expect("}")
        return tuple(arms)

    def type_atom(self) -> G.CgvType:
        k, text, pos = self.t.peek()
        if text == "1":
            self.t.next()
            return G.UNIT
        if text == "end":
            self.t.next()
            return G.END
        if text == "(":
            self.t.next()
            inner = self.type_()
            self.t.expect(")")
            return inner
        if text in ("!", "?"):
            self.t.next()
            msg = self.type_atom()
            self.t.expect(".")
            cont = self.type_()
            if not isinstance(cont, G.SessionT):
                raise ParseError(f"continuation after {text} is not a session type")
            return G.SOut(msg, cont) if text == "!" else G.SIn(msg, cont)
        if text == "(+)":
            self.t.next()
            return G.SSel(self.session_arms())
        if text == "(&)":
            self.t.next()
            return G.SCase(self.session_arms())
        raise ParseError(f"expected a type at offset {pos}")

    # -- terms ---------------------------------------------------------------

    def term(self) -> G.Term:
        k, text, pos = self.t.peek()
        if text == "\\":
            self.t.next()
            ident = self.ident()
            anno = None
            if self.t.at(":"):
                self.t.next()
                anno = self.type_()
            self.t.expect(".")
            self.scope.append({})
            x = self.bind(ident)
            body = self.term()
            self.scope.pop()
            return G.Abs(x, anno, body)
        if text == "let":
            self.t.next()
            if self.t.at("("):
                self.t.next()
                i1 = self.ident()
                self.t.expect(",")
                i2 = self.ident()
                self.t.expect(")")
                self.t.expect("=")
                pair = self.term()
                self.t.expect("in")
                self.scope.append({})
                x, y = self.bind(i1), self.bind(i2)
                body = self.term()
                self.scope.pop()
                return G.Split(x, y, pair, body)
            ident = self.ident()
            self.t.expect("=")
            value = self.term()
            self.t.expect("in")
            self.scope.append({})
            x = self.bind(ident)
            body = self.term()
            self.scope.pop()
            return G.App(G.Abs(x, None, body), value)
        return self.app()

    def app(self) -> G.Term:
        out = self.atom()
        while self._at_atom_start():
            out = G.App(out, self.atom())
        return out

    def _at_atom_start(self) -> bool:
        k, text, _ = self.t.peek()
        if text in ("(", "()", "new", "spawn", "send", "recv", "select", "case", "\\"):
            return True
        return k == "ident" and text not in _KEYWORDS

    def atom(self) -> G.Term:
        k, text, pos = self.t.peek()
        if text == "()":
            self.t.next()
            return G.Unit()
        if text == "(":
            self.t.next()
            first = self.term()
            if self.t.at(","):
                self.t.next()
                second = self.term()
                self.t.expect(")")
                return G.PairT(first, second)
            self.t.expect(")")
            return first
        if text == "new":
            self.t.next()
            self.t.expect(":")
            s = self.type_()
            if not isinstance(s, G.SessionT):
                raise ParseError(f"new annotation at offset {pos} is not a session type")
            return G.New(s)
        if text == "spawn":
            self.t.next()
            return G.Spawn(self.atom())
        if text == "send":
            self.t.next()
            return G.Send(self.atom())
        if text == "recv":
            self.t.next()
            return G.Recv(self.atom())
        if text == "select":
            self.t.next()
            label = Label(self.ident())
            return G.SelectT(label, self.atom())
        if text == "case":
            self.t.next()
            scrutinee = self.term()
            self.t.expect("of")
            self.t.expect("{")
            arms = []
            while True:
                l = Label(self.ident())
                self.t.expect(":")
                arms.append((l, self.term()))
                if self.t.at(","):
                    self.t.next()
                    continue
                break
            self.t.expect("}")
            return G.Case(scrutinee, tuple(arms))
        if text == "\\":
            return self.term()
        if k == "ident" and text not in _KEYWORDS:
            self.t.next()
            return G.Var(self.lookup(text))
        raise ParseError(f"unexpected token {text!r} at offset {pos}")


def parse_term(src: str, supply: NameSupply | None = None) -> G.Term:
    supply = supply or NameSupply(0)
    toks = _Toks(src)
    p = _P(toks, supply)
    t = p.term()
    if toks.peek()[0] != "eof":
        raise ParseError(f"trailing input at offset {toks.peek()[2]}: {toks.peek()[1]!r}")
    return t
