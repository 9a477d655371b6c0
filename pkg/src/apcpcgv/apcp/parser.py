"""Surface syntax for processes and session types.

One process per file; `#` starts a line comment. Sugared actions are
desugared at parse time, so the parser only ever produces core syntax.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..names import Label, Name, NameSupply, RecVar
from . import syntax as S
from . import types as T


class ParseError(Exception):
    pass


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<nat>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>[\[\](){}<>.,|:*%+&^!?])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Tok]:
    out: list[_Tok] = []
    i = 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if not m:
            raise ParseError(f"unexpected character {src[i]!r} at offset {i}")
        i = m.end()
        if m.lastgroup == "ws":
            continue
        out.append(_Tok(m.lastgroup, m.group(), m.start()))
    out.append(_Tok("eof", "", len(src)))
    return out


HOLE = T.pvar(-1)


def fill_holes(t: T.SessionType, supply: T.PrioritySupply) -> T.SessionType:
    return T.map_priorities(t, lambda p: supply.fresh() if p == HOLE else p)


def has_holes(t: T.SessionType) -> bool:
    return any(p == HOLE for p in T.priority_terms(t))


class _P:
    def __init__(self, toks: list[_Tok], supply: NameSupply):
        self.toks = toks
        self.i = 0
        self.supply = supply
        self.scope: list[dict[str, Name]] = [{}]
        self.rec_scope: list[dict[str, RecVar]] = [{}]
        self.free: dict[str, Name] = {}

    # -- token helpers -----------------------------------------------------
    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r} at offset {t.pos}")
        return t

    def at(self, text: str, k: int = 0) -> bool:
        return self.peek(k).text == text

    # -- name scoping ------------------------------------------------------
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

    def push(self) -> None:
        self.scope.append({})
        self.rec_scope.append({})

    def pop(self) -> None:
        self.scope.pop()
        self.rec_scope.pop()

    def lookup_rec(self, ident: str) -> RecVar:
        for frame in reversed(self.rec_scope):
            if ident in frame:
                return frame[ident]
        raise ParseError(f"unbound recursion variable {ident}")

    def ident(self) -> str:
        t = self.next()
        if t.kind != "ident":
            raise ParseError(f"expected identifier, found {t.text!r} at offset {t.pos}")
        return t.text

    def name_ident(self) -> str:
        s = self.ident()
        if s[0].isupper():
            raise ParseError(f"endpoint names start lowercase: {s}")
        return s

    # -- types ---------------------------------------------------------------
    def priority(self) -> T.Priority:
        t = self.next()
        if t.kind == "nat":
            return T.concrete(int(t.text))
        if t.text == "_":
            return HOLE
        raise ParseError(f"expected priority (natural or _) at offset {t.pos}")

    def type_(self) -> T.SessionType:
        left = self.type_atom()
        if self.at("*") or self.at("%"):
            op = self.next().text
            p = self.priority()
            right = self.type_()  # right-associative
            return T.Tensor(p, left, right) if op == "*" else T.ParT(p, left, right)
        return left

    def type_arms(self) -> tuple[tuple[str, T.SessionType], ...]:
        self.expect("{")
        arms = []
        while True:
            l = self.ident()
            self.expect(":")
            arms.append((l, self.type_()))
            if self.at(","):
                self.next()
                continue
            break
        self.expect("}")
        return tuple(arms)

    def type_atom(self) -> T.SessionType:
        t = self.peek()
        if t.text == "end":
            self.next()
            return T.BULLET
        if t.text == "(":
            self.next()
            inner = self.type_()
            self.expect(")")
            return inner
        if t.text == "+":
            self.next()
            p = self.priority()
            return T.Plus(p, self.type_arms())
        if t.text == "&":
            self.next()
            p = self.priority()
            return T.With(p, self.type_arms())
        if t.text == "mu":
            self.next()
            v = self.ident()
            self.expect(".")
            return T.Mu(v, self.type_())
        if t.kind == "ident" and t.text[0].isupper():
            self.next()
            return T.TVar(t.text)
        raise ParseError(f"expected a session type at offset {t.pos}")

    # -- processes -----------------------------------------------------------
    def process(self) -> S.Process:
        parts = [self.item()]
        while self.at("|"):
            self.next()
            parts.append(self.item())
        return S.par(*parts)

    def name_list(self, closer: str) -> list[str]:
        names = []
        if not self.at(closer):
            names.append(self.name_ident())
            while self.at(","):
                self.next()
                names.append(self.name_ident())
        self.expect(closer)
        return names

    def item(self) -> S.Process:
        t = self.peek()
        if t.text == "0":
            self.next()
            return S.Inact()
        if t.text == "(":
            self.next()
            self.push()
            p = self.process()
            self.pop()
            self.expect(")")
            return p
        if t.text == "fwd":
            self.next()
            a = self.lookup(self.name_ident())
            b = self.lookup(self.name_ident())
            return S.Fwd(a, b)
        if t.text == "new":
            self.next()
            fwd_enabled = False
            if self.at("^"):
                raise ParseError(
                    "forwarder-enabled restrictions (new^) are produced by the "
                    "translation and cannot be written in source programs")
            self.push()
            x = self.bind(self.name_ident())
            anno = None
            if self.at(":"):
                self.next()
                anno = self.type_()
            y = self.bind(self.name_ident())
            self.expect(".")
            body = self.item()
            self.pop()
            return S.Res(x, y, body, fwd_enabled, anno)
        if t.text == "rec":
            self.next()
            lifter = None
            if self.at("["):
                self.next()
                n = self.next()
                if n.kind != "nat":
                    raise ParseError(f"expected lifter value at offset {n.pos}")
                lifter = int(n.text)
                self.expect("]")
            v = self.ident()
            if not v[0].isupper():
                raise ParseError(f"recursion variables start uppercase: {v}")
            var = self.supply.fresh_rec(v)
            self.expect("(")
            # parameters are free occurrences: the loop's context interface
            params = tuple(self.lookup(n) for n in self.name_list(")"))
            self.push()
            self.rec_scope[-1][v] = var
            self.expect(".")
            body = self.item()
            self.pop()
            return S.Rec(var, params, body, lifter)
        if t.kind == "ident" and t.text[0].isupper():
            # recursive call X<...>
            v = self.ident()
            var = self.lookup_rec(v)
            self.expect("<")
            args = tuple(self.lookup(n) for n in self.name_list(">"))
            return S.Call(var, args)
        if t.kind == "ident":
            return self.action(self.name_ident())
        raise ParseError(f"unexpected token {t.text!r} at offset {t.pos}")

    def action(self, subj_ident: str) -> S.Process:
        subj = self.lookup(subj_ident)
        if self.at("["):
            self.next()
            first = self.name_ident()
            if self.at(","):
                self.next()
                second = self.name_ident()
                self.expect("]")
                return S.Output(subj, self.lookup(first), self.lookup(second))
            self.expect("]")
            self.expect("<")
            label = Label(self.ident())
            return S.Select(subj, self.lookup(first), label)
        if self.at("("):
            self.next()
            first = self.name_ident()
            if self.at(","):
                self.next()
                second = self.name_ident()
                self.expect(")")
                self.expect(".")
                self.push()
                mb = self.bind_known(first)
                cb = self.bind_known(second)
                body = self.item()
                self.pop()
                return S.Input(subj, mb, cb, body)
            self.expect(")")
            self.expect(">")
            arms = self.branch_arms(first)
            return S.Branch(subj, arms[0], arms[1])
        if self.at("!"):
            self.next()
            if self.at("["):
                self.next()
                y = self.name_ident()
                self.expect("]")
                self.expect(".")
                self.push()
                yn = self.bind(y)
                body = self.item()
                self.pop()
                return S.desugar_bound_output(subj, yn, body, self.supply)
            self.expect("<")
            label = Label(self.ident())
            self.expect(">")
            self.expect(".")
            body = self.item()
            return S.desugar_bound_select(subj, label, body, self.supply)
        if self.at("?"):
            self.next()
            if self.at("("):
                self.next()
                y = self.name_ident()
                self.expect(")")
                self.expect(".")
                self.push()
                yn = self.bind(y)
                body = self.item()
                self.pop()
                return S.desugar_sugar_input(subj, yn, body, self.supply)
            if self.at("{"):
                self.next()
                arms = []
                while True:
                    l = Label(self.ident())
                    self.expect(":")
                    arms.append((l, self.item()))
                    if self.at(","):
                        self.next()
                        continue
                    break
                self.expect("}")
                return S.desugar_sugar_branch(subj, arms, self.supply)
        raise ParseError(f"cannot parse action on {subj_ident!r} at offset {self.peek().pos}")

    def bind_known(self, ident: str) -> Name:
        return self.bind(ident)

    def branch_arms(self, binder_ident: str) -> tuple[Name, tuple[tuple[Label, S.Process], ...]]:
        self.expect("{")
        self.push()
        cb = self.bind(binder_ident)
        arms = []
        while True:
            l = Label(self.ident())
            self.expect(":")
            arms.append((l, self.item()))
            if self.at(","):
                self.next()
                continue
            break
        self.expect("}")
        self.pop()
        return cb, tuple(arms)


def parse_process(src: str, supply: NameSupply | None = None) -> S.Process:
    supply = supply or NameSupply(0)
    p = _P(_tokenize(src), supply)
    proc = p.process()
    if p.peek().kind != "eof":
        raise ParseError(f"trailing input at offset {p.peek().pos}: {p.peek().text!r}")
    return proc


def parse_type(src: str) -> T.SessionType:
    p = _P(_tokenize(src), NameSupply(0))
    t = p.type_()
    if p.peek().kind != "eof":
        raise ParseError(f"trailing input at offset {p.peek().pos}")
    return t
