"""Terms, runtime terms, types, and configurations of the concurrent
lambda-calculus with asynchronous buffered sessions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from ..names import Label, Name, NameSupply

# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


class CgvType:
    __slots__ = ()


@dataclass(frozen=True)
class UnitT(CgvType):
    def __repr__(self) -> str:
        return "1"


@dataclass(frozen=True)
class Prod(CgvType):
    left: CgvType
    right: CgvType

    def __repr__(self) -> str:
        return f"({self.left!r} * {self.right!r})"


@dataclass(frozen=True)
class Arrow(CgvType):
    dom: CgvType
    cod: CgvType

    def __repr__(self) -> str:
        return f"({self.dom!r} -o {self.cod!r})"


class SessionT(CgvType):
    __slots__ = ()


@dataclass(frozen=True)
class SEnd(SessionT):
    def __repr__(self) -> str:
        return "end"


@dataclass(frozen=True)
class SOut(SessionT):
    msg: CgvType
    cont: SessionT

    def __repr__(self) -> str:
        return f"!{self.msg!r}.{self.cont!r}"


@dataclass(frozen=True)
class SIn(SessionT):
    msg: CgvType
    cont: SessionT

    def __repr__(self) -> str:
        return f"?{self.msg!r}.{self.cont!r}"


@dataclass(frozen=True)
class SSel(SessionT):
    arms: tuple[tuple[str, SessionT], ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("empty selection type")
        object.__setattr__(self, "arms", tuple(sorted(self.arms)))

    def arm(self, label: str) -> SessionT:
        for l, s in self.arms:
            if l == label:
                return s
        raise KeyError(label)

    def __repr__(self) -> str:
        return "(+){" + ",".join(f"{l}:{s!r}" for l, s in self.arms) + "}"


@dataclass(frozen=True)
class SCase(SessionT):
    arms: tuple[tuple[str, SessionT], ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("empty branching type")
        object.__setattr__(self, "arms", tuple(sorted(self.arms)))

    def arm(self, label: str) -> SessionT:
        for l, s in self.arms:
            if l == label:
                return s
        raise KeyError(label)

    def __repr__(self) -> str:
        return "(&){" + ",".join(f"{l}:{s!r}" for l, s in self.arms) + "}"


UNIT = UnitT()
END = SEnd()


def dual_s(s: SessionT) -> SessionT:
    """Only continuations are dualized, never the message payloads."""
    match s:
        case SEnd():
            return s
        case SOut(m, c):
            return SIn(m, dual_s(c))
        case SIn(m, c):
            return SOut(m, dual_s(c))
        case SSel(arms):
            return SCase(tuple((l, dual_s(a)) for l, a in arms))
        case SCase(arms):
            return SSel(tuple((l, dual_s(a)) for l, a in arms))
    raise TypeError(s)


def pretty_cgv_type(t: CgvType) -> str:
    match t:
        case UnitT():
            return "1"
        case SEnd():
            return "end"
        case Prod(a, b):
            return f"({pretty_cgv_type(a)} * {pretty_cgv_type(b)})"
        case Arrow(a, b):
            return f"({pretty_cgv_type(a)} -o {pretty_cgv_type(b)})"
        case SOut(m, c):
            return f"!{pretty_cgv_type(m)}.{pretty_cgv_type(c)}"
        case SIn(m, c):
            return f"?{pretty_cgv_type(m)}.{pretty_cgv_type(c)}"
        case SSel(arms):
            return "(+){" + ", ".join(f"{l}: {pretty_cgv_type(s)}" for l, s in arms) + "}"
        case SCase(arms):
            return "(&){" + ", ".join(f"{l}: {pretty_cgv_type(s)}" for l, s in arms) + "}"
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Terms (source and runtime)
# ---------------------------------------------------------------------------


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: Name


@dataclass(frozen=True)
class Unit(Term):
    pass


@dataclass(frozen=True)
class Abs(Term):
    param: Name
    anno: CgvType | None
    body: Term


@dataclass(frozen=True)
class App(Term):
    fun: Term
    arg: Term


@dataclass(frozen=True)
class PairT(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Split(Term):
    x: Name
    y: Name
    pair: Term
    body: Term


@dataclass(frozen=True)
class New(Term):
    anno: SessionT


@dataclass(frozen=True)
class Spawn(Term):
    arg: Term


@dataclass(frozen=True)
class Send(Term):
    arg: Term


@dataclass(frozen=True)
class Recv(Term):
    arg: Term


@dataclass(frozen=True)
class SelectT(Term):
    label: Label
    arg: Term


@dataclass(frozen=True)
class Case(Term):
    arg: Term
    arms: tuple[tuple[Label, Term], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms",
                           tuple(sorted(self.arms, key=lambda a: a[0].text)))

    def arm(self, label: Label) -> Term:
        for l, t in self.arms:
            if l == label:
                return t
        raise KeyError(label)


@dataclass(frozen=True)
class Sub(Term):
    """Explicit substitution body{repl/var}; runtime only."""
    body: Term
    var: Name
    repl: Term


@dataclass(frozen=True)
class SendP(Term):
    """Half-reduced send; runtime only."""
    msg: Term
    chan: Term


def term_free_vars(t: Term) -> frozenset[Name]:
    cached = t.__dict__.get("_fv")
    if cached is not None:
        return cached
    out = _tfv(t)
    object.__setattr__(t, "_fv", out)
    return out


def _tfv(t: Term) -> frozenset[Name]:
    match t:
        case Var(n):
            return frozenset({n})
        case Unit() | New(_):
            return frozenset()
        case Abs(p, _, b):
            return term_free_vars(b) - {p}
        case App(f, a):
            return term_free_vars(f) | term_free_vars(a)
        case PairT(l, r):
            return term_free_vars(l) | term_free_vars(r)
        case Split(x, y, pair, body):
            return term_free_vars(pair) | (term_free_vars(body) - {x, y})
        case Spawn(a) | Send(a) | Recv(a) | SelectT(_, a):
            return term_free_vars(a)
        case Case(a, arms):
            out = term_free_vars(a)
            for _, b in arms:
                out |= term_free_vars(b)
            return out
        case Sub(body, var, repl):
            return (term_free_vars(body) - {var}) | term_free_vars(repl)
        case SendP(m, c):
            return term_free_vars(m) | term_free_vars(c)
    raise TypeError(t)


def rename_term(t: Term, mapping: dict[Name, Name],
                supply: NameSupply) -> Term:
    """Capture-avoiding renaming of free variables (name for name)."""
    live = {k: v for k, v in mapping.items() if k in term_free_vars(t)}
    if not live:
        return t
    values = set(live.values())

    def fresh_binder(b: Name, m: dict[Name, Name]) -> tuple[Name, dict[Name, Name]]:
        m = dict(m)
        m.pop(b, None)
        if b in values:
            nb = supply.derived(b)
            m[b] = nb
            return nb, m
        return b, m

    match t:
        case Var(n):
            return Var(live.get(n, n))
        case Unit() | New(_):
            return t
        case Abs(p, anno, b):
            p2, m2 = fresh_binder(p, live)
            return Abs(p2, anno, rename_term(b, m2, supply))
        case App(f, a):
            return App(rename_term(f, live, supply), rename_term(a, live, supply))
        case PairT(l, r):
            return PairT(rename_term(l, live, supply), rename_term(r, live, supply))
        case Split(x, y, pair, body):
            x2, m2 = fresh_binder(x, live)
            y2, m2 = fresh_binder(y, m2)
            return Split(x2, y2, rename_term(pair, live, supply),
                         rename_term(body, m2, supply))
        case Spawn(a):
            return Spawn(rename_term(a, live, supply))
        case Send(a):
            return Send(rename_term(a, live, supply))
        case Recv(a):
            return Recv(rename_term(a, live, supply))
        case SelectT(l, a):
            return SelectT(l, rename_term(a, live, supply))
        case Case(a, arms):
            return Case(rename_term(a, live, supply),
                        tuple((l, rename_term(b, live, supply)) for l, b in arms))
        case Sub(body, var, repl):
            var2, m2 = fresh_binder(var, live)
            return Sub(rename_term(body, m2, supply), var2,
                       rename_term(repl, live, supply))
        case SendP(m, c):
            return SendP(rename_term(m, live, supply), rename_term(c, live, supply))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


class Msg:
    __slots__ = ()


@dataclass(frozen=True)
class MTerm(Msg):
    term: Term


@dataclass(frozen=True)
class MLabel(Msg):
    label: Label


class Configuration:
    __slots__ = ()


@dataclass(frozen=True)
class Thread(Configuration):
    main: bool
    term: Term


@dataclass(frozen=True)
class ParC(Configuration):
    parts: tuple[Configuration, ...]


@dataclass(frozen=True)
class BufRes(Configuration):
    """`new x<buf>y . body`; writes on x prepend at index 0, reads on y
    consume from the end. Endpoint type annotations are maintained by the
    reduction rules and checked by the configuration typing."""
    x: Name
    y: Name
    buf: tuple[Msg, ...]
    body: Configuration
    x_type: SessionT = field(compare=False)
    y_type: SessionT = field(compare=False)


@dataclass(frozen=True)
class ConfSub(Configuration):
    body: Configuration
    var: Name
    repl: Term


def conf_free_vars(c: Configuration) -> frozenset[Name]:
    cached = c.__dict__.get("_fv")
    if cached is not None:
        return cached
    out = _cfv(c)
    object.__setattr__(c, "_fv", out)
    return out


def _cfv(c: Configuration) -> frozenset[Name]:
    match c:
        case Thread(_, t):
            return term_free_vars(t)
        case ParC(parts):
            out = frozenset()
            for q in parts:
                out |= conf_free_vars(q)
            return out
        case BufRes(x, y, buf, body):
            out = conf_free_vars(body)
            for m in buf:
                if isinstance(m, MTerm):
                    out |= term_free_vars(m.term)
            return out - {x, y}
        case ConfSub(body, var, repl):
            return (conf_free_vars(body) - {var}) | term_free_vars(repl)
    raise TypeError(c)


def parc(*parts: Configuration) -> Configuration:
    flat: list[Configuration] = []
    for p in parts:
        if isinstance(p, ParC):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return ParC(tuple(flat))


def rename_conf(c: Configuration, mapping: dict[Name, Name],
                supply: NameSupply) -> Configuration:
    live = {k: v for k, v in mapping.items() if k in conf_free_vars(c)}
    if not live:
        return c
    values = set(live.values())
    match c:
        case Thread(main, t):
            return Thread(main, rename_term(t, live, supply))
        case ParC(parts):
            return ParC(tuple(rename_conf(q, live, supply) for q in parts))
        case BufRes(x, y, buf, body, xt, yt):
            m2 = dict(live)
            m2.pop(x, None)
            m2.pop(y, None)
            nx, ny = x, y
            if x in values:
                nx = supply.derived(x)
                m2[x] = nx
            if y in values:
                ny = supply.derived(y)
                m2[y] = ny
            nbuf = tuple(MTerm(rename_term(m.term, live, supply))
                         if isinstance(m, MTerm) else m for m in buf)
            return BufRes(nx, ny, nbuf, rename_conf(body, m2, supply), xt, yt)
        case ConfSub(body, var, repl):
            m2 = dict(live)
            m2.pop(var, None)
            nv = var
            if var in values:
                nv = supply.derived(var)
                m2[var] = nv
            return ConfSub(rename_conf(body, m2, supply), nv,
                           rename_term(repl, live, supply))
    raise TypeError(c)


# ---------------------------------------------------------------------------
# Pretty-printing
# ---------------------------------------------------------------------------


def pp_term(t: Term) -> str:
    match t:
        case Var(n):
            return n.display or f"v{n.id}"
        case Unit():
            return "()"
        case Abs(p, anno, b):
            a = f": {pretty_cgv_type(anno)}" if anno else ""
            return f"(\\{pp_term(Var(p))}{a} . {pp_term(b)})"
        case App(f, a):
            return f"({pp_term(f)} {pp_term(a)})"
        case PairT(l, r):
            return f"({pp_term(l)}, {pp_term(r)})"
        case Split(x, y, pair, body):
            return (f"let ({pp_term(Var(x))},{pp_term(Var(y))}) = {pp_term(pair)} "
                    f"in {pp_term(body)}")
        case New(s):
            return f"new : {pretty_cgv_type(s)}"
        case Spawn(a):
            return f"spawn {pp_term(a)}"
        case Send(a):
            return f"send {pp_term(a)}"
        case Recv(a):
            return f"recv {pp_term(a)}"
        case SelectT(l, a):
            return f"select {l.text} {pp_term(a)}"
        case Case(a, arms):
            inner = ", ".join(f"{l.text}: {pp_term(b)}" for l, b in arms)
            return f"case {pp_term(a)} of {{{inner}}}"
        case Sub(body, var, repl):
            return f"({pp_term(body)}){{{pp_term(repl)}/{pp_term(Var(var))}}}"
        case SendP(m, ch):
            return f"send'({pp_term(m)}, {pp_term(ch)})"
    raise TypeError(t)


def pp_conf(c: Configuration) -> str:
    match c:
        case Thread(main, t):
            return f"{'main' if main else 'child'} {pp_term(t)}"
        case ParC(parts):
            return " || ".join(pp_conf(q) for q in parts)
        case BufRes(x, y, buf, body):
            msgs = ",".join(pp_term(m.term) if isinstance(m, MTerm) else m.label.text
                            for m in buf)
            return (f"new {x.display or x.id}<{msgs}>{y.display or y.id} . "
                    f"({pp_conf(body)})")
        case ConfSub(body, var, repl):
            return f"({pp_conf(body)}){{{pp_term(repl)}/{var.display or var.id}}}"
    raise TypeError(c)


def subterms(t: Term) -> Iterator[Term]:
    yield t
    match t:
        case Abs(_, _, b) | Spawn(b) | Send(b) | Recv(b) | SelectT(_, b):
            yield from subterms(b)
        case App(f, a) | PairT(f, a) | SendP(f, a):
            yield from subterms(f)
            yield from subterms(a)
        case Split(_, _, p, b):
            yield from subterms(p)
            yield from subterms(b)
        case Case(a, arms):
            yield from subterms(a)
            for _, b in arms:
                yield from subterms(b)
        case Sub(b, _, r):
            yield from subterms(b)
            yield from subterms(r)
        case _:
            return
