"""Operational semantics for terms and configurations.

Canonical forms lift explicit substitutions to configuration level and
outward, flush pending sends and selections into their buffers, garbage
collect finished sessions, and order parallel components alpha-invariantly.
The reduction rules then fire on canonical forms.

Thread contexts restrict where spawns, receives, and buffer writes may
happen: the hole must not sit under the *body* of an explicit substitution
(holes inside a substitution's replacement term are fine).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

from ..names import Label, Name, NameSupply
from . import syntax as G
from .syntax import (Abs, App, BufRes, Case, ConfSub, Configuration, MLabel,
                     MTerm, New, PairT, ParC, Recv, SelectT, Send, SendP,
                     SIn, SOut, Split, SSel, Sub, Term, Thread, Unit, Var,
                     conf_free_vars, parc, rename_conf, rename_term,
                     term_free_vars)


@dataclass(frozen=True)
class CgvRedex:
    rule: str
    detail: str = ""

    def __repr__(self) -> str:
        return f"{self.rule}{f'({self.detail})' if self.detail else ''}"


# ---------------------------------------------------------------------------
# Term holes under reduction contexts
# ---------------------------------------------------------------------------

Replace = Callable[[Term], Term]


def term_holes(t: Term, hat: bool = True,
               binders: frozenset[Name] = frozenset()) -> Iterator[
                   tuple[Term, bool, frozenset[Name], Replace]]:
    """All subterm positions reachable through reduction contexts, with the
    hat flag (no substitution-body frame crossed) and the term-level binders
    crossed on the way (always empty: reduction contexts bind nothing)."""
    yield (t, hat, binders, lambda new: new)
    match t:
        case App(f, a):
            for s, h, b, r in term_holes(f, hat, binders):
                yield (s, h, b, lambda new, r=r: App(r(new), a))
        case G.Spawn(arg):
            for s, h, b, r in term_holes(arg, hat, binders):
                yield (s, h, b, lambda new, r=r: G.Spawn(r(new)))
        case Send(arg):
            for s, h, b, r in term_holes(arg, hat, binders):
                yield (s, h, b, lambda new, r=r: Send(r(new)))
        case Recv(arg):
            for s, h, b, r in term_holes(arg, hat, binders):
                yield (s, h, b, lambda new, r=r: Recv(r(new)))
        case SelectT(l, arg):
            for s, h, b, r in term_holes(arg, hat, binders):
                yield (s, h, b, lambda new, r=r, l=l: SelectT(l, r(new)))
        case Case(arg, arms):
            for s, h, b, r in term_holes(arg, hat, binders):
                yield (s, h, b, lambda new, r=r, arms=arms: Case(r(new), arms))
        case Split(x, y, pair, body):
            for s, h, b, r in term_holes(pair, hat, binders):
                yield (s, h, b,
                       lambda new, r=r: Split(x, y, r(new), body))
        case Sub(body, var, repl):
            for s, h, b, r in term_holes(body, False, binders):
                yield (s, h, b, lambda new, r=r: Sub(r(new), var, repl))
            for s, h, b, r in term_holes(repl, hat, binders):
                yield (s, h, b, lambda new, r=r: Sub(body, var, r(new)))
        case SendP(msg, chan):
            for s, h, b, r in term_holes(chan, hat, binders):
                yield (s, h, b, lambda new, r=r, msg=msg: SendP(msg, r(new)))
        case _:
            return


def term_redexes(t: Term, supply: NameSupply | None = None) -> list[tuple[CgvRedex, Term]]:
    """Pure term reductions under reduction contexts."""
    supply = supply or NameSupply(1_500_000)
    out: list[tuple[CgvRedex, Term]] = []
    for sub, _hat, _b, rep in term_holes(t):
        fired = _term_axiom(sub, supply)
        if fired is not None:
            rule, new = fired
            out.append((rule, rep(new)))
    return out


def _term_axiom(t: Term, supply: NameSupply) -> tuple[CgvRedex, Term] | None:
    match t:
        case App(Abs(x, _, body), arg):
            return (CgvRedex("E-Lam"), Sub(body, x, arg))
        case Split(x, y, PairT(m1, m2), body):
            return (CgvRedex("E-Pair"), Sub(Sub(body, x, m1), y, m2))
        case Sub(body, var, Var(y)):
            return (CgvRedex("E-SubstName"), rename_term(body, {var: y}, supply))
        case Sub(Var(x), var, repl) if x == var:
            return (CgvRedex("E-NameSubst"), repl)
        case Send(PairT(m, n)):
            return (CgvRedex("E-Send"), SendP(m, n))
    return None


# ---------------------------------------------------------------------------
# Components and configuration holes
# ---------------------------------------------------------------------------

ConfReplace = Callable[[Configuration], Configuration]


def components(c: Configuration, through_bufs: bool = True) -> Iterator[
        tuple[Configuration, frozenset[Name], ConfReplace]]:
    """Thread / ConfSub components reachable through parallel composition
    (and, optionally, buffered restrictions), with the restriction binders
    crossed and a replacement function."""
    match c:
        case ParC(parts):
            for i, q in enumerate(parts):
                for comp, crossed, rep in components(q, through_bufs):
                    def mk(new: Configuration, i=i, rep=rep, parts=parts) -> Configuration:
                        out = list(parts)
                        out[i] = rep(new)
                        return parc(*out)
                    yield (comp, crossed, mk)
        case BufRes(x, y, buf, body, xt, yt) if through_bufs:
            for comp, crossed, rep in components(body, through_bufs):
                yield (comp, crossed | {x, y},
                       lambda new, rep=rep: BufRes(x, y, buf, rep(new), xt, yt))
        case Thread() | ConfSub():
            yield (c, frozenset(), lambda new: new)
        case _:
            return


def comp_term_holes(comp: Configuration) -> Iterator[
        tuple[Term, bool, Callable[[Term], Configuration]]]:
    """Term positions inside a component that thread contexts can reach:
    directly in a thread's term, or in the replacement slot of a
    configuration-level substitution."""
    match comp:
        case Thread(main, term):
            for s, h, _b, rep in term_holes(term):
                yield (s, h, lambda new, rep=rep: Thread(main, rep(new)))
        case ConfSub(body, var, repl):
            for s, h, _b, rep in term_holes(repl):
                yield (s, h,
                       lambda new, rep=rep: ConfSub(body, var, rep(new)))
        case _:
            return


# ---------------------------------------------------------------------------
# Canonicalization
# ---------------------------------------------------------------------------


def _hoist_subs(term: Term) -> tuple[Term, list[tuple[Name, Term]]]:
    """Pull explicit substitutions that sit on a hat path out of the term,
    innermost first; they become configuration-level substitutions."""
    lifted: list[tuple[Name, Term]] = []

    def pull(t: Term) -> Term:
        for s, h, _b, rep in term_holes(t):
            if h and isinstance(s, Sub):
                lifted.append((s.var, s.repl))
                return pull(rep(s.body))
        return t

    return pull(term), lifted


def _normalize_pass(c: Configuration, supply: NameSupply) -> Configuration:
    match c:
        case Thread(main, term):
            term2, lifted = _hoist_subs(term)
            out: Configuration = Thread(main, term2)
            # later-lifted substitutions were syntactically inner: wrap them
            # first so that outer substitutions keep scope over inner terms
            for var, repl in reversed(lifted):
                out = ConfSub(out, var, repl)
            return out
        case ParC(parts):
            return parc(*[_normalize_pass(q, supply) for q in parts])
        case ConfSub(body, var, repl):
            return ConfSub(_normalize_pass(body, supply), var, repl)
        case BufRes(x, y, buf, body, xt, yt):
            body = _normalize_pass(body, supply)
            # extrude configuration substitutions whose term does not touch
            # the restricted endpoints
            changed = True
            while changed:
                changed = False
                for comp, crossed, rep in components(body, through_bufs=False):
                    if comp is body:
                        continue
                    if isinstance(comp, ConfSub) and not (
                            {x, y} & term_free_vars(comp.repl)):
                        body = ConfSub(rep(comp.body), comp.var, comp.repl)
                        changed = True
                        break
            stack = []
            inner = body
            while (isinstance(inner, ConfSub)
                   and not ({x, y} & term_free_vars(inner.repl))):
                stack.append((inner.var, inner.repl))
                inner = inner.body
            out2: Configuration = BufRes(x, y, buf, inner, xt, yt)
            for var, repl in reversed(stack):
                out2 = ConfSub(out2, var, repl)
            return out2
    raise TypeError(c)


def _flush_pass(c: Configuration) -> Configuration | None:
    """One buffer write (send' with a hat path, select with any path)."""
    match c:
        case ParC(parts):
            for i, q in enumerate(parts):
                r = _flush_pass(q)
                if r is not None:
                    out = list(parts)
                    out[i] = r
                    return parc(*out)
            return None
        case ConfSub(body, var, repl):
            r = _flush_pass(body)
            return None if r is None else ConfSub(r, var, repl)
        case BufRes(x, y, buf, body, xt, yt):
            # writes land on the first endpoint; an empty buffer may first be
            # swapped so that either endpoint can start writing
            orientations = [(x, y, xt, yt)]
            if not buf:
                orientations.append((y, x, yt, xt))
            for wx, wy, wxt, wyt in orientations:
                for comp, crossed, rep in components(body):
                    for s, h, mk in comp_term_holes(comp):
                        if (h and isinstance(s, SendP) and isinstance(s.chan, Var)
                                and s.chan.name == wx
                                and not (term_free_vars(s.msg) & crossed)
                                and isinstance(wxt, SOut)):
                            nb = (MTerm(s.msg),) + buf
                            return BufRes(wx, wy, nb, rep(mk(Var(wx))),
                                          wxt.cont, wyt)
                        if (isinstance(s, SelectT) and isinstance(s.arg, Var)
                                and s.arg.name == wx and isinstance(wxt, SSel)):
                            nb = (MLabel(s.label),) + buf
                            return BufRes(wx, wy, nb, rep(mk(Var(wx))),
                                          wxt.arm(s.label.text), wyt)
            r = _flush_pass(body)
            return None if r is None else BufRes(x, y, buf, r, xt, yt)
        case _:
            return None


def _gc_pass(c: Configuration) -> Configuration:
    match c:
        case ParC(parts):
            kept = [_gc_pass(q) for q in parts]
            kept = [q for q in kept
                    if not (isinstance(q, Thread) and not q.main
                            and isinstance(q.term, Unit))]
            if not kept:
                return Thread(False, Unit())
            return parc(*kept)
        case ConfSub(body, var, repl):
            return ConfSub(_gc_pass(body), var, repl)
        case BufRes(x, y, buf, body, xt, yt):
            body = _gc_pass(body)
            if not buf and x not in conf_free_vars(body) and y not in conf_free_vars(body):
                return body
            return BufRes(x, y, buf, body, xt, yt)
        case _:
            return c


# -- alpha-invariant serialization ------------------------------------------


def _ck_term(t: Term, env: dict[Name, int], counter: list[int], out: list[str]) -> None:
    def nm(n: Name) -> str:
        i = env.get(n)
        return f"b{i}" if i is not None else f"f{n.id}"

    def bind(*names: Name) -> dict[Name, int]:
        e2 = dict(env)
        for n in names:
            e2[n] = counter[0]
            counter[0] += 1
        return e2

    match t:
        case Var(n):
            out.append(nm(n))
        case Unit():
            out.append("u")
        case Abs(p, _, b):
            out.append("L(")
            _ck_term(b, bind(p), counter, out)
            out.append(")")
        case App(f, a):
            out.append("A(")
            _ck_term(f, env, counter, out)
            out.append(",")
            _ck_term(a, env, counter, out)
            out.append(")")
        case PairT(l, r):
            out.append("P(")
            _ck_term(l, env, counter, out)
            out.append(",")
            _ck_term(r, env, counter, out)
            out.append(")")
        case Split(x, y, pair, body):
            out.append("S(")
            _ck_term(pair, env, counter, out)
            out.append(",")
            _ck_term(body, bind(x, y), counter, out)
            out.append(")")
        case New(s):
            out.append(f"N[{G.pretty_cgv_type(s)}]")
        case G.Spawn(a):
            out.append("W(")
            _ck_term(a, env, counter, out)
            out.append(")")
        case Send(a):
            out.append("snd(")
            _ck_term(a, env, counter, out)
            out.append(")")
        case Recv(a):
            out.append("rcv(")
            _ck_term(a, env, counter, out)
            out.append(")")
        case SelectT(l, a):
            out.append(f"sel[{l.text}](")
            _ck_term(a, env, counter, out)
            out.append(")")
        case Case(a, arms):
            out.append("cas(")
            _ck_term(a, env, counter, out)
            for l, b in arms:
                out.append(f",{l.text}:")
                _ck_term(b, env, counter, out)
            out.append(")")
        case Sub(body, var, repl):
            out.append("X(")
            _ck_term(body, bind(var), counter, out)
            out.append(",")
            _ck_term(repl, env, counter, out)
            out.append(")")
        case SendP(m, ch):
            out.append("sp(")
            _ck_term(m, env, counter, out)
            out.append(",")
            _ck_term(ch, env, counter, out)
            out.append(")")
        case _:
            raise TypeError(t)


def _ck_conf(c: Configuration, env: dict[Name, int], counter: list[int],
             out: list[str]) -> None:
    match c:
        case Thread(main, t):
            out.append("M(" if main else "C(")
            _ck_term(t, env, counter, out)
            out.append(")")
        case ParC(parts):
            segs = []
            for q in parts:
                sub: list[str] = []
                _ck_conf(q, env, [counter[0]], sub)
                segs.append("".join(sub))
            segs.sort()
            out.append("||(" + ",".join(segs) + ")")
        case BufRes(x, y, buf, body):
            e2 = dict(env)
            e2[x] = counter[0]
            e2[y] = counter[0] + 1
            counter[0] += 2
            out.append("R(")
            for m in buf:
                if isinstance(m, MTerm):
                    _ck_term(m.term, e2, counter, out)
                else:
                    out.append(f"#{m.label.text}")
                out.append(";")
            out.append("|")
            _ck_conf(body, e2, counter, out)
            out.append(")")
        case ConfSub(body, var, repl):
            e2 = dict(env)
            e2[var] = counter[0]
            counter[0] += 1
            out.append("CS(")
            _ck_conf(body, e2, counter, out)
            out.append(",")
            _ck_term(repl, env, counter, out)
            out.append(")")
        case _:
            raise TypeError(c)


def conf_key(c: Configuration) -> str:
    cached = c.__dict__.get("_ck")
    if cached is not None:
        return cached
    out: list[str] = []
    _ck_conf(c, {}, [0], out)
    key = "".join(out)
    object.__setattr__(c, "_ck", key)
    return key


def _sort_pass(c: Configuration) -> Configuration:
    """Deterministic ordering of parallel components and orientation of
    empty buffers (the swap congruence)."""
    match c:
        case ParC(parts):
            done = [_sort_pass(q) for q in parts]
            done.sort(key=conf_key)
            return ParC(tuple(done))
        case ConfSub(body, var, repl):
            return ConfSub(_sort_pass(body), var, repl)
        case BufRes(x, y, buf, body, xt, yt):
            body = _sort_pass(body)
            if not buf:
                k1 = conf_key(BufRes(x, y, buf, body, xt, yt))
                k2 = conf_key(BufRes(y, x, buf, body, yt, xt))
                if k2 < k1:
                    return BufRes(y, x, buf, body, yt, xt)
            return BufRes(x, y, buf, body, xt, yt)
        case _:
            return c


def config_normalize(c: Configuration,
                     supply: NameSupply | None = None) -> Configuration:
    """Canonical form: substitutions lifted, buffers flushed, garbage
    collected, components ordered."""
    supply = supply or NameSupply(2_000_000)
    cur = c
    for _ in range(50):
        before = conf_key(cur)
        cur = _normalize_pass(cur, supply)
        flushed = _flush_pass(cur)
        while flushed is not None:
            cur = flushed
            flushed = _flush_pass(cur)
        cur = _gc_pass(cur)
        cur = _sort_pass(cur)
        if conf_key(cur) == before:
            break
    return cur


# ---------------------------------------------------------------------------
# Configuration reduction
# ---------------------------------------------------------------------------


def config_redexes(c: Configuration, supply: NameSupply | None = None,
                   ) -> list[tuple[CgvRedex, Configuration]]:
    supply = supply or NameSupply(3_000_000)
    base = config_normalize(c, supply)
    out: list[tuple[CgvRedex, Configuration]] = []
    seen: set[str] = set()

    def emit(rule: CgvRedex, conf: Configuration) -> None:
        n = config_normalize(conf, supply)
        k = rule.rule + "::" + conf_key(n)
        if k not in seen:
            seen.add(k)
            out.append((rule, n))

    # global component walk (any configuration context)
    def walk(node: Configuration, rep: ConfReplace) -> None:
        match node:
            case ParC(parts):
                for i, q in enumerate(parts):
                    def mk(new: Configuration, i=i, parts=parts) -> Configuration:
                        o = list(parts)
                        o[i] = new
                        return parc(*o)
                    walk(q, lambda new, mk=mk, rep=rep: rep(mk(new)))
            case ConfSub(body, var, repl):
                walk(body, lambda new, rep=rep: rep(ConfSub(new, var, repl)))
                _comp_rules(node, rep)
            case BufRes(x, y, buf, body, xt, yt):
                _buffer_rules(node, rep)
                walk(body, lambda new, rep=rep: rep(
                    BufRes(x, y, buf, new, xt, yt)))
            case Thread():
                _comp_rules(node, rep)

    def _comp_rules(comp: Configuration, rep: ConfReplace) -> None:
        # configuration-level substitution closures of the name rules
        if isinstance(comp, ConfSub):
            if isinstance(comp.repl, Var):
                emit(CgvRedex("E-SubstName"),
                     rep(rename_conf(comp.body, {comp.var: comp.repl.name}, supply)))
            else:
                # the substituted variable sits at a reduction position of
                # some inner component: plug the term there
                for inner, _crossed, crep in components(comp.body):
                    for s, _h, mk in comp_term_holes(inner):
                        if isinstance(s, Var) and s.name == comp.var:
                            emit(CgvRedex("E-NameSubst"),
                                 rep(crep(mk(comp.repl))))
        for s, h, mk in comp_term_holes(comp):
            fired = _term_axiom(s, supply)
            if fired is not None:
                rule, new = fired
                emit(rule, rep(mk(new)))
            if isinstance(s, New):
                x = supply.fresh("x")
                y = supply.fresh("y")
                emit(CgvRedex("E-New"),
                     rep(BufRes(x, y, (), mk(PairT(Var(x), Var(y))),
                                s.anno, G.dual_s(s.anno))))
            if h and isinstance(s, G.Spawn) and isinstance(s.arg, PairT):
                child = Thread(False, s.arg.left)
                emit(CgvRedex("E-Spawn"), rep(parc(mk(s.arg.right), child)))

    def _buffer_rules(node: BufRes, rep: ConfReplace) -> None:
        x, y, buf, body, xt, yt = (node.x, node.y, node.buf, node.body,
                                   node.x_type, node.y_type)
        if not buf:
            return
        oldest = buf[-1]
        for comp, crossed, crep in components(body):
            for s, h, mk in comp_term_holes(comp):
                if (h and isinstance(s, Recv) and isinstance(s.arg, Var)
                        and s.arg.name == y and isinstance(oldest, MTerm)
                        and isinstance(yt, SIn)
                        and not (term_free_vars(oldest.term) & crossed)):
                    nb = BufRes(x, y, buf[:-1],
                                crep(mk(PairT(oldest.term, Var(y)))),
                                xt, yt.cont)
                    emit(CgvRedex("E-Recv"), rep(nb))
                if (isinstance(s, Case) and isinstance(s.arg, Var)
                        and s.arg.name == y and isinstance(oldest, MLabel)
                        and isinstance(yt, G.SCase)):
                    try:
                        arm = s.arm(oldest.label)
                    except KeyError:
                        continue
                    nb = BufRes(x, y, buf[:-1],
                                crep(mk(App(arm, Var(y)))),
                                xt, yt.arm(oldest.label.text))
                    emit(CgvRedex("E-Case"), rep(nb))

    walk(base, lambda new: new)
    return out


def run_config(c: Configuration, max_steps: int = 400,
               supply: NameSupply | None = None,
               ) -> tuple[Configuration, list[CgvRedex]]:
    supply = supply or NameSupply(3_000_000)
    cur = config_normalize(c, supply)
    trace: list[CgvRedex] = []
    for _ in range(max_steps):
        rs = config_redexes(cur, supply)
        if not rs:
            break
        rule, cur = rs[0]
        trace.append(rule)
    return cur, trace


@dataclass
class ConfTransitionSystem:
    states: dict[str, Configuration]
    edges: set[tuple[str, str, str]]
    initial: str
    truncated: bool

    def terminal_keys(self) -> list[str]:
        outgoing = {f for f, _, _ in self.edges}
        return [k for k in self.states if k not in outgoing]


def explore_config(c: Configuration, max_states: int = 2000,
                   max_steps: int = 200,
                   supply: NameSupply | None = None) -> ConfTransitionSystem:
    supply = supply or NameSupply(3_000_000)
    c0 = config_normalize(c, supply)
    k0 = conf_key(c0)
    states = {k0: c0}
    edges: set[tuple[str, str, str]] = set()
    truncated = False
    frontier = [k0]
    depth = 0
    while frontier:
        depth += 1
        if depth > max_steps:
            truncated = True
            break
        nxt: list[str] = []
        for k in frontier:
            for rule, succ in config_redexes(states[k], supply):
                sk = conf_key(succ)
                if sk not in states:
                    if len(states) >= max_states:
                        truncated = True
                        continue
                    states[sk] = succ
                    nxt.append(sk)
                edges.add((k, rule.rule, sk))
        frontier = nxt
    return ConfTransitionSystem(states, edges, k0, truncated)


def is_terminal_main_unit(c: Configuration) -> bool:
    n = config_normalize(c)
    return isinstance(n, Thread) and n.main and isinstance(n.term, Unit)
