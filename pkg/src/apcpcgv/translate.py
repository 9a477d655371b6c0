"""Typed translation of the functional language into processes, plus the
operational-correspondence harness and the deadlock-freedom-transfer check.

The translation walks typing derivations. Each clause instantiates the
process type of its target endpoint, threading shared type instances
downward; equalities that the clauses cannot thread syntactically (e.g. a
variable's context instance against a freshly built component) are left to
the checker's equality constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .names import Label, Name, NameSupply
from .apcp import syntax as S
from .apcp import types as T
from .apcp import runtime as R
from .apcp import checker as AC
from .apcp.constraints import PriorityConstraintSet, Unsatisfiable
from .apcp.syntax import (Branch, Fwd, Inact, Input, Output, Par, Process,
                          Res, Select, par)
from .apcp.types import (BULLET, Mu, ParT, Plus, PrioritySupply, SessionType,
                         Tensor, With, dual)
from .cgv import checker as CC
from .cgv import runtime as CR
from .cgv import syntax as G
from .cgv.checker import Deriv
from .cgv.syntax import (Abs, App, Case, CgvType, Configuration, MLabel,
                         MTerm, New, PairT, Prod, Recv, SelectT, Send, SendP,
                         Spawn, Split, Sub, Term, Thread, Unit, Var)

RESULT_ENDPOINT = Name(9_999_999, "z")


@dataclass
class TransResult:
    process: Process
    context: dict[Name, SessionType]
    result_endpoint: Name
    result_type: SessionType
    constraints: PriorityConstraintSet = field(default_factory=PriorityConstraintSet)


class _St:
    def __init__(self, seed: int):
        self.names = NameSupply(10_000_000 + seed * 1_000_000)
        self.prios = PrioritySupply(0)

    def n(self, display: str) -> Name:
        return self.names.fresh(display)


def trans_type(t: CgvType, ps: PrioritySupply) -> SessionType:
    """Translation of types; every connective gets a fresh priority."""
    match t:
        case G.UnitT() | G.SEnd():
            return BULLET
        case Prod(l, r):
            return Tensor(ps.fresh(),
                          ParT(ps.fresh(), trans_type(l, ps), BULLET),
                          ParT(ps.fresh(), trans_type(r, ps), BULLET))
        case G.Arrow(d, c):
            return ParT(ps.fresh(),
                        Tensor(ps.fresh(), dual(trans_type(d, ps)), BULLET),
                        trans_type(c, ps))
        case G.SOut(m, c):
            return ParT(ps.fresh(),
                        Tensor(ps.fresh(), dual(trans_type(m, ps)), BULLET),
                        trans_type(c, ps))
        case G.SIn(m, c):
            return Tensor(ps.fresh(),
                          ParT(ps.fresh(), trans_type(m, ps), BULLET),
                          trans_type(c, ps))
        case G.SSel(arms):
            return With(ps.fresh(), tuple((l, trans_type(a, ps)) for l, a in arms))
        case G.SCase(arms):
            return Plus(ps.fresh(), tuple((l, trans_type(a, ps)) for l, a in arms))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


def _tt_term(d: Deriv, z: Name, zt: SessionType,
             env: dict[Name, SessionType], st: _St) -> Process:
    ps = st.prios
    match d.rule:
        case "T-Var":
            return Fwd(d.term.name, z)
        case "T-EndR" | "T-Unit":
            return Inact()
        case "T-EndL":
            return _tt_term(d.children[0], z, zt, env, st)
        case "T-Abs":
            x = d.info["param"]
            assert isinstance(zt, ParT) and isinstance(zt.left, Tensor)
            d_t, e_u = zt.left.left, zt.right
            a, b = st.n("a"), st.n("b")
            c, e, f = st.n("c"), st.n("e"), st.n("f")
            body = _tt_term(d.children[0], b, e_u, {**env, x: d_t}, st)
            return Input(z, a, b,
                         Res(c, x, par(Res(e, f, Output(a, c, e), anno=BULLET),
                                       body),
                             fwd_enabled=True, anno=dual(d_t)))
        case "T-App":
            dfun, darg = d.children
            e_t = trans_type(dfun.type.dom, ps)
            a_fun = ParT(ps.fresh(), Tensor(ps.fresh(), dual(e_t), BULLET), zt)
            a, b = st.n("a"), st.n("b")
            c, dd, e, f = st.n("c"), st.n("d"), st.n("e"), st.n("f")
            pm = _tt_term(dfun, a, a_fun, env, st)
            pn = _tt_term(darg, e, e_t, env, st)
            return Res(a, b, par(
                pm,
                Res(c, dd, par(Output(b, c, z), Input(dd, e, f, pn)),
                    anno=Tensor(a_fun.left.pr, dual(e_t), BULLET))),
                anno=a_fun)
        case "T-Pair":
            dl, dr = d.children
            assert isinstance(zt, Tensor)
            lw, rw = zt.left, zt.right
            a, b, c, dd = st.n("a"), st.n("b"), st.n("c"), st.n("d")
            e, f, g, h = st.n("e"), st.n("f"), st.n("g"), st.n("h")
            pm = _tt_term(dl, e, lw.left, env, st)
            pn = _tt_term(dr, g, rw.left, env, st)
            return Res(a, b, Res(c, dd, par(
                Output(z, a, c),
                Input(b, e, f, pm),
                Input(dd, g, h, pn)),
                anno=Tensor(rw.pr, dual(rw.left), BULLET)),
                anno=Tensor(lw.pr, dual(lw.left), BULLET))
        case "T-Split":
            dp, db = d.children
            x, y = d.info["x"], d.info["y"]
            e_pair = trans_type(dp.type, ps)
            e_t, e_t2 = e_pair.left.left, e_pair.right.left
            a, b = st.n("a"), st.n("b")
            c, dd = st.n("c"), st.n("d")
            e, f, g, h, k, l = (st.n("e"), st.n("f"), st.n("g"), st.n("h"),
                                st.n("k"), st.n("l"))
            pm = _tt_term(dp, a, e_pair, env, st)
            pn = _tt_term(db, z, zt, {**env, x: dual(e_t), y: dual(e_t2)}, st)
            inner = Res(e, x, Res(f, y, par(
                Res(g, h, Output(c, e, g), anno=BULLET),
                Res(k, l, Output(dd, f, k), anno=BULLET),
                pn), fwd_enabled=True, anno=e_t2),
                fwd_enabled=True, anno=e_t)
            return Res(a, b, par(
                pm, Input(b, c, dd, inner)), anno=e_pair)
        case "T-New":
            assert isinstance(zt, Tensor)
            f1 = zt.left.left
            f2 = zt.right.left
            x, y = st.n("x"), st.n("y")
            a, b, c, dd, e, f = (st.n("a"), st.n("b"), st.n("c"), st.n("d"),
                                 st.n("e"), st.n("f"))
            pair_deriv = Deriv("T-Pair", PairT(Var(x), Var(y)), d.type,
                               frozenset({x, y}), {},
                               [Deriv("T-Var", Var(x), None, frozenset({x}), {}),
                                Deriv("T-Var", Var(y), None, frozenset({y}), {})])
            env2 = {**env, x: dual(f1), y: dual(f2)}
            pair_p = _tt_term(pair_deriv, z, zt, env2, st)
            return Res(a, b, par(
                Res(c, dd, Output(a, c, dd), anno=BULLET),
                Input(b, e, f, Res(x, y, pair_p, anno=dual(f1)))),
                anno=Tensor(ps.fresh(), BULLET, BULLET))
        case "T-Spawn":
            da = d.children[0]
            a_t = Tensor(ps.fresh(), ParT(ps.fresh(), BULLET, BULLET),
                         ParT(ps.fresh(), zt, BULLET))
            a, b = st.n("a"), st.n("b")
            c, dd, e, f, g, h = (st.n("c"), st.n("d"), st.n("e"), st.n("f"),
                                 st.n("g"), st.n("h"))
            pm = _tt_term(da, a, a_t, env, st)
            return Res(a, b, par(
                pm,
                Input(b, c, dd, par(
                    Res(e, f, Output(c, e, f), anno=BULLET),
                    Res(g, h, Output(dd, z, g), anno=BULLET)))),
                anno=a_t)
        case "T-Send":
            da = d.children[0]
            e_t = trans_type(da.type.left, ps)
            e_bang = ParT(ps.fresh(), Tensor(ps.fresh(), dual(e_t), BULLET), zt)
            a_t = Tensor(ps.fresh(), ParT(ps.fresh(), e_t, BULLET),
                         ParT(ps.fresh(), e_bang, BULLET))
            a, b = st.n("a"), st.n("b")
            c, dd = st.n("c"), st.n("d")
            e, f, g, h, k, l = (st.n("e"), st.n("f"), st.n("g"), st.n("h"),
                                st.n("k"), st.n("l"))
            pm = _tt_term(da, a, a_t, env, st)
            return Res(a, b, par(
                pm,
                Input(b, c, dd, Res(e, f, par(
                    Res(g, h, Output(dd, e, g), anno=BULLET),
                    Res(k, l, par(Output(f, c, k), Fwd(l, z)), anno=zt)),
                    anno=e_bang))),
                anno=a_t)
        case "T-Recv":
            da = d.children[0]
            assert isinstance(zt, Tensor)
            e_t, e_s = zt.left.left, zt.right.left
            a_t = Tensor(ps.fresh(), ParT(ps.fresh(), e_t, BULLET), e_s)
            a, b = st.n("a"), st.n("b")
            c, dd, e, f, g, h = (st.n("c"), st.n("d"), st.n("e"), st.n("f"),
                                 st.n("g"), st.n("h"))
            pm = _tt_term(da, a, a_t, env, st)
            return Res(a, b, par(
                pm,
                Input(b, c, dd, Res(e, f, par(
                    Output(z, c, e),
                    Input(f, g, h, Fwd(dd, g))),
                    anno=Tensor(zt.right.pr, dual(e_s), BULLET)))),
                anno=a_t)
        case "T-Select":
            da = d.children[0]
            label: Label = d.info["label"]
            arm_types = {}
            for l, ct in da.type.arms:
                arm_types[l] = zt if l == label.text else trans_type(ct, ps)
            a_t = With(ps.fresh(), tuple(sorted(arm_types.items())))
            a, b, c, dd = st.n("a"), st.n("b"), st.n("c"), st.n("d")
            pm = _tt_term(da, a, a_t, env, st)
            return Res(a, b, par(
                pm,
                Res(c, dd, par(Select(b, c, label), Fwd(dd, z)), anno=zt)),
                anno=a_t)
        case "T-Case":
            da = d.children[0]
            arm_derivs = d.children[1:]
            arm_insts = {l: trans_type(ct, ps) for l, ct in da.type.arms}
            a_t = Plus(ps.fresh(), tuple(sorted(arm_insts.items())))
            a, b, cb = st.n("a"), st.n("b"), st.n("c")
            pm = _tt_term(da, a, a_t, env, st)
            arms = []
            for (label, _), darm in zip(d.term.arms, arm_derivs):
                app_deriv = Deriv(
                    "T-App", App(darm.term, Var(cb)), d.type,
                    darm.used | {cb}, {},
                    [darm, Deriv("T-Var", Var(cb), None, frozenset({cb}), {})])
                env2 = {**env, cb: dual(arm_insts[label.text])}
                arms.append((label, _tt_term(app_deriv, z, zt, env2, st)))
            return Res(a, b, par(pm, Branch(b, cb, tuple(arms))), anno=a_t)
        case "T-Sub":
            db, dr = d.children
            x = d.info["var"]
            e_t = trans_type(dr.type, ps)
            a = st.n("a")
            pm = _tt_term(db, z, zt, {**env, x: dual(e_t)}, st)
            pn = _tt_term(dr, a, e_t, env, st)
            return Res(x, a, par(pm, pn), fwd_enabled=True, anno=dual(e_t))
        case "T-Send'":
            dm, dn = d.children
            e_t = trans_type(dm.type, ps)
            e_bang = ParT(ps.fresh(), Tensor(ps.fresh(), dual(e_t), BULLET), zt)
            a, b = st.n("a"), st.n("b")
            c, dd, e, f, g, h = (st.n("c"), st.n("d"), st.n("e"), st.n("f"),
                                 st.n("g"), st.n("h"))
            pm = _tt_term(dm, c, e_t, env, st)
            pn = _tt_term(dn, e, e_bang, env, st)
            return Res(a, b, par(
                Input(a, c, dd, pm),
                Res(e, f, par(
                    pn,
                    Res(g, h, par(Output(f, b, g), Fwd(h, z)), anno=zt)),
                    anno=e_bang)),
                anno=ParT(e_bang.left.pr, e_t, BULLET))
    raise ValueError(f"untranslatable term rule {d.rule}")


# ---------------------------------------------------------------------------
# Buffers and configurations
# ---------------------------------------------------------------------------


def _tt_buffer(d: Deriv, x: Name, xt: SessionType,
               env: dict[Name, SessionType], st: _St,
               cont) -> Process:
    """`cont(endpoint, endpoint_type)` builds the continuation process that
    interacts with the transmitted session at its final endpoint."""
    ps = st.prios
    match d.rule:
        case "T-Buf":
            return cont(x, xt)
        case "T-BufSend":
            dm, dr = d.children
            assert isinstance(xt, Tensor) and isinstance(xt.left, ParT)
            e_t = xt.left.left
            cont_t = xt.right          # dual of the remaining protocol
            a, b = st.n("a"), st.n("b")
            c, dd = st.n("c"), st.n("d")
            e, f, g, h = st.n("e"), st.n("f"), st.n("g"), st.n("h")
            pm = _tt_term(dm, e, e_t, env, st)
            rest = _tt_buffer(dr, dd, cont_t, env, st, cont)
            return Res(a, b, Res(c, dd, par(
                Res(g, h, par(Fwd(x, g), Output(h, a, c)), anno=dual(xt)),
                Input(b, e, f, pm),
                rest),
                anno=dual(cont_t)),
                anno=Tensor(xt.left.pr, dual(e_t), BULLET))
        case "T-BufSelect":
            dr = d.children[0]
            label: Label = d.info["label"]
            assert isinstance(xt, Plus)
            arm_t = xt.arm(label.text)
            a, b = st.n("a"), st.n("b")
            c, dd = st.n("c"), st.n("d")
            rest = _tt_buffer(dr, b, arm_t, env, st, cont)
            return Res(a, b, par(
                Res(c, dd, par(Fwd(x, c), Select(dd, a, label)), anno=dual(xt)),
                rest),
                anno=dual(arm_t))
    raise ValueError(f"untranslatable buffer rule {d.rule}")


def _tt_conf(d: Deriv, z: Name, zt: SessionType,
             env: dict[Name, SessionType], st: _St) -> Process:
    match d.rule:
        case "T-Main" | "T-Child":
            return _tt_term(d.children[0], z, zt, env, st)
        case "T-ParL":
            dl, dr = d.children
            a, b = st.n("a"), st.n("b")
            pl = _tt_conf(dl, a, BULLET, env, st)
            pr_ = _tt_conf(dr, z, zt, env, st)
            return par(Res(a, b, pl, anno=BULLET), pr_)
        case "T-ParR":
            dl, dr = d.children
            a, b = st.n("a"), st.n("b")
            pl = _tt_conf(dl, z, zt, env, st)
            pr_ = _tt_conf(dr, a, BULLET, env, st)
            return par(pl, Res(a, b, pr_, anno=BULLET))
        case "T-Res" | "T-ResBuf":
            db, dc = d.children
            x, y = d.info["x"], d.info["y"]
            before = d.info["before"]          # protocol of the writing side
            e_s = trans_type(before, st.prios)
            env2 = dict(env)
            env2[y] = e_s                       # reader side: \ol{[[dual S]]}

            def cont(endpoint: Name, endpoint_t: SessionType) -> Process:
                env3 = dict(env2)
                env3[x] = endpoint_t
                inner = _tt_conf(dc, z, zt, env3, st)
                if endpoint != x:
                    inner = S.substitute(inner, {x: endpoint}, st.names)
                return inner

            body = _tt_buffer(db, x, dual(e_s), env2, st, cont)
            return Res(x, y, body, anno=dual(e_s))
        case "T-ConfSub":
            db, dr = d.children
            v = d.info["var"]
            e_t = trans_type(dr.type, st.prios)
            a = st.n("a")
            pb = _tt_conf(db, z, zt, {**env, v: dual(e_t)}, st)
            pr_ = _tt_term(dr, a, e_t, env, st)
            return Res(v, a, par(pb, pr_), fwd_enabled=True, anno=dual(e_t))
    raise ValueError(f"untranslatable configuration rule {d.rule}")


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def translate_term(term: Term, ctx: dict[Name, CgvType] | None = None,
                   seed: int = 0, z: Name = RESULT_ENDPOINT) -> TransResult:
    deriv = CC.type_term(ctx or {}, term)
    return _finish(deriv, _tt_term, ctx or {}, seed, z)


def translate_config(conf: Configuration,
                     ctx: dict[Name, CgvType] | None = None,
                     seed: int = 0, z: Name = RESULT_ENDPOINT) -> TransResult:
    deriv = CC.type_config(ctx or {}, conf)
    return _finish(deriv, _tt_conf, ctx or {}, seed, z)


def _finish(deriv: Deriv, fn, ctx: dict[Name, CgvType], seed: int,
            z: Name) -> TransResult:
    st = _St(seed)
    zt = trans_type(deriv.type, st.prios)
    env = {n: dual(trans_type(t, st.prios)) for n, t in deriv.ctx.items()
           if n in deriv.used}
    proc = fn(deriv, z, zt, env, st)
    context = dict(env)
    context[z] = zt
    return TransResult(proc, context, z, zt)


@dataclass
class DfVerdict:
    satisfiable: bool
    assignment: dict[int, int] | None
    cycle: list | None
    constraints: PriorityConstraintSet
    detail: str = ""


def verify_df(conf: Configuration, seed: int = 0) -> DfVerdict:
    """Deadlock-freedom transfer: translate and decide the priority
    requirements of the full typing discipline."""
    deriv = CC.type_config({}, conf)
    if deriv.info["marker"] != CC.MAIN or not isinstance(deriv.type, G.UnitT):
        raise CC.CgvTypeError("verify", "the configuration must be a closed "
                                        "main program of unit type")
    tr = translate_config(conf, seed=seed)
    dummy = Name(9_999_998, "z2")
    closed = Res(tr.result_endpoint, dummy, tr.process, anno=BULLET)
    res = AC.check(closed, {}, mode="infer")
    if res.error is not None:
        raise AC.CheckError("verify", f"translated process failed to check: "
                                      f"{res.error}")
    if res.unsat is not None:
        return DfVerdict(False, None, res.unsat.cycle, res.constraints,
                         "priority requirements unsatisfiable")
    return DfVerdict(True, res.assignment, None, res.constraints,
                     "priority requirements satisfiable")


# ---------------------------------------------------------------------------
# Operational correspondence
# ---------------------------------------------------------------------------


def _flag_blind_key(p: Process) -> str:
    """State identity for correspondence matching; canonicalization already
    ignores the forwarder-enabled flag."""
    return S.canon_key(p)


@dataclass
class CorrespondenceReport:
    checked: int
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def completeness_check(conf: Configuration, steps: int = 64,
                       search_depth: int = 16,
                       max_search_states: int = 60_000) -> CorrespondenceReport:
    """Each source step C -> D must be matched by translated reductions
    [[C]] ->* [[D]] within the search depth."""
    supply = NameSupply(5_000_000)
    failures: list[str] = []
    checked = 0
    cur = CR.config_normalize(Thread(True, conf.term) if isinstance(conf, Thread)
                              else conf, supply)
    for _ in range(steps):
        rs = CR.config_redexes(cur, supply)
        if not rs:
            break
        rule, nxt = rs[0]
        pc = translate_config(cur).process
        pd = translate_config(nxt).process
        target = _flag_blind_key(pd)
        if not _bfs_standard(pc, target, search_depth, max_search_states):
            failures.append(f"step {rule!r}: translation did not reach the "
                            f"target within depth {search_depth}")
        checked += 1
        cur = nxt
    return CorrespondenceReport(checked, failures)


def _bfs_standard(p: Process, target_key: str, depth: int,
                  max_states: int) -> bool:
    start = S.normal_form(p)
    if _flag_blind_key(start) == target_key:
        return True
    seen = {S.canon_key(start)}
    frontier = [start]
    for _ in range(depth):
        nxt: list[Process] = []
        for q in frontier:
            for _, succ in R.redexes(q, unfold_depth=0):
                k = S.canon_key(succ)
                if k in seen:
                    continue
                seen.add(k)
                if _flag_blind_key(succ) == target_key:
                    return True
                if len(seen) < max_states:
                    nxt.append(succ)
        frontier = nxt
        if not frontier:
            break
    return False


def soundness_check(conf: Configuration, depth: int = 6,
                    cgv_bound: int = 400,
                    chase_depth: int = 24) -> CorrespondenceReport:
    """Every lazily reachable process must continue (lazily) to the
    translation of some reachable source configuration."""
    supply = NameSupply(5_000_000)
    ts = CR.explore_config(conf, max_states=cgv_bound, max_steps=cgv_bound,
                           supply=supply)
    targets = {_flag_blind_key(translate_config(c).process)
               for c in ts.states.values()}

    p0 = S.normal_form(translate_config(CR.config_normalize(conf, supply)).process)
    reached: dict[str, Process] = {S.canon_key(p0): p0}
    frontier = [p0]
    for _ in range(depth):
        nxt = []
        for q in frontier:
            for _, succ in R.lazy_redexes(q, unfold_depth=0):
                k = S.canon_key(succ)
                if k not in reached:
                    reached[k] = succ
                    nxt.append(succ)
        frontier = nxt

    failures = []
    good: set[str] = set()
    for k, q in reached.items():
        if not _lazy_reaches(q, targets, chase_depth, good):
            failures.append(f"lazy state cannot recover a source translation: "
                            f"{S.pretty(q)[:120]}")
    return CorrespondenceReport(len(reached), failures)


def _lazy_reaches(p: Process, targets: set[str], depth: int,
                  good: set[str]) -> bool:
    k0 = S.canon_key(p)
    if _flag_blind_key(p) in targets or k0 in good:
        good.add(k0)
        return True
    seen = {k0}
    frontier = [p]
    trail = [k0]
    for _ in range(depth):
        nxt = []
        for q in frontier:
            for _, succ in R.lazy_redexes(q, unfold_depth=0):
                k = S.canon_key(succ)
                if k in seen:
                    continue
                seen.add(k)
                trail.append(k)
                if _flag_blind_key(succ) in targets or k in good:
                    good.update(trail)
                    return True
                nxt.append(succ)
        frontier = nxt
        if not frontier:
            break
    return False
