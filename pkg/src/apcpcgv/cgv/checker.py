"""Linear type system: term, buffer, and configuration judgments.

`type_term` synthesizes a type and a full derivation tree; the derivation is
what the translation into processes consumes. Context splitting is implicit:
each judgment reports which context entries it used, and the callers check
disjointness. Unused `end` entries are dischargeable anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..names import Label, Name
from . import syntax as G
from .syntax import (Abs, App, Arrow, BufRes, Case, CgvType, ConfSub,
                     Configuration, MLabel, Msg, MTerm, New, PairT, ParC,
                     Prod, Recv, SCase, SelectT, SEnd, SIn, SOut, SSel,
                     Send, SendP, SessionT, Spawn, Split, Sub, Term, Thread,
                     Unit, UnitT, Var, dual_s)

MAIN, CHILD = "main", "child"


class CgvTypeError(Exception):
    def __init__(self, rule: str, msg: str):
        super().__init__(f"[{rule}] {msg}")
        self.rule = rule
        self.msg = msg


@dataclass
class Deriv:
    """One node of a typing derivation."""
    rule: str
    term: object                      # Term | Msg-sequence | Configuration
    type: CgvType | None
    used: frozenset[Name]
    ctx: dict[Name, CgvType]          # the entries visible to this node
    children: list["Deriv"] = field(default_factory=list)
    info: dict = field(default_factory=dict)


def _types_eq(a: CgvType, b: CgvType) -> bool:
    return a == b


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


def type_term(ctx: Mapping[Name, CgvType], m: Term) -> Deriv:
    return _tt(dict(ctx), m)


def _use_of(d: Deriv) -> frozenset[Name]:
    return d.used


def _split(rule: str, left: Deriv, right: Deriv) -> None:
    shared = left.used & right.used
    if shared:
        raise CgvTypeError(rule, f"variables used twice: "
                                 f"{sorted(n.display or str(n.id) for n in shared)}")


def _binder_used(rule: str, d: Deriv, x: Name, t: CgvType) -> None:
    if x not in d.used and not isinstance(t, SEnd):
        raise CgvTypeError(rule, f"binder {x.display or x.id} of type "
                                 f"{G.pretty_cgv_type(t)} is unused")


def _tt(ctx: dict[Name, CgvType], m: Term) -> Deriv:
    match m:
        case Var(n):
            if n in ctx:
                return Deriv("T-Var", m, ctx[n], frozenset({n}), {n: ctx[n]})
            # a variable of closed session type needs no context entry
            return Deriv("T-EndR", m, G.END, frozenset(), {})
        case Unit():
            return Deriv("T-Unit", m, G.UNIT, frozenset(), {})
        case Abs(x, anno, body):
            if anno is None:
                raise CgvTypeError("T-Abs", "unannotated function parameter "
                                            f"{x.display or x.id}")
            d = _tt({**ctx, x: anno}, body)
            _binder_used("T-Abs", d, x, anno)
            used = d.used - {x}
            return Deriv("T-Abs", m, Arrow(anno, d.type), used,
                         {n: ctx[n] for n in used}, [d], {"param": x})
        case App(fun, arg):
            if isinstance(fun, Abs) and fun.anno is None:
                da = _tt(ctx, arg)
                db = _tt({**ctx, fun.param: da.type}, fun.body)
                _binder_used("T-Abs", db, fun.param, da.type)
                dfun = Deriv("T-Abs", fun, Arrow(da.type, db.type),
                             db.used - {fun.param},
                             {n: ctx[n] for n in db.used - {fun.param}},
                             [db], {"param": fun.param})
                _split("T-App", dfun, da)
                used = dfun.used | da.used
                return Deriv("T-App", m, db.type, used,
                             {n: ctx[n] for n in used}, [dfun, da])
            df = _tt(ctx, fun)
            if not isinstance(df.type, Arrow):
                raise CgvTypeError("T-App", f"applying a non-function of type "
                                            f"{G.pretty_cgv_type(df.type)}")
            da = _tt(ctx, arg)
            if not _types_eq(df.type.dom, da.type):
                raise CgvTypeError("T-App", f"argument type "
                                            f"{G.pretty_cgv_type(da.type)} does not match "
                                            f"domain {G.pretty_cgv_type(df.type.dom)}")
            _split("T-App", df, da)
            used = df.used | da.used
            return Deriv("T-App", m, df.type.cod, used,
                         {n: ctx[n] for n in used}, [df, da])
        case PairT(l, r):
            dl, dr = _tt(ctx, l), _tt(ctx, r)
            _split("T-Pair", dl, dr)
            used = dl.used | dr.used
            return Deriv("T-Pair", m, Prod(dl.type, dr.type), used,
                         {n: ctx[n] for n in used}, [dl, dr])
        case Split(x, y, pair, body):
            dp = _tt(ctx, pair)
            if not isinstance(dp.type, Prod):
                raise CgvTypeError("T-Split", f"splitting a non-pair of type "
                                              f"{G.pretty_cgv_type(dp.type)}")
            db = _tt({**ctx, x: dp.type.left, y: dp.type.right}, body)
            _binder_used("T-Split", db, x, dp.type.left)
            _binder_used("T-Split", db, y, dp.type.right)
            db_used = db.used - {x, y}
            fake = Deriv("", m, None, db_used, {})
            _split("T-Split", dp, fake)
            used = dp.used | db_used
            return Deriv("T-Split", m, db.type, used,
                         {n: ctx[n] for n in used}, [dp, db], {"x": x, "y": y})
        case New(s):
            return Deriv("T-New", m, Prod(s, dual_s(s)), frozenset(), {})
        case Spawn(arg):
            da = _tt(ctx, arg)
            if not (isinstance(da.type, Prod) and isinstance(da.type.left, UnitT)):
                raise CgvTypeError("T-Spawn", f"spawn argument must be a pair "
                                              f"1 * T, got {G.pretty_cgv_type(da.type)}")
            return Deriv("T-Spawn", m, da.type.right, da.used,
                         dict(da.ctx), [da])
        case Send(arg):
            da = _tt(ctx, arg)
            t = da.type
            if not (isinstance(t, Prod) and isinstance(t.right, SOut)
                    and _types_eq(t.left, t.right.msg)):
                raise CgvTypeError("T-Send", f"send takes T * !T.S, got "
                                             f"{G.pretty_cgv_type(t)}")
            return Deriv("T-Send", m, t.right.cont, da.used, dict(da.ctx), [da])
        case Recv(arg):
            da = _tt(ctx, arg)
            if not isinstance(da.type, SIn):
                raise CgvTypeError("T-Recv", f"recv needs ?T.S, got "
                                             f"{G.pretty_cgv_type(da.type)}")
            return Deriv("T-Recv", m, Prod(da.type.msg, da.type.cont),
                         da.used, dict(da.ctx), [da])
        case SelectT(label, arg):
            da = _tt(ctx, arg)
            if not isinstance(da.type, SSel):
                raise CgvTypeError("T-Select", f"select needs (+)-type, got "
                                               f"{G.pretty_cgv_type(da.type)}")
            try:
                cont = da.type.arm(label.text)
            except KeyError:
                raise CgvTypeError("T-Select", f"label {label.text} not offered")
            return Deriv("T-Select", m, cont, da.used, dict(da.ctx), [da],
                         {"label": label})
        case Case(arg, arms):
            da = _tt(ctx, arg)
            if not isinstance(da.type, SCase):
                raise CgvTypeError("T-Case", f"case needs (&)-type, got "
                                             f"{G.pretty_cgv_type(da.type)}")
            want = [l for l, _ in da.type.arms]
            have = [l.text for l, _ in arms]
            if want != have:
                raise CgvTypeError("T-Case", f"arm labels {have} do not match "
                                             f"type labels {want}")
            arm_ds = []
            out_t: CgvType | None = None
            used_sets = []
            for (label, body), (_, st) in zip(arms, da.type.arms):
                db = _tt(ctx, body)
                if not (isinstance(db.type, Arrow) and _types_eq(db.type.dom, st)):
                    raise CgvTypeError("T-Case", f"arm {label.text} must be a function "
                                                 f"from {G.pretty_cgv_type(st)}")
                if out_t is None:
                    out_t = db.type.cod
                elif not _types_eq(out_t, db.type.cod):
                    raise CgvTypeError("T-Case", "arms disagree on the result type")
                arm_ds.append(db)
                used_sets.append({n for n in db.used
                                  if not isinstance(ctx.get(n), SEnd)})
            for s in used_sets[1:]:
                if s != used_sets[0]:
                    raise CgvTypeError("T-Case", "arms use different linear variables")
            used = da.used | (arm_ds[0].used if arm_ds else frozenset())
            _split("T-Case", da, Deriv("", m, None, used - da.used, {}))
            return Deriv("T-Case", m, out_t, used,
                         {n: ctx[n] for n in used}, [da] + arm_ds)
        case Sub(body, var, repl):
            dr = _tt(ctx, repl)
            db = _tt({**ctx, var: dr.type}, body)
            _binder_used("T-Sub", db, var, dr.type)
            db_used = db.used - {var}
            fake = Deriv("", m, None, db_used, {})
            _split("T-Sub", dr, fake)
            used = dr.used | db_used
            return Deriv("T-Sub", m, db.type, used,
                         {n: ctx[n] for n in used}, [db, dr], {"var": var})
        case SendP(msg, chan):
            dm = _tt(ctx, msg)
            dc = _tt(ctx, chan)
            if not (isinstance(dc.type, SOut) and _types_eq(dc.type.msg, dm.type)):
                raise CgvTypeError("T-Send'", f"channel of type "
                                              f"{G.pretty_cgv_type(dc.type)} cannot carry "
                                              f"{G.pretty_cgv_type(dm.type)}")
            _split("T-Send'", dm, dc)
            used = dm.used | dc.used
            return Deriv("T-Send'", m, dc.type.cont, used,
                         {n: ctx[n] for n in used}, [dm, dc])
    raise TypeError(m)


# ---------------------------------------------------------------------------
# Buffers
# ---------------------------------------------------------------------------


def type_buffer(ctx: Mapping[Name, CgvType], msgs: tuple[Msg, ...],
                before: SessionT, after: SessionT) -> Deriv:
    """Derive `<msgs> : after > before`, peeling the oldest message (the end
    of the tuple) from the head of `before`."""
    if not msgs:
        if not _types_eq(before, after):
            raise CgvTypeError("T-Buf", f"buffer endpoints disagree: "
                                        f"{G.pretty_cgv_type(before)} vs "
                                        f"{G.pretty_cgv_type(after)}")
        return Deriv("T-Buf", msgs, before, frozenset(), {})
    oldest = msgs[-1]
    rest = msgs[:-1]
    match (oldest, before):
        case (MTerm(term), SOut(msg_t, cont)):
            dm = _tt(dict(ctx), term)
            if not _types_eq(dm.type, msg_t):
                raise CgvTypeError("T-BufSend", f"buffered message has type "
                                                f"{G.pretty_cgv_type(dm.type)}, expected "
                                                f"{G.pretty_cgv_type(msg_t)}")
            dr = type_buffer(ctx, rest, cont, after)
            _split("T-BufSend", dm, dr)
            return Deriv("T-BufSend", msgs, before, dm.used | dr.used,
                         {}, [dm, dr])
        case (MLabel(label), SSel(arms)):
            try:
                cont = before.arm(label.text)
            except KeyError:
                raise CgvTypeError("T-BufSelect", f"label {label.text} not in "
                                                  f"{G.pretty_cgv_type(before)}")
            dr = type_buffer(ctx, rest, cont, after)
            return Deriv("T-BufSelect", msgs, before, dr.used, {}, [dr],
                         {"label": label, "arms": arms})
        case _:
            raise CgvTypeError("T-Buf", f"message does not match protocol head "
                                        f"{G.pretty_cgv_type(before)}")


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------


def type_config(ctx: Mapping[Name, CgvType], c: Configuration) -> Deriv:
    d = _tc(dict(ctx), c)
    return d


def _tc(ctx: dict[Name, CgvType], c: Configuration) -> Deriv:
    match c:
        case Thread(main, term):
            d = _tt(ctx, term)
            if not main and not isinstance(d.type, UnitT):
                raise CgvTypeError("T-Child", f"child thread of type "
                                              f"{G.pretty_cgv_type(d.type)}, must be 1")
            rule = "T-Main" if main else "T-Child"
            out = Deriv(rule, c, d.type, d.used, dict(d.ctx), [d])
            out.info["marker"] = MAIN if main else CHILD
            return out
        case ParC(parts):
            if len(parts) < 2:
                return _tc(ctx, parts[0])
            left = _tc(ctx, parts[0])
            right = _tc(ctx, G.parc(*parts[1:]))
            lm, rm = left.info["marker"], right.info["marker"]
            if lm == MAIN and rm == MAIN:
                raise CgvTypeError("T-Par", "two main threads")
            _split("T-Par", left, right)
            if lm == CHILD:
                rule, marker, ty = "T-ParL", rm, right.type
            else:
                rule, marker, ty = "T-ParR", lm, left.type
            used = left.used | right.used
            out = Deriv(rule, c, ty, used, {n: ctx[n] for n in used}, [left, right])
            out.info["marker"] = marker
            return out
        case BufRes(x, y, buf, body, xt, yt):
            before = dual_s(yt)          # protocol of the writing endpoint
            buf_vars = frozenset()
            for msg in buf:
                if isinstance(msg, MTerm):
                    buf_vars |= G.term_free_vars(msg.term)
            buf_ctx = dict(ctx)
            rule = "T-Res"
            if y in buf_vars:
                rule = "T-ResBuf"
                buf_ctx[y] = yt
            db = type_buffer(buf_ctx, buf, before, xt)
            inner_ctx = {**ctx, x: xt}
            if rule == "T-Res":
                inner_ctx[y] = yt
            dc = _tc(inner_ctx, body)
            body_used = dc.used - {x, y}
            _split(rule, db, Deriv("", c, None, body_used, {}))
            used = (db.used - {x, y}) | body_used
            out = Deriv(rule, c, dc.type, used,
                        {n: ctx[n] for n in used}, [db, dc],
                        {"x": x, "y": y, "x_type": xt, "y_type": yt,
                         "before": before})
            out.info["marker"] = dc.info["marker"]
            return out
        case ConfSub(body, var, repl):
            dr = _tt(ctx, repl)
            db = _tc({**ctx, var: dr.type}, body)
            if var not in db.used and not isinstance(dr.type, SEnd):
                raise CgvTypeError("T-ConfSub", f"substituted variable "
                                                f"{var.display or var.id} unused")
            db_used = db.used - {var}
            _split("T-ConfSub", dr, Deriv("", c, None, db_used, {}))
            used = dr.used | db_used
            out = Deriv("T-ConfSub", c, db.type, used,
                        {n: ctx[n] for n in used}, [db, dr], {"var": var})
            out.info["marker"] = db.info["marker"]
            return out
    raise TypeError(c)


def check_program(term: Term) -> Deriv:
    """Entry for source programs: the main thread, typed in the context of
    its free variables (free variables may only have type end)."""
    return type_config({}, Thread(True, term))
