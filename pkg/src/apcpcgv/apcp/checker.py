"""Typing for processes: judgment `P |- Omega; Gamma` with three modes.

* ``check``: every priority concrete; side conditions evaluated directly.
* ``infer``: `_` priorities become fresh variables, side conditions become
  constraints, solved by the difference-graph solver.
* ``star``: priority side conditions erased; duality still forces equal
  annotations (symbolic ones are unified by equality constraints).

Checking works scope by scope: each restriction level is decomposed into a
"soup" of parallel atoms plus locally bound pairs. Types propagate from
annotations and from discharged actions through pair duality, which makes
the admissible typing of sugared (bound) outputs and selections emerge
without special-casing the desugared pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..names import Label, Name, NameSupply, RecVar
from . import syntax as S
from . import types as T
from .constraints import Constraint, PriorityConstraintSet, Unsatisfiable, solve
from .parser import HOLE
from .syntax import (Branch, Call, Fwd, Inact, Input, Output, Par, Process,
                     Rec, Res, Select)
from .types import (Bullet, Mu, ParT, Plus, Priority, PrioritySupply,
                    SessionType, Tensor, TVar, With, dual, pr, prmax)


class CheckError(Exception):
    def __init__(self, rule: str, msg: str):
        super().__init__(f"[{rule}] {msg}")
        self.rule = rule
        self.msg = msg


@dataclass
class CheckResult:
    ok: bool
    constraints: PriorityConstraintSet
    solved_types: dict[Name, SessionType] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    assignment: dict[int, int] | None = None
    unsat: Unsatisfiable | None = None
    error: CheckError | None = None


@dataclass
class TypingContext:
    gamma: dict[Name, SessionType] = field(default_factory=dict)
    omega: dict[RecVar, tuple[SessionType, ...]] = field(default_factory=dict)


def solve_constraints(cs: PriorityConstraintSet,
                      lifter_ids: set[int] | None = None):
    """Decide a constraint set; returns an assignment or `Unsatisfiable`."""
    return solve(cs, lifter_ids or set())


# ---------------------------------------------------------------------------
# The checker
# ---------------------------------------------------------------------------


@dataclass
class _Obligation:
    body: Process
    gamma_names: frozenset[Name]        # outer names consumed into the body
    binders: dict[Name, SessionType]    # fresh assignments from the prefix
    subject_pr: Priority | None         # side condition priority, if any
    rule: str
    bullets_only: bool = False          # outer names must have closed type
    omega_add: tuple[RecVar, tuple[SessionType, ...]] | None = None


class _Run:
    def __init__(self, mode: str, psupply: PrioritySupply):
        assert mode in ("check", "infer", "star")
        self.mode = mode
        self.ps = psupply
        self.cs = PriorityConstraintSet()
        self.diags: list[str] = []

    # -- type plumbing ------------------------------------------------------

    def prep(self, t: SessionType, where: str) -> SessionType:
        """Fill `_` holes per mode; reject them in concrete mode."""
        def f(p: Priority) -> Priority:
            if p == HOLE:
                if self.mode == "check":
                    raise CheckError("priority",
                                     f"unresolved `_` priority in {where}; use --infer")
                return self.ps.fresh()
            return p
        return T.map_priorities(t, f)

    def eq_pr(self, a: Priority, b: Priority, note: str) -> None:
        if a == b:
            return
        if a.omega or b.omega:
            if a.omega != b.omega:
                raise CheckError(note, "omega priority against finite priority")
            return
        if a.is_concrete and b.is_concrete:
            if a.value() != b.value():
                raise CheckError(note, f"priority mismatch {a} != {b}")
            return
        self.cs.add_equal(a, b, note)

    def require_equal(self, a: SessionType, b: SessionType, note: str) -> None:
        self._eq(T.canonical_type(a), T.canonical_type(b), note)

    def _eq(self, a: SessionType, b: SessionType, note: str) -> None:
        match (a, b):
            case (Bullet(), Bullet()):
                return
            case (TVar(x), TVar(y)):
                if x != y:
                    raise CheckError(note, f"type variable mismatch {x} != {y}")
            case (Tensor(p1, a1, b1), Tensor(p2, a2, b2)) | (ParT(p1, a1, b1), ParT(p2, a2, b2)):
                self.eq_pr(p1, p2, note)
                self._eq(a1, a2, note)
                self._eq(b1, b2, note)
            case (Plus(p1, arms1), Plus(p2, arms2)) | (With(p1, arms1), With(p2, arms2)):
                self.eq_pr(p1, p2, note)
                if [l for l, _ in arms1] != [l for l, _ in arms2]:
                    raise CheckError(note, "label sets differ")
                for (_, x), (_, y) in zip(arms1, arms2):
                    self._eq(x, y, note)
            case (Mu(_, b1), Mu(_, b2)):
                self._eq(b1, b2, note)  # canonical renaming already applied
            case _:
                raise CheckError(
                    note, f"type mismatch: {T.pretty_type(a)} vs {T.pretty_type(b)}")

    def require_dual(self, a: SessionType, b: SessionType, note: str) -> None:
        self.require_equal(a, dual(b), note)

    def unfold_amount(self, m: Mu) -> Priority:
        """Lift amount for an on-demand unfolding of a recursive type."""
        if self.mode == "star":
            return T.concrete(0)
        terms = list(T.priority_terms(m.body))
        if all(t.is_concrete for t in terms):
            return T.concrete(max([t.value() for t in terms], default=0) + 1)
        lt = self.ps.fresh_lifter()
        lid = lt.lifters[0]
        for t in terms:
            self.cs.add_lifter_bound(lid, t)
        return lt

    def force_connective(self, t: SessionType, want, who: str) -> SessionType:
        """Auto-unfold recursive types until the wanted connective appears."""
        for _ in range(8):
            if isinstance(t, want):
                return t
            if isinstance(t, Mu):
                self.diags.append(f"Fold: unfolding type of {who}")
                t = T.unfold_type(self.unfold_amount(t), t)
                continue
            break
        raise CheckError(
            want.__name__, f"{who} has type {T.pretty_type(t)}, "
            f"expected {want.__name__.lower()}-shaped")

    # -- core recursion -------------------------------------------------------

    def check_process(self, p: Process, gamma: dict[Name, SessionType],
                      omega: dict[RecVar, tuple[SessionType, ...]]) -> None:
        pairs: list[S._PairInfo] = []
        atoms: list[Process] = []
        _decompose(p, pairs, atoms)

        types: dict[Name, SessionType] = dict(gamma)
        partner: dict[Name, Name] = {}
        for pi in pairs:
            if pi.left in types or pi.right in types:
                raise CheckError("Cycle", f"restricted name {pi.left!r}/{pi.right!r} "
                                          "shadows an outer name")
            partner[pi.left] = pi.right
            partner[pi.right] = pi.left
            if pi.anno is not None:
                anno = self.prep(pi.anno, f"restriction {pi.left!r}")
                types[pi.left] = anno
                types[pi.right] = dual(anno)

        local = {pi.left for pi in pairs} | {pi.right for pi in pairs}
        consumed: dict[Name, int] = {}

        def consume(n: Name, idx: int) -> None:
            if n in consumed and consumed[n] != idx:
                raise CheckError("linear",
                                 f"endpoint {n!r} used by two parallel processes")
            consumed[n] = idx

        def assign(n: Name, t: SessionType, note: str) -> None:
            if n in types:
                self.require_equal(types[n], t, note)
                return
            types[n] = t
            m = partner.get(n)
            if m is not None and m not in types:
                types[m] = dual(t)

        obligations: list[_Obligation] = []
        pending = list(enumerate(atoms))
        for idx, a in pending:
            for n in S.free_names(a):
                consume(n, idx)

        progress = True
        while pending and progress:
            progress = False
            still: list[tuple[int, Process]] = []
            for idx, a in pending:
                if self._try_atom(a, types, omega, assign, obligations):
                    progress = True
                else:
                    still.append((idx, a))
            pending = still
        if pending:
            subj = _subject_of(pending[0][1])
            raise CheckError("infer",
                             f"cannot determine the type of {subj!r}; "
                             "annotate the restriction that binds it")

        # linearity: everything known must be consumed, bullets discharge freely
        for n, t in types.items():
            if n not in consumed:
                tt = t
                if isinstance(tt, Mu):
                    pass
                if not isinstance(tt, Bullet):
                    raise CheckError("linear",
                                     f"endpoint {n!r}: {T.pretty_type(t)} is never used")
        for n in local:
            if n not in types:
                types[n] = T.BULLET  # unused restricted pair, typable at end

        # deferred bodies
        for ob in obligations:
            sub_gamma: dict[Name, SessionType] = {}
            for n in ob.gamma_names:
                if n not in types:
                    raise CheckError("infer", f"type of {n!r} undetermined")
                sub_gamma[n] = types[n]
            if ob.bullets_only:
                for n in ob.gamma_names:
                    if not isinstance(types[n], Bullet):
                        raise CheckError(
                            "Rec", f"endpoint {n!r} crosses a recursive definition "
                                   f"with non-closed type {T.pretty_type(types[n])}")
            if ob.subject_pr is not None and self.mode != "star":
                for n, t in sub_gamma.items():
                    q = pr(t)
                    if q.omega:
                        continue
                    if ob.subject_pr.is_concrete and q.is_concrete:
                        if not ob.subject_pr.value() < q.value():
                            raise CheckError(
                                ob.rule,
                                f"priority {ob.subject_pr} not below pr({n!r}) = {q}")
                        continue
                    if self.mode == "check":
                        raise CheckError(ob.rule, "symbolic priority in check mode")
                    self.cs.add_strict(ob.subject_pr, q, ob.rule)
            sub_gamma.update(ob.binders)
            sub_omega = omega
            if ob.omega_add is not None:
                sub_omega = dict(omega)
                sub_omega[ob.omega_add[0]] = ob.omega_add[1]
            self.check_process(ob.body, sub_gamma, sub_omega)

    def _try_atom(self, a: Process, types: dict[Name, SessionType],
                  omega: dict[RecVar, tuple[SessionType, ...]],
                  assign, obligations: list[_Obligation]) -> bool:
        match a:
            case Inact():
                return True
            case Res():
                obligations.append(_Obligation(a, S.free_names(a), {}, None, "Cycle"))
                return True
            case Fwd(x, y):
                tx, ty = types.get(x), types.get(y)
                if tx is None and ty is None:
                    return False
                if tx is not None and ty is not None:
                    self.require_dual(tx, ty, "Id")
                elif tx is not None:
                    assign(y, dual(tx), "Id")
                else:
                    assign(x, dual(ty), "Id")
                return True
            case Output(x, m, c):
                tx = types.get(x)
                if tx is None:
                    return False
                tx = self.force_connective(tx, Tensor, f"output subject {x!r}")
                assign(m, dual(tx.left), "Tensor")
                assign(c, dual(tx.right), "Tensor")
                return True
            case Select(x, c, label):
                tx = types.get(x)
                if tx is None:
                    return False
                tx = self.force_connective(tx, Plus, f"selection subject {x!r}")
                try:
                    arm = tx.arm(label.text)
                except KeyError:
                    raise CheckError("Plus", f"label {label.text} not offered by "
                                             f"{T.pretty_type(tx)}")
                assign(c, dual(arm), "Plus")
                return True
            case Input(x, mb, cb, body):
                tx = types.get(x)
                if tx is None:
                    return False
                tx = self.force_connective(tx, ParT, f"input subject {x!r}")
                ctx = S.free_names(body) - {mb, cb}
                obligations.append(_Obligation(
                    body, frozenset(ctx), {mb: tx.left, cb: tx.right}, tx.pr, "Par"))
                return True
            case Branch(x, cb, arms):
                tx = types.get(x)
                if tx is None:
                    return False
                tx = self.force_connective(tx, With, f"branching subject {x!r}")
                have = [l.text for l, _ in arms]
                want = [l for l, _ in tx.arms]
                if have != want:
                    raise CheckError("With", f"branch labels {have} do not match "
                                             f"type labels {want}")
                for (label, arm_body), (_, arm_t) in zip(arms, tx.arms):
                    ctx = S.free_names(arm_body) - {cb}
                    obligations.append(_Obligation(
                        arm_body, frozenset(ctx), {cb: arm_t}, tx.pr,
                        f"With/{label.text}"))
                return True
            case Rec(var, params, body, lifter):
                ptypes = []
                for n in params:
                    t = types.get(n)
                    if t is None:
                        return False
                    ptypes.append(t)
                self._rec_atom(a, var, params, tuple(ptypes), body, lifter,
                               types, obligations)
                return True
            case Call(var, args):
                tup = omega.get(var)
                if tup is None:
                    raise CheckError("Var", f"unbound recursion variable {var!r}")
                if len(args) != len(tup):
                    raise CheckError("Var", f"call arity {len(args)} != {len(tup)}")
                atypes = []
                for n in args:
                    t = types.get(n)
                    if t is None:
                        return False
                    atypes.append(t)
                self._var_atom(args, tuple(atypes), tup)
                return True
        raise TypeError(a)

    def _rec_atom(self, whole: Process, var: RecVar, params: tuple[Name, ...],
                  ptypes: tuple[SessionType, ...], body: Process,
                  lifter: int | None, types, obligations) -> None:
        mus: list[Mu] = []
        for n, t in zip(params, ptypes):
            if not isinstance(t, Mu):
                raise CheckError("Rec", f"recursion parameter {n!r} has "
                                        f"non-recursive type {T.pretty_type(t)}")
            mus.append(t)
        if not S.is_contractive(whole):
            raise CheckError("Rec", "non-contractive recursion")
        bodies = tuple(T.canonical_type(m.body) for m in mus)
        terms = [q for m in mus for q in T.priority_terms(m.body)]
        if lifter is not None:
            t_lift: Priority = T.concrete(lifter)
            for q in terms:
                if q.is_concrete and q.value() >= lifter:
                    raise CheckError("Rec", f"annotated lifter {lifter} not above "
                                            f"top priority {q.value()}")
        elif all(q.is_concrete for q in terms):
            t_lift = T.concrete(max([q.value() for q in terms], default=0) + 1)
        else:
            if self.mode == "check":
                raise CheckError("Rec", "symbolic priorities in check mode")
            t_lift = self.ps.fresh_lifter() if self.mode == "infer" else T.concrete(0)
            if t_lift.lifters:
                for q in terms:
                    self.cs.add_lifter_bound(t_lift.lifters[0], q)
        unfolded = {n: T.unfold_type(t_lift, m) for n, m in zip(params, mus)}
        extras = S.free_names(body) - set(params)
        obligations.append(_Obligation(
            body, frozenset(extras), dict(unfolded), None, "Rec",
            bullets_only=True, omega_add=(var, bodies)))

    def _var_atom(self, args: tuple[Name, ...], atypes: tuple[SessionType, ...],
                  tup: tuple[SessionType, ...]) -> None:
        lift_t: Priority | None = None
        for n, t, base in zip(args, atypes, tup):
            if not isinstance(t, Mu):
                raise CheckError("Var", f"call argument {n!r} has non-recursive "
                                        f"type {T.pretty_type(t)}")
            cand = self._match_lift(T.canonical_type(t.body), base)
            if lift_t is None:
                lift_t = cand
            elif cand is not None:
                self.eq_pr(lift_t, cand, "Var")
        if lift_t is None:
            lift_t = T.concrete(0)
        for n, t, base in zip(args, atypes, tup):
            self.require_equal(t.body, T.lift(lift_t, base), "Var")

    def _match_lift(self, u: SessionType, a: SessionType) -> Priority | None:
        """First-connective lift candidate such that u ~ lift(t, a)."""
        pu, pa = pr(u), pr(a)
        if pu.omega or pa.omega:
            match (u, a):
                case (Tensor(_, x1, y1), Tensor(_, x2, y2)) | \
                     (ParT(_, x1, y1), ParT(_, x2, y2)):
                    return self._match_lift(x1, x2) or self._match_lift(y1, y2)
                case (Plus(_, arms1), Plus(_, arms2)) | (With(_, arms1), With(_, arms2)):
                    for (_, x), (_, y) in zip(arms1, arms2):
                        c = self._match_lift(x, y)
                        if c is not None:
                            return c
                case (Mu(_, b1), Mu(_, b2)):
                    return self._match_lift(b1, b2)
            return None
        if pu.is_concrete and pa.is_concrete:
            d = pu.value() - pa.value()
            if d < 0:
                raise CheckError("Var", "context type below the recursion's type")
            return T.concrete(d)
        # symbolic: t = pu - pa when pa's parts are contained in pu's
        if pu.base == pa.base and set(pa.lifters) <= set(pu.lifters):
            rest = list(pu.lifters)
            for x in pa.lifters:
                rest.remove(x)
            off = pu.offset - pa.offset
            if off >= 0:
                return Priority(None, tuple(rest), off)
        return None


def _decompose(p: Process, pairs: list, atoms: list[Process]) -> None:
    match p:
        case Par(parts):
            for q in parts:
                _decompose(q, pairs, atoms)
        case Res(a, b, body, fe, an):
            pairs.append(S._PairInfo(a, b, fe, an))
            _decompose(body, pairs, atoms)
        case Inact():
            pass
        case _:
            atoms.append(p)


def _subject_of(p: Process) -> Name | None:
    match p:
        case Output(x, _, _) | Input(x, _, _, _) | Select(x, _, _) | Branch(x, _, _):
            return x
        case Fwd(x, _):
            return x
        case Rec(_, params, _):
            return params[0] if params else None
        case Call(_, args):
            return args[0] if args else None
    return None


def check(p: Process, ctx: TypingContext | Mapping[Name, SessionType] | None = None,
          mode: str = "check",
          psupply: PrioritySupply | None = None) -> CheckResult:
    """Type-check a process. `ctx` must cover the free names of `p`."""
    if isinstance(ctx, TypingContext):
        gamma, omega = dict(ctx.gamma), dict(ctx.omega)
    else:
        gamma, omega = dict(ctx or {}), {}
    ps = psupply or PrioritySupply()
    run = _Run(mode, ps)

    result = CheckResult(ok=False, constraints=run.cs)
    try:
        if not S.is_contractive(p):
            raise CheckError("Rec", "non-contractive recursion")
        missing = S.free_names(p) - set(gamma)
        if missing:
            raise CheckError("context", f"free names not covered: "
                                        f"{sorted(repr(n) for n in missing)}")
        gamma = {n: run.prep(t, f"context entry {n!r}") for n, t in gamma.items()}
        run.check_process(p, gamma, omega)
    except CheckError as e:
        result.diagnostics = run.diags + [str(e)]
        result.error = e
        return result

    result.diagnostics = run.diags
    outcome = solve(run.cs, ps.lifter_ids)
    if isinstance(outcome, Unsatisfiable):
        result.unsat = outcome
        result.diagnostics.append(repr(outcome))
        return result
    result.assignment = outcome
    sigma = outcome

    def inst(q: Priority) -> Priority:
        if q.omega or q.is_concrete:
            return q
        v = q.offset
        if q.base is not None:
            v += sigma.get(q.base, 0)
        for l in q.lifters:
            v += sigma.get(l, 0)
        return T.concrete(v)

    if mode != "star":
        result.solved_types = {n: T.map_priorities(t, inst) for n, t in gamma.items()}
    else:
        result.solved_types = dict(gamma)
    result.ok = True
    return result


def check_star(p: Process, ctx=None, psupply: PrioritySupply | None = None) -> CheckResult:
    """The judgment with priority checks erased (duality still applies)."""
    return check(p, ctx, mode="star", psupply=psupply)


# ---------------------------------------------------------------------------
# Equality of contexts up to (un)folding of recursive types
# ---------------------------------------------------------------------------


def _ast_depth(p: Process) -> int:
    match p:
        case Input(_, _, _, b) | Res(_, _, b) | Rec(_, _, b):
            return 1 + _ast_depth(b)
        case Branch(_, _, arms):
            return 1 + max((_ast_depth(q) for _, q in arms), default=0)
        case Par(parts):
            return 1 + max((_ast_depth(q) for q in parts), default=0)
        case _:
            return 1


def _first_mu_at_tail(a: Mu, b: SessionType) -> int | None:
    """Derive the lift forced by priority offsets when matching b against an
    unfolding of a: find a tail position holding the loop variable in a's
    body and read the corresponding recursive type's priority in b."""
    base = pr(a.body)

    def walk(t: SessionType, u: SessionType) -> int | None:
        match (t, u):
            case (TVar(v), Mu(_, inner)) if v == a.var:
                q = pr(inner)
                if q.is_concrete and base.is_concrete:
                    return q.value() - base.value()
                return 0
            case (Tensor(_, _, t2), Tensor(_, _, u2)) | (ParT(_, _, t2), ParT(_, _, u2)):
                return walk(t2, u2)
            case (Plus(_, arms1), Plus(_, arms2)) | (With(_, arms1), With(_, arms2)):
                for (_, x), (_, y) in zip(arms1, arms2):
                    r = walk(x, y)
                    if r is not None:
                        return r
        return None

    return walk(a.body, b)


def _eq_upto(a: SessionType, b: SessionType, depth: int) -> bool:
    a, b = T.canonical_type(a), T.canonical_type(b)
    if a == b:
        return True
    if depth <= 0:
        return False
    if isinstance(a, Mu) and not isinstance(b, Mu):
        t = _first_mu_at_tail(a, b)
        if t is not None and t >= 0:
            return _eq_upto(T.unfold_type(t, a), b, depth - 1)
        return False
    if isinstance(b, Mu) and not isinstance(a, Mu):
        return _eq_upto(b, a, depth)
    match (a, b):
        case (Mu(_, b1), Mu(_, b2)):
            return _eq_upto(b1, b2, depth - 1)
        case (Tensor(p1, a1, c1), Tensor(p2, a2, c2)) | (ParT(p1, a1, c1), ParT(p2, a2, c2)):
            return p1 == p2 and _eq_upto(a1, a2, depth - 1) and _eq_upto(c1, c2, depth - 1)
        case (Plus(p1, arms1), Plus(p2, arms2)) | (With(p1, arms1), With(p2, arms2)):
            if p1 != p2 or [l for l, _ in arms1] != [l for l, _ in arms2]:
                return False
            return all(_eq_upto(x, y, depth - 1)
                       for (_, x), (_, y) in zip(arms1, arms2))
    return False


def types_equal_up_to_unfolding(p: Process, g1: Mapping[Name, SessionType],
                                g2: Mapping[Name, SessionType]) -> bool:
    """Both contexts must type `p`; they are related when they agree up to
    consistent (un)folding of recursive types."""
    if set(g1) != set(g2):
        return False
    depth = _ast_depth(p) + 2
    return all(_eq_upto(g1[n], g2[n], depth) for n in g1)


# ---------------------------------------------------------------------------
# Characteristic processes
# ---------------------------------------------------------------------------


def characteristic_process(a: SessionType, x: Name,
                           supply: NameSupply | None = None) -> Process:
    """A canonical inhabitant of `x: a`; check(chr, {x: a}) succeeds."""
    supply = supply or NameSupply(x.id + 1)
    if T.free_tvars(a):
        raise CheckError("chr", f"free type variable in {T.pretty_type(a)}")
    rec_env: dict[str, RecVar] = {}

    def go(t: SessionType, n: Name) -> Process:
        match t:
            case Bullet():
                return Inact()
            case Tensor(_, left, right):
                y = supply.fresh("y")
                return S.desugar_bound_output(
                    n, y, S.par(go(left, y), go(right, n)), supply)
            case ParT(_, left, right):
                y = supply.fresh("y")
                return S.desugar_sugar_input(
                    n, y, S.par(go(left, y), go(right, n)), supply)
            case Plus(_, arms):
                label, arm = arms[0]
                return S.desugar_bound_select(n, Label(label), go(arm, n), supply)
            case With(_, arms):
                return S.desugar_sugar_branch(
                    n, [(Label(l), go(q, n)) for l, q in arms], supply)
            case Mu(var, body):
                rv = supply.fresh_rec(var)
                outer = rec_env.get(var)
                rec_env[var] = rv
                try:
                    return Rec(rv, (n,), go(body, n))
                finally:
                    if outer is None:
                        del rec_env[var]
                    else:
                        rec_env[var] = outer
            case TVar(var):
                return Call(rec_env[var], (n,))
        raise TypeError(t)

    return go(T.canonical_type(a), x)
