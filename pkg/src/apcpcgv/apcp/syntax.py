"""Process AST for the asynchronous priority-typed session pi-calculus.

Processes are immutable. Structural congruence is handled by a normalization
pass (`normal_form`) that flattens parallel composition, prunes inert
restrictions and forwarders, minimizes restriction scopes, and orders
subterms by an alpha-invariant structural key. Recursion unfolding is *not*
part of normalization; the runtime unfolds on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping

from ..names import Label, Name, NameSupply, RecVar

# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class Process:
    """Base class; all constructors are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class Inact(Process):
    def __repr__(self) -> str:
        return "0"


@dataclass(frozen=True)
class Output(Process):
    subj: Name
    msg: Name
    cont: Name

    def __repr__(self) -> str:
        return f"{self.subj!r}[{self.msg!r},{self.cont!r}]"


@dataclass(frozen=True)
class Input(Process):
    subj: Name
    msg_bind: Name
    cont_bind: Name
    body: Process

    def __repr__(self) -> str:
        return f"{self.subj!r}({self.msg_bind!r},{self.cont_bind!r}).{self.body!r}"


@dataclass(frozen=True)
class Select(Process):
    subj: Name
    cont: Name
    label: Label

    def __repr__(self) -> str:
        return f"{self.subj!r}[{self.cont!r}]<{self.label!r}"


@dataclass(frozen=True)
class Branch(Process):
    subj: Name
    cont_bind: Name
    arms: tuple[tuple[Label, Process], ...]  # sorted by label text

    def __post_init__(self) -> None:
        texts = [l.text for l, _ in self.arms]
        if len(set(texts)) != len(texts):
            raise ValueError("duplicate branch labels")
        object.__setattr__(self, "arms", tuple(sorted(self.arms, key=lambda a: a[0].text)))

    def arm(self, label: Label) -> Process:
        for l, p in self.arms:
            if l == label:
                return p
        raise KeyError(label)

    def __repr__(self) -> str:
        inner = ", ".join(f"{l!r}: {p!r}" for l, p in self.arms)
        return f"{self.subj!r}({self.cont_bind!r})>{{{inner}}}"


@dataclass(frozen=True)
class Res(Process):
    left: Name
    right: Name
    body: Process
    fwd_enabled: bool = False
    anno: Any = field(default=None, compare=False)  # SessionType of `left`, optional

    def __repr__(self) -> str:
        nu = "new^" if self.fwd_enabled else "new"
        return f"{nu} {self.left!r} {self.right!r}.({self.body!r})"


@dataclass(frozen=True)
class Par(Process):
    parts: tuple[Process, ...]

    def __repr__(self) -> str:
        return " | ".join(repr(p) for p in self.parts)


@dataclass(frozen=True)
class Fwd(Process):
    left: Name
    right: Name

    def __repr__(self) -> str:
        return f"fwd {self.left!r} {self.right!r}"


@dataclass(frozen=True)
class Rec(Process):
    var: RecVar
    params: tuple[Name, ...]
    body: Process
    lifter: int | None = field(default=None, compare=False)  # `rec[t]` annotation

    def __repr__(self) -> str:
        ps = ",".join(repr(p) for p in self.params)
        return f"rec {self.var!r}({ps}).{self.body!r}"


@dataclass(frozen=True)
class Call(Process):
    var: RecVar
    args: tuple[Name, ...]

    def __repr__(self) -> str:
        return f"{self.var!r}<{','.join(repr(a) for a in self.args)}>"


def par(*parts: Process) -> Process:
    """Smart parallel constructor: flattens and drops units."""
    flat: list[Process] = []
    for p in parts:
        if isinstance(p, Par):
            flat.extend(p.parts)
        elif not isinstance(p, Inact):
            flat.append(p)
    if not flat:
        return Inact()
    if len(flat) == 1:
        return flat[0]
    return Par(tuple(flat))


# ---------------------------------------------------------------------------
# Free names / recursion variables
# ---------------------------------------------------------------------------


def free_names(p: Process) -> frozenset[Name]:
    cached = p.__dict__.get("_fn")
    if cached is not None:
        return cached
    out = _free_names(p)
    object.__setattr__(p, "_fn", out)
    return out


def _fnt(p: Process) -> tuple[Name, ...]:
    """Free names as a sorted tuple (cached; used for memo keys)."""
    cached = p.__dict__.get("_fnt")
    if cached is not None:
        return cached
    out = tuple(sorted(free_names(p), key=lambda n: n.id))
    object.__setattr__(p, "_fnt", out)
    return out


def _free_names(p: Process) -> frozenset[Name]:
    match p:
        case Inact():
            return frozenset()
        case Output(s, m, c):
            return frozenset((s, m, c))
        case Input(s, mb, cb, body):
            return (free_names(body) - {mb, cb}) | {s}
        case Select(s, c, _):
            return frozenset((s, c))
        case Branch(s, cb, arms):
            out = frozenset({s})
            for _, q in arms:
                out |= free_names(q) - {cb}
            return out
        case Res(a, b, body):
            return free_names(body) - {a, b}
        case Par(parts):
            out = frozenset()
            for q in parts:
                out |= free_names(q)
            return out
        case Fwd(a, b):
            return frozenset((a, b))
        case Rec(_, params, body):
            return free_names(body) | frozenset(params)
        case Call(_, args):
            return frozenset(args)
    raise TypeError(p)


def free_recvars(p: Process) -> frozenset[RecVar]:
    cached = p.__dict__.get("_frv")
    if cached is not None:
        return cached
    out = _free_recvars(p)
    object.__setattr__(p, "_frv", out)
    return out


def _free_recvars(p: Process) -> frozenset[RecVar]:
    match p:
        case Input(_, _, _, body) | Res(_, _, body):
            return free_recvars(body)
        case Branch(_, _, arms):
            out = frozenset()
            for _, q in arms:
                out |= free_recvars(q)
            return out
        case Par(parts):
            out = frozenset()
            for q in parts:
                out |= free_recvars(q)
            return out
        case Rec(var, _, body):
            return free_recvars(body) - {var}
        case Call(var, _):
            return frozenset({var})
        case _:
            return frozenset()


# ---------------------------------------------------------------------------
# Capture-avoiding substitution
# ---------------------------------------------------------------------------


def _sub_name(n: Name, m: Mapping[Name, Name]) -> Name:
    return m.get(n, n)


def substitute(p: Process, mapping: Mapping[Name, Name],
               supply: NameSupply | None = None) -> Process:
    """Simultaneous capture-avoiding renaming of free names."""
    if not mapping:
        return p
    supply = supply or _default_supply()
    return _sub(p, dict(mapping), supply)


_SUPPLY_SINGLETON: NameSupply | None = None


def _default_supply() -> NameSupply:
    global _SUPPLY_SINGLETON
    if _SUPPLY_SINGLETON is None:
        from ..names import GLOBAL_SUPPLY

        _SUPPLY_SINGLETON = GLOBAL_SUPPLY
    return _SUPPLY_SINGLETON


def _refresh_binders(binders: Iterable[Name], body_map: dict[Name, Name],
                     values: set[Name], supply: NameSupply) -> tuple[list[Name], dict[Name, Name]]:
    """Remove shadowed entries; refresh binders that would capture a value."""
    out_binders: list[Name] = []
    extra: dict[Name, Name] = {}
    for b in binders:
        body_map.pop(b, None)
        if b in values:
            nb = supply.derived(b)
            extra[b] = nb
            out_binders.append(nb)
        else:
            out_binders.append(b)
    body_map.update(extra)
    return out_binders, body_map


def _sub(p: Process, m: dict[Name, Name], supply: NameSupply) -> Process:
    live = {k: v for k, v in m.items() if k in free_names(p)}
    if not live:
        return p
    values = set(live.values())
    match p:
        case Output(s, msg, c):
            return Output(_sub_name(s, live), _sub_name(msg, live), _sub_name(c, live))
        case Select(s, c, l):
            return Select(_sub_name(s, live), _sub_name(c, live), l)
        case Fwd(a, b):
            return Fwd(_sub_name(a, live), _sub_name(b, live))
        case Input(s, mb, cb, body):
            (mb2, cb2), bm = _refresh_binders((mb, cb), dict(live), values, supply)
            return Input(_sub_name(s, live), mb2, cb2, _sub(body, bm, supply))
        case Branch(s, cb, arms):
            (cb2,), bm = _refresh_binders((cb,), dict(live), values, supply)
            return Branch(_sub_name(s, live), cb2,
                          tuple((l, _sub(q, bm, supply)) for l, q in arms))
        case Res(a, b, body, fwd_e, anno):
            (a2, b2), bm = _refresh_binders((a, b), dict(live), values, supply)
            return Res(a2, b2, _sub(body, bm, supply), fwd_e, anno)
        case Par(parts):
            return Par(tuple(_sub(q, live, supply) for q in parts))
        case Rec(var, params, body, lifter):
            return Rec(var, tuple(_sub_name(n, live) for n in params),
                       _sub(body, live, supply), lifter)
        case Call(var, args):
            return Call(var, tuple(_sub_name(a, live) for a in args))
        case Inact():
            return p
    raise TypeError(p)


# ---------------------------------------------------------------------------
# Alpha equivalence (pure renaming, no structural normalization)
# ---------------------------------------------------------------------------


def _alpha_ser(p: Process, env: dict[Name, int], renv: dict[RecVar, int],
               out: list[str], counter: list[int], sym_fwd: bool = False) -> None:
    def nm(n: Name) -> str:
        i = env.get(n)
        return f"b{i}" if i is not None else f"f{n.id}"

    def bind(names: tuple[Name, ...]) -> list[tuple[Name, int | None]]:
        undo = []
        for n in names:
            undo.append((n, env.get(n)))
            env[n] = counter[0]
            counter[0] += 1
        return undo

    def unbind(undo) -> None:
        for n, old in reversed(undo):
            if old is None:
                env.pop(n, None)
            else:
                env[n] = old

    match p:
        case Inact():
            out.append("0")
        case Output(s, m, c):
            out.append(f"out({nm(s)},{nm(m)},{nm(c)})")
        case Select(s, c, l):
            out.append(f"sel({nm(s)},{nm(c)},{l.text})")
        case Fwd(a, b):
            ka, kb = nm(a), nm(b)
            if sym_fwd and kb < ka:
                ka, kb = kb, ka
            out.append(f"fwd({ka},{kb})")
        case Input(s, mb, cb, body):
            out.append(f"in({nm(s)},")
            u = bind((mb, cb))
            _alpha_ser(body, env, renv, out, counter, sym_fwd)
            unbind(u)
            out.append(")")
        case Branch(s, cb, arms):
            out.append(f"bra({nm(s)},")
            for l, q in arms:
                out.append(f"{l.text}:")
                u = bind((cb,))
                _alpha_ser(q, env, renv, out, counter, sym_fwd)
                unbind(u)
            out.append(")")
        case Res(a, b, body):
            # the forwarder-enabled flag is canonicalization-irrelevant
            out.append("res(")
            u = bind((a, b))
            _alpha_ser(body, env, renv, out, counter, sym_fwd)
            unbind(u)
            out.append(")")
        case Par(parts):
            out.append("par(")
            for q in parts:
                _alpha_ser(q, env, renv, out, counter, sym_fwd)
                out.append(",")
            out.append(")")
        case Rec(var, params, body):
            old = renv.get(var)
            renv[var] = counter[0]
            counter[0] += 1
            out.append(f"rec({','.join(nm(n) for n in params)};")
            _alpha_ser(body, env, renv, out, counter, sym_fwd)
            if old is None:
                renv.pop(var, None)
            else:
                renv[var] = old
            out.append(")")
        case Call(var, args):
            i = renv.get(var, -1)
            out.append(f"call(X{i},{','.join(nm(a) for a in args)})")
        case _:
            raise TypeError(p)


def alpha_key(p: Process) -> str:
    out: list[str] = []
    _alpha_ser(p, {}, {}, out, [0])
    return "".join(out)


def alpha_eq(p: Process, q: Process) -> bool:
    """Identity of canonical-renaming normal forms (pure alpha, no congruence)."""
    return alpha_key(p) == alpha_key(q)


# ---------------------------------------------------------------------------
# Recursion unfolding (one step of the congruence rule)
# ---------------------------------------------------------------------------


def unfold_rec(p: Process, supply: NameSupply | None = None) -> Process:
    """Replace every call of the loop variable in the body by a copy of the
    loop, substituting the call's arguments for the parameters."""
    if not isinstance(p, Rec):
        raise TypeError("unfold_rec expects a recursive loop")
    supply = supply or _default_supply()
    loop_var, params, body = p.var, p.params, p.body

    def expand(q: Process) -> Process:
        match q:
            case Call(var, args) if var == loop_var:
                if len(args) != len(params):
                    raise ValueError(
                        f"recursive call arity {len(args)} != definition arity {len(params)}")
                inner = _sub(body, dict(zip(params, args)), supply)
                # fresh binders: the copy must not share binder ids with the
                # original body (ids are globally unique)
                return canonical_rename(Rec(loop_var, args, inner, p.lifter), supply)
            case Input(s, mb, cb, b):
                return Input(s, mb, cb, expand(b))
            case Branch(s, cb, arms):
                return Branch(s, cb, tuple((l, expand(a)) for l, a in arms))
            case Res(a, b, bd, fe, an):
                return Res(a, b, expand(bd), fe, an)
            case Par(parts):
                return Par(tuple(expand(x) for x in parts))
            case Rec(var, ps, bd, lf):
                if var == loop_var:  # shadowing: inner binder wins
                    return q
                return Rec(var, ps, expand(bd), lf)
            case _:
                return q

    return expand(body)


def is_contractive(p: Process) -> bool:
    """No chain of recursive definitions whose body is immediately a call of
    one of the chain's variables; any other constructor guards the call."""

    def check(q: Process, pending: frozenset[RecVar]) -> bool:
        match q:
            case Rec(var, _, body):
                return check(body, pending | {var})
            case Call(var, _):
                return var not in pending
            case Input(_, _, _, body) | Res(_, _, body):
                return check(body, frozenset())
            case Branch(_, _, arms):
                return all(check(a, frozenset()) for _, a in arms)
            case Par(parts):
                return all(check(x, frozenset()) for x in parts)
            case _:
                return True

    return check(p, frozenset())


# ---------------------------------------------------------------------------
# Structural normalization and canonical ordering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _PairInfo:
    left: Name
    right: Name
    fwd_enabled: bool
    anno: Any


def _collect_soup(p: Process, pairs: list[_PairInfo], atoms: list[Process]) -> None:
    """Scope extrusion to a flat soup: hoist every restriction reachable
    through parallel composition; normalize prefix atoms internally."""
    match p:
        case Par(parts):
            for q in parts:
                _collect_soup(q, pairs, atoms)
        case Res(a, b, body, fe, an):
            pairs.append(_PairInfo(a, b, fe, an))
            _collect_soup(body, pairs, atoms)
        case Inact():
            pass
        case Input(s, mb, cb, body):
            atoms.append(Input(s, mb, cb, _structure(body)))
        case Branch(s, cb, arms):
            atoms.append(Branch(s, cb, tuple((l, _structure(a)) for l, a in arms)))
        case Rec(var, params, body, lifter):
            atoms.append(Rec(var, params, _structure(body), lifter))
        case _:
            atoms.append(p)


_STRUCT_MEMO: dict = {}
_STRUCT_KEEP: list = []


def _structure(p: Process) -> Process:
    """Flatten/prune pass: associativity, units, dead restrictions, closed
    forwarders, and canonical scope minimization. Names are kept intact."""
    hit = _STRUCT_MEMO.get(id(p))
    if hit is not None:
        return hit
    pairs: list[_PairInfo] = []
    atoms: list[Process] = []
    _collect_soup(p, pairs, atoms)
    if not pairs and len(atoms) == 1 and not isinstance(p, (Par, Res)):
        out = atoms[0]
    else:
        out = _rebuild_soup(pairs, atoms)
    if len(_STRUCT_MEMO) > 100_000:
        _STRUCT_MEMO.clear()
        _STRUCT_KEEP.clear()
    _STRUCT_MEMO[id(p)] = out
    _STRUCT_KEEP.append(p)
    _STRUCT_KEEP.append(out)
    return out


def _rebuild_soup(pairs: list[_PairInfo], atoms: list[Process]) -> Process:
    alive: dict[int, Process] = dict(enumerate(atoms))
    fn_of: dict[int, frozenset[Name]] = {i: free_names(a) for i, a in alive.items()}
    next_id = len(atoms)
    users: dict[int, set[int]] = {}
    for pi, pr in enumerate(pairs):
        names = {pr.left, pr.right}
        users[pi] = {i for i, fn in fn_of.items() if names & fn}
    live_pairs = set(range(len(pairs)))

    # prune dead pairs and closed forwarders until stable
    changed = True
    while changed:
        changed = False
        for pi in sorted(live_pairs):
            pr = pairs[pi]
            us = users[pi]
            if not us:
                live_pairs.discard(pi)
                changed = True
                continue
            if len(us) == 1:
                j = next(iter(us))
                a = alive.get(j)
                if (isinstance(a, Fwd)
                        and {a.left, a.right} == {pr.left, pr.right}):
                    del alive[j], fn_of[j]
                    for other in live_pairs:
                        users[other].discard(j)
                    live_pairs.discard(pi)
                    changed = True

    # push restrictions inward, smallest user-set first, deterministically;
    # atoms keep their internal normal forms, so no re-normalization is needed
    while True:
        eligible = [pi for pi in live_pairs if len(users[pi]) < len(alive)]
        if not eligible:
            break
        min_size = min(len(users[pi]) for pi in eligible)
        finalists = [pi for pi in eligible if len(users[pi]) == min_size]
        if len(finalists) > 1:
            def cand_key(pi: int) -> tuple:
                pr = pairs[pi]
                e1 = {pr.left: _MARK_X, pr.right: _MARK_Y}
                e2 = {pr.left: _MARK_Y, pr.right: _MARK_X}
                k1 = sorted(_okey(alive[j], e1, {}) for j in users[pi])
                k2 = sorted(_okey(alive[j], e2, {}) for j in users[pi])
                return (min(k1, k2), pi)
            finalists.sort(key=cand_key)
        pi = finalists[0]
        pr = pairs[pi]
        member_ids = sorted(users[pi])
        group_atoms = [alive[j] for j in member_ids]
        inner = group_atoms[0] if len(group_atoms) == 1 else Par(tuple(group_atoms))
        pushed = Res(pr.left, pr.right, inner, pr.fwd_enabled, pr.anno)
        for j in member_ids:
            del alive[j], fn_of[j]
        live_pairs.discard(pi)
        new_id = next_id
        next_id += 1
        alive[new_id] = pushed
        fn_of[new_id] = free_names(pushed)
        for other in live_pairs:
            u = users[other]
            u.difference_update(member_ids)
            if {pairs[other].left, pairs[other].right} & fn_of[new_id]:
                u.add(new_id)

    out: Process = par(*[alive[i] for i in sorted(alive)])
    for pi in sorted(live_pairs, reverse=True):
        pr = pairs[pi]
        out = Res(pr.left, pr.right, out, pr.fwd_enabled, pr.anno)
    return out


_MARK_X, _MARK_Y, _MARK_OTHER = -11, -12, -13


_OKEY_MEMO: dict = {}
_OKEY_KEEP: list = []


def _okey(p: Process, env: dict[Name, int], renv: dict[RecVar, int]) -> str:
    """Alpha-invariant ordering key; binders introduced below are numbered in
    traversal order starting from a high base so they cannot collide with env.
    Memoized on the subtree and the relevant slice of the environment."""
    rel_env = tuple(env.get(n, -n.id - 1000) for n in _fnt(p))
    rel_renv = tuple(sorted((v.id, renv[v]) for v in free_recvars(p)
                            if v in renv)) if renv else ()
    key = (id(p), rel_env, rel_renv)
    hit = _OKEY_MEMO.get(key)
    if hit is not None:
        return hit
    out: list[str] = []
    _okey_ser(p, dict(env), dict(renv), out, [10_000])
    s = "".join(out)
    if len(_OKEY_MEMO) > 400_000:
        _OKEY_MEMO.clear()
        _OKEY_KEEP.clear()
    _OKEY_MEMO[key] = s
    _OKEY_KEEP.append(p)
    return s


def _okey_ser(p: Process, env: dict[Name, int], renv: dict[RecVar, int],
              out: list[str], counter: list[int]) -> None:
    def nm(n: Name) -> str:
        i = env.get(n)
        return f"b{i}" if i is not None else f"f{n.id}"

    match p:
        case Inact():
            out.append("0")
        case Output(s, m, c):
            out.append(f"O({nm(s)},{nm(m)},{nm(c)})")
        case Select(s, c, l):
            out.append(f"S({nm(s)},{nm(c)},{l.text})")
        case Fwd(a, b):
            ka, kb = nm(a), nm(b)
            if kb < ka:
                ka, kb = kb, ka
            out.append(f"F({ka},{kb})")
        case Input(s, mb, cb, body):
            out.append(f"I({nm(s)},")
            u = [(mb, env.get(mb)), (cb, env.get(cb))]
            env[mb] = counter[0]
            env[cb] = counter[0] + 1
            counter[0] += 2
            _okey_ser(body, env, renv, out, counter)
            _restore(env, u)
            out.append(")")
        case Branch(s, cb, arms):
            out.append(f"B({nm(s)},")
            for l, q in arms:
                u = [(cb, env.get(cb))]
                env[cb] = counter[0]
                counter[0] += 1
                out.append(f"{l.text}:")
                _okey_ser(q, env, renv, out, counter)
                _restore(env, u)
            out.append(")")
        case Res(a, b, body):
            u = [(a, env.get(a)), (b, env.get(b))]
            env[a] = counter[0]
            env[b] = counter[0] + 1
            counter[0] += 2
            out.append("R(")
            _okey_ser(body, env, renv, out, counter)
            _restore(env, u)
            out.append(")")
        case Par(parts):
            segs = []
            for q in parts:
                sub: list[str] = []
                _okey_ser(q, env, renv, sub, [counter[0]])
                segs.append("".join(sub))
            segs.sort()
            out.append("P(" + ",".join(segs) + ")")
        case Rec(var, params, body):
            old = renv.get(var)
            renv[var] = counter[0]
            counter[0] += 1
            out.append(f"M({','.join(nm(n) for n in params)};")
            _okey_ser(body, env, renv, out, counter)
            if old is None:
                renv.pop(var, None)
            else:
                renv[var] = old
            out.append(")")
        case Call(var, args):
            i = renv.get(var, -1)
            out.append(f"C(x{i},{','.join(nm(a) for a in args)})")
        case _:
            raise TypeError(p)


def _restore(env: dict, undo) -> None:
    for n, old in reversed(undo):
        if old is None:
            env.pop(n, None)
        else:
            env[n] = old


_ORDER_MEMO: dict = {}
_ORDER_KEEP: list = []


def _order(p: Process, env: dict[Name, int], renv: dict[RecVar, int],
           counter: list[int]) -> Process:
    """Deterministic, alpha-invariant ordering of parallel components,
    restriction chains, and pair orientation. The result depends only on the
    subtree and the environment entries for its free names, so it memoizes."""
    rel_env = tuple(env.get(n, -n.id - 1000) for n in _fnt(p))
    rel_renv = tuple(sorted((v.id, renv[v]) for v in free_recvars(p)
                            if v in renv)) if renv else ()
    key = (id(p), rel_env, rel_renv)
    hit = _ORDER_MEMO.get(key)
    if hit is not None:
        return hit
    out = _order_raw(p, env, renv, counter)
    if len(_ORDER_MEMO) > 100_000:
        _ORDER_MEMO.clear()
        _ORDER_KEEP.clear()
    _ORDER_MEMO[key] = out
    _ORDER_KEEP.append(p)
    _ORDER_KEEP.append(out)
    return out


def _order_raw(p: Process, env: dict[Name, int], renv: dict[RecVar, int],
               counter: list[int]) -> Process:
    match p:
        case Par(parts):
            ordered = [_order(q, env, renv, counter) for q in parts]
            ordered.sort(key=lambda q: _okey(q, env, renv))
            return Par(tuple(ordered))
        case Input(s, mb, cb, body):
            u = [(mb, env.get(mb)), (cb, env.get(cb))]
            env[mb] = counter[0]
            env[cb] = counter[0] + 1
            counter[0] += 2
            body2 = _order(body, env, renv, counter)
            _restore(env, u)
            return Input(s, mb, cb, body2)
        case Branch(s, cb, arms):
            new_arms = []
            for l, q in arms:
                u = [(cb, env.get(cb))]
                env[cb] = counter[0]
                counter[0] += 1
                new_arms.append((l, _order(q, env, renv, counter)))
                _restore(env, u)
            return Branch(s, cb, tuple(new_arms))
        case Rec(var, params, body, lifter):
            old = renv.get(var)
            renv[var] = counter[0]
            counter[0] += 1
            body2 = _order(body, env, renv, counter)
            if old is None:
                renv.pop(var, None)
            else:
                renv[var] = old
            return Rec(var, params, body2, lifter)
        case Res():
            chain: list[Res] = []
            cur: Process = p
            while isinstance(cur, Res):
                chain.append(cur)
                cur = cur.body
            merged = dict(env)
            for r in chain:
                merged[r.left] = _MARK_OTHER
                merged[r.right] = _MARK_OTHER

            def pair_key(r: Res) -> tuple[str, int]:
                merged[r.left] = _MARK_X
                merged[r.right] = _MARK_Y
                k1 = _okey(cur, merged, renv)
                merged[r.left] = _MARK_Y
                merged[r.right] = _MARK_X
                k2 = _okey(cur, merged, renv)
                merged[r.left] = _MARK_OTHER
                merged[r.right] = _MARK_OTHER
                return (min(k1, k2), 0 if k1 <= k2 else 1)

            keyed = [(pair_key(r), r) for r in chain]
            keyed.sort(key=lambda kr: kr[0][0])
            undo = []
            oriented: list[Res] = []
            for (key, flip), r in keyed:
                left, right, anno = r.left, r.right, r.anno
                if flip:
                    left, right = right, left
                    anno = _dual_anno(anno)
                oriented.append(Res(left, right, Inact(), r.fwd_enabled, anno))
                undo.append((left, env.get(left)))
                undo.append((right, env.get(right)))
                env[left] = counter[0]
                env[right] = counter[0] + 1
                counter[0] += 2
            out: Process = _order(cur, env, renv, counter)
            _restore(env, undo)
            for r in reversed(oriented):
                out = Res(r.left, r.right, out, r.fwd_enabled, r.anno)
            return out
        case _:
            return p


def _dual_anno(anno: Any) -> Any:
    if anno is None:
        return None
    from .types import dual

    return dual(anno)


def normal_form(p: Process) -> Process:
    """Canonical representative of the structural-congruence class, excluding
    recursion unfolding. Names are preserved; only ordering and pruning."""
    if p.__dict__.get("_nf", False):
        return p
    q = _order(_structure(p), {}, {}, [0])
    object.__setattr__(q, "_nf", True)
    return q


def canon_key(p: Process) -> str:
    """Alpha-invariant, scope-arrangement-invariant state identity.

    Each restriction level is flattened to its soup of parallel atoms and
    binder pairs (the form every scope arrangement extrudes to); local
    binder names are numbered by iterative rank refinement over the sorted
    atom serializations. Two processes related by the structural congruence
    axioms (excluding recursion unfolding) get equal keys."""
    cached = p.__dict__.get("_ck")
    if cached is not None:
        return cached
    key = _soup_key(p, {}, {})
    object.__setattr__(p, "_ck", key)
    return key


def _soup_key(p: Process, env: dict[Name, str], renv: dict[RecVar, str]) -> str:
    pairs: list[_PairInfo] = []
    atoms: list[Process] = []
    _collect_soup_raw(p, pairs, atoms)

    # prune dead pairs and closed forwarders, mirroring normalization
    changed = True
    while changed:
        changed = False
        for i, pr in enumerate(pairs):
            names = {pr.left, pr.right}
            users = [a for a in atoms if names & free_names(a)]
            if not users:
                pairs.pop(i)
                changed = True
                break
            if len(users) == 1 and isinstance(users[0], Fwd) \
                    and {users[0].left, users[0].right} == names:
                atoms.remove(users[0])
                pairs.pop(i)
                changed = True
                break

    local = [n for pr in pairs for n in (pr.left, pr.right)]
    partner = {}
    for pr in pairs:
        partner[pr.left] = pr.right
        partner[pr.right] = pr.left
    users: dict[Name, list[Process]] = {n: [] for n in local}
    for a in atoms:
        fa = free_names(a)
        for n in local:
            if n in fa:
                users[n].append(a)
    rank: dict[Name, int] = {n: 0 for n in local}

    def tokens() -> dict[Name, str]:
        t = dict(env)
        for n in local:
            t[n] = f"l{rank[n]}"
        return t

    def refine() -> None:
        nonlocal rank
        for _ in range(len(local) + 2):
            toks = tokens()
            sigs = {}
            for n in local:
                marked = dict(toks)
                marked[n] = "@"
                ks = tuple(sorted(_atom_key(a, marked, renv) for a in users[n]))
                sigs[n] = (rank[n], rank[partner[n]], ks)
            order = sorted(local, key=lambda n: sigs[n])
            new: dict[Name, int] = {}
            r, prev = -1, None
            for n in order:
                if sigs[n] != prev:
                    r += 1
                    prev = sigs[n]
                new[n] = r
            if new == rank:
                return
            rank = new

    refine()
    # individualize residual symmetric ties, canonically per refined class
    for _ in range(len(local)):
        by_rank: dict[int, list[Name]] = {}
        for n in local:
            by_rank.setdefault(rank[n], []).append(n)
        tied = [ns for ns in by_rank.values() if len(ns) > 1]
        if not tied:
            break
        group = min(tied, key=lambda ns: rank[ns[0]])
        chosen = group[0]
        rank = {n: rank[n] * 2 for n in local}
        rank[chosen] += 1
        refine()

    toks = tokens()
    keyed = sorted(_atom_key(a, toks, renv) for a in atoms)
    pair_keys = sorted(
        "(" + ",".join(sorted((toks[pr.left], toks[pr.right]))) + ")"
        for pr in pairs)
    return "NU[" + "".join(pair_keys) + "]{" + ";".join(keyed) + "}"


def _collect_soup_raw(p: Process, pairs: list, atoms: list[Process]) -> None:
    """Like the normalization soup, but leaves atom bodies untouched."""
    match p:
        case Par(parts):
            for q in parts:
                _collect_soup_raw(q, pairs, atoms)
        case Res(a, b, body, fe, an):
            pairs.append(_PairInfo(a, b, fe, an))
            _collect_soup_raw(body, pairs, atoms)
        case Inact():
            pass
        case _:
            atoms.append(p)


def _occurrences(p: Process) -> list[Name]:
    """Free-name occurrences in deterministic structural order."""
    out: list[str] = []
    seen: list[Name] = []

    def walk(q: Process, bound: frozenset[Name]) -> None:
        def occ(n: Name) -> None:
            if n not in bound:
                seen.append(n)

        match q:
            case Inact():
                pass
            case Output(s, m, c):
                occ(s), occ(m), occ(c)
            case Select(s, c, _):
                occ(s), occ(c)
            case Fwd(a, b):
                occ(a), occ(b)
            case Input(s, mb, cb, body):
                occ(s)
                walk(body, bound | {mb, cb})
            case Branch(s, cb, arms):
                occ(s)
                for _, arm in arms:
                    walk(arm, bound | {cb})
            case Res(a, b, body):
                walk(body, bound | {a, b})
            case Par(parts):
                for x in parts:
                    walk(x, bound)
            case Rec(_, params, body):
                for n in params:
                    occ(n)
                walk(body, bound)
            case Call(_, args):
                for n in args:
                    occ(n)

    walk(p, frozenset())
    return seen


_ATOM_KEY_MEMO: dict = {}
_ATOM_KEY_KEEP: list = []


def _atom_key(p: Process, env: dict[Name, str], renv: dict[RecVar, str]) -> str:
    rel = tuple(env.get(n, f"f{n.id}") for n in _fnt(p))
    relr = tuple(sorted((v.id, renv[v]) for v in free_recvars(p) if v in renv))
    mk = (id(p), rel, relr)
    hit = _ATOM_KEY_MEMO.get(mk)
    if hit is not None:
        return hit

    def nm(n: Name) -> str:
        return env.get(n, f"f{n.id}")

    match p:
        case Output(s, m, c):
            key = f"O({nm(s)},{nm(m)},{nm(c)})"
        case Select(s, c, l):
            key = f"S({nm(s)},{nm(c)},{l.text})"
        case Fwd(a, b):
            ka, kb = nm(a), nm(b)
            key = f"F({min(ka, kb)},{max(ka, kb)})"
        case Input(s, mb, cb, body):
            e2 = dict(env)
            e2[mb] = "i0"
            e2[cb] = "i1"
            key = f"I({nm(s)},{_soup_key(body, e2, renv)})"
        case Branch(s, cb, arms):
            inner = []
            for l, arm in arms:
                e2 = dict(env)
                e2[cb] = "i0"
                inner.append(f"{l.text}:{_soup_key(arm, e2, renv)}")
            key = f"B({nm(s)},{''.join(inner)})"
        case Rec(var, params, body):
            r2 = dict(renv)
            r2[var] = f"X{len(renv)}"
            key = (f"M({','.join(nm(n) for n in params)};"
                   f"{_soup_key(body, env, r2)})")
        case Call(var, args):
            key = f"C({renv.get(var, '?')},{','.join(nm(a) for a in args)})"
        case Inact():
            key = "0"
        case Res() | Par():
            key = _soup_key(p, env, renv)
        case _:
            raise TypeError(p)
    if len(_ATOM_KEY_MEMO) > 400_000:
        _ATOM_KEY_MEMO.clear()
        _ATOM_KEY_KEEP.clear()
    _ATOM_KEY_MEMO[mk] = key
    _ATOM_KEY_KEEP.append(p)
    return key


def congruence_eq(p: Process, q: Process) -> bool:
    return canon_key(p) == canon_key(q)


def canonical_rename(p: Process, supply: NameSupply | None = None) -> Process:
    """Left-to-right binder renumbering over a fresh id range."""
    supply = supply or NameSupply(0)

    def walk(q: Process, env: dict[Name, Name]) -> Process:
        def nm(n: Name) -> Name:
            return env.get(n, n)

        match q:
            case Inact():
                return q
            case Output(s, m, c):
                return Output(nm(s), nm(m), nm(c))
            case Select(s, c, l):
                return Select(nm(s), nm(c), l)
            case Fwd(a, b):
                return Fwd(nm(a), nm(b))
            case Input(s, mb, cb, body):
                e2 = dict(env)
                e2[mb] = supply.fresh(mb.display)
                e2[cb] = supply.fresh(cb.display)
                return Input(nm(s), e2[mb], e2[cb], walk(body, e2))
            case Branch(s, cb, arms):
                e2 = dict(env)
                e2[cb] = supply.fresh(cb.display)
                return Branch(nm(s), e2[cb], tuple((l, walk(a, e2)) for l, a in arms))
            case Res(a, b, body, fe, an):
                e2 = dict(env)
                e2[a] = supply.fresh(a.display)
                e2[b] = supply.fresh(b.display)
                return Res(e2[a], e2[b], walk(body, e2), fe, an)
            case Par(parts):
                return Par(tuple(walk(x, env) for x in parts))
            case Rec(var, params, body, lf):
                return Rec(var, tuple(nm(n) for n in params), walk(body, env), lf)
            case Call(var, args):
                return Call(var, tuple(nm(a) for a in args))
        raise TypeError(q)

    return walk(p, {})


# ---------------------------------------------------------------------------
# Syntactic sugar (bound actions) and desugaring
# ---------------------------------------------------------------------------


def desugar_bound_output(x: Name, y: Name, cont: Process,
                         supply: NameSupply | None = None) -> Process:
    """x![y].P  :=  new y a . new z b . (x[a,b] | P{z/x})"""
    supply = supply or _default_supply()
    a = supply.fresh("a")
    z = supply.derived(x)
    b = supply.fresh("b")
    return Res(y, a, Res(z, b, par(Output(x, a, b),
                                   substitute(cont, {x: z}, supply))))


def desugar_bound_select(x: Name, label: Label, cont: Process,
                         supply: NameSupply | None = None) -> Process:
    """x!<l>.P  :=  new z b . (x[b]<l | P{z/x})"""
    supply = supply or _default_supply()
    z = supply.derived(x)
    b = supply.fresh("b")
    return Res(z, b, par(Select(x, b, label), substitute(cont, {x: z}, supply)))


def desugar_sugar_input(x: Name, y: Name, cont: Process,
                        supply: NameSupply | None = None) -> Process:
    """x?(y).P  :=  x(y,z).P{z/x}"""
    supply = supply or _default_supply()
    z = supply.derived(x)
    return Input(x, y, z, substitute(cont, {x: z}, supply))


def desugar_sugar_branch(x: Name, arms: Iterable[tuple[Label, Process]],
                         supply: NameSupply | None = None) -> Process:
    """x?{l: P, ...}  :=  x(z)>{l: P{z/x}, ...}"""
    supply = supply or _default_supply()
    z = supply.derived(x)
    return Branch(x, z, tuple((l, substitute(p, {x: z}, supply)) for l, p in arms))


# ---------------------------------------------------------------------------
# Pretty printing (re-sugaring where the pattern is recognized)
# ---------------------------------------------------------------------------


def _try_sugar(p: Process) -> tuple[str, Process] | None:
    """Recognize bound-output / bound-selection patterns; return (prefix, cont)."""
    match p:
        case Res(y, a, Res(z, b, Par(parts)), False) if len(parts) >= 2:
            for i, atom in enumerate(parts):
                if (isinstance(atom, Output) and {atom.msg, atom.cont} == {a, b}
                        and atom.msg == a and atom.cont == b):
                    rest = par(*[q for j, q in enumerate(parts) if j != i])
                    used = free_names(rest)
                    if a not in used and b not in used and atom.subj not in used:
                        cont = substitute(rest, {z: atom.subj})
                        return (f"{pp_name(atom.subj)}![{pp_name(y)}] . ", cont)
        case Res(z, b, Par(parts), False) if len(parts) >= 2:
            for i, atom in enumerate(parts):
                if isinstance(atom, Select) and atom.cont == b:
                    rest = par(*[q for j, q in enumerate(parts) if j != i])
                    used = free_names(rest)
                    if b not in used and atom.subj not in used:
                        cont = substitute(rest, {z: atom.subj})
                        return (f"{pp_name(atom.subj)}!<{atom.label.text}> . ", cont)
    return None


def pp_name(n: Name) -> str:
    return n.display if n.display else f"n{n.id}"


def pretty(p: Process, sugar: bool = True) -> str:
    if sugar:
        s = _try_sugar(p)
        if s is not None:
            prefix, cont = s
            return prefix + pretty(cont, sugar)
    match p:
        case Inact():
            return "0"
        case Output(s, m, c):
            return f"{pp_name(s)}[{pp_name(m)},{pp_name(c)}]"
        case Select(s, c, l):
            return f"{pp_name(s)}[{pp_name(c)}] < {l.text}"
        case Fwd(a, b):
            return f"fwd {pp_name(a)} {pp_name(b)}"
        case Input(s, mb, cb, body):
            if sugar and cb not in free_names(body):
                return f"{pp_name(s)}?({pp_name(mb)}) . {pretty(body, sugar)}"
            return f"{pp_name(s)}({pp_name(mb)},{pp_name(cb)}) . {pretty(body, sugar)}"
        case Branch(s, cb, arms):
            inner = ", ".join(f"{l.text}: {pretty(q, sugar)}" for l, q in arms)
            if sugar and all(cb not in free_names(q) for _, q in arms):
                return f"{pp_name(s)}?{{{inner}}}"
            return f"{pp_name(s)}({pp_name(cb)}) > {{{inner}}}"
        case Res(a, b, body, fwd_e, anno):
            nu = "new^" if fwd_e else "new"
            ann = ""
            if anno is not None:
                from .types import pretty_type

                ann = f": {pretty_type(anno)}"
            return f"{nu} {pp_name(a)}{ann} {pp_name(b)} . ({pretty(body, sugar)})"
        case Par(parts):
            return " | ".join(
                f"({pretty(q, sugar)})" if isinstance(q, (Par,)) else pretty(q, sugar)
                for q in parts)
        case Rec(var, params, body, lifter):
            lt = f"[{lifter}]" if lifter is not None else ""
            ps = ",".join(pp_name(n) for n in params)
            vs = var.display or f"X{var.id}"
            return f"rec{lt} {vs}({ps}) . {pretty(body, sugar)}"
        case Call(var, args):
            vs = var.display or f"X{var.id}"
            return f"{vs}<{','.join(pp_name(a) for a in args)}>"
    raise TypeError(p)


def subprocesses(p: Process) -> Iterator[Process]:
    yield p
    match p:
        case Input(_, _, _, body) | Res(_, _, body) | Rec(_, _, body):
            yield from subprocesses(body)
        case Branch(_, _, arms):
            for _, q in arms:
                yield from subprocesses(q)
        case Par(parts):
            for q in parts:
                yield from subprocesses(q)
        case _:
            return
