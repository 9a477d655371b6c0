"""Operational semantics: standard and lazy reduction, reachable-state
exploration, liveness analyses, and the deadlock-freedom / reactivity
certifiers.

Redex search runs on normal forms. Because names are globally unique,
firing a redex may temporarily leave a name outside the restriction that
binds it; renormalization recomputes scopes, which heals this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from ..names import Label, Name
from . import syntax as S
from .syntax import (Branch, Call, Fwd, Inact, Input, Output, Par, Process,
                     Rec, Res, Select)

# ---------------------------------------------------------------------------
# Labels and results
# ---------------------------------------------------------------------------


class ReductionLabel:
    __slots__ = ()


@dataclass(frozen=True)
class FwdL(ReductionLabel):
    x: Name
    y: Name

    def __repr__(self) -> str:
        return f"{S.pp_name(self.x)}<->{S.pp_name(self.y)}"


@dataclass(frozen=True)
class Comm(ReductionLabel):
    x: Name
    y: Name
    payload: Name

    def __repr__(self) -> str:
        return f"{S.pp_name(self.x)}>{S.pp_name(self.y)}:{S.pp_name(self.payload)}"


@dataclass(frozen=True)
class Sel(ReductionLabel):
    x: Name
    y: Name
    label: Label

    def __repr__(self) -> str:
        return f"{S.pp_name(self.x)}>{S.pp_name(self.y)}:{self.label.text}"


@dataclass(frozen=True)
class Tau(ReductionLabel):
    def __repr__(self) -> str:
        return "tau"


def label_subjects(l: ReductionLabel) -> frozenset[Name]:
    match l:
        case FwdL(x, y) | Comm(x, y, _) | Sel(x, y, _):
            return frozenset((x, y))
    return frozenset()


@dataclass(frozen=True)
class ExploreBounds:
    max_states: int = 10_000
    max_unfold_depth: int = 2
    max_steps: int = 10_000


@dataclass
class TransitionSystem:
    states: dict[str, Process]
    edges: set[tuple[str, str, str]]            # (from key, label text, to key)
    initial: str
    truncated: bool
    edge_labels: dict[tuple[str, str, str], ReductionLabel] = field(default_factory=dict)

    def terminal_keys(self) -> list[str]:
        outgoing = {f for f, _, _ in self.edges}
        return [k for k in self.states if k not in outgoing]


@dataclass(frozen=True)
class Verdict:
    status: str                 # "pass" | "fail" | "truncated"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


# ---------------------------------------------------------------------------
# Tree paths (Res body = 0, Par child = index)
# ---------------------------------------------------------------------------


def _get(p: Process, path: tuple[int, ...]) -> Process:
    for i in path:
        match p:
            case Res():
                p = p.body
            case Par(parts):
                p = parts[i]
            case _:
                raise IndexError(path)
    return p


def _replace(p: Process, path: tuple[int, ...], new: Process) -> Process:
    if not path:
        return new
    i, rest = path[0], path[1:]
    match p:
        case Res(a, b, body, fe, an):
            return Res(a, b, _replace(body, rest, new), fe, an)
        case Par(parts):
            out = list(parts)
            out[i] = _replace(parts[i], rest, new)
            return Par(tuple(out))
    raise IndexError(path)


def _eval_atoms(p: Process, path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], Process]]:
    """All atoms at evaluation positions (through Res/Par only)."""
    match p:
        case Par(parts):
            for i, q in enumerate(parts):
                yield from _eval_atoms(q, path + (i,))
        case Res(_, _, body):
            yield from _eval_atoms(body, path + (0,))
        case Inact():
            return
        case _:
            yield (path, p)


def _eval_res(p: Process, path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], Res]]:
    match p:
        case Par(parts):
            for i, q in enumerate(parts):
                yield from _eval_res(q, path + (i,))
        case Res(_, _, body):
            yield (path, p)
            yield from _eval_res(body, path + (0,))
        case _:
            return


def _unfold_pass(p: Process) -> Process:
    """Unfold every recursive definition at an evaluation position, once."""
    match p:
        case Par(parts):
            return S.par(*[_unfold_pass(q) for q in parts])
        case Res(a, b, body, fe, an):
            return Res(a, b, _unfold_pass(body), fe, an)
        case Rec():
            return S.unfold_rec(p)
        case _:
            return p


def _prepare(p: Process, unfold_depth: int) -> tuple[Process, int]:
    q = S.normal_form(p)
    used = 0
    for _ in range(max(unfold_depth, 0)):
        if not any(isinstance(a, Rec) for _, a in _eval_atoms(q)):
            break
        q = S.normal_form(_unfold_pass(q))
        used += 1
    return q, used


# ---------------------------------------------------------------------------
# Standard reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Redex:
    label: ReductionLabel
    result: Process
    subst: tuple[tuple[Name, Name], ...] = ()   # replaced -> replacement


def _subject_type(res: Res, subj: Name):
    """Type of the fired subject, unfolded to its first connective."""
    if res.anno is None:
        return None
    from . import types as T

    t = res.anno if subj == res.left else T.dual(res.anno)
    for _ in range(4):
        if isinstance(t, T.Mu):
            try:
                t = T.unfold_type(T.prmax(t) + 1, t)
            except ValueError:
                return None
        else:
            break
    return t


def _annotate_binding(p: Process, name: Name, ty) -> Process:
    """Record `name: ty` on the unannotated restriction binding it."""
    from . import types as T
    match p:
        case Res(a, b, body, fe, an):
            if an is None and name in (a, b):
                return Res(a, b, body, fe, ty if name == a else T.dual(ty))
            return Res(a, b, _annotate_binding(body, name, ty), fe, an)
        case Par(parts):
            return Par(tuple(_annotate_binding(q, name, ty) for q in parts))
        case _:
            return p


def _fire_comm(root: Process, res_path: tuple[int, ...], pair: tuple[Name, Name],
               out_path: tuple[int, ...], out: Output,
               in_path: tuple[int, ...], inp: Input) -> _Redex:
    from . import types as T
    res = _get(root, res_path)
    body = S.substitute(inp.body, {inp.msg_bind: out.msg, inp.cont_bind: out.cont})
    r = _replace(root, out_path, Inact())
    r = _replace(r, in_path, body)
    st = _subject_type(res, out.subj) if isinstance(res, Res) else None
    if isinstance(st, T.Tensor):
        r = _annotate_binding(r, out.msg, T.dual(st.left))
        r = _annotate_binding(r, out.cont, T.dual(st.right))
    label = Comm(out.subj, inp.subj, out.msg)
    return _Redex(label, S.normal_form(r),
                  ((inp.msg_bind, out.msg), (inp.cont_bind, out.cont)))


def _fire_sel(root: Process, sel_path: tuple[int, ...], sel: Select,
              br_path: tuple[int, ...], br: Branch) -> _Redex | None:
    from . import types as T
    try:
        arm = br.arm(sel.label)
    except KeyError:
        return None
    res = None
    for rp, rr in _eval_res(root):
        if {rr.left, rr.right} == {sel.subj, br.subj}:
            res = rr
            break
    body = S.substitute(arm, {br.cont_bind: sel.cont})
    r = _replace(root, sel_path, Inact())
    r = _replace(r, br_path, body)
    st = _subject_type(res, sel.subj) if res is not None else None
    if isinstance(st, T.Plus):
        try:
            r = _annotate_binding(r, sel.cont, T.dual(st.arm(sel.label.text)))
        except KeyError:
            pass
    return _Redex(Sel(sel.subj, br.subj, sel.label), S.normal_form(r),
                  ((br.cont_bind, sel.cont),))


def _fire_fwd(root: Process, res_path: tuple[int, ...], res: Res,
              fwd_path: tuple[int, ...], fwd: Fwd) -> _Redex | None:
    pair = {res.left, res.right}
    ends = {fwd.left, fwd.right}
    inside = ends & pair
    if len(inside) != 1:
        return None
    bound = next(iter(inside))
    outside = next(iter(ends - {bound}))
    if outside in pair:
        return None
    partner = res.right if bound == res.left else res.left
    r = _replace(root, fwd_path, Inact())
    scope = _get(r, res_path)
    assert isinstance(scope, Res)
    new_scope = Res(scope.left, scope.right,
                    S.substitute(scope.body, {partner: outside}),
                    scope.fwd_enabled, scope.anno)
    r = _replace(r, res_path, new_scope)
    return _Redex(FwdL(outside, bound), S.normal_form(r), ((partner, outside),))


def _standard_redexes(q: Process) -> list[_Redex]:
    found: list[_Redex] = []
    for res_path, res in _eval_res(q):
        x, y = res.left, res.right
        atoms = list(_eval_atoms(res.body, res_path + (0,)))
        outs = [(p, a) for p, a in atoms if isinstance(a, Output) and a.subj in (x, y)]
        ins = [(p, a) for p, a in atoms if isinstance(a, Input) and a.subj in (x, y)]
        sels = [(p, a) for p, a in atoms if isinstance(a, Select) and a.subj in (x, y)]
        brs = [(p, a) for p, a in atoms if isinstance(a, Branch) and a.subj in (x, y)]
        for op, oa in outs:
            for ip, ia in ins:
                if {oa.subj, ia.subj} == {x, y}:
                    found.append(_fire_comm(q, res_path, (x, y), op, oa, ip, ia))
        for sp, sa in sels:
            for bp, ba in brs:
                if {sa.subj, ba.subj} == {x, y}:
                    r = _fire_sel(q, sp, sa, bp, ba)
                    if r:
                        found.append(r)
        for fp, fa in atoms:
            if isinstance(fa, Fwd):
                r = _fire_fwd(q, res_path, res, fp, fa)
                if r:
                    found.append(r)
    return found


def redexes_ex(p: Process, unfold_depth: int = 1,
               ) -> tuple[list[tuple[ReductionLabel, Process]], int]:
    """Redexes plus the number of unfolding layers the search consumed."""
    q, used = _prepare(p, unfold_depth)
    seen: set[str] = set()
    out: list[tuple[ReductionLabel, Process]] = []
    for r in _standard_redexes(q):
        k = repr(r.label) + "::" + S.canon_key(r.result)
        if k not in seen:
            seen.add(k)
            out.append((r.label, r.result))
    return out, used


def redexes(p: Process, unfold_depth: int = 1) -> list[tuple[ReductionLabel, Process]]:
    """Enumerate redexes reachable after normalization plus on-demand
    unfolding of recursion that guards a potential redex."""
    return redexes_ex(p, unfold_depth)[0]


def step(p: Process, index: int, unfold_depth: int = 1) -> Process:
    rs = redexes(p, unfold_depth)
    if not (0 <= index < len(rs)):
        raise IndexError(f"redex index {index} out of range ({len(rs)} redexes)")
    return rs[index][1]


def run(p: Process, max_steps: int = 1000,
        unfold_depth: int = 1) -> tuple[Process, list[ReductionLabel]]:
    """Deterministic strategy: repeatedly fire the first redex."""
    trace: list[ReductionLabel] = []
    cur = S.normal_form(p)
    for _ in range(max_steps):
        rs = redexes(cur, unfold_depth)
        if not rs:
            break
        label, cur = rs[0]
        trace.append(label)
    return cur, trace


def explore(p: Process, bounds: ExploreBounds = ExploreBounds(),
            redex_fn: Callable[[Process], list[tuple[ReductionLabel, Process]]] | None = None,
            ) -> TransitionSystem:
    """BFS over canonical states, deduplicated by alpha-invariant keys."""
    p0 = S.normal_form(p)
    k0 = S.canon_key(p0)
    states = {k0: p0}
    unfolds = {k0: 0}
    edges: set[tuple[str, str, str]] = set()
    edge_labels: dict[tuple[str, str, str], ReductionLabel] = {}
    truncated = False
    frontier = [k0]
    depth = 0
    while frontier:
        depth += 1
        if depth > bounds.max_steps:
            truncated = True
            break
        next_frontier: list[str] = []
        for k in frontier:
            budget = bounds.max_unfold_depth - unfolds[k]
            if redex_fn is not None:
                succs, used = redex_fn(states[k]), 0
            else:
                succs, used = redexes_ex(states[k], budget)
            if used >= budget and any(isinstance(a, Rec) for _, a in
                                      _eval_atoms(S.normal_form(states[k]))):
                truncated = True
            for label, succ in succs:
                sk = S.canon_key(succ)
                if sk not in states:
                    if len(states) >= bounds.max_states:
                        truncated = True
                        continue
                    states[sk] = succ
                    unfolds[sk] = unfolds[k] + used
                    next_frontier.append(sk)
                else:
                    unfolds[sk] = min(unfolds[sk], unfolds[k] + used)
                e = (k, repr(label), sk)
                edges.add(e)
                edge_labels[e] = label
        frontier = next_frontier
    return TransitionSystem(states, edges, k0, truncated, edge_labels)


# ---------------------------------------------------------------------------
# Liveness analyses
# ---------------------------------------------------------------------------


def active_names(p: Process) -> frozenset[Name]:
    match p:
        case Output(x, _, _) | Input(x, _, _, _) | Select(x, _, _) | Branch(x, _, _):
            return frozenset({x})
        case Inact() | Fwd(_, _) | Call(_, _):
            return frozenset()
        case Par(parts):
            out = frozenset()
            for q in parts:
                out |= active_names(q)
            return out
        case Res(a, b, body):
            return active_names(body) - {a, b}
        case Rec(_, _, body):
            return active_names(body)
    raise TypeError(p)


def pending_names(p: Process) -> frozenset[Name]:
    match p:
        case Output(x, _, _) | Select(x, _, _):
            return frozenset({x})
        case Input(x, mb, cb, body):
            return frozenset({x}) | (pending_names(body) - {mb, cb})
        case Branch(x, cb, arms):
            out = frozenset({x})
            for _, q in arms:
                out |= pending_names(q) - {cb}
            return out
        case Fwd(a, b):
            return frozenset((a, b))
        case Inact() | Call(_, _):
            return frozenset()
        case Par(parts):
            out = frozenset()
            for q in parts:
                out |= pending_names(q)
            return out
        case Res(_, _, body) | Rec(_, _, body):
            return pending_names(body)
    raise TypeError(p)


def is_live(p: Process, unfold_depth: int = 2) -> bool:
    """A restriction on a pair of active names, or a reducible forwarder
    under an evaluation context (after bounded unfolding)."""
    q, _ = _prepare(p, unfold_depth)
    for _, res in _eval_res(q):
        an = active_names(res.body)
        if res.left in an and res.right in an:
            return True
        pair = {res.left, res.right}
        for _, a in _eval_atoms(res.body):
            if isinstance(a, Fwd):
                ends = {a.left, a.right}
                if len(ends) == 2 and len(ends & pair) == 1:
                    return True
    return False


# ---------------------------------------------------------------------------
# Certifiers
# ---------------------------------------------------------------------------


def certify_deadlock_free(p: Process, bounds: ExploreBounds = ExploreBounds()) -> Verdict:
    ts = explore(p, bounds)
    truncated = ts.truncated
    bad = []
    for k in ts.terminal_keys():
        st = ts.states[k]
        if isinstance(S.normal_form(st), Inact):
            continue
        # a terminal cut off by the per-path unfold budget is a truncation,
        # not a deadlock: retry the redex search with a fresh budget
        if redexes(st, max(bounds.max_unfold_depth, 1)):
            truncated = True
        else:
            bad.append(k)
    if bad:
        return Verdict("fail", f"stuck non-inactive state: {S.pretty(ts.states[bad[0]])}")
    if truncated:
        return Verdict("truncated",
                       f"bounds hit after {len(ts.states)} states; no stuck state found")
    return Verdict("pass", f"{len(ts.states)} states, all terminals inactive")


def certify_reactive(p: Process, x: Name,
                     bounds: ExploreBounds = ExploreBounds()) -> Verdict:
    """Search for a path after which a labeled reduction has subject `x`,
    following substitutions that rename the tracked endpoint."""
    start = S.normal_form(p)
    if x not in pending_names(start):
        raise ValueError(f"{x!r} is not a pending name")
    seen: set[tuple[str, Name]] = set()
    queue: list[tuple[Process, Name, int]] = [(start, x, 0)]
    states = 0
    truncated = False
    while queue:
        cur, tracked, d = queue.pop(0)
        key = (S.canon_key(cur), tracked)
        if key in seen:
            continue
        seen.add(key)
        states += 1
        if states > bounds.max_states or d > bounds.max_steps:
            truncated = True
            continue
        q, _used = _prepare(cur, bounds.max_unfold_depth)
        for r in _standard_redexes(q):
            if tracked in label_subjects(r.label):
                return Verdict("pass", f"{r.label!r} fires after {d} steps")
            nt = tracked
            for old, new in r.subst:
                if nt == old:
                    nt = new
            queue.append((r.result, nt, d + 1))
    if truncated:
        return Verdict("truncated", "bounds hit before the endpoint fired")
    return Verdict("fail", f"{x!r} never becomes a reduction subject")


# ---------------------------------------------------------------------------
# Lazy forwarder semantics
# ---------------------------------------------------------------------------


def _restriction_partner(q: Process, n: Name) -> Name | None:
    for _, res in _eval_res(q):
        if res.left == n:
            return res.right
        if res.right == n:
            return res.left
    return None


def _bcont(root: Process, x: Name) -> bool:
    """Bound-forwarded-continuation predicate for a forwarder with far end
    `x`: if `x` is restriction-bound to `a` and `a` is the continuation of a
    forwarded output/selection through some `c <-> e`, then `e` must itself
    be restriction-bound in the whole process."""
    a = _restriction_partner(root, x)
    if a is None:
        return True
    for _, res in _eval_res(root):
        c, d = res.left, res.right
        atoms = [at for _, at in _eval_atoms(res.body)]
        for orient_c, orient_d in ((c, d), (d, c)):
            fwd_other: Name | None = None
            for at in atoms:
                if isinstance(at, Fwd) and orient_c in (at.left, at.right):
                    other = at.right if at.left == orient_c else at.left
                    if other not in (c, d):
                        fwd_other = other
            if fwd_other is None:
                continue
            for at in atoms:
                if isinstance(at, Output) and at.subj == orient_d and at.cont == a:
                    return _restriction_partner(root, fwd_other) is not None
                if isinstance(at, Select) and at.subj == orient_d and at.cont == a:
                    return _restriction_partner(root, fwd_other) is not None
    return True


def lazy_redexes(p: Process, unfold_depth: int = 1) -> list[tuple[ReductionLabel, Process]]:
    """Redexes of the lazy forwarder semantics: plain communications, gated
    forwarder steps, and short-circuit communication through forwarder pairs."""
    q, _ = _prepare(p, unfold_depth)
    out: list[tuple[ReductionLabel, Process]] = []
    seen: set[str] = set()

    def emit(label: ReductionLabel, result: Process) -> None:
        k = repr(label) + "::" + S.canon_key(result)
        if k not in seen:
            seen.add(k)
            out.append((label, result))

    all_res = list(_eval_res(q))

    # plain communications (no forwarder involvement)
    for res_path, res in all_res:
        x, y = res.left, res.right
        atoms = list(_eval_atoms(res.body, res_path + (0,)))
        for op, oa in [(pp, a) for pp, a in atoms
                       if isinstance(a, Output) and a.subj in (x, y)]:
            for ip, ia in [(pp, a) for pp, a in atoms
                           if isinstance(a, Input) and a.subj in (x, y)]:
                if {oa.subj, ia.subj} == {x, y}:
                    r = _fire_comm(q, res_path, (x, y), op, oa, ip, ia)
                    emit(r.label, r.result)
        for sp, sa in [(pp, a) for pp, a in atoms
                       if isinstance(a, Select) and a.subj in (x, y)]:
            for bp, ba in [(pp, a) for pp, a in atoms
                           if isinstance(a, Branch) and a.subj in (x, y)]:
                if {sa.subj, ba.subj} == {x, y}:
                    r = _fire_sel(q, sp, sa, bp, ba)
                    if r:
                        emit(r.label, r.result)

    # gated forwarder reduction: only under forwarder-enabled restrictions
    for res_path, res in all_res:
        if not res.fwd_enabled:
            continue
        for fp, fa in _eval_atoms(res.body, res_path + (0,)):
            if not isinstance(fa, Fwd):
                continue
            ends = {fa.left, fa.right}
            inside = ends & {res.left, res.right}
            if len(inside) != 1:
                continue
            far = next(iter(ends - inside))
            if far in (res.left, res.right):
                continue
            if not _bcont(q, far):
                continue
            r = _fire_fwd(q, res_path, res, fp, fa)
            if r:
                emit(r.label, r.result)

    # short-circuit: communication through a forwarded output and input
    def forwarded(kind, end: Name):
        """(inner_res_path, fwd_path, action_path, action) for
        new (u,v)(end <-> u | kind-action on v)."""
        hits = []
        for irp, ir in all_res:
            u, v = ir.left, ir.right
            atoms = list(_eval_atoms(ir.body, irp + (0,)))
            for orient_u, orient_v in ((u, v), (v, u)):
                fwds = [(pp, a) for pp, a in atoms if isinstance(a, Fwd)
                        and {a.left, a.right} == {end, orient_u}]
                acts = [(pp, a) for pp, a in atoms
                        if isinstance(a, kind) and a.subj == orient_v]
                for fpp, fw in fwds:
                    for app, ac in acts:
                        hits.append((irp, fpp, app, ac))
        return hits

    for res_path, res in all_res:
        x, y = res.left, res.right
        for ox, oy in ((x, y), (y, x)):
            for (_, fp1, op1, oa) in forwarded(Output, ox):
                for (_, fp2, ip2, ia) in forwarded(Input, oy):
                    body = S.substitute(ia.body, {ia.msg_bind: oa.msg,
                                                  ia.cont_bind: oa.cont})
                    r = _replace(q, fp1, Inact())
                    r = _replace(r, op1, Inact())
                    r = _replace(r, fp2, Inact())
                    r = _replace(r, ip2, body)
                    emit(Comm(ox, oy, oa.msg), S.normal_form(r))
            for (_, fp1, sp1, sa) in forwarded(Select, ox):
                for (_, fp2, bp2, ba) in forwarded(Branch, oy):
                    try:
                        arm = ba.arm(sa.label)
                    except KeyError:
                        continue
                    body = S.substitute(arm, {ba.cont_bind: sa.cont})
                    r = _replace(q, fp1, Inact())
                    r = _replace(r, sp1, Inact())
                    r = _replace(r, fp2, Inact())
                    r = _replace(r, bp2, body)
                    emit(Sel(ox, oy, sa.label), S.normal_form(r))
    return out


# ---------------------------------------------------------------------------
# DOT output
# ---------------------------------------------------------------------------


def to_dot(ts: TransitionSystem) -> str:
    ids = {k: f"s{i}" for i, k in enumerate(ts.states)}
    lines = ["digraph transitions {", "  rankdir=LR;", "  node [shape=circle];"]
    for k, node in ids.items():
        shape = ' shape=doublecircle' if k == ts.initial else ""
        label = f"{abs(hash(k)) % 0xFFFFFF:06x}"
        lines.append(f'  {node} [label="{label}"{shape}];')
    for f, lab, t in sorted(ts.edges):
        lines.append(f'  {ids[f]} -> {ids[t]} [label="{lab}"];')
    lines.append("}")
    return "\n".join(lines)
