"""Priority-annotated session types and their operators.

Priorities are linear terms `base + sum(lifters) + offset` over priority
variables, with a distinct top element omega that absorbs addition.
Concrete priorities have no base variable and no lifters. Lifter variables
stand for the common lift applied when unfolding recursive types; they only
ever appear added to a priority, never subtracted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator


# ---------------------------------------------------------------------------
# Priorities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Priority:
    base: int | None = None            # priority variable id, or None
    lifters: tuple[int, ...] = ()      # sorted lifter variable ids (with repeats)
    offset: int = 0
    omega: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "lifters", tuple(sorted(self.lifters)))
        if self.omega and (self.base is not None or self.lifters or self.offset):
            raise ValueError("omega carries no arithmetic")

    @property
    def is_concrete(self) -> bool:
        return not self.omega and self.base is None and not self.lifters

    @property
    def is_symbolic(self) -> bool:
        return not self.omega and not self.is_concrete

    def value(self) -> int:
        if not self.is_concrete:
            raise ValueError(f"priority {self} is not concrete")
        return self.offset

    def add(self, t: Priority) -> Priority:
        """self + t, where t is a lift amount (concrete or a lifter variable)."""
        if self.omega:
            return self
        if t.omega:
            return OMEGA
        base = self.base
        if t.base is not None:
            if base is not None:
                raise ValueError("cannot add two based priorities")
            base = t.base
        return Priority(base, self.lifters + t.lifters, self.offset + t.offset)

    def __repr__(self) -> str:
        if self.omega:
            return "w"
        parts = []
        if self.base is not None:
            parts.append(f"p{self.base}")
        parts.extend(f"t{l}" for l in self.lifters)
        if self.offset or not parts:
            parts.append(str(self.offset))
        return "+".join(parts)


OMEGA = Priority(omega=True)


def concrete(n: int) -> Priority:
    return Priority(offset=n)


def pvar(v: int, offset: int = 0) -> Priority:
    return Priority(base=v, offset=offset)


def lifter_term(v: int) -> Priority:
    return Priority(lifters=(v,))


class PrioritySupply:
    """Fresh priority/lifter variable ids for one checker or translator run."""

    def __init__(self, start: int = 0):
        self._c = itertools.count(start)
        self.created: list[int] = []
        self.lifter_ids: set[int] = set()

    def fresh(self) -> Priority:
        v = next(self._c)
        self.created.append(v)
        return pvar(v)

    def fresh_lifter(self) -> Priority:
        v = next(self._c)
        self.created.append(v)
        self.lifter_ids.add(v)
        return lifter_term(v)


# ---------------------------------------------------------------------------
# Session types
# ---------------------------------------------------------------------------


class SessionType:
    __slots__ = ()


@dataclass(frozen=True)
class Bullet(SessionType):
    def __repr__(self) -> str:
        return "end"


@dataclass(frozen=True)
class TVar(SessionType):
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Tensor(SessionType):
    pr: Priority
    left: SessionType
    right: SessionType

    def __repr__(self) -> str:
        return f"({self.left!r} *{self.pr!r} {self.right!r})"


@dataclass(frozen=True)
class ParT(SessionType):
    pr: Priority
    left: SessionType
    right: SessionType

    def __repr__(self) -> str:
        return f"({self.left!r} %{self.pr!r} {self.right!r})"


@dataclass(frozen=True)
class Plus(SessionType):
    pr: Priority
    arms: tuple[tuple[str, SessionType], ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("empty selection type")
        object.__setattr__(self, "arms", tuple(sorted(self.arms)))

    def arm(self, label: str) -> SessionType:
        for l, a in self.arms:
            if l == label:
                return a
        raise KeyError(label)

    def __repr__(self) -> str:
        inner = ",".join(f"{l}:{a!r}" for l, a in self.arms)
        return f"+{self.pr!r}{{{inner}}}"


@dataclass(frozen=True)
class With(SessionType):
    pr: Priority
    arms: tuple[tuple[str, SessionType], ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("empty branching type")
        object.__setattr__(self, "arms", tuple(sorted(self.arms)))

    def arm(self, label: str) -> SessionType:
        for l, a in self.arms:
            if l == label:
                return a
        raise KeyError(label)

    def __repr__(self) -> str:
        inner = ",".join(f"{l}:{a!r}" for l, a in self.arms)
        return f"&{self.pr!r}{{{inner}}}"


@dataclass(frozen=True)
class Mu(SessionType):
    var: str
    body: SessionType

    def __post_init__(self) -> None:
        if not _contractive_body(self.body, {self.var}):
            raise ValueError(f"non-contractive recursive type mu {self.var}")
        if not _tail_recursive(self.body, self.var):
            raise ValueError(f"recursion variable {self.var} in message position")

    def __repr__(self) -> str:
        return f"mu {self.var}.{self.body!r}"


def _contractive_body(t: SessionType, pending: set[str]) -> bool:
    # forbid mu X1 ... mu Xn . X1: a pending variable directly under the
    # binder chain with no intervening connective
    match t:
        case TVar(name):
            return name not in pending
        case Mu(var, body):
            return _contractive_body(body, pending | {var})
        case _:
            return True


def _tail_recursive(t: SessionType, var: str) -> bool:
    # the bound variable may only occur in continuation positions, never in
    # the message component of an output/input type
    match t:
        case TVar() | Bullet():
            return True
        case Tensor(_, a, b) | ParT(_, a, b):
            return var not in free_tvars(a) and _tail_recursive(b, var)
        case Plus(_, arms) | With(_, arms):
            return all(_tail_recursive(x, var) for _, x in arms)
        case Mu(v, body):
            return True if v == var else _tail_recursive(body, var)
    raise TypeError(t)


BULLET = Bullet()


# ---------------------------------------------------------------------------
# Operators: duality, priority, top priority, lift, unfolding
# ---------------------------------------------------------------------------


def dual(t: SessionType) -> SessionType:
    match t:
        case Bullet():
            return t
        case TVar():
            return t
        case Tensor(p, a, b):
            return ParT(p, dual(a), dual(b))
        case ParT(p, a, b):
            return Tensor(p, dual(a), dual(b))
        case Plus(p, arms):
            return With(p, tuple((l, dual(a)) for l, a in arms))
        case With(p, arms):
            return Plus(p, tuple((l, dual(a)) for l, a in arms))
        case Mu(v, body):
            return Mu(v, dual(body))
    raise TypeError(t)


def pr(t: SessionType) -> Priority:
    match t:
        case Bullet() | TVar():
            return OMEGA
        case Tensor(p, _, _) | ParT(p, _, _) | Plus(p, _) | With(p, _):
            return p
        case Mu(_, body):
            return pr(body)
    raise TypeError(t)


def prmax(t: SessionType) -> int:
    """Top priority: maximum concrete annotation occurring anywhere."""
    m = 0
    for p in priority_terms(t):
        if not p.is_concrete:
            raise ValueError("prmax of a type with symbolic priorities")
        m = max(m, p.value())
    return m


def priority_terms(t: SessionType) -> Iterator[Priority]:
    match t:
        case Bullet() | TVar():
            return
        case Tensor(p, a, b) | ParT(p, a, b):
            yield p
            yield from priority_terms(a)
            yield from priority_terms(b)
        case Plus(p, arms) | With(p, arms):
            yield p
            for _, a in arms:
                yield from priority_terms(a)
        case Mu(_, body):
            yield from priority_terms(body)


def lift(t: Priority | int, a: SessionType) -> SessionType:
    amount = concrete(t) if isinstance(t, int) else t
    if amount.is_concrete and amount.value() == 0:
        return a
    match a:
        case Bullet() | TVar():
            return a
        case Tensor(p, l, r):
            return Tensor(p.add(amount), lift(amount, l), lift(amount, r))
        case ParT(p, l, r):
            return ParT(p.add(amount), lift(amount, l), lift(amount, r))
        case Plus(p, arms):
            return Plus(p.add(amount), tuple((n, lift(amount, x)) for n, x in arms))
        case With(p, arms):
            return With(p.add(amount), tuple((n, lift(amount, x)) for n, x in arms))
        case Mu(v, body):
            return Mu(v, lift(amount, body))
    raise TypeError(a)


def subst_tvar(t: SessionType, var: str, repl: SessionType) -> SessionType:
    match t:
        case TVar(name):
            return repl if name == var else t
        case Bullet():
            return t
        case Tensor(p, a, b):
            return Tensor(p, subst_tvar(a, var, repl), subst_tvar(b, var, repl))
        case ParT(p, a, b):
            return ParT(p, subst_tvar(a, var, repl), subst_tvar(b, var, repl))
        case Plus(p, arms):
            return Plus(p, tuple((l, subst_tvar(a, var, repl)) for l, a in arms))
        case With(p, arms):
            return With(p, tuple((l, subst_tvar(a, var, repl)) for l, a in arms))
        case Mu(v, body):
            if v == var:  # shadowed
                return t
            return Mu(v, subst_tvar(body, var, repl))
    raise TypeError(t)


def unfold_type(t: Priority | int, m: SessionType) -> SessionType:
    """unfold^t(mu X. A) = A{mu X. (lift t A) / X}"""
    if not isinstance(m, Mu):
        raise TypeError("unfold_type expects a recursive type")
    lifted_loop = Mu(m.var, lift(t, m.body))
    return subst_tvar(m.body, m.var, lifted_loop)


def free_tvars(t: SessionType) -> frozenset[str]:
    match t:
        case TVar(name):
            return frozenset({name})
        case Bullet():
            return frozenset()
        case Tensor(_, a, b) | ParT(_, a, b):
            return free_tvars(a) | free_tvars(b)
        case Plus(_, arms) | With(_, arms):
            out = frozenset()
            for _, a in arms:
                out |= free_tvars(a)
            return out
        case Mu(v, body):
            return free_tvars(body) - {v}
    raise TypeError(t)


def canonical_type(t: SessionType, env: dict[str, str] | None = None,
                   counter: list[int] | None = None) -> SessionType:
    """Rename mu-binders X0, X1, ... in traversal order (syntactic equality
    of types is taken after this renaming)."""
    env = env or {}
    counter = counter or [0]
    match t:
        case TVar(name):
            return TVar(env.get(name, name))
        case Bullet():
            return t
        case Tensor(p, a, b):
            return Tensor(p, canonical_type(a, env, counter), canonical_type(b, env, counter))
        case ParT(p, a, b):
            return ParT(p, canonical_type(a, env, counter), canonical_type(b, env, counter))
        case Plus(p, arms):
            return Plus(p, tuple((l, canonical_type(a, env, counter)) for l, a in arms))
        case With(p, arms):
            return With(p, tuple((l, canonical_type(a, env, counter)) for l, a in arms))
        case Mu(v, body):
            fresh = f"X{counter[0]}"
            counter[0] += 1
            env2 = dict(env)
            env2[v] = fresh
            return Mu(fresh, canonical_type(body, env2, counter))
    raise TypeError(t)


def types_equal(a: SessionType, b: SessionType) -> bool:
    return canonical_type(a) == canonical_type(b)


def instantiate_fresh(t: SessionType, supply: PrioritySupply) -> SessionType:
    """Replace every priority annotation by a fresh variable (used when a
    surface type writes `_`, and by the translation)."""
    match t:
        case Bullet() | TVar():
            return t
        case Tensor(_, a, b):
            return Tensor(supply.fresh(), instantiate_fresh(a, supply),
                          instantiate_fresh(b, supply))
        case ParT(_, a, b):
            return ParT(supply.fresh(), instantiate_fresh(a, supply),
                        instantiate_fresh(b, supply))
        case Plus(_, arms):
            return Plus(supply.fresh(),
                        tuple((l, instantiate_fresh(a, supply)) for l, a in arms))
        case With(_, arms):
            return With(supply.fresh(),
                        tuple((l, instantiate_fresh(a, supply)) for l, a in arms))
        case Mu(v, body):
            return Mu(v, instantiate_fresh(body, supply))
    raise TypeError(t)


def map_priorities(t: SessionType, f) -> SessionType:
    match t:
        case Bullet() | TVar():
            return t
        case Tensor(p, a, b):
            return Tensor(f(p), map_priorities(a, f), map_priorities(b, f))
        case ParT(p, a, b):
            return ParT(f(p), map_priorities(a, f), map_priorities(b, f))
        case Plus(p, arms):
            return Plus(f(p), tuple((l, map_priorities(a, f)) for l, a in arms))
        case With(p, arms):
            return With(f(p), tuple((l, map_priorities(a, f)) for l, a in arms))
        case Mu(v, body):
            return Mu(v, map_priorities(body, f))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Pretty-printing (surface syntax)
# ---------------------------------------------------------------------------


def _pp_pr(p: Priority) -> str:
    if p.is_concrete:
        return str(p.value())
    if p.omega:
        return "w"
    return repr(p)


def pretty_type(t: SessionType) -> str:
    match t:
        case Bullet():
            return "end"
        case TVar(name):
            return name
        case Tensor(p, a, b):
            return f"({pretty_type(a)} *{_pp_pr(p)} {pretty_type(b)})"
        case ParT(p, a, b):
            return f"({pretty_type(a)} %{_pp_pr(p)} {pretty_type(b)})"
        case Plus(p, arms):
            inner = ", ".join(f"{l}: {pretty_type(a)}" for l, a in arms)
            return f"+{_pp_pr(p)}{{{inner}}}"
        case With(p, arms):
            inner = ", ".join(f"{l}: {pretty_type(a)}" for l, a in arms)
            return f"&{_pp_pr(p)}{{{inner}}}"
        case Mu(v, body):
            return f"mu {v} . {pretty_type(body)}"
    raise TypeError(t)
