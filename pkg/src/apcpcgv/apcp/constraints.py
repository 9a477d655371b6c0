"""Difference-constraint solving for priority side conditions.

Constraints are `left < right` or `left = right` between priority terms.
Base variables form a difference graph (offsets fold into edge weights);
lifter variables only ever occur added on the greater side, so they are
resolved greedily after the base solution, in creation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .types import Priority


@dataclass(frozen=True)
class Constraint:
    strict: bool
    left: Priority
    right: Priority
    note: str = ""

    def __repr__(self) -> str:
        op = "<" if self.strict else "="
        tag = f"  [{self.note}]" if self.note else ""
        return f"{self.left!r} {op} {self.right!r}{tag}"


@dataclass
class PriorityConstraintSet:
    strict: list[Constraint] = field(default_factory=list)
    equal: list[Constraint] = field(default_factory=list)
    lifter_bounds: dict[int, list[Priority]] = field(default_factory=dict)

    def add_strict(self, left: Priority, right: Priority, note: str = "") -> None:
        self.strict.append(Constraint(True, left, right, note))

    def add_equal(self, left: Priority, right: Priority, note: str = "") -> None:
        self.equal.append(Constraint(False, left, right, note))

    def add_lifter_bound(self, lifter: int, term: Priority) -> None:
        self.lifter_bounds.setdefault(lifter, []).append(term)

    def extend(self, other: "PriorityConstraintSet") -> None:
        self.strict.extend(other.strict)
        self.equal.extend(other.equal)
        for k, v in other.lifter_bounds.items():
            self.lifter_bounds.setdefault(k, []).extend(v)

    def all_constraints(self) -> list[Constraint]:
        return self.strict + self.equal

    def __len__(self) -> int:
        return len(self.strict) + len(self.equal)


@dataclass
class Unsatisfiable:
    cycle: list[Constraint]

    def __repr__(self) -> str:
        lines = "\n  ".join(repr(c) for c in self.cycle)
        return f"unsatisfiable priority constraints:\n  {lines}"


_ZERO = -1  # virtual node pinned at value 0


def _cancel(c: Constraint) -> Constraint:
    """Remove lifters occurring on both sides."""
    l, r = c.left, c.right
    if not l.lifters or not r.lifters:
        return c
    ll, rl = list(l.lifters), list(r.lifters)
    for x in list(ll):
        if x in rl:
            ll.remove(x)
            rl.remove(x)
    return Constraint(c.strict, Priority(l.base, tuple(ll), l.offset, l.omega),
                      Priority(r.base, tuple(rl), r.offset, r.omega), c.note)


def _eval(p: Priority, sigma: dict[int, int]) -> int | None:
    if p.omega:
        return None  # treated as +infinity by callers
    v = p.offset
    if p.base is not None:
        if p.base not in sigma:
            raise KeyError(p.base)
        v += sigma[p.base]
    for l in p.lifters:
        if l not in sigma:
            raise KeyError(l)
        v += sigma[l]
    return v


def _holds(c: Constraint, sigma: dict[int, int]) -> bool:
    lv, rv = _eval(c.left, sigma), _eval(c.right, sigma)
    if rv is None:  # right omega
        return c.strict or lv is None
    if lv is None:
        return False if c.strict else rv is None
    return lv < rv if c.strict else lv == rv


def solve(cs: PriorityConstraintSet,
          lifter_ids: set[int]) -> dict[int, int] | Unsatisfiable:
    """Minimal natural assignment for base and lifter variables, or a
    witness cycle/violation."""
    constraints = [_cancel(c) for c in cs.all_constraints()]

    base_cs: list[Constraint] = []
    deferred: list[Constraint] = []
    for c in constraints:
        if c.right.omega and not c.left.omega:
            continue  # anything < omega / never equal handled at verify
        if c.left.omega and c.right.omega:
            if c.strict:
                return Unsatisfiable([c])
            continue
        if c.left.omega:
            return Unsatisfiable([c])
        if c.left.lifters or c.right.lifters:
            deferred.append(c)
        else:
            base_cs.append(c)

    # --- base difference graph, longest path from the zero node ------------
    nodes: set[int] = {_ZERO}
    for c in base_cs:
        nodes.add(c.left.base if c.left.base is not None else _ZERO)
        nodes.add(c.right.base if c.right.base is not None else _ZERO)

    edges: list[tuple[int, int, int, Constraint]] = []
    for c in base_cs:
        u = c.left.base if c.left.base is not None else _ZERO
        v = c.right.base if c.right.base is not None else _ZERO
        w = c.left.offset - c.right.offset + (1 if c.strict else 0)
        edges.append((u, v, w, c))
        if not c.strict:
            edges.append((v, u, -w, c))

    val = {n: 0 for n in nodes}
    pred: dict[int, Constraint | None] = {n: None for n in nodes}
    pred_node: dict[int, int] = {}
    for _ in range(len(nodes) + 1):
        changed = False
        for u, v, w, c in edges:
            if val[u] + w > val[v]:
                val[v] = val[u] + w
                pred[v] = c
                pred_node[v] = u
                changed = True
        if not changed:
            break
    else:
        changed = True
    if changed:
        # positive cycle: walk predecessors to extract a witness
        for u, v, w, c in edges:
            if val[u] + w > val[v]:
                cycle: list[Constraint] = []
                seen: list[int] = []
                node = u
                for _ in range(len(nodes) + 1):
                    if node in seen:
                        i = seen.index(node)
                        return Unsatisfiable(cycle[i:] or [c])
                    seen.append(node)
                    cc = pred.get(node)
                    if cc is None:
                        break
                    cycle.append(cc)
                    node = pred_node.get(node, _ZERO)
                return Unsatisfiable([c])

    # normalize the zero node to 0 (values are relative)
    shift = val[_ZERO]
    sigma = {n: v - shift for n, v in val.items() if n != _ZERO}
    # default every otherwise-unconstrained base variable to 0
    for c in constraints:
        for side in (c.left, c.right):
            if side.base is not None and side.base not in sigma \
                    and side.base not in lifter_ids:
                sigma[side.base] = 0
    for terms in cs.lifter_bounds.values():
        for t in terms:
            if t.base is not None and t.base not in sigma and t.base not in lifter_ids:
                sigma[t.base] = 0

    if any(v < 0 for v in sigma.values()):
        # cannot happen with the zero-source initialization, kept as a guard
        low = min(sigma.values())
        sigma = {k: v - low for k, v in sigma.items()}

    # --- lifters, in creation order ----------------------------------------
    for lid in sorted(lifter_ids):
        need = 0
        for term in cs.lifter_bounds.get(lid, []):
            try:
                tv = _eval(term, sigma)
            except KeyError:
                continue  # depends on a later lifter; caught at verify
            if tv is not None:
                need = max(need, tv + 1)
        for c in deferred:
            if lid in c.right.lifters and lid == max(
                    x for x in c.right.lifters if x not in sigma):
                partial = dict(sigma)
                partial[lid] = 0
                try:
                    lv = _eval(c.left, partial)
                    rv = _eval(c.right, partial)
                except KeyError:
                    continue
                if lv is None or rv is None:
                    continue
                gap = lv - rv + (1 if c.strict else 0)
                if gap > 0:
                    need = max(need, gap)
        sigma[lid] = need

    # --- verify everything ---------------------------------------------------
    for c in constraints:
        try:
            ok = _holds(c, sigma)
        except KeyError:
            ok = False
        if not ok:
            return Unsatisfiable([c])
    for lid, terms in cs.lifter_bounds.items():
        for term in terms:
            try:
                tv = _eval(term, sigma)
            except KeyError:
                return Unsatisfiable([Constraint(True, term, Priority(lifters=(lid,)),
                                                 "lifter bound")])
            if tv is not None and sigma.get(lid, 0) <= tv:
                return Unsatisfiable([Constraint(True, term, Priority(lifters=(lid,)),
                                                 "lifter bound")])
    return sigma
