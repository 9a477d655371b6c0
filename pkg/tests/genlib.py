"""Random generators for property tests: session types, closed process
compositions, and well-typed functional programs."""

from __future__ import annotations

import random

from apcpcgv.names import Label, Name, NameSupply
from apcpcgv.apcp import checker as AC
from apcpcgv.apcp import syntax as S
from apcpcgv.apcp import types as T
from apcpcgv.cgv import syntax as G

LABELS = ["go", "stop", "more", "left", "right"]


def random_session_type(rng: random.Random, depth: int = 4,
                        allow_rec: bool = True, max_pr: int = 9,
                        _tvars: tuple[str, ...] = ()) -> T.SessionType:
    """Closed, contractive session type with concrete priorities."""
    leaf_choices = ["bullet"]
    if _tvars:
        leaf_choices.append("tvar")
    if depth <= 0:
        kind = rng.choice(leaf_choices)
    else:
        kinds = ["tensor", "par", "plus", "with", "bullet"]
        if allow_rec and not _tvars and depth >= 2:
            kinds.append("mu")
        if _tvars:
            kinds.append("tvar")
        kind = rng.choice(kinds)
    pr = T.concrete(rng.randrange(max_pr))
    match kind:
        case "bullet":
            return T.BULLET
        case "tvar":
            return T.TVar(rng.choice(_tvars))
        case "tensor":
            # recursion variables may not occur in message position
            return T.Tensor(pr, random_session_type(rng, depth - 1, False, max_pr, ()),
                            random_session_type(rng, depth - 1, allow_rec, max_pr, _tvars))
        case "par":
            return T.ParT(pr, random_session_type(rng, depth - 1, False, max_pr, ()),
                          random_session_type(rng, depth - 1, allow_rec, max_pr, _tvars))
        case "plus" | "with":
            n = rng.randint(1, 3)
            labels = rng.sample(LABELS, n)
            arms = tuple((l, random_session_type(rng, depth - 1, allow_rec,
                                                 max_pr, _tvars))
                         for l in sorted(labels))
            return T.Plus(pr, arms) if kind == "plus" else T.With(pr, arms)
        case "mu":
            var = "X"
            body = random_session_type(rng, depth - 1, False, max_pr, (var,))
            if var not in T.free_tvars(body) or isinstance(body, T.TVar):
                # force a guarded use so the loop is meaningful
                body = T.ParT(pr, T.BULLET, T.TVar(var))
            return T.Mu(var, body)
    raise AssertionError


def random_closed_process(rng: random.Random, sessions: int = 2,
                          depth: int = 3, allow_rec: bool = True,
                          seed_base: int = 0) -> S.Process:
    """Parallel composition of characteristic-process pairs, one restriction
    per session: closed and well-typed by construction."""
    supply = NameSupply(100_000 + seed_base * 10_000)
    groups = []
    for i in range(sessions):
        a = random_session_type(rng, depth, allow_rec)
        x = supply.fresh(f"x{i}")
        y = supply.fresh(f"y{i}")
        px = AC.characteristic_process(a, x, supply)
        py = AC.characteristic_process(T.dual(a), y, supply)
        groups.append(S.Res(x, y, S.par(px, py), anno=a))
    return S.par(*groups)


# ---------------------------------------------------------------------------
# Functional programs
# ---------------------------------------------------------------------------


def random_cgv_session(rng: random.Random, depth: int = 2) -> G.SessionT:
    if depth <= 0:
        return G.END
    kind = rng.choice(["out", "in", "sel", "case", "end"])
    payload = rng.choice([G.UNIT, G.END])
    match kind:
        case "end":
            return G.END
        case "out":
            return G.SOut(payload, random_cgv_session(rng, depth - 1))
        case "in":
            return G.SIn(payload, random_cgv_session(rng, depth - 1))
        case "sel":
            labels = sorted(rng.sample(LABELS, rng.randint(1, 2)))
            return G.SSel(tuple((l, random_cgv_session(rng, depth - 1))
                                for l in labels))
        case "case":
            labels = sorted(rng.sample(LABELS, rng.randint(1, 2)))
            return G.SCase(tuple((l, random_cgv_session(rng, depth - 1))
                                 for l in labels))
    raise AssertionError


def _payload_value(rng: random.Random, t: G.CgvType,
                   supply: NameSupply) -> G.Term:
    if isinstance(t, G.UnitT):
        return G.Unit()
    # a free variable of closed session type (typed without a context entry)
    return G.Var(supply.fresh(f"u{rng.randrange(1000)}"))


def _driver(rng: random.Random, endpoint: G.Term, s: G.SessionT,
            supply: NameSupply) -> G.Term:
    """A unit-typed term that runs the whole protocol `s` on `endpoint`."""
    match s:
        case G.SEnd():
            return G.Unit()
        case G.SOut(msg, cont):
            e2 = supply.fresh("e")
            return G.App(G.Abs(e2, None, _driver(rng, G.Var(e2), cont, supply)),
                         G.Send(G.PairT(_payload_value(rng, msg, supply), endpoint)))
        case G.SIn(msg, cont):
            v = supply.fresh("v")
            e2 = supply.fresh("e")
            body = _driver(rng, G.Var(e2), cont, supply)
            if isinstance(msg, G.UnitT):
                # unit payloads are linear: run them out as a child thread
                body = G.Spawn(G.PairT(G.Var(v), body))
            return G.Split(v, e2, G.Recv(endpoint), body)
        case G.SSel(arms):
            label, cont = rng.choice(arms)
            e2 = supply.fresh("e")
            return G.App(G.Abs(e2, None, _driver(rng, G.Var(e2), cont, supply)),
                         G.SelectT(Label(label), endpoint))
        case G.SCase(arms):
            branches = []
            for l, cont in arms:
                e2 = supply.fresh("e")
                branches.append((Label(l),
                                 G.Abs(e2, cont, _driver(rng, G.Var(e2), cont, supply))))
            return G.Case(endpoint, tuple(branches))
    raise AssertionError


def _with_noise(rng: random.Random, body: G.Term, supply: NameSupply) -> G.Term:
    """Wrap with harmless pure computation."""
    if rng.random() < 0.4:
        return G.Spawn(G.PairT(G.Unit(), body))
    if rng.random() < 0.3:
        x, y = supply.fresh("p"), supply.fresh("q")
        return G.Split(x, y, G.PairT(G.Unit(), G.Unit()),
                       G.Spawn(G.PairT(G.Var(x), G.Spawn(G.PairT(G.Var(y), body)))))
    return body


def random_cgv_program(rng: random.Random, channels: int = 2,
                       session_depth: int = 2,
                       seed_base: int = 0) -> G.Term:
    """A closed program of unit type: create channels, spawn one thread per
    channel running the dual protocol, drive the original side in the main
    thread."""
    supply = NameSupply(200_000 + seed_base * 10_000)
    channels = max(1, channels)

    def build(i: int) -> G.Term:
        s = random_cgv_session(rng, session_depth)
        x, y = supply.fresh(f"c{i}"), supply.fresh(f"d{i}")
        child = _driver(rng, G.Var(y), G.dual_s(s), supply)
        here = _with_noise(rng, _driver(rng, G.Var(x), s, supply), supply)
        if i + 1 < channels:
            cont = G.Spawn(G.PairT(child, G.Spawn(G.PairT(here, build(i + 1)))))
        else:
            cont = G.Spawn(G.PairT(child, here))
        return G.Split(x, y, G.New(s), cont)

    return build(0)


def random_open_term(rng: random.Random, session_depth: int = 2,
                     seed_base: int = 0) -> tuple[dict, G.Term]:
    """An open unit-typed term driving a free endpoint."""
    supply = NameSupply(300_000 + seed_base * 10_000)
    s = random_cgv_session(rng, session_depth)
    e = supply.fresh("chan")
    term = _with_noise(rng, _driver(rng, G.Var(e), s, supply), supply)
    return ({e: s}, term)
