import random

import pytest

from apcpcgv.names import Name
from apcpcgv.apcp import checker as C
from apcpcgv.apcp import parser as P
from apcpcgv.apcp import runtime as R
from apcpcgv.apcp import syntax as S
from apcpcgv.apcp.runtime import (ExploreBounds, active_names,
                                  certify_deadlock_free, certify_reactive,
                                  explore, is_live, lazy_redexes,
                                  pending_names, redexes, run, step, to_dot)
from apcpcgv.corpus import DIAMOND, scheduler_source

import genlib


def proc(src):
    return P.parse_process(src)


class TestRedexes:
    def test_diamond_has_two(self):
        assert len(redexes(proc(DIAMOND))) == 2

    def test_inact_none(self):
        assert redexes(proc("0")) == []

    def test_forwarder_redex(self):
        p = proc("new y z . ( fwd x y | z[a,b] )")
        rs = redexes(p)
        assert len(rs) == 1
        label, result = rs[0]
        assert isinstance(label, R.FwdL)
        # Q{x/z}: the output's subject is now the forwarder's far end
        assert isinstance(result, S.Output) and result.subj.display == "x"

    def test_label_and_subjects(self):
        p = proc("new x y . ( x[a,b] | y(v,w) . 0 )")
        (label, res), = redexes(p)
        assert isinstance(label, R.Comm)
        assert {n.display for n in R.label_subjects(label)} == {"x", "y"}

    def test_step_out_of_range(self):
        with pytest.raises(IndexError):
            step(proc("0"), 0)


class TestExplore:
    def test_diamond_shape(self):
        ts = explore(proc(DIAMOND), ExploreBounds(100, 2, 50))
        assert len(ts.states) == 6
        assert len(ts.edges) == 7
        assert not ts.truncated
        terms = ts.terminal_keys()
        assert len(terms) == 1

    def test_diamond_confluence(self):
        ts = explore(proc(DIAMOND), ExploreBounds(100, 2, 50))
        final, trace = run(proc(DIAMOND), 10)
        assert S.canon_key(final) in ts.terminal_keys()

    def test_single_state(self):
        ts = explore(proc("0"), ExploreBounds(10, 2, 10))
        assert len(ts.states) == 1 and not ts.edges

    def test_determinism(self):
        a = explore(proc(DIAMOND), ExploreBounds(100, 2, 50))
        b = explore(proc(DIAMOND), ExploreBounds(100, 2, 50))
        assert set(a.states) == set(b.states) and a.edges == b.edges

    def test_scheduler_cycles(self):
        ts = explore(proc(scheduler_source(1)), ExploreBounds(500, 4, 100))
        # the one-worker ring loops forever: no terminal states
        assert ts.terminal_keys() == []


class TestRun:
    def test_run_inact(self):
        final, trace = run(proc("0"), 5)
        assert isinstance(final, S.Inact) and trace == []

    def test_diamond_run(self):
        final, trace = run(proc(DIAMOND), 10)
        assert len(trace) == 3
        assert not redexes(final)

    def test_scheduler_round_trace(self):
        final, trace = run(proc(scheduler_source(1)), 6)
        labels = [l.label.text for l in trace if isinstance(l, R.Sel)]
        # a full round performs the start/ack/next exchanges
        assert labels.count("start") >= 2
        assert "ack" in labels and "next" in labels


class TestNameAnalyses:
    def test_active_output(self):
        p = proc("x[y,z]")
        assert {n.display for n in active_names(p)} == {"x"}

    def test_active_forwarder_empty(self):
        assert active_names(proc("fwd x y")) == frozenset()

    def test_active_restricted(self):
        p = proc("new x y . ( x[a,b] | y(v,z) . 0 )")
        assert active_names(p) == frozenset()

    def test_pending_input(self):
        # only action subjects are pending; binders are removed
        p = proc("x(y,z) . y[a,b]")
        assert {n.display for n in pending_names(p)} == {"x"}
        p2 = proc("x(y,z) . w[a,b]")
        assert {n.display for n in pending_names(p2)} == {"x", "w"}

    def test_pending_forwarder(self):
        assert {n.display for n in pending_names(proc("fwd x y"))} == {"x", "y"}

    def test_pending_inact(self):
        assert pending_names(proc("0")) == frozenset()


class TestLive:
    def test_comm_pair_live(self):
        assert is_live(proc("new x y . ( x[a,b] | y(v,z) . 0 )"))

    def test_inact_not_live(self):
        assert not is_live(proc("0"))

    def test_recursion_live_after_unfold(self):
        p = proc(scheduler_source(2))
        assert is_live(p)


class TestCertifiers:
    def test_deadlock_free_trivial(self):
        assert certify_deadlock_free(proc("0")).passed

    def test_deadlock_free_session(self):
        p = proc("new a a2 . new b b2 . new x : end *0 end y . "
                 "( x[a,b] | y(v,w) . 0 )")
        assert certify_deadlock_free(p, ExploreBounds(100, 2, 50)).passed

    def test_random_processes(self):
        rng = random.Random(41)
        for i in range(6):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=2000 + i)
            v = certify_deadlock_free(p, ExploreBounds(4000, 2, 200))
            assert v.status in ("pass", "truncated"), v.detail

    def test_reactive_one_step(self):
        p = proc("new x y . ( x[a,b] | y(v,z) . 0 )")
        x = next(n for n in pending_names(p) if n.display == "x")
        assert certify_reactive(p, x, ExploreBounds(100, 2, 20)).passed

    def test_reactive_not_pending(self):
        p = proc("new x y . ( x[a,b] | y(v,z) . 0 )")
        with pytest.raises(ValueError):
            certify_reactive(p, Name(987654, "nope"), ExploreBounds(10, 1, 5))

    def test_reactive_behind_prefixes(self):
        # the c/d communication is unblocked only after two earlier hops
        p = proc("new a b . new c d . new e f . "
                 "( a![m1] . c![m2] . 0 | b?(v1) . 0 | d?(v2) . e![m3] . 0 "
                 "| f?(v3) . 0 )")
        target = next(n for n in pending_names(p) if n.display == "e")
        v = certify_reactive(p, target, ExploreBounds(500, 2, 50))
        assert v.passed


class TestLazy:
    def test_plain_comm_fires(self):
        p = proc("new x y . ( x[a,b] | y(v,z) . 0 )")
        assert len(lazy_redexes(p)) == 1

    def test_plain_forwarder_blocked(self):
        # standard semantics reduces this; lazy does not (no marked restriction)
        p = proc("new y z . ( fwd x y | z[a,b] )")
        assert redexes(p) and not lazy_redexes(p)

    def test_marked_forwarder_fires(self):
        raw = proc("new y z . ( fwd x y | z[a,b] )")
        marked = S.Res(raw.left, raw.right, raw.body, fwd_enabled=True,
                       anno=raw.anno)
        assert len(lazy_redexes(marked)) == 1

    def test_lazy_subset_of_standard(self):
        rng = random.Random(47)
        for i in range(8):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=2100 + i)
            std = {S.canon_key(q) for _, q in redexes(p, 0)}
            for _, q in lazy_redexes(p, 0):
                assert S.canon_key(q) in std


class TestLivenessSoundness:
    def test_redex_implies_live(self):
        rng = random.Random(53)
        checked = 0
        for i in range(10):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=2200 + i)
            if redexes(p, 2):
                assert is_live(p, 2)
                checked += 1
        assert checked > 0

    def test_not_live_closed_is_inactive(self):
        rng = random.Random(54)
        for i in range(6):
            p = genlib.random_closed_process(rng, 1, 2, seed_base=2300 + i)
            final, _ = run(p, 60)
            if not is_live(final, 3) and C.check(final, {}).ok:
                assert isinstance(S.normal_form(final), S.Inact)


class TestDot:
    def test_dot_output(self):
        ts = explore(proc(DIAMOND), ExploreBounds(100, 2, 50))
        dot = to_dot(ts)
        assert dot.startswith("digraph")
        assert dot.count("->") == 7
        assert "doublecircle" in dot
