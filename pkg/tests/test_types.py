import random

import pytest
from hypothesis import given, settings, strategies as st

from apcpcgv.apcp import parser as P
from apcpcgv.apcp import types as T
from apcpcgv.apcp.types import (BULLET, OMEGA, Mu, ParT, Tensor, TVar,
                                canonical_type, concrete, dual, lift, pr,
                                prmax, types_equal, unfold_type)

import genlib


def ty(src):
    return P.parse_type(src)


class TestDual:
    def test_tensor_par(self):
        assert dual(ty("end *5 (end %1 end)")) == ty("end %5 (end *1 end)")

    def test_bullet_self_dual(self):
        assert dual(BULLET) == BULLET

    def test_plus_with(self):
        assert dual(ty("+2{go: end, stop: end *1 end}")) == \
            ty("&2{go: end, stop: end %1 end}")

    def test_involution_random(self):
        rng = random.Random(5)
        for _ in range(300):
            a = genlib.random_session_type(rng, 4)
            assert dual(dual(a)) == a


class TestPriorities:
    def test_pr_bullet_omega(self):
        assert pr(BULLET) == OMEGA
        assert pr(TVar("X")) == OMEGA

    def test_pr_connective(self):
        assert pr(ty("end *5 end")) == concrete(5)

    def test_pr_through_mu(self):
        assert pr(ty("mu X . end %3 X")) == concrete(3)

    def test_prmax_bullet(self):
        assert prmax(BULLET) == 0

    def test_prmax_nested(self):
        assert prmax(ty("mu X . (end *0 (end %1 X))")) == 1
        assert prmax(ty("+2{l: end %5 end}")) == 5

    def test_prmax_rejects_symbolic(self):
        t = Tensor(T.pvar(3), BULLET, BULLET)
        with pytest.raises(ValueError):
            prmax(t)


class TestLift:
    def test_basic(self):
        assert lift(1, ty("end %0 X")) == ty("end %1 X")

    def test_identity(self):
        a = ty("mu X . end %2 X")
        assert lift(0, a) == a

    def test_additivity(self):
        rng = random.Random(9)
        for _ in range(200):
            a = genlib.random_session_type(rng, 4)
            s, t = rng.randrange(6), rng.randrange(6)
            assert lift(t, lift(s, a)) == lift(t + s, a)

    def test_commutes_with_dual(self):
        rng = random.Random(10)
        for _ in range(200):
            a = genlib.random_session_type(rng, 4)
            t = rng.randrange(5)
            assert dual(lift(t, a)) == lift(t, dual(a))


class TestUnfoldType:
    def test_paper_example(self):
        assert types_equal(unfold_type(2, ty("mu X . end %0 X")),
                           ty("end %0 (mu X . end %2 X)"))

    def test_no_occurrence(self):
        assert unfold_type(0, Mu("X", ParT(concrete(1), BULLET, BULLET))) == \
            ParT(concrete(1), BULLET, BULLET)

    def test_non_mu_rejected(self):
        with pytest.raises(TypeError):
            unfold_type(1, BULLET)

    def test_scheduler_double_unfold(self):
        m = ty("mu X . +1{start: &2{ack: X}}")
        once = unfold_type(7, m)
        # hand computation: the loop inside is lifted by 7
        assert types_equal(once, ty("+1{start: &2{ack: mu X . +8{start: &9{ack: X}}}}"))
        inner = once.arm("start").arm("ack")
        twice = unfold_type(14, inner)
        assert types_equal(twice,
                           ty("+8{start: &9{ack: mu X . +22{start: &23{ack: X}}}}"))

    def test_unfold_removes_variable(self):
        rng = random.Random(12)
        for _ in range(100):
            a = genlib.random_session_type(rng, 4)
            if not isinstance(a, Mu):
                continue
            u = unfold_type(rng.randrange(4), a)
            assert not T.free_tvars(u)


class TestAlgebraLaws:
    def test_pr_dual_invariant(self):
        rng = random.Random(13)
        for _ in range(300):
            a = genlib.random_session_type(rng, 4)
            assert pr(dual(a)) == pr(a)

    def test_prmax_lift_shift(self):
        rng = random.Random(14)
        hits = 0
        while hits < 200:
            a = genlib.random_session_type(rng, 4)
            if isinstance(a, (T.Bullet, TVar)):
                continue
            if not any(True for _ in T.priority_terms(a)):
                continue
            t = rng.randrange(5)
            assert prmax(lift(t, a)) == prmax(a) + t
            hits += 1


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31))
def test_dual_involution_prop(seed):
    a = genlib.random_session_type(random.Random(seed), 4)
    assert dual(dual(a)) == a


class TestCanonical:
    def test_mu_renaming(self):
        assert types_equal(ty("mu Y . end %1 Y"), ty("mu Z . end %1 Z"))

    def test_parse_pretty_roundtrip(self):
        rng = random.Random(15)
        for _ in range(100):
            a = genlib.random_session_type(rng, 4)
            assert types_equal(ty(T.pretty_type(a)), a)
