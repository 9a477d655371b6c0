import random

import pytest
from hypothesis import given, settings, strategies as st

from apcpcgv.names import Label, Name, NameSupply
from apcpcgv.apcp import parser as P
from apcpcgv.apcp import syntax as S
from apcpcgv.apcp.syntax import (Fwd, Inact, Input, Output, Par, Res,
                                 alpha_eq, canon_key, congruence_eq,
                                 free_names, normal_form, substitute,
                                 unfold_rec)

import genlib


def parse(src):
    return P.parse_process(src)


class TestFreeNames:
    def test_forwarder(self):
        p = parse("fwd x y")
        assert {n.display for n in free_names(p)} == {"x", "y"}

    def test_restriction_binds_both(self):
        p = parse("new x y . ( x[a,b] | y(v,w) . 0 )")
        assert {n.display for n in free_names(p)} == {"a", "b"}

    def test_rec_params_are_free(self):
        p = parse("rec X(x) . x(a,c) . X<c>")
        assert {n.display for n in free_names(p)} == {"x"}

    def test_closed_loop_under_restriction(self):
        p = parse("new x y . ( rec X(x) . x(a,c) . X<c> | rec Y(y) . y![a2] . Y<y> )")
        assert free_names(p) == frozenset()


class TestSubstitute:
    def test_forwarder_rename(self):
        x, y, z = Name(0, "x"), Name(1, "y"), Name(2, "z")
        assert substitute(Fwd(x, z), {z: y}) == Fwd(x, y)

    def test_noop_when_absent(self):
        p = parse("x(y,z).0")
        q = substitute(p, {Name(999, "q"): Name(998, "r")})
        assert p == q

    def test_capture_avoidance(self):
        # x(y,w). fwd y a  with a renamed to y: the binder must be refreshed
        sup = NameSupply(0)
        x, y, w, a = (sup.fresh("x"), sup.fresh("y"), sup.fresh("w"),
                      sup.fresh("a"))
        p = Input(x, y, w, Fwd(y, a))
        q = substitute(p, {a: y}, sup)
        assert isinstance(q, Input)
        assert q.msg_bind != y                     # refreshed
        assert q.body == Fwd(q.msg_bind, y)
        # free names: a gone, y now free
        assert free_names(q) == frozenset({x, y})

    def test_fn_law(self):
        rng = random.Random(3)
        for i in range(40):
            p = genlib.random_closed_process(rng, 1, 3, seed_base=i)
            body = p.body if isinstance(p, Res) else p
            fn = free_names(body)
            if not fn:
                continue
            y = sorted(fn, key=lambda n: n.id)[0]
            x = Name(77_000 + i, "fresh")
            q = substitute(body, {y: x})
            assert free_names(q) == (fn - {y}) | {x}


class TestAlpha:
    def test_binder_names_irrelevant(self):
        assert alpha_eq(parse("x(y,z).0"), parse("x(a,b).0"))

    def test_swapped_forwarder_not_pure_alpha(self):
        p, q = parse("x(y,z). fwd y z"), parse("x(a,b). fwd b a")
        assert not alpha_eq(p, q)
        assert congruence_eq(p, q)  # forwarder symmetry is congruence

    def test_free_positions_matter(self):
        x, a, b = Name(0, "x"), Name(1, "a"), Name(2, "b")
        assert not alpha_eq(Output(x, a, b), Output(x, b, a))


class TestUnfold:
    def test_paper_shape(self):
        p = parse("rec X(x) . x(a,c) . X<c>")
        u = unfold_rec(p)
        assert isinstance(u, Input)
        assert isinstance(u.body, S.Rec)
        assert free_names(u) == free_names(p)

    def test_no_calls(self):
        p = parse("rec X() . 0")
        assert unfold_rec(p) == Inact()

    def test_swapped_args(self):
        p = parse("rec X(x,y) . x(a,c) . y(b,d) . X<y,x>")
        u = unfold_rec(p)
        # the inner loop's parameters are the swapped call arguments
        inner = u.body.body
        assert isinstance(inner, S.Rec)
        assert free_names(u) == free_names(p)

    def test_arity_mismatch(self):
        sup = NameSupply(0)
        x = sup.fresh("x")
        var = sup.fresh_rec("X")
        bad = S.Rec(var, (x,), S.Input(x, sup.fresh("a"), sup.fresh("c"),
                                       S.Call(var, ())))
        with pytest.raises(ValueError):
            unfold_rec(bad)


class TestNormalForm:
    def test_par_unit(self):
        assert normal_form(parse("x[a,b] | 0")) == parse("x[a,b]")

    def test_closed_forwarder(self):
        assert isinstance(normal_form(parse("new x y . fwd x y")), Inact)

    def test_dead_restriction(self):
        assert isinstance(normal_form(parse("new x y . 0")), Inact)

    def test_idempotent_and_fn_preserving(self):
        rng = random.Random(11)
        for i in range(30):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=i)
            n = normal_form(p)
            assert canon_key(n) == canon_key(normal_form(n))
            assert free_names(n) == free_names(p)

    def test_alpha_invariant_canon(self):
        a = parse("new z u . ( new x y . ( x![v1] . 0 | z![v2] . y?(w) . 0 ) | u(m,u2) . 0 )")
        b = parse("new q r . ( new s t . ( s![k1] . 0 | q![k2] . t?(n) . 0 ) | r(o,r2) . 0 )")
        assert canon_key(a) == canon_key(b)


@st.composite
def _small_process(draw):
    rng = random.Random(draw(st.integers(0, 10_000)))
    return genlib.random_closed_process(rng, draw(st.integers(1, 2)), 3,
                                        seed_base=draw(st.integers(0, 50)))


@settings(max_examples=40, deadline=None)
@given(_small_process())
def test_normal_form_idempotent_prop(p):
    n = normal_form(p)
    assert canon_key(n) == canon_key(normal_form(n))
    assert free_names(n) == free_names(p)


class TestDesugar:
    def test_bound_output_shape(self):
        sup = NameSupply(0)
        x, y = sup.fresh("x"), sup.fresh("y")
        cont = S.Inact()
        p = S.desugar_bound_output(x, y, cont, sup)
        # new y a . new z b . (x[a,b] | 0): two restrictions around one output
        assert isinstance(p, Res) and isinstance(p.body, Res)
        out = p.body.body
        assert isinstance(out, Output) and out.subj == x
        assert out.msg == p.right and out.cont == p.body.right

    def test_sugar_parses_to_core(self):
        p = parse("x![y] . x?(v) . 0")
        for q in S.subprocesses(p):
            assert isinstance(q, (Res, Par, Output, Input, Inact))

    def test_roundtrip_through_pretty(self):
        p = parse("new x y . ( x![v] . 0 | y?(w) . 0 )")
        q = parse(S.pretty(p))
        assert congruence_eq(p, q)
