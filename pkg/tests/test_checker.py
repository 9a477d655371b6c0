import random

import pytest

from apcpcgv.names import Name, NameSupply
from apcpcgv.apcp import checker as C
from apcpcgv.apcp import parser as P
from apcpcgv.apcp import syntax as S
from apcpcgv.apcp import types as T
from apcpcgv.apcp.checker import (characteristic_process, check, check_star,
                                  solve_constraints,
                                  types_equal_up_to_unfolding)
from apcpcgv.apcp.constraints import PriorityConstraintSet, Unsatisfiable
from apcpcgv.corpus import scheduler_source

import genlib


def proc(src):
    return P.parse_process(src)


def ty(src):
    return P.parse_type(src)


class TestCheckBasics:
    def test_empty(self):
        assert check(proc("0"), {}).ok

    def test_simple_session(self):
        p = proc("new a a2 . new b b2 . new x : end *0 end y . "
                 "( x[a,b] | y(v,w) . 0 )")
        assert check(p, {}).ok

    def test_forwarder_duality(self):
        x, y = Name(0, "x"), Name(1, "y")
        p = S.Fwd(x, y)
        assert check(p, {x: ty("end *1 end"), y: ty("end %1 end")}).ok
        r = check(p, {x: ty("end *1 end"), y: ty("end %2 end")})
        assert not r.ok  # priorities must match under duality

    def test_linearity_double_use(self):
        x = Name(0, "x")
        p = S.par(S.Fwd(x, Name(1, "y")), S.Fwd(x, Name(2, "z")))
        r = check(p, {Name(i, d): ty("end *1 end") if i == 0 else ty("end %1 end")
                      for i, d in [(0, "x"), (1, "y"), (2, "z")]})
        assert not r.ok and "linear" in str(r.error)

    def test_unused_non_bullet(self):
        x = Name(0, "x")
        r = check(S.Inact(), {x: ty("end *1 end")})
        assert not r.ok

    def test_unused_bullet_discharged(self):
        x = Name(0, "x")
        assert check(S.Inact(), {x: T.BULLET}).ok

    def test_branch_label_mismatch(self):
        p = proc("new x : +1{go: end} y . ( x[c] < go | y(z) > {go: 0, stop: 0} )")
        r = check(p, {})
        assert not r.ok


class TestInfer:
    def test_crossed_inputs_cycle(self):
        p = proc("new x : end %_ end y . new z : end *_ end w . "
                 "( x(a,b) . z![c] . 0 | w(d,e) . y![f] . 0 )")
        r = check(p, {}, mode="infer")
        assert not r.ok and r.unsat is not None
        assert len(r.unsat.cycle) >= 2

    def test_crossed_accepted_by_star(self):
        p = proc("new x : end %_ end y . new z : end *_ end w . "
                 "( x(a,b) . z![c] . 0 | w(d,e) . y![f] . 0 )")
        assert check_star(p, {}).ok

    def test_infer_soundness(self):
        # solved assignment instantiates to a concrete well-typed program
        p = proc("new x : end %_ end y . new z : end *_ end w . "
                 "( x(a,b) . 0 | z![c] . w(d,e) . y![f] . 0 )")
        r = check(p, {}, mode="infer")
        assert r.ok and r.assignment is not None


class TestSolver:
    def test_chain(self):
        cs = PriorityConstraintSet()
        cs.add_strict(T.pvar(0), T.pvar(1))
        cs.add_strict(T.pvar(1), T.pvar(2))
        assert solve_constraints(cs) == {0: 0, 1: 1, 2: 2}

    def test_empty(self):
        assert solve_constraints(PriorityConstraintSet()) == {}

    def test_cycle_witness(self):
        cs = PriorityConstraintSet()
        cs.add_strict(T.pvar(0), T.pvar(1), "a")
        cs.add_strict(T.pvar(1), T.pvar(0), "b")
        out = solve_constraints(cs)
        assert isinstance(out, Unsatisfiable) and len(out.cycle) == 2

    def test_equality_folding(self):
        cs = PriorityConstraintSet()
        cs.add_equal(T.Priority(0, (), 2), T.pvar(1))   # p0 + 2 = p1
        cs.add_strict(T.pvar(1), T.pvar(2))
        out = solve_constraints(cs)
        assert out == {0: 0, 1: 2, 2: 3}

    def test_omega_top(self):
        cs = PriorityConstraintSet()
        cs.add_strict(T.pvar(0), T.OMEGA)
        assert solve_constraints(cs) == {0: 0}


class TestScheduler:
    @pytest.mark.parametrize("n", [2, 3, 6])
    def test_paper_assignment(self, n):
        assert check(proc(scheduler_source(n)), {}).ok

    @pytest.mark.parametrize("n", [1, 2, 3, 6])
    def test_inference(self, n):
        assert check(proc(scheduler_source(n, "infer")), {}, mode="infer").ok

    def test_n1_paper_assignment_rejected(self):
        # the ring of one closes on itself: the ack branch priority cannot be
        # strictly below the ring priority when they coincide
        r = check(proc(scheduler_source(1)), {})
        assert not r.ok
        assert "not below" in str(r.error)


class TestCharacteristic:
    def test_bullet(self):
        x = Name(0, "x")
        assert characteristic_process(T.BULLET, x) == S.Inact()

    def test_select_case(self):
        x = Name(0, "x")
        p = characteristic_process(ty("+1{go: end}"), x)
        assert check(p, {x: ty("+1{go: end}")}).ok

    def test_random_adequacy(self):
        rng = random.Random(21)
        for i in range(150):
            a = genlib.random_session_type(rng, 4)
            x = Name(50_000 + i * 100, "x")
            p = characteristic_process(a, x, NameSupply(51_000 + i * 1000))
            r = check(p, {x: a})
            assert r.ok, (T.pretty_type(a), r.diagnostics)

    def test_free_tvar_rejected(self):
        with pytest.raises(C.CheckError):
            characteristic_process(T.TVar("X"), Name(0, "x"))


class TestUpToUnfolding:
    def test_identical(self):
        x = Name(0, "x")
        g = {x: ty("mu X . end %0 X")}
        p = characteristic_process(g[x], x)
        assert types_equal_up_to_unfolding(p, g, dict(g))

    def test_unfolded(self):
        x = Name(0, "x")
        p = characteristic_process(ty("mu X . end %0 X"), x)
        g1 = {x: ty("mu X . end %0 X")}
        g2 = {x: ty("end %0 (mu X . end %2 X)")}
        assert types_equal_up_to_unfolding(p, g1, g2)
        assert types_equal_up_to_unfolding(p, g2, g1)

    def test_dual_not_related(self):
        x = Name(0, "x")
        p = characteristic_process(ty("mu X . end %0 X"), x)
        assert not types_equal_up_to_unfolding(
            p, {x: ty("mu X . end %0 X")}, {x: ty("mu X . end *0 X")})


class TestSubjectReduction:
    def test_random_chains(self):
        from apcpcgv.apcp import runtime as R
        rng = random.Random(22)
        for i in range(10):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=700 + i)
            assert check(p, {}).ok
            cur = p
            for _ in range(10):
                rs = R.redexes(cur, 2)
                if not rs:
                    break
                cur = rs[0][1]
                assert check(cur, {}).ok

    def test_congruence_preserves_typing(self):
        rng = random.Random(23)
        for i in range(15):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=800 + i)
            assert check(S.normal_form(p), {}).ok


class TestCheckStarMonotone:
    def test_check_implies_star(self):
        rng = random.Random(24)
        for i in range(15):
            p = genlib.random_closed_process(rng, 2, 3, seed_base=900 + i)
            assert check(p, {}).ok
            assert check_star(p, {}).ok
