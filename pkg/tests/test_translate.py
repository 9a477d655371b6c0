import random

import pytest

from apcpcgv.names import Name, NameSupply
from apcpcgv.apcp import checker as AC
from apcpcgv.apcp import runtime as R
from apcpcgv.apcp import syntax as S
from apcpcgv.apcp import types as T
from apcpcgv.cgv import checker as CC
from apcpcgv.cgv import parser as CP
from apcpcgv.cgv import runtime as CR
from apcpcgv.cgv import syntax as G
from apcpcgv.cgv.syntax import SEnd, SIn, SOut, dual_s
from apcpcgv import translate as TR
from apcpcgv.translate import (trans_type, translate_config, translate_term,
                               verify_df)
import apcpcgv.corpus as corpus

import genlib


class TestTransType:
    def setup_method(self):
        self.ps = T.PrioritySupply()

    def test_unit_and_end(self):
        assert trans_type(G.UNIT, self.ps) == T.BULLET
        assert trans_type(G.END, self.ps) == T.BULLET

    def test_output_shape(self):
        t = trans_type(SOut(G.UNIT, SEnd()), self.ps)
        # (dual[[1]] tensor .) par [[end]]
        assert isinstance(t, T.ParT) and isinstance(t.left, T.Tensor)
        assert t.left.left == T.BULLET and t.right == T.BULLET

    def test_input_shape(self):
        t = trans_type(SIn(G.UNIT, SEnd()), self.ps)
        assert isinstance(t, T.Tensor) and isinstance(t.left, T.ParT)

    def test_duality_preserved(self):
        rng = random.Random(81)
        for _ in range(200):
            s = genlib.random_cgv_session(rng, 3)
            ps = T.PrioritySupply()
            a = trans_type(s, ps)
            b = trans_type(dual_s(s), ps)
            # equal up to the fresh priority instances
            assert T.canonical_type(_erase(a)) == T.canonical_type(
                _erase(T.dual(b)))


def _erase(t):
    return T.map_priorities(t, lambda p: T.concrete(0))


class TestTransTerm:
    def test_variable_is_forwarder(self):
        x = Name(3, "x")
        tr = translate_term(G.Var(x), {x: SOut(G.UNIT, SEnd())})
        assert isinstance(tr.process, S.Fwd)

    def test_unit_is_inaction(self):
        tr = translate_term(G.Unit())
        assert isinstance(tr.process, S.Inact)
        assert tr.context[tr.result_endpoint] == T.BULLET

    def test_worked_five_step_reduction(self):
        # [[(\z. send ((), z)) y]]q reaches [[send'((), y)]]q in 5 steps
        sup = NameSupply(0)
        y = sup.fresh("y")
        z = sup.fresh("z")
        lam = G.Abs(z, SOut(G.UNIT, SEnd()), G.Send(G.PairT(G.Unit(), G.Var(z))))
        ctx = {y: SOut(G.UNIT, SEnd())}
        q = Name(99, "q")
        tr1 = translate_term(G.App(lam, G.Var(y)), ctx, z=q)
        tr2 = translate_term(G.SendP(G.Unit(), G.Var(y)), ctx, z=q, seed=1)
        target = S.canon_key(tr2.process)
        dist = _min_distance(tr1.process, target, 8)
        assert dist == 5

    def test_translations_check_star(self):
        rng = random.Random(83)
        for i in range(12):
            ctx, t = genlib.random_open_term(rng, 2, seed_base=4000 + i)
            tr = translate_term(t, ctx, seed=i)
            res = AC.check_star(tr.process, tr.context)
            assert res.ok, res.diagnostics

    def test_context_is_dual_translation(self):
        x = Name(7, "chan")
        s = SOut(G.UNIT, SEnd())
        tr = translate_term(G.Var(x), {x: s})
        want = T.dual(trans_type(s, T.PrioritySupply()))
        assert T.canonical_type(_erase(tr.context[x])) == \
            T.canonical_type(_erase(want))


def _min_distance(p, target_key, bound):
    start = S.normal_form(p)
    if S.canon_key(start) == target_key:
        return 0
    seen = {S.canon_key(start)}
    frontier = [start]
    for d in range(1, bound + 1):
        nxt = []
        for q in frontier:
            for _, succ in R.redexes(q, 0):
                k = S.canon_key(succ)
                if k in seen:
                    continue
                seen.add(k)
                if k == target_key:
                    return d
                nxt.append(succ)
        frontier = nxt
    return None


class TestTransConfig:
    def test_buffered_restriction(self):
        sup = NameSupply(500)
        x, y, v, y2 = (sup.fresh("x"), sup.fresh("y"), sup.fresh("v"),
                       sup.fresh("y2"))
        conf = G.BufRes(
            x, y, (G.MTerm(G.Unit()),),
            G.Thread(True, G.Split(v, y2, G.Recv(G.Var(y)),
                                   G.Spawn(G.PairT(G.Var(v), G.Unit())))),
            SEnd(), SIn(G.UNIT, SEnd()))
        tr = translate_config(conf)
        assert AC.check_star(tr.process, tr.context).ok
        # the buffered message appears as a forwarded output: a restriction
        # holding a forwarder and an output in parallel
        found = False
        for q in S.subprocesses(tr.process):
            if isinstance(q, S.Res) and isinstance(q.body, S.Par):
                kinds = {type(a) for a in q.body.parts}
                if kinds == {S.Fwd, S.Output}:
                    found = True
        assert found

    def test_empty_buffer_is_plain_restriction(self):
        t = CP.parse_term(corpus.C1)
        tr = translate_config(G.Thread(True, t))
        assert AC.check_star(tr.process, tr.context).ok

    def test_corpus_type_preservation(self):
        for i, name in enumerate(("C1", "CYCLIC_SAFE", "TWO_BUFFERS",
                                  "FUNCTION_OVER_CHANNEL")):
            t = CP.parse_term(getattr(corpus, name))
            tr = translate_config(G.Thread(True, t), seed=i)
            res = AC.check_star(tr.process, tr.context)
            assert res.ok, (name, res.diagnostics)
            assert set(tr.context) == {tr.result_endpoint}

    def test_reduced_configurations_preserved(self):
        rng = random.Random(85)
        for i in range(4):
            t = genlib.random_cgv_program(rng, 2, 2, seed_base=4100 + i)
            sup = NameSupply(9_000_000 + i * 10_000)
            cur = CR.config_normalize(G.Thread(True, t), sup)
            for step in range(6):
                tr = translate_config(cur, seed=step)
                assert AC.check_star(tr.process, tr.context).ok
                rs = CR.config_redexes(cur, sup)
                if not rs:
                    break
                cur = rs[0][1]


class TestVerifyDf:
    def test_c1_satisfiable(self):
        t = CP.parse_term(corpus.C1)
        v = verify_df(G.Thread(True, t))
        assert v.satisfiable and v.assignment is not None

    def test_crossed_unsatisfiable(self):
        crossed = """
        let (f, g) = new : !end.end in
        let (h, k) = new : ?end.end in
        spawn ( let (v2, h2) = recv h in
                let f2 = send (u, f) in (),
                let (u2, g2) = recv g in
                let k2 = send (v, k) in () )
        """
        v = verify_df(G.Thread(True, CP.parse_term(crossed)))
        assert not v.satisfiable
        assert len(v.cycle) >= 2

    def test_non_main_rejected(self):
        with pytest.raises(CC.CgvTypeError):
            verify_df(G.Thread(False, G.Unit()))


class TestCorrespondence:
    def test_completeness_prefix_of_c1(self):
        t = CP.parse_term(corpus.C1)
        rep = TR.completeness_check(G.Thread(True, t), steps=6)
        assert rep.checked == 6 and rep.ok, rep.failures

    def test_zero_steps_trivial(self):
        rep = TR.completeness_check(G.Thread(True, G.Unit()), steps=4)
        assert rep.checked == 0 and rep.ok

    def test_soundness_small(self):
        t = CP.parse_term(corpus.TWO_BUFFERS)
        rep = TR.soundness_check(G.Thread(True, t), depth=4, cgv_bound=250,
                                 chase_depth=12)
        assert rep.ok, rep.failures[:2]

    def test_stuck_translation_has_no_lazy_redex(self):
        sup = NameSupply(9_500_000)
        x, u, w = sup.fresh("x"), sup.fresh("u"), sup.fresh("w")
        term = G.Sub(G.Abs(w, G.END, G.Var(u)), u,
                     G.SendP(G.Unit(), G.Var(x)))
        tr = translate_config(G.Thread(True, term),
                              ctx={x: SOut(G.UNIT, G.END)})
        assert R.lazy_redexes(tr.process, 0) == []
        assert R.redexes(tr.process, 0)  # standard semantics does reduce

    def test_buffered_variant_reduces_lazily(self):
        sup = NameSupply(9_600_000)
        x, y, u, u0, w = (sup.fresh("x"), sup.fresh("y"), sup.fresh("u"),
                          sup.fresh("u0"), sup.fresh("w"))
        v2, y2 = sup.fresh("v2"), sup.fresh("y2")
        term = G.Sub(G.Abs(w, G.END, G.Var(u)), u,
                     G.SendP(G.Var(u0), G.Var(x)))
        child = G.Thread(False, G.Split(v2, y2, G.Recv(G.Var(y)), G.Unit()))
        conf = G.BufRes(x, y, (), G.parc(G.Thread(True, term), child),
                        SOut(G.END, G.END), SIn(G.END, G.END))
        tr = translate_config(conf, seed=4)
        lz = R.lazy_redexes(tr.process, 0)
        assert lz
        flushed = G.BufRes(x, y, (G.MTerm(G.Var(u0)),),
                           G.parc(G.Thread(True, G.Abs(w, G.END, G.Var(x))),
                                  child),
                           G.END, SIn(G.END, G.END))
        target = S.canon_key(translate_config(flushed, seed=5).process)
        assert any(S.canon_key(succ) == target for _, succ in lz)
