import random

import pytest

from apcpcgv.names import Label, Name, NameSupply
from apcpcgv.cgv import checker as CC
from apcpcgv.cgv import parser as CP
from apcpcgv.cgv import runtime as CR
from apcpcgv.cgv import syntax as G
from apcpcgv.cgv.syntax import (SEnd, SIn, SOut, SSel, SCase, dual_s)
import apcpcgv.corpus as corpus

import genlib


def term(src):
    return CP.parse_term(src)


def check(src):
    return CC.check_program(term(src))


class TestDual:
    def test_out_in(self):
        assert dual_s(SOut(G.UNIT, SEnd())) == SIn(G.UNIT, SEnd())

    def test_message_not_dualized(self):
        s = SOut(SOut(G.UNIT, SEnd()), SEnd())
        d = dual_s(s)
        assert isinstance(d, SIn) and d.msg == s.msg

    def test_end(self):
        assert dual_s(SEnd()) == SEnd()

    def test_involution(self):
        rng = random.Random(61)
        for _ in range(200):
            s = genlib.random_cgv_session(rng, 3)
            assert dual_s(dual_s(s)) == s


class TestTypeTerm:
    def test_unit(self):
        d = CC.type_term({}, G.Unit())
        assert isinstance(d.type, G.UnitT)

    def test_new_gives_dual_pair(self):
        d = CC.type_term({}, term("new : !1.end"))
        assert d.type == G.Prod(SOut(G.UNIT, SEnd()), SIn(G.UNIT, SEnd()))

    def test_free_var_closed_session(self):
        # a variable without a context entry is a finished session
        d = CC.type_term({}, G.Var(Name(5, "u")))
        assert d.rule == "T-EndR" and d.type == G.END

    def test_lambda_left_branch(self):
        # h held while a function from a finished session to unit is built
        d = check("""
            let (h, k) = new : ?end.end in
            spawn ( let k2 = send (u, k) in (),
                    (\\f2: end . let (v2, h2) = recv h in ()) f0 )
        """)
        assert isinstance(d.type, G.UnitT)

    def test_linearity_rejects_duplication(self):
        with pytest.raises(CC.CgvTypeError):
            check("let (x, y) = new : !1.end in "
                  "spawn ( let a = send ((), x) in (), "
                  "let b = send ((), x) in () )")

    def test_unused_linear_binder_rejected(self):
        with pytest.raises(CC.CgvTypeError):
            check("let (x, y) = new : !1.end in ()")

    def test_case_arms_same_context(self):
        src = """
        let (x, y) = new : (+){a: end, b: end} in
        spawn ( case y of { a: \\y2: end . (), b: \\y2: end . () },
                let x2 = select a x in () )
        """
        assert isinstance(check(src).type, G.UnitT)

    def test_corpus_programs(self):
        for name in ("C1", "CYCLIC_SAFE", "TWO_BUFFERS", "FUNCTION_OVER_CHANNEL"):
            d = check(getattr(corpus, name))
            assert isinstance(d.type, G.UnitT)
            assert d.info["marker"] == CC.MAIN


class TestBuffers:
    def test_empty_buffer_judgment(self):
        d = CC.type_buffer({}, (), SEnd(), SEnd())
        assert d.rule == "T-Buf"

    def test_message_folding(self):
        # buffer <(),ell> against S = !1 . (+){ell: !1.S', other: S''}
        inner = SOut(G.UNIT, SEnd())
        before = SOut(G.UNIT, SSel((("ell", inner), ("other", SEnd()))))
        msgs = (G.MTerm(G.Unit()), G.MLabel(Label("ell")), G.MTerm(G.Unit()))
        d = CC.type_buffer({}, msgs, before, SEnd())
        assert d.rule == "T-BufSend"

    def test_mismatch_rejected(self):
        with pytest.raises(CC.CgvTypeError):
            CC.type_buffer({}, (G.MTerm(G.Unit()),), SEnd(), SEnd())

    def test_config_with_buffer(self):
        sup = NameSupply(100)
        x, y = sup.fresh("x"), sup.fresh("y")
        v, y2 = sup.fresh("v"), sup.fresh("y2")
        conf = G.BufRes(x, y, (G.MTerm(G.Unit()),),
                        G.Thread(True, G.Split(v, y2, G.Recv(G.Var(y)),
                                               G.Spawn(G.PairT(G.Var(v), G.Unit())))),
                        SEnd(), SIn(G.UNIT, SEnd()))
        d = CC.type_config({}, conf)
        assert isinstance(d.type, G.UnitT) and d.info["marker"] == CC.MAIN

    def test_two_mains_rejected(self):
        conf = G.parc(G.Thread(True, G.Unit()), G.Thread(True, G.Unit()))
        with pytest.raises(CC.CgvTypeError):
            CC.type_config({}, conf)

    def test_child_must_be_unit(self):
        conf = G.Thread(False, term("new : !1.end"))
        with pytest.raises(CC.CgvTypeError):
            CC.type_config({}, conf)


class TestTermReduction:
    def test_beta_to_subst(self):
        sup = NameSupply(0)
        x = sup.fresh("x")
        t = G.App(G.Abs(x, G.UNIT, G.Var(x)), G.Unit())
        rs = CR.term_redexes(t)
        assert rs and rs[0][0].rule == "E-Lam"
        assert isinstance(rs[0][1], G.Sub)

    def test_worked_chain(self):
        # (\x. send((), x)) ((\y. y) z)  ->*  send'((), z): six term steps
        sup = NameSupply(0)
        x, y, z = sup.fresh("x"), sup.fresh("y"), sup.fresh("z")
        t = G.App(G.Abs(x, None, G.Send(G.PairT(G.Unit(), G.Var(x)))),
                  G.App(G.Abs(y, None, G.Var(y)), G.Var(z)))
        cur, steps = t, 0
        while steps < 10:
            rs = CR.term_redexes(cur, sup)
            if not rs:
                break
            cur = rs[0][1]
            steps += 1
        assert cur == G.SendP(G.Unit(), G.Var(z))
        # five reduction steps; the scope extrusion in between is a congruence
        assert steps == 5

    def test_send_requires_literal_pair(self):
        sup = NameSupply(0)
        t = G.Send(G.Var(sup.fresh("p")))
        assert not CR.term_redexes(t)


class TestConfigReduction:
    def test_new_creates_buffer(self):
        conf = G.Thread(True, term("let (x, y) = new : !1.end in "
                                   "spawn (let y2 = recv y in (), "
                                   "let x2 = send ((), x) in ())"))
        rs = CR.config_redexes(conf)
        assert rs[0][0].rule == "E-New"

    def test_runs_terminate_at_main_unit(self):
        for name in ("C1", "CYCLIC_SAFE", "TWO_BUFFERS", "FUNCTION_OVER_CHANNEL"):
            t = term(getattr(corpus, name))
            final, trace = CR.run_config(G.Thread(True, t), 300,
                                         NameSupply(8_000_000))
            assert CR.is_terminal_main_unit(final), name

    def test_buffer_fifo(self):
        # two sends then two receives: payloads arrive in order
        src = """
        let (x, y) = new : !end.!end.end in
        spawn ( let x2 = send (u1, x) in
                let x3 = send (u2, x2) in (),
                let (a, y2) = recv y in
                let (b, y3) = recv y2 in
                spawn ((\\p: end . \\q: end . ()) a b, ()) )
        """
        t = term(src)
        sup = NameSupply(8_500_000)
        cur = CR.config_normalize(G.Thread(True, t), sup)
        first_payload = None
        for _ in range(200):
            rs = CR.config_redexes(cur, sup)
            if not rs:
                break
            rule, nxt = rs[0]
            if rule.rule == "E-Recv" and first_payload is None:
                # the first receive must deliver u1 (the first send)
                def buf_of(c):
                    match c:
                        case G.BufRes(x_, y_, buf, body, xt, yt):
                            return buf if buf else buf_of(body)
                        case G.ParC(parts):
                            for q in parts:
                                b = buf_of(q)
                                if b:
                                    return b
                            return ()
                        case G.ConfSub(body, v_, r_):
                            return buf_of(body)
                        case _:
                            return ()
                buf = buf_of(cur)
                oldest = buf[-1]
                assert isinstance(oldest, G.MTerm)
                assert oldest.term == G.Var(next(
                    n for n in G.term_free_vars(oldest.term) if n.display == "u1"))
                first_payload = True
            cur = nxt
        assert first_payload and CR.is_terminal_main_unit(cur)

    def test_explore_confluence(self):
        t = term(corpus.FUNCTION_OVER_CHANNEL)
        ts = CR.explore_config(G.Thread(True, t), 2000, 150,
                               NameSupply(8_600_000))
        assert not ts.truncated
        terms = ts.terminal_keys()
        assert terms and all(CR.is_terminal_main_unit(ts.states[k])
                             for k in terms)


class TestNormalize:
    def test_idempotent(self):
        rng = random.Random(71)
        for i in range(10):
            t = genlib.random_cgv_program(rng, 2, 2, seed_base=3000 + i)
            sup = NameSupply(8_700_000 + i * 1000)
            n = CR.config_normalize(G.Thread(True, t), sup)
            assert CR.conf_key(n) == CR.conf_key(CR.config_normalize(n, sup))

    def test_parnil_collected(self):
        conf = G.parc(G.Thread(True, G.Unit()), G.Thread(False, G.Unit()))
        n = CR.config_normalize(conf)
        assert isinstance(n, G.Thread) and n.main

    def test_resnil_collected(self):
        sup = NameSupply(300)
        x, y = sup.fresh("x"), sup.fresh("y")
        conf = G.BufRes(x, y, (), G.Thread(True, G.Unit()), SEnd(), SEnd())
        n = CR.config_normalize(conf, sup)
        assert isinstance(n, G.Thread)

    def test_normalize_preserves_typing(self):
        rng = random.Random(72)
        for i in range(8):
            t = genlib.random_cgv_program(rng, 2, 2, seed_base=3100 + i)
            sup = NameSupply(8_800_000 + i * 1000)
            conf = G.Thread(True, t)
            d1 = CC.type_config({}, conf)
            cur = CR.config_normalize(conf, sup)
            for _ in range(6):
                d2 = CC.type_config({}, cur)
                assert d2.type == d1.type and d2.info["marker"] == CC.MAIN
                rs = CR.config_redexes(cur, sup)
                if not rs:
                    break
                cur = rs[0][1]
