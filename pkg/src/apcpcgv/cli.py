"""Command-line entry points.

Two command namespaces share one dispatcher: `apcp` for process files and
`cgv` for functional programs. Exit codes: 0 success, 1 type error,
2 verification failure, 3 parse error, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .names import NameSupply
from .apcp import checker as AC
from .apcp import parser as AP
from .apcp import runtime as R
from .apcp import syntax as S
from .cgv import checker as CC
from .cgv import parser as GP
from .cgv import runtime as CR
from .cgv import syntax as G
from . import corpus, translate as TR

EXIT_OK, EXIT_TYPE, EXIT_VERIFY, EXIT_PARSE, EXIT_USAGE = 0, 1, 2, 3, 64


def _emit(args, payload: dict, human: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(human)


def _read(path: str) -> str:
    return Path(path).read_text()


def _bounds(args) -> R.ExploreBounds:
    return R.ExploreBounds(max_states=args.max_states,
                           max_unfold_depth=args.max_unfold,
                           max_steps=args.max_steps)


# ---------------------------------------------------------------------------
# apcp commands
# ---------------------------------------------------------------------------


def _apcp_load(args) -> S.Process:
    return AP.parse_process(_read(args.file), NameSupply(args.seed))


def apcp_check(args) -> int:
    p = _apcp_load(args)
    mode = "infer" if args.infer else "check"
    res = AC.check(p, {}, mode=mode)
    if (not res.ok and mode == "check" and res.error is not None
            and res.error.rule == "priority"):
        mode = "infer"
        res = AC.check(p, {}, mode=mode)
    if args.dump_constraints:
        for c in res.constraints.all_constraints():
            print(f"  {c!r}", file=sys.stderr)
    if res.ok:
        pretty = {str(k): AC.T.pretty_type(v) for k, v in res.solved_types.items()}
        _emit(args, {"verdict": "ok", "mode": mode, "solved": pretty,
                     "assignment": res.assignment},
              f"well-typed ({mode} mode, "
              f"{len(res.constraints)} constraints)")
        return EXIT_OK
    if res.unsat is not None:
        _emit(args, {"verdict": "unsatisfiable",
                     "cycle": [repr(c) for c in res.unsat.cycle]},
              repr(res.unsat))
        return EXIT_VERIFY
    _emit(args, {"verdict": "ill-typed", "error": str(res.error)},
          f"type error: {res.error}")
    return EXIT_TYPE


def apcp_run(args) -> int:
    p = _apcp_load(args)
    final, trace = R.run(p, max_steps=args.max_steps)
    lines = [repr(l) for l in trace]
    if args.trace:
        for l in lines:
            print(f"  -> {l}")
    _emit(args, {"steps": len(trace), "trace": lines,
                 "final": S.pretty(final)},
          f"{len(trace)} steps; final: {S.pretty(final)}")
    return EXIT_OK


def apcp_explore(args) -> int:
    p = _apcp_load(args)
    ts = R.explore(p, _bounds(args))
    if args.dot:
        Path(args.dot).write_text(R.to_dot(ts))
    _emit(args, {"states": len(ts.states), "edges": len(ts.edges),
                 "truncated": ts.truncated,
                 "terminals": len(ts.terminal_keys())},
          f"{len(ts.states)} states, {len(ts.edges)} edges"
          f"{' (truncated)' if ts.truncated else ''}")
    return EXIT_OK


def apcp_verify(args) -> int:
    p = _apcp_load(args)
    res = AC.check(p, {}, mode="infer")
    if not res.ok:
        if res.unsat is not None:
            _emit(args, {"verdict": "unsatisfiable",
                         "cycle": [repr(c) for c in res.unsat.cycle]},
                  repr(res.unsat))
            return EXIT_VERIFY
        _emit(args, {"verdict": "ill-typed", "error": str(res.error)},
              f"type error: {res.error}")
        return EXIT_TYPE
    verdict = R.certify_deadlock_free(p, _bounds(args))
    ok = verdict.status in ("pass", "truncated")
    _emit(args, {"typing": "ok", "deadlock_freedom": verdict.status,
                 "detail": verdict.detail},
          f"typing ok; deadlock-freedom: {verdict.status} ({verdict.detail})")
    return EXIT_OK if ok else EXIT_VERIFY


def apcp_reactive(args) -> int:
    p = _apcp_load(args)
    target = None
    for n in sorted(S.free_names(p) | _bound_names(p), key=lambda n: n.id):
        if n.display == args.endpoint:
            target = n
            break
    if target is None:
        print(f"no endpoint named {args.endpoint}", file=sys.stderr)
        return EXIT_USAGE
    verdict = R.certify_reactive(p, target, _bounds(args))
    _emit(args, {"endpoint": args.endpoint, "verdict": verdict.status,
                 "detail": verdict.detail},
          f"{args.endpoint}: {verdict.status} ({verdict.detail})")
    return EXIT_OK if verdict.status == "pass" else EXIT_VERIFY


def _bound_names(p: S.Process) -> set:
    out = set()
    for q in S.subprocesses(p):
        match q:
            case S.Res(a, b, _):
                out |= {a, b}
            case S.Input(_, mb, cb, _):
                out |= {mb, cb}
            case S.Branch(_, cb, _):
                out.add(cb)
    return out


# ---------------------------------------------------------------------------
# cgv commands
# ---------------------------------------------------------------------------


def _cgv_load(args) -> G.Term:
    return GP.parse_term(_read(args.file), NameSupply(args.seed))


def cgv_check(args) -> int:
    t = _cgv_load(args)
    d = CC.check_program(t)
    _emit(args, {"verdict": "ok", "type": G.pretty_cgv_type(d.type),
                 "marker": d.info["marker"]},
          f"well-typed: {d.info['marker']} : {G.pretty_cgv_type(d.type)}")
    return EXIT_OK


def cgv_run(args) -> int:
    t = _cgv_load(args)
    final, trace = CR.run_config(G.Thread(True, t), max_steps=args.max_steps)
    if args.trace:
        for r in trace:
            print(f"  -> {r!r}")
    _emit(args, {"steps": len(trace), "trace": [repr(r) for r in trace],
                 "final": G.pp_conf(final)},
          f"{len(trace)} steps; final: {G.pp_conf(final)}")
    return EXIT_OK


def cgv_explore(args) -> int:
    t = _cgv_load(args)
    ts = CR.explore_config(G.Thread(True, t), max_states=args.max_states,
                           max_steps=args.max_steps)
    if args.dot:
        lines = ["digraph cgv {"]
        ids = {k: f"s{i}" for i, k in enumerate(ts.states)}
        for k, i in ids.items():
            lines.append(f'  {i} [label="{abs(hash(k)) % 0xFFFFFF:06x}"];')
        for f, lab, to in sorted(ts.edges):
            lines.append(f'  {ids[f]} -> {ids[to]} [label="{lab}"];')
        lines.append("}")
        Path(args.dot).write_text("\n".join(lines))
    _emit(args, {"states": len(ts.states), "edges": len(ts.edges),
                 "truncated": ts.truncated},
          f"{len(ts.states)} states, {len(ts.edges)} edges"
          f"{' (truncated)' if ts.truncated else ''}")
    return EXIT_OK


def cgv_translate(args) -> int:
    t = _cgv_load(args)
    tr = TR.translate_config(G.Thread(True, t), seed=args.seed)
    text = S.pretty(tr.process, sugar=False)
    ctx = ", ".join(f"{k}: {AC.T.pretty_type(v)}" for k, v in tr.context.items())
    if args.out:
        Path(args.out).write_text(text + "\n")
    _emit(args, {"process": text, "context": ctx,
                 "endpoint": str(tr.result_endpoint)},
          f"|- {ctx}\n{text}")
    return EXIT_OK


def cgv_verify(args) -> int:
    t = _cgv_load(args)
    v = TR.verify_df(G.Thread(True, t), seed=args.seed)
    if v.satisfiable:
        detail = ""
        if args.explain:
            detail = "\n" + "\n".join(
                f"  {c!r}" for c in v.constraints.all_constraints())
        _emit(args, {"verdict": "satisfiable",
                     "assignment": v.assignment,
                     "constraints": [repr(c) for c in v.constraints.all_constraints()]},
              f"deadlock-free: priority requirements satisfiable "
              f"({len(v.constraints)} constraints){detail}")
        return EXIT_OK
    cyc = "\n".join(f"  {c!r}" for c in (v.cycle or []))
    _emit(args, {"verdict": "unsatisfiable",
                 "cycle": [repr(c) for c in (v.cycle or [])]},
          f"possible deadlock: constraint cycle\n{cyc}")
    return EXIT_VERIFY


def cgv_correspond(args) -> int:
    t = _cgv_load(args)
    conf = G.Thread(True, t)
    payload = {}
    human = []
    ok = True
    if args.mode in ("completeness", "both"):
        rep = TR.completeness_check(conf, search_depth=args.depth)
        payload["completeness"] = {"checked": rep.checked,
                                   "failures": rep.failures}
        human.append(f"completeness: {rep.checked} steps, "
                     f"{len(rep.failures)} failures")
        ok = ok and rep.ok
    if args.mode in ("soundness", "both"):
        rep = TR.soundness_check(conf, depth=args.depth)
        payload["soundness"] = {"checked": rep.checked,
                                "failures": rep.failures}
        human.append(f"soundness: {rep.checked} lazy states, "
                     f"{len(rep.failures)} failures")
        ok = ok and rep.ok
    _emit(args, payload, "\n".join(human))
    return EXIT_OK if ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# shared: examples
# ---------------------------------------------------------------------------


def cmd_examples(args) -> int:
    names = sorted(corpus.ALL_EXAMPLES)
    if args.write:
        out = Path(args.write)
        out.mkdir(parents=True, exist_ok=True)
        for name in names:
            (out / name).write_text(corpus.ALL_EXAMPLES[name])
        print(f"wrote {len(names)} example programs to {out}")
    else:
        for name in names:
            print(name)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parsers
# ---------------------------------------------------------------------------


def _common(sub) -> None:
    sub.add_argument("--json", action="store_true", help="machine-readable output")
    sub.add_argument("--seed", type=int, default=0, help="fresh-name counter seed")
    sub.add_argument("--max-states", type=int, default=4000)
    sub.add_argument("--max-steps", type=int, default=400)
    sub.add_argument("--max-unfold", type=int, default=2)


def _build(prog: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog=prog)
    sub = ap.add_subparsers(dest="cmd", required=True)
    if prog == "apcp":
        c = sub.add_parser("check", help="type-check a process file")
        c.add_argument("file")
        c.add_argument("--infer", action="store_true")
        c.add_argument("--dump-constraints", action="store_true")
        _common(c)
        c.set_defaults(fn=apcp_check)
        c = sub.add_parser("run", help="deterministic reduction")
        c.add_argument("file")
        c.add_argument("--trace", action="store_true")
        _common(c)
        c.set_defaults(fn=apcp_run)
        c = sub.add_parser("explore", help="reachable-state graph")
        c.add_argument("file")
        c.add_argument("--dot")
        _common(c)
        c.set_defaults(fn=apcp_explore)
        c = sub.add_parser("verify", help="check + deadlock-freedom certification")
        c.add_argument("file")
        _common(c)
        c.set_defaults(fn=apcp_verify)
        c = sub.add_parser("reactive", help="certify an endpoint eventually fires")
        c.add_argument("file")
        c.add_argument("--endpoint", required=True)
        _common(c)
        c.set_defaults(fn=apcp_reactive)
    else:
        c = sub.add_parser("check", help="type-check a program")
        c.add_argument("file")
        _common(c)
        c.set_defaults(fn=cgv_check)
        c = sub.add_parser("run", help="run a program to completion")
        c.add_argument("file")
        c.add_argument("--trace", action="store_true")
        _common(c)
        c.set_defaults(fn=cgv_run)
        c = sub.add_parser("explore", help="configuration state space")
        c.add_argument("file")
        c.add_argument("--dot")
        _common(c)
        c.set_defaults(fn=cgv_explore)
        c = sub.add_parser("translate", help="translate into a process")
        c.add_argument("file")
        c.add_argument("--out")
        _common(c)
        c.set_defaults(fn=cgv_translate)
        c = sub.add_parser("verify", help="deadlock-freedom transfer")
        c.add_argument("file")
        c.add_argument("--explain", action="store_true")
        _common(c)
        c.set_defaults(fn=cgv_verify)
        c = sub.add_parser("correspond", help="operational correspondence harness")
        c.add_argument("file")
        c.add_argument("--depth", type=int, default=16)
        c.add_argument("--mode", choices=("completeness", "soundness", "both"),
                       default="both")
        _common(c)
        c.set_defaults(fn=cgv_correspond)
    c = sub.add_parser("examples", help="list or write the bundled corpus")
    c.add_argument("--write", metavar="DIR")
    c.set_defaults(fn=cmd_examples)
    return ap


def _dispatch(prog: str, argv: list[str] | None) -> int:
    ap = _build(prog)
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (AP.ParseError, GP.ParseError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (AC.CheckError, CC.CgvTypeError) as e:
        print(f"type error: {e}", file=sys.stderr)
        return EXIT_TYPE
    except FileNotFoundError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE


def main_apcp(argv: list[str] | None = None) -> int:
    return _dispatch("apcp", argv)


def main_cgv(argv: list[str] | None = None) -> int:
    return _dispatch("cgv", argv)


if __name__ == "__main__":
    prog = Path(sys.argv[0]).name
    sys.exit(main_cgv(sys.argv[1:]) if prog.startswith("cgv")
             else main_apcp(sys.argv[1:]))
