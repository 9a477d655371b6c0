"""Bundled example programs: the cyclic scheduler family, the reduction
diamond, a crossed-receive deadlock, and the buffered-session programs."""

from __future__ import annotations


def scheduler_source(n: int, priorities: str = "paper") -> str:
    """Milner's cyclic scheduler with `n` workers in a ring.

    `priorities="paper"` uses the concrete assignment p_i = k_i = pi_i = i,
    rho_i = i + 2; `priorities="infer"` leaves every annotation `_`.
    """
    if n < 1:
        raise ValueError("need at least one worker")

    def pri(v: int) -> str:
        return "_" if priorities == "infer" else str(v)

    def worker_type(i: int) -> str:
        # endpoint a_i (scheduler side): select start, then await ack
        return f"mu X . +{pri(i)}{{start: &{pri(i)}{{ack: X}}}}"

    def ring_type(i: int) -> str:
        # endpoint c_i (receiving side of the ring link i)
        return f"mu X . &{pri(i)}{{start: &{pri(i + 2)}{{next: X}}}}"

    def leader(i: int, prev: int) -> str:
        a, c, d = f"a{i}", f"c{prev}", f"d{i}"
        return (f"rec X({a},{c},{d}) . "
                f"{d}!<start> . {a}!<start> . "
                f"{a}?{{ack: {d}!<next> . {c}?{{start: {c}?{{next: X<{a},{c},{d}>}}}}}}")

    def follower(i: int, prev: int) -> str:
        a, c, d = f"a{i}", f"c{prev}", f"d{i}"
        return (f"rec X({a},{c},{d}) . "
                f"{c}?{{start: {a}!<start> . {d}!<start> . "
                f"{a}?{{ack: {c}?{{next: {d}!<next> . X<{a},{c},{d}>}}}}}}")

    def worker(i: int) -> str:
        b = f"b{i}"
        return f"rec X({b}) . {b}?{{start: {b}!<ack> . X<{b}>}}"

    cells = []
    for i in range(1, n + 1):
        prev = n if i == 1 else i - 1
        body = leader(i, prev) if i == 1 else follower(i, prev)
        cells.append(f"new a{i} : {worker_type(i)} b{i} . ( {body} | {worker(i)} )")

    out = "( " + "\n| ".join(cells) + " )"
    for i in range(n, 0, -1):
        out = f"new c{i} : {ring_type(i)} d{i} .\n{out}"
    return f"# cyclic scheduler, {n} workers\n{out}\n"


DIAMOND = """\
# two sessions: two ordered outputs on x/y, one crossing output on z/u
new z u . (
  new x y . ( x![v1] . x![v2] . 0
            | z![v3] . y?(w1) . y?(w2) . 0 )
| u(w3,u2) . w3(e,f) . 0 )
"""

DEADLOCK_CROSS = """\
# both sides receive before their output can be consumed: priority cycle
new x : end %_ end y .
new z : end *_ end w .
( x(a,b) . z![c] . 0
| w(d,e) . y![f] . 0 )
"""

# Example configuration with two cyclically connected threads; asynchrony
# makes it deadlock-free even though both threads send before receiving.
C1 = """\
# cyclic two-channel program: send/recv crossing over two buffers
let (f, g) = new : !end.end in
let (h, k) = new : ?end.end in
spawn ( let f2 = send (u, f) in
        let (v2, h2) = recv h in (),
        let k2 = send (v, k) in
        let (u2, g2) = recv g in () )
"""

CYCLIC_SAFE = """\
# receive-then-send against send-then-receive on a cyclic topology
let (x, y) = new : ?end.end in
let (v, w) = new : !end.end in
spawn ( let (u, x2) = recv x in
        let v2 = send (q, v) in (),
        let y2 = send (u2, y) in
        let (q2, w2) = recv w in () )
"""

TWO_BUFFERS = """\
# acyclic double-buffer exchange: both threads send first
let (x, y) = new : !end.end in
let (v, w) = new : ?end.end in
spawn ( let x2 = send (u, x) in
        let (q, v2) = recv v in (),
        let w2 = send (q2, w) in
        let (u2, y2) = recv y in () )
"""

FUNCTION_OVER_CHANNEL = """\
# a function travels through the buffer and is applied by the receiver
let (x, y) = new : !((!1.end) -o end).(?1.end) in
spawn ( let (w, y2) = recv y in
        let y3 = (w y2) in (),
        let x2 = send (\\z: !1.end . send ((), z), x) in
        let (v, x3) = recv x2 in v )
"""

APCP_EXAMPLES = {
    "scheduler_n1.apcp": scheduler_source(1),
    "scheduler_n2.apcp": scheduler_source(2),
    "scheduler_n3.apcp": scheduler_source(3),
    "scheduler_n6.apcp": scheduler_source(6),
    "scheduler_n3_infer.apcp": scheduler_source(3, "infer"),
    "diamond.apcp": DIAMOND,
    "deadlock_cross.apcp": DEADLOCK_CROSS,
}

CGV_EXAMPLES = {
    "c1.cgv": C1,
    "cyclic_safe.cgv": CYCLIC_SAFE,
    "two_buffers.cgv": TWO_BUFFERS,
    "function_over_channel.cgv": FUNCTION_OVER_CHANNEL,
}

ALL_EXAMPLES = {**APCP_EXAMPLES, **CGV_EXAMPLES}
