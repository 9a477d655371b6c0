import json

import pytest

from apcpcgv.cli import main_apcp, main_cgv
from apcpcgv import corpus


@pytest.fixture()
def exdir(tmp_path):
    assert main_apcp(["examples", "--write", str(tmp_path)]) == 0
    return tmp_path


def test_examples_listing(capsys):
    assert main_apcp(["examples"]) == 0
    out = capsys.readouterr().out
    assert "scheduler_n3.apcp" in out and "c1.cgv" in out


def test_apcp_check_scheduler(exdir):
    assert main_apcp(["check", str(exdir / "scheduler_n3.apcp")]) == 0
    assert main_apcp(["check", "--infer",
                      str(exdir / "scheduler_n3_infer.apcp")]) == 0


def test_apcp_check_deadlock_exit2(exdir, capsys):
    code = main_apcp(["check", str(exdir / "deadlock_cross.apcp")])
    assert code == 2
    assert "unsatisfiable" in capsys.readouterr().out


def test_apcp_explore_diamond(exdir, capsys, tmp_path):
    dot = tmp_path / "d.dot"
    assert main_apcp(["explore", str(exdir / "diamond.apcp"),
                      "--dot", str(dot), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["states"] == 6 and data["edges"] == 7
    assert dot.read_text().startswith("digraph")


def test_apcp_verify_scheduler(exdir):
    assert main_apcp(["verify", str(exdir / "scheduler_n2.apcp"),
                      "--max-states", "600", "--max-steps", "60"]) == 0


def test_apcp_run(exdir, capsys):
    assert main_apcp(["run", str(exdir / "diamond.apcp"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["steps"] == 3


def test_apcp_reactive(exdir):
    assert main_apcp(["reactive", str(exdir / "diamond.apcp"),
                      "--endpoint", "x"]) == 0


def test_apcp_parse_error(tmp_path):
    bad = tmp_path / "bad.apcp"
    bad.write_text("new x . (")
    assert main_apcp(["check", str(bad)]) == 3


def test_usage_error():
    assert main_apcp(["frobnicate"]) == 64


def test_cgv_check_and_run(exdir, capsys):
    assert main_cgv(["check", str(exdir / "c1.cgv")]) == 0
    assert main_cgv(["run", str(exdir / "c1.cgv"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert data["final"] == "main ()"


def test_cgv_verify_json_roundtrip(exdir, capsys):
    assert main_cgv(["verify", str(exdir / "c1.cgv"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["verdict"] == "satisfiable"
    assert main_cgv(["verify", str(exdir / "c1.cgv")]) == 0
    human = capsys.readouterr().out
    assert "satisfiable" in human  # verdicts agree across formats


def test_cgv_verify_crossed_exit2(tmp_path, capsys):
    crossed = tmp_path / "crossed.cgv"
    crossed.write_text("""
let (f, g) = new : !end.end in
let (h, k) = new : ?end.end in
spawn ( let (v2, h2) = recv h in
        let f2 = send (u, f) in (),
        let (u2, g2) = recv g in
        let k2 = send (v, k) in () )
""")
    assert main_cgv(["verify", str(crossed)]) == 2
    assert "cycle" in capsys.readouterr().out


def test_cgv_translate(exdir, tmp_path):
    out = tmp_path / "c1.apcp"
    assert main_cgv(["translate", str(exdir / "c1.cgv"),
                     "--out", str(out)]) == 0
    text = out.read_text()
    assert "new^" in text  # forwarder-enabled restrictions are emitted


def test_cgv_type_error(tmp_path):
    bad = tmp_path / "bad.cgv"
    bad.write_text("let (x, y) = new : !1.end in ()")
    assert main_cgv(["check", str(bad)]) == 1


def test_cgv_explore(exdir, capsys):
    assert main_cgv(["explore", str(exdir / "two_buffers.cgv"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["states"] > 1
