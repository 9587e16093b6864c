import json
import math
from pathlib import Path

import pytest

from classdeg import cli
from classdeg.errors import UnknownSymbol, ValidationError
from classdeg.io import (
    instance_hash,
    load_instance,
    load_instance_dict,
    load_measure,
    load_potential,
    parse_word,
    potential_from_dict,
)
from classdeg.measures import entropy

INST = Path(__file__).resolve().parents[1] / "instances"


def run_cli(capsys, *argv):
    code = cli.run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_word():
    assert parse_word("ABA", ("A", "B")) == ("A", "B", "A")
    assert parse_word("a1.b1", ("a1", "b1")) == ("a1", "b1")
    assert parse_word("a1", ("a1", "b1")) == ("a1",)
    assert parse_word(["a1", "b1"], ("a1", "b1")) == ("a1", "b1")
    with pytest.raises(ValidationError):
        parse_word(3, ("A",))


def test_load_instances():
    t1 = load_instance(INST / "t1.json")
    assert t1.triple.y_alphabet == ("b",)
    assert len(t1.hash) == 64
    t3 = load_instance(INST / "t3.json")
    assert t3.triple.x.size == 4
    sliding = load_instance(INST / "sliding.json")
    assert sliding.recoding is not None
    # forbidden 111 with window [0, 1]: the 2-blocks all survive
    assert set(sliding.triple.x.alphabet) == {"00", "01", "10", "11"}


def test_instance_validation():
    base = {"alphabet": ["A", "B"], "transitions": [["A", "B"], ["B", "A"]], "code": {"A": "x", "B": "x"}}
    load_instance_dict(base)
    with pytest.raises(ValidationError):
        load_instance_dict({**base, "colour": 1})
    with pytest.raises(ValidationError):
        load_instance_dict({k: v for k, v in base.items() if k != "code"})
    with pytest.raises(UnknownSymbol):
        load_instance_dict({**base, "transitions": [["A", "C"]]})
    with pytest.raises(ValidationError):
        load_instance_dict({**base, "alphabet": ["A", "A"]})


def test_forbidden_pairs_remove_transitions():
    raw = {"alphabet": ["0", "1"], "transitions": ["00", "01", "10", "11"], "forbidden_words": ["11"],
           "code": {"0": "0", "1": "1"}}
    inst = load_instance_dict(raw)
    assert not inst.triple.x.is_legal("11")
    assert inst.triple.x.is_legal("010")


def test_hash_ignores_key_order():
    a = {"alphabet": ["A"], "transitions": [["A", "A"]], "code": {"A": "a"}}
    b = {"code": {"A": "a"}, "transitions": [["A", "A"]], "alphabet": ["A"]}
    assert instance_hash(a) == instance_hash(b)


def test_measures_and_potentials():
    t1 = load_instance(INST / "t1.json")
    mu = load_measure(INST / "bern03.json", t1)
    assert entropy(mu) == pytest.approx(0.610864, abs=1e-6)
    V = load_potential(INST / "indA.json", t1)
    assert V(("A",)) == pytest.approx(0.2) and V(("B",)) == 0.0
    table = potential_from_dict({"k": 2, "table": {"AA": 1, "AB": 0, "BA": 0, "BB": -1}}, t1)
    assert table(("B", "B")) == -1.0
    with pytest.raises(ValidationError):
        potential_from_dict({"type": "spline"}, t1)


def test_cli_degree(capsys):
    code, out, _ = run_cli(capsys, "degree", INST / "t1.json", "--measure", INST / "bern03.json")
    assert code == 0
    rep = json.loads(out)
    assert rep["result"]["depth"] == 1
    assert rep["tool"] == "classdeg"
    assert rep["instance_hash"] == load_instance(INST / "t1.json").hash
    assert rep["config"]["lmax"] == 6
    code, out, _ = run_cli(capsys, "degree", INST / "t3.json", "--measure", INST / "t3_sym.json")
    assert json.loads(out)["result"]["depth"] == 2


def test_cli_parry(capsys):
    code, out, _ = run_cli(capsys, "parry", INST / "goldenmean.json")
    assert code == 0
    assert json.loads(out)["result"]["entropy_nats"] == pytest.approx(math.log((1 + 5**0.5) / 2), abs=1e-12)


def test_cli_empty_shift(capsys):
    code, out, err = run_cli(capsys, "degree", INST / "empty.json", "--measure", INST / "bern03.json")
    assert code == 2
    assert "EmptyShift" in err
    assert out == ""


def test_cli_missing_file(capsys):
    code, _, err = run_cli(capsys, "parry", INST / "nope.json")
    assert code == 2
    assert "not found" in err


def test_cli_bad_flag():
    with pytest.raises(SystemExit) as info:
        cli.run(["parry", str(INST / "t1.json"), "--bogus"])
    assert info.value.code == 2


def test_cli_rejects_zero_lmax(capsys):
    code, _, err = run_cli(capsys, "degree", INST / "t1.json", "--measure", INST / "bern03.json", "--lmax", "0")
    assert code == 2
    assert "lmax" in err


def test_cli_no_feasible_cell(capsys):
    code, _, err = run_cli(capsys, "bound-report", INST / "t1.json", "--mu1", INST / "bern03.json",
                           "--mu2", INST / "bern07.json", "--potential", INST / "zero.json", "--N-grid", "8,16")
    assert code == 3
    assert "NoFeasibleCell" in err


def test_cli_resource_limit(capsys, monkeypatch):
    monkeypatch.setenv("CLASSDEG_MAX_BLOCKS", "4")
    code, _, err = run_cli(capsys, "routing-table", INST / "t1.json", "--measure", INST / "bern03.json",
                           "--tb", "bbbb/1/A")
    assert code == 4
    assert "ResourceLimit" in err


def test_cli_oracle_and_equilibrium(capsys):
    code, out, _ = run_cli(capsys, "oracle-classes", INST / "t3.json", "--y", "ab")
    assert code == 0 and json.loads(out)["result"]["classes"] == 2
    code, out, _ = run_cli(capsys, "equilibrium", INST / "t1.json", "--potential", INST / "zero.json")
    assert json.loads(out)["result"]["pressure"] == pytest.approx(math.log(2))


def test_cli_text_and_csv(capsys):
    code, out, _ = run_cli(capsys, "parry", INST / "goldenmean.json", "--format", "text")
    assert code == 0
    assert "result.entropy_nats: 0.48121182505960" in out
    code, _, err = run_cli(capsys, "parry", INST / "goldenmean.json", "--format", "csv")
    assert code == 2 and "csv" in err


def test_cli_pointroute(capsys):
    code, out, _ = run_cli(capsys, "pointroute-check", INST / "t1.json", "--mu1", INST / "bern03.json",
                           "--mu2", INST / "bern07.json", "--trials", "5", "--path-len", "500", "--workers", "1")
    res = json.loads(out)["result"]
    assert code == 0 and res["violations"] == 0 and res["occurrences"] == 5 * 498


def test_cli_deterministic(capsys):
    argv = ["joining-stats", INST / "t3.json", "--mu1", INST / "t3_sym.json", "--mu2", INST / "t3_sym.json",
            "--trials", "40", "--window", "200", "--seed", "7", "--workers", "1"]
    _, first, _ = run_cli(capsys, *argv)
    _, second, _ = run_cli(capsys, *argv)
    assert first == second
    argv = ["sample", INST / "t1.json", "--measure", INST / "bern03.json", "--seed", "3", "--workers", "1"]
    assert run_cli(capsys, *argv)[1] == run_cli(capsys, *argv)[1]


def test_cli_small_delta_csv(capsys):
    code, out, _ = run_cli(
        capsys, "delta", INST / "t1.json", "--mu1", INST / "bern03.json", "--mu2", INST / "bern07.json",
        "--potential", INST / "zero.json", "--grid", "N=8", "p=0.25", "--trials", "2", "--path-len", "20000",
        "--k", "3", "--hstar-trials", "2000", "--hstar-n", "64", "--workers", "1", "--format", "csv",
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2
    header = lines[0].split(",")
    assert "delta" in header and "positive95" in header
