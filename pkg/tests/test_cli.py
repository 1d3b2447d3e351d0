import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from depsketch.transforms import load_operator

from depsketch import cli
from depsketch._rng import DEFAULT_SEED


def run(tmp_path, *argv, out="out"):
    return cli.run([*argv, "--out", str(tmp_path / out)])


def manifest(tmp_path, name, out="out"):
    return json.loads((tmp_path / out / f"{name}.manifest.json").read_text())


def test_dsep_gm1_shift1_passes(tmp_path):
    assert run(tmp_path, "dsep", "--template", "gm1", "--n", "5", "--varrho", "shift1") == 0
    rec = json.loads((tmp_path / "out" / "dsep.json").read_text())
    assert rec["verdict"] == "pass" and all(c["separated"] for c in rec["checks"])


def test_dsep_gm3_shift1_fails_with_exit_2(tmp_path, capsys):
    assert run(tmp_path, "dsep", "--template", "gm3", "--n", "3", "--varrho", "shift1") == 2
    assert "xi2 ; F2 | F0,F1" in capsys.readouterr().out


def test_dsep_query_and_dag_file(tmp_path):
    dag = tmp_path / "g.txt"
    dag.write_text("A -> C\nB -> C\n")
    assert run(tmp_path, "dsep", "--dag", str(dag), "--query", "A ; B | C") == 0
    rows = list(csv.DictReader((tmp_path / "out" / "dsep.csv").open()))
    assert rows[0]["separated"] == "False"


def test_usage_errors_exit_1(tmp_path):
    assert cli.run([]) == 1
    assert cli.run(["nope"]) == 1
    assert run(tmp_path, "rip", "--p", "x") == 1
    assert run(tmp_path, "dsep") == 1
    assert run(tmp_path, "bound", "--eps-grid", "0:1") == 1
    assert run(tmp_path, "jl", "--workers", "0") == 1


def test_bound_table_decreasing(tmp_path):
    assert run(tmp_path, "bound", "--dF", "1", "--dop", "0.5", "--gamma2", "2", "--eps-grid", "0.5:8:16") == 0
    rows = list(csv.DictReader((tmp_path / "out" / "bound.csv").open()))
    tail = [float(r["bound"]) for r in rows]
    assert len(tail) == 16 and all(a >= b for a, b in zip(tail, tail[1:]))
    assert tail[-1] < tail[0]


def test_rip_rerun_identical(tmp_path):
    args = ("rip", "--exact", "--p", "8", "--s", "2", "--n", "256", "--seed", "7")
    run(tmp_path, *args, out="a")
    run(tmp_path, *args, out="b")
    assert (tmp_path / "a" / "rip.json").read_bytes() == (tmp_path / "b" / "rip.json").read_bytes()
    assert (tmp_path / "a" / "rip.csv").read_bytes() == (tmp_path / "b" / "rip.csv").read_bytes()


def test_manifest_contents(tmp_path):
    run(tmp_path, "countsketch", "--n", "8", "--p", "4", "--d", "2", "--sketches", "2000", "--seed", "0x10")
    m = manifest(tmp_path, "countsketch")
    assert m["seed"] == 16 and m["subcommand"] == "countsketch"
    assert m["argv"][-2:] == ["--seed", "16"] and "--out" not in m["argv"]
    assert set(m["outputs"]) == {"countsketch.json", "countsketch.csv"}
    for key in ("version", "backend", "workers", "runtime", "params", "verdict"):
        assert key in m


def test_default_and_env_seed(tmp_path, monkeypatch):
    monkeypatch.delenv("DEPSKETCH_SEED", raising=False)
    run(tmp_path, "gen", "--n", "3", out="d")
    assert manifest(tmp_path, "gen", "d")["seed"] == DEFAULT_SEED
    monkeypatch.setenv("DEPSKETCH_SEED", "123")
    run(tmp_path, "gen", "--n", "3", out="e")
    assert manifest(tmp_path, "gen", "e")["seed"] == 123


def test_gen_matrix_csv(tmp_path):
    assert run(tmp_path, "gen", "--kind", "matrix", "--n", "2", "--p", "3", "--count", "2", "--gen", "adaptive") == 0
    rows = list(csv.DictReader((tmp_path / "out" / "gen.csv").open()))
    assert len(rows) == 12 and rows[-1]["matrix"] == "1"


@pytest.mark.parametrize("workers", [1, 4, 8])
def test_replay_identical_across_workers(tmp_path, workers):
    run(tmp_path, "jl", "--N", "8", "--p", "32", "--n", "16,32", "--trials", "40", "--gen", "adaptive", "--workers", "2")
    assert cli.run(["replay", str(tmp_path / "out" / "jl.manifest.json"), "--workers", str(workers)]) == 0


def test_replay_detects_tampering(tmp_path):
    run(tmp_path, "width", "--n", "4", "--p", "3", "--trials", "500")
    path = tmp_path / "out" / "width.manifest.json"
    m = json.loads(path.read_text())
    m["outputs"]["width.json"]["sha256"] = "0" * 64
    path.write_text(json.dumps(m))
    assert cli.run(["replay", str(path)]) == 2


def test_operator_dump_and_load(tmp_path):
    assert run(tmp_path, "operator", "--variant", "countsketch", "--n", "6", "--p", "4", "--hex", out="a") == 0
    dumped = tmp_path / "a" / "operator.op"
    assert run(tmp_path, "operator", "--load", str(dumped), "--apply", "1,2,3,4", out="b") == 0
    built = json.loads((tmp_path / "a" / "operator.json").read_text())
    loaded = json.loads((tmp_path / "b" / "operator.json").read_text())
    assert built["shape"] == loaded["shape"] == [6, 4]
    a = load_operator(dumped.read_text()).to_dense()
    b = load_operator((tmp_path / "b" / "operator.op").read_text()).to_dense()
    assert np.array_equal(a, b)
    assert np.allclose(loaded["image"], a @ [1, 2, 3, 4])
    assert run(tmp_path, "operator", "--apply", "1,2", out="c") == 1


def test_verify_subcommand_writes_report(tmp_path):
    assert run(tmp_path, "verify", "offdiag", "--family", "gm2", "--n", "4", "--trials", "20000") == 0
    rec = json.loads((tmp_path / "out" / "verify-offdiag.json").read_text())
    assert rec["verdict"] == "pass" and rec["quantity"]


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "depsketch.cli", "bound", "--dF", "1", "--dop", "1", "--gamma2", "1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and "verdict" in proc.stdout
