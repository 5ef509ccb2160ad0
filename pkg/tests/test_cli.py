import csv
import json

import numpy as np
import pytest

from ot_mmc.cli import main, parse_gen_spec, UsageError
from ot_mmc.instances import ProblemInstance, gen_uniform_cost, write_instance


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


def write_inst(tmp_path, inst, name="inst.json"):
    path = tmp_path / name
    path.write_text(write_instance(inst))
    return path


def test_gen_spec_grammar():
    inst = parse_gen_spec("euclidean:n=4,d=2,p=2,seed=7", "ot")
    assert inst.n == 4 and inst.metadata["generator"] == "euclidean"
    with pytest.raises(UsageError, match="unknown key"):
        parse_gen_spec("uniform:n=4,seed=1,colour=red", "ot")
    with pytest.raises(UsageError, match="unknown generator"):
        parse_gen_spec("gaussian:n=4", "ot")
    with pytest.raises(UsageError, match="needs"):
        parse_gen_spec("uniform:n=4", "ot")


def test_ot_verify(tmp_path):
    out, trace = tmp_path / "r.json", tmp_path / "t.csv"
    code = run("ot", "--gen", "euclidean:n=16,d=2,p=2,seed=7", "--epsilon", 0.05,
               "--out", out, "--trace", trace, "--verify")
    assert code == 0
    rep = load(out)
    assert rep["extra"]["abs_gap"] <= 0.05
    assert len(rep["certificate"]) == 16
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["iter", "dual", "imbalance", "kl_row", "kl_col"]
    assert len(rows) == len(rep["trace"]) + 1


def test_ot_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "kind": "ot", "n": 2}')
    assert run("ot", "--input", bad, "--epsilon", 0.1, "--out", tmp_path / "o.json") == 1
    assert "cost" in capsys.readouterr().err


def test_ot_eta_overflow(tmp_path, capsys):
    code = run("ot", "--gen", "uniform:n=2,seed=1", "--epsilon", 1e-9, "--out", tmp_path / "o.json")
    assert code == 1
    assert "rescale" in capsys.readouterr().err


def test_ot_budget_exhausted(tmp_path, monkeypatch):
    import ot_mmc.cli as cli
    from ot_mmc import sinkhorn

    monkeypatch.setattr(cli, "solve_ot", lambda C, mu, nu, eps: sinkhorn.solve_ot(C, mu, nu, eps, max_iterations=1))
    code = run("ot", "--gen", "uniform:n=8,seed=1", "--epsilon", 0.01, "--out", tmp_path / "o.json")
    assert code == 2
    assert load(tmp_path / "o.json")["converged"] is False


def test_mmc_verify(tmp_path):
    out, trace = tmp_path / "r.json", tmp_path / "t.csv"
    code = run("mmc", "--gen", "uniform:n=12,seed=3", "--epsilon", 0.05, "--out", out,
               "--trace", trace, "--verify")
    assert code == 0
    rep = load(out)
    assert rep["extra"]["abs_gap"] <= 0.05
    assert isinstance(rep["certificate"], list) and all(isinstance(v, int) for v in rep["certificate"])
    assert next(csv.reader(trace.open())) == ["iter", "dual", "imbalance"]


def test_mmc_constant(tmp_path):
    inst = ProblemInstance("mmc", np.full((5, 5), 0.3))
    out = tmp_path / "r.json"
    assert run("mmc", "--input", write_inst(tmp_path, inst), "--epsilon", 0.05, "--out", out) == 0
    rep = load(out)
    assert rep["upper_bound"] - rep["lower_bound"] == 0


def test_mmc_random_strategy_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run("mmc", "--gen", "uniform:n=9,seed=2", "--epsilon", 0.05,
                   "--strategy", "random:42", "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_mmc_csv_input(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("5,1\n2,7\n")
    out = tmp_path / "r.json"
    assert run("mmc", "--input", path, "--epsilon", 0.1, "--out", out, "--verify") == 0
    rep = load(out)
    assert rep["value"] == 1.5 and rep["certificate"] == [0, 1]


def test_scale_symmetric(tmp_path):
    u = np.full(3, 1 / 3)
    inst = ProblemInstance("scale", np.zeros((3, 3)), u, u)
    out = tmp_path / "r.json"
    assert run("scale", "--input", write_inst(tmp_path, inst), "--eta", 1.0, "--tol", 1e-12,
               "--out", out) == 0
    rep = load(out)
    x, y = np.array(rep["extra"]["x"]), np.array(rep["extra"]["y"])
    assert np.ptp(x) <= 1e-15 and np.ptp(y) <= 1e-15
    assert rep["extra"]["marginal_error"] <= 1e-12
    np.testing.assert_allclose(rep["certificate"], np.full((3, 3), 1 / 9), rtol=1e-14)


def test_balance_symmetric(tmp_path):
    A = np.random.default_rng(0).uniform(size=(4, 4))
    inst = ProblemInstance("balance", A + A.T)
    out = tmp_path / "r.json"
    assert run("balance", "--input", write_inst(tmp_path, inst), "--eta", 2.0, "--tol", 1e-8,
               "--out", out) == 0
    rep = load(out)
    assert rep["iterations"] == 0
    assert np.sum(rep["certificate"]) == pytest.approx(1.0)


def test_kind_mismatch(tmp_path):
    scale_inst = write_inst(tmp_path, gen_uniform_cost(3, 0, kind="scale"))
    bal_inst = write_inst(tmp_path, gen_uniform_cost(3, 0, kind="balance"), "b.json")
    assert run("balance", "--input", scale_inst, "--eta", 1, "--out", tmp_path / "o.json") == 1
    assert run("scale", "--input", bal_inst, "--eta", 1, "--out", tmp_path / "o.json") == 1


def test_usage_errors(tmp_path):
    assert run("ot", "--epsilon", 0.1, "--out", tmp_path / "o.json") == 1
    assert run("frobnicate") == 1
    assert run("bench", "--suite", "nope", "--sizes", "4", "--seeds", "0", "--out", tmp_path) == 1


def test_bench(tmp_path):
    out1, out2 = tmp_path / "one", tmp_path / "two"
    for out in (out1, out2):
        assert run("bench", "--suite", "uniform-mmc", "--sizes", "4,8", "--seeds", "0,1",
                   "--out", out, "--jobs", 2) == 0
    reports = sorted(p.name for p in out1.glob("*.json"))
    assert len(reports) == 4
    for name in reports:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    rows = list(csv.DictReader((out1 / "summary.csv").open()))
    assert len(rows) == 4
    assert all(float(r["gap"]) <= 0.05 for r in rows)
