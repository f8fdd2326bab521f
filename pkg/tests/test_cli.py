import csv
import json

import numpy as np
import pytest

from rba import cli, so3
from rba import equilibria as eq
from rba import particles as pt


def _run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    return list(csv.DictReader(text.splitlines()))


def test_thresholds_json(capsys):
    code, out, _ = _run(["thresholds"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["rho_c"] == 6.0
    assert rep["rho_star"] == pytest.approx(4.5832, abs=1e-3)
    assert rep["c_star"] == pytest.approx(0.4232, abs=1e-3)
    assert rep["alpha_star"] == pytest.approx(1.9395, abs=1e-3)
    assert set(rep["tolerances"]) == {"quad_epsrel", "root_xtol", "golden_tol"}


def test_branches_csv(capsys):
    code, out, _ = _run(["branches", "--points", "30"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "rho,c1_up,c1_down,c2,uniform_stable_flag"
    rows = _rows(out)
    rho = np.array([float(r["rho"]) for r in rows])
    assert rho[0] == 2.0 and rho[-1] == 40.0 and np.all(np.diff(rho) > 0)
    tab = eq.find_thresholds()
    star = next(r for r in rows if float(r["rho"]) == tab.rho_star)
    assert float(star["c1_up"]) == pytest.approx(tab.c_star, abs=1e-12)
    assert rows[0]["c1_up"] == "" and rows[0]["c2"] == ""
    crit = next(i for i, r in enumerate(rows) if float(r["rho"]) == 6.0)
    c2 = [float(r["c2"]) for r in rows[crit:]]
    assert c2[0] == 0.0 and np.all(np.diff(c2) > 0)
    assert 0.9 < float(rows[-1]["c1_up"]) < 1.0
    assert all(r["uniform_stable_flag"] == ("1" if float(r["rho"]) < 6 else "0") for r in rows)


def test_simulate_regimes_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["simulate", "--rho", "10", "--init", "uniform", "--seed", "7", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    raw = a.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"t,c,flux_norm\n")
    rows = _rows(a.read_text())
    assert len(rows) == 101
    assert abs(float(rows[-1]["c"]) - eq.find_thresholds().c1_up(10.0)) < 0.1
    code, out, _ = _run(["simulate", "--rho", "1", "--init", "aligned"], capsys)
    assert code == 0 and float(_rows(out)[-1]["c"]) < 0.25


def test_simulate_json_and_seventeen_digits(capsys):
    code, out, _ = _run(["simulate", "--rho", "3", "--n", "20", "--steps", "5", "--format", "json"], capsys)
    data = json.loads(out)
    assert code == 0 and len(data["c"]) == 6
    _, out, _ = _run(["simulate", "--rho", "3", "--n", "20", "--steps", "5"], capsys)
    value = _rows(out)[-1]["c"]
    assert float(value) == data["c"][-1] and value == "%.17g" % data["c"][-1]


@pytest.mark.parametrize(
    "args",
    [
        ["simulate"],
        ["simulate", "--rho", "1", "--init", "wobbly"],
        ["simulate", "--rho", "1", "--n", "0"],
        ["simulate", "--rho", "20"],
        ["launch"],
    ],
)
def test_usage_errors(args, capsys):
    code, _, err = _run(args, capsys)
    assert code == 2 and err


def test_bgk_uniform_and_trajectory(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out, _ = _run(["bgk", "--rho", "2", "--init", "random", "--report", str(report)], capsys)
    assert code == 0
    assert out.splitlines()[0] == "t,d1,d2,d3,V"
    v = np.array([float(r["V"]) for r in _rows(out)])
    assert np.all(np.diff(v) <= 1e-10)
    rep = json.loads(report.read_text())
    assert rep["class"] == "Uniform" and rep["status"] == "classified"
    assert rep["decay_rate"] == pytest.approx(2 * (1 - 2 / 6), rel=0.2)


def test_bgk_rotation_echoes_frame(capsys):
    code, out, _ = _run(["bgk", "--rho", "8", "--init", "rotation", "--seed", "3", "--format", "json"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["class"] == "AxialUp"
    a0 = cli.bgk_initial("rotation", 3)
    np.testing.assert_allclose(rep["frame"], a0, atol=1e-12)
    np.testing.assert_allclose(rep["j0"], a0)
    assert rep["alpha"] == pytest.approx(eq.solve_branch("AxialUp", 8.0))
    assert rep["decay_rate"] > 0


def test_bgk_exit_codes(capsys):
    code, out, _ = _run(["bgk", "--rho", "8", "--t-max", "0.5", "--format", "json"], capsys)
    assert code == 4 and json.loads(out)["status"] == "not_converged"
    code, _, err = _run(["bgk", "--rho", "80", "--init", "identity"], capsys)
    assert code == 3 and "domain" in err
    code, _, _ = _run(["bgk", "--rho", "2", "--matrix", "1,2,3"], capsys)
    assert code == 2
    code, out, _ = _run(["bgk", "--rho", "3", "--matrix", "1 0 0 0 0.5 0 0 0 0.2", "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["class"] == "Uniform"


def test_classify_outputs(capsys):
    code, out, _ = _run(["classify", "--rho", "7"], capsys)
    rep = json.loads(out)
    assert code == 0 and not rep["critical"]
    sig = {e["family"]: e["signature"] for e in rep["equilibria"]}
    assert sig == {"Uniform": "(---)", "AxialUp": "(+++)", "AxialDown": "(+--)", "Rank1": "(++-)"}
    code, out, _ = _run(["classify", "--rho", "5", "--format", "csv"], capsys)
    rows = _rows(out)
    assert [r["stable"] for r in rows] == ["1", "1", "0"]
    code, _, _ = _run(["classify", "--rho", "0"], capsys)
    assert code == 3


SMALL_SWEEP = ["sweep", "--rho-values", "3,5.5", "--c-init", "0,1", "--replicates", "2", "--n", "40", "--steps", "30"]


def test_sweep_is_worker_independent(tmp_path, monkeypatch):
    outputs = []
    for workers in ("1", "8"):
        monkeypatch.setenv("RBA_THREADS", workers)
        path = tmp_path / f"s{workers}.csv"
        assert cli.main(SMALL_SWEEP + ["--seed", "99", "--out", str(path)]) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
    rows = _rows(outputs[0].decode())
    assert [int(r["index"]) for r in rows] == list(range(8))
    assert len({r["seed"] for r in rows}) == 8


def test_sweep_single_point_matches_simulate(capsys, monkeypatch):
    monkeypatch.setenv("RBA_THREADS", "1")
    code, out, _ = _run(
        ["sweep", "--rho-values", "4", "--c-init", "0.5", "--n", "50", "--steps", "20", "--seed", "5"], capsys
    )
    row = _rows(out)[0]
    seed = cli.record_seed(5, 0)
    assert code == 0 and int(row["seed"]) == seed
    ts = pt.run(pt.SimConfig(rho=4.0, n_particles=50, n_steps=20, seed=seed, init="vmc:0.5"))
    assert float(row["c_final"]) == ts.final_c and float(row["c_initial"]) == ts.c_values[0]


def test_sweep_low_density_and_partial_failure(capsys, monkeypatch):
    monkeypatch.setenv("RBA_THREADS", "1")
    code, out, _ = _run(
        ["sweep", "--rho-values", "3", "--c-init", "0,0.5,1,1.5", "--n", "100", "--steps", "300", "--timing"], capsys
    )
    rows = _rows(out)
    assert code == 0 and "wall_time" in rows[0]
    assert [r["status"] for r in rows] == ["ok", "ok", "ok", "error:DomainError"]
    assert rows[3]["c_final"] == ""
    assert all(float(r["c_final"]) < 0.2 for r in rows[:3])


def test_worker_count_env(monkeypatch, capsys):
    monkeypatch.setenv("RBA_THREADS", "zero")
    code, _, _ = _run(SMALL_SWEEP, capsys)
    assert code == 2
    monkeypatch.setenv("RBA_THREADS", "3")
    assert cli.worker_count() == 3
    monkeypatch.delenv("RBA_THREADS")
    assert cli.worker_count() >= 1


def test_default_sweep_grid_is_dense_near_transition():
    rho = np.array(cli.DEFAULT_SWEEP_RHO)
    inside = rho[(rho >= 4) & (rho <= 7)]
    assert len(inside) >= len(rho) / 2 and np.all(np.diff(rho) > 0)


def test_bgk_presets():
    for name in cli.BGK_PRESETS:
        j = cli.bgk_initial(name, 1)
        assert j.shape == (3, 3)
    assert so3.is_rotation(cli.bgk_initial("rotation", 1))
    assert np.linalg.matrix_rank(cli.bgk_initial("rank1", 1)) == 1
