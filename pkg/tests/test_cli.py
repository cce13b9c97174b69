import json

import numpy as np
import pytest

from mixid import io
from mixid.cli import main
from mixid.gmm import AffineMap, affine_pushforward, make_gmm
from mixid.suite import half_abs_network

CONFIG = """
[grid]
J = [2]
lambda_step = 0.5
mu = [-2.0, 2.0, 2.0]
alpha = [-1.0, 1.0, 1.0]
beta = [-1.0, 1.0, 1.0]
pi = [-1.0, 1.0, 1.0]

[ground_truth]
lambda = [0.5, 0.5]
mu = [-2.0, 2.0]
alpha = [1.0, -1.0]
beta = [1.0, 1.0]
pi = [0.0, -1.0]
noise_sigma = 0.5
"""


def snapshot(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.fixture
def latents(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(1000, 2)) * [1.0, 2.0]
    R = np.array([[0.8, -0.6], [0.6, 0.8]])
    io.write_matrix_csv(tmp_path / "run1.csv", a)
    io.write_matrix_csv(tmp_path / "run2.csv", a @ R.T)
    io.write_matrix_csv(tmp_path / "run3.csv", a[:, ::-1] * 2)
    return tmp_path


def test_gen_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["gen", "--kind", "parallelograms", "--n", "300", "--seed", "3",
                     "--out", str(tmp_path / d)]) == 0
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")
    assert (tmp_path / "a" / "data.csv").read_text().startswith("x1,x2\n")


def test_gen_pinwheel_flags(tmp_path):
    assert main(["gen", "--n", "200", "--radial-std", "0.1", "--out", str(tmp_path)]) == 0
    spec = json.loads((tmp_path / "spec.json").read_text())
    assert spec["radial_std"] == 0.1 and spec["kind"] == "pinwheel"


def test_mcc_weak(latents, capsys):
    out = latents / "rep"
    code = main(["mcc", "--a", str(latents / "run1.csv"), "--b", str(latents / "run2.csv"),
                 "--mode", "weak", "--cca-dim", "2", "--out", str(out)])
    assert code == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert 0.98 <= float(first) <= 1.0
    rep = json.loads((out / "mcc.json").read_text())
    assert rep["pair"] == ["run1", "run2"] and rep["mode"] == "weak"


def test_align(latents, capsys):
    assert main(["align", "--a", str(latents / "run1.csv"), "--b", str(latents / "run2.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(rep["map"]["A"], [[0.8, -0.6], [0.6, 0.8]], atol=1e-8)


def test_distaff(tmp_path, capsys):
    p = make_gmm([(0.5, [0.0, 0.0], np.eye(2)), (0.5, [2.0, 1.0], np.diag([1.0, 3.0]))])
    io.write_gmm(tmp_path / "p.json", p)
    io.write_gmm(tmp_path / "q.json", affine_pushforward(p, AffineMap([[1.0, 2.0], [0.0, 1.0]], [1.0, 1.0])))
    assert main(["distaff", "--p", str(tmp_path / "p.json"), "--q", str(tmp_path / "q.json")]) == 0
    assert json.loads(capsys.readouterr().out)["dist_aff_l2"] < 1e-6


def test_nll_scan_full(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG)
    for d in ("r1", "r2"):
        assert main(["nll-scan", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    assert snapshot(tmp_path / "r1") == snapshot(tmp_path / "r2")
    summary = json.loads((tmp_path / "r1" / "minimizers.json").read_text())
    assert summary["gibbs_violations"] == 0 and summary["cells"] == 3 * 9 * 729
    assert {"lambda": [0.5, 0.5], "mu": [-2.0, 2.0], "alpha": [1.0, -1.0], "beta": [1.0, 1.0],
            "pi": [0.0, -1.0], "J": 2} in summary["minimizers"]
    lines = (tmp_path / "r1" / "landscape.csv").read_text().splitlines()
    assert len(lines) == 1 + summary["cells"]


def test_nll_scan_slice(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG)
    assert main(["nll-scan", "--config", str(cfg), "--mode", "slice", "--param", "alpha1",
                 "--param", "mu1", "--out", str(tmp_path / "s")]) == 0
    summary = json.loads((tmp_path / "s" / "minimizers.json").read_text())
    assert [s["param"] for s in summary["slices"]] == ["alpha1", "mu1"]


def test_nll_scan_bad_toml(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[grid\n")
    assert main(["nll-scan", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_nll_scan_default_grid_too_large(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG.split("[ground_truth]")[1].join(["[ground_truth]", ""]))
    assert main(["nll-scan", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_inj_check_network(tmp_path, capsys):
    io.write_network(tmp_path / "net.json", half_abs_network())
    assert main(["inj-check", "--network", str(tmp_path / "net.json")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["verdict"]["level"] == "not_weakly_injective"
    assert rep["architecture"]["level"] == "unknown"


def test_suite_run_and_sweep(tmp_path, capsys):
    assert main(["suite", "run", "--case", "folded-priors", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "folded-priors.json").read_text())["passed"]
    capsys.readouterr()
    assert main(["suite", "sweep", "--trials", "3"]) == 0
    assert capsys.readouterr().out.splitlines()[0].startswith("trial,seed,")


def test_report(latents):
    runs = [str(latents / f"run{i}.csv") for i in (1, 2, 3)]
    assert main(["report", "--runs", *runs, "--dataset", "toy", "--out", str(latents / "r")]) == 0
    pairs = json.loads((latents / "r" / "pairs.json").read_text())
    assert len(pairs) == 3
    assert pairs[1]["strong_mcc"] == pytest.approx(1.0, abs=1e-12)
    table = (latents / "r" / "table.csv").read_text().splitlines()
    assert table[0] == "dataset,strong_mcc,weak_mcc,dist_aff_l2" and table[1].startswith("toy,")


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["mcc", "--a", "x.csv"], ["suite", "run"],
                                  ["gen", "--n", "ten", "--out", "o"]])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_domain_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("z1,z2\n1,2\n3\n")
    good = tmp_path / "good.csv"
    good.write_text("z1,z2\n1,2\n3,4\n")
    assert main(["mcc", "--a", str(bad), "--b", str(good)]) == 1
    assert "ParseError" in capsys.readouterr().err
    assert main(["mcc", "--a", str(tmp_path / "missing.csv"), "--b", str(good)]) == 1
    (tmp_path / "net.json").write_text("{not json")
    assert main(["inj-check", "--network", str(tmp_path / "net.json")]) == 1


def test_console_script_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "mixid.cli", "suite", "run", "--case", "half-abs"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["passed"]
