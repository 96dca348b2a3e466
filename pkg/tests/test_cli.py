from __future__ import annotations

import io
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import fixture_c
from precision_spectrum.cli import main, read_matrix
from precision_spectrum.model import sample_observations

FIXTURE_A = {"lambdas": [1, 3, 7], "mults": [120, 60, 60]}
FIXTURE_B = {"lambdas": [1, 2, 3], "mults": [80, 80, 80]}


def run(argv, stdin_text: str = ""):
    out = io.StringIO()
    code = main(argv, stdout=out, stdin=io.StringIO(stdin_text))
    return code, out.getvalue()


def small_config(tmp_path, **kw):
    doc = {"lambdas": [1, 3, 7], "fractions": ["1/2", "1/4", "1/4"], "ratio": "3/20", "N_grid": [24], "trials": 3}
    doc.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_estimate_from_eigenvalues():
    code, out = run(["estimate", "--eigs", "0.25,0.5,1", "--mults", "1,2", "--K", "6"])
    doc = json.loads(out)
    assert code == 0
    assert doc["gamma_breve"] == pytest.approx([10 / 9, 43 / 36], rel=1e-14)
    assert np.array(doc["theta_hat"]) == pytest.approx(np.array([[592 / 9, -80 / 9], [-80 / 9, 295 / 36]]), rel=1e-14)
    assert doc["g1_hat"] == pytest.approx((10 / 9 + 2 * 43 / 36) / 3)


def test_missing_mults_prints_usage(capsys):
    code = main(["estimate", "--eigs", "1,2", "--K", "6"], stdout=io.StringIO())
    assert code == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["estimate", "--eigs", "0.5,0.5,1", "--mults", "1,2", "--K", "6"], 3),
        (["estimate", "--eigs", "0,0.5,1", "--mults", "1,2", "--K", "6"], 3),
        (["estimate", "--eigs", "a,b", "--mults", "1,1", "--K", "6"], 2),
        (["estimate", "--eigs", "0.5,1", "--mults", "1,2", "--K", "6"], 2),
        (["estimate", "--eigs", "0.5,1", "--mults", "1,1"], 2),
        (["support", "--eigs", "3,1", "--mults", "1,1", "--c", "0.2"], 2),
        (["support", "--eigs", "1", "--mults", "1"], 2),
        (["simulate"], 2),
        (["frobnicate"], 2),
    ],
)
def test_exit_codes(argv, expected):
    assert run(argv)[0] == expected


def test_estimate_reads_raw_observations_from_stdin():
    K = 120
    Y = sample_observations(fixture_c(), K, seed=21)
    raw = Y.entries * np.sqrt(K)
    text = "\n".join(" ".join(repr(complex(v)) for v in row) for row in raw)
    code, out = run(["estimate", "--mults", "40,20"], text)
    doc = json.loads(out)
    assert code == 0 and doc["K"] == K and doc["N"] == 60
    assert doc["gamma_breve"] == pytest.approx([1.0, 0.2], rel=0.1)


def test_read_matrix_formats(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("# comment\n1,2,3\n4,5,6\n")
    assert np.array_equal(read_matrix(path), [[1, 2, 3], [4, 5, 6]])
    assert read_matrix(io.StringIO("1+2i 3\n0 -1j\n"))[0, 0] == 1 + 2j
    assert run(["estimate", "--mults", "1"], "1 2\n3\n")[0] == 2


def test_support_fixtures(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps(FIXTURE_A))
    b.write_text(json.dumps(FIXTURE_B))
    assert json.loads(run(["support", "--config", str(a), "--c", "0.15"])[1])["separable"] is True
    assert json.loads(run(["support", "--config", str(b), "--c", "0.375"])[1])["separable"] is False
    doc = json.loads(run(["support", "--eigs", "1", "--mults", "1", "--c", "0.25"])[1])
    assert doc["clusters_prec"][0] == pytest.approx([1 / 2.25, 1 / 0.25], abs=1e-8)


def test_simulate_csv_and_round_trip(tmp_path):
    cfg = small_config(tmp_path)
    eigs = tmp_path / "eigs.jsonl"
    code, out = run(["simulate", "--config", cfg, "--seed", "5", "--export-eigs", str(eigs)])
    assert code == 0
    assert out.splitlines()[0] == "N,K,estimator,bias,mse,excluded_trials"
    assert len(out.splitlines()) == 3
    lines = eigs.read_text().splitlines()
    assert len(lines) == 3
    for line in lines:
        rec = json.loads(line)
        eig_text = ",".join(repr(v) for v in rec["sigma_hat"])
        mults = ",".join(str(m) for m in rec["mults"])
        _, est = run(["estimate", "--eigs", eig_text, "--mults", mults, "--K", str(rec["K"])])
        assert json.loads(est)["gamma_breve"] == rec["gamma_breve"]


def test_seed_determinism(tmp_path):
    cfg = small_config(tmp_path)
    first = run(["simulate", "--config", cfg, "--seed", "9"])[1]
    assert run(["simulate", "--config", cfg, "--seed", "9"])[1] == first
    assert run(["simulate", "--config", cfg, "--seed", "10"])[1] != first
    clt = small_config(tmp_path, lambdas=[1, 5], fractions=["2/3", "1/3"], ratio="1/2", N_grid=[12], trials=5)
    assert run(["clt-check", "--config", clt, "--seed", "2"])[1] == run(["clt-check", "--config", clt, "--seed", "2"])[1]


def test_simulate_g1_table(tmp_path):
    cfg = small_config(tmp_path, outputs=["g1"])
    out = run(["simulate", "--config", cfg])[1]
    assert out.splitlines()[0] == "N,K,estimator,mse,excluded_trials"


def test_clt_check_writes_samples(tmp_path):
    cfg = small_config(tmp_path, lambdas=[1, 5], fractions=["2/3", "1/3"], ratio="1/2", N_grid=[12], trials=4)
    samples = tmp_path / "s.csv"
    code, out = run(["clt-check", "--config", cfg, "--out", str(samples)])
    assert code == 0 and json.loads(out)["sufficient"] is True
    text = samples.read_text()
    assert text.startswith("trial,m,s_value\n") and len(text.splitlines()) == 9


def test_timing_table(tmp_path):
    out = run(["timing", "--config", small_config(tmp_path, estimators=["proposed"])])[1]
    assert out.splitlines()[0] == "N,K,estimator,median_seconds,end_to_end_seconds"


def test_oracle_check_default_passes():
    code, out = run(["oracle-check"])
    doc = json.loads(out)
    assert code == 0 and doc["passed"]
    assert doc["max_rel_dev_gamma"] <= 1e-8 and doc["max_rel_dev_theta"] <= 1e-6 and doc["max_abs_I1"] <= 1e-6


def test_oracle_check_mismatch_exit_code():
    # 24 nodes per edge leave the single integral under-resolved
    code, out = run(["oracle-check", "--nodes", "24"])
    assert code == 5 and json.loads(out)["passed"] is False
    # two nodes cannot even certify a contour pair
    assert run(["oracle-check", "--nodes", "2"])[0] == 4


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "precision_spectrum", "estimate", "--eigs", "0.25,0.5,1", "--mults", "1,2", "--K", "6"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["N"] == 3
