import json
from pathlib import Path

import numpy as np
import pytest

from mtlasso.cli import run
from mtlasso.container import read_container, write_container


def certificate_instance(tmp_path: Path) -> Path:
    data = tmp_path / "data"
    write_container(str(data), {
        "phi": np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        "psi": np.array([[1.0, 1.0]]),
    })
    return data


def test_solve_constrained_certificate(tmp_path, capsys):
    data = certificate_instance(tmp_path)
    out = tmp_path / "sol"
    code = run(["solve", "--phi", f"{data}:phi", "--psi", f"{data}:psi",
                "--constrained", "--out", str(out)])
    assert code == 0
    report = json.loads((tmp_path / "sol.report.json").read_text())
    assert abs(report["objective"] - 1.0) <= 1e-6
    assert report["support"] == [2]
    v = read_container(str(out)).get("v")
    assert v.shape == (1, 3)


def test_solve_regularized_requires_lambda(tmp_path):
    data = certificate_instance(tmp_path)
    code = run(["solve", "--phi", f"{data}:phi", "--psi", f"{data}:psi",
                "--out", str(tmp_path / "x")])
    assert code == 1


def test_missing_seed_is_usage_error(capsys):
    code = run(["experiment", "lasso-hist", "--D", "2", "--N", "3", "--K", "8",
                "--trials", "1", "--out", "/tmp/never"])
    assert code == 1
    assert "usage error" in capsys.readouterr().err


def test_rank_subcommand_prints_rank(tmp_path, capsys):
    data = tmp_path / "t"
    write_container(str(data), {"m": np.eye(5)})
    code = run(["rank", "--tensor", f"{data}:m", "--threshold", "1e-3"])
    assert code == 0
    assert capsys.readouterr().out.strip() == "5"


def test_rank_on_missing_tensor_is_input_error(tmp_path, capsys):
    data = tmp_path / "t"
    write_container(str(data), {"m": np.eye(2)})
    code = run(["rank", "--tensor", f"{data}:nope"])
    assert code == 2


def test_oracle_subcommand_writes_result(tmp_path):
    out = tmp_path / "oracle"
    code = run(["oracle", "--D", "2", "--N", "3", "--K", "7", "--rank-phi", "3",
                "--rank-psi", "2", "--seed", "12", "--out", str(out)])
    assert code == 0
    result = json.loads((tmp_path / "oracle.result.json").read_text())
    assert 3 <= result["min_support_size"] <= 6


def test_reduce_subcommand_roundtrip(tmp_path):
    s = np.random.default_rng(5)
    base = s.normal(size=(4, 3))
    phi = np.vstack([base, base])           # duplicated dictionary
    v_base = np.zeros((2, 4))
    v_base[:, 0] = [1.0, -1.0]
    v_base[:, 2] = [0.5, 0.5]
    psi = v_base @ base
    v = np.hstack([0.5 * v_base, 0.5 * v_base])
    data = tmp_path / "in"
    write_container(str(data), {"phi": phi, "psi": psi, "v": v})
    out = tmp_path / "red"
    code = run(["reduce", "--phi", f"{data}:phi", "--psi", f"{data}:psi",
                "--v", f"{data}:v", "--out", str(out)])
    assert code == 0
    trace = json.loads((tmp_path / "red.trace.json").read_text())
    assert trace["final_support"] <= trace["initial_support"]
    reduced = read_container(str(out)).get("v")
    assert np.linalg.norm(reduced @ phi - psi) <= 1e-7


def test_experiment_writes_histogram_and_sidecar(tmp_path):
    out = tmp_path / "hist"
    code = run(["experiment", "lasso-hist", "--D", "2", "--N", "3", "--K", "10",
                "--rank-phi", "2", "--rank-psi", "2", "--trials", "2",
                "--seed", "9", "--out", str(out)])
    assert code == 0
    sidecar = json.loads((tmp_path / "hist.json").read_text())
    assert sidecar["bounds"] == {"lower": 2, "upper": 4}
    assert sidecar["failures"] == 0
    csv = (tmp_path / "hist.csv").read_text()
    assert csv.startswith("support_size,count\n")


def test_train_subcommand_outputs(tmp_path):
    out = tmp_path / "net"
    code = run(["train", "--reg", "wd", "--lambda", "1e-3", "--iters", "500",
                "--width", "12", "--seed", "3", "--out", str(out)])
    assert code == 0
    cont = read_container(str(out))
    assert cont.get("W").shape == (12, 3)
    assert cont.get("V").shape == (3, 12)
    neurons = (tmp_path / "net.neurons.csv").read_text().splitlines()
    assert neurons[0] == "theta,b,v_norm,v1,v2,v3"
    trace = (tmp_path / "net.trace.csv").read_text().splitlines()
    assert trace[0] == "iter,objective"


def test_train_mlp_and_compress_pipeline(tmp_path):
    model = tmp_path / "model"
    code = run(["train-mlp", "--widths", "16,16", "--classes", "3", "--samples", "80",
                "--features", "5", "--lambda", "1e-3", "--iters", "300",
                "--seed", "21", "--out", str(model)])
    assert code == 0
    out = tmp_path / "small"
    code = run(["compress", "--model", str(model), "--data", f"{model}.data",
                "--lambda", "1e-8", "--layers", "1", "--out", str(out)])
    assert code == 0
    report = json.loads((tmp_path / "small.report.json").read_text())
    assert "1" in report["layers"]
    assert report["output_residual"] <= 0.05
    assert report["weight_sq_after"] <= report["weight_sq_before"] * (1 + 1e-6)


def file_bytes(*paths: Path) -> list[bytes]:
    return [p.read_bytes() for p in paths]


def test_seeded_invocations_are_bitwise_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["experiment", "lasso-hist", "--D", "2", "--N", "3", "--K", "8",
            "--rank-phi", "2", "--rank-psi", "2", "--trials", "2", "--seed", "33"]
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert file_bytes(tmp_path / "a.csv", tmp_path / "a.json") == \
        file_bytes(tmp_path / "b.csv", tmp_path / "b.json")


def test_unknown_subcommand_is_usage_error():
    assert run(["frobnicate"]) == 1
