import json
import os

import numpy as np
import pytest

from relu_rb import cli, verify
from relu_rb.calculus import concat_dense


def test_calculus_subcommand_ok(tmp_path, capsys):
    code = cli.main(["calculus", "--pairs", "25", "--seed", "3",
                     "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "calculus suite: ok" in out
    assert (tmp_path / "calculus.csv").exists()
    summary = json.loads((tmp_path / "calculus_summary.json").read_text())
    assert summary["schema"] == 1 and summary["ok"] is True


def test_calculus_deterministic_reports(tmp_path):
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    cli.main(["calculus", "--pairs", "20", "--seed", "9",
              "--out", str(dir_a)])
    cli.main(["calculus", "--pairs", "20", "--seed", "9",
              "--out", str(dir_b)])
    assert (dir_a / "calculus.csv").read_bytes() == \
        (dir_b / "calculus.csv").read_bytes()


def test_calculus_negative_control():
    """A corrupt composition must produce a failure row and a bad exit."""

    def corrupt_concat(first, second):
        net = concat_dense(first, second)  # wrong: loses exactness
        return net

    rows, summary = verify.run_calculus_suite(
        seed=0, pairs=10, sparse_impl=corrupt_concat)
    by_name = {row["check"]: row for row in rows}
    assert not by_name["sparse_concat_realization_exact"]["passed"] \
        or not by_name["compose_depth_sum"]["passed"]
    assert summary["ok"] is False


def test_inversion_subcommand(tmp_path, capsys):
    code = cli.main(["inversion", "--dims", "2", "--deltas", "0.5",
                     "--eps-list", "0.2,0.1", "--samples", "20",
                     "--seed", "4", "--out", str(tmp_path)])
    assert code == 0
    assert "inversion sweep: ok" in capsys.readouterr().out
    summary = json.loads(
        (tmp_path / "inversion_summary.json").read_text())
    assert summary["cells"] == 2


def test_inversion_m_column_matches_formula(tmp_path):
    from relu_rb.approx import neumann_steps
    rows, _ = verify.run_inversion_sweep([2], [0.5], [0.1], samples=5,
                                         seed=0)
    assert rows[0]["m"] == neumann_steps(0.1, 0.5)


def test_pipeline_subcommand_small(tmp_path, capsys):
    problem = {
        "name": "tiny", "p": 2, "D": 30, "seed": 3,
        "components": [
            {"kind": "constant", "value": 1.0},
            {"kind": "bump", "center": 0.35, "width": 0.3,
             "height": 0.06},
            {"kind": "poly", "coeffs": [0.03, -0.02]},
        ],
        "load": {"kind": "constant", "value": 1.0},
    }
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(problem))
    out_dir = tmp_path / "report"
    code = cli.main(["pipeline", "--problem", str(path),
                     "--samples", "25", "--seed", "2",
                     "--pod-tol", "1e-6", "--snapshots", "40",
                     "--out", str(out_dir)])
    assert code == 0
    assert "pipeline: ok" in capsys.readouterr().out
    summary = json.loads((out_dir / "pipeline_summary.json").read_text())
    assert summary["schema"] == 1
    assert summary["ok"] is True
    assert summary["sup_err_rb"] <= summary["eps"]
    for name in ("pipeline_samples.csv", "pipeline_solution.csv",
                 "pipeline_coefficient_budget.csv",
                 "pipeline_solution_budget.csv"):
        assert (out_dir / name).exists()


def test_bench_subcommand(capsys):
    code = cli.main(["bench", "--d", "2", "--delta", "0.5",
                     "--eps", "0.2", "--batch", "8", "--repeat", "1"])
    assert code == 0
    out = capsys.readouterr().out
    assert "ms per batch" in out


def test_thread_env_parsing(monkeypatch):
    monkeypatch.setenv("RELU_RB_THREADS", "3")
    assert verify.worker_count() == 3
    monkeypatch.setenv("RELU_RB_THREADS", "bogus")
    assert verify.worker_count() == 1
