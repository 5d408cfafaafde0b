import json
import re
from pathlib import Path

import numpy as np
import pytest

from drccp import io
from drccp.cli import dispatch
from drccp.conic import ConeProgram
from test_model import make_knapsack_problem


@pytest.fixture()
def knapsack_file(tmp_path):
    path = tmp_path / "knap.json"
    dispatch(["generate", "knapsack", "--seed", "5", "--n", "4", "--t", "2",
              "--samples", "8", "--out", str(path)])
    return path


@pytest.fixture()
def problem_file(tmp_path):
    p = make_knapsack_problem(n=2, T=1, N=3)
    path = tmp_path / "problem.json"
    io.save_problem(p, str(path))
    return path


def strip_timings(text: str) -> str:
    return re.sub(r"[0-9.e+-]+,optimal", "X,optimal", text)


class TestGenerate:
    def test_generate_transport(self, tmp_path):
        out = tmp_path / "t.json"
        code = dispatch(["generate", "transport", "--seed", "1", "--m", "3",
                         "--n", "4", "--samples", "6", "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert data["kind"] == "transport"
        assert np.asarray(data["samples"]).shape == (6, 12)

    def test_generate_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["generate", "knapsack", "--seed", "9", "--n", "3", "--t", "2",
                "--samples", "4"]
        dispatch(argv + ["--out", str(a)])
        dispatch(argv + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestBuildSolve:
    def test_build_then_solve_matches_fused(self, tmp_path, knapsack_file):
        ir = tmp_path / "prog.ir"
        assert dispatch(["build", "binary-cvar", "--problem", str(knapsack_file),
                         "--eps", "0.1", "--delta", "0.01", "--out", str(ir)]) == 0
        out1 = tmp_path / "sol1.json"
        out2 = tmp_path / "sol2.json"
        c1 = dispatch(["solve", "--program", str(ir), "--out", str(out1)])
        c2 = dispatch(["solve", "--problem", str(knapsack_file), "--model",
                       "binary-cvar", "--eps", "0.1", "--delta", "0.01",
                       "--out", str(out2)])
        assert c1 == 0 and c2 == 0
        s1 = json.loads(out1.read_text())
        s2 = json.loads(out2.read_text())
        assert s1["status"] == s2["status"] == "optimal"
        assert s1["objective"] == s2["objective"]
        assert s1["primal"] == s2["primal"]

    def test_build_ir_roundtrip(self, tmp_path, problem_file):
        ir = tmp_path / "r.ir"
        assert dispatch(["build", "robust", "--problem", str(problem_file),
                         "--out", str(ir)]) == 0
        prog = ConeProgram.from_text(ir.read_text())
        assert prog.n_vars >= 2

    def test_invalid_problem_exit_code(self, tmp_path):
        p = make_knapsack_problem(n=2, T=1)
        data = io.problem_to_dict(p)
        data["risk"] = 1.5
        bad = tmp_path / "bad.json"
        io.save_json(data, str(bad))
        assert dispatch(["build", "cvar", "--problem", str(bad),
                         "--out", str(tmp_path / "x.ir")]) == 1

    def test_mixed_variant_exit_code(self, tmp_path):
        p = make_knapsack_problem(n=2, T=1)
        data = io.problem_to_dict(p)
        data["constraints"].append(
            {"kind": "quadratic_xi", "A": np.eye(2).tolist(),
             "b": [0.0, 0.0], "h": 1.0}
        )
        bad = tmp_path / "mixed.json"
        io.save_json(data, str(bad))
        code = dispatch(["build", "cvar", "--problem", str(bad),
                         "--out", str(tmp_path / "x.ir")])
        assert code == 1

    def test_missing_file(self, tmp_path):
        assert dispatch(["build", "cvar", "--problem", str(tmp_path / "nope.json"),
                         "--out", str(tmp_path / "x.ir")]) == 1


class TestOracleCommand:
    def test_empty_selection_probability_zero(self, capsys, knapsack_file):
        code = dispatch(["oracle", "--problem", str(knapsack_file),
                         "--x", "0,0,0,0"])
        assert code == 0
        out = capsys.readouterr().out
        assert "probability=0" in out
        assert "feasible=true" in out

    def test_problem_file_oracle(self, capsys, problem_file):
        code = dispatch(["oracle", "--problem", str(problem_file), "--x", "1,1"])
        assert code == 0
        assert "probability=" in capsys.readouterr().out


class TestStudyCommand:
    def test_knapsack_study_outputs(self, tmp_path):
        argv = ["study", "knapsack", "--n", "5", "--t", "2", "--samples", "10",
                "--eps", "0.10", "--delta", "0.01", "--seed", "7",
                "--instances", "2", "--test-samples", "100",
                "--out", str(tmp_path / "ks")]
        assert dispatch(argv) == 0
        rows = (tmp_path / "ks_rows.csv").read_text()
        header = rows.splitlines()[:4]
        assert any("gap" in ln for ln in rows.splitlines())
        assert any(ln.startswith("#") for ln in header)

    def test_json_lines_format(self, tmp_path):
        argv = ["study", "knapsack", "--n", "4", "--t", "2", "--samples", "8",
                "--instances", "1", "--test-samples", "50", "--seed", "3",
                "--format", "json-lines", "--out", str(tmp_path / "j")]
        assert dispatch(argv) == 0
        lines = (tmp_path / "j_rows.jsonl").read_text().splitlines()
        assert len(lines) == 2
        assert all(json.loads(ln)["model"] in ("cvar", "exact") for ln in lines)

    def test_study_deterministic_modulo_timings(self, tmp_path):
        argv = ["study", "knapsack", "--n", "4", "--t", "2", "--samples", "8",
                "--eps", "0.10", "--delta", "0.01", "--seed", "7",
                "--instances", "1", "--test-samples", "50"]
        dispatch(argv + ["--out", str(tmp_path / "a")])
        dispatch(argv + ["--out", str(tmp_path / "b")])
        a = (tmp_path / "a_rows.csv").read_text()
        b = (tmp_path / "b_rows.csv").read_text()
        col = a.splitlines()[-2].split(",")
        assert len(col) == 9  # schema: seed..status
        assert strip_timings(a) == strip_timings(b)
