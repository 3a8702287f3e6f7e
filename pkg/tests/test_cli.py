import io as stdio
import json

import numpy as np
import pytest

from conftest import DATA
from polydec import DecoupledModel, expand_decoupled, map_residual
from polydec import io
from polydec.cli import main

EX1 = str(DATA / "example1.json")
EX1_MODEL = str(DATA / "example1_model.json")
EX1_POINTS = str(DATA / "example1_points.json")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def rank_one_file(tmp_path):
    model = DecoupledModel([[1.0], [-1.0]], [[2.0], [1.0]], [[-1.0, -2.0, 1.0]])
    return write_json(tmp_path / "r1.json", io.polymap_to_dict(expand_decoupled(model)))


class TestTensorize:
    def test_q(self, capsys):
        code, out, _ = run(capsys, "tensorize", EX1, "--which", "q")
        assert code == 0
        Q = io.tensor_from_dict(json.loads(out)["Q"])
        assert Q.shape == (2, 2, 7)
        np.testing.assert_array_equal(Q[0], [[3, -8, -4, -3, -3, -3, -9], [9, -4, -20, -3, -9, -9, -15]])

    def test_j_with_points(self, capsys):
        code, out, _ = run(capsys, "tensorize", EX1, "--which", "j", "--points", EX1_POINTS)
        assert code == 0
        doc = json.loads(out)
        J = io.tensor_from_dict(doc["J"])
        np.testing.assert_array_equal(J[:, :, 2], [[-32, -76], [22, 38]])
        assert doc["plan"]["points"] == [[0, 0], [1, 0], [0, 1]]

    def test_ts(self, capsys):
        code, out, _ = run(capsys, "tensorize", EX1, "--which", "ts")
        assert code == 0
        assert [t["dims"] for t in json.loads(out)["T"]] == [[2, 2], [2, 2, 2], [2, 2, 2, 2]]

    def test_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for p in (a, b):
            assert main(["tensorize", EX1, "--which", "j", "--sample", "6", "--seed", "7", "-o", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().endswith("\n")

    def test_env_seed(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("POLYDEC_SEED", "7")
        _, via_env, _ = run(capsys, "tensorize", EX1, "--which", "j", "--sample", "6")
        monkeypatch.delenv("POLYDEC_SEED")
        _, via_flag, _ = run(capsys, "tensorize", EX1, "--which", "j", "--sample", "6", "--seed", "7")
        assert via_env == via_flag

    def test_stdin(self, monkeypatch, capsys):
        monkeypatch.setattr("sys.stdin", stdio.StringIO(open(EX1).read()))
        _, from_stdin, _ = run(capsys, "tensorize", "-")
        _, from_file, _ = run(capsys, "tensorize", EX1)
        assert from_stdin == from_file


class TestErrors:
    def test_invalid_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run(capsys, "info", str(bad))[0] == 2

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "info", str(tmp_path / "nope.json"))[0] == 2

    def test_constant_term(self, tmp_path, capsys):
        doc = {"m": 1, "n": 1, "d": 1, "terms": [{"i": 1, "alpha": [0], "coeff": 1.0}]}
        code, _, err = run(capsys, "info", write_json(tmp_path / "c.json", doc))
        assert code == 2
        assert "constant" in err

    def test_dimension_error(self, tmp_path, capsys):
        doc = {"m": 2, "n": 1, "d": 2, "terms": [{"i": 1, "alpha": [1, 0, 0], "coeff": 1.0}]}
        assert run(capsys, "info", write_json(tmp_path / "d.json", doc))[0] == 3

    def test_points_of_wrong_width(self, tmp_path, capsys):
        pts = write_json(tmp_path / "p.json", [[0.0, 0.0, 0.0]])
        assert run(capsys, "tensorize", EX1, "--which", "j", "--points", pts)[0] == 3


class TestDecouple:
    def test_coupled_example(self, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        report_path = tmp_path / "report.json"
        code, out, _ = run(
            capsys, "decouple", EX1, "--rank", "3", "--method", "coupled",
            "-o", str(model_path), "--report", str(report_path),
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["map_residual"] <= 1e-6
        assert set(json.loads(out)) == {"report", "model"}
        model_doc = json.loads(model_path.read_text())
        assert set(model_doc["metadata"]) == {"method", "residuals", "seed"}

    def test_model_round_trip(self, tmp_path, capsys):
        model_path = tmp_path / "model.json"
        _, out, _ = run(capsys, "decouple", EX1, "--rank", "3", "-o", str(model_path))
        reported = json.loads(out)["report"]["map_residual"]
        f = io.load_polymap(EX1)
        assert abs(map_residual(f, io.load_model(model_path)) - reported) <= 1e-12

    def test_jacobian_method_writes_report(self, tmp_path, capsys):
        report_path = tmp_path / "r.json"
        code, _, _ = run(capsys, "decouple", EX1, "--rank", "3", "--method", "j", "--report", str(report_path))
        assert code in (0, 4)
        assert "structure_residual" in json.loads(report_path.read_text())

    def test_rank_one(self, rank_one_file, capsys):
        code, out, _ = run(capsys, "decouple", rank_one_file, "--rank", "1")
        assert code == 0
        assert json.loads(out)["report"]["map_residual"] <= 1e-8

    def test_rank_too_small_gives_residual_exit(self, capsys):
        code, out, _ = run(capsys, "decouple", EX1, "--rank", "1", "--method", "q")
        assert code == 4
        assert json.loads(out)["report"]["map_residual"] > 1e-6

    def test_budget_exhaustion(self, capsys):
        code, _, _ = run(capsys, "decouple", EX1, "--rank", "2", "--max-iter", "1", "--restarts", "1")
        assert code == 5

    def test_rank_sweep(self, capsys):
        code, out, _ = run(capsys, "decouple", EX1, "--rank-sweep", "3")
        doc = json.loads(out)["report"]
        assert code == 0
        assert [row["rank"] for row in doc["sweep"]] == [1, 2, 3]
        assert doc["rank"] == 3

    def test_deterministic(self, capsys):
        first = run(capsys, "decouple", EX1, "--rank", "3", "--seed", "3")[1]
        second = run(capsys, "decouple", EX1, "--rank", "3", "--seed", "3")[1]
        assert first == second

    def test_rank_must_be_positive(self, capsys):
        with pytest.raises(SystemExit):
            main(["decouple", EX1, "--rank", "0"])


class TestVerify:
    def test_example_is_green(self, capsys):
        code, out, _ = run(capsys, "verify", EX1, "--model", EX1_MODEL, "--points", EX1_POINTS)
        doc = json.loads(out)
        assert code == 0 and doc["passed"]
        assert doc["coefficient_cpd_residual"] == 0.0

    def test_perturbed_model(self, tmp_path, capsys):
        doc = json.loads(open(EX1_MODEL).read())
        doc["W"][0][0] += 1.0
        code, out, _ = run(
            capsys, "verify", EX1, "--model", write_json(tmp_path / "m.json", doc), "--points", EX1_POINTS
        )
        assert code == 4
        assert json.loads(out)["coefficient_cpd_residual"] > 0.0

    def test_random_plan(self, capsys):
        code, out, _ = run(capsys, "verify", EX1, "--sample", "6", "--seed", "1")
        doc = json.loads(out)
        assert code == 0
        assert doc["identity_residual"] <= 1e-9
        assert doc["rank_A"] == doc["rank_bound"] == 6


class TestInfo:
    def test_example(self, capsys):
        code, out, _ = run(capsys, "info", EX1, "--rank", "3")
        doc = json.loads(out)
        assert code == 0
        assert (doc["delta"], doc["M"]) == (7, 6)
        assert (doc["coupled_parameters"], doc["decoupled_parameters"]) == (18, 21)

    def test_three_by_three_quintic(self, tmp_path, capsys):
        doc = {"m": 3, "n": 3, "d": 5, "terms": [{"i": 1, "alpha": [5, 0, 0], "coeff": 1.0}]}
        _, out, _ = run(capsys, "info", write_json(tmp_path / "q.json", doc), "--rank", "3")
        info = json.loads(out)
        assert (info["coupled_parameters"], info["decoupled_parameters"]) == (165, 33)
        assert info["with_constant_terms"] == [168, 36]

    def test_univariate(self, tmp_path, capsys):
        doc = {"m": 1, "n": 1, "d": 4, "terms": [{"i": 1, "alpha": [2], "coeff": 1.0}]}
        info = json.loads(run(capsys, "info", write_json(tmp_path / "u.json", doc))[1])
        assert (info["delta"], info["M"]) == (4, 4)
