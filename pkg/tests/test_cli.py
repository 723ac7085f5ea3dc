import json

import numpy as np
import pytest

from easecp.cli import main


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "d.cps"
    assert run(["synth", "--n", 3000, "--k", 10, "--l", 3, "--accuracy", 0.7,
                "--seed", 5, "-o", path]) == 0
    return path


@pytest.fixture(scope="module")
def model_file(synth_file, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "m.json"
    assert run(["calibrate", "--data", synth_file, "--score", "lac",
                "--alpha", "0.1", "--seed", 5, "-o", path]) == 0
    return path


class TestSubcommands:
    def test_synth_writes_cps1(self, synth_file):
        assert synth_file.read_bytes()[:4] == b"CPS1"

    def test_synth_csv(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run(["synth", "--n", 50, "--k", 4, "--seed", 1, "-o", out,
                    "--format", "csv"]) == 0
        assert out.read_text().startswith("label,p0")

    def test_synth_regression(self, tmp_path):
        out = tmp_path / "r.cps"
        assert run(["synth", "--n", 200, "--k", 2, "--regression", "--seed", 2,
                    "-o", out]) == 0
        assert out.read_bytes()[4] == 1  # kind byte

    def test_calibrate_embeds_config(self, model_file):
        doc = json.loads(model_file.read_text())
        assert doc["format"] == "easecp-model"
        assert doc["cli"]["tool"] == "easecp"
        assert doc["cli"]["seed"] == 5
        assert doc["cli"]["config"]["alpha"] == 0.1

    def test_calibrate_mondrian(self, synth_file, tmp_path):
        out = tmp_path / "m.json"
        assert run(["calibrate", "--data", synth_file, "--score", "saps",
                    "--saps-w", "0.1", "--alpha", "0.1", "--mode", "mondrian",
                    "--bins", 5, "--seed", 5, "-o", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["mode"] == "mondrian" and len(doc["thresholds"]) == 5

    def test_predict_and_evaluate(self, synth_file, model_file, tmp_path):
        pred = tmp_path / "p.json"
        csv = tmp_path / "p.csv"
        assert run(["predict", "--model", model_file, "--data", synth_file,
                    "--sets", "--csv", csv, "--seed", 5, "-o", pred]) == 0
        doc = json.loads(pred.read_text())
        assert doc["task"] == "classification" and doc["n"] == 3000
        assert len(doc["covered"]) == 3000 and len(doc["sets"]) == 3000
        assert csv.read_text().splitlines()[0] == "index,covered,size,bin,set"

        rep = tmp_path / "rep.json"
        row = tmp_path / "rep.csv"
        assert run(["evaluate", "--data", synth_file, "--predictions", pred,
                    "--eval-bins", 20, "--csv", row, "--seed", 5, "-o", rep]) == 0
        doc = json.loads(rep.read_text())
        assert 0.88 <= doc["report"]["coverage"] <= 0.92
        assert row.read_text().splitlines()[0].startswith("task,alpha")

    def test_evaluate_all_covered_gives_tcv_alpha(self, synth_file, tmp_path):
        pred = tmp_path / "all.json"
        pred.write_text(json.dumps({
            "task": "classification", "alpha": 0.1,
            "covered": [1] * 3000, "size": [1] * 3000,
        }))
        rep = tmp_path / "rep.json"
        assert run(["evaluate", "--data", synth_file, "--predictions", pred,
                    "--eval-bins", 10, "--seed", 0, "-o", rep]) == 0
        doc = json.loads(rep.read_text())["report"]
        assert doc["coverage"] == 1.0
        assert doc["t_cv"] == pytest.approx(0.1, abs=1e-12)

    def test_tune(self, synth_file, tmp_path):
        out = tmp_path / "t.json"
        assert run(["tune", "--cal", synth_file, "--tune-data", synth_file,
                    "--family", "olac", "--alpha", "0.1", "--grid-bins", "5,10",
                    "--seed", 3, "-o", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["best_params"]["bins"] in (5, 10)
        assert len(doc["table"]) == 2

    def test_compare(self, synth_file, tmp_path):
        out = tmp_path / "c.json"
        csv = tmp_path / "c.csv"
        tables = tmp_path / "tab.csv"
        assert run(["compare", "--data", synth_file, "--algorithms", "lac,olac",
                    "--alphas", "0.1", "--repeats", 2, "--n-val", 1200,
                    "--n-test", 1200, "--eval-bins", 10, "--fit-bins", 4,
                    "--threads", 2, "--csv", csv, "--tables", tables,
                    "--seed", 11, "-o", out]) == 0
        doc = json.loads(out.read_text())
        assert {r["algorithm"] for r in doc["report"]["rows"]} == {"lac", "olac"}
        assert tables.read_text().splitlines()[0] == "alpha,metric,lac,olac"

    def test_property_exp(self, synth_file, tmp_path):
        out = tmp_path / "p.json"
        assert run(["property-exp", "--data", synth_file, "--algorithms", "lac",
                    "--alpha", "0.1", "--r-trials", 5, "--trial-size", 400,
                    "--subset", 30, "--draws", 100, "--eval-bins", 10,
                    "--seed", 4, "-o", out]) == 0
        doc = json.loads(out.read_text())
        assert "t_ss" in doc["report"]["correlations"]["lac"]


class TestDeterminism:
    def test_synth_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.cps", tmp_path / "b.cps"
        args = ["synth", "--n", 500, "--k", 6, "--seed", 9]
        assert run(args + ["-o", a]) == 0
        assert run(args + ["-o", b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_pipeline_byte_identical(self, synth_file, tmp_path):
        m, p, r = tmp_path / "m.json", tmp_path / "p.json", tmp_path / "r.json"
        outs = []
        for _ in range(2):
            assert run(["calibrate", "--data", synth_file, "--score", "aps",
                        "--alpha", "0.1", "--mode", "mondrian", "--bins", 5,
                        "--seed", 13, "-o", m]) == 0
            assert run(["predict", "--model", m, "--data", synth_file,
                        "--seed", 13, "-o", p]) == 0
            assert run(["evaluate", "--data", synth_file, "--predictions", p,
                        "--eval-bins", 10, "--seed", 13, "-o", r]) == 0
            outs.append((m.read_bytes(), p.read_bytes(), r.read_bytes()))
        assert outs[0] == outs[1]


class TestErrorHandling:
    def test_missing_input_is_io_error(self, tmp_path):
        assert run(["calibrate", "--data", tmp_path / "nope.cps", "--score", "lac",
                    "--alpha", "0.1", "-o", tmp_path / "m.json"]) == 2

    def test_invalid_data_is_validation_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("label,p0,p1\n0,0.5,0.4\n")  # row sums to 0.9
        assert run(["calibrate", "--data", bad, "--score", "lac",
                    "--alpha", "0.1", "-o", tmp_path / "m.json"]) == 1

    def test_mondrian_without_ease_is_error(self, tmp_path):
        csv = tmp_path / "plain.csv"
        csv.write_text("label,p0,p1\n0,0.6,0.4\n1,0.3,0.7\n" * 1 +
                       "".join(f"{i % 2},0.55,0.45\n" for i in range(40)))
        assert run(["calibrate", "--data", csv, "--score", "lac", "--alpha", "0.1",
                    "--mode", "mondrian", "--bins", 2, "--min-bin-count", 1,
                    "-o", tmp_path / "m.json"]) == 1

    def test_score_dataset_kind_mismatch(self, tmp_path):
        out = tmp_path / "r.cps"
        assert run(["synth", "--n", 100, "--k", 2, "--regression", "--seed", 1,
                    "-o", out]) == 0
        assert run(["calibrate", "--data", out, "--score", "lac", "--alpha", "0.1",
                    "-o", tmp_path / "m.json"]) == 1

    def test_usage_error_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["calibrate", "--bogus-flag"])
        assert exc.value.code == 2
