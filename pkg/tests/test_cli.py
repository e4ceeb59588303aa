"""Command-line contracts: artifacts, round trips, input diagnostics."""

import json

import numpy as np
import pytest

from dynrmst import dataio
from dynrmst.cli import main
from dynrmst.errors import InvalidInput
from dynrmst.gee import DynamicModelFit
from dynrmst.evaluate import predict
from dynrmst.surv import SurvivalRecord, crmstd_test


def run(argv):
    return main([str(a) for a in argv])


def scenario_csv(tmp_path, name="scen.csv", scenario=2, n=100, cen=0.3, seed=3):
    path = tmp_path / name
    assert run(["simulate", "--design", "scenario", "--scenario", scenario,
                "--n", n, "--cen", cen, "--seed", seed,
                "--output", path]) == 0
    return path


def joint_csvs(tmp_path, n=200, seed=1, stem="joint"):
    surv = tmp_path / f"{stem}_surv.csv"
    long = tmp_path / f"{stem}_long.csv"
    assert run(["simulate", "--design", "joint", "--n", n, "--seed", seed,
                "--output", surv, "--longitudinal-output", long]) == 0
    return surv, long


def fitted_model_path(tmp_path, surv, long):
    model = tmp_path / "model.json"
    assert run(["fit", "--input", surv, "--longitudinal", long,
                "--grid", "0:4:1", "--w", "5", "--knots", "1,2,3",
                "--covariates", "x1,x2,marker", "--extend-tail",
                "--output", model]) == 0
    return model


class TestSimulateAndTest:
    def test_json_contract_matches_in_process(self, tmp_path):
        data = scenario_csv(tmp_path)
        out = tmp_path / "test.json"
        assert run(["test", "--input", data, "--s", 0, "--w", 10,
                    "--extend-tail", "--output", out]) == 0
        lines = out.read_text().splitlines()
        doc = json.loads("\n".join(l for l in lines if not l.startswith("#")))
        assert set(doc) >= {"delta", "se", "z", "p_value", "ci_lower",
                            "ci_upper", "group0", "group1"}
        records = dataio.read_survival(data)
        g0 = [r for r in records if r.group == doc["group0"]]
        g1 = [r for r in records if r.group == doc["group1"]]
        res = crmstd_test(g0, g1, 0.0, 10.0, extend_tail=True)
        assert doc["delta"] == res.delta
        assert doc["p_value"] == res.p_value

    def test_config_comment_embedded(self, tmp_path):
        data = scenario_csv(tmp_path)
        first = data.read_text().splitlines()[0]
        assert first.startswith("# config:")
        cfg = json.loads(first.split("# config:", 1)[1])
        assert cfg["scenario"] == 2 and cfg["seed"] == 3

    def test_group_count_enforced(self, tmp_path, capsys):
        path = tmp_path / "one_group.csv"
        dataio.write_survival(path, [SurvivalRecord(i, 1.0 + i, 1, group=0)
                                     for i in range(5)])
        assert run(["test", "--input", path, "--s", 0, "--w", 2]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "2 groups" in err["message"]


class TestFitPredictRoundTrip:
    def test_cli_predict_matches_in_process_bit_exactly(self, tmp_path, capsys):
        surv, long = joint_csvs(tmp_path)
        model = fitted_model_path(tmp_path, surv, long)
        assert run(["predict", "--model", model, "--s", 2.5,
                    "--covariates", "x1=1", "x2=0.3", "marker=2.0"]) == 0
        doc = json.loads(capsys.readouterr().out)

        with open(model) as fh:
            fit = DynamicModelFit.from_json(json.dumps(json.load(fh)["model"]))
        res = predict(fit, [1.0, 0.3, 2.0], 2.5)
        assert doc["value"] == res.value
        assert doc["se"] == res.se
        assert doc["ci_lower"] == res.ci_lower

    def test_predict_missing_covariate(self, tmp_path, capsys):
        surv, long = joint_csvs(tmp_path)
        model = fitted_model_path(tmp_path, surv, long)
        assert run(["predict", "--model", model, "--s", 1,
                    "--covariates", "x1=1"]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "marker" in err["message"]

    def test_evaluate_writes_metric_rows(self, tmp_path):
        surv, long = joint_csvs(tmp_path)
        vsurv, vlong = joint_csvs(tmp_path, n=150, seed=2, stem="val")
        model = fitted_model_path(tmp_path, surv, long)
        out = tmp_path / "eval.csv"
        assert run(["evaluate", "--model", model, "--train", surv,
                    "--train-longitudinal", long, "--val", vsurv,
                    "--val-longitudinal", vlong, "--extend-tail",
                    "--output", out]) == 0
        lines = [l for l in out.read_text().splitlines()
                 if not l.startswith("#")]
        header = lines[0].split(",")
        assert "pe_dynamic" in header and "c_index_static" in header
        assert len(lines) == 1 + 5  # header + one row per landmark 0..4


class TestInputDiagnostics:
    def write(self, tmp_path, text, name="bad.csv"):
        path = tmp_path / name
        path.write_text(text)
        return path

    def test_bad_status_names_line(self, tmp_path, capsys):
        path = self.write(tmp_path,
                          "id,time,status\na,1.0,1\nb,2.0,2\n")
        assert run(["crmst", "--input", path, "--s", 0, "--w", 1]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "line 3" in err["message"] and "status" in err["message"]

    def test_duplicate_id_names_line(self, tmp_path):
        path = self.write(tmp_path, "id,time,status\na,1.0,1\na,2.0,1\n")
        with pytest.raises(InvalidInput, match="line 3.*duplicate"):
            dataio.read_survival(path)

    def test_missing_column(self, tmp_path, capsys):
        path = self.write(tmp_path, "id,time\na,1.0\n")
        assert run(["crmst", "--input", path, "--s", 0, "--w", 1]) == 1
        err = json.loads(capsys.readouterr().err)
        assert "status" in err["message"]

    def test_wrong_field_count_names_line(self, tmp_path):
        path = self.write(tmp_path, "id,time,status\na,1.0,1\nb,2.0\n")
        with pytest.raises(InvalidInput, match="line 3"):
            dataio.read_survival(path)

    def test_non_numeric_value_names_column(self, tmp_path):
        path = self.write(tmp_path, "id,time,status\na,soon,1\n")
        with pytest.raises(InvalidInput, match="time"):
            dataio.read_survival(path)

    def test_out_of_order_longitudinal_warns_but_loads(self, tmp_path):
        path = self.write(
            tmp_path,
            "id,obs_time,name,value\na,2.0,m,1.0\na,1.0,m,2.0\n",
            name="long.csv")
        with pytest.warns(UserWarning, match="out of time order"):
            recs = dataio.read_longitudinal(path)
        times = [r.obs_time for r in recs if r.id == "a"]
        assert times == sorted(times)

    def test_missing_file_is_reported(self, tmp_path, capsys):
        assert run(["crmst", "--input", tmp_path / "nope.csv",
                    "--s", 0, "--w", 1]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "OSError"


class TestMcCommand:
    def test_row_contents_and_worker_invariance(self, tmp_path):
        out1 = tmp_path / "mc1.csv"
        out2 = tmp_path / "mc2.csv"
        base = ["mc", "--scenario", 1, "--n", 60, "--s", 2, "--w", 5,
                "--reps", 30, "--seed", 5]
        assert run(base + ["--workers", 1, "--output", out1]) == 0
        assert run(base + ["--workers", 2, "--output", out2]) == 0

        def body(path):
            # config comments embed the (differing) output paths; everything
            # else must be byte-identical across worker counts
            return [l for l in path.read_bytes().splitlines()
                    if not l.startswith(b"#")]

        assert body(out1) == body(out2)
        lines = out1.read_text().splitlines()
        assert "workers" not in lines[0]  # config omits the worker count
        header = lines[1].split(",")
        row = dict(zip(header, lines[2].split(",")))
        assert row["scenario"] == "1" and row["reps"] == "30"
        assert 0.0 <= float(row["coverage"]) <= 1.0


class TestKmAndCrmst:
    def test_km_csv(self, tmp_path):
        data = scenario_csv(tmp_path, scenario=1, n=50, cen=0.0, seed=9)
        out = tmp_path / "km.csv"
        assert run(["km", "--input", data, "--output", out]) == 0
        lines = [l for l in out.read_text().splitlines()
                 if not l.startswith("#")]
        header = lines[0].split(",")
        surv_col = header.index("survival")
        values = [float(l.split(",")[surv_col]) for l in lines[1:]]
        assert values == sorted(values, reverse=True)
        assert values[-1] == 0.0  # uncensored: curve reaches zero

    def test_crmst_methods_agree(self, tmp_path, capsys):
        data = scenario_csv(tmp_path, scenario=1, n=80, cen=0.3, seed=4)
        results = {}
        for method in ("pseudo", "km"):
            assert run(["crmst", "--input", data, "--s", 1, "--w", 5,
                        "--method", method, "--extend-tail"]) == 0
            results[method] = json.loads(capsys.readouterr().out)
        assert np.isclose(results["pseudo"]["value"], results["km"]["value"],
                          atol=1e-10)
        assert results["pseudo"]["variance"] > 0
