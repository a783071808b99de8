import json

import numpy as np
import pytest
from conftest_helpers import make_long_csv

from gwreg.cli import main, read_measures_csv, write_measures_csv


@pytest.fixture
def long_csv(tmp_path):
    return make_long_csv(tmp_path / "data.csv")


class TestFit:
    def test_fit_writes_model_and_manifest(self, tmp_path, long_csv):
        out = tmp_path / "fit"
        assert main(["fit", str(long_csv), "--out", str(out)]) == 0
        doc = json.loads((out / "model.json").read_text())
        assert doc["schema_version"] == 1
        assert doc["kind"] == "basic"
        assert doc["d1"] == 2 and doc["d2"] == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "fit"

    def test_fit_deterministic_output(self, tmp_path, long_csv):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["fit", str(long_csv), "--out", str(out1)])
        main(["fit", str(long_csv), "--out", str(out2)])
        assert (out1 / "model.json").read_bytes() == (out2 / "model.json").read_bytes()

    def test_lowrank_requires_rank(self, tmp_path, long_csv):
        assert main(["fit", str(long_csv), "--kind", "lowrank", "--out", str(tmp_path)]) == 2

    def test_lowrank_fit(self, tmp_path, long_csv):
        out = tmp_path / "lr"
        code = main(
            ["fit", str(long_csv), "--kind", "lowrank", "--rank", "1", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "model.json").read_text())
        assert doc["kind"] == "lowrank" and doc["rank"] == 1
        assert "factors" in doc

    def test_single_unit_is_degenerate(self, tmp_path):
        path = make_long_csv(tmp_path / "one.csv", n_units=1)
        assert main(["fit", str(path), "--out", str(tmp_path / "o")]) == 3

    def test_single_unit_override(self, tmp_path):
        path = make_long_csv(tmp_path / "one.csv", n_units=1)
        out = tmp_path / "o"
        assert main(
            ["fit", str(path), "--allow-single-unit", "--out", str(out)]
        ) == 0
        assert (out / "model.json").exists()

    def test_split_rule(self, tmp_path, long_csv):
        out = tmp_path / "split"
        code = main(["fit", str(long_csv), "--split", "le:u005", "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "model.json").read_text())
        assert doc["training_units"] == [f"u{i:03d}" for i in range(6)]

    def test_bad_split_rule(self, tmp_path, long_csv):
        assert main(["fit", str(long_csv), "--split", "before-1988", "--out", str(tmp_path)]) == 2

    def test_standardize_round_trip(self, tmp_path, long_csv):
        out = tmp_path / "std"
        assert main(["fit", str(long_csv), "--standardize", "--out", str(out)]) == 0
        doc = json.loads((out / "model.json").read_text())
        assert "standardize" in doc
        pred_out = tmp_path / "stdpred"
        code = main(
            ["predict", str(out / "model.json"), str(long_csv), "--out", str(pred_out)]
        )
        assert code == 0
        ids, measures = read_measures_csv(str(pred_out / "predictions.csv"))
        assert len(ids) == 12
        # predictions are in raw coordinate units, same scale as the data
        assert all(np.isfinite(m.mean).all() for m in measures)

    def test_rejects_nan_with_row_number(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("unit_id,role,c1,c2\nu1,predictor,nan,1.0\n", encoding="utf-8")
        assert main(["fit", str(path), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert "bad.csv:2" in err

    def test_rejects_bad_role(self, tmp_path):
        path = tmp_path / "role.csv"
        path.write_text("unit_id,role,c1\nu1,covariate,1.0\n", encoding="utf-8")
        assert main(["fit", str(path), "--out", str(tmp_path)]) == 2

    def test_rejects_missing_role_rows(self, tmp_path):
        path = tmp_path / "miss.csv"
        path.write_text(
            "unit_id,role,c1\nu1,predictor,1.0\nu1,predictor,2.0\n"
            "u2,predictor,1.0\nu2,response,2.0\n",
            encoding="utf-8",
        )
        assert main(["fit", str(path), "--out", str(tmp_path)]) == 2


class TestPredict:
    def test_predict_from_long_csv(self, tmp_path, long_csv):
        out = tmp_path / "fit"
        main(["fit", str(long_csv), "--out", str(out)])
        pred_out = tmp_path / "pred"
        code = main(
            ["predict", str(out / "model.json"), str(long_csv), "--out", str(pred_out)]
        )
        assert code == 0
        ids, measures = read_measures_csv(str(pred_out / "predictions.csv"))
        assert ids == [f"u{i:03d}" for i in range(12)]

    def test_reference_maps_to_reference(self, tmp_path, long_csv):
        out = tmp_path / "fit"
        main(["fit", str(long_csv), "--out", str(out)])
        doc = json.loads((out / "model.json").read_text())
        ref_in = doc["ref_in"]
        src = tmp_path / "refin.csv"
        write_measures_csv(
            str(src),
            ["ref"],
            np.array([ref_in["mean"]]),
            np.array([ref_in["cov"]]),
        )
        pred_out = tmp_path / "pred"
        assert main(["predict", str(out / "model.json"), str(src), "--out", str(pred_out)]) == 0
        _, measures = read_measures_csv(str(pred_out / "predictions.csv"))
        np.testing.assert_allclose(measures[0].mean, doc["ref_out"]["mean"], atol=1e-8)
        np.testing.assert_allclose(measures[0].cov, doc["ref_out"]["cov"], atol=1e-8)

    def test_malformed_model_json(self, tmp_path, long_csv):
        bad = tmp_path / "model.json"
        bad.write_text("{ not json", encoding="utf-8")
        assert main(["predict", str(bad), str(long_csv), "--out", str(tmp_path)]) == 2

    def test_projection_flags_in_output(self, tmp_path):
        # model with tangent output V = -2 * input shift: shift 1 projects
        from gwreg.geometry import ReferenceMeasure
        from gwreg.regression import FittedModel, model_to_json
        from gwreg.tensors import CoefficientTensor

        arr = np.zeros((1, 2, 1, 2))
        arr[0, 0, 0, 1] = -2.0
        model = FittedModel(
            kind="basic",
            tensor=CoefficientTensor(arr),
            ref_in=ReferenceMeasure.standard(1),
            ref_out=ReferenceMeasure.standard(1),
        )
        model_path = tmp_path / "model.json"
        model_path.write_text(model_to_json(model), encoding="utf-8")
        src = tmp_path / "in.csv"
        write_measures_csv(str(src), ["a", "b"], np.array([[0.1], [1.0]]), np.ones((2, 1, 1)))
        pred_out = tmp_path / "pred"
        assert main(["predict", str(model_path), str(src), "--out", str(pred_out)]) == 0
        text = (pred_out / "predictions.csv").read_text()
        rows = [r for r in text.splitlines() if not r.startswith("#")][1:]
        assert rows[0].split(",")[1] == "false"
        assert rows[1].split(",")[1] == "true"
        assert float(rows[1].split(",")[2]) == pytest.approx(0.5)


class TestEval:
    def test_identical_predictions_give_zeros(self, tmp_path, capsys):
        src = tmp_path / "m.csv"
        rng = np.random.default_rng(0)
        means = rng.standard_normal((4, 2))
        covs = np.stack([np.eye(2)] * 4)
        write_measures_csv(str(src), [f"u{i}" for i in range(4)], means, covs)
        assert main(["eval", str(src), str(src)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[-2] == "min,q25,median,q75,max"
        assert [float(v) for v in out[-1].split(",")] == [0.0] * 5

    def test_single_pair_all_stats_equal(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_measures_csv(str(a), ["u"], np.array([[0.0]]), np.array([[[1.0]]]))
        write_measures_csv(str(b), ["u"], np.array([[2.0]]), np.array([[[1.0]]]))
        assert main(["eval", str(a), str(b)]) == 0
        row = [float(v) for v in capsys.readouterr().out.splitlines()[-1].split(",")]
        assert row == [2.0] * 5

    def test_quartile_convention_hand_computed(self, tmp_path, capsys):
        # scalar point masses at distances 1, 2, 3, 10: linear interpolation
        # gives q25 = 1.75, median = 2.5, q75 = 4.75
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        ids = ["u1", "u2", "u3", "u4"]
        zeros = np.zeros((4, 1, 1))
        write_measures_csv(str(a), ids, np.zeros((4, 1)), zeros)
        write_measures_csv(str(b), ids, np.array([[1.0], [2.0], [3.0], [10.0]]), zeros)
        assert main(["eval", str(a), str(b)]) == 0
        row = [float(v) for v in capsys.readouterr().out.splitlines()[-1].split(",")]
        assert row == [1.0, 1.75, 2.5, 4.75, 10.0]

    def test_eval_against_long_format_observations(self, tmp_path, long_csv):
        out = tmp_path / "fit"
        main(["fit", str(long_csv), "--out", str(out)])
        pred_out = tmp_path / "pred"
        main(["predict", str(out / "model.json"), str(long_csv), "--out", str(pred_out)])
        eval_out = tmp_path / "eval"
        code = main(
            ["eval", str(pred_out / "predictions.csv"), str(long_csv), "--out", str(eval_out)]
        )
        assert code == 0
        text = (eval_out / "eval_summary.csv").read_text()
        assert "quartiles=linear-interpolation" in text

    def test_missing_units_error(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_measures_csv(str(a), ["u1"], np.zeros((1, 1)), np.ones((1, 1, 1)))
        write_measures_csv(str(b), ["u2"], np.zeros((1, 1)), np.ones((1, 1, 1)))
        assert main(["eval", str(a), str(b)]) == 2


class TestBarycenter:
    def test_two_unit_one_dimensional_oracle(self, tmp_path, capsys):
        src = tmp_path / "m.csv"
        write_measures_csv(
            str(src),
            ["u1", "u2"],
            np.array([[0.0], [2.0]]),
            np.array([[[1.0]], [[9.0]]]),
        )
        out_dir = tmp_path / "bc"
        assert main(["barycenter", str(src), "--out", str(out_dir)]) == 0
        printed = capsys.readouterr().out
        assert "mean: 1" in printed
        _, measures = read_measures_csv(str(out_dir / "barycenter.csv"))
        np.testing.assert_allclose(measures[0].mean, [1.0], atol=1e-8)
        np.testing.assert_allclose(measures[0].cov, [[4.0]], atol=1e-6)

    def test_identical_units(self, tmp_path, capsys):
        src = tmp_path / "m.csv"
        write_measures_csv(
            str(src),
            ["u1", "u2"],
            np.array([[1.0, 2.0]] * 2),
            np.stack([np.diag([2.0, 3.0])] * 2),
        )
        assert main(["barycenter", str(src)]) == 0

    def test_from_long_csv(self, tmp_path, long_csv):
        assert main(["barycenter", str(long_csv), "--role", "response"]) == 0


class TestSimulate:
    def test_config_run_and_determinism(self, tmp_path):
        cfg = {"d": 2, "n": 10, "n_draws": 20, "runs": 2, "new_predictors": 10, "seed": 3}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["simulate", "--config", str(cfg_path), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(cfg_path), "--out", str(out2)]) == 0
        assert (out1 / "runs.csv").read_bytes() == (out2 / "runs.csv").read_bytes()
        summary = json.loads((out1 / "summary.json").read_text())
        assert summary["runs"] == 2
        assert "median" in summary["proposed"]["awd"]

    def test_zero_runs_rejected(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"d": 2, "n": 10, "runs": 0}), encoding="utf-8")
        assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 2

    def test_malformed_config(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text("{oops", encoding="utf-8")
        assert main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 2

    def test_unknown_preset(self, tmp_path):
        assert main(["simulate", "--preset", "nope", "--out", str(tmp_path)]) == 2

    def test_requires_config_or_preset(self, tmp_path):
        assert main(["simulate", "--out", str(tmp_path)]) == 2

    def test_desk_presets_defined(self):
        from gwreg.simulation import PRESETS

        fig2 = PRESETS["fig2-desk"]
        assert (fig2.d, fig2.n, fig2.n_draws, fig2.runs) == (2, 200, 500, 100)
        assert PRESETS["fig3-desk"].kind == "lowrank"
        assert PRESETS["fig4-desk"].t_dof == 10.0

    def test_seed_override_changes_output(self, tmp_path):
        cfg = {"d": 2, "n": 10, "runs": 1, "new_predictors": 10, "seed": 3}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["simulate", "--config", str(cfg_path), "--out", str(out1)])
        main(["simulate", "--config", str(cfg_path), "--seed", "4", "--out", str(out2)])
        assert (out1 / "runs.csv").read_text() != (out2 / "runs.csv").read_text()


def test_measures_csv_round_trip(tmp_path):
    path = tmp_path / "m.csv"
    rng = np.random.default_rng(1)
    means = rng.standard_normal((3, 2))
    base = rng.standard_normal((3, 2, 2))
    covs = base @ np.swapaxes(base, -1, -2) + 0.3 * np.eye(2)
    write_measures_csv(str(path), ["a", "b", "c"], means, covs)
    ids, measures = read_measures_csv(str(path))
    assert ids == ["a", "b", "c"]
    for i, m in enumerate(measures):
        np.testing.assert_allclose(m.mean, means[i], atol=1e-8)
        np.testing.assert_allclose(m.cov, covs[i], atol=1e-7)
