import csv
import datetime as dt
import json

import numpy as np
import pytest

from odflow.cli import main, summarize_scores
from odflow.metrics import DailyScore


def run(argv):
    return main([str(a) for a in argv])


def read_bytes(path):
    return path.read_bytes()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Small noiseless CGM dataset shared by the CLI tests."""
    out = tmp_path_factory.mktemp("data")
    cfg = {
        "zones": 10,
        "days": 8,
        "model": "cgm-exp",
        "params": {"epsilon": -18.0, "alpha": 0.9, "beta": 0.8, "gamma": 1.3,
                   "delta1": -0.03, "delta2": -0.03},
        "noise": "none",
        "seed": 77,
        "population_range": [5e5, 5e6],
    }
    cfg_path = out / "synth.json"
    cfg_path.write_text(json.dumps(cfg))
    assert run(["gen", "--config", cfg_path, "--out", out]) == 0
    return out


class TestGen:
    def test_outputs_exist(self, dataset):
        for name in ("zones.csv", "flows.csv", "stringency.csv", "truth.json"):
            assert (dataset / name).exists()

    def test_deterministic_bytes(self, dataset, tmp_path):
        cfg_path = dataset / "synth.json"
        assert run(["gen", "--config", cfg_path, "--out", tmp_path]) == 0
        for name in ("zones.csv", "flows.csv", "stringency.csv", "truth.json"):
            assert read_bytes(tmp_path / name) == read_bytes(dataset / name), name

    def test_seed_flag_overrides(self, dataset, tmp_path):
        cfg_path = dataset / "synth.json"
        assert run(["gen", "--config", cfg_path, "--seed", 123, "--out", tmp_path]) == 0
        assert read_bytes(tmp_path / "flows.csv") != read_bytes(dataset / "flows.csv")

    def test_single_zone_config_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"zones": 1}))
        assert run(["gen", "--config", bad, "--out", tmp_path / "o"]) == 2

    def test_invalid_json_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert run(["gen", "--config", bad, "--out", tmp_path / "o"]) == 2

    def test_default_config_runs(self, tmp_path):
        assert run(["gen", "--out", tmp_path / "d"]) == 0
        assert (tmp_path / "d" / "truth.json").exists()


class TestFit:
    def test_gravity_recovery_through_files(self, tmp_path):
        cfg = {
            "zones": 12, "days": 2, "model": "gravity-exp",
            "params": {"scale": 1e-9, "beta": 0.002},
            "population_range": [5e5, 5e6], "noise": "none", "seed": 5,
        }
        data = tmp_path / "data"
        cfg_path = tmp_path / "synth.json"
        cfg_path.write_text(json.dumps(cfg))
        assert run(["gen", "--config", cfg_path, "--out", data]) == 0
        fitted = tmp_path / "fitted"
        assert run(["fit", "--zones", data / "zones.csv", "--flows", data / "flows.csv",
                    "--models", "gravity-exp", "--out", fitted]) == 0
        payload = json.loads((fitted / "params.json").read_text())
        for record in payload["fits"]:
            assert record["params"]["beta"] == pytest.approx(0.002, rel=1e-6)
            assert record["converged"] is True

    def test_radiation_gets_empty_params_record(self, dataset, tmp_path):
        out = tmp_path / "fitted"
        assert run(["fit", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--models", "radiation", "--out", out]) == 0
        payload = json.loads((out / "params.json").read_text())
        assert payload["fits"] == [{"model": "radiation", "date": None, "params": {}}]

    def test_cgm_without_stringency_exits_2(self, dataset, tmp_path, capsys):
        code = run(["fit", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--models", "cgm-exp", "--out", tmp_path / "x"])
        assert code == 2
        assert "stringency" in capsys.readouterr().err

    def test_unknown_model_exits_2(self, dataset, tmp_path):
        assert run(["fit", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--models", "antigravity", "--out", tmp_path / "x"]) == 2

    def test_missing_zones_file_exits_2(self, dataset, tmp_path):
        assert run(["fit", "--zones", dataset / "nope.csv",
                    "--flows", dataset / "flows.csv",
                    "--out", tmp_path / "x"]) == 2

    def test_pooled_writes_single_record_per_model(self, dataset, tmp_path):
        out = tmp_path / "fitted"
        assert run(["fit", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--stringency", dataset / "stringency.csv",
                    "--models", "cgm-exp", "--pooled", "--out", out]) == 0
        payload = json.loads((out / "params.json").read_text())
        assert len(payload["fits"]) == 1
        assert payload["fits"][0]["date"] is None


class TestEvaluate:
    def evaluate(self, dataset, out, *extra):
        return run(["evaluate", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--stringency", dataset / "stringency.csv",
                    "--models", "cgm-exp,gravity-exp,radiation",
                    "--out", out, *extra])

    def test_writes_schema_valid_outputs(self, dataset, tmp_path):
        out = tmp_path / "eval"
        assert self.evaluate(dataset, out) == 0
        with open(out / "scores.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["date", "model", "cpc", "ig"]
        assert len(rows) == 1 + 8 * 3  # days x models
        for row in rows[1:]:
            dt.date.fromisoformat(row[0])
            assert row[1] in ("cgm-exp", "gravity-exp", "radiation")
            assert 0.0 <= float(row[2]) <= 1.0
            assert float(row[3]) >= 0.0
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["models"]) == {"cgm-exp", "gravity-exp", "radiation"}
        for block in summary["models"].values():
            for key in ("mean_cpc", "max_cpc", "min_cpc", "mean_cpc_p1",
                        "mean_cpc_p2", "mean_ig"):
                assert key in block
        assert "cgm-exp" in summary["relative_improvement"]
        assert set(summary["relative_improvement"]["cgm-exp"]) == {
            "radiation", "gravity-exp"}

    def test_truth_params_give_perfect_scores(self, dataset, tmp_path):
        # feed the generator's own parameters back through --params
        truth = json.loads((dataset / "truth.json").read_text())
        params_file = tmp_path / "params.json"
        params_file.write_text(json.dumps({
            "fits": [{"model": "cgm-exp", "date": None, "params": truth["params"]}]
        }))
        out = tmp_path / "eval"
        assert run(["evaluate", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--stringency", dataset / "stringency.csv",
                    "--models", "cgm-exp", "--params", params_file,
                    "--out", out]) == 0
        with open(out / "scores.csv", newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        for row in rows:
            assert float(row[2]) == 1.0       # CPC exactly 1
            assert float(row[3]) < 1e-8       # IG at smoothing dust level

    def test_summary_recomputable_from_scores(self, dataset, tmp_path):
        out = tmp_path / "eval"
        assert self.evaluate(dataset, out) == 0
        summary = json.loads((out / "summary.json").read_text())
        with open(out / "scores.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        split = dt.date.fromisoformat(summary["split_date"])
        scores = [DailyScore(date=dt.date.fromisoformat(r["date"]), model=r["model"],
                             cpc=float(r["cpc"]), ig=float(r["ig"])) for r in rows]
        recomputed = summarize_scores(
            scores, split, models=("cgm-exp", "gravity-exp", "radiation"),
            convention=summary["improvement_convention"])
        assert recomputed["models"] == summary["models"]
        assert recomputed["relative_improvement"] == summary["relative_improvement"]

    def test_byte_identical_reruns(self, dataset, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert self.evaluate(dataset, out1) == 0
        assert self.evaluate(dataset, out2) == 0
        assert read_bytes(out1 / "scores.csv") == read_bytes(out2 / "scores.csv")
        assert read_bytes(out1 / "summary.json") == read_bytes(out2 / "summary.json")

    def test_worker_count_does_not_change_results(self, dataset, tmp_path):
        out1, out2 = tmp_path / "w1", tmp_path / "w4"
        assert self.evaluate(dataset, out1, "--workers", 1) == 0
        assert self.evaluate(dataset, out2, "--workers", 4) == 0
        assert read_bytes(out1 / "scores.csv") == read_bytes(out2 / "scores.csv")
        assert read_bytes(out1 / "summary.json") == read_bytes(out2 / "summary.json")

    def test_split_date_flag(self, dataset, tmp_path):
        out = tmp_path / "eval"
        assert self.evaluate(dataset, out, "--split-date", "2020-03-08") == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["split_date"] == "2020-03-08"

    def test_split_date_outside_panel_exits_2(self, dataset, tmp_path):
        assert self.evaluate(dataset, tmp_path / "x",
                             "--split-date", "2021-01-01") == 2

    def test_config_file_defaults_and_flag_priority(self, dataset, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "zones": str(dataset / "zones.csv"),
            "flows": str(dataset / "flows.csv"),
            "stringency": str(dataset / "stringency.csv"),
            "models": "gravity-exp",
        }))
        out1 = tmp_path / "from-config"
        assert run(["evaluate", "--config", cfg, "--out", out1]) == 0
        summary = json.loads((out1 / "summary.json").read_text())
        assert set(summary["models"]) == {"gravity-exp"}
        # explicit flag beats the config value
        out2 = tmp_path / "flag-wins"
        assert run(["evaluate", "--config", cfg, "--models", "radiation",
                    "--out", out2]) == 0
        summary2 = json.loads((out2 / "summary.json").read_text())
        assert set(summary2["models"]) == {"radiation"}

    def test_unknown_config_key_exits_2(self, dataset, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"zoness": "x"}))
        assert run(["evaluate", "--config", cfg,
                    "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--out", tmp_path / "x"]) == 2


class TestSummarize:
    def test_improvement_hand_case(self):
        day1, day2 = dt.date(2020, 3, 5), dt.date(2020, 3, 6)
        scores = [
            DailyScore(day1, "cgm-exp", 0.8, 0.0),
            DailyScore(day2, "cgm-exp", 0.6, 0.0),
            DailyScore(day1, "gravity-exp", 0.4, 0.0),
            DailyScore(day2, "gravity-exp", 0.6, 0.0),
        ]
        summary = summarize_scores(scores, day2,
                                   models=("cgm-exp", "gravity-exp"))
        assert summary["relative_improvement"]["cgm-exp"]["gravity-exp"] == \
            pytest.approx(0.5, rel=1e-12)
        assert summary["models"]["cgm-exp"]["mean_cpc"] == pytest.approx(0.7)
        assert summary["models"]["cgm-exp"]["mean_cpc_p1"] == pytest.approx(0.8)
        assert summary["models"]["cgm-exp"]["mean_cpc_p2"] == pytest.approx(0.6)


class TestSync:
    def make_reference(self, dataset, path, equal_to_aggregate=True):
        import odflow
        registry = odflow.load_zones(dataset / "zones.csv")
        panel = odflow.load_flows(dataset / "flows.csv", registry)
        agg = odflow.aggregate_total(panel, registry, "Z000", "incoming")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "value"])
            for date, value in agg.items():
                writer.writerow([date.isoformat(), repr(value)])

    def test_self_reference_perfect_sync(self, dataset, tmp_path):
        ref = tmp_path / "reference.csv"
        self.make_reference(dataset, ref)
        out = tmp_path / "sync"
        assert run(["sync", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--reference", ref, "--focus", "Z000",
                    "--windows", "3,5", "--out", out]) == 0
        payload = json.loads((out / "sync.json").read_text())
        assert payload["rho_g"] == pytest.approx(1.0, abs=1e-12)
        assert [w["w"] for w in payload["local"]] == [3, 5]
        for block in payload["local"]:
            assert block["mean"] == pytest.approx(1.0, abs=1e-12)
            assert block["median"] == pytest.approx(1.0, abs=1e-12)

    def test_empty_overlap_exits_2(self, dataset, tmp_path):
        ref = tmp_path / "reference.csv"
        ref.write_text("date,value\n1999-01-01,5\n")
        assert run(["sync", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--reference", ref, "--focus", "Z000",
                    "--out", tmp_path / "s"]) == 2

    def test_unknown_focus_exits_2(self, dataset, tmp_path):
        ref = tmp_path / "reference.csv"
        self.make_reference(dataset, ref)
        assert run(["sync", "--zones", dataset / "zones.csv",
                    "--flows", dataset / "flows.csv",
                    "--reference", ref, "--focus", "NOPE",
                    "--out", tmp_path / "s"]) == 2
