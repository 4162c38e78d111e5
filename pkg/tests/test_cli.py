import json
import math
import os

import numpy as np
import pytest

from pspinlab import cli
from pspinlab.cli import main
from pspinlab.orderparam import load_population
from pspinlab.verify import CheckResult


def write_config(tmp_path, doc, name="config.json"):
    doc = {"schema_version": cli.CONFIG_SCHEMA_VERSION, **doc}
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestConfigLoading:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "free_energy", "N": 6, "bogus": 1})
        with pytest.raises(SystemExit):
            main(["exact", "--config", cfg, "--out", str(tmp_path / "runs")])

    def test_wrong_schema_version(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"schema_version": 2, "zeta": 0.5}))
        with pytest.raises(SystemExit):
            main(["pd", "--config", str(path), "--out", str(tmp_path / "runs")])

    def test_missing_required_key(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "free_energy"})   # no N
        with pytest.raises(SystemExit):
            main(["exact", "--config", cfg, "--out", str(tmp_path / "runs")])

    def test_unknown_task(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "bogus", "N": 6})
        with pytest.raises(SystemExit):
            main(["exact", "--config", cfg, "--out", str(tmp_path / "runs")])


class TestExactCommand:
    def test_free_energy_beta_zero(self, tmp_path):
        cfg = write_config(
            tmp_path, {"task": "free_energy", "N": 6, "beta": 0.0, "reps": 5}
        )
        out = tmp_path / "runs"
        main(["exact", "--config", cfg, "--seed", "7", "--out", str(out)])
        header, rows = read_csv(out / "exact" / "free_energy.csv")
        assert header == ["rep", "free_energy_density"]
        for _, fe in rows:
            assert float(fe) == pytest.approx(math.log(2), abs=1e-12)
        record = json.loads((out / "exact" / "run_record.json").read_text())
        assert record["seed"] == 7
        assert record["config"]["N"] == 6
        assert set(record["outputs"]) == {"free_energy.csv", "summary.json"}

    def test_rerun_identical_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, {"task": "free_energy", "N": 6, "reps": 4})
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["exact", "--config", cfg, "--seed", "3", "--out", str(out_a)])
        main(["exact", "--config", cfg, "--seed", "3", "--out", str(out_b)])
        rec_a = json.loads((out_a / "exact" / "run_record.json").read_text())
        rec_b = json.loads((out_b / "exact" / "run_record.json").read_text())
        assert rec_a["outputs"] == rec_b["outputs"]


class TestPopdynCommand:
    def test_run_and_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, {
            "zeta": 0.5, "beta": 0.0, "h": 0.4, "s_out": 100, "s_in": 100,
            "min_sweeps": 4, "window": 2,
        })
        out = tmp_path / "runs"
        main(["popdyn", "--config", cfg, "--seed", "1", "--out", str(out)])
        d = out / "popdyn"
        header, rows = read_csv(d / "trajectory.csv")
        assert header[0] == "sweep"
        assert [int(r[0]) for r in rows] == list(range(len(rows)))
        pop = load_population(d / "population.csv", d / "population.json")
        assert pop.samples.shape == (100, 100)
        assert np.allclose(pop.samples, math.tanh(0.4), atol=1e-12)
        summary = json.loads((d / "summary.json").read_text())
        assert summary["converged"]
        assert summary["q_low"] == pytest.approx(math.tanh(0.4) ** 2, abs=1e-10)
        # no leftover temp files from atomic writes
        assert not [f for f in os.listdir(d) if f.startswith(".tmp-")]

    def test_population_feeds_downstream_commands(self, tmp_path):
        cfg = write_config(tmp_path, {
            "zeta": 0.5, "beta": 0.0, "h": 0.4, "s_out": 100, "s_in": 100,
            "min_sweeps": 4, "window": 2,
        })
        out = tmp_path / "runs"
        main(["popdyn", "--config", cfg, "--seed", "1", "--out", str(out)])
        d = out / "popdyn"
        cfg2 = write_config(tmp_path, {
            "population_csv": str(d / "population.csv"),
            "sidecar_json": str(d / "population.json"),
            "m_max": 3, "n_samples": 500,
        }, name="sym.json")
        main(["symmetry-test", "--config", cfg2, "--out", str(out)])
        summary = json.loads((out / "symmetry-test" / "summary.json").read_text())
        # constant-magnetization population is maximally asymmetric
        assert summary["statistic"] == pytest.approx(math.tanh(0.4), abs=1e-12)
        assert not summary["symmetric"]


class TestOrderparamCommand:
    def test_closed_form_kernel(self, tmp_path):
        cfg = write_config(tmp_path, {
            "kernel": "sign_x_v", "kernel_params": {"a": 0.8, "b": 0.0},
            "zeta": 0.5, "n_states": 4, "n_sites": 300, "n_reps": 16,
        })
        out = tmp_path / "runs"
        main(["orderparam", "--config", cfg, "--seed", "2", "--out", str(out)])
        summary = json.loads((out / "orderparam" / "summary.json").read_text())
        assert summary["q_low_quadrature"] == pytest.approx(0.0, abs=1e-10)
        assert summary["q_high_quadrature"] == pytest.approx(0.64 / 3, abs=1e-3)
        assert summary["u_dependence_residual"] == pytest.approx(0.0, abs=1e-12)
        doc = json.loads((out / "orderparam" / "order_parameter.json").read_text())
        assert doc["type"] == "closed_form"


class TestEnvironment:
    def test_out_env_var_respected(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "envroot"))
        cfg = write_config(tmp_path, {"zeta": 0.5, "K": 500, "n_draws": 20})
        main(["pd", "--config", cfg, "--seed", "4"])
        assert (tmp_path / "envroot" / "pd" / "summary.json").exists()


class TestVerifyCommand:
    def test_report_and_exit_codes(self, tmp_path, monkeypatch):
        def fake_suite(level, seed, workers):
            return [CheckResult("alpha", True, "ok", {}),
                    CheckResult("bravo", True, "ok", {})]

        monkeypatch.setattr(cli.verify, "verify_suite", fake_suite)
        out = tmp_path / "runs"
        main(["verify", "--level", "quick", "--out", str(out)])
        report = json.loads((out / "verify" / "report.json").read_text())
        assert report["alpha"]["passed"] and report["bravo"]["passed"]

        def failing_suite(level, seed, workers):
            return [CheckResult("alpha", False, "bad", {})]

        monkeypatch.setattr(cli.verify, "verify_suite", failing_suite)
        with pytest.raises(SystemExit) as exc:
            main(["verify", "--out", str(out)])
        assert exc.value.code == 1
