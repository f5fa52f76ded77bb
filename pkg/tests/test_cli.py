import json
import math

import pytest

from wattlab.cli import main
from wattlab.energy import default_profiles, metric0_energy, metric1_energy
from wattlab.model_ir import example_model
from wattlab.power import PowerSample, write_replay_csv
from wattlab.reports import read_csv, write_csv

TINY = ["--n-train", "2000", "--student-width", "4", "--teacher-width", "8", "--steps", "150",
        "--teacher-steps", "200", "--samples-per-point", "1000", "--sinr-grid", "0,10", "--seeds", "2"]


def run_dir(out, command):
    (path,) = out.glob(f"{command}-*")
    return path


class TestEnergyCommands:
    def test_estimate_rows_recomputable(self, tmp_path, capsys):
        assert main(["estimate", "--all-profiles", "--metric", "m0", "--metric", "m1",
                     "--out", str(tmp_path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        flops = example_model().total_flops
        by_name = {p.name: p for p in default_profiles()}
        assert len(payload["rows"]) == 12
        for row in payload["rows"]:
            metric = metric0_energy if row["metric"] == "m0" else metric1_energy
            assert row["total_j"] == pytest.approx(metric(flops, by_name[row["profile"]]), rel=1e-12)
        run = run_dir(tmp_path, "estimate")
        _, rows = read_csv(run / "fig1_compare.csv")
        assert [r["total_j"] for r in rows] == [r["total_j"] for r in payload["rows"]]
        assert (run / "fig1_compare.png").stat().st_size > 0

    def test_metric2_needs_coefficients(self, tmp_path, capsys):
        profiles = tmp_path / "p.json"
        profiles.write_text(json.dumps([{"name": "bare", "power_watts": 5.0}]))
        assert main(["estimate", "--profiles", str(profiles), "--metric", "m2"]) == 2
        assert "a_c" in capsys.readouterr().err

    def test_profile_env_var(self, tmp_path, monkeypatch, capsys):
        profiles = tmp_path / "p.json"
        profiles.write_text(json.dumps([{"name": "env-box", "peak_ops_per_sec": 1e12,
                                         "power_watts": 50.0}]))
        monkeypatch.setenv("WATTLAB_PROFILE_PATH", str(profiles))
        assert main(["estimate"]) == 0
        row = json.loads(capsys.readouterr().out)["rows"][0]
        assert row["profile"] == "env-box"
        assert row["total_j"] == pytest.approx(example_model().total_flops * 50.0 / 1e12)

    def test_unknown_profile(self, capsys):
        assert main(["estimate", "--profile", "nope"]) == 2

    def test_bad_model_file(self, tmp_path, capsys):
        bad = tmp_path / "m.json"
        bad.write_text("{\n  \"name\": 1,\n")
        assert main(["estimate", "--model", str(bad)]) == 2
        assert "line" in capsys.readouterr().err

    def test_breakdown(self, tmp_path, capsys):
        assert main(["breakdown", "--metric", "m1", "--out", str(tmp_path), "--no-plots"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert math.fsum(payload["blocks"].values()) == pytest.approx(payload["computation_j"], rel=1e-9)
        _, rows = read_csv(run_dir(tmp_path, "breakdown") / "fig2_breakdown.csv")
        assert len(rows) == len(list(example_model().iter_layers()))

    def test_breakeven_reference(self, tmp_path, capsys):
        code = main(["breakeven", "--training-step-j", "20", "--steps", "250000",
                     "--single-inference-j", "0.002", "--rate", "400", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "5000000.0 J" in out and "n* = 2500000000" in out and "6250000.0 s" in out
        assert "note:" in out and "1e+05" in out
        report = json.loads((run_dir(tmp_path, "breakeven") / "breakeven.json").read_text())
        assert report["n_star"] == 2_500_000_000

    def test_breakeven_other_inputs_no_note(self, capsys):
        assert main(["breakeven", "--training-step-j", "1", "--steps", "10",
                     "--single-inference-j", "0.5", "--rate", "1"]) == 0
        assert "note:" not in capsys.readouterr().out

    def test_breakeven_invalid(self, capsys):
        assert main(["breakeven", "--training-step-j", "-1", "--steps", "10",
                     "--single-inference-j", "0.5", "--rate", "1"]) == 64

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["breakeven", "--steps", "3"])
        assert info.value.code == 64


class TestMeasure:
    def test_replay(self, tmp_path, capsys):
        samples = [PowerSample(float(t), 10.0) for t in range(11)]
        samples += [PowerSample(float(t), 25.0) for t in range(11, 72)]
        trace = tmp_path / "trace.csv"
        write_replay_csv(samples, trace)
        assert main(["measure", "--source", f"replay:{trace}", "--baseline-s", "10"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["relative_power_w"] == 15.0 and report["relative_energy_j"] == 900.0

    def test_missing_counters(self, tmp_path, capsys):
        assert main(["measure", "--source", f"counters:{tmp_path / 'none'}", "--baseline-s", "0.01"]) == 3
        assert "replay:" in capsys.readouterr().err

    def test_unknown_source(self, capsys):
        assert main(["measure", "--source", "ipmi:x"]) == 64


class TestExperimentCommands:
    def test_config_errors(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"learning_rat": 0.1}))
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert main(["train", "--samples-per-point", "10", "--out", str(tmp_path)]) == 2

    def test_sweep_alpha(self, tmp_path, capsys):
        code = main(["sweep", "--kind", "alpha", "--grid", "0.1,1,10", *TINY, "--out", str(tmp_path)])
        assert code == 0
        run = run_dir(tmp_path, "sweep")
        text = (run / "sweep.csv").read_text()
        assert text.startswith("# wattlab sweep config_hash=")
        columns, rows = read_csv(run / "alpha_sweep.csv")
        assert len(rows) == 3 and columns[0] == "grid_value"
        assert (run / "alpha_sweep.png").exists()

    def test_sweep_all_failed_exit_code(self, tmp_path, capsys):
        code = main(["sweep", "--kind", "student_size", "--grid", "4", "--mode", "scratch",
                     *TINY, "--lr", "1e300", "--seeds", "1", "--out", str(tmp_path), "--no-plots"])
        assert code == 1

    def test_distill_then_train_prints_comparison(self, tmp_path, capsys):
        assert main(["distill", *TINY, "--out", str(tmp_path), "--no-plots"]) == 0
        assert main(["train", *TINY, "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "comparison: distilled gm_ber=" in out
        train_run = run_dir(tmp_path, "train")
        _, rows = read_csv(train_run / "fig6_ber_sinr.csv")
        assert {r["label"] for r in rows} == {"train", "distill", "teacher"}
        assert (train_run / "fig6_ber_sinr.png").exists()

    def test_evaluate_checkpoint(self, tmp_path, capsys):
        assert main(["train", *TINY, "--out", str(tmp_path), "--no-plots"]) == 0
        ckpt = run_dir(tmp_path, "train") / "checkpoint.json"
        assert main(["evaluate", *TINY, "--checkpoint", str(ckpt), "--out", str(tmp_path / "e"),
                     "--no-plots"]) == 0
        trained = json.loads((run_dir(tmp_path, "train") / "summary.json").read_text())
        evaluated = json.loads((run_dir(tmp_path / "e", "evaluate") / "summary.json").read_text())
        assert evaluated["gm_ber"] == trained["gm_ber"]

    def test_lock_file_rerun(self, tmp_path, capsys):
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["train", *TINY, "--seed", "7", "--out", str(first), "--no-plots"]) == 0
        lock = run_dir(first, "train") / "config.lock.json"
        assert main(["train", "--config", str(lock), "--out", str(second), "--no-plots"]) == 0
        a, b = run_dir(first, "train"), run_dir(second, "train")
        assert a.name == b.name
        for name in ("loss.csv", "ber_curve.csv", "checkpoint.json", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


def test_csv_roundtrip():
    text = write_csv(None, ["a", "b", "c"], [(1, 0.1, "x"), (2, None, "y")], comment="wattlab t")
    assert read_csv(text) == (["a", "b", "c"], [{"a": 1, "b": 0.1, "c": "x"}, {"a": 2, "b": None, "c": "y"}])
