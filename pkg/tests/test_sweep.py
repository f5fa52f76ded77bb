import math
from dataclasses import replace

import numpy as np
import pytest

import wattlab.sweep as sweep_mod
from wattlab.link_sim import ChannelConfig
from wattlab.net import DivergenceError
from wattlab.sweep import ExperimentSettings, run_cell, student_spec, sweep, teacher_spec

TINY = ExperimentSettings(
    channel=ChannelConfig(sinr_grid_db=(0.0, 10.0), samples_per_point=1000),
    n_train=2000, student_width=4, teacher_width=8, n_steps=150, teacher_steps=200,
    teacher_batch_size=64, n_seeds=2,
)


class TestSettings:
    def test_roundtrip(self):
        assert ExperimentSettings.from_dict(TINY.to_dict()) == TINY

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            ExperimentSettings(mode="both")

    def test_default_teacher_is_three_times_student(self):
        s = ExperimentSettings()
        ratio = teacher_spec(s).flops_per_inference / student_spec(s).flops_per_inference
        assert ratio == pytest.approx(3.0, rel=0.05)


class TestSweep:
    def test_single_value_grid(self):
        result = sweep("alpha", [0.5], TINY)
        assert len(result.summary()) == 1
        assert [c.seed for c in result.cells] == [0, 1]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            sweep("depth", [1], TINY)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            sweep("alpha", [], TINY)

    def test_summary_stats(self):
        result = sweep("student_size", [4, 8], replace(TINY, mode="scratch"))
        for row in result.summary():
            values = [c.gm_ber for c in result.cells if c.grid_value == row["grid_value"]]
            assert row["min_gm_ber"] == min(values) and row["max_gm_ber"] == max(values)
            assert row["flops"] == student_spec(TINY, row["grid_value"]).flops_per_inference

    def test_failed_cells_do_not_stop_the_sweep(self, monkeypatch):
        real = sweep_mod.train

        def flaky(spec, config, data, objective=None, init=None):
            if objective is not None and objective.config.alpha == 2.0:
                raise DivergenceError(3, math.inf)
            return real(spec, config, data, objective, init)

        monkeypatch.setattr(sweep_mod, "train", flaky)
        result = sweep("alpha", [1.0, 2.0, 4.0], TINY)
        statuses = {(c.grid_value, c.status) for c in result.cells}
        assert statuses == {(1.0, "ok"), (2.0, "failed"), (4.0, "ok")}
        row = result.summary()[1]
        assert row["n_ok"] == 0 and row["median_gm_ber"] is None
        assert not result.all_failed

    def test_all_failed(self):
        s = replace(TINY, learning_rate=1e300, mode="scratch", n_seeds=1)
        assert sweep("student_size", [4], s).all_failed

    def test_workers_match_serial(self):
        s = replace(TINY, n_seeds=1, n_steps=50, teacher_steps=50)
        serial = sweep("temperature", [1.0, 4.0], s)
        parallel = sweep("temperature", [1.0, 4.0], s, workers=2)
        assert [c.gm_ber for c in serial.cells] == [c.gm_ber for c in parallel.cells]


class TestCells:
    def test_huge_alpha_matches_scratch(self):
        scratch = run_cell(replace(TINY, mode="scratch"), keep_run=True)
        heavy = run_cell(replace(TINY, mode="distill", alpha=1e9), keep_run=True)
        assert np.allclose(heavy.run.final_params, scratch.run.final_params, atol=1e-6)

    def test_seed_indices_differ(self):
        s = replace(TINY, mode="scratch")
        assert run_cell(s, seed_index=0).gm_ber != run_cell(s, seed_index=1).gm_ber

    def test_reproducible(self):
        s = replace(TINY, mode="scratch")
        a, b = run_cell(s, keep_run=True), run_cell(s, keep_run=True)
        assert a.run.loss_history == b.run.loss_history and a.gm_ber == b.gm_ber
