"""Acceptance gate: one test per criterion, summarised as PASS/FAIL lines.

The experiment-backed criteria (8-10) share the session fixtures in
``conftest.py`` so the desk-scale training runs happen once.
"""

import math
import time
from dataclasses import replace
from statistics import NormalDist

import numpy as np
import pytest

from wattlab.cli import main
from wattlab.energy import (
    HardwareProfile,
    break_even,
    layerwise_breakdown,
    metric0_energy,
    metric1_energy,
    metric2_energy,
)
from wattlab.kd import bce_loss, bitwise_kd_loss, kd_loss, kl_divergence, softened_probs, total_loss
from wattlab.link_sim import ChannelConfig, evaluate_ber, optimal_detector_ber
from wattlab.model_ir import Block, LayerSpec, ModelSpec, count_flops
from wattlab.net import NetSpec, forward, init_params, loss_and_grad
from wattlab.power import (
    CounterSource,
    PowerSample,
    PowerTrace,
    ReplaySource,
    base_power,
    counter_delta,
    run_measured,
)
from wattlab.rng import make_rng
from wattlab.sweep import run_cell, student_spec, teacher_spec

from conftest import median


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def random_model(rng, index):
    blocks = []
    for b in range(int(rng.integers(1, 6))):
        layers = []
        for k in range(int(rng.integers(1, 6))):
            lid = f"b{b}.l{k}"
            kind = rng.integers(4)
            if kind == 0:
                layers.append(LayerSpec.conv2d(lid, *map(int, rng.integers(1, 8, 2)),
                                               *map(int, rng.integers(1, 256, 2)),
                                               *map(int, rng.integers(1, 64, 2))))
            elif kind == 1:
                layers.append(LayerSpec.dense(lid, *map(int, rng.integers(1, 4096, 2))))
            elif kind == 2:
                layers.append(LayerSpec.elementwise(lid, int(rng.integers(1, 10**6))))
            else:
                layers.append(LayerSpec.normalization(lid, int(rng.integers(1, 10**6))))
        blocks.append(Block(f"b{b}", tuple(layers)))
    return ModelSpec(f"random{index}", tuple(blocks))


@pytest.mark.criterion(1, "metric oracles")
def test_metric_oracles():
    with Timer() as t:
        m0 = metric0_energy(30e12, HardwareProfile("x", peak_ops_per_sec=1e12, power_watts=50.0))
        m1 = metric1_energy(30e12, HardwareProfile("x", kappa=1e-27, cores=4, clock_hz=2e9,
                                                   flops_per_clock=32))
        conv = LayerSpec.conv2d("c", 1, 1, 100, 10, 1, 1)
        m2 = metric2_energy(ModelSpec("one", (Block("b", (conv,)),)),
                            HardwareProfile("x", a_c=2e-11, b_c=1e-12, a_f=5e-12)).computation_j
    assert math.isclose(m0, 1500.0, rel_tol=1e-12)
    assert math.isclose(m1, 3750.0, rel_tol=1e-12)
    assert math.isclose(m2, 1.2e-9, rel_tol=1e-12)
    assert t.elapsed < 1.0


@pytest.mark.criterion(2, "breakdown conservation over random models")
def test_conservation():
    rng = np.random.default_rng(2024)
    profile = HardwareProfile("x", peak_ops_per_sec=1e12, power_watts=50.0, kappa=1e-27, cores=16,
                              clock_hz=2e9, flops_per_clock=32, a_c=2e-11, b_c=1e-12, a_f=5e-12)
    with Timer() as t:
        for i in range(100):
            spec = random_model(rng, i)
            assert spec.total_flops == sum(count_flops(l) for _, l in spec.iter_layers())
            for metric in ("m0", "m1", "m2"):
                est = layerwise_breakdown(spec, profile, metric)
                parts = math.fsum(e.energy_j for e in est.per_layer)
                assert math.isclose(parts, est.computation_j, rel_tol=1e-9, abs_tol=1e-300)
    assert t.elapsed < 10.0


@pytest.mark.criterion(3, "break-even reference scenario")
def test_break_even(capsys):
    r = break_even(20.0, 250_000, 2e-3, 400.0)
    assert r.training_energy_total_j == 5e6
    assert r.n_star == 2_500_000_000
    assert r.time_to_break_even_s == 6.25e6
    assert main(["breakeven", "--training-step-j", "20", "--steps", "250000",
                 "--single-inference-j", "0.002", "--rate", "400"]) == 0
    out = capsys.readouterr().out
    assert "n* = 2500000000" in out
    assert "note:" in out and "1e+05" in out


@pytest.mark.criterion(4, "relative energy measurement")
def test_measurement(tmp_path):
    with Timer() as t:
        samples = [PowerSample(float(s), 10.0) for s in range(11)]
        samples += [PowerSample(float(s), 25.0) for s in range(11, 72)]
        r = run_measured(lambda: None, ReplaySource(samples), 10.0)
        assert r.relative_power_w == 15.0 and r.relative_energy_j == 900.0

        spiky = PowerTrace.from_powers([10.0] * 9 + [500.0], 0.1)
        assert base_power(spiky) == 10.0

        assert counter_delta(999, 1, 1000) == 2
        (tmp_path / "energy_uj").write_text("999\n")
        (tmp_path / "max_energy_range_uj").write_text("1000\n")
        src = CounterSource(tmp_path)
        first = src.read().value
        (tmp_path / "energy_uj").write_text("1\n")
        assert src.read().value - first == 2
    assert t.elapsed < 1.0


@pytest.mark.criterion(5, "distillation math")
def test_kd_math():
    with Timer() as t:
        rng = np.random.default_rng(5)
        z = rng.normal(size=10) * 5
        assert abs(softened_probs(z, 0.7).sum() - 1.0) <= 1e-12
        assert np.allclose(softened_probs(z, 1e9), 0.1, atol=1e-6)
        p = softened_probs(z, 1.0)
        assert kl_divergence(p, p) == 0.0
        kd = kd_loss(z, rng.normal(size=10), 2.0)
        assert total_loss(0.37, kd, 0.0) == kd

        # d(L/alpha)/dz_s -> dL_student/dz_s as alpha grows
        zt, zs = rng.normal(size=(32, 2)) * 3, rng.normal(size=(32, 2)) * 3
        bits = (rng.random((32, 2)) < 0.5).astype(float)
        alpha = 1e9
        _, g_student = bce_loss(zs, bits)
        _, g_kd = bitwise_kd_loss(zt, zs, 2.0)
        scaled = (alpha * g_student + g_kd) / alpha
        assert np.allclose(scaled, g_student, rtol=1e-6, atol=0)
    assert t.elapsed < 5.0


@pytest.mark.criterion(6, "backward pass vs finite differences")
def test_gradients():
    rng = np.random.default_rng(6)
    with Timer() as t:
        for width, blocks in ((4, 1), (9, 2), (16, 3)):
            spec = NetSpec(input_dim=12, hidden_width=width, n_residual_blocks=blocks, output_bits=2)
            params = init_params(spec, rng)
            x = rng.normal(size=(8, 12))
            bits = (rng.random((8, 2)) < 0.5).astype(float)
            loss_fn = lambda logits: bce_loss(logits, bits)
            _, grad = loss_and_grad(spec, params, x, loss_fn)
            eps = 1e-6
            fd = np.empty_like(params)
            for i in range(params.size):
                up, down = params.copy(), params.copy()
                up[i] += eps
                down[i] -= eps
                fd[i] = (loss_fn(forward(spec, up, x))[0] - loss_fn(forward(spec, down, x))[0]) / (2 * eps)
            mask = np.abs(fd) > 1e-7
            rel = np.abs(grad[mask] - fd[mask]) / np.abs(fd[mask])
            assert rel.max() < 1e-4, (width, blocks, rel.max())
    assert t.elapsed < 30.0


@pytest.mark.criterion(7, "channel sanity")
def test_channel():
    with Timer() as t:
        cfg = ChannelConfig(modulation="bpsk", n_rx=1, fading="awgn")
        n = 200_000
        for sinr in (0.0, 4.0, 6.0):
            p = NormalDist().cdf(-math.sqrt(2 * 10 ** (sinr / 10)))
            ber = optimal_detector_ber(cfg, sinr, n, make_rng(7, "criterion", sinr))
            assert abs(ber - p) <= 3 * math.sqrt(p * (1 - p) / n), (sinr, ber, p)

        rng = np.random.default_rng(7)
        curve = evaluate_ber(lambda f: rng.normal(size=(f.shape[0], 2)), ChannelConfig())
        assert all(0.45 <= pt.ber <= 0.55 for pt in curve.points)
    assert t.elapsed < 120.0


@pytest.mark.criterion(8, "distilled student beats scratch student")
def test_distillation_efficacy(settings, teacher_run, scratch_cells, distill_cells):
    with Timer() as t:
        ratio = teacher_spec(settings).flops_per_inference / student_spec(settings).flops_per_inference
        assert 2.5 <= ratio <= 3.5
        # teacher converged: last tenth of training no better than the tenth before
        losses = np.array([h[1] for h in teacher_run.loss_history])
        tenth = len(losses) // 10
        assert abs(losses[-tenth:].mean() - losses[-2 * tenth:-tenth].mean()) < 0.01

        scratch = median([c.gm_ber for c in scratch_cells])
        distilled = median([c.gm_ber for c in distill_cells])
        top = settings.channel.sinr_grid_db[-1]
        scratch_top = median([c.curve.ber_at(top) for c in scratch_cells])
        distilled_top = median([c.curve.ber_at(top) for c in distill_cells])
        print(f"median gm_ber: distilled {distilled:.4f}, scratch {scratch:.4f}; "
              f"BER at {top:g} dB: distilled {distilled_top:.4g}, scratch {scratch_top:.4g}")
    assert all(c.status == "ok" for c in scratch_cells + distill_cells)
    assert distilled <= scratch
    assert distilled_top <= scratch_top
    assert t.elapsed < 30 * 60


@pytest.mark.criterion(9, "larger scratch students are better")
def test_size_ladder(size_ladder):
    summary = size_ladder.summary()
    flops = [r["flops"] for r in summary]
    assert flops == sorted(flops) and len(set(flops)) == 4
    print("ladder:", [(r["flops"], round(r["median_gm_ber"], 4)) for r in summary])
    assert summary[-1]["median_gm_ber"] <= summary[0]["median_gm_ber"]


@pytest.mark.criterion(10, "bit-for-bit reruns from lock files")
def test_determinism(tmp_path, capsys, settings, scratch_cells, distill_cells, teacher_run):
    tiny = ["--n-train", "2000", "--student-width", "4", "--teacher-width", "8", "--steps", "100",
            "--teacher-steps", "150", "--samples-per-point", "1000", "--sinr-grid", "0,10",
            "--seeds", "2", "--no-plots"]
    commands = {
        "train": ["train"],
        "distill": ["distill"],
        "sweep": ["sweep", "--kind", "temperature", "--grid", "1,4"],
    }
    outputs = {"train": ["loss.csv", "ber_curve.csv", "checkpoint.json"],
               "distill": ["loss.csv", "ber_curve.csv", "checkpoint.json", "teacher_checkpoint.json"],
               "sweep": ["sweep.csv", "summary.json", "fig5_T_sweep.csv"]}
    for name, argv in commands.items():
        first, second = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        assert main([*argv, *tiny, "--out", str(first)]) == 0
        (run_a,) = first.glob(f"{name}-*")
        assert main([*argv, "--config", str(run_a / "config.lock.json"), "--no-plots",
                     "--out", str(second)]) == 0
        (run_b,) = second.glob(f"{name}-*")
        for f in outputs[name]:
            assert (run_a / f).read_bytes() == (run_b / f).read_bytes(), (name, f)

    # the full-size cells rerun identically too
    scratch = run_cell(replace(settings, mode="scratch"), seed_index=0)
    distilled = run_cell(replace(settings, mode="distill"), seed_index=0, teacher=teacher_run.net)
    assert scratch.gm_ber == scratch_cells[0].gm_ber
    assert distilled.gm_ber == distill_cells[0].gm_ber
