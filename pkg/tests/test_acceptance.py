"""Acceptance criteria A1-A10, one pass/fail line each.

Run alone with ``pytest tests/test_acceptance.py -v -s``. A8/A9 run the full
rate schedule (R = 100) and dominate the runtime.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from deconvkm import cli
from deconvkm.clustering import exhaustive_node_oracle, multi_start_minimize
from deconvkm.config import load_config
from deconvkm.deconv_risk import (deconv_density, empirical_risk, make_grid,
                                  risk_against_density)
from deconvkm.experiments import (fit_deconvolved, paired_sign_test, run_bias_experiment,
                                  run_rate_experiment, sample_source, source_from_config)
from deconvkm.kernels import build_kernel_table, deconv_kernel_axis, make_base_kernel
from deconvkm.noise import NoiseModel, beta_decay_check

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def uniform_two_center_risk(a, b):
    """Closed-form risk of centers a < b for the uniform law on [0, 1]."""
    m = 0.5 * (a + b)
    return ((m - a) ** 3 + a**3 + (1 - b) ** 3 + (b - m) ** 3) / 3


def test_a1_identity_noise_reduction(acceptance_log):
    base = make_base_kernel()
    worst = 0.0
    for lam in (0.05, 0.2, 0.7):
        tab = deconv_kernel_axis(base, lambda v: np.ones_like(v, dtype=complex), lam, 0.01, 3.0)
        t = np.arange(-(tab.size // 2), tab.size // 2 + 1) * 0.01
        worst = max(worst, np.max(np.abs(tab - base.spatial(t / lam) / lam)))
    ok = worst < 1e-10
    acceptance_log("A1", ok, f"sup |table - base kernel| = {worst:.2e} (< 1e-10)")
    assert ok


def test_a2_fubini_identity(acceptance_log):
    worst = 0.0
    kernel = make_base_kernel()
    for i in range(50):
        rng = np.random.default_rng(1000 + i)
        d = 1 + i % 2
        n = int(rng.integers(1, 501))
        lam = float(rng.uniform(0.2, 0.6))
        noise = NoiseModel.laplace(float(rng.uniform(0.05, 0.4)), d)
        z = rng.normal(0, 1, (n, d))
        grid = make_grid([(-3, 3)] * d, 200 if d == 1 else 40)
        table = build_kernel_table(kernel, noise, lam, grid,
                                   sample_box=(np.minimum(z.min(0), -3), np.maximum(z.max(0), 3)),
                                   n_freq=1024)
        c = rng.uniform(-2, 2, (int(rng.integers(1, 5)), d))
        r_emp = empirical_risk(c, z, table, grid)
        r_dens = risk_against_density(c, deconv_density(z, table, grid))
        worst = max(worst, abs(r_emp - r_dens) / (1 + abs(r_emp)))
    ok = worst < 1e-9
    acceptance_log("A2", ok, f"max relative Fubini gap over 50 instances = {worst:.2e} (< 1e-9)")
    assert ok


def test_a3_exhaustive_oracle(acceptance_log):
    worst = -np.inf
    kernel = make_base_kernel()
    noise = NoiseModel.laplace(0.3, 1)
    for i in range(10):
        rng = np.random.default_rng(2000 + i)
        z = np.concatenate([rng.normal(-1, 0.4, 60), rng.normal(1.2, 0.3, 40)])
        grid = make_grid([(-3, 3)], 32)
        table = build_kernel_table(kernel, noise, 0.5, grid, sample_box=(min(z.min(), -3),
                                                                         max(z.max(), 3)))
        dens = deconv_density(z, table, grid)
        lloyd = multi_start_minimize(dens, 2, restarts=8, seed=i)
        _, oracle = exhaustive_node_oracle(dens, 2)
        worst = max(worst, lloyd.final_risk - oracle)
    ok = worst <= 1e-3
    acceptance_log("A3", ok, f"max (Lloyd - exhaustive oracle) risk = {worst:.2e} (<= 1e-3)")
    assert ok


def test_a4_uniform_closed_form(acceptance_log):
    cfg = load_config(CONFIGS / "uniform_cluster.toml")
    z = sample_source(source_from_config(cfg), cfg.experiment.n, 0)
    rep, _ = fit_deconvolved(z, cfg, cfg.bandwidth.value, 1)
    a, b = rep.final_codebook.centers.ravel()
    risk = uniform_two_center_risk(a, b)
    ok = abs(a - 0.25) <= 0.01 and abs(b - 0.75) <= 0.01 and abs(risk - 1 / 48) <= 1e-3
    acceptance_log("A4", ok, f"centers ({a:.4f}, {b:.4f}), closed-form risk {risk:.6f} "
                             f"vs 1/48 = {1 / 48:.6f}")
    assert ok


def test_a5_bias_slope(acceptance_log):
    t0 = time.perf_counter()
    res = run_bias_experiment(load_config(CONFIGS / "bias.toml"))
    ok = res.slope >= 1.8
    acceptance_log("A5", ok, f"bias slope {res.slope:.3f} (>= 1.8, target 2); biases "
                             f"{np.array2string(res.biases, precision=3)}; "
                             f"{time.perf_counter() - t0:.1f}s")
    assert ok


def test_a6_sup_norm_slope(acceptance_log):
    lams = np.array([0.4, 0.2, 0.1, 0.05])
    cf = NoiseModel.laplace(0.5, 1).components[0].cf
    peaks = [np.abs(deconv_kernel_axis(make_base_kernel(), cf, lam, 0.005, 4.0)).max()
             for lam in lams]
    slope = np.polyfit(np.log(1 / lams), np.log(peaks), 1)[0]
    ok = 2.15 <= slope <= 2.85
    acceptance_log("A6", ok, f"sup-norm slope {slope:.3f} in [2.15, 2.85] (predicted 2.5), "
                             "Laplace sigma 0.5")
    assert ok


def test_a7_decay_diagnostic(acceptance_log):
    slope = beta_decay_check(NoiseModel.laplace(0.3, 1), 0)
    ok = abs(slope + 2) <= 0.05
    acceptance_log("A7", ok, f"fitted cf decay exponent {slope:.4f} (-2 +- 0.05)")
    assert ok


@pytest.fixture(scope="module")
def rate_fit():
    cfg = load_config(CONFIGS / "acceptance_rate.toml")
    t0 = time.perf_counter()
    fit = run_rate_experiment(cfg, workers=os.cpu_count() or 1)
    return fit, time.perf_counter() - t0


def test_a8_rate_experiment(rate_fit, acceptance_log):
    fit, seconds = rate_fit
    drop = fit.mean_excess[0] / fit.mean_excess[-1]
    ok = fit.slope < 0 and -1.0 <= fit.slope <= -0.15 and drop >= 2
    means = ", ".join(f"{m:.2e}" for m in fit.mean_excess)
    acceptance_log("A8", ok, f"fitted slope {fit.slope:.3f} +- {fit.slope_stderr:.3f} "
                             f"(theoretical {-fit.theoretical_exponent:.4f}); mean excess "
                             f"[{means}]; n=250/n=8000 ratio {drop:.1f}; {seconds:.0f}s")
    assert ok


def test_a9_beats_naive(rate_fit, acceptance_log):
    fit, _ = rate_fit
    n_max = int(fit.sample_sizes[-1])
    rows = sorted((r for r in fit.rows if r["n"] == n_max), key=lambda r: r["rep"])
    deconv = [r["excess_deconv"] for r in rows]
    naive = [r["excess_naive"] for r in rows]
    wins, trials, p = paired_sign_test(deconv, naive)
    ok = np.mean(deconv) < np.mean(naive) and p < 0.05
    acceptance_log("A9", ok, f"n={n_max}: mean excess deconv {np.mean(deconv):.3e} vs naive "
                             f"{np.mean(naive):.3e}; sign test {wins}/{trials}, p={p:.2e}")
    assert ok


def test_a10_reproducible_csv(tmp_path, acceptance_log):
    cfg = str(CONFIGS / "quick_rate.toml")
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["rate-experiment", "--config", cfg, "--out", str(out)]) == 0
        assert cli.main(["bias-experiment", "--config", cfg, "--out", str(out)]) == 0
        outputs.append([(out / f).read_bytes() for f in ("rate.csv", "bias.csv")])
    ok = outputs[0] == outputs[1]
    acceptance_log("A10", ok, "rate.csv and bias.csv byte-identical across reruns")
    assert ok
