import math

import numpy as np
import pytest

from functional import diff_gauss, gauss, mean_F_oracle
from kernels import KernelSpec
from limitlaw import LimitLawSpec, Order, sample_limit
from montecarlo import (
    ExperimentConfig,
    ExperimentError,
    compare_distributions,
    compare_with_limit,
    estimate_moments,
    jackknife_se,
    normalized_values,
    run_experiment,
    trend_table,
    zscore,
)
from sampler import build_grid

C4 = 1.0 / (4.0 * math.pi**2)


def _small_config(spec, f, order=Order.FIRST, **overrides):
    params = dict(
        spec=spec,
        f=f,
        order=order,
        n_list=(1.0, 2.0),
        t1=1.0,
        t2=1.0,
        replicates=6,
        M_lin=4,
        M_log=8,
        root_seed=77,
    )
    params.update(overrides)
    return ExperimentConfig(**params)


def test_estimate_moments_constant():
    means, ses = estimate_moments(np.full(10, 1.5), 4)
    np.testing.assert_allclose(means, [1.5, 2.25, 3.375, 5.0625])
    np.testing.assert_allclose(ses, 0.0, atol=1e-15)


def test_estimate_moments_alternating():
    means, _ = estimate_moments(np.tile([1.0, -1.0], 50), 2)
    assert means[0] == 0.0
    assert means[1] == 1.0


def test_estimate_moments_normal():
    draws = np.random.default_rng(5).standard_normal(1_000_000)
    means, ses = estimate_moments(draws, 2)
    assert abs(means[1] - 1.0) <= 4 * ses[1]
    assert ses[1] == pytest.approx(math.sqrt(2.0 / draws.size), rel=0.05)


def test_jackknife_matches_classical_se():
    values = np.random.default_rng(6).normal(size=200)
    assert jackknife_se(values) == pytest.approx(values.std(ddof=1) / math.sqrt(values.size), rel=1e-12)
    with pytest.raises(ExperimentError):
        jackknife_se(np.array([1.0]))


def test_zscore_rules():
    assert zscore(1.2, 0.1, 1.0) == pytest.approx(2.0)
    assert zscore(0.0, 0.0, 0.0) == 0.0
    assert math.isnan(zscore(1.0, 0.0, 0.0))


def test_compare_distributions_edges():
    a = np.linspace(0.0, 1.0, 50)
    assert compare_distributions(a, a).statistic == 0.0
    assert compare_distributions(a, a).pvalue == pytest.approx(1.0)
    assert compare_distributions(a, a + 5.0).statistic == 1.0
    with pytest.raises(ExperimentError):
        compare_distributions(a, np.array([]))


def test_limit_sampler_self_consistency():
    law = LimitLawSpec(order=Order.FIRST, lam=1.0, t=1.0, constant=C4, d=4)
    passed = 0
    for seed in range(100):
        a = sample_limit(law, 10_000, seed, replicate=0)
        b = sample_limit(law, 10_000, seed, replicate=1)
        if compare_distributions(a, b).pvalue > 0.01:
            passed += 1
    assert passed >= 95


def test_config_validation(fbm_d4):
    with pytest.raises(ExperimentError):
        _small_config(fbm_d4, gauss(1.0, 4), replicates=1)
    with pytest.raises(ExperimentError):
        _small_config(fbm_d4, gauss(1.0, 4), order=Order.SECOND)
    with pytest.raises(ExperimentError):
        _small_config(fbm_d4, gauss(1.0, 5))
    with pytest.raises(ExperimentError):
        _small_config(fbm_d4, gauss(1.0, 4), n_list=())


def test_zero_function_gives_zero_moments(fbm_d4):
    cfg = _small_config(fbm_d4, diff_gauss(1.0, 1.0, 4), order=Order.SECOND)
    report = run_experiment(cfg)
    for result in report.results:
        np.testing.assert_array_equal(result.means, 0.0)
        np.testing.assert_array_equal(result.targets[0::2], 0.0)
        np.testing.assert_array_equal(result.zscores, 0.0)


def test_first_order_target(fbm_d4):
    report = run_experiment(_small_config(fbm_d4, gauss(1.0, 4)))
    assert report.results[0].targets[0] == pytest.approx(C4, rel=1e-12)
    assert report.law.t == 1.0
    rows = report.to_rows()
    assert len(rows) == 2 * 4
    assert set(rows[0]) == {"n", "m", "empirical", "se", "target", "zscore"}
    assert all(row["se"] > 0 for row in rows)


def test_targets_use_smaller_time(fbm_d4):
    same = run_experiment(_small_config(fbm_d4, gauss(1.0, 4), n_list=(1.0,)))
    mixed = run_experiment(_small_config(fbm_d4, gauss(1.0, 4), n_list=(1.0,), t2=2.0))
    np.testing.assert_array_equal(same.results[0].targets, mixed.results[0].targets)


def test_factorizations_per_n(fbm_d4):
    report = run_experiment(_small_config(fbm_d4, gauss(1.0, 4), n_list=(1.0, 2.0, 3.0), t2=1.5))
    assert report.factorizations == 3


def test_report_is_deterministic(subfbm_d5):
    cfg = _small_config(subfbm_d5, gauss(1.0, 5))
    first = run_experiment(cfg, workers=1)
    second = run_experiment(cfg, workers=3)
    assert first.to_rows() == second.to_rows()
    for a, b in zip(first.results, second.results):
        np.testing.assert_array_equal(a.values, b.values)


def test_scaling_covariance(fbm_d4):
    base = run_experiment(_small_config(fbm_d4, gauss(1.0, 4)))
    scaled = run_experiment(_small_config(fbm_d4, gauss(1.0, 4, scale=3.0)))
    for a, b in zip(base.results, scaled.results):
        for m in range(4):
            assert b.means[m] == pytest.approx(3.0 ** (m + 1) * a.means[m], rel=1e-12)
            assert b.targets[m] == pytest.approx(3.0 ** (m + 1) * a.targets[m], rel=1e-12)


def test_normalized_values_second_order_uses_sqrt(fbm_d4):
    f = diff_gauss(1.0, 2.0, 4)
    first = normalized_values(_small_config(fbm_d4, gauss(1.0, 4), n_list=(4.0,)), 4.0)
    assert first.shape == (6,)
    second = normalized_values(_small_config(fbm_d4, f, order=Order.SECOND, n_list=(4.0,)), 4.0)
    assert second.shape == (6,)
    assert _small_config(fbm_d4, f, order=Order.SECOND).normalization(4.0) == 2.0


def test_trend_table(fbm_d4):
    report = run_experiment(_small_config(fbm_d4, gauss(1.0, 4)))
    rows = trend_table(report)
    assert {row["n"] for row in rows} == {1.0, 2.0}
    assert all(row["gap"] == abs(row["empirical"] - row["target"]) for row in rows)


def test_compare_with_limit_uses_largest_n(fbm_d4):
    report = run_experiment(_small_config(fbm_d4, gauss(1.0, 4)))
    ks = compare_with_limit(report, 500, 3)
    expected = compare_distributions(report.results[-1].values, sample_limit(report.law, 500, 3))
    assert ks == expected
    assert 0.0 <= ks.statistic <= 1.0
    assert 0.0 <= ks.pvalue <= 1.0


def test_to_dict_is_json_ready(fbm_d4):
    payload = run_experiment(_small_config(fbm_d4, gauss(1.0, 4))).to_dict()
    assert payload["law"]["order"] == "first"
    assert payload["factorizations"] == 2
    assert set(payload["runtime_per_n"]) == {"1.0", "2.0"}


@pytest.mark.slow
def test_first_order_trend_brownian(fbm_d4):
    cfg = ExperimentConfig(
        spec=fbm_d4,
        f=gauss(1.0, 4),
        order=Order.FIRST,
        n_list=(2.0, 4.0, 6.0),
        t1=1.0,
        t2=1.0,
        replicates=500,
        root_seed=20240601,
        workers=4,
    )
    report = run_experiment(cfg)
    last = report.results[-1]
    assert abs(last.means[0] - C4) <= 0.3 * C4
    second_target = 3.0 * C4**2
    assert abs(last.means[1] - second_target) <= 0.4 * second_target

    gaps = [abs(result.means[0] - C4) for result in report.results]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))

    # 離散化した平均そのものの |E − C| は n について単調に縮む
    oracle_gaps = []
    for n in cfg.n_list:
        grid = build_grid(n, 1.0, cfg.M_lin, cfg.M_log)
        oracle_gaps.append(abs(mean_F_oracle(fbm_d4, cfg.f, grid, grid) / n - C4))
    assert all(b <= a for a, b in zip(oracle_gaps, oracle_gaps[1:]))
