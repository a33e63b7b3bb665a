import logging
import math

import numpy as np
import pytest

import sampler
from kernels import KernelSpec, alphas, h_eff
from sampler import (
    GridError,
    Method,
    SamplerError,
    TimeGrid,
    build_grid,
    draw_paths,
    factorization_count,
    factorize,
    gram_matrix,
    implied_covariance,
    read_batch,
    reset_factorization_count,
    sample,
    uniform_grid,
    union_grid,
    write_batch,
)
from streams import substream

FAMILIES = [
    KernelSpec(family="fbm", H=0.5, d=4),
    KernelSpec(family="fbm", H=0.3, d=4),
    KernelSpec(family="subfbm", H=0.4, d=5),
    KernelSpec(family="bifbm", H=0.75, K=2.0 / 3.0, d=4),
]


def test_build_grid_example():
    grid = build_grid(1.0, math.log(2.0), 2, 3)
    np.testing.assert_allclose(grid.nodes, [0.5, 1.0, math.sqrt(2.0), 2.0], rtol=1e-14)
    assert grid.weights.sum() == pytest.approx(2.0, rel=1e-12)
    np.testing.assert_allclose(
        grid.weights, [0.75, (0.5 + math.sqrt(2.0) - 1.0) / 2.0, 0.5, (2.0 - math.sqrt(2.0)) / 2.0], rtol=1e-12
    )


@pytest.mark.parametrize("n,t", [(2.0, 1.0), (6.0, 1.0), (3.0, 2.5), (700.0, 1.0)])
def test_build_grid_endpoint_and_weights(n, t):
    grid = build_grid(n, t, 8, 128)
    assert grid.nodes[-1] == math.exp(n * t)
    assert grid.M == 8 + 127
    assert abs(grid.weights.sum() - math.exp(n * t)) <= 1e-9 * math.exp(n * t)
    ratios = grid.nodes[9:] / grid.nodes[8:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)


@pytest.mark.parametrize("n,t", [(0.0, 1.0), (1.0, -1.0), (701.0, 1.0)])
def test_build_grid_rejects_bad_horizon(n, t):
    with pytest.raises(GridError):
        build_grid(n, t, 8, 16)


def test_build_grid_horizon_message():
    with pytest.raises(GridError, match="horizon too large"):
        build_grid(350.0, 3.0, 8, 16)


def test_time_grid_is_read_only():
    grid = build_grid(1.0, 1.0, 2, 4)
    with pytest.raises(ValueError):
        grid.nodes[0] = 5.0
    with pytest.raises(GridError):
        TimeGrid(nodes=np.array([2.0, 1.0]), weights=np.array([1.0, 1.0]))


def test_union_grid_locates_both_grids():
    grid_u = build_grid(2.0, 1.0, 4, 8)
    grid_v = build_grid(2.0, 1.5, 4, 8)
    union, idx_u, idx_v = union_grid(grid_u, grid_v)
    np.testing.assert_allclose(union.nodes[idx_u], grid_u.nodes, rtol=1e-10)
    np.testing.assert_allclose(union.nodes[idx_v], grid_v.nodes, rtol=1e-10)
    # 線形部分 (0,1] は共通
    assert union.M < grid_u.M + grid_v.M


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.family)
def test_cholesky_reconstruction(spec):
    grid = build_grid(4.0, 1.0, 8, 57)
    assert grid.M == 64
    fact = factorize(spec, grid)
    gram = gram_matrix(spec, grid)
    error = np.abs(implied_covariance(fact) - gram).max()
    assert error <= 1e-10 * max(1.0, np.abs(gram).max())


def test_subfbm_small_grid_reconstruction(subfbm_d5):
    grid = build_grid(2.0, 1.0, 4, 13)
    assert grid.M == 16
    fact = factorize(subfbm_d5, grid)
    assert np.abs(fact.factor @ fact.factor.T - gram_matrix(subfbm_d5, grid)).max() <= 1e-10
    assert fact.jitter == 0.0


def test_single_node_factor(subfbm_d5):
    grid = TimeGrid.from_nodes([2.0])
    fact = factorize(subfbm_d5, grid)
    expected = math.sqrt(alphas(subfbm_d5)[0] * 2.0 ** (2.0 * h_eff(subfbm_d5)))
    assert fact.factor[0, 0] == pytest.approx(expected, rel=1e-13)


def test_circulant_white_noise_spectrum():
    spec = KernelSpec(family="fbm", H=0.5, d=4)
    grid = uniform_grid(3.0, 16)
    fact = factorize(spec, grid, Method.CIRCULANT)
    np.testing.assert_allclose(fact.factor**2 * 2 * grid.M, 3.0 / 16, rtol=1e-12)
    assert fact.clipped == 0


@pytest.mark.parametrize("H", [0.3, 0.5, 0.75])
def test_circulant_matches_cholesky(H):
    spec = KernelSpec(family="fbm", H=H, d=4)
    grid = uniform_grid(1.0, 64)
    circulant = implied_covariance(factorize(spec, grid, Method.CIRCULANT))
    cholesky = implied_covariance(factorize(spec, grid, Method.CHOLESKY))
    assert np.abs(circulant - cholesky).max() <= 1e-10


def test_circulant_rejections(subfbm_d5):
    with pytest.raises(SamplerError):
        factorize(subfbm_d5, uniform_grid(1.0, 8), Method.CIRCULANT)
    brownian = KernelSpec(family="fbm", H=0.5, d=4)
    with pytest.raises(SamplerError):
        factorize(brownian, build_grid(1.0, 1.0, 4, 8), Method.CIRCULANT)


def test_circulant_embedding_not_psd(monkeypatch):
    spec = KernelSpec(family="fbm", H=0.5, d=4)

    def broken(H, step, lags):
        gamma = np.zeros(len(lags))
        gamma[0] = 1.0
        gamma[1] = 2.0
        return gamma

    monkeypatch.setattr(sampler, "fgn_autocovariance", broken)
    with pytest.raises(SamplerError, match="embedding not PSD"):
        factorize(spec, uniform_grid(1.0, 8), Method.CIRCULANT)


def test_cholesky_jitter_is_logged(monkeypatch, caplog, fbm_d4):
    real = sampler.scipy.linalg.cholesky
    calls = []

    def flaky(matrix, **kwargs):
        calls.append(1)
        if len(calls) == 1:
            raise np.linalg.LinAlgError("not positive definite")
        return real(matrix, **kwargs)

    monkeypatch.setattr(sampler.scipy.linalg, "cholesky", flaky)
    grid = build_grid(1.0, 1.0, 4, 8)
    with caplog.at_level(logging.WARNING, logger="sampler"):
        fact = factorize(fbm_d4, grid)
    assert 0.0 < fact.jitter <= 1e-12 * np.trace(gram_matrix(fbm_d4, grid)) / grid.M
    assert "jitter" in caplog.text


def test_cholesky_gives_up_past_jitter_cap(monkeypatch, fbm_d4):
    def always_fails(matrix, **kwargs):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(sampler.scipy.linalg, "cholesky", always_fails)
    with pytest.raises(SamplerError):
        factorize(fbm_d4, build_grid(1.0, 1.0, 4, 8))


def test_sample_single_node_variance():
    spec = KernelSpec(family="fbm", H=0.5, d=1)
    fact = factorize(spec, TimeGrid.from_nodes([1.0]))
    draws = draw_paths(fact, substream(3, 0), 100_000)[:, 0]
    var = draws.var()
    se = math.sqrt(2.0 / draws.size)
    assert abs(var - 1.0) <= 3 * se


def test_sample_is_deterministic(fbm_d4):
    fact = factorize(fbm_d4, build_grid(2.0, 1.0, 4, 8))
    first = sample(fact, 4, replicate=5, root_seed=123)
    second = sample(fact, 4, replicate=5, root_seed=123)
    np.testing.assert_array_equal(first.X, second.X)
    np.testing.assert_array_equal(first.Xt, second.Xt)
    assert first.seed_info == (123, 5)
    assert first.X.shape == (4, fact.grid.M)

    other = sample(fact, 4, replicate=6, root_seed=123)
    assert not np.array_equal(first.X, other.X)
    # X と X̃ は別ストリーム
    assert not np.array_equal(first.X, first.Xt)


def test_x_and_x_tilde_are_uncorrelated():
    spec = KernelSpec(family="fbm", H=0.5, d=1)
    fact = factorize(spec, TimeGrid.from_nodes([1.0]))
    count = 4000
    x = np.empty(count)
    xt = np.empty(count)
    for replicate in range(count):
        batch = sample(fact, 1, replicate, root_seed=99)
        x[replicate] = batch.X[0, 0]
        xt[replicate] = batch.Xt[0, 0]
    assert abs(np.mean(x * xt)) <= 4.0 / math.sqrt(count)


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.CHOLESKY, Method.CIRCULANT])
def test_empirical_covariance_matches_gram(method):
    spec = KernelSpec(family="fbm", H=0.3, d=4)
    grid = uniform_grid(2.0, 8)
    fact = factorize(spec, grid, method)
    paths = draw_paths(fact, substream(17, 1), 100_000)
    count = paths.shape[0]
    empirical = paths.T @ paths / count
    gram = gram_matrix(spec, grid)
    diag = np.diag(gram)
    se = np.sqrt((np.outer(diag, diag) + gram**2) / count)
    assert np.all(np.abs(empirical - gram) <= 5 * se)


@pytest.mark.slow
def test_empirical_covariance_subfbm(subfbm_d5):
    grid = build_grid(1.0, 1.0, 4, 5)
    fact = factorize(subfbm_d5, grid)
    paths = draw_paths(fact, substream(18, 1), 100_000)
    count = paths.shape[0]
    empirical = paths.T @ paths / count
    gram = gram_matrix(subfbm_d5, grid)
    diag = np.diag(gram)
    se = np.sqrt((np.outer(diag, diag) + gram**2) / count)
    assert np.all(np.abs(empirical - gram) <= 5 * se)


def test_factorization_counter(fbm_d4):
    reset_factorization_count()
    fact = factorize(fbm_d4, build_grid(1.0, 1.0, 4, 8))
    for replicate in range(10):
        sample(fact, 4, replicate, root_seed=1)
    assert factorization_count() == 1


def test_dump_round_trip(tmp_path, fbm_d4):
    fact = factorize(fbm_d4, build_grid(1.0, 1.0, 4, 8))
    batch = sample(fact, 4, replicate=7, root_seed=2)
    path = write_batch(tmp_path / "paths.bin", batch)
    assert path.stat().st_size == 32 + 2 * 4 * fact.grid.M * 8
    loaded = read_batch(path, root_seed=2)
    np.testing.assert_array_equal(loaded.X, batch.X)
    np.testing.assert_array_equal(loaded.Xt, batch.Xt)
    assert loaded.seed_info == (2, 7)


def test_dump_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(SamplerError):
        read_batch(path)
