import math

import numpy as np
import pytest

from crpsgd.errors import ConfigurationError, StreamReuseError
from crpsgd.executor import Counters, WorkerPool, aggregate, parallel_batch_averages, sgd_step, tree_sum
from crpsgd.objectives import AdditiveGaussianOracle, isotropic_quadratic


def test_aggregate_examples():
    c = Counters()
    assert np.array_equal(aggregate([np.array([1.0, 0.0]), np.array([0.0, 1.0])], c), [0.5, 0.5])
    assert c.comm_rounds == 1
    v = np.array([0.1, 1 / 3, -7.25e-3])
    for n in (1, 2, 3, 7, 10):
        assert np.array_equal(aggregate([v.copy() for _ in range(n)]), v)


def test_aggregate_matches_fsum_mean():
    rng = np.random.default_rng(0)
    for N in (1, 2, 5, 10, 33):
        gs = [rng.standard_normal(6) * 10.0 ** rng.integers(-3, 3) for _ in range(N)]
        ref = np.array([math.fsum(g[j] for g in gs) / N for j in range(6)])
        scale = max(np.abs(g).max() for g in gs)
        assert np.allclose(aggregate(gs), ref, rtol=0, atol=1e-12 * scale)


def test_aggregate_linear():
    rng = np.random.default_rng(1)
    a = [rng.standard_normal(4) for _ in range(5)]
    b = [rng.standard_normal(4) for _ in range(5)]
    lhs = aggregate([2.0 * x + 3.0 * y for x, y in zip(a, b)])
    assert np.allclose(lhs, 2.0 * aggregate(a) + 3.0 * aggregate(b), atol=1e-14)


def test_aggregate_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        aggregate([])
    with pytest.raises(ConfigurationError):
        aggregate([np.zeros(2), np.zeros(3)])


def test_tree_sum_fixed_order():
    vs = [np.array([1e16]), np.array([1.0]), np.array([-1e16]), np.array([1.0])]
    # ((a + b) + (c + d)) regardless of how it is called
    assert tree_sum(vs)[0] == (1e16 + 1.0) + (-1e16 + 1.0)


def test_sgd_step_examples():
    assert np.allclose(sgd_step([1.0], [1.0], 0.1), [0.9])
    x = np.array([2.0, -3.0])
    assert np.array_equal(sgd_step(x, np.zeros(2), 0.1), x)
    f = isotropic_quadratic(1)
    x = np.array([1.0])
    for _ in range(3):
        x = sgd_step(x, f.gradient(x), 0.1)
    assert x[0] == pytest.approx(0.729, rel=1e-14)
    with pytest.raises(ConfigurationError):
        sgd_step([1.0], [1.0, 2.0], 0.1)
    with pytest.raises(ConfigurationError):
        sgd_step([1.0], [1.0], 0.0)


def test_batch_averages_variance_over_B():
    sigma2, dim, B = 1.0, 2, 8
    o = AdditiveGaussianOracle(isotropic_quadratic(dim), sigma2)
    x = np.zeros(dim)
    with WorkerPool(1) as pool:
        gs = np.array([parallel_batch_averages(o, x, B, pool, rnd=r, run_id=9)[0] for r in range(10_000)])
    var = np.mean(np.sum(gs**2, axis=1))
    se = (sigma2 / B) * math.sqrt(2 / (dim * gs.shape[0]))
    assert abs(var - sigma2 / B) < 4 * se


def test_batch_averages_counters_and_worker_keys():
    o = AdditiveGaussianOracle(isotropic_quadratic(3), 1.0)
    c = Counters()
    with WorkerPool(4) as pool:
        gs = parallel_batch_averages(o, np.ones(3), 5, pool, 0, 0, c)
        gs2 = parallel_batch_averages(o, np.ones(3), 7, pool, 1, 0, c)
    assert c.sfo_per_worker == 12 and c.comm_rounds == 0
    assert len(gs) == 4 and len({g.tobytes() for g in gs}) == 4
    assert not np.array_equal(gs[0], gs2[0])


def test_parallelism_does_not_change_results():
    o = AdditiveGaussianOracle(isotropic_quadratic(3), 1.0)
    out = []
    for par in (1, 2, 4):
        with WorkerPool(4, par) as pool:
            out.append(np.array(parallel_batch_averages(o, np.ones(3), 50, pool, 3, 1)))
    assert all(np.array_equal(out[0], o_) for o_ in out)


def test_debug_keys_detect_reuse():
    o = AdditiveGaussianOracle(isotropic_quadratic(2), 1.0)
    with WorkerPool(2, debug_keys=True) as pool:
        parallel_batch_averages(o, np.zeros(2), 3, pool, 0, 0)
        parallel_batch_averages(o, np.zeros(2), 3, pool, 1, 0)
        with pytest.raises(StreamReuseError):
            parallel_batch_averages(o, np.zeros(2), 3, pool, 0, 0)


def test_debug_keys_from_environment(monkeypatch):
    monkeypatch.setenv("CRPSGD_DEBUG_KEYS", "1")
    with WorkerPool(2) as pool:
        assert pool.key_log is not None


def test_pool_validation():
    with pytest.raises(ConfigurationError):
        WorkerPool(0)
    with pytest.raises(ConfigurationError):
        WorkerPool(2, 0)
    with pytest.raises(ConfigurationError):
        parallel_batch_averages(None, np.zeros(1), 0, WorkerPool(1), 0, 0)
