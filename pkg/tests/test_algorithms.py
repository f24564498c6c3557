import math
import warnings

import numpy as np
import pytest

from crpsgd.algorithms import (
    CatalystConfig,
    CrPsgdConfig,
    catalyst_conditions,
    cr_psgd,
    cr_psgd_catalyst,
    local_sgd_baseline,
    psgd_baseline,
    sweep_local_h,
)
from crpsgd.errors import ConfigurationError, DegenerateRunWarning, StreamReuseError, RateConditionWarning
from crpsgd.executor import WorkerPool
from crpsgd.objectives import (
    AdditiveGaussianOracle,
    CosineNonconvex,
    LogisticOracle,
    generate_logistic_instance,
    isotropic_quadratic,
    proximal_oracle_factory,
)
from crpsgd.schedule import BatchSchedule, num_rounds
from crpsgd.trace import csv_text

pytestmark = pytest.mark.filterwarnings("ignore::crpsgd.errors.RateConditionWarning")


@pytest.fixture
def noiseless():
    return AdditiveGaussianOracle(isotropic_quadratic(3), 0.0)


@pytest.fixture
def noisy():
    return AdditiveGaussianOracle(isotropic_quadratic(3), 1.0)


def test_cr_psgd_noiseless_is_gradient_descent(noiseless):
    x1 = np.array([1.0, -2.0, 3.0])
    x, tr = cr_psgd(noiseless, CrPsgdConfig(4, 1000, x1, 2, 1.1, 0.1))
    n = num_rounds(BatchSchedule(2, 1.1), 1000)
    assert tr.comm_rounds == n
    assert np.allclose(x, x1 * 0.9**n, rtol=1e-12)


def test_cr_psgd_counters_and_trace(noisy):
    T = 500
    x, tr = cr_psgd(noisy, CrPsgdConfig(3, T, np.ones(3), 2, 1.2, 0.1), seed=4)
    s = BatchSchedule(2, 1.2)
    n = num_rounds(s, T)
    assert tr.comm_rounds == n == len(tr.rows)
    assert tr.sfo_per_worker == sum(s.sizes(T)) <= T
    assert [r.batch_size for r in tr.rows] == s.sizes(T)
    assert [r.cum_comm_rounds for r in tr.rows] == list(range(1, n + 1))
    assert tr.rows[-1].loss == pytest.approx(noisy.objective.value(x))
    assert np.array_equal(tr.final_x, x)


def test_cr_psgd_degenerate_budget(noisy):
    x1 = np.ones(3)
    with pytest.warns(DegenerateRunWarning):
        x, tr = cr_psgd(noisy, CrPsgdConfig(2, 1, x1, 2, 1.1, 0.1))
    assert np.array_equal(x, x1) and tr.comm_rounds == 0 and tr.rows == []


def test_cr_psgd_warns_on_invalid_rate_conditions(noisy):
    with pytest.warns(RateConditionWarning):
        cr_psgd(noisy, CrPsgdConfig(1, 20, np.ones(3), 2, 1.1, 0.1))
    with warnings.catch_warnings():
        warnings.simplefilter("error", RateConditionWarning)
        cr_psgd(noisy, CrPsgdConfig(1, 20, np.ones(3), 2, 1.02, 0.5))


def test_cr_psgd_rejects_bad_config(noisy):
    with pytest.raises(ConfigurationError):
        cr_psgd(noisy, CrPsgdConfig(2, 100, np.ones(4), 2, 1.1, 0.1))
    with pytest.raises(ConfigurationError):
        cr_psgd(noisy, CrPsgdConfig(2, 100, np.ones(3), 2, 1.1, 0.1), WorkerPool(3))
    with pytest.raises(ConfigurationError):
        CrPsgdConfig(2, 100, np.ones(3), 2, 1.1, -0.1)


def test_psgd_with_full_batch_equals_single_cr_round(noisy):
    x1 = np.ones(3)
    x_a, tr_a = psgd_baseline(noisy, 2, 64, x1, 64, 0.1, seed=1)
    x_b, tr_b = cr_psgd(noisy, CrPsgdConfig(2, 64, x1, 64, 1.1, 0.1), seed=1)
    assert tr_a.comm_rounds == tr_b.comm_rounds == 1
    assert np.array_equal(x_a, x_b)


def test_psgd_round_count(noisy):
    _, tr = psgd_baseline(noisy, 2, 10_000, np.ones(3), 2, 0.1, record=False)
    assert tr.comm_rounds == 5000 and tr.sfo_per_worker == 10_000


def test_local_sgd_h1_is_psgd_bit_exact():
    p = generate_logistic_instance(5, 3, 40, 0.01, seed=0)
    o = LogisticOracle(p)
    _, a = psgd_baseline(o, 3, 200, np.zeros(5), 4, 0.2, seed=2)
    _, b = local_sgd_baseline(o, 3, 200, np.zeros(5), 4, 0.2, 1, seed=2)
    rows_a = [(r.cum_sfo_per_worker, r.cum_comm_rounds, r.loss, r.grad_norm_sq) for r in a.rows]
    rows_b = [(r.cum_sfo_per_worker, r.cum_comm_rounds, r.loss, r.grad_norm_sq) for r in b.rows]
    assert rows_a == rows_b
    assert np.array_equal(a.final_x, b.final_x)


def test_local_sgd_round_count(noisy):
    _, tr = local_sgd_baseline(noisy, 10, 10_000, np.ones(3), 2, 0.1, 10, record=False)
    assert tr.comm_rounds == 500 and tr.sfo_per_worker == 10_000


def test_local_sgd_noiseless_matches_gradient_descent(noiseless):
    x1 = np.array([1.0, 2.0, -1.0])
    x, tr = local_sgd_baseline(noiseless, 4, 120, x1, 2, 0.1, 5)
    assert tr.comm_rounds == 12
    assert np.allclose(x, x1 * 0.9**60, rtol=1e-12)


def test_local_sgd_keys_never_reused(noisy):
    with WorkerPool(3, debug_keys=True) as pool:
        local_sgd_baseline(noisy, 3, 60, np.ones(3), 2, 0.1, 4, pool)
        with pytest.raises(StreamReuseError):
            local_sgd_baseline(noisy, 3, 60, np.ones(3), 2, 0.1, 4, pool)


def test_noiseless_compare_equivalence(noiseless):
    # psgd and local sgd take the same T/B gradient steps; cr-psgd takes t*
    x1 = np.ones(3)
    T, B, H = 400, 2, 5
    x_p, tp = psgd_baseline(noiseless, 2, T, x1, B, 0.05)
    x_l, tl = local_sgd_baseline(noiseless, 2, T, x1, B, 0.05, H)
    x_c, tc = cr_psgd(noiseless, CrPsgdConfig(2, T, x1, B, 1.1, 0.05))
    assert np.allclose(x_p, x_l, rtol=1e-12)
    assert (tp.comm_rounds, tl.comm_rounds, tc.comm_rounds) == (T // B, T // (B * H), num_rounds(BatchSchedule(B, 1.1), T))


def test_sweep_local_h_noiseless_selects_largest(noiseless):
    res = sweep_local_h(noiseless, 2, 240, np.ones(3), 2, 0.05, [2, 4, 8])
    assert res["selected_H"] == 8
    assert [r["H"] for r in res["rows"]] == [2, 4, 8]
    assert all(r["loss_ratio"] == pytest.approx(1.0, rel=1e-9) for r in res["rows"])


# ---------------------------------------------------------------------------
# Catalyst


def _catalyst_setup(sigma2=1.0):
    base = CosineNonconvex(3, 1.0, 2.0)
    o = AdditiveGaussianOracle(base, sigma2)
    return base, o, proximal_oracle_factory(o, 2 * base.smoothness_L)


def test_catalyst_outer_and_inner_counts():
    base, o, fac = _catalyst_setup()
    cfg = CatalystConfig(2, 50, 10.0, np.ones(3), 2, 1.1, 0.01)
    tr = cr_psgd_catalyst(fac, cfg, seed=0)
    K, S = math.isqrt(100), math.isqrt(25)
    assert (cfg.outer_iterations, cfg.inner_budget) == (K, S)
    assert len(tr.rows) == K
    per = num_rounds(BatchSchedule(2, 1.1), S)
    assert tr.comm_rounds == K * per
    assert tr.sfo_per_worker == K * sum(BatchSchedule(2, 1.1).sizes(S))
    assert [r.outer_k for r in tr.rows] == list(range(1, K + 1))


def test_catalyst_single_round():
    base, o, fac = _catalyst_setup()
    cfg = CatalystConfig(1, 1, 10.0, np.ones(3), 2, 1.1, 0.01)
    assert (cfg.outer_iterations, cfg.inner_budget) == (1, 1)
    with pytest.warns(DegenerateRunWarning):
        tr = cr_psgd_catalyst(fac, cfg)
    # inner budget 1 < B1: the call makes no update
    assert tr.comm_rounds == 0 and np.array_equal(tr.final_x, np.ones(3))


def test_catalyst_matches_reference_loop():
    # independent re-implementation: explicit proximal gradient noise via the base oracle
    base, o, fac = _catalyst_setup()
    N, T, theta, gamma = 2, 72, 10.0, 0.02
    cfg = CatalystConfig(N, T, theta, np.full(3, 0.7), 2, 1.2, gamma)
    tr = cr_psgd_catalyst(fac, cfg, seed=5)
    y = np.full(3, 0.7)
    rnd = 0
    sched = BatchSchedule(2, 1.2)
    for _ in range(math.isqrt(N * T)):
        x = y.copy()
        for B in sched.sizes(math.isqrt(T // N)):
            gs = [o.batch_mean(x, 5, i, rnd, B) + theta * (x - y) for i in range(N)]
            x = x - gamma * np.mean(gs, axis=0)
            rnd += 1
        y = x
    assert np.allclose(tr.final_x, y, rtol=0, atol=1e-10)


def test_catalyst_warm_start_and_centers():
    # record the center each inner solve is given
    base, o, fac = _catalyst_setup(sigma2=0.0)
    centers = []

    def factory(c):
        centers.append(np.array(c, copy=True))
        return fac(c)

    factory.base = fac.base
    cfg = CatalystConfig(1, 16, 10.0, np.ones(3), 2, 1.1, 0.05)
    tr = cr_psgd_catalyst(factory, cfg)
    assert len(centers) == cfg.outer_iterations
    assert np.array_equal(centers[0], np.ones(3))
    # each later center is the previous outer iterate, whose loss the trace recorded
    for k in range(1, len(centers)):
        assert tr.rows[k - 1].loss == base.value(centers[k])
    assert not np.array_equal(centers[1], centers[0])


def test_catalyst_theta_must_exceed_L():
    base, o, fac = _catalyst_setup()
    with pytest.raises(ConfigurationError):
        cr_psgd_catalyst(proximal_oracle_factory(o, 6.0), CatalystConfig(1, 16, 4.0, np.ones(3), 2, 1.1, 0.05))
    with pytest.raises(ConfigurationError):
        CatalystConfig(4, 2, 10.0, np.ones(3), 2, 1.1, 0.05)


def test_catalyst_conditions_report():
    base = CosineNonconvex(3, 1.0, 2.0)
    c = catalyst_conditions(base, CatalystConfig(1, 1024, 10.0, np.ones(3), 2, 1.04, 1 / 30), 1.0)
    assert c["theta_gt_L"] and c["gamma_lt_inv_theta_plus_L"]
    bad = catalyst_conditions(base, CatalystConfig(1, 1024, 10.0, np.ones(3), 2, 1.04, 0.1), 1.0)
    assert bad["valid"] is False


def test_determinism_across_parallelism():
    p = generate_logistic_instance(6, 4, 50, 0.01, seed=1)
    o = LogisticOracle(p)
    texts = set()
    for par in (1, 2, 4):
        with WorkerPool(4, par) as pool:
            _, tr = cr_psgd(o, CrPsgdConfig(4, 300, np.zeros(6), 2, 1.1, 0.1), pool, seed=3)
            texts.add(csv_text(tr.rows))
    assert len(texts) == 1
