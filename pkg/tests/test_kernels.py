import numpy as np
import pytest

from crpsgd import kernels
from crpsgd.rng import KeyLog, RngStream
from crpsgd.errors import StreamReuseError

BACKENDS = kernels.available_backends()


def test_fallback_always_available():
    assert "python" in BACKENDS


def test_env_selects_backend(monkeypatch):
    monkeypatch.setenv("CRPSGD_BACKEND", "python")
    assert kernels.get_backend().NAME == "python"


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")
def test_backends_agree():
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    assert np.array_equal(py.stream_words(3, 1, 7, 0, 100, 3), cy.stream_words(3, 1, 7, 0, 100, 3))
    assert np.array_equal(py.sample_indices(3, 1, 7, 0, 500, 997), cy.sample_indices(3, 1, 7, 0, 500, 997))
    a, b = py.gaussian_samples(5, 2, 9, 0, 64, 7), cy.gaussian_samples(5, 2, 9, 0, 64, 7)
    assert np.allclose(a, b, rtol=0, atol=1e-14)
    a, b = py.gaussian_sum(5, 2, 9, 5000, 7), cy.gaussian_sum(5, 2, 9, 5000, 7)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-11)
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((50, 6))
    y = np.where(rng.random(50) < 0.5, -1.0, 1.0)
    x = rng.standard_normal(6)
    assert np.allclose(py.logistic_grad_sum(Z, y, x, 1, 0, 3, 300), cy.logistic_grad_sum(Z, y, x, 1, 0, 3, 300),
                       rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_gaussian_moments(name):
    k = kernels.get_backend(name)
    z = k.gaussian_samples(11, 0, 0, 0, 200_000, 1).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)


@pytest.mark.parametrize("name", BACKENDS)
def test_gaussian_sum_is_sum_of_samples(name):
    k = kernels.get_backend(name)
    s = k.gaussian_sum(1, 2, 3, 37, 5)
    ref = k.gaussian_samples(1, 2, 3, 0, 37, 5).sum(axis=0)
    assert np.allclose(s, ref, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("name", BACKENDS)
def test_sample_indices_uniform(name):
    k = kernels.get_backend(name)
    idx = k.sample_indices(4, 0, 0, 0, 100_000, 10)
    assert idx.min() == 0 and idx.max() == 9
    counts = np.bincount(idx, minlength=10)
    # chi-square with 9 dof, far tail
    chi2 = np.sum((counts - 10_000) ** 2 / 10_000)
    assert chi2 < 40


@pytest.mark.parametrize("name", BACKENDS)
def test_streams_are_keyed(name):
    k = kernels.get_backend(name)
    base = k.stream_words(1, 2, 3, 0, 8, 2)
    assert np.array_equal(base, k.stream_words(1, 2, 3, 0, 8, 2))
    for other in [(2, 2, 3), (1, 3, 3), (1, 2, 4)]:
        assert not np.array_equal(base, k.stream_words(*other, 0, 8, 2))
    # sample offsets address the same per-sample streams
    assert np.array_equal(base[4:], k.stream_words(1, 2, 3, 4, 4, 2))


def test_rng_stream_key():
    assert RngStream(1, 2, 3, 4).key == (1, 2, 3, 4)
    assert RngStream(1, 2, 3).key == (1, 2, 3, 0)


def test_key_log_detects_reuse():
    log = KeyLog()
    log.consume(0, 1, 2, 0, 4)
    log.consume(0, 1, 2, 4, 8)
    log.consume(0, 2, 2, 0, 4)
    with pytest.raises(StreamReuseError):
        log.consume(0, 1, 2, 3, 5)
    assert len(log) == 3
