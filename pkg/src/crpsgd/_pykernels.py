"""Pure-numpy implementations of the hot kernels.

Bit-for-bit identical to the compiled kernels for the integer streams;
floating-point outputs agree to rounding (summation order and libm
differences).
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0

NAME = "python"


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _key_hashes(run, worker, rnd, sample0, n):
    with np.errstate(over="ignore"):
        h = np.zeros(1, dtype=np.uint64)
        for comp in (run, worker, rnd):
            c = np.array([comp & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
            h = _mix(h ^ _mix(c + GOLDEN))
        samples = np.arange(sample0, sample0 + n, dtype=np.uint64)
        return _mix(h ^ _mix(samples + GOLDEN))


def stream_words(run, worker, rnd, sample0, n, nwords):
    """Raw 64-bit words, shape (n, nwords), for keys (run, worker, rnd, sample0 + j)."""
    h = _key_hashes(run, worker, rnd, sample0, n)
    k = np.arange(1, nwords + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(h[:, None] + k[None, :] * GOLDEN)


def _box_muller(words, dim):
    hi = (words >> np.uint64(11)).astype(np.float64)
    u1 = (hi[:, 0::2] + 1.0) * _INV_2_53
    u2 = hi[:, 1::2] * _INV_2_53
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty((words.shape[0], 2 * u1.shape[1]))
    out[:, 0::2] = r * np.cos(_TWO_PI * u2)
    out[:, 1::2] = r * np.sin(_TWO_PI * u2)
    return out[:, :dim]


def gaussian_samples(run, worker, rnd, sample0, n, dim):
    nwords = 2 * ((dim + 1) // 2)
    return _box_muller(stream_words(run, worker, rnd, sample0, n, nwords), dim)


_CHUNK = 4096


def gaussian_sum(run, worker, rnd, n, dim):
    acc = np.zeros(dim)
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        acc += gaussian_samples(run, worker, rnd, start, stop - start, dim).sum(axis=0)
    return acc


def sample_indices(run, worker, rnd, sample0, n, m):
    w = stream_words(run, worker, rnd, sample0, n, 1)[:, 0]
    return ((w >> np.uint64(32)) * np.uint64(m)) >> np.uint64(32)


def logistic_grad_sum(Z, b, x, run, worker, rnd, n):
    """Sum over n keyed draws j of the data-term gradient -b_j sigmoid(-b_j z_j.x) z_j."""
    acc = np.zeros(Z.shape[1])
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        idx = sample_indices(run, worker, rnd, start, stop - start, Z.shape[0]).astype(np.intp)
        zz = Z[idx]
        bb = b[idx]
        margin = bb * (zz @ x)
        coef = -bb * _sigmoid(-margin)
        acc += coef @ zz
    return acc


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out
