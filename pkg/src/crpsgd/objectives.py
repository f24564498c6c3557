"""Objective functions, stochastic first-order oracles and problem generators.

Every objective exposes ``value``/``gradient`` plus the metadata the
algorithms and checks need: smoothness modulus ``smoothness_L``, optional
P-L modulus ``pl_modulus_mu``, optional minimum ``f_star`` and minimizer
``x_star``, and ``strong_convexity`` when the function is strongly convex.

Oracles produce stochastic gradients that are pure functions of a stream key
(see :mod:`crpsgd.rng`). ``batch_mean`` is the hot path: the mean of the
samples keyed ``(run_id, worker, round, 0..B-1)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .errors import ConfigurationError, DegenerateProblemError
from .rng import RngStream


def _as_point(x, dim: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != dim:
        raise ConfigurationError(f"point has shape {x.shape}, objective dimension is {dim}")
    return x


class SmoothObjective:
    """Base class; subclasses implement ``_value`` and ``_gradient``."""

    dim: int
    smoothness_L: float
    pl_modulus_mu: float | None = None
    strong_convexity: float | None = None
    f_star: float | None = None
    x_star: np.ndarray | None = None

    def value(self, x) -> float:
        return float(self._value(_as_point(x, self.dim)))

    def gradient(self, x) -> np.ndarray:
        return self._gradient(_as_point(x, self.dim))

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError


def evaluate(obj: SmoothObjective, x) -> float:
    """f(x); raises ConfigurationError on a dimension mismatch."""
    return obj.value(x)


def full_gradient(obj: SmoothObjective, x) -> np.ndarray:
    """Deterministic gradient of ``obj`` at ``x``."""
    return obj.gradient(x)


# ---------------------------------------------------------------------------
# quadratics


class QuadraticPL(SmoothObjective):
    """f(x) = 1/2 ||A x - b||^2, P-L even when ``A`` is rank deficient.

    L is the largest squared singular value of A and the P-L modulus is the
    smallest *nonzero* squared singular value.
    """

    def __init__(self, A, b, rank_tol: float | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise ConfigurationError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        self.A = A
        self.b = b
        self.dim = A.shape[1]
        s = np.linalg.svd(A, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            raise DegenerateProblemError("A is the zero matrix")
        tol = rank_tol if rank_tol is not None else s[0] * max(A.shape) * np.finfo(float).eps
        nonzero = s[s > tol]
        self.singular_values = s
        self.rank = int(nonzero.size)
        self.smoothness_L = float(s[0] ** 2)
        self.pl_mu = float(nonzero[-1] ** 2)
        self.pl_modulus_mu = self.pl_mu
        self.strong_convexity = self.pl_mu if self.rank == self.dim else None
        self.x_star = np.linalg.pinv(A, rcond=tol / s[0]) @ b
        r = A @ self.x_star - b
        self.f_star = self.closed_form_f_star = 0.5 * float(r @ r)

    def _value(self, x):
        r = self.A @ x - self.b
        return 0.5 * (r @ r)

    def _gradient(self, x):
        return self.A.T @ (self.A @ x - self.b)


def isotropic_quadratic(dim: int, L: float = 1.0) -> QuadraticPL:
    """f(x) = (L/2)||x||^2."""
    return QuadraticPL(math.sqrt(L) * np.eye(dim), np.zeros(dim))


def compute_pl_modulus(q: QuadraticPL) -> float:
    """Smallest nonzero squared singular value of ``q.A``."""
    s = np.linalg.svd(q.A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateProblemError("A is the zero matrix")
    tol = s[0] * max(q.A.shape) * np.finfo(float).eps
    return float(s[s > tol][-1] ** 2)


def generate_quadratic_instance(d: int, rank: int, seed: int, rows: int | None = None) -> QuadraticPL:
    """Random ``rows x d`` matrix of the given rank (product of Gaussian factors)."""
    rows = d if rows is None else rows
    if not 1 <= rank <= min(rows, d):
        raise ConfigurationError(f"rank must be in [1, {min(rows, d)}], got {rank}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, d)) / math.sqrt(rank)
    b = rng.standard_normal(rows)
    return QuadraticPL(A, b)


# ---------------------------------------------------------------------------
# smooth nonconvex test function


class CosineNonconvex(SmoothObjective):
    """f(x) = 1/2 ||x||^2 + a sum_j cos(omega x_j).

    Smooth with L = 1 + |a| omega^2; nonconvex when a omega^2 > 1. The
    minimum separates over coordinates, so ``f_star`` is exact up to a 1-D
    minimization.
    """

    def __init__(self, dim: int, a: float = 1.0, omega: float = 2.0):
        if dim < 1:
            raise ConfigurationError("dim must be >= 1")
        self.dim = dim
        self.a = float(a)
        self.omega = float(omega)
        self.smoothness_L = 1.0 + abs(self.a) * self.omega**2
        t_star, v_star = self._scalar_min()
        self.x_star = np.full(dim, t_star)
        self.f_star = dim * v_star

    def _scalar_min(self):
        if self.a == 0.0:
            return 0.0, 0.0

        def phi(t):
            return 0.5 * t * t + self.a * math.cos(self.omega * t)

        # minimizers satisfy |t| <= |a| omega
        radius = abs(self.a) * self.omega + 1.0
        grid = np.linspace(-radius, radius, 4001)
        vals = 0.5 * grid**2 + self.a * np.cos(self.omega * grid)
        i = int(np.argmin(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(phi, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        return float(res.x), float(res.fun)

    def _value(self, x):
        return 0.5 * (x @ x) + self.a * np.sum(np.cos(self.omega * x))

    def _gradient(self, x):
        return x - self.a * self.omega * np.sin(self.omega * x)

    def hessian_diag(self, x) -> np.ndarray:
        x = _as_point(x, self.dim)
        return 1.0 - self.a * self.omega**2 * np.cos(self.omega * x)


# ---------------------------------------------------------------------------
# logistic regression


class LogisticProblem(SmoothObjective):
    """l2-regularized logistic regression over data sharded across N workers.

    f(x) = (1/N) sum_i (1/M) sum_j log(1 + exp(-b_ij z_ij.x)) + (reg_mu/2)||x||^2

    ``features`` has shape (N, M, d) and ``labels`` shape (N, M).
    """

    def __init__(self, features, labels, reg_mu: float = 0.0, x_true=None, seed: int | None = None,
                 params: dict | None = None):
        Z = np.ascontiguousarray(features, dtype=np.float64)
        y = np.ascontiguousarray(labels, dtype=np.float64)
        if Z.ndim != 3 or y.shape != Z.shape[:2]:
            raise ConfigurationError(f"features {Z.shape} and labels {y.shape} are inconsistent")
        if not np.all(np.abs(y) == 1.0):
            raise ConfigurationError("labels must be in {-1, +1}")
        if reg_mu < 0:
            raise ConfigurationError("reg_mu must be nonnegative")
        self.features = Z
        self.labels = y
        self.reg_mu = float(reg_mu)
        self.x_true = None if x_true is None else np.asarray(x_true, dtype=np.float64)
        self.seed = seed
        self.params = dict(params or {})
        self.workers, self.per_worker_samples, self.dim = Z.shape
        flat = Z.reshape(-1, self.dim)
        self._flat = flat
        self._flat_labels = y.reshape(-1)
        gram = flat.T @ flat / flat.shape[0]
        self.smoothness_L = 0.25 * float(np.linalg.eigvalsh(gram)[-1]) + self.reg_mu
        self.pl_modulus_mu = self.reg_mu if self.reg_mu > 0 else None
        self.strong_convexity = self.pl_modulus_mu
        # |d/dm log(1+e^-m)| <= 1, so a sample's data-term gradient is bounded by ||z||
        self.variance_bound = float(np.max(np.mean(np.sum(Z**2, axis=2), axis=1)))

    def _value(self, x):
        m = self._flat_labels * (self._flat @ x)
        return np.mean(np.logaddexp(0.0, -m)) + 0.5 * self.reg_mu * (x @ x)

    def _gradient(self, x):
        m = self._flat_labels * (self._flat @ x)
        coef = -self._flat_labels * _sigmoid(-m)
        return self._flat.T @ coef / self._flat.shape[0] + self.reg_mu * x

    def sample_gradient(self, x, worker: int, j: int) -> np.ndarray:
        """Gradient of the single term (worker, j), regularizer included."""
        x = _as_point(x, self.dim)
        z = self.features[worker, j]
        b = self.labels[worker, j]
        return -b * _sigmoid(-b * (z @ x)) * z + self.reg_mu * x

    def worker_gradient(self, x, worker: int) -> np.ndarray:
        x = _as_point(x, self.dim)
        Z = self.features[worker]
        y = self.labels[worker]
        coef = -y * _sigmoid(-y * (Z @ x))
        return Z.T @ coef / Z.shape[0] + self.reg_mu * x

    def worker_variance(self, x, worker: int) -> float:
        """Exact E||g - grad f_worker||^2 for a uniformly drawn local sample."""
        x = _as_point(x, self.dim)
        Z = self.features[worker]
        y = self.labels[worker]
        G = (-y * _sigmoid(-y * (Z @ x)))[:, None] * Z
        return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1)))


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def generate_logistic_instance(d: int, N: int, M_i: int, reg_mu: float, seed: int,
                               feature_mean: str = "ones") -> LogisticProblem:
    """Synthetic instance: z ~ N(mean, 4 I_d), x_true ~ N(0, I_d),
    b = sign(z.x_true + xi) with per-sample noise xi ~ N(0, 1).

    ``feature_mean`` is ``"ones"`` (all-ones mean vector) or ``"zero"``.
    """
    if min(d, N, M_i) < 1:
        raise ConfigurationError("d, N and M_i must be >= 1")
    if reg_mu < 0:
        raise ConfigurationError("reg_mu must be nonnegative")
    if feature_mean not in ("ones", "zero"):
        raise ConfigurationError(f"feature_mean must be 'ones' or 'zero', got {feature_mean!r}")
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(d)
    mean = 1.0 if feature_mean == "ones" else 0.0
    Z = mean + 2.0 * rng.standard_normal((N, M_i, d))
    xi = rng.standard_normal((N, M_i))
    labels = np.where(Z @ x_true + xi >= 0.0, 1.0, -1.0)
    params = {"d": d, "N": N, "M_i": M_i, "reg_mu": reg_mu, "feature_mean": feature_mean}
    return LogisticProblem(Z, labels, reg_mu, x_true=x_true, seed=seed, params=params)


# ---------------------------------------------------------------------------
# proximal wrapper


class ProximalObjective(SmoothObjective):
    """h(x; y) = f(x) + (theta/2)||x - y||^2 with theta > L.

    Smooth with modulus theta + L and strongly convex with modulus theta - L.
    """

    def __init__(self, base: SmoothObjective, center, theta: float):
        if not theta > base.smoothness_L:
            raise ConfigurationError(
                f"theta={theta} must exceed the base smoothness modulus L={base.smoothness_L}"
            )
        self.base = base
        self.center = _as_point(center, base.dim).copy()
        self.theta = float(theta)
        self.dim = base.dim
        self.smoothness_L = self.theta + base.smoothness_L
        self.strong_convexity = self.theta - base.smoothness_L
        self.pl_modulus_mu = self.strong_convexity

    def _value(self, x):
        d = x - self.center
        return self.base._value(x) + 0.5 * self.theta * (d @ d)

    def _gradient(self, x):
        return self.base._gradient(x) + self.theta * (x - self.center)


def make_proximal(base: SmoothObjective, y, theta: float) -> ProximalObjective:
    return ProximalObjective(base, y, theta)


# ---------------------------------------------------------------------------
# oracles


class StochasticOracle:
    """Unbiased stochastic gradients of ``objective`` with variance <= ``sigma2``."""

    objective: SmoothObjective
    sigma2: float
    noise_model: str

    def __init__(self, backend: str | None = None):
        self.kernels = kernels.get_backend(backend)

    @property
    def dim(self) -> int:
        return self.objective.dim

    def sample(self, x, stream: RngStream) -> np.ndarray:
        raise NotImplementedError

    def batch_mean(self, x, run_id: int, worker: int, rnd: int, B: int) -> np.ndarray:
        raise NotImplementedError


class AdditiveGaussianOracle(StochasticOracle):
    """grad f(x) + noise with noise ~ N(0, (sigma2/m) I), so E||noise||^2 = sigma2."""

    noise_model = "additive-gaussian"

    def __init__(self, objective: SmoothObjective, sigma2: float, backend: str | None = None):
        super().__init__(backend)
        if sigma2 < 0:
            raise ConfigurationError("sigma2 must be nonnegative")
        self.objective = objective
        self.sigma2 = float(sigma2)
        self._scale = math.sqrt(self.sigma2 / objective.dim)

    def sample(self, x, stream: RngStream) -> np.ndarray:
        g = self.objective.gradient(x)
        if self.sigma2 == 0.0:
            return g
        k = stream.key
        z = self.kernels.gaussian_samples(k[0], k[1], k[2], k[3], 1, self.dim)[0]
        return g + self._scale * z

    def batch_mean(self, x, run_id, worker, rnd, B):
        g = self.objective.gradient(x)
        if self.sigma2 == 0.0:
            return g
        noise = self.kernels.gaussian_sum(run_id, worker, rnd, B, self.dim)
        return g + (self._scale / B) * noise


class LogisticOracle(StochasticOracle):
    """Worker i draws a uniform sample from its own shard (with replacement).

    Each worker's gradient is unbiased for its local objective; the average
    over all N workers is unbiased for the full objective. ``sigma2`` is the
    bound max_i mean_j ||z_ij||^2 on the local variance.
    """

    noise_model = "per-sample-data"

    def __init__(self, problem: LogisticProblem, backend: str | None = None):
        super().__init__(backend)
        self.objective = problem
        self.sigma2 = problem.variance_bound

    def _check_worker(self, worker):
        if not 0 <= worker < self.objective.workers:
            raise ConfigurationError(
                f"worker {worker} out of range for a problem sharded over {self.objective.workers} workers"
            )

    def sample(self, x, stream: RngStream) -> np.ndarray:
        k = stream.key
        self._check_worker(k[1])
        j = int(self.kernels.sample_indices(k[0], k[1], k[2], k[3], 1, self.objective.per_worker_samples)[0])
        return self.objective.sample_gradient(x, k[1], j)

    def batch_mean(self, x, run_id, worker, rnd, B):
        self._check_worker(worker)
        p = self.objective
        x = _as_point(x, p.dim)
        s = self.kernels.logistic_grad_sum(p.features[worker], p.labels[worker], x, run_id, worker, rnd, B)
        return s / B + p.reg_mu * x


class ProximalOracle(StochasticOracle):
    """Base-oracle sample + theta (x - center): unbiased for h, same variance."""

    def __init__(self, base: StochasticOracle, center, theta: float):
        self.kernels = base.kernels
        self.base = base
        self.objective = make_proximal(base.objective, center, theta)
        self.center = self.objective.center
        self.theta = self.objective.theta
        self.sigma2 = base.sigma2
        self.noise_model = base.noise_model

    def sample(self, x, stream):
        x = _as_point(x, self.dim)
        return self.base.sample(x, stream) + self.theta * (x - self.center)

    def batch_mean(self, x, run_id, worker, rnd, B):
        x = _as_point(x, self.dim)
        return self.base.batch_mean(x, run_id, worker, rnd, B) + self.theta * (x - self.center)


def sample_stochastic_gradient(oracle: StochasticOracle, x, stream: RngStream) -> np.ndarray:
    return oracle.sample(x, stream)


def proximal_oracle_factory(base: StochasticOracle, theta: float):
    """center -> oracle for h_theta(.; center)."""
    if not theta > base.objective.smoothness_L:
        raise ConfigurationError(
            f"theta={theta} must exceed the base smoothness modulus L={base.objective.smoothness_L}"
        )

    def factory(center):
        return ProximalOracle(base, center, theta)

    factory.base = base
    factory.theta = theta
    return factory


# ---------------------------------------------------------------------------


def estimate_fstar(obj: SmoothObjective, budget: int) -> float:
    """Upper estimate of min f: ``budget`` gradient-descent steps of size 1/L from 0."""
    x = np.zeros(obj.dim)
    step = 1.0 / obj.smoothness_L
    for _ in range(budget):
        x = x - step * obj.gradient(x)
    return obj.value(x)
