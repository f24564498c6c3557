"""Numerical checks of the one-step contraction, the smooth/strongly-convex
facts, and the convergence-rate exponents of CR-PSGD and its Catalyst variant.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .algorithms import CatalystConfig, CrPsgdConfig, cr_psgd, cr_psgd_catalyst
from .errors import ConfigurationError, InsufficientDataError
from .executor import WorkerPool, aggregate, parallel_batch_averages, sgd_step
from .objectives import (
    AdditiveGaussianOracle,
    CosineNonconvex,
    QuadraticPL,
    SmoothObjective,
    isotropic_quadratic,
    proximal_oracle_factory,
)
from .schedule import BatchSchedule, num_rounds, rate_constants, rounds_lower_bound

# ---------------------------------------------------------------------------
# one-step contraction on f(x) = 1/2 ||x||^2


@dataclass
class Lemma1Cell:
    gamma: float
    N: int
    Bt: int
    sigma2: float
    start_gap: float
    exact_next_gap: float
    bound: float
    closed_form_holds: bool
    trials: int = 0
    empirical_mean: float | None = None
    empirical_se: float | None = None
    empirical_within_bound: bool | None = None
    empirical_matches_exact: bool | None = None

    @property
    def passed(self) -> bool:
        ok = self.closed_form_holds
        if self.trials:
            ok = ok and bool(self.empirical_within_bound) and bool(self.empirical_matches_exact)
        return ok


def monte_carlo_lemma1(gamma: float, N: int, Bt: int, sigma2: float, trials: int, *,
                       start_gap: float = 1.0, dim: int = 4, seed: int = 0, L: float = 1.0,
                       z: float = 4.0) -> Lemma1Cell:
    """Check E[f(x+) - f*] <= (1 - nu) (f(x) - f*) + gamma (2 - L gamma) sigma2 / (2 N Bt).

    f is (L/2)||x||^2 (L = mu), with the additive Gaussian oracle, so the
    left side is exactly (1 - L gamma)^2 gap + L gamma^2 sigma2 / (2 N Bt).
    With ``trials`` > 0 the step is also simulated through the executor and
    the sample mean is compared with both sides at ``z`` standard errors.
    """
    if not 0 < gamma < 1 / L:
        raise ConfigurationError(f"need 0 < gamma < 1/L, got gamma={gamma}, L={L}")
    mu = L
    nu = 0.5 * gamma * mu * (1 - L * gamma)
    noise = gamma * (2 - L * gamma) * sigma2 / (2 * N * Bt)
    bound = (1 - nu) * start_gap + noise
    exact = (1 - L * gamma) ** 2 * start_gap + 0.5 * L * gamma**2 * sigma2 / (N * Bt)
    cell = Lemma1Cell(gamma, N, Bt, sigma2, start_gap, exact, bound, exact <= bound)
    if trials:
        obj = isotropic_quadratic(dim, L)
        oracle = AdditiveGaussianOracle(obj, sigma2)
        x = np.zeros(dim)
        x[0] = math.sqrt(2 * start_gap / L)
        vals = np.empty(trials)
        pool = WorkerPool(N)
        for r in range(trials):
            gs = parallel_batch_averages(oracle, x, Bt, pool, r, seed)
            vals[r] = obj.value(sgd_step(x, aggregate(gs), gamma))
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
        cell.trials = trials
        cell.empirical_mean = mean
        cell.empirical_se = se
        cell.empirical_within_bound = mean - z * se <= bound
        cell.empirical_matches_exact = abs(mean - exact) <= z * se
    return cell


LEMMA1_GRID = [(g, n, b) for g in (0.01, 0.1, 0.5) for n in (1, 4) for b in (1, 8)]


def lemma1_grid(trials: int = 10_000, sigma2: float = 1.0, seed: int = 0) -> list[Lemma1Cell]:
    return [monte_carlo_lemma1(g, n, b, sigma2, trials, seed=seed) for g, n, b in LEMMA1_GRID]


# ---------------------------------------------------------------------------
# basic facts for smooth / strongly convex functions


@dataclass
class FactsReport:
    points: int
    checked: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    max_violation: dict = field(default_factory=dict)
    equality: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checked.values())

    def as_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _leq(lhs, rhs, rtol):
    """lhs <= rhs up to relative tolerance; returns (ok, worst excess, all-equal)."""
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    excess = (lhs - rhs) / scale
    return bool(np.all(excess <= rtol)), float(np.max(excess)), bool(np.all(np.abs(excess) <= rtol))


def check_facts_suite(obj: SmoothObjective, points: int, *, seed: int = 0, radius: float = 3.0,
                      rtol: float = 1e-9) -> FactsReport:
    """Evaluate the four inequalities at ``points`` random points around x*.

    smooth:            f(x) - f* <= (L/2)||x - x*||^2
                       ||grad f(x)||^2 / (2L) <= f(x) - f*
    strongly convex:   f(x) - f* >= (mu/2)||x - x*||^2
                       ||grad f(x)|| >= mu ||x - x*||
    The last two run only when ``obj.strong_convexity`` is set.
    """
    rep = FactsReport(points)
    if obj.x_star is None or obj.f_star is None:
        for name in ("gap_le_L_dist", "gradnorm_le_gap", "gap_ge_mu_dist", "gradnorm_ge_mu_dist"):
            rep.skipped[name] = "objective does not declare x_star and f_star"
        return rep
    rng = np.random.default_rng(seed)
    xs = obj.x_star + radius * rng.standard_normal((points, obj.dim))
    L = obj.smoothness_L
    gap = np.empty(points)
    dist2 = np.empty(points)
    gnorm2 = np.empty(points)
    for i, x in enumerate(xs):
        g = obj.gradient(x)
        gap[i] = obj.value(x) - obj.f_star
        d = x - obj.x_star
        dist2[i] = d @ d
        gnorm2[i] = g @ g
    for name, (lhs, rhs) in {
        "gap_le_L_dist": (gap, 0.5 * L * dist2),
        "gradnorm_le_gap": (gnorm2 / (2 * L), gap),
    }.items():
        ok, worst, eq = _leq(lhs, rhs, rtol)
        rep.checked[name], rep.max_violation[name], rep.equality[name] = ok, worst, eq
    mu = obj.strong_convexity
    if mu is None:
        rep.skipped["gap_ge_mu_dist"] = rep.skipped["gradnorm_ge_mu_dist"] = "no strong convexity declared"
    else:
        for name, (lhs, rhs) in {
            "gap_ge_mu_dist": (0.5 * mu * dist2, gap),
            "gradnorm_ge_mu_dist": (mu * np.sqrt(dist2), np.sqrt(gnorm2)),
        }.items():
            ok, worst, eq = _leq(lhs, rhs, rtol)
            rep.checked[name], rep.max_violation[name], rep.equality[name] = ok, worst, eq
    return rep


def random_quadratic(dim: int, seed: int, cond: float = 20.0) -> QuadraticPL:
    """Full-rank anisotropic quadratic with known spectrum (for the facts suite)."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    s = np.sqrt(np.geomspace(1.0, cond, dim))
    A = Q @ np.diag(s) @ np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    return QuadraticPL(A, rng.standard_normal(dim))


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class FitReport:
    exponent: float
    ci: tuple[float, float]
    residual: float
    window: tuple[float, float]
    passed: bool
    points: int
    ratios: list[float] = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


def fit_power_law(xs, ys, window, confidence: float = 0.95) -> FitReport:
    """OLS slope of log y against log x."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 4:
        raise InsufficientDataError(f"need at least 4 budget points, got {xs.size}")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise ConfigurationError("power-law fits need positive values")
    order = np.argsort(xs)
    lx, ly = np.log(xs[order]), np.log(ys[order])
    res = stats.linregress(lx, ly)
    fitted = res.intercept + res.slope * lx
    resid = float(np.sqrt(np.mean((ly - fitted) ** 2)))
    if xs.size > 2 and np.isfinite(res.stderr):
        h = stats.t.ppf(0.5 + confidence / 2, xs.size - 2) * res.stderr
    else:
        h = math.inf
    slope = float(res.slope)
    ratios = [float(ys[order][i] / ys[order][i + 1]) for i in range(xs.size - 1)]
    return FitReport(slope, (slope - h, slope + h), resid, tuple(window),
                     window[0] <= slope <= window[1], int(xs.size), ratios)


PL_WINDOW = (-1.3, -0.8)
CATALYST_RATIO_WINDOW = (1.4, 2.8)
# exponent window equivalent to the per-quadrupling ratio window
CATALYST_WINDOW = (-math.log(CATALYST_RATIO_WINDOW[1], 4), -math.log(CATALYST_RATIO_WINDOW[0], 4))


@dataclass
class PLRateReport:
    vs_T: dict[int, FitReport]
    vs_N: dict[int, FitReport]

    @property
    def passed(self) -> bool:
        return all(f.passed for f in (*self.vs_T.values(), *self.vs_N.values()))

    def as_dict(self):
        return {"vs_T": {str(k): v.as_dict() for k, v in self.vs_T.items()},
                "vs_N": {str(k): v.as_dict() for k, v in self.vs_N.items()},
                "passed": self.passed}


def fit_pl_rate(sweep, window=PL_WINDOW) -> PLRateReport:
    """Exponent of the final gap vs T (per fixed N) and vs N (per fixed T).

    ``sweep`` holds (N, T, mean final gap) triples. Groups with fewer than 4
    distinct budgets are skipped; if no group qualifies the sweep is rejected.
    """
    by_N, by_T = defaultdict(dict), defaultdict(dict)
    for N, T, gap in sweep:
        by_N[N][T] = gap
        by_T[T][N] = gap
    vs_T = {N: fit_power_law(list(d), list(d.values()), window) for N, d in sorted(by_N.items()) if len(d) >= 4}
    vs_N = {T: fit_power_law(list(d), list(d.values()), window) for T, d in sorted(by_T.items()) if len(d) >= 4}
    if not vs_T and not vs_N:
        raise InsufficientDataError("no N or T slice of the sweep has 4 or more budget points")
    return PLRateReport(vs_T, vs_N)


def fit_catalyst_rate(sweep, window=CATALYST_WINDOW) -> FitReport:
    """Exponent of the mean squared gradient norm vs the total budget N*T."""
    budgets = [N * T for N, T, _ in sweep]
    if len(set(budgets)) != len(budgets):
        raise ConfigurationError("duplicate N*T budgets in the sweep")
    return fit_power_law(budgets, [v for _, _, v in sweep], window)


def nonconvex_test_objective(dim: int, a: float = 1.0, omega: float = 2.0) -> CosineNonconvex:
    """1/2 ||x||^2 + a sum cos(omega x_j): smooth, L = 1 + a omega^2, nonconvex for a omega^2 > 1."""
    return CosineNonconvex(dim, a, omega)


# ---------------------------------------------------------------------------
# simulation sweeps


@dataclass
class PLSweepSettings:
    dim: int = 10
    sigma2: float = 1.0
    gamma: float = 0.5
    rho: float = 1.05
    B1: int = 2
    seeds: int = 64
    fixed_N: int = 4
    T_values: tuple = tuple(2**k for k in range(12, 17))
    N_values: tuple = (1, 2, 4, 8)
    fixed_T: int = 2**16


def pl_sweep(settings: PLSweepSettings = PLSweepSettings(), backend: str | None = None):
    """Seed-averaged final gaps of CR-PSGD on (1/2)||x||^2 (L = mu = 1).

    Returns (sweep triples, communication-identity records, rate constants).
    """
    s = settings
    obj = isotropic_quadratic(s.dim)
    oracle = AdditiveGaussianOracle(obj, s.sigma2, backend=backend)
    rc = rate_constants(s.gamma, 1.0, 1.0, s.rho, s.B1, s.sigma2)
    cells = sorted({(s.fixed_N, T) for T in s.T_values} | {(N, s.fixed_T) for N in s.N_values})
    sched = BatchSchedule(s.B1, s.rho)
    sweep, comm = [], []
    for N, T in cells:
        gaps = []
        with WorkerPool(N) as pool:
            for seed in range(s.seeds):
                cfg = CrPsgdConfig(N, T, np.ones(s.dim), s.B1, s.rho, s.gamma)
                x, tr = cr_psgd(oracle, cfg, pool, seed=seed, record=False)
                gaps.append(obj.value(x) - obj.f_star)
                if seed == 0:
                    comm.append(communication_identity(sched, T, tr.comm_rounds))
        sweep.append((N, T, float(np.mean(gaps))))
    return sweep, comm, rc


def communication_identity(sched: BatchSchedule, T: int, comm_rounds: int) -> dict:
    expected = num_rounds(sched, T)
    lb = rounds_lower_bound(sched, T)
    return {"T": T, "comm_rounds": comm_rounds, "expected": expected, "log_bound": lb,
            "ok": comm_rounds == expected and comm_rounds + 1 >= lb and comm_rounds <= lb + 1}


def doubling_ratios(sweep, fixed_T: int) -> dict[str, float]:
    at_T = {N: g for N, T, g in sweep if T == fixed_T}
    Ns = sorted(at_T)
    return {f"{a}->{b}": at_T[a] / at_T[b] for a, b in zip(Ns, Ns[1:])}


@dataclass
class CatalystSweepSettings:
    dim: int = 10
    a: float = 1.0
    omega: float = 2.0
    sigma2: float = 1.0
    theta_factor: float = 2.0
    gamma: float = 1.0 / 30.0
    rho: float = 1.04
    B1: int = 2
    seeds: int = 32
    y0: float = 1.5
    budgets: tuple = ((1, 1024), (2, 2048), (4, 4096), (8, 8192))


def catalyst_sweep(settings: CatalystSweepSettings = CatalystSweepSettings(), backend: str | None = None):
    """Seed-averaged mean_k ||grad f(y^(k))||^2 for each (N, T) budget."""
    s = settings
    obj = nonconvex_test_objective(s.dim, s.a, s.omega)
    oracle = AdditiveGaussianOracle(obj, s.sigma2, backend=backend)
    theta = s.theta_factor * obj.smoothness_L
    factory = proximal_oracle_factory(oracle, theta)
    sweep = []
    for N, T in s.budgets:
        vals = []
        with WorkerPool(N) as pool:
            for seed in range(s.seeds):
                cfg = CatalystConfig(N, T, theta, np.full(s.dim, s.y0), s.B1, s.rho, s.gamma)
                tr = cr_psgd_catalyst(factory, cfg, pool, seed=seed)
                vals.append(float(tr.column("grad_norm_sq").mean()))
        sweep.append((N, T, float(np.mean(vals))))
    return sweep
