"""CR-PSGD, CR-PSGD-Catalyst and the PSGD / local-SGD baselines.

All algorithms share the round-synchronous executor: per round, every worker
averages B fresh keyed samples at the shared iterate, the N averages are
aggregated once, and one SGD step is taken. Trace rows are measured with the
deterministic full objective after each communication round.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateRunWarning, RateConditionWarning
from .executor import Counters, WorkerPool, aggregate, parallel_batch_averages, sgd_step
from .objectives import SmoothObjective, StochasticOracle
from .schedule import BatchSchedule, ConstantSchedule, rate_constants
from .trace import RunTrace


@dataclass
class CrPsgdConfig:
    N: int
    T: int
    x1: np.ndarray
    B1: int
    rho: float
    gamma: float
    cap: int | None = None

    def __post_init__(self):
        self.schedule = BatchSchedule(self.B1, self.rho, self.cap)
        _check_common(self.N, self.T, self.gamma)
        self.x1 = np.asarray(self.x1, dtype=np.float64)


@dataclass
class CatalystConfig:
    N: int
    T: int
    theta: float
    y0: np.ndarray
    B1: int
    rho: float
    gamma: float
    cap: int | None = None

    def __post_init__(self):
        self.schedule = BatchSchedule(self.B1, self.rho, self.cap)
        _check_common(self.N, self.T, self.gamma)
        if self.T < self.N:
            raise ConfigurationError(f"Catalyst needs T >= N for a nonempty inner budget (T={self.T}, N={self.N})")
        self.y0 = np.asarray(self.y0, dtype=np.float64)

    @property
    def outer_iterations(self) -> int:
        return math.isqrt(self.N * self.T)

    @property
    def inner_budget(self) -> int:
        # floor(sqrt(T/N)) == isqrt(floor(T/N)) for integers
        return math.isqrt(self.T // self.N)


def _check_common(N, T, gamma):
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    if T < 0:
        raise ConfigurationError(f"T must be >= 0, got {T}")
    if not gamma > 0:
        raise ConfigurationError(f"gamma must be > 0, got {gamma}")


def _measure(obj: SmoothObjective, x):
    g = obj.gradient(x)
    return obj.value(x), float(g @ g)


def _check_dim(oracle, x):
    if x.shape != (oracle.dim,):
        raise ConfigurationError(f"initial point has shape {x.shape}, oracle dimension is {oracle.dim}")


def _pool_for(pool, N):
    if pool is None:
        return WorkerPool(N)
    if pool.N != N:
        raise ConfigurationError(f"worker pool has {pool.N} workers but the run asks for N={N}")
    return pool


def _run_rounds(oracle, schedule, T, x1, gamma, pool, seed, counters, trace=None, outer_k=0,
                round_offset=0, measure_obj=None):
    """Execute rounds while the cumulative batch stays within T. Returns (x, rounds, last_B)."""
    x = np.array(x1, dtype=np.float64, copy=True)
    t, used, last_B = 1, 0, 0
    while True:
        B = schedule.batch_size(t)
        if used + B > T:
            break
        gs = parallel_batch_averages(oracle, x, B, pool, round_offset + t - 1, seed, counters)
        x = sgd_step(x, aggregate(gs, counters), gamma)
        used += B
        last_B = B
        if trace is not None:
            trace.record(outer_k, t, B, counters, *_measure(measure_obj, x))
        t += 1
    return x, t - 1, last_B


def pl_rate_report(obj: SmoothObjective, gamma, rho, B1, sigma2) -> dict | None:
    """Rate constants for a run on ``obj`` (None when no P-L modulus is known)."""
    mu = obj.pl_modulus_mu
    if mu is None:
        return None
    try:
        rc = rate_constants(gamma, mu, obj.smoothness_L, rho, B1, sigma2)
    except ConfigurationError as exc:
        return {"nu": None, "delta": None, "c1": None, "c2": None, "valid": False, "reason": str(exc)}
    return rc.as_dict()


def _new_trace(algo, oracle, x1, seed, label):
    trace = RunTrace(algo=algo, run_id=label if label is not None else str(seed), seed=seed)
    trace.initial_loss, trace.initial_grad_norm_sq = _measure(oracle.objective, x1)
    return trace


def cr_psgd(oracle: StochasticOracle, cfg: CrPsgdConfig, pool: WorkerPool | None = None, *,
            seed: int = 0, label: str | None = None, record: bool = True) -> tuple[np.ndarray, RunTrace]:
    """Parallel SGD whose per-worker batch grows as floor(rho^(t-1) B1).

    Runs while the cumulative per-worker batch stays within ``cfg.T``.
    Returns the final iterate and the trace; one row per communication round.
    """
    pool = _pool_for(pool, cfg.N)
    _check_dim(oracle, cfg.x1)
    trace = _new_trace("cr-psgd", oracle, cfg.x1, seed, label)
    report = pl_rate_report(oracle.objective, cfg.gamma, cfg.rho, cfg.B1, oracle.sigma2)
    trace.meta["rate_constants"] = report
    if report is not None and not report["valid"]:
        warnings.warn(
            f"rho={cfg.rho}, gamma={cfg.gamma} violate the P-L rate conditions ({report})",
            RateConditionWarning, stacklevel=2,
        )
    if cfg.T < cfg.B1:
        warnings.warn(f"T={cfg.T} < B1={cfg.B1}: no round fits in the budget", DegenerateRunWarning, stacklevel=2)
    counters = Counters()
    x, rounds, _ = _run_rounds(oracle, cfg.schedule, cfg.T, cfg.x1, cfg.gamma, pool, seed, counters,
                               trace if record else None, measure_obj=oracle.objective)
    trace.final_x = x
    trace.meta.update(comm_rounds=counters.comm_rounds, sfo_per_worker=counters.sfo_per_worker, rounds=rounds)
    return x, trace


def catalyst_conditions(base: SmoothObjective, cfg: CatalystConfig, sigma2: float) -> dict:
    """Check the step-size/rho/budget conditions of the nonconvex guarantee (advisory)."""
    L = base.smoothness_L
    out = {"theta_gt_L": cfg.theta > L, "gamma_lt_inv_theta_plus_L": cfg.gamma < 1 / (cfg.theta + L)}
    if not (out["theta_gt_L"] and out["gamma_lt_inv_theta_plus_L"]):
        out.update(valid=False, T_threshold=None, rate_constants=None)
        return out
    rc = rate_constants(cfg.gamma, cfg.theta - L, cfg.theta + L, cfg.rho, cfg.B1, sigma2)
    out["rate_constants"] = rc.as_dict()
    if rc.valid:
        e = 2 / (1 + rc.delta)
        thr = max(cfg.N,
                  cfg.N * (4 * rc.c1 * (cfg.theta + L) ** 2 / (cfg.theta - L) ** 2) ** e,
                  cfg.N * rc.c1 ** e)
        out["T_threshold"] = thr
        out["valid"] = cfg.T >= thr
    else:
        out["T_threshold"] = None
        out["valid"] = False
    return out


def cr_psgd_catalyst(oracle_factory, cfg: CatalystConfig, pool: WorkerPool | None = None, *,
                     seed: int = 0, label: str | None = None) -> RunTrace:
    """Proximal-point outer loop around CR-PSGD.

    ``oracle_factory(center)`` returns an oracle for h_theta(.; center); it
    must expose ``base`` (the oracle of f), as built by
    :func:`crpsgd.objectives.proximal_oracle_factory`. Each of the
    floor(sqrt(NT)) outer steps runs CR-PSGD with budget floor(sqrt(T/N)),
    warm-started at the previous center. Rows record f and ||grad f|| at
    every y^(k).
    """
    pool = _pool_for(pool, cfg.N)
    base_oracle = oracle_factory.base
    base = base_oracle.objective
    _check_dim(base_oracle, cfg.y0)
    if not cfg.theta > base.smoothness_L:
        raise ConfigurationError(f"theta={cfg.theta} must exceed L={base.smoothness_L}")
    trace = _new_trace("cr-psgd-catalyst", base_oracle, cfg.y0, seed, label)
    cond = catalyst_conditions(base, cfg, base_oracle.sigma2)
    trace.meta["conditions"] = cond
    K, S = cfg.outer_iterations, cfg.inner_budget
    if S < cfg.B1:
        warnings.warn(f"inner budget floor(sqrt(T/N))={S} < B1={cfg.B1}: inner calls make no update",
                      DegenerateRunWarning, stacklevel=2)
    counters = Counters()
    y = np.array(cfg.y0, dtype=np.float64, copy=True)
    inner_rounds = 0
    for k in range(1, K + 1):
        oracle = oracle_factory(y)
        y, inner_rounds, last_B = _run_rounds(oracle, cfg.schedule, S, y, cfg.gamma, pool, seed, counters,
                                              round_offset=counters.comm_rounds)
        trace.record(k, inner_rounds, last_B, counters, *_measure(base, y))
    trace.final_x = y
    trace.meta.update(comm_rounds=counters.comm_rounds, sfo_per_worker=counters.sfo_per_worker,
                      outer_iterations=K, inner_budget=S, inner_rounds=inner_rounds)
    return trace


def psgd_baseline(oracle: StochasticOracle, N: int, T: int, x1, B_fixed: int, gamma: float,
                  pool: WorkerPool | None = None, *, seed: int = 0, label: str | None = None,
                  record: bool = True) -> tuple[np.ndarray, RunTrace]:
    """Classical parallel SGD: constant batch, one communication per batch."""
    _check_common(N, T, gamma)
    schedule = ConstantSchedule(B_fixed)
    pool = _pool_for(pool, N)
    x1 = np.asarray(x1, dtype=np.float64)
    _check_dim(oracle, x1)
    trace = _new_trace("psgd", oracle, x1, seed, label)
    if T < B_fixed:
        warnings.warn(f"T={T} < B={B_fixed}: no round fits in the budget", DegenerateRunWarning, stacklevel=2)
    counters = Counters()
    x, rounds, _ = _run_rounds(oracle, schedule, T, x1, gamma, pool, seed, counters,
                               trace if record else None, measure_obj=oracle.objective)
    trace.final_x = x
    trace.meta.update(comm_rounds=counters.comm_rounds, sfo_per_worker=counters.sfo_per_worker, rounds=rounds)
    return x, trace


def local_sgd_baseline(oracle: StochasticOracle, N: int, T: int, x1, B_fixed: int, gamma: float, H: int,
                       pool: WorkerPool | None = None, *, seed: int = 0, label: str | None = None,
                       record: bool = True) -> tuple[np.ndarray, RunTrace]:
    """Local SGD: H independent local steps per worker between model averagings.

    Worker i's local step s consumes keys (seed, i, s, 0..B-1), where s counts
    local steps from the start of the run. Each worker accumulates its
    gradients u_i; an averaging round sets x <- x - gamma * mean_i(u_i), so
    H = 1 reproduces PSGD bit for bit.
    """
    _check_common(N, T, gamma)
    if H < 1:
        raise ConfigurationError(f"H must be >= 1, got {H}")
    if B_fixed < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {B_fixed}")
    pool = _pool_for(pool, N)
    x = np.array(x1, dtype=np.float64, copy=True)
    _check_dim(oracle, x)
    trace = _new_trace("local-sgd", oracle, x, seed, label)
    trace.meta["H"] = H
    segments = T // (B_fixed * H)
    if segments == 0:
        warnings.warn(f"T={T} < B*H={B_fixed * H}: no averaging round fits in the budget",
                      DegenerateRunWarning, stacklevel=2)
    counters = Counters()
    for s in range(segments):
        def local(i, x=x, s=s):
            u = np.zeros_like(x)
            for h in range(H):
                step = s * H + h
                if pool.key_log is not None:
                    pool.key_log.consume(seed, i, step, 0, B_fixed)
                u = u + oracle.batch_mean(x - gamma * u if h else x, seed, i, step, B_fixed)
            return u

        us = pool.map(local, range(N))
        counters.sfo_per_worker += B_fixed * H
        x = sgd_step(x, aggregate(us, counters), gamma)
        if record:
            trace.record(0, s + 1, B_fixed, counters, *_measure(oracle.objective, x))
    trace.final_x = x
    trace.meta.update(comm_rounds=counters.comm_rounds, sfo_per_worker=counters.sfo_per_worker, rounds=segments)
    return x, trace


def sweep_local_h(oracle, N, T, x1, B_fixed, gamma, H_list, seeds=(0,), pool=None, tolerance=1.01):
    """Final loss per H (seed-averaged) and the largest H within ``tolerance`` x the H=1 loss.

    H = 1 is always run as the reference even when absent from ``H_list``.
    """
    H_list = sorted(set(int(h) for h in H_list))
    if not H_list:
        raise ConfigurationError("H list is empty")
    rows = []
    losses = {}
    for H in sorted(set(H_list) | {1}):
        vals, comm = [], 0
        for seed in seeds:
            _, tr = local_sgd_baseline(oracle, N, T, x1, B_fixed, gamma, H, pool, seed=seed, record=False)
            vals.append(oracle.objective.value(tr.final_x))
            comm = tr.comm_rounds
        losses[H] = float(np.mean(vals))
        if H in H_list:
            rows.append({"H": H, "final_loss": losses[H], "comm_rounds": comm})
    ref = losses[1]
    ok = [r["H"] for r in rows if r["final_loss"] <= tolerance * ref]
    selected = max(ok) if ok else 1
    for r in rows:
        r["loss_ratio"] = r["final_loss"] / ref if ref != 0 else (1.0 if r["final_loss"] == 0 else math.inf)
    return {"rows": rows, "reference_loss": ref, "selected_H": selected, "tolerance": tolerance}
