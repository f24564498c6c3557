"""Config-driven experiment execution and trace summaries."""

from __future__ import annotations

import math
from collections import OrderedDict

from .algorithms import (
    CatalystConfig,
    CrPsgdConfig,
    catalyst_conditions,
    cr_psgd,
    cr_psgd_catalyst,
    local_sgd_baseline,
    pl_rate_report,
    psgd_baseline,
)
from .config import RunConfig, build_oracle, build_problem, initial_point
from .errors import ConfigurationError
from .executor import WorkerPool
from .objectives import LogisticProblem, proximal_oracle_factory


def _diagnostics(cfg: RunConfig, oracle) -> dict:
    p = cfg.params
    obj = oracle.objective
    out = {"smoothness_L": obj.smoothness_L, "pl_modulus_mu": obj.pl_modulus_mu, "sigma2": oracle.sigma2}
    if cfg.algorithm == "cr-psgd":
        out["rate_constants"] = pl_rate_report(obj, p.gamma, p.rho, p.B1, oracle.sigma2)
    elif cfg.algorithm == "cr-psgd-catalyst":
        theta = p.theta if p.theta is not None else 2 * obj.smoothness_L
        ccfg = CatalystConfig(p.N, p.T, theta, initial_point(p, obj.dim), p.B1, p.rho, p.gamma, p.cap)
        out["theta"] = theta
        out["catalyst_conditions"] = catalyst_conditions(obj, ccfg, oracle.sigma2)
    else:
        out["rate_constants"] = None
    return out


def run_config(cfg: RunConfig, base_dir=None):
    """Run every seed of ``cfg``. Returns (traces, diagnostics)."""
    problem = build_problem(cfg.problem, base_dir)
    oracle = build_oracle(problem, cfg.problem, backend=cfg.backend)
    p = cfg.params
    if isinstance(problem, LogisticProblem) and p.N != problem.workers:
        raise ConfigurationError(f"params.N={p.N} but the logistic instance is sharded over {problem.workers} workers")
    x1 = initial_point(p, problem.dim)
    diag = _diagnostics(cfg, oracle)
    traces = []
    with WorkerPool(p.N, cfg.parallelism) as pool:
        for seed in cfg.seeds:
            if cfg.algorithm == "cr-psgd":
                _, tr = cr_psgd(oracle, CrPsgdConfig(p.N, p.T, x1, p.B1, p.rho, p.gamma, p.cap), pool,
                                seed=seed, label=cfg.run_id)
            elif cfg.algorithm == "psgd":
                _, tr = psgd_baseline(oracle, p.N, p.T, x1, p.B, p.gamma, pool, seed=seed, label=cfg.run_id)
            elif cfg.algorithm == "local-sgd":
                _, tr = local_sgd_baseline(oracle, p.N, p.T, x1, p.B, p.gamma, p.H, pool, seed=seed,
                                           label=cfg.run_id)
            else:
                theta = diag["theta"]
                factory = proximal_oracle_factory(oracle, theta)
                tr = cr_psgd_catalyst(factory, CatalystConfig(p.N, p.T, theta, x1, p.B1, p.rho, p.gamma, p.cap),
                                      pool, seed=seed, label=cfg.run_id)
            traces.append(tr)
    return traces, diag


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def summarize(rows, config: dict, diagnostics: dict) -> dict:
    """Summary derived only from trace rows plus the resolved config."""
    by_seed = OrderedDict((s, []) for s in config["seeds"])
    for r in rows:
        by_seed.setdefault(r.seed, []).append(r)
    runs = []
    for seed, rs in by_seed.items():
        if rs:
            last = rs[-1]
            runs.append({
                "seed": seed,
                "rows": len(rs),
                "final_loss": last.loss,
                "final_grad_norm_sq": last.grad_norm_sq,
                "mean_grad_norm_sq": math.fsum(r.grad_norm_sq for r in rs) / len(rs),
                "comm_rounds": last.cum_comm_rounds,
                "sfo_per_worker": last.cum_sfo_per_worker,
            })
        else:
            runs.append({"seed": seed, "rows": 0, "final_loss": None, "final_grad_norm_sq": None,
                         "mean_grad_norm_sq": None, "comm_rounds": 0, "sfo_per_worker": 0})
    return {
        "algorithm": config["algorithm"],
        "run_id": config["run_id"],
        "final_loss": _mean(r["final_loss"] for r in runs),
        "final_grad_norm_sq": _mean(r["final_grad_norm_sq"] for r in runs),
        "mean_grad_norm_sq": _mean(r["mean_grad_norm_sq"] for r in runs),
        "comm_rounds": runs[0]["comm_rounds"],
        "sfo_per_worker": runs[0]["sfo_per_worker"],
        "runs": runs,
        "diagnostics": diagnostics,
        "config": config,
    }


def compare_report(summaries: list[dict], reference: str = "psgd") -> dict:
    """Final-loss deltas and communication ratios against ``reference``."""
    by_algo = {s["algorithm"]: s for s in summaries}
    ref = by_algo.get(reference, summaries[0])
    out = []
    for s in summaries:
        rel = None
        if ref["final_loss"] not in (None, 0) and s["final_loss"] is not None:
            rel = (s["final_loss"] - ref["final_loss"]) / abs(ref["final_loss"])
        ratio = s["comm_rounds"] / ref["comm_rounds"] if ref["comm_rounds"] else None
        out.append({
            "algorithm": s["algorithm"],
            "run_id": s["run_id"],
            "final_loss": s["final_loss"],
            "final_loss_rel_delta": rel,
            "comm_rounds": s["comm_rounds"],
            "comm_ratio": ratio,
            "sfo_per_worker": s["sfo_per_worker"],
        })
    return {"reference": ref["algorithm"], "algorithms": out}


def check_shared(configs: list[RunConfig]) -> None:
    first = configs[0]
    for c in configs[1:]:
        for what, a, b in (("problem", first.problem, c.problem), ("params.N", first.params.N, c.params.N),
                           ("params.T", first.params.T, c.params.T), ("seeds", first.seeds, c.seeds)):
            if a != b:
                raise ConfigurationError(f"compared configs disagree on {what}: {a!r} vs {b!r}")
