"""Command-line front end.

Subcommands: gen, run, compare, verify, sweep-local-h, plot-script.
Exit codes: 0 success, 2 configuration error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import verify as V
from .algorithms import sweep_local_h
from .config import build_oracle, build_problem, initial_point, load_config
from .errors import ConfigurationError, RateConditionWarning
from .executor import WorkerPool
from .objectives import isotropic_quadratic
from .problem_io import generate, save_problem
from .runner import check_shared, compare_report, run_config, summarize
from .trace import CSV_COLUMNS, atomic_write_text, csv_text

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3

SUITES = ("lemma1", "facts", "pl-rate", "catalyst-rate", "determinism")


def jsonable(obj):
    """Replace non-finite floats (not valid JSON) with strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _parse_set(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


# flags that mirror config keys
_PARAM_FLAGS = {"N": int, "T": int, "gamma": float, "B1": int, "rho": float, "B": int, "H": int,
                "theta": float, "cap": int}


def _add_config_flags(p):
    p.add_argument("config", help="YAML run configuration")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, dotted (e.g. params.T=5000); repeatable")
    for name, typ in _PARAM_FLAGS.items():
        p.add_argument(f"--{name}", type=typ, default=None, help=f"override params.{name}")
    p.add_argument("--algorithm", default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--backend", choices=("cython", "python"), default=None)
    p.add_argument("--problem-path", default=None, help="override problem.path")
    p.add_argument("--trace", default=None, help="override output.trace")
    p.add_argument("--summary", default=None, help="override output.summary")


def _overrides(args) -> dict:
    ov = _parse_set(args.set)
    for name in _PARAM_FLAGS:
        v = getattr(args, name)
        if v is not None:
            ov[f"params.{name}"] = v
    for key, attr in (("algorithm", "algorithm"), ("seeds", "seeds"), ("parallelism", "parallelism"),
                      ("backend", "backend"), ("problem.path", "problem_path"), ("output.trace", "trace"),
                      ("output.summary", "summary")):
        v = getattr(args, attr, None)
        if v is not None:
            ov[key] = v
    return ov


def _load(path, args):
    return load_config(path, _overrides(args))


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    params = {"d": args.d}
    if args.family == "logistic":
        params.update(N=args.N, M_i=args.M, reg_mu=args.reg, feature_mean=args.feature_mean)
    elif args.family == "quadratic":
        params.update(rank=args.rank if args.rank is not None else args.d, rows=args.rows)
    else:
        params.update(a=args.a, omega=args.omega)
    prob, meta = generate(args.family, args.seed, **params)
    save_problem(prob, args.out, meta)
    info = {"family": args.family, "dim": prob.dim, "smoothness_L": prob.smoothness_L,
            "pl_modulus_mu": prob.pl_modulus_mu, "out": str(args.out)}
    print(dump_json(info), end="")
    return EXIT_OK


def _execute(cfg, base_dir):
    t0 = time.perf_counter()
    traces, diag = run_config(cfg, base_dir)
    rows = [r for tr in traces for r in tr.rows]
    summary = summarize(rows, cfg.model_dump(mode="json"), jsonable(diag))
    summary["wall_seconds"] = round(time.perf_counter() - t0, 3)
    return rows, summary


def _resolve(path, base_dir):
    p = Path(path)
    return p if p.is_absolute() else Path(base_dir) / p if base_dir else p


def cmd_run(args) -> int:
    cfg = _load(args.config, args)
    base = Path(args.config).parent
    rows, summary = _execute(cfg, base)
    atomic_write_text(_resolve(cfg.output.trace, base), csv_text(rows))
    summary.pop("wall_seconds")
    atomic_write_text(_resolve(cfg.output.summary, base), dump_json(summary))
    _progress(f"{cfg.algorithm}: {summary['comm_rounds']} communication rounds, "
              f"final loss {summary['final_loss']!r}")
    return EXIT_OK


def cmd_compare(args) -> int:
    configs = [load_config(p, _parse_set(args.set)) for p in args.configs]
    check_shared(configs)
    all_rows, summaries = [], []
    for path, cfg in zip(args.configs, configs):
        rows, summary = _execute(cfg, Path(path).parent)
        summary.pop("wall_seconds")
        all_rows.extend(rows)
        summaries.append(summary)
    report = compare_report(summaries)
    report["summaries"] = summaries
    out = Path(args.out_dir)
    atomic_write_text(out / "compare_trace.csv", csv_text(all_rows))
    atomic_write_text(out / "compare_report.json", dump_json(report))
    for a in report["algorithms"]:
        print(f"{a['algorithm']:>18}  loss={a['final_loss']!r:<24} rel_delta={a['final_loss_rel_delta']!r:<24} "
              f"comm={a['comm_rounds']:<6} ratio={a['comm_ratio']!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification suites


def suite_lemma1(quick: bool) -> dict:
    trials = 2000 if quick else 10_000
    cells = V.lemma1_grid(trials=trials)
    return {"passed": all(c.passed for c in cells),
            "cells": [{**vars(c), "passed": c.passed} for c in cells]}


def suite_facts(quick: bool, problem_path=None) -> dict:
    points = 200 if quick else 1000
    out = {}
    for L in (1.0, 3.0):
        rep = V.check_facts_suite(isotropic_quadratic(4, L), points, seed=0)
        out[f"isotropic_L{L:g}"] = rep.as_dict()
    for s in range(10):
        out[f"random_quadratic_{s}"] = V.check_facts_suite(V.random_quadratic(6, seed=s), points, seed=s).as_dict()
    if problem_path:
        from .problem_io import load_problem

        prob, _ = load_problem(problem_path)
        out["problem_file"] = V.check_facts_suite(prob, points).as_dict()
    return {"passed": all(v["passed"] for v in out.values()), "objectives": out}


def suite_pl_rate(quick: bool) -> dict:
    settings = V.PLSweepSettings()
    if quick:
        settings = V.PLSweepSettings(seeds=16, T_values=tuple(2**k for k in range(10, 14)), fixed_T=2**13)
    sweep, comm, rc = V.pl_sweep(settings)
    rep = V.fit_pl_rate(sweep)
    ratios = V.doubling_ratios(sweep, settings.fixed_T)
    ratios_ok = all(1.6 <= r <= 2.5 for r in ratios.values())
    return {"passed": rep.passed and ratios_ok and all(c["ok"] for c in comm) and rc.valid,
            "fit": rep.as_dict(), "doubling_ratios": ratios, "ratio_window": [1.6, 2.5],
            "communication": comm, "rate_constants": rc.as_dict(), "sweep": sweep}


def suite_catalyst_rate(quick: bool) -> dict:
    settings = V.CatalystSweepSettings()
    if quick:
        settings = V.CatalystSweepSettings(seeds=8, budgets=((1, 256), (1, 1024), (1, 4096), (1, 16384)))
    sweep = V.catalyst_sweep(settings)
    rep = V.fit_catalyst_rate(sweep)
    ratios_ok = all(V.CATALYST_RATIO_WINDOW[0] <= r <= V.CATALYST_RATIO_WINDOW[1] for r in rep.ratios)
    return {"passed": rep.passed and ratios_ok, "fit": rep.as_dict(),
            "ratio_window": list(V.CATALYST_RATIO_WINDOW), "sweep": sweep}


def determinism_check(parallelisms=(1, 2, 8), N=8, backend=None) -> dict:
    from .algorithms import (CatalystConfig, CrPsgdConfig, cr_psgd, cr_psgd_catalyst, local_sgd_baseline,
                             psgd_baseline)
    from .objectives import (AdditiveGaussianOracle, LogisticOracle, generate_logistic_instance,
                             proximal_oracle_factory)

    prob = generate_logistic_instance(10, N, 200, 0.001, seed=3)
    lo = LogisticOracle(prob, backend=backend)
    nc = V.nonconvex_test_objective(4)
    fac = proximal_oracle_factory(AdditiveGaussianOracle(nc, 1.0, backend=backend), 2 * nc.smoothness_L)
    x0 = np.zeros(prob.dim)
    runs = {
        "cr-psgd": lambda pool: cr_psgd(lo, CrPsgdConfig(N, 400, x0, 2, 1.1, 0.1), pool, seed=7)[1],
        "psgd": lambda pool: psgd_baseline(lo, N, 200, x0, 2, 0.1, pool, seed=7)[1],
        "local-sgd": lambda pool: local_sgd_baseline(lo, N, 200, x0, 2, 0.1, 5, pool, seed=7)[1],
        "cr-psgd-catalyst": lambda pool: cr_psgd_catalyst(
            fac, CatalystConfig(N, 64, 2 * nc.smoothness_L, np.ones(4), 2, 1.04, 1 / 30), pool, seed=7),
    }
    out = {}
    for name, fn in runs.items():
        texts = {}
        for par in parallelisms:
            with WorkerPool(N, par) as pool, warnings.catch_warnings():
                warnings.simplefilter("ignore", RateConditionWarning)
                texts[par] = csv_text(fn(pool).rows)
        ref = texts[parallelisms[0]]
        out[name] = {"identical": all(t == ref for t in texts.values()), "rows": ref.count("\n") - 1}
    return {"passed": all(v["identical"] for v in out.values()), "parallelisms": list(parallelisms), "runs": out}


def cmd_verify(args) -> int:
    if args.suite == "lemma1":
        res = suite_lemma1(args.quick)
    elif args.suite == "facts":
        res = suite_facts(args.quick, args.problem_path)
    elif args.suite == "pl-rate":
        res = suite_pl_rate(args.quick)
    elif args.suite == "catalyst-rate":
        res = suite_catalyst_rate(args.quick)
    else:
        res = determinism_check()
    res["suite"] = args.suite
    text = dump_json(res)
    if args.report:
        atomic_write_text(args.report, text)
    print(f"verify {args.suite}: {'PASS' if res['passed'] else 'FAIL'}")
    if args.verbose:
        print(text, end="")
    return EXIT_OK if res["passed"] else EXIT_VERIFY


def cmd_sweep_local_h(args) -> int:
    cfg = _load(args.config, args)
    base = Path(args.config).parent
    problem = build_problem(cfg.problem, base)
    oracle = build_oracle(problem, cfg.problem, backend=cfg.backend)
    p = cfg.params
    with WorkerPool(p.N, cfg.parallelism) as pool:
        res = sweep_local_h(oracle, p.N, p.T, initial_point(p, problem.dim), p.B, p.gamma, args.H_list,
                            seeds=cfg.seeds, pool=pool, tolerance=args.tolerance)
    print(f"{'H':>5} {'final_loss':>22} {'loss_ratio':>12} {'comm_rounds':>12}")
    for r in res["rows"]:
        print(f"{r['H']:>5} {r['final_loss']:>22.15g} {r['loss_ratio']:>12.6f} {r['comm_rounds']:>12}")
    print(f"selected H = {res['selected_H']} (tolerance {res['tolerance']}x the H=1 loss)")
    if args.out:
        atomic_write_text(args.out, dump_json(res))
    return EXIT_OK


def gnuplot_script(csv_path: str, x: str, y: str, logscale: bool = True, seed: int = 0) -> str:
    """gnuplot commands plotting ``y`` against ``x``, one line per algorithm, for one seed."""
    for col in (x, y):
        if col not in CSV_COLUMNS:
            raise ConfigurationError(f"unknown trace column {col!r}; columns are {CSV_COLUMNS}")
    xi, yi = CSV_COLUMNS.index(x) + 1, CSV_COLUMNS.index(y) + 1
    ai, si = CSV_COLUMNS.index("algo") + 1, CSV_COLUMNS.index("seed") + 1
    lines = [
        "set datafile separator ','",
        f"set xlabel '{x}'",
        f"set ylabel '{y}'",
        "set key top right",
    ]
    if logscale:
        lines.append("set logscale y")
    lines += [
        f"algos = system(\"tail -n +2 '{csv_path}' | cut -d, -f{ai} | sort -u | tr '\\n' ' '\")",
        f"plot for [a in algos] '{csv_path}' every ::1 "
        f"using (strcol({ai}) eq a && column({si}) == {seed} ? column({xi}) : NaN):{yi} with lines title a",
    ]
    return "\n".join(lines) + "\n"


def cmd_plot_script(args) -> int:
    text = gnuplot_script(args.csv, args.x, args.y, not args.linear, args.seed)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crpsgd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem instance file")
    g.add_argument("family", choices=("logistic", "quadratic", "nonconvex"))
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--N", type=int, default=10)
    g.add_argument("--M", type=int, default=1000, help="samples per worker")
    g.add_argument("--reg", type=float, default=0.001)
    g.add_argument("--feature-mean", choices=("ones", "zero"), default="ones")
    g.add_argument("--rank", type=int, default=None)
    g.add_argument("--rows", type=int, default=None)
    g.add_argument("--a", type=float, default=1.0)
    g.add_argument("--omega", type=float, default=2.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one configuration (all seeds)")
    _add_config_flags(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several algorithms on a shared problem")
    c.add_argument("configs", nargs="+")
    c.add_argument("--set", action="append", metavar="KEY=VALUE")
    c.add_argument("--out-dir", default=".")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--quick", action="store_true", help="reduced budgets and seed counts")
    v.add_argument("--report", default=None, help="write the JSON report here")
    v.add_argument("--problem-path", default=None, help="extra objective for the facts suite")
    v.add_argument("-v", "--verbose", action="store_true")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep-local-h", help="final loss of local SGD over averaging intervals")
    _add_config_flags(s)
    s.add_argument("--H-list", dest="H_list", type=int, nargs="+", required=True)
    s.add_argument("--tolerance", type=float, default=1.01)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep_local_h)

    p = sub.add_parser("plot-script", help="emit a gnuplot script for a trace CSV")
    p.add_argument("csv")
    p.add_argument("--x", default="cum_sfo_per_worker")
    p.add_argument("--y", default="loss")
    p.add_argument("--linear", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot_script)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
