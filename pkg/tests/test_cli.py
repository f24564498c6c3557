import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from crpsgd import cli
from crpsgd.config import load_config
from crpsgd.errors import ConfigurationError
from crpsgd.problem_io import generate, load_problem, save_problem
from crpsgd.runner import summarize
from crpsgd.schedule import BatchSchedule, num_rounds
from crpsgd.trace import read_csv

pytestmark = pytest.mark.filterwarnings("ignore::crpsgd.errors.RateConditionWarning")


def write_config(path, **over):
    cfg = {
        "algorithm": "cr-psgd",
        "run_id": "t",
        "seeds": [0, 1],
        "problem": {"family": "logistic", "d": 6, "N": 3, "M_i": 40, "seed": 2},
        "params": {"N": 3, "T": 600, "B1": 2, "rho": 1.1, "gamma": 0.1},
        "output": {"trace": "trace.csv", "summary": "summary.json"},
    }
    for k, v in over.items():
        cur = cfg
        keys = k.split("__")
        for kk in keys[:-1]:
            cur = cur[kk]
        cur[keys[-1]] = v
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_gen_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["gen", "logistic", "--d", "5", "--N", "2", "--M", "30", "--seed", "7",
                         "--out", str(tmp_path / f"{name}.npz")]) == 0
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    prob, meta = load_problem(tmp_path / "a.npz")
    ref, _ = generate("logistic", 7, d=5, N=2, M_i=30, reg_mu=0.001)
    assert np.array_equal(prob.features, ref.features) and np.array_equal(prob.labels, ref.labels)
    assert meta["family"] == "logistic" and meta["seed"] == 7


def test_gen_quadratic_rank_deficient(tmp_path):
    out = tmp_path / "q.npz"
    assert cli.main(["gen", "quadratic", "--d", "10", "--rank", "5", "--seed", "1", "--out", str(out)]) == 0
    q, _ = load_problem(out)
    s = np.linalg.svd(q.A, compute_uv=False)
    assert q.rank == 5 and q.pl_mu == pytest.approx(s[4] ** 2, rel=1e-10)


def test_problem_file_round_trip_nonconvex(tmp_path):
    prob, meta = generate("nonconvex", 0, d=4, a=0.5, omega=3.0)
    save_problem(prob, tmp_path / "n.npz", meta)
    back, m = load_problem(tmp_path / "n.npz")
    assert (back.dim, back.a, back.omega) == (4, 0.5, 3.0)


def test_run_writes_trace_and_summary(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    assert cli.main(["run", str(cfg)]) == 0
    rows = read_csv(tmp_path / "trace.csv")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["comm_rounds"] == num_rounds(BatchSchedule(2, 1.1), 600)
    # the summary is recomputable from the CSV alone
    again = summarize(rows, summary["config"], summary["diagnostics"])
    assert json.loads(cli.dump_json(again)) == summary
    first = (tmp_path / "trace.csv").read_bytes()
    assert cli.main(["run", str(cfg)]) == 0
    assert (tmp_path / "trace.csv").read_bytes() == first


def test_run_flag_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", algorithm="psgd")
    assert cli.main(["run", str(cfg), "--T", "1000", "--B", "2", "--seeds", "3",
                     "--set", "output.summary=s2.json"]) == 0
    summary = json.loads((tmp_path / "s2.json").read_text())
    assert summary["comm_rounds"] == 500
    assert summary["config"]["seeds"] == [3]


def test_run_isotropic_psgd_round_count(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", algorithm="psgd", problem={"family": "isotropic", "d": 2},
                       params={"N": 2, "T": 10_000, "B": 2, "gamma": 0.1}, seeds=[0])
    assert cli.main(["run", str(cfg)]) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["comm_rounds"] == 5000


@pytest.mark.parametrize("over", [
    {"params__bogus": 1},
    {"algorithm": "adam"},
    {"seeds": [1, 1]},
    {"params__N": 4},
    {"problem": {"family": "logistic", "d": 2}},
    {"problem": {"path": "missing.npz"}},
])
def test_config_errors_exit_2(tmp_path, over, capsys):
    cfg = write_config(tmp_path / "c.yaml", **over)
    assert cli.main(["run", str(cfg)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.yaml")]) == 2


def test_load_config_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    c = load_config(cfg, {"params.gamma": 0.05, "problem.d": 8})
    assert c.params.gamma == 0.05 and c.problem.d == 8
    with pytest.raises(ConfigurationError):
        load_config(cfg, {"params.gamma.x": 1})


def test_compare_local_h1_matches_psgd(tmp_path):
    a = write_config(tmp_path / "a.yaml", algorithm="psgd", run_id="p", params={"N": 3, "T": 200, "B": 2, "gamma": 0.1})
    b = write_config(tmp_path / "b.yaml", algorithm="local-sgd", run_id="p",
                     params={"N": 3, "T": 200, "B": 2, "H": 1, "gamma": 0.1})
    c = write_config(tmp_path / "c.yaml", params={"N": 3, "T": 200, "B1": 2, "rho": 1.1, "gamma": 0.1})
    out = tmp_path / "cmp"
    assert cli.main(["compare", str(a), str(b), str(c), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "compare_trace.csv")
    key = lambda r: (r.seed, r.round_t, r.cum_comm_rounds, r.loss, r.grad_norm_sq)
    assert [key(r) for r in rows if r.algo == "psgd"] == [key(r) for r in rows if r.algo == "local-sgd"]
    report = json.loads((out / "compare_report.json").read_text())
    by = {x["algorithm"]: x for x in report["algorithms"]}
    assert by["local-sgd"]["final_loss_rel_delta"] == 0.0
    assert by["cr-psgd"]["comm_rounds"] == num_rounds(BatchSchedule(2, 1.1), 200)


def test_compare_requires_shared_problem(tmp_path):
    a = write_config(tmp_path / "a.yaml", algorithm="psgd")
    b = write_config(tmp_path / "b.yaml", problem={"family": "logistic", "d": 6, "N": 3, "M_i": 40, "seed": 3})
    assert cli.main(["compare", str(a), str(b), "--out-dir", str(tmp_path)]) == 2


def test_sweep_local_h_noiseless(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", algorithm="local-sgd",
                       problem={"family": "isotropic", "d": 3, "sigma2": 0.0},
                       params={"N": 2, "T": 240, "B": 2, "gamma": 0.05, "x1": 1.0}, seeds=[0])
    assert cli.main(["sweep-local-h", str(cfg), "--H-list", "2", "4", "8", "--out", str(tmp_path / "h.json")]) == 0
    assert json.loads((tmp_path / "h.json").read_text())["selected_H"] == 8
    assert "selected H = 8" in capsys.readouterr().out


def test_verify_facts_and_determinism(tmp_path):
    assert cli.main(["verify", "facts", "--quick", "--report", str(tmp_path / "f.json")]) == 0
    rep = json.loads((tmp_path / "f.json").read_text())
    assert rep["passed"] and rep["objectives"]["isotropic_L1"]["equality"]["gradnorm_le_gap"]
    assert cli.main(["verify", "determinism"]) == 0


def test_verify_failure_exit_3(monkeypatch):
    monkeypatch.setattr(cli, "suite_lemma1", lambda quick: {"passed": False})
    assert cli.main(["verify", "lemma1"]) == 3


def test_plot_script(tmp_path, capsys):
    assert cli.main(["plot-script", "t.csv", "--x", "cum_comm_rounds"]) == 0
    out = capsys.readouterr().out
    assert "plot for" in out and "set logscale y" in out
    assert cli.main(["plot-script", "t.csv", "--y", "nope"]) == 2


def test_json_has_no_nonfinite_literals():
    text = cli.dump_json({"a": float("inf"), "b": [float("nan")], "c": np.float64(1.5)})
    assert json.loads(text) == {"a": "inf", "b": ["nan"], "c": 1.5}


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "crpsgd", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout
