"""Problem-instance files.

An instance file is a zip archive of ``.npy`` arrays (readable with
``numpy.load``) plus a ``meta`` array holding UTF-8 JSON with the family,
generator parameters and seed. Archive entries carry a fixed timestamp, so
regenerating an instance from the same seed gives a byte-identical file.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
import zipfile

import numpy as np

from .errors import ConfigurationError
from .objectives import (
    CosineNonconvex,
    LogisticProblem,
    QuadraticPL,
    generate_logistic_instance,
    generate_quadratic_instance,
)

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write_npz(path, arrays: dict) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".npz")
    os.close(fd)
    try:
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            for name in sorted(arrays):
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
                info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
                info.compress_type = zipfile.ZIP_DEFLATED
                info.external_attr = 0o644 << 16
                zf.writestr(info, buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta_array(meta: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def save_problem(problem, path, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta["format_version"] = FORMAT_VERSION
    if isinstance(problem, LogisticProblem):
        meta.update(family="logistic", seed=problem.seed, params=problem.params,
                    dims={"N": problem.workers, "M_i": problem.per_worker_samples, "d": problem.dim},
                    reg_mu=problem.reg_mu)
        arrays = {"features": problem.features, "labels": problem.labels.astype(np.int8)}
        if problem.x_true is not None:
            arrays["x_true"] = problem.x_true
    elif isinstance(problem, QuadraticPL):
        meta.update(family="quadratic", dims={"rows": problem.A.shape[0], "d": problem.dim})
        arrays = {"A": problem.A, "b": problem.b}
    elif isinstance(problem, CosineNonconvex):
        meta.update(family="nonconvex", dims={"d": problem.dim}, a=problem.a, omega=problem.omega)
        arrays = {}
    else:
        raise ConfigurationError(f"cannot serialize {type(problem).__name__}")
    arrays["meta"] = _meta_array(meta)
    _write_npz(path, arrays)


def load_problem(path):
    """Return (problem, meta)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        family = meta.get("family")
        if family == "logistic":
            x_true = data["x_true"] if "x_true" in data.files else None
            prob = LogisticProblem(data["features"], data["labels"].astype(np.float64), meta["reg_mu"],
                                   x_true=x_true, seed=meta.get("seed"), params=meta.get("params"))
        elif family == "quadratic":
            prob = QuadraticPL(data["A"], data["b"])
        elif family == "nonconvex":
            prob = CosineNonconvex(meta["dims"]["d"], meta["a"], meta["omega"])
        else:
            raise ConfigurationError(f"unknown problem family {family!r} in {path}")
    return prob, meta


def generate(family: str, seed: int, **params):
    """Build an instance of ``family`` ('logistic', 'quadratic', 'nonconvex') and its metadata."""
    if family == "logistic":
        prob = generate_logistic_instance(params["d"], params["N"], params["M_i"], params["reg_mu"], seed,
                                          feature_mean=params.get("feature_mean", "ones"))
        meta = {}
    elif family == "quadratic":
        prob = generate_quadratic_instance(params["d"], params["rank"], seed, rows=params.get("rows"))
        meta = {"seed": seed, "params": {k: params.get(k) for k in ("d", "rank", "rows")}}
    elif family == "nonconvex":
        prob = CosineNonconvex(params["d"], params.get("a", 1.0), params.get("omega", 2.0))
        meta = {"seed": seed, "params": {"d": params["d"]}}
    else:
        raise ConfigurationError(f"unknown problem family {family!r}")
    return prob, meta
