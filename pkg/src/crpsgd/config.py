"""Run-configuration schema (YAML) and construction of problems/oracles from it.

Example::

    algorithm: cr-psgd
    run_id: logistic-demo
    seeds: [0, 1, 2]
    problem:
      family: logistic
      d: 50
      N: 10
      M_i: 1000
      reg_mu: 0.001
      seed: 1
    params:
      N: 10
      T: 10000
      B1: 2
      rho: 1.1
      gamma: 0.1
    output:
      trace: out/trace.csv
      summary: out/summary.json

Unknown keys are rejected. ``problem.path`` loads an instance file written
by ``crpsgd gen`` instead of generating one.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .objectives import (
    AdditiveGaussianOracle,
    CosineNonconvex,
    LogisticOracle,
    LogisticProblem,
    QuadraticPL,
    isotropic_quadratic,
)
from .problem_io import generate, load_problem

ALGORITHMS = ("cr-psgd", "cr-psgd-catalyst", "psgd", "local-sgd")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemSpec(_Strict):
    family: Optional[Literal["logistic", "quadratic", "isotropic", "nonconvex"]] = None
    path: Optional[str] = None
    seed: int = 0
    d: Optional[int] = Field(default=None, ge=1)
    N: Optional[int] = Field(default=None, ge=1)
    M_i: Optional[int] = Field(default=None, ge=1)
    reg_mu: float = Field(default=0.001, ge=0)
    feature_mean: Literal["ones", "zero"] = "ones"
    rank: Optional[int] = Field(default=None, ge=1)
    rows: Optional[int] = Field(default=None, ge=1)
    L: float = Field(default=1.0, gt=0)
    a: float = 1.0
    omega: float = 2.0
    sigma2: float = Field(default=1.0, ge=0)

    @model_validator(mode="after")
    def _family_fields(self):
        if self.path is None:
            need = {"logistic": ("d", "N", "M_i"), "quadratic": ("d", "rank"),
                    "isotropic": ("d",), "nonconvex": ("d",), None: ()}[self.family]
            if self.family is None:
                raise ValueError("problem needs either 'family' or 'path'")
            missing = [k for k in need if getattr(self, k) is None]
            if missing:
                raise ValueError(f"{self.family} problem is missing {missing}")
        return self


class AlgoParams(_Strict):
    N: int = Field(ge=1)
    T: int = Field(ge=0)
    gamma: float = Field(gt=0)
    B1: int = Field(default=2, ge=2)
    rho: float = Field(default=1.1, gt=1)
    B: int = Field(default=2, ge=1)
    H: int = Field(default=1, ge=1)
    theta: Optional[float] = None
    cap: Optional[int] = Field(default=None, ge=2)
    x1: Union[float, list[float]] = 0.0


class OutputSpec(_Strict):
    trace: str = "trace.csv"
    summary: str = "summary.json"


class RunConfig(_Strict):
    algorithm: Literal["cr-psgd", "cr-psgd-catalyst", "psgd", "local-sgd"]
    run_id: str = "run"
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    parallelism: int = Field(default=1, ge=1)
    backend: Optional[Literal["cython", "python"]] = None
    problem: ProblemSpec
    params: AlgoParams
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _unique_seeds(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct (reusing a seed reuses its random streams): {self.seeds}")
        return self


def _set_dotted(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigurationError(f"cannot set {dotted}: {k} is not a mapping")
    cur[keys[-1]] = value


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config, apply dotted-key overrides, validate."""
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
    for k, v in (overrides or {}).items():
        _set_dotted(raw, k, v)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc


def build_problem(spec: ProblemSpec, base_dir: str | Path | None = None):
    """Return the objective described by ``spec``."""
    if spec.path is not None:
        p = Path(spec.path)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        if not p.exists():
            raise ConfigurationError(f"problem file not found: {p}")
        prob, _ = load_problem(p)
        return prob
    if spec.family == "isotropic":
        return isotropic_quadratic(spec.d, spec.L)
    if spec.family == "logistic":
        prob, _ = generate("logistic", spec.seed, d=spec.d, N=spec.N, M_i=spec.M_i, reg_mu=spec.reg_mu,
                           feature_mean=spec.feature_mean)
        return prob
    if spec.family == "quadratic":
        prob, _ = generate("quadratic", spec.seed, d=spec.d, rank=spec.rank, rows=spec.rows)
        return prob
    return CosineNonconvex(spec.d, spec.a, spec.omega)


def build_oracle(problem, spec: ProblemSpec, backend=None):
    if isinstance(problem, LogisticProblem):
        return LogisticOracle(problem, backend=backend)
    if isinstance(problem, (QuadraticPL, CosineNonconvex)):
        return AdditiveGaussianOracle(problem, spec.sigma2, backend=backend)
    raise ConfigurationError(f"no oracle for {type(problem).__name__}")


def initial_point(params: AlgoParams, dim: int) -> np.ndarray:
    if isinstance(params.x1, list):
        if len(params.x1) != dim:
            raise ConfigurationError(f"x1 has {len(params.x1)} entries, problem dimension is {dim}")
        return np.array(params.x1, dtype=np.float64)
    return np.full(dim, float(params.x1))
