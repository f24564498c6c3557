"""Per-round run records and their CSV form."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import astuple, dataclass, field, fields

import numpy as np

CSV_COLUMNS = (
    "run_id", "algo", "seed", "outer_k", "round_t", "batch_size",
    "cum_sfo_per_worker", "cum_comm_rounds", "loss", "grad_norm_sq",
)


@dataclass
class TraceRow:
    run_id: str
    algo: str
    seed: int
    outer_k: int
    round_t: int
    batch_size: int
    cum_sfo_per_worker: int
    cum_comm_rounds: int
    loss: float
    grad_norm_sq: float


_TYPES = {f.name: f.type for f in fields(TraceRow)}
_PARSERS = {"str": str, "int": int, "float": float}


@dataclass
class RunTrace:
    algo: str
    run_id: str = ""
    seed: int = 0
    rows: list[TraceRow] = field(default_factory=list)
    final_x: np.ndarray | None = None
    initial_loss: float | None = None
    initial_grad_norm_sq: float | None = None
    meta: dict = field(default_factory=dict)

    def record(self, outer_k, round_t, batch_size, counters, loss, grad_norm_sq):
        self.rows.append(TraceRow(
            self.run_id, self.algo, self.seed, outer_k, round_t, batch_size,
            counters.sfo_per_worker, counters.comm_rounds, float(loss), float(grad_norm_sq),
        ))

    @property
    def comm_rounds(self) -> int:
        return self.meta.get("comm_rounds", self.rows[-1].cum_comm_rounds if self.rows else 0)

    @property
    def sfo_per_worker(self) -> int:
        return self.meta.get("sfo_per_worker", self.rows[-1].cum_sfo_per_worker if self.rows else 0)

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss if self.rows else self.initial_loss

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def _fmt(v):
    # repr round-trips floats exactly
    return repr(v) if isinstance(v, float) else str(v)


def rows_to_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])


def csv_text(rows) -> str:
    buf = io.StringIO()
    rows_to_csv(rows, buf)
    return buf.getvalue()


def read_csv(path_or_fh) -> list[TraceRow]:
    if isinstance(path_or_fh, (str, os.PathLike)):
        with open(path_or_fh, newline="", encoding="utf-8") as fh:
            return read_csv(fh)
    reader = csv.reader(path_or_fh)
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    out = []
    for rec in reader:
        out.append(TraceRow(*(_PARSERS[_TYPES[name]](v) for name, v in zip(CSV_COLUMNS, rec))))
    return out


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
