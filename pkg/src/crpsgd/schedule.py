"""Geometric batch-size schedule B_t = floor(rho^(t-1) B1) and round arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache

from .errors import ConfigurationError


@dataclass(frozen=True)
class BatchSchedule:
    B1: int
    rho: float
    cap: int | None = None

    def __post_init__(self):
        if int(self.B1) != self.B1 or self.B1 < 2:
            raise ConfigurationError(f"B1 must be an integer >= 2, got {self.B1}")
        if not self.rho > 1:
            raise ConfigurationError(f"rho must be > 1, got {self.rho}")
        if self.cap is not None and self.cap < self.B1:
            raise ConfigurationError(f"cap={self.cap} is below B1={self.B1}")

    def batch_size(self, t: int) -> int:
        return batch_size(self, t)

    def num_rounds(self, T: int) -> int:
        return num_rounds(self, T)

    def sizes(self, T: int) -> list[int]:
        """Batch sizes of every round executed within per-worker budget T."""
        return [self.batch_size(t) for t in range(1, self.num_rounds(T) + 1)]


@dataclass(frozen=True)
class ConstantSchedule:
    """Fixed batch size, for the PSGD and local-SGD baselines."""

    B: int

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 1:
            raise ConfigurationError(f"batch size must be an integer >= 1, got {self.B}")

    def batch_size(self, t: int) -> int:
        if t < 1:
            raise ConfigurationError(f"round index must be >= 1, got {t}")
        return self.B

    def num_rounds(self, T: int) -> int:
        return max(T, 0) // self.B


def _exact(rho: float) -> Fraction:
    # the shortest repr is the decimal the caller wrote (1.1, not 1.100000000000000088...)
    return Fraction(Decimal(repr(float(rho))))


@lru_cache(maxsize=4096)
def _uncapped(B1: int, rho: float, t: int) -> int:
    return math.floor(_exact(rho) ** (t - 1) * B1)


def batch_size(s, t: int) -> int:
    """min(floor(rho^(t-1) B1), cap), evaluated in exact rational arithmetic."""
    if t < 1:
        raise ConfigurationError(f"round index must be >= 1, got {t}")
    if isinstance(s, ConstantSchedule):
        return s.B
    b = _uncapped(s.B1, s.rho, t)
    return b if s.cap is None else min(b, s.cap)


def num_rounds(s, T: int) -> int:
    """Largest t with B_1 + ... + B_t <= T (0 when T < B_1)."""
    if isinstance(s, ConstantSchedule):
        return s.num_rounds(T)
    total, t = 0, 0
    while True:
        b = s.batch_size(t + 1)
        if total + b > T:
            return t
        total += b
        t += 1


def rounds_lower_bound(s: BatchSchedule, T: int) -> float:
    """log_rho(T (rho - 1) / B1 + 1); the executed count satisfies t* + 1 >= this."""
    return math.log(T * (s.rho - 1) / s.B1 + 1) / math.log(s.rho)


@dataclass(frozen=True)
class RateConstants:
    nu: float
    delta: float
    c1: float
    c2: float
    valid: bool

    def as_dict(self) -> dict:
        return {"nu": self.nu, "delta": self.delta, "c1": self.c1, "c2": self.c2, "valid": self.valid}


def rate_constants(gamma: float, mu: float, L: float, rho: float, B1: int, sigma2: float) -> RateConstants:
    """nu, delta, c1, c2 of the P-L rate bound; ``valid`` iff rho < 1/(1 - nu)."""
    if not 0 < gamma < 1 / L:
        raise ConfigurationError(f"need 0 < gamma < 1/L = {1 / L}, got gamma={gamma}")
    if not rho > 1:
        raise ConfigurationError(f"rho must be > 1, got {rho}")
    nu = 0.5 * gamma * mu * (1 - L * gamma)
    delta = math.log(1 / (1 - nu)) / math.log(rho) - 1
    c1 = (B1 / (rho - 1)) ** (1 + delta) / (1 - nu)
    contraction = 1 - (1 - nu) * rho
    valid = contraction > 0
    c2 = rho**2 * gamma * (2 - L * gamma) * sigma2 / (contraction * (rho - 1)) if valid else math.inf
    return RateConstants(nu, delta, c1, c2, valid)
