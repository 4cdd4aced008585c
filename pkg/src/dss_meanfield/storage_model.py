"""System configuration and the closed-form scalars: availability, loss, load."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .distributions import ShiftedDist

_SUM_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid system configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, eq=False)
class FileClass:
    label: str
    p: float
    d: int
    k: int
    service: ShiftedDist

    def __post_init__(self):
        if not (isinstance(self.d, (int, np.integer)) and isinstance(self.k, (int, np.integer))):
            raise ConfigError(f"{self.label}.d/k", "must be integers")
        if not 1 <= self.k <= self.d:
            raise ConfigError(f"{self.label}.k", f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"{self.label}.p", f"must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "p", float(self.p))

    @property
    def fragment_mean(self) -> float:
        return self.service.mean()

    @property
    def file_mean(self) -> float:
        """Mean file service time: ``k`` identical fragments."""
        return self.k * self.service.mean()


@dataclass(frozen=True, eq=False)
class SystemConfig:
    lam: float
    q: float
    classes: tuple[FileClass, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.lam > 0:
            raise ConfigError("lambda", f"must be positive, got {self.lam}")
        if not 0.0 <= self.q <= 1.0:
            raise ConfigError("q", f"must lie in [0, 1], got {self.q}")
        if not self.classes:
            raise ConfigError("classes", "at least one file class is required")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ConfigError("classes", f"duplicate labels {labels}")
        total = sum(c.p for c in self.classes)
        if abs(total - 1.0) > _SUM_TOL:
            raise ConfigError("classes.p", f"request probabilities sum to {total}, not 1")

    def replace(self, **changes) -> "SystemConfig":
        kw = {"lam": self.lam, "q": self.q, "classes": self.classes}
        kw.update(changes)
        return SystemConfig(**kw)

    def by_label(self, label: str) -> FileClass:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)


def availability_pmf(d: int, j: int, q: float) -> float:
    """P(exactly ``j`` of ``d`` sampled servers are up), Binomial(d, q)."""
    if not 0 <= j <= d:
        raise ValueError(f"need 0 <= j <= d, got j={j}, d={d}")
    return comb(d, j) * q**j * (1.0 - q) ** (d - j)


def availability_vector(d: int, q: float) -> np.ndarray:
    return np.array([availability_pmf(d, j, q) for j in range(d + 1)])


def loss_probability(c: FileClass, q: float) -> float:
    """Probability that fewer than ``k`` of the ``d`` servers are up."""
    return float(sum(availability_pmf(c.d, j, q) for j in range(c.k)))


def work_factor(c: FileClass, q: float) -> float:
    """Expected number of fragment downloads started per request, ``E[min(J, k)]``."""
    return float(sum(min(j, c.k) * availability_pmf(c.d, j, q) for j in range(1, c.d + 1)))


def system_load(cfg: SystemConfig) -> float:
    """Incoming work per server per unit time, i.e. the busy fraction.

    Every request that finds ``j`` servers up downloads ``min(j, k)``
    fragments, each of mean ``E[X_hat]``.
    """
    return float(sum(cfg.lam * c.p * c.fragment_mean * work_factor(c, cfg.q) for c in cfg.classes))


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    rho: float

    def __bool__(self):
        return self.stable


def stability_check(cfg: SystemConfig) -> StabilityResult:
    rho = system_load(cfg)
    return StabilityResult(rho < 1.0, rho)
