"""Equilibrium workload distribution of the cavity queue.

Two solvers for the same fixed point ``Fbar``:

* :func:`solve_ide` integrates the integro-differential form, convolving the
  arrival kernel with the service density at every node (O(K^2)).
* :func:`solve_dde` replaces the convolution by a per-class memory vector
  driven by the delayed kernel, valid for shifted phase-type service (O(K)).

Because the right-hand side is linear in the availability count ``j``, the
per-``j`` kernels of a class are summed with their weights ``B_j(d)`` into one
polynomial in ``Fbar`` before integration, and one memory vector per class
carries the same information as one per ``(class, j)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import linalg

from ._backend import kernels
from .distributions import delay_steps
from .storage_model import SystemConfig, availability_vector, system_load

DEFAULT_EPS_TAIL = 1e-8
DEFAULT_MAX_HORIZON = 200.0
MIN_STEP = 1e-4
_RANGE_TOL = 1e-9


class SolverError(RuntimeError):
    pass


class UnstableSystemError(SolverError):
    def __init__(self, rho: float):
        super().__init__(f"system is unstable: rho = {rho:.6g} >= 1")
        self.rho = rho


class StepSizeError(SolverError):
    pass


class UnconvergedTailError(SolverError):
    pass


def h_kernel(j: int, k: int, fbar):
    """Arrival kernel of LL(j, k) at workload CCDF value ``fbar``.

    ``sum_{i=1..j} min(i, k) C(j, i) fbar^(j-i) (1-fbar)^i - 1``
    """
    if not 1 <= k <= j:
        raise ValueError(f"need 1 <= k <= j, got j={j}, k={k}")
    x = np.asarray(fbar, dtype=float)
    out = sum(min(i, k) * comb(j, i) * x ** (j - i) * (1.0 - x) ** i for i in range(1, j + 1)) - 1.0
    return float(out) if np.ndim(fbar) == 0 else out


def _h_poly(j: int, k: int) -> np.ndarray:
    coef = np.array([-1.0])
    one_minus = np.array([1.0, -1.0])
    for i in range(1, j + 1):
        term = P.polymul(P.polypow([0.0, 1.0], j - i), P.polypow(one_minus, i))
        coef = P.polyadd(coef, min(i, k) * comb(j, i) * term)
    return coef


def hsum_coeffs(d: int, k: int, q: float) -> np.ndarray:
    """Ascending coefficients of ``sum_j B_j(d) H_{j, min(j, k)}(x)``."""
    B = availability_vector(d, q)
    coef = np.zeros(d + 1)
    for j in range(1, d + 1):
        hj = _h_poly(j, min(j, k))
        coef[: hj.size] += B[j] * hj
    return coef


def default_step(cfg: SystemConfig) -> float:
    """Grid step: ``min(delta/20, E[X_hat]/200)`` over classes, floored at 1e-4.

    Zero shifts impose no constraint.  The step is then shrunk so it divides
    the smallest positive shift.
    """
    cands = [c.fragment_mean / 200.0 for c in cfg.classes]
    cands += [c.service.delta / 20.0 for c in cfg.classes if c.service.delta > 0]
    h = max(min(cands), MIN_STEP)
    deltas = [c.service.delta for c in cfg.classes if c.service.delta > 0]
    if deltas:
        ref = min(deltas)
        h = ref / math.ceil(ref / h - 1e-9)
        for dl in deltas:
            delay_steps(dl, h)
    return h


@dataclass(frozen=True, eq=False)
class WorkloadCurve:
    """``Fbar`` on the grid ``0, step, ..., w_max``."""

    step: float
    values: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)

    @property
    def w_max(self) -> float:
        return self.step * (self.values.size - 1)

    @property
    def rho(self) -> float:
        return float(self.values[0])

    def cdf(self) -> np.ndarray:
        return 1.0 - self.values

    def padded(self, npoints: int) -> np.ndarray:
        """Values extended with zeros beyond the horizon."""
        out = np.zeros(npoints)
        m = min(npoints, self.values.size)
        out[:m] = self.values[:m]
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["w", "fbar"])
            for w, v in zip(self.grid, self.values):
                wr.writerow([repr(float(w)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "WorkloadCurve":
        rows = list(csv.reader(Path(path).read_text().splitlines()))
        if rows[0] != ["w", "fbar"]:
            raise ValueError(f"unexpected header {rows[0]}")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        step = data[1, 0] - data[0, 0] if len(data) > 1 else 1.0
        return cls(float(step), data[:, 1])


def conv_weights(service, step: float, npoints: int):
    """Combined node weights ``cw`` (length ``npoints``) and the right-cell
    weights ``bw`` (length ``npoints + 1``) of the product-trapezoid rule."""
    a, b = service.cell_weights(step, npoints + 1)
    cw = a[:npoints].copy()
    cw += b[1 : npoints + 1]
    return cw, b


def mean_workload(curve: WorkloadCurve) -> float:
    """Trapezoidal integral of ``Fbar`` over the grid."""
    v = curve.values
    if v.size < 2:
        return 0.0
    return float(curve.step * (v.sum() - 0.5 * (v[0] + v[-1])))


def _prepare(cfg: SystemConfig, step, eps_tail):
    chk = system_load(cfg)
    if chk >= 1.0:
        raise UnstableSystemError(chk)
    if step is None:
        step = default_step(cfg)
    if not step > 0:
        raise StepSizeError(f"step must be positive, got {step}")
    if not eps_tail > 0:
        raise ValueError("eps_tail must be positive")
    C = len(cfg.classes)
    rate = np.array([cfg.lam * c.p for c in cfg.classes])
    mass = np.array([1.0 - availability_vector(c.d, cfg.q)[0] for c in cfg.classes])
    dmax = max(c.d for c in cfg.classes)
    coef = np.zeros((C, dmax + 1))
    for i, c in enumerate(cfg.classes):
        coef[i, : c.d + 1] = hsum_coeffs(c.d, c.k, cfg.q)
    try:
        shift = np.array([delay_steps(c.service.delta, step) for c in cfg.classes], dtype=np.int64)
    except ValueError as exc:
        raise StepSizeError(str(exc)) from exc
    return chk, float(step), rate, mass, coef, shift


def _finish(values, converged, step, eps_tail, max_horizon) -> WorkloadCurve:
    if values[-1] < -1e-6 or values.max() > 1.0 + _RANGE_TOL or not np.all(np.isfinite(values)):
        raise StepSizeError(f"workload CCDF left [0, 1] (step {step}); reduce the step")
    if not converged:
        raise UnconvergedTailError(
            f"Fbar still {values[-1]:.3g} >= eps_tail={eps_tail:g} at horizon {max_horizon}")
    values = np.clip(values, 0.0, 1.0)
    if np.any(np.diff(values) > 1e-9):
        raise StepSizeError("workload CCDF is not monotone; reduce the step")
    # truncation point: first node below eps_tail
    return WorkloadCurve(step, values)


def _trivial(cfg, step) -> WorkloadCurve:
    return WorkloadCurve(step if step is not None else default_step(cfg), np.zeros(1))


def solve_dde(cfg: SystemConfig, step: float | None = None, eps_tail: float = DEFAULT_EPS_TAIL,
              max_horizon: float = DEFAULT_MAX_HORIZON) -> WorkloadCurve:
    """Fixed-step RK4 on the delay form, co-integrating ``Fbar`` and memory vectors."""
    rho, step, rate, mass, coef, shift = _prepare(cfg, step, eps_tail)
    if rho == 0.0:
        return _trivial(cfg, step)
    nph = max(c.service.ph.order for c in cfg.classes)
    C = len(cfg.classes)
    alpha = np.zeros((C, nph))
    A = np.zeros((C, nph, nph))
    mu = np.zeros((C, nph))
    prop = np.zeros((C, nph, nph))
    for i, c in enumerate(cfg.classes):
        ph = c.service.ph
        n = ph.order
        alpha[i, :n] = ph.alpha
        A[i, :n, :n] = ph.A
        mu[i, :n] = ph.mu
        prop[i, :n, :n] = linalg.expm(ph.A * (0.5 * step))
    nmax = int(math.ceil(max_horizon / step))
    values, converged = kernels.dde_integrate(rho, step, nmax, eps_tail, rate, mass, coef,
                                              alpha, A, mu, prop, shift)
    return _finish(np.asarray(values), converged, step, eps_tail, max_horizon)


def solve_ide(cfg: SystemConfig, step: float | None = None, eps_tail: float = DEFAULT_EPS_TAIL,
              max_horizon: float = DEFAULT_MAX_HORIZON) -> WorkloadCurve:
    """Trapezoidal integration of the integro-differential form."""
    rho, step, rate, mass, coef, shift = _prepare(cfg, step, eps_tail)
    if rho == 0.0:
        return _trivial(cfg, step)
    nmax = int(math.ceil(max_horizon / step))
    C = len(cfg.classes)
    gbar = np.empty((C, nmax + 1))
    cw = np.empty((C, nmax + 1))
    bw = np.zeros((C, nmax + 2))
    for i, c in enumerate(cfg.classes):
        gbar[i] = c.service.on_grid(step, nmax + 1)[0]
        cw[i], bw[i] = conv_weights(c.service, step, nmax + 1)
    values, converged = kernels.ide_integrate(rho, step, nmax, eps_tail, rate, mass, coef,
                                              gbar, cw, bw)
    return _finish(np.asarray(values), converged, step, eps_tail, max_horizon)
