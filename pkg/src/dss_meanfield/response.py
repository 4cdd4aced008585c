"""Download-time distributions from the equilibrium workload.

A type-``i`` request that finds ``j >= k`` servers up finishes at
``U_(j,k) + X_hat``, the ``k``-th smallest of ``j`` i.i.d. workloads plus one
fragment time.  Per-class curves mix over ``j`` conditioned on the request
being reconstructible; the overall curve mixes classes by their share of
served requests.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.signal import fftconvolve

from .meanfield import SolverError, WorkloadCurve, conv_weights
from .storage_model import FileClass, SystemConfig, availability_vector, loss_probability

TAIL_BUDGET = 50.0  # response horizon extends by delta + TAIL_BUDGET * E[Y]
DEFAULT_TAIL_TOL = 1e-6


class NoServiceError(SolverError):
    pass


class HorizonTooShortError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    step: float
    values: np.ndarray
    label: str = ""

    @property
    def grid(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["w", "fbar_r"])
            for w, v in zip(self.grid, self.values):
                wr.writerow([repr(float(w)), repr(float(v))])


def order_stat_from_fbar(fbar, j: int, k: int):
    """P(k-th smallest of j i.i.d. workloads > u), given ``fbar = P(U > u)``.

    The ``k``-th order statistic exceeds ``u`` iff fewer than ``k`` workloads
    are ``<= u``.
    """
    if not 1 <= k <= j:
        raise ValueError(f"need 1 <= k <= j, got j={j}, k={k}")
    x = np.asarray(fbar, dtype=float)
    F = 1.0 - x
    out = sum(comb(j, m) * F**m * x ** (j - m) for m in range(k))
    return float(out) if np.ndim(fbar) == 0 else out


def order_stat_ccdf(curve: WorkloadCurve, j: int, k: int, u: float | None = None):
    """Order-statistic CCDF on the workload grid, or at grid point ``u``."""
    vals = order_stat_from_fbar(curve.values, j, k)
    if u is None:
        return vals
    idx = int(round(u / curve.step))
    if abs(idx * curve.step - u) > 1e-9 * max(1.0, u):
        raise ValueError(f"u={u} is not on the grid")
    return float(vals[idx]) if idx < vals.size else 0.0


def response_npoints(curve: WorkloadCurve, classes) -> int:
    budget = max(c.service.delta + TAIL_BUDGET * c.service.ph.mean() for c in classes)
    return curve.values.size + int(np.ceil(budget / curve.step))


def _sum_ccdf(fbar_u: np.ndarray, c: FileClass, step: float) -> np.ndarray:
    # CCDF of U + X_hat: Gbar(w) + int_0^w Fbar_U(u) g(w - u) du
    npts = fbar_u.size
    gbar, _ = c.service.on_grid(step, npts)
    cw, bw = conv_weights(c.service, step, npts)
    conv = fftconvolve(fbar_u, cw)[:npts] - fbar_u[0] * bw[1 : npts + 1]
    return np.clip(gbar + conv, 0.0, 1.0)


def response_ccdf_jk(curve: WorkloadCurve, c: FileClass, j: int, npoints: int | None = None) -> ResponseCurve:
    """CCDF of the download time when exactly ``j`` of the class's servers are up."""
    if j < c.k:
        raise ValueError(f"class {c.label}: j={j} < k={c.k}, file not reconstructible")
    if j > c.d:
        raise ValueError(f"class {c.label}: j={j} > d={c.d}")
    if npoints is None:
        npoints = response_npoints(curve, [c])
    fu = order_stat_from_fbar(curve.padded(npoints), j, c.k)
    return ResponseCurve(curve.step, _sum_ccdf(fu, c, curve.step), c.label)


def conditional_weights(c: FileClass, q: float) -> list[tuple[int, float]]:
    """``P(j servers up | at least k up)`` for ``j = k..d``."""
    B = availability_vector(c.d, q)
    norm = B[c.k :].sum()
    if not norm > 0:
        raise NoServiceError(f"class {c.label}: no request can be served at q={q}")
    return [(j, float(B[j] / norm)) for j in range(c.k, c.d + 1)]


def class_response_ccdf(curve: WorkloadCurve, c: FileClass, q: float, npoints: int | None = None) -> ResponseCurve:
    weights = conditional_weights(c, q)
    if npoints is None:
        npoints = response_npoints(curve, [c])
    fbar = curve.padded(npoints)
    # mixing order statistics first needs a single convolution
    fu = sum(p * order_stat_from_fbar(fbar, j, c.k) for j, p in weights)
    return ResponseCurve(curve.step, _sum_ccdf(fu, c, curve.step), c.label)


def class_shares(cfg: SystemConfig) -> dict[str, float]:
    """Fraction of served requests belonging to each class."""
    raw = {c.label: c.p * (1.0 - loss_probability(c, cfg.q)) for c in cfg.classes}
    tot = sum(raw.values())
    if not tot > 0:
        raise NoServiceError(f"no request can be served at q={cfg.q}")
    return {k: v / tot for k, v in raw.items()}


def overall_response_ccdf(curves: dict[str, ResponseCurve], cfg: SystemConfig) -> ResponseCurve:
    betas = class_shares(cfg)
    npts = max(cv.values.size for cv in curves.values())
    step = next(iter(curves.values())).step
    out = np.zeros(npts)
    for label, beta in betas.items():
        if beta == 0.0:
            continue
        v = curves[label].values
        padded = np.zeros(npts)
        padded[: v.size] = v
        out += beta * padded
    return ResponseCurve(step, out, "all")


def mean_response(curve: ResponseCurve, tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    v = curve.values
    if v[-1] > tail_tol:
        raise HorizonTooShortError(f"response CCDF is {v[-1]:.3g} at the horizon")
    return float(curve.step * (v.sum() - 0.5 * (v[0] + v[-1])))


def response_summary(curve: ResponseCurve, c: FileClass, cfg: SystemConfig) -> str:
    return json.dumps({
        "class": c.label,
        "q": cfg.q,
        "lambda": cfg.lam,
        "mean_response": mean_response(curve),
        "loss_probability": loss_probability(c, cfg.q),
    }, indent=2)
