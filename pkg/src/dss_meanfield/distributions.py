r"""Phase-type and shifted phase-type service distributions.

A phase-type variable ``Y ~ PH(alpha, A)`` is the absorption time of a CTMC
started in ``alpha`` with subgenerator ``A``::

    f(w)    = alpha expm(A w) mu,      mu = -A 1
    Fbar(w) = alpha expm(A w) 1

A fragment service time is ``delta + Y`` for a constant startup ``delta >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

_ATOL = 1e-12


class DistributionError(ValueError):
    """Invalid distribution parameters."""


@dataclass(frozen=True, eq=False)
class PhaseTypeDist:
    alpha: np.ndarray
    A: np.ndarray
    mu: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = alpha.size
        if A.shape != (n, n):
            raise DistributionError(f"A must be {n}x{n}, got {A.shape}")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(A))):
            raise DistributionError("alpha and A must be finite")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > _ATOL:
            raise DistributionError("alpha must be a probability vector")
        diag = np.diag(A)
        off = A - np.diag(diag)
        if np.any(diag >= 0):
            raise DistributionError("A must have a strictly negative diagonal")
        if np.any(off < 0):
            raise DistributionError("A must have nonnegative off-diagonal entries")
        mu = -A.sum(axis=1)
        if np.any(mu < -_ATOL * np.abs(diag)):
            raise DistributionError("row sums of A must be <= 0")
        mu = np.clip(mu, 0.0, None)
        if not np.any(mu > 0):
            raise DistributionError("at least one phase must have a positive exit rate")
        try:
            m1 = np.linalg.solve(-A.T, alpha)
        except np.linalg.LinAlgError as exc:
            raise DistributionError("-A is singular (defective distribution)") from exc
        if not np.all(np.isfinite(m1)):
            raise DistributionError("-A is ill-conditioned")
        alpha.setflags(write=False)
        A.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def exponential(cls, rate: float) -> "PhaseTypeDist":
        if not rate > 0:
            raise DistributionError(f"rate must be positive, got {rate}")
        return cls(np.array([1.0]), np.array([[-float(rate)]]))

    @property
    def order(self) -> int:
        return self.alpha.size

    def _row(self, w):
        # alpha expm(A w) for each w
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if np.any(w < 0):
            raise ValueError("w must be nonnegative")
        return np.array([self.alpha @ linalg.expm(self.A * x) for x in w])

    def pdf(self, w):
        out = self._row(w) @ self.mu
        return float(out[0]) if np.ndim(w) == 0 else out

    def ccdf(self, w):
        out = np.clip(self._row(w).sum(axis=1), 0.0, 1.0)
        return float(out[0]) if np.ndim(w) == 0 else out

    def moment(self, order: int = 1) -> float:
        """Raw moment E[Y^order] = order! alpha (-A)^-order 1."""
        v = self.alpha.copy()
        for i in range(1, order + 1):
            v = i * np.linalg.solve(-self.A.T, v)
        return float(v.sum())

    def mean(self) -> float:
        return self.moment(1)

    def scv(self) -> float:
        m1 = self.moment(1)
        return self.moment(2) / m1**2 - 1.0

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Absorption times of the phase chain, simulated jump by jump."""
        m = 1 if size is None else int(size)
        n = self.order
        rates = -np.diag(self.A)
        # jump probabilities: columns 0..n-1 are phases, column n is absorption
        jump = np.zeros((n, n + 1))
        jump[:, :n] = self.A / rates[:, None]
        jump[np.arange(n), np.arange(n)] = 0.0
        jump[:, n] = self.mu / rates
        cum = np.cumsum(jump, axis=1)
        cum[:, -1] = 1.0
        start = np.cumsum(self.alpha)
        start[-1] = 1.0

        out = np.zeros(m)
        phase = np.searchsorted(start, rng.random(m), side="right")
        alive = np.arange(m)
        while alive.size:
            out[alive] += rng.exponential(1.0 / rates[phase])
            u = rng.random(alive.size)
            nxt = (u[:, None] >= cum[phase]).sum(axis=1)
            keep = nxt < n
            alive = alive[keep]
            phase = nxt[keep]
        return float(out[0]) if size is None else out


@dataclass(frozen=True, eq=False)
class ShiftedDist:
    """``delta + Y`` with ``Y`` phase-type."""

    delta: float
    ph: PhaseTypeDist

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise DistributionError(f"delta must be a nonnegative constant, got {self.delta}")
        object.__setattr__(self, "delta", float(self.delta))

    def ccdf(self, w):
        w_arr = np.atleast_1d(np.asarray(w, dtype=float))
        if np.any(w_arr < 0):
            raise ValueError("w must be nonnegative")
        out = np.ones_like(w_arr)
        tail = w_arr >= self.delta
        if np.any(tail):
            out[tail] = self.ph.ccdf(w_arr[tail] - self.delta)
        return float(out[0]) if np.ndim(w) == 0 else out

    def cdf(self, w):
        return 1.0 - self.ccdf(w)

    def pdf(self, w):
        """Density; zero before the shift, right-continuous at ``delta``."""
        w_arr = np.atleast_1d(np.asarray(w, dtype=float))
        if np.any(w_arr < 0):
            raise ValueError("w must be nonnegative")
        out = np.zeros_like(w_arr)
        tail = w_arr >= self.delta
        if np.any(tail):
            out[tail] = self.ph.pdf(w_arr[tail] - self.delta)
        return float(out[0]) if np.ndim(w) == 0 else out

    def mean(self) -> float:
        return self.delta + self.ph.mean()

    def variance(self) -> float:
        return self.ph.moment(2) - self.ph.mean() ** 2

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return self.delta + self.ph.sample(rng, size)

    def cell_weights(self, step: float, npoints: int):
        """Product-trapezoid weights of the density on grid cells.

        For cell ``l`` covering ``[(l-1) step, l step]``::

            a[l] = int g(v) (v - (l-1) step) / step dv
            b[l] = int g(v) (l step - v) / step dv

        so that ``int_0^w f(u) g(w - u) du`` with ``f`` piecewise linear on the
        grid is exact.  Cell integrals use a Van Loan block exponential, which
        keeps them accurate in the far tail.  ``a[0] = b[0] = 0``.
        """
        shift = delay_steps(self.delta, step)
        a = np.zeros(npoints)
        b = np.zeros(npoints)
        ph = self.ph
        n = ph.order
        M = np.zeros((n + 2, n + 2))
        M[:n, :n] = ph.A
        M[:n, n] = ph.mu
        M[n, n + 1] = 1.0
        E = linalg.expm(M * step)
        prop = E[:n, :n]
        mass = E[:n, n]  # int_0^h e^{At} mu dt
        first = step * E[:n, n] - E[:n, n + 1]  # int_0^h t e^{At} mu dt
        x = ph.alpha.copy()
        for ell in range(shift + 1, npoints):
            ai = x @ first / step
            a[ell] = ai
            b[ell] = x @ mass - ai
            x = x @ prop
        return a, b

    def on_grid(self, step: float, npoints: int):
        """Tabulate ``(ccdf, pdf)`` at ``w = 0, step, ..., (npoints-1)*step``.

        The phase vector ``alpha expm(A t)`` is propagated by the one-step
        transition ``expm(A step)``, which is exact on the grid.  ``delta``
        must be a multiple of ``step``; the density at ``delta`` is the right
        limit.
        """
        shift = delay_steps(self.delta, step)
        ccdf = np.ones(npoints)
        pdf = np.zeros(npoints)
        if shift < npoints:
            m = npoints - shift
            prop = linalg.expm(self.ph.A * step)
            rows = np.empty((m, self.ph.order))
            x = self.ph.alpha.copy()
            for i in range(m):
                rows[i] = x
                x = x @ prop
            ccdf[shift:] = np.clip(rows.sum(axis=1), 0.0, 1.0)
            pdf[shift:] = rows @ self.ph.mu
        return ccdf, pdf


def delay_steps(delta: float, step: float) -> int:
    """Number of grid steps in ``delta``; raises unless ``step`` divides it."""
    s = delta / step
    si = int(round(s))
    if abs(s - si) > 1e-9 * max(1.0, s):
        raise ValueError(f"step {step} does not divide delta {delta}")
    return si


def hyperexp_from(mean: float, scv: float, f: float = 0.5) -> PhaseTypeDist:
    """Two-phase hyperexponential with the given mean and SCV.

    Only the balanced-means shape ``f = 0.5`` is supported: both branches
    carry ``p_i / mu_i = mean / 2``.  ``scv == 1`` collapses to the
    exponential.
    """
    if not mean > 0:
        raise DistributionError(f"mean must be positive, got {mean}")
    if scv < 1:
        raise DistributionError(f"scv={scv} < 1 is not reachable by a hyperexponential")
    if f != 0.5:
        raise DistributionError(f"only balanced means (f=0.5) are supported, got f={f}")
    p1 = 0.5 * (1.0 + np.sqrt((scv - 1.0) / (scv + 1.0)))
    p2 = 1.0 - p1
    rates = np.array([2.0 * p1 / mean, 2.0 * p2 / mean])
    return PhaseTypeDist(np.array([p1, p2]), np.diag(-rates))


# functional aliases
def ph_pdf(d: PhaseTypeDist, w):
    return d.pdf(w)


def ph_ccdf(d: ShiftedDist, w):
    return d.ccdf(w)


def ph_mean(d: ShiftedDist) -> float:
    return d.mean()


def ph_sample(d: ShiftedDist, rng: np.random.Generator, size: int | None = None):
    return d.sample(rng, size)
