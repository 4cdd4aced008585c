import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dss_meanfield.distributions import (DistributionError, PhaseTypeDist, ShiftedDist, delay_steps,
                                         hyperexp_from, ph_ccdf, ph_mean, ph_pdf, ph_sample)


def erlang2(rate):
    return PhaseTypeDist(np.array([1.0, 0.0]), np.array([[-rate, rate], [0.0, -rate]]))


def test_exponential_closed_forms():
    d = PhaseTypeDist.exponential(2.0)
    w = np.linspace(0, 3, 7)
    assert np.allclose(d.pdf(w), 2.0 * np.exp(-2.0 * w), atol=1e-14)
    assert np.allclose(d.ccdf(w), np.exp(-2.0 * w), atol=1e-14)
    assert d.mean() == pytest.approx(0.5)
    assert d.scv() == pytest.approx(1.0)


def test_erlang_closed_forms():
    d = erlang2(3.0)
    w = np.linspace(0, 4, 9)
    assert np.allclose(d.pdf(w), 9.0 * w * np.exp(-3.0 * w), atol=1e-13)
    assert np.allclose(d.ccdf(w), (1 + 3.0 * w) * np.exp(-3.0 * w), atol=1e-13)
    assert d.scv() == pytest.approx(0.5)


def test_scalar_in_scalar_out():
    d = PhaseTypeDist.exponential(1.0)
    assert isinstance(d.pdf(0.3), float)
    assert isinstance(d.ccdf(0.3), float)


@pytest.mark.parametrize("mean,scv", [(0.8, 2.0), (1 / 15, 2.0), (1.0, 1.0), (0.3, 5.0)])
def test_hyperexp_matches_moments(mean, scv):
    d = hyperexp_from(mean, scv)
    assert d.mean() == pytest.approx(mean, rel=1e-12)
    assert d.scv() == pytest.approx(scv, rel=1e-12)
    # balanced means: p_i / mu_i equal
    branch = d.alpha / -np.diag(d.A)
    assert branch[0] == pytest.approx(branch[1])


def test_hyperexp_rejects_bad_params():
    with pytest.raises(DistributionError):
        hyperexp_from(1.0, 0.5)
    with pytest.raises(DistributionError):
        hyperexp_from(-1.0, 2.0)
    with pytest.raises(DistributionError):
        hyperexp_from(1.0, 2.0, f=0.3)


@pytest.mark.parametrize("alpha,A", [
    ([0.5, 0.4], [[-1.0, 0.0], [0.0, -1.0]]),        # alpha does not sum to 1
    ([1.0], [[1.0]]),                                # positive diagonal
    ([1.0, 0.0], [[-1.0, 1.0], [1.0, -1.0]]),        # no exit: never absorbs
    ([1.0, 0.0], [[-1.0, -0.5], [0.0, -1.0]]),       # negative off-diagonal
    ([1.0], [[-1.0, 0.0]]),                          # shape mismatch
])
def test_invalid_ph_rejected(alpha, A):
    with pytest.raises(DistributionError):
        PhaseTypeDist(np.array(alpha), np.array(A))


def test_pdf_integrates_to_one_and_mean():
    d = hyperexp_from(0.8, 2.0)
    tot, _ = integrate.quad(d.pdf, 0, np.inf)
    m, _ = integrate.quad(lambda w: d.ccdf(w), 0, np.inf)
    assert tot == pytest.approx(1.0, abs=1e-8)
    assert m == pytest.approx(0.8, abs=1e-8)


def test_shifted_support_and_jump():
    s = ShiftedDist(0.2, hyperexp_from(0.8, 2.0))
    assert s.ccdf(0.0) == 1.0
    assert s.ccdf(0.19999) == 1.0
    assert s.pdf(0.1) == 0.0
    # right-continuous at the shift: density jumps to g_Y(0) = alpha . mu
    assert s.pdf(0.2) == pytest.approx(float(s.ph.alpha @ s.ph.mu))
    assert s.mean() == pytest.approx(1.0)
    assert ph_mean(s) == s.mean()
    assert ph_ccdf(s, 0.7) == s.ccdf(0.7)
    assert ph_pdf(s.ph, 0.5) == s.ph.pdf(0.5)


def test_shifted_rejects_bad_delta():
    with pytest.raises(DistributionError):
        ShiftedDist(-0.1, PhaseTypeDist.exponential(1.0))
    with pytest.raises(DistributionError):
        ShiftedDist(float("nan"), PhaseTypeDist.exponential(1.0))


def test_on_grid_matches_pointwise():
    s = ShiftedDist(0.2, hyperexp_from(0.8, 2.0))
    h, n = 0.01, 500
    ccdf, pdf = s.on_grid(h, n)
    w = h * np.arange(n)
    assert np.allclose(ccdf, s.ccdf(w), atol=1e-12)
    assert np.allclose(pdf, s.pdf(w), atol=1e-12)


def test_cell_weights_are_product_trapezoid():
    s = ShiftedDist(0.1, erlang2(4.0))
    h, n = 0.05, 60
    a, b = s.cell_weights(h, n)
    for ell in (2, 3, 10, 40):
        lo, hi = (ell - 1) * h, ell * h
        ea, _ = integrate.quad(lambda v: s.pdf(v) * (v - lo) / h, lo, hi, points=[0.1])
        eb, _ = integrate.quad(lambda v: s.pdf(v) * (hi - v) / h, lo, hi, points=[0.1])
        assert a[ell] == pytest.approx(ea, abs=1e-13)
        assert b[ell] == pytest.approx(eb, abs=1e-13)
    assert np.all(a[:3] == 0) and np.all(b[:3] == 0)
    # all cells together hold the probability mass below (n-1) h
    assert a.sum() + b.sum() == pytest.approx(s.cdf((n - 1) * h), abs=1e-12)


def test_delay_steps():
    assert delay_steps(0.2, 0.0025) == 80
    assert delay_steps(0.0, 0.01) == 0
    with pytest.raises(ValueError):
        delay_steps(0.2, 0.003)


def test_sample_moments(rng):
    s = ShiftedDist(0.2, hyperexp_from(0.8, 2.0))
    x = ph_sample(s, rng, 400_000)
    assert x.min() >= 0.2
    se = np.sqrt(s.variance() / x.size)
    assert abs(x.mean() - 1.0) < 5 * se
    assert np.var(x) == pytest.approx(s.variance(), rel=0.03)


def test_sample_distribution_ks(rng):
    from scipy import stats
    d = erlang2(2.0)
    x = d.sample(rng, 20_000)
    res = stats.kstest(x, lambda t: 1.0 - d.ccdf(np.maximum(t, 0.0)))
    assert res.pvalue > 1e-3


def test_sample_scalar(rng):
    assert isinstance(PhaseTypeDist.exponential(1.0).sample(rng), float)


@settings(max_examples=30, deadline=None)
@given(mean=st.floats(0.05, 5.0), scv=st.floats(1.0, 10.0), w=st.floats(0.0, 20.0))
def test_hyperexp_ccdf_properties(mean, scv, w):
    d = hyperexp_from(mean, scv)
    c1, c2 = d.ccdf(w), d.ccdf(w + 0.1)
    assert 0.0 <= c2 <= c1 <= 1.0
    assert d.pdf(w) >= 0.0
