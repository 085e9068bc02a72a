import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbosim.channel import (ChannelMatrix, PhysicalLinkParams, TurbulenceParams, db_to_linear, gg_cdf,
                              gg_log_pdf, gg_pdf, gg_sample, linear_to_db, sample_channel, sample_channels,
                              snr_from_physical)
from turbosim.numerics import NumericsDomainError, RngStream, integrate_semi_infinite

P42 = TurbulenceParams(4.0, 2.0)


def _meijer_cdf(a, b, x):
    # closed form through the Meijer G-function, independent of the quadrature path
    g = mpmath.meijerg([[1], []], [[a, b], [0]], a * b * x)
    return float(g / (mpmath.gamma(a) * mpmath.gamma(b)))


@pytest.mark.parametrize("a,b", [(4, 2), (0.5, 3)])
def test_params_reject_bad(a, b):
    TurbulenceParams(a, b)
    for bad in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(ValueError):
            TurbulenceParams(bad, b)
        with pytest.raises(ValueError):
            TurbulenceParams(a, bad)


def test_scintillation_index():
    assert P42.scintillation_index == pytest.approx(0.875)


@pytest.mark.parametrize("k,expected", [(0, 1.0), (1, 1.0), (2, 1.875)])
def test_pdf_moments(k, expected):
    v = integrate_semi_infinite(lambda t: t ** k * gg_pdf(P42, t))
    assert v == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (3.0, 1.5), (4.0, 2.5), (1.2, 0.8)])
def test_pdf_normalized_other_params(a, b):
    v = integrate_semi_infinite(lambda t: gg_pdf(TurbulenceParams(a, b), t))
    assert v == pytest.approx(1.0, abs=1e-9)


@given(st.floats(0.3, 8.0), st.floats(0.3, 8.0), st.floats(1e-3, 10.0))
@settings(max_examples=100, deadline=None)
def test_pdf_symmetric_in_alpha_beta(a, b, x):
    p = TurbulenceParams(a, b)
    assert gg_pdf(p, x) == pytest.approx(gg_pdf(p.swapped(), x), rel=1e-12)


def test_pdf_matches_mpmath_formula():
    a, b, x = 4.0, 2.0, 0.37
    ref = (2 / (mpmath.gamma(a) * mpmath.gamma(b)) * (a * b) ** ((a + b) / 2) * x ** ((a + b) / 2 - 1)
           * mpmath.besselk(a - b, 2 * mpmath.sqrt(a * b * x)))
    assert gg_pdf(P42, x) == pytest.approx(float(ref), rel=1e-12)
    assert gg_log_pdf(P42, x) == pytest.approx(math.log(float(ref)), rel=1e-12)


def test_pdf_domain():
    with pytest.raises(NumericsDomainError):
        gg_pdf(P42, 0.0)


@pytest.mark.parametrize("x", [0.05, 0.3, 1.0, 2.5, 6.0])
def test_cdf_matches_meijer_g(x):
    assert gg_cdf(P42, x) == pytest.approx(_meijer_cdf(4, 2, x), abs=1e-9)


def test_sample_moments():
    n = 1_000_000
    x = gg_sample(P42, RngStream(3, 0), n)
    # E[I^4] = prod_k (1 + k/alpha)(1 + k/beta) terms, used for the variance of I^2
    m2 = 1.875
    m4 = np.prod([(1 + k / 4) * (1 + k / 2) for k in range(1, 4)])
    assert abs(x.mean() - 1.0) < 4 * math.sqrt((m2 - 1) / n)
    assert abs((x ** 2).mean() - 1 - 0.875) < 4 * math.sqrt((m4 - m2 ** 2) / n)


def test_sample_ks_against_quadrature_cdf():
    n = 100_000
    x = np.sort(gg_sample(P42, RngStream(9, 1), n))
    # model cdf on 400 sample quantiles (a lower bound on the full D statistic)
    idx = np.linspace(0, n - 1, 400).astype(int)
    F = np.array([gg_cdf(P42, float(x[i])) for i in idx])
    ecdf_hi = (idx + 1) / n
    ecdf_lo = idx / n
    d_grid = max(np.max(np.abs(F - ecdf_hi)), np.max(np.abs(F - ecdf_lo)))
    crit_1pct = 1.628 / math.sqrt(n)
    assert d_grid < crit_1pct


def test_sample_deterministic():
    a = gg_sample(P42, RngStream(1, 5), 1000)
    b = gg_sample(P42, RngStream(1, 5), 1000)
    assert np.array_equal(a, b)


def test_sample_beta_below_one_allowed():
    x = gg_sample(TurbulenceParams(4.0, 0.8), RngStream(0), 10_000)
    assert np.all(x > 0)


def test_channel_matrix_shape_and_irradiance():
    rng = RngStream(2, 0)
    H = sample_channel(2, 3, P42, rng)
    assert (H.N, H.M) == (3, 2)
    assert np.all(np.isfinite(H.entries))
    with pytest.raises(ValueError):
        H.entries[0, 0] = 1.0
    # |h|^2 equals the irradiance drawn for it
    rng_a, rng_b = RngStream(4, 0), RngStream(4, 0)
    h = sample_channels(2, 2, P42, rng_a, 10)
    irr = gg_sample(P42, rng_b, (10, 2, 2))
    assert np.allclose(np.abs(h) ** 2, irr, rtol=1e-12)


def test_channel_matrix_rejects_bad():
    with pytest.raises(ValueError):
        ChannelMatrix(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        ChannelMatrix(np.array([[np.nan]]))


def test_channel_statistics():
    n = 1_000_000
    h = sample_channels(2, 2, P42, RngStream(8, 0), n // 4)
    flat = h.reshape(-1, 4)
    p = np.abs(flat) ** 2
    assert abs(p.mean() - 1) < 4 * math.sqrt(0.875 / p.size)
    se = math.sqrt(1.0 / (2 * p.size))
    assert abs(flat.mean().real) < 4 * se and abs(flat.mean().imag) < 4 * se
    t = flat.shape[0]
    corr = np.corrcoef(p.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 4 / math.sqrt(t)


def test_snr_from_physical():
    base = PhysicalLinkParams(1.0, 1.0, 0.5, 1.0)
    assert snr_from_physical(base) == pytest.approx(1.0)
    assert snr_from_physical(PhysicalLinkParams(2.0, 1.0, 0.5, 1.0)) == pytest.approx(2.0)
    assert snr_from_physical(PhysicalLinkParams(1.0, 1.0, 0.5, 2.0)) == pytest.approx(0.5)
    with pytest.raises(NumericsDomainError):
        PhysicalLinkParams(0.0, 1.0, 1.0, 1.0)


def test_db_round_trip():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert linear_to_db(db_to_linear(13.42)) == pytest.approx(13.42)
