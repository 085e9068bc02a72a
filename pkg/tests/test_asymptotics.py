import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from turbosim.asymptotics import (AsymptoteModel, AsymptoticValidityError, CrMethod, CrValue,
                                  InsufficientPointsError, ber_asymptote, ber_bounds_bpsk_2tx,
                                  cr_closed_form, cr_general, cr_quadrature_bpsk, effective_cdf,
                                  effective_pdf, fit_diversity_slope, fit_loglog_slope, pep_asymptote)
from turbosim.channel import TurbulenceParams
from turbosim.montecarlo import BerPoint
from turbosim.numerics import DEFAULT_QUADRATURE, NumericsDomainError, RngStream

# integral of the squared density, from a 30-digit mpmath quadrature
FROZEN_CR = {
    (4.0, 2.0): Fraction(32, 63),
    (3.0, 1.5): Fraction(135, 256),
    (2.0, 2.5): Fraction(25, 48),
    (4.0, 1.0): Fraction(4, 7),
    (2.0, 1.5): Fraction(9, 16),
}
GRID = [(a, b) for a in (2.0, 3.0, 4.0) for b in (1.5, 2.0, 2.5)]


@pytest.mark.parametrize("ab", list(FROZEN_CR))
def test_closed_form_frozen(ab):
    assert cr_closed_form(TurbulenceParams(*ab)).value == pytest.approx(float(FROZEN_CR[ab]), rel=1e-13)


@pytest.mark.parametrize("ab", GRID)
def test_closed_form_equals_quadrature(ab):
    p = TurbulenceParams(*ab)
    assert cr_quadrature_bpsk(p).value == pytest.approx(cr_closed_form(p).value, rel=1e-8)


def test_quadrature_self_consistent_under_tightening():
    p = TurbulenceParams(3.0, 1.5)
    base = cr_quadrature_bpsk(p).value
    tight = cr_quadrature_bpsk(p, DEFAULT_QUADRATURE.tightened(10)).value
    assert abs(base - tight) <= DEFAULT_QUADRATURE.rel_tol * base


def test_closed_form_symmetric():
    p = TurbulenceParams(4.0, 1.5)
    assert cr_closed_form(p).value == pytest.approx(cr_closed_form(p.swapped()).value, rel=1e-14)


def test_closed_form_large_parameters_stay_finite():
    v = cr_closed_form(TurbulenceParams(40.0, 30.0)).value
    assert math.isfinite(v) and v > 0


def test_closed_form_domain():
    with pytest.raises(NumericsDomainError):
        cr_closed_form(TurbulenceParams(4.0, 0.4))


def test_cr_general_matches_closed_form():
    p = TurbulenceParams(4.0, 2.0)
    v = cr_general(p, [2, 2], 1_000_000, RngStream(1, 0))
    assert v.method is CrMethod.MONTE_CARLO_GENERAL
    assert abs(v.value - 32 / 63) < 3 * v.std_error


def test_cr_general_phase_invariance():
    p = TurbulenceParams(4.0, 2.0)
    a = cr_general(p, [2, 2], 1_000_000, RngStream(2, 0))
    b = cr_general(p, [2 * np.exp(0.7j), 2], 1_000_000, RngStream(2, 1))
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)


def test_cr_general_scaling():
    p = TurbulenceParams(4.0, 2.0)
    v = cr_general(p, [4, 4], 1_000_000, RngStream(3, 0))
    assert abs(v.value - 32 / 63 / 4) < 3 * v.std_error


def test_cr_general_validation():
    p = TurbulenceParams(4.0, 2.0)
    with pytest.raises(ValueError):
        cr_general(p, [2], 10_000, RngStream(0))
    with pytest.raises(ValueError):
        cr_general(p, [2, 0], 10_000, RngStream(0))
    with pytest.raises(ValueError):
        cr_general(p, [2, 2], 100, RngStream(0))


def test_cr_value_validation():
    with pytest.raises(ValueError):
        CrValue(-1.0, CrMethod.CLOSED_FORM)


# -- effective-radius law ----------------------------------------------------------

def test_effective_cdf_basic():
    c = 0.5
    assert effective_cdf(0.1, 1, c) == pytest.approx(c * 0.01)
    assert effective_cdf(0.0, 2, c) == 0.0
    assert effective_cdf(0.1, 2, c) == pytest.approx(c ** 2 * 1e-4 / 2)
    with pytest.raises(AsymptoticValidityError):
        effective_cdf(1.0, 1, c)


def test_effective_pdf_is_derivative():
    c, r, h = 32 / 63, 0.01, 1e-7
    for N in (1, 2, 3):
        num = (effective_cdf(r + h, N, c) - effective_cdf(r - h, N, c)) / (2 * h)
        assert num == pytest.approx(effective_pdf(r, N, c), rel=1e-6)
    assert effective_pdf(r, 1, c) == pytest.approx(2 * c * r)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_effective_pdf_integrates_to_cdf(N):
    c, r = 32 / 63, 0.1
    v, _ = integrate.quad(lambda t: effective_pdf(t, N, c), 0, r, epsabs=1e-14, epsrel=1e-12)
    assert abs(v - effective_cdf(r, N, c)) < 1e-9


@pytest.mark.parametrize("r", [0.01, 0.05, 0.1])
def test_induction_step_n2(r):
    c = 32 / 63
    v, _ = integrate.quad(lambda r0: c * (r * r - r0 * r0) * effective_pdf(r0, 1, c), 0, r,
                          epsabs=1e-16, epsrel=1e-12)
    assert v == pytest.approx(effective_cdf(r, 2, c), rel=1e-10)


@given(st.floats(1e-4, 0.2), st.floats(1e-4, 0.2), st.floats(0.1, 1.0), st.integers(1, 3))
@settings(max_examples=100, deadline=None)
def test_effective_cdf_monotone(r1, r2, c, N):
    lo, hi = sorted((r1, r2))
    try:
        assert effective_cdf(lo, N, c) <= effective_cdf(hi, N, c)
        assert effective_cdf(hi, N, c * 0.9) <= effective_cdf(hi, N, c)
    except AsymptoticValidityError:
        pass


# -- PEP and BER asymptotes ------------------------------------------------------------

def test_pep_n1_simplifies():
    c = 0.5
    assert pep_asymptote(c, 1, 100.0) == pytest.approx(c / 400.0, rel=1e-14)
    assert ber_asymptote(c, 1).coefficient == pytest.approx(c / 4, rel=1e-14)


def test_pep_frozen_value():
    # C_r^2 * Gamma(5/2) / (2 sqrt(pi) 2!) = (32/63)^2 * 3/16
    assert pep_asymptote(cr_closed_form(TurbulenceParams(4, 2)), 2, 1e3) == pytest.approx(
        (32 / 63) ** 2 * 3 / 16 * 1e-6, rel=1e-13)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_pep_power_law(N):
    c = 0.5
    assert pep_asymptote(c, N, 200.0) == pytest.approx(pep_asymptote(c, N, 100.0) / 2 ** N, rel=1e-14)
    ratio = [pep_asymptote(c, N, s) / pep_asymptote(c, N + 1, s) for s in (10.0, 100.0)]
    assert ratio[1] / ratio[0] == pytest.approx(10.0, rel=1e-12)


def test_pep_validation():
    with pytest.raises(ValueError):
        pep_asymptote(0.5, 0, 10.0)
    with pytest.raises(ValueError):
        pep_asymptote(0.5, 1, 0.0)


def test_asymptote_model():
    m = ber_asymptote(32 / 63, 2)
    s = np.logspace(1, 4, 7)
    slope, _, rms = fit_loglog_slope(s, m.evaluate(s))
    assert slope == pytest.approx(-2, abs=1e-12) and rms < 1e-12
    assert m.evaluate_db(m.snr_db_at(1e-4)) == pytest.approx(1e-4, rel=1e-12)
    with pytest.raises(ValueError):
        AsymptoteModel(0.0, 1)
    with pytest.raises(ValueError):
        AsymptoteModel(1.0, 0)


def test_bounds():
    c = 32 / 63
    lo, hi = ber_bounds_bpsk_2tx(c, 2, 100.0, 0.0)
    assert lo == hi
    lo, hi = ber_bounds_bpsk_2tx(c, 2, 100.0, 1e-3)
    assert lo < hi and hi - lo == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        ber_bounds_bpsk_2tx(c, 2, 100.0, 1.5)


# -- slope fitting ------------------------------------------------------------------------

def _points(snr_db, ber, errors=1000):
    return [BerPoint(float(s), 10 ** 6, errors, 2, float(b), (b, b)) for s, b in zip(snr_db, ber)]


def test_fit_recovers_generator_and_ignores_scale():
    m = ber_asymptote(32 / 63, 2)
    snr_db = np.arange(10.0, 31.0, 2.0)
    fit = fit_diversity_slope(_points(snr_db, m.evaluate_db(snr_db)), (10, 30))
    assert fit.fitted_slope == pytest.approx(-2, abs=1e-12)
    assert fit.diversity == pytest.approx(2, abs=1e-12)
    fit_c = fit_diversity_slope(_points(snr_db, 7.5 * m.evaluate_db(snr_db)), (10, 30))
    assert fit_c.fitted_slope == pytest.approx(fit.fitted_slope, abs=1e-12)


def test_fit_needs_reliable_points():
    pts = _points([10, 12, 14], [1e-3, 1e-4, 1e-5], errors=50)
    with pytest.raises(InsufficientPointsError):
        fit_diversity_slope(pts, (10, 14))
    fit = fit_diversity_slope(pts, (10, 14), min_bit_errors=10)
    assert fit.points_used == 3
