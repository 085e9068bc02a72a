"""High-SNR analysis of V-BLAST over Gamma-Gamma turbulence.

The central quantity is ``C_r``, the coefficient of the small-radius law
``P{|sum_j h_j ds_j| / 2 < r} ~ C_r r**2`` for one receive aperture. With
``N`` independent apertures the squared radii add, which gives

    F_N(r) = C_r**N r**(2N) / N!,

and averaging the Gaussian tail ``Q(r sqrt(2 snr))`` against that law gives
the asymptotic pairwise error probability

    P = C_r**N Gamma(N + 1/2) / (2 sqrt(pi) N!) * snr**(-N).

For two transmitters with BPSK the double-error event ``11 -> 00``
dominates the bit error rate, so the same expression is the BER asymptote.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .channel import TurbulenceParams, gg_log_pdf, gg_pdf, sample_channels
from .numerics import (DEFAULT_QUADRATURE, NumericsDomainError, QuadratureSpec,
                       RngStream, integrate_semi_infinite, ln_gamma)

__all__ = [
    "CrMethod",
    "CrValue",
    "AsymptoteModel",
    "SlopeFit",
    "AsymptoticValidityError",
    "InsufficientPointsError",
    "cr_closed_form",
    "cr_quadrature_bpsk",
    "cr_general",
    "effective_cdf",
    "effective_pdf",
    "pep_asymptote",
    "ber_asymptote",
    "ber_bounds_bpsk_2tx",
    "fit_diversity_slope",
    "fit_loglog_slope",
]

# effective_cdf is only trusted where the small-r law was derived.
CDF_VALIDITY_LIMIT = 0.1
MIN_CR_TRIALS = 10_000


class AsymptoticValidityError(ValueError):
    """Requested radius lies outside the small-r regime of the cdf law."""


class InsufficientPointsError(ValueError):
    """Too few usable BER points in the slope-fit window."""


class CrMethod(str, Enum):
    CLOSED_FORM = "CLOSED_FORM"
    QUADRATURE_1D = "QUADRATURE_1D"
    MONTE_CARLO_GENERAL = "MONTE_CARLO_GENERAL"


@dataclass(frozen=True)
class CrValue:
    value: float
    method: CrMethod
    std_error: float = 0.0

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ValueError(f"C_r must be finite and positive, got {self.value}")
        if self.method is CrMethod.MONTE_CARLO_GENERAL:
            if not self.std_error >= 0:
                raise ValueError("Monte-Carlo C_r needs a non-negative standard error")
        elif self.std_error != 0:
            raise ValueError(f"{self.method.value} is deterministic; std_error must be 0")

    def __float__(self):
        return float(self.value)


def _cr(cr) -> float:
    return float(cr.value) if isinstance(cr, CrValue) else float(cr)


@dataclass(frozen=True)
class AsymptoteModel:
    """BER line ``coefficient * snr**(-slope)``."""

    coefficient: float
    slope: int

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ValueError(f"coefficient must be positive, got {self.coefficient}")
        if int(self.slope) != self.slope or self.slope < 1:
            raise ValueError(f"slope must be a positive integer, got {self.slope}")

    def evaluate(self, snr):
        return self.coefficient * np.asarray(snr, dtype=float) ** (-self.slope)

    def evaluate_db(self, snr_db):
        return self.evaluate(10.0 ** (np.asarray(snr_db, dtype=float) / 10.0))

    def snr_db_at(self, ber: float) -> float:
        """SNR (dB) where the line reaches ``ber``."""
        return 10.0 * (math.log10(self.coefficient) - math.log10(ber)) / self.slope


@dataclass(frozen=True)
class SlopeFit:
    fitted_slope: float
    intercept: float
    snr_window_db: tuple[float, float]
    residual_rms: float
    points_used: int = 0

    @property
    def diversity(self) -> float:
        return -self.fitted_slope


# -- C_r ------------------------------------------------------------------------

def _check_gamma_args(params: TurbulenceParams):
    a, b = params.alpha, params.beta
    bad = [name for name, v in (("alpha+beta-1", a + b - 1), ("2*beta-1", 2 * b - 1),
                                ("2*alpha-1", 2 * a - 1), ("alpha+beta-1/2", a + b - 0.5)) if v <= 0]
    if bad:
        raise NumericsDomainError(f"closed-form C_r needs positive Gamma arguments; "
                                  f"non-positive: {', '.join(bad)} (alpha={a}, beta={b})")


def cr_closed_form(params: TurbulenceParams) -> CrValue:
    """``C_r`` for two transmitters with BPSK, in log space.

    Equal to the integral of the squared Gamma-Gamma density; requires
    ``alpha, beta > 1/2``.
    """
    _check_gamma_args(params)
    a, b = params.alpha, params.beta
    log_c = (ln_gamma(a + b - 1) + ln_gamma(2 * b - 1) + ln_gamma(2 * a - 1)
             - 2 * ln_gamma(a) - 2 * ln_gamma(b) - ln_gamma(a + b - 0.5)
             + (3 - 2 * a - 2 * b) * math.log(2) + 0.5 * math.log(math.pi)
             + math.log(a) + math.log(b))
    return CrValue(math.exp(log_c), CrMethod.CLOSED_FORM)


def cr_quadrature_bpsk(params: TurbulenceParams, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> CrValue:
    """``C_r`` for two transmitters with BPSK as ``integral_0^inf f_I(I)**2 dI``.

    Squaring happens in log space so the integrand stays finite in the tails.
    """
    _check_gamma_args(params)

    def integrand(I):
        if I <= 0:
            return 0.0
        return math.exp(2 * gg_log_pdf(params, I))

    return CrValue(integrate_semi_infinite(integrand, spec), CrMethod.QUADRATURE_1D)


def cr_general(params: TurbulenceParams, delta_s: Sequence[complex], trials: int, rng: RngStream,
               block: int = 1 << 18) -> CrValue:
    """Monte-Carlo ``C_r`` for an arbitrary error pattern on one receive row.

    ``delta_s`` lists the ``k >= 2`` non-zero symbol differences; the last one
    plays the role of the conditioning term. Averages
    ``4/|ds_k|^2 * f_I(4|X|^2/|ds_k|^2)`` with ``X = sum_{j<k} h_j ds_j / 2``
    over Gamma-Gamma irradiances and uniform phases of the first ``k-1``
    gains. Samples are drawn in fixed blocks so the estimate depends only on
    ``(rng, trials, block)``.
    """
    ds = np.asarray(delta_s, dtype=complex)
    if ds.ndim != 1 or ds.size < 2:
        raise ValueError(f"need k >= 2 symbol differences, got {delta_s!r}")
    if np.any(ds == 0):
        raise ValueError("all symbol differences must be non-zero")
    if trials < MIN_CR_TRIALS:
        raise ValueError(f"cr_general needs at least {MIN_CR_TRIALS} trials, got {trials}")
    lead, last = ds[:-1], ds[-1]
    scale = 4.0 / abs(last) ** 2
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        n = min(block, trials - done)
        h = sample_channels(lead.size, 1, params, rng, n)[:, 0, :]
        x = 0.5 * (h @ lead)
        arg = scale * (x.real ** 2 + x.imag ** 2)
        vals = np.zeros(n)
        pos = arg > 0
        vals[pos] = scale * np.exp(gg_log_pdf(params, arg[pos]))
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += n
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0) * trials / (trials - 1)
    return CrValue(mean, CrMethod.MONTE_CARLO_GENERAL, math.sqrt(var / trials))


# -- effective-radius law and PEP -------------------------------------------------

def effective_cdf(r: float, N: int, cr, limit: float = CDF_VALIDITY_LIMIT) -> float:
    """``F_N(r) = C_r**N r**(2N) / N!``.

    Raises :class:`AsymptoticValidityError` when the value exceeds ``limit``
    (the small-r regime the law describes).
    """
    if r < 0:
        raise ValueError(f"radius must be non-negative, got {r}")
    _check_order(N)
    c = _cr(cr)
    val = math.exp(N * math.log(c) + 2 * N * math.log(r) - math.lgamma(N + 1)) if r > 0 else 0.0
    if val > limit:
        raise AsymptoticValidityError(
            f"F_{N}({r}) = {val:.3g} exceeds {limit}; outside the small-r regime")
    return val


def effective_pdf(r: float, N: int, cr) -> float:
    """``f_N(r) = 2 C_r**N r**(2N-1) / (N-1)!``, the r-derivative of :func:`effective_cdf`."""
    if r < 0:
        raise ValueError(f"radius must be non-negative, got {r}")
    _check_order(N)
    if r == 0:
        return 0.0
    c = _cr(cr)
    return 2.0 * math.exp(N * math.log(c) + (2 * N - 1) * math.log(r) - math.lgamma(N))


def _check_order(N):
    if int(N) != N or N < 1:
        raise ValueError(f"receiver count N must be a positive integer, got {N}")


def _pep_coefficient(c: float, N: int) -> float:
    return math.exp(N * math.log(c) + math.lgamma(N + 0.5) - math.lgamma(N + 1)
                    - math.log(2 * math.sqrt(math.pi)))


def pep_asymptote(cr, N: int, snr):
    """Asymptotic PEP of a double-error (``k >= 2``) event at linear ``snr``."""
    _check_order(N)
    snr = np.asarray(snr, dtype=float)
    if np.any(~(snr > 0)):
        raise ValueError("snr must be > 0")
    out = _pep_coefficient(_cr(cr), N) * snr ** (-N)
    return float(out) if out.ndim == 0 else out


def ber_asymptote(cr, N: int) -> AsymptoteModel:
    _check_order(N)
    return AsymptoteModel(_pep_coefficient(_cr(cr), N), int(N))


def ber_bounds_bpsk_2tx(cr, N: int, snr: float, pep_single_error: float) -> tuple[float, float]:
    """Bracket the 2-Tx BPSK BER between the double-error PEP and the union bound.

    ``pep_single_error`` is ``P(11 -> 10)``; by symmetry ``P(11 -> 01)`` is
    the same, and each single error flips half the bits.
    """
    if not 0 <= pep_single_error <= 1:
        raise ValueError(f"pep_single_error must be a probability, got {pep_single_error}")
    lower = pep_asymptote(cr, N, snr)
    return lower, lower + 0.5 * pep_single_error * 2


# -- slope fitting ----------------------------------------------------------------

def fit_loglog_slope(x, y) -> tuple[float, float, float]:
    """Least-squares ``log10 y = intercept + slope*log10 x``; returns (slope, intercept, rms)."""
    lx = np.log10(np.asarray(x, dtype=float))
    ly = np.log10(np.asarray(y, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2)))


def fit_diversity_slope(curve, window_db: tuple[float, float], min_bit_errors: int = 100) -> SlopeFit:
    """Fit ``log10 BER`` against ``log10 snr`` over ``window_db`` (inclusive).

    ``curve`` is a :class:`~turbosim.montecarlo.BerCurve` or any iterable of
    points with ``snr_db``, ``ber`` and ``bit_errors``. Only points with at
    least ``min_bit_errors`` errors are used.
    """
    lo, hi = window_db
    points = getattr(curve, "points", curve)
    sel = [p for p in points
           if lo <= p.snr_db <= hi and p.bit_errors >= min_bit_errors and p.ber > 0]
    if len(sel) < 3:
        raise InsufficientPointsError(
            f"need >= 3 points with >= {min_bit_errors} bit errors in [{lo}, {hi}] dB, got {len(sel)}")
    snr = 10.0 ** (np.array([p.snr_db for p in sel]) / 10.0)
    ber = np.array([p.ber for p in sel])
    slope, intercept, rms = fit_loglog_slope(snr, ber)
    return SlopeFit(slope, intercept, (float(lo), float(hi)), rms, len(sel))
