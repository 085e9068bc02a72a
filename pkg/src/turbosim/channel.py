"""Gamma-Gamma irradiance model and random MIMO channel matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (DEFAULT_QUADRATURE, NumericsDomainError, QuadratureSpec,
                       RngStream, integrate_semi_infinite, ln_gamma, log_bessel_k)

__all__ = [
    "TurbulenceParams",
    "ChannelMatrix",
    "PhysicalLinkParams",
    "gg_pdf",
    "gg_cdf",
    "gg_sample",
    "sample_channel",
    "sample_channels",
    "snr_from_physical",
    "db_to_linear",
    "linear_to_db",
]


@dataclass(frozen=True)
class TurbulenceParams:
    """Effective eddy counts ``alpha`` (large scale) and ``beta`` (small scale)."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def scintillation_index(self) -> float:
        return 1 / self.alpha + 1 / self.beta + 1 / (self.alpha * self.beta)

    def swapped(self) -> "TurbulenceParams":
        return TurbulenceParams(self.beta, self.alpha)


@dataclass(frozen=True)
class ChannelMatrix:
    """``N x M`` complex gains, ``h[n, m] = sqrt(I[n, m]) * exp(j*phase[n, m])``."""

    entries: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.entries, dtype=complex)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"channel matrix must be 2-D and non-empty, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel matrix has non-finite entries")
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def M(self) -> int:
        return self.entries.shape[1]

    @property
    def irradiance(self) -> np.ndarray:
        return np.abs(self.entries) ** 2


@dataclass(frozen=True)
class PhysicalLinkParams:
    symbol_period: float
    responsivity: float
    mean_irradiance: float
    photon_energy: float

    def __post_init__(self):
        for name in ("symbol_period", "responsivity", "mean_irradiance", "photon_energy"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise NumericsDomainError(f"{name} must be finite and > 0, got {v!r}")


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    return 10.0 * np.log10(lin)


def gg_log_pdf(params: TurbulenceParams, irradiance):
    a, b = params.alpha, params.beta
    I = np.asarray(irradiance, dtype=float)
    if np.any(~(I > 0)):
        raise NumericsDomainError("gg_pdf requires irradiance > 0")
    half = (a + b) / 2
    return (math.log(2) - ln_gamma(a) - ln_gamma(b) + half * math.log(a * b)
            + (half - 1) * np.log(I) + log_bessel_k(a - b, 2 * np.sqrt(a * b * I)))


def gg_pdf(params: TurbulenceParams, irradiance):
    """Gamma-Gamma density of unit-mean irradiance.

    Evaluated in log space so large ``alpha + beta`` or large ``I`` neither
    overflow the prefactor nor underflow the Bessel factor.
    """
    out = np.exp(gg_log_pdf(params, irradiance))
    return float(out) if np.ndim(out) == 0 else out


def gg_cdf(params: TurbulenceParams, irradiance: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``P{I <= irradiance}`` by quadrature of :func:`gg_pdf`."""
    from scipy import integrate

    if irradiance <= 0:
        return 0.0
    lower = min(irradiance, 1.0)
    val = integrate.quad(lambda t: gg_pdf(params, t), 0.0, lower,
                         epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.max_subdivisions)[0]
    if irradiance > 1.0:
        val = 1.0 - integrate_semi_infinite(
            lambda t: gg_pdf(params, irradiance + t) if t > 0 else 0.0, spec, breakpoint=1.0)
    return float(min(max(val, 0.0), 1.0))


def gg_sample(params: TurbulenceParams, rng: RngStream, size=None):
    """Gamma-Gamma irradiance as a product of unit-mean Gamma variates.

    ``X ~ Gamma(alpha, 1/alpha)`` is drawn first, then ``Y ~ Gamma(beta,
    1/beta)``; for array sizes each factor is drawn as a whole block.
    """
    a, b = params.alpha, params.beta
    g = rng.generator
    x = g.gamma(a, 1.0 / a, size)
    y = g.gamma(b, 1.0 / b, size)
    return x * y


def sample_channels(M: int, N: int, params: TurbulenceParams, rng: RngStream, count: int) -> np.ndarray:
    """``count`` independent channel matrices as a ``(count, N, M)`` array.

    Draw order: all irradiances, then all phases; batch layout is the
    contract that keeps results reproducible for a given stream.
    """
    if M < 1 or N < 1:
        raise ValueError(f"need M >= 1 and N >= 1, got M={M}, N={N}")
    shape = (count, N, M)
    irr = gg_sample(params, rng, shape)
    phase = rng.generator.uniform(0.0, 2 * np.pi, shape)
    return np.sqrt(irr) * np.exp(1j * phase)


def sample_channel(M: int, N: int, params: TurbulenceParams, rng: RngStream) -> ChannelMatrix:
    return ChannelMatrix(sample_channels(M, N, params, rng, 1)[0])


def snr_from_physical(link: PhysicalLinkParams) -> float:
    """Linear receiver SNR ``2 T_b R_oe I_s / (h nu)``."""
    return 2.0 * link.symbol_period * link.responsivity * link.mean_irradiance / link.photon_energy
