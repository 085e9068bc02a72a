"""Deterministic block-parallel Monte-Carlo estimators.

Trials are cut into fixed-size blocks. Block ``b`` of grid point ``i`` draws
from its own :class:`~turbosim.numerics.RngStream` keyed by ``(seed,
stream_id_for(tag, i, b))`` and results are merged in block order, so the
worker count only changes wall-clock time, never the numbers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .channel import TurbulenceParams, db_to_linear, sample_channels
from .numerics import RngStream, stream_id_for
from .signalchain import (ASTBC, SISO, VBLAST, CodewordBlock, SchemeConfig,
                          bit_errors_batch, build_constellation, codebook,
                          detect_batch)

__all__ = [
    "SimConfig",
    "BerPoint",
    "BerCurve",
    "PepEstimate",
    "CapacityEstimate",
    "ThroughputResult",
    "simulate_ber",
    "estimate_pep",
    "empirical_effective_cdf",
    "estimate_capacity",
    "throughput_at_fec",
    "wilson_interval",
    "default_workers",
]

log = logging.getLogger(__name__)

# stream tags
_TAG_BER, _TAG_PEP, _TAG_CDF, _TAG_CAP = 1, 2, 3, 4

DEFAULT_BLOCK_TRIALS = 1 << 15


def default_workers() -> int:
    env = os.environ.get("TURBOSIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer TURBOSIM_WORKERS=%r", env)
    return 1


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return float(lo), float(hi)


@dataclass(frozen=True)
class SimConfig:
    scheme: SchemeConfig
    params: TurbulenceParams
    snr_grid_db: tuple[float, ...]
    max_trials: int = 10_000_000
    min_bit_errors: int = 100
    seed: int = 1
    workers: int = 1
    block_trials: int = DEFAULT_BLOCK_TRIALS

    def __post_init__(self):
        grid = tuple(float(s) for s in self.snr_grid_db)
        if not grid:
            raise ValueError("snr_grid_db must not be empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("snr_grid_db must be strictly increasing")
        object.__setattr__(self, "snr_grid_db", grid)
        for name in ("max_trials", "min_bit_errors", "workers", "block_trials"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def fingerprint(self) -> str:
        """Stable hash of everything that affects the numbers (not ``workers``)."""
        c = self.scheme.constellation
        payload = {
            "scheme": self.scheme.kind, "M": self.scheme.M, "N": self.scheme.N,
            "modulation": c.kind, "q": c.q, "power": self.scheme.power,
            "alpha": self.params.alpha, "beta": self.params.beta,
            "snr_grid_db": list(self.snr_grid_db), "max_trials": self.max_trials,
            "min_bit_errors": self.min_bit_errors, "seed": self.seed,
            "block_trials": self.block_trials,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    trials: int
    bit_errors: int
    bits_per_trial: int
    ber: float
    ci95: tuple[float, float]
    low_confidence: bool = field(default=False, compare=False)

    @classmethod
    def from_counts(cls, snr_db, trials, bit_errors, bits_per_trial, min_bit_errors=100):
        bits = trials * bits_per_trial
        ber = bit_errors / bits if bits else 0.0
        return cls(float(snr_db), int(trials), int(bit_errors), int(bits_per_trial), ber,
                   wilson_interval(bit_errors, bits), bit_errors < min_bit_errors)


@dataclass(frozen=True)
class BerCurve:
    fingerprint: str
    points: tuple[BerPoint, ...]
    scheme: SchemeConfig | None = None
    params: TurbulenceParams | None = None
    seed: int | None = None

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    def reliable(self, min_bit_errors: int = 100) -> list[BerPoint]:
        return [p for p in self.points if p.bit_errors >= min_bit_errors]

    def snr_db_at(self, target_ber: float, min_bit_errors: int = 100) -> float:
        """SNR where the curve crosses ``target_ber`` (log-linear interpolation of reliable points)."""
        pts = self.reliable(min_bit_errors)
        for a, b in zip(pts, pts[1:]):
            if a.ber >= target_ber >= b.ber and a.ber > b.ber:
                t = (math.log10(a.ber) - math.log10(target_ber)) / (math.log10(a.ber) - math.log10(b.ber))
                return a.snr_db + t * (b.snr_db - a.snr_db)
        raise ValueError(f"curve does not cross BER {target_ber} within its reliable points")


@dataclass(frozen=True)
class PepEstimate:
    snr_db: float
    trials: int
    events: int
    probability: float
    std_error: float


@dataclass(frozen=True)
class CapacityEstimate:
    snr_db: float
    trials: int
    mean: float
    std_error: float


# -- block kernels (module level so they pickle for worker processes) ------------

def _ber_block(scheme: SchemeConfig, params: TurbulenceParams, snr: float,
               seed: int, stream_id: int, n: int) -> int:
    rng = RngStream(seed, stream_id)
    h = sample_channels(scheme.M, scheme.N, params, rng, n)
    cb = codebook(scheme)
    tx = rng.generator.integers(0, cb.shape[0], n)
    y = h @ cb[tx]
    if math.isfinite(snr):
        sigma = math.sqrt(0.5 / snr)
        noise = rng.generator.normal(0.0, sigma, y.shape + (2,))
        y = y + (noise[..., 0] + 1j * noise[..., 1])
    det = detect_batch(y, h, scheme)
    return int(bit_errors_batch(tx, det, scheme).sum())


def _pep_block(M: int, N: int, params: TurbulenceParams, delta_s: np.ndarray, snr: float,
               form: str, seed: int, stream_id: int, n: int) -> int:
    rng = RngStream(seed, stream_id)
    h = sample_channels(M, N, params, rng, n)
    hd = h @ delta_s
    sigma = math.sqrt(0.5 / snr)
    if form == "projected":
        proj = rng.generator.normal(0.0, sigma, n)
        half_norm = 0.5 * np.sqrt(np.sum(hd.real ** 2 + hd.imag ** 2, axis=1))
        return int(np.count_nonzero(proj > half_norm))
    noise = rng.generator.normal(0.0, sigma, (n, N, 2))
    nz = noise[..., 0] + 1j * noise[..., 1]
    # y - Hs = n, y - Hs' = H(s - s') + n
    d_sent = np.sum(np.abs(nz) ** 2, axis=1)
    d_target = np.sum(np.abs(hd + nz) ** 2, axis=1)
    return int(np.count_nonzero(d_sent > d_target))


def _capacity_block(M: int, N: int, params: TurbulenceParams | None, snr: float,
                    seed: int, stream_id: int, n: int) -> tuple[float, float]:
    rng = RngStream(seed, stream_id)
    if params is None:
        h = np.exp(1j * rng.generator.uniform(0.0, 2 * np.pi, (n, N, M)))
    else:
        h = sample_channels(M, N, params, rng, n)
    if N == 1 and M == 1:
        c = np.log2(1.0 + snr * np.abs(h[:, 0, 0]) ** 2)
    else:
        g = snr * (h @ np.conj(np.swapaxes(h, 1, 2))) + np.eye(N)
        _, logdet = np.linalg.slogdet(g)
        c = logdet / math.log(2)
    return float(np.sum(c)), float(np.sum(c * c))


class _Runner:
    """Evaluates block tasks in waves; serial when ``workers == 1``."""

    def __init__(self, workers: int):
        self.workers = max(1, int(workers))
        self._pool = ProcessPoolExecutor(self.workers) if self.workers > 1 else None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()

    def map(self, fn: Callable, arg_lists: list[tuple]):
        if self._pool is None:
            return [fn(*a) for a in arg_lists]
        futures = [self._pool.submit(fn, *a) for a in arg_lists]
        return [f.result() for f in futures]


def _block_sizes(total: int, block: int) -> list[int]:
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


def simulate_ber(config: SimConfig, progress: Callable[[BerPoint], None] | None = None) -> BerCurve:
    """BER curve by link-level simulation with exhaustive MLD.

    Each grid point accumulates whole blocks, in order, until either
    ``min_bit_errors`` errors or ``max_trials`` trials are reached. With
    several workers, blocks are computed a wave at a time and any block past
    the stopping point is discarded, which keeps results identical to the
    serial run.
    """
    scheme, params = config.scheme, config.params
    sizes = _block_sizes(config.max_trials, config.block_trials)
    points = []
    with _Runner(config.workers) as runner:
        for i, snr_db in enumerate(config.snr_grid_db):
            snr = float(db_to_linear(snr_db))
            trials = errors = 0
            b = 0
            while b < len(sizes) and errors < config.min_bit_errors:
                wave = range(b, min(len(sizes), b + runner.workers))
                args = [(scheme, params, snr, config.seed, stream_id_for(_TAG_BER, i, j), sizes[j])
                        for j in wave]
                for j, e in zip(wave, runner.map(_ber_block, args)):
                    trials += sizes[j]
                    errors += e
                    b = j + 1
                    if errors >= config.min_bit_errors:
                        break
            pt = BerPoint.from_counts(snr_db, trials, errors, scheme.bits_per_block, config.min_bit_errors)
            if pt.low_confidence:
                log.debug("%s at %.2f dB: only %d bit errors in %d trials",
                         scheme.kind, snr_db, errors, trials)
            if progress is not None:
                progress(pt)
            points.append(pt)
    return BerCurve(config.fingerprint(), tuple(points), scheme, params, config.seed)


def estimate_pep(config: SimConfig, sent: CodewordBlock, detected_target: CodewordBlock, trials: int,
                 form: str = "pairwise") -> list[PepEstimate]:
    """Frequency of the pairwise event ``||y - Hs|| > ||y - Hs'||`` at each grid SNR.

    Only the two codewords are compared; other candidates are ignored.
    ``form="projected"`` evaluates the equivalent scalar event ``n >
    ||H (s - s')|| / 2`` with ``n ~ N(0, 1/(2 snr))`` instead.
    """
    if form not in ("pairwise", "projected"):
        raise ValueError(f"form must be 'pairwise' or 'projected', got {form!r}")
    if sent == detected_target:
        raise ValueError("sent and detected_target must differ")
    scheme = config.scheme
    if scheme.slots != 1:
        raise ValueError("estimate_pep supports single-slot schemes (VBLAST, SISO)")
    delta = (sent.symbols - detected_target.symbols)[:, 0]
    sizes = _block_sizes(int(trials), config.block_trials)
    out = []
    with _Runner(config.workers) as runner:
        for i, snr_db in enumerate(config.snr_grid_db):
            snr = float(db_to_linear(snr_db))
            args = [(scheme.M, scheme.N, config.params, delta, snr, form, config.seed,
                     stream_id_for(_TAG_PEP, i, j), n) for j, n in enumerate(sizes)]
            events = sum(runner.map(_pep_block, args))
            p = events / trials
            out.append(PepEstimate(float(snr_db), int(trials), int(events), p,
                                   math.sqrt(max(p * (1 - p), 0.0) / trials)))
    return out


def _half_norm_sq_rows(params: TurbulenceParams, delta_s: np.ndarray, N: int, rng: RngStream, n: int) -> np.ndarray:
    h = sample_channels(delta_s.size, N, params, rng, n)
    z = 0.5 * (h @ delta_s)
    return z.real ** 2 + z.imag ** 2


def empirical_effective_cdf(params: TurbulenceParams, delta_s: Sequence[complex], N: int,
                            r_grid: Sequence[float], trials: int, rng: RngStream,
                            method: str = "direct", block: int = 1 << 18) -> list[float]:
    """Empirical ``P{||H ds|| / 2 < r}`` over ``trials`` channel draws.

    ``method="direct"`` counts the event per draw. ``method="factorized"``
    (``N <= 2``) uses that the rows of ``H`` are i.i.d.: with ``U_n = |h_n
    ds|^2 / 4`` it averages the empirical probability ``P{U_1 + U_2 < r^2}``
    over all row pairings of the same draws, an unbiased estimator that
    resolves the ``r**4`` tail where direct counting sees almost no events.
    """
    ds = np.asarray(delta_s, dtype=complex)
    r = np.asarray(r_grid, dtype=float)
    if method not in ("direct", "factorized"):
        raise ValueError(f"unknown method {method!r}")
    if method == "factorized" and N > 2:
        raise ValueError("factorized estimator supports N <= 2")
    u = np.empty((trials, N))
    done = 0
    while done < trials:
        n = min(block, trials - done)
        u[done:done + n] = _half_norm_sq_rows(params, ds, N, rng, n)
        done += n
    t = r * r
    if method == "direct":
        s = np.sort(u.sum(axis=1))
        return [float(np.searchsorted(s, ti, side="left") / trials) for ti in t]
    if N == 1:
        s = np.sort(u[:, 0])
        return [float(np.searchsorted(s, ti, side="left") / trials) for ti in t]
    first = np.sort(u[:, 0])
    second = np.sort(u[:, 1])
    out = []
    for ti in t:
        small = first[: np.searchsorted(first, ti, side="left")]
        pairs = np.searchsorted(second, ti - small, side="left").sum(dtype=np.float64)
        out.append(float(pairs / (float(trials) * trials)))
    return out


def estimate_capacity(params: TurbulenceParams | None, M: int, N: int, snr: float, trials: int,
                      rng: RngStream, power: str = "per-antenna", workers: int = 1,
                      block_trials: int = DEFAULT_BLOCK_TRIALS) -> CapacityEstimate:
    """Ergodic capacity ``E[log2 det(I + snr H H^H)]`` in bits per channel use.

    Input covariance is the identity (unit power per antenna); ``power="total"``
    scales it by ``1/M``. Passing ``params=None`` fixes every irradiance to 1
    (phases stay random), which reduces the scalar case to ``log2(1 + snr)``.
    """
    if trials < 10_000:
        raise ValueError(f"capacity estimate needs >= 10000 trials, got {trials}")
    if snr < 0:
        raise ValueError("snr must be >= 0")
    if snr == 0:
        return CapacityEstimate(-math.inf, int(trials), 0.0, 0.0)
    eff = snr / M if power == "total" else snr
    sizes = _block_sizes(int(trials), block_trials)
    args = [(M, N, params, eff, rng.seed, stream_id_for(_TAG_CAP, rng.stream_id & 0xFFFF, j), n)
            for j, n in enumerate(sizes)]
    with _Runner(workers) as runner:
        parts = runner.map(_capacity_block, args)
    s = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s / trials
    var = max(s2 / trials - mean * mean, 0.0) * trials / (trials - 1)
    return CapacityEstimate(float(10 * math.log10(snr)), int(trials), mean, math.sqrt(var / trials))


@dataclass(frozen=True)
class ThroughputResult:
    snr_grid_db: tuple[float, ...]
    bits_per_use: dict[str, list[float]]
    curves: dict[str, list[BerCurve]] = field(default_factory=dict, compare=False)
    fec: float | None = None

    def required_snr_db(self, family: str, min_bit_errors: int = 100) -> list[tuple[float, float]]:
        """``(bits per use, SNR dB where the rung's BER crosses fec)`` for each rung that crosses."""
        if self.fec is None:
            raise ValueError("result carries no fec threshold")
        out = []
        for curve in self.curves[family]:
            try:
                out.append((curve.scheme.bits_per_channel_use, curve.snr_db_at(self.fec, min_bit_errors)))
            except ValueError:
                continue
        return sorted(out)

    def interpolated_crossover_db(self, first: str = ASTBC, second: str = VBLAST,
                                  min_bit_errors: int = 100) -> float | None:
        """SNR where the two families' required-SNR-vs-rate curves intersect.

        Both curves are linear in rate between rungs. The intersection is the
        first rate at which ``second`` stops needing more SNR than ``first``;
        the reported SNR is the common required SNR there.
        """
        a = dict(self.required_snr_db(first, min_bit_errors))
        b = dict(self.required_snr_db(second, min_bit_errors))
        rates = sorted(set(a) & set(b))
        d = [b[r] - a[r] for r in rates]
        for k in range(1, len(rates)):
            if d[k - 1] > 0 >= d[k]:
                t = d[k - 1] / (d[k - 1] - d[k])
                r0, r1 = rates[k - 1], rates[k]
                return float(a[r0] + t * (a[r1] - a[r0]))
        return None

    def crossover_db(self, first: str = ASTBC, second: str = VBLAST) -> float | None:
        """First SNR where ``second`` is strictly ahead, after the last point where ``first`` was ahead."""
        a = self.bits_per_use[first]
        b = self.bits_per_use[second]
        ahead = [k for k in range(len(a)) if a[k] > b[k]]
        start = ahead[-1] + 1 if ahead else 0
        for k in range(start, len(a)):
            if b[k] > a[k]:
                return self.snr_grid_db[k]
        return None


def ladder_scheme(kind: str, q: int, M: int, N: int, power: str = "per-antenna") -> SchemeConfig:
    """Rung ``q`` of a comparison ladder.

    V-BLAST sends ``M`` q-QAM symbols per use; Alamouti sends one ``q**M``-QAM
    symbol per use so both carry ``M log2 q`` bits; SISO sends one q-QAM symbol.
    """
    if kind == VBLAST:
        return SchemeConfig(VBLAST, M, N, build_constellation("QAM", q), power)
    if kind == ASTBC:
        return SchemeConfig(ASTBC, M, N, build_constellation("QAM", q ** M), power)
    if kind == SISO:
        return SchemeConfig(SISO, 1, 1, build_constellation("QAM", q), power)
    raise ValueError(f"unknown scheme kind {kind!r}")


def throughput_at_fec(schemes: dict[str, Sequence[SchemeConfig]] | Sequence[SchemeConfig],
                      params: TurbulenceParams, snr_grid_db: Sequence[float], fec: float,
                      max_trials: int = 20_000, min_bit_errors: int = 100, seed: int = 1,
                      workers: int = 1, block_trials: int = 4096) -> ThroughputResult:
    """Bits per channel use of the largest rung whose simulated BER is ``<= fec``.

    ``schemes`` maps a family name to its ladder of :class:`SchemeConfig`, or is
    a flat list grouped by ``kind``. SNRs where no rung passes report 0.
    """
    if not 0 < fec < 0.5 + 1e-12:
        raise ValueError(f"fec must lie in (0, 0.5], got {fec}")
    if not isinstance(schemes, dict):
        grouped: dict[str, list[SchemeConfig]] = {}
        for s in schemes:
            grouped.setdefault(s.kind, []).append(s)
        schemes = grouped
    grid = tuple(float(s) for s in snr_grid_db)
    result: dict[str, list[float]] = {}
    curves: dict[str, list[BerCurve]] = {}
    for family, ladder in schemes.items():
        ladder = sorted(ladder, key=lambda s: s.bits_per_channel_use)
        best = [0.0] * len(grid)
        fam_curves = []
        for rung in ladder:
            cfg = SimConfig(rung, params, grid, max_trials, min_bit_errors, seed, workers, block_trials)
            curve = simulate_ber(cfg)
            fam_curves.append(curve)
            for k, pt in enumerate(curve.points):
                if pt.ber <= fec:
                    best[k] = max(best[k], rung.bits_per_channel_use)
        result[family] = best
        curves[family] = fam_curves
    return ThroughputResult(grid, result, curves, float(fec))
