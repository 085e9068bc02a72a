"""Constellations, V-BLAST / Alamouti / SISO encoding, AWGN and exhaustive ML detection.

Symbols are indexed by their integer bit label, so ``points[label]`` is the
complex point and a codeword is identified by the tuple of labels it carries.
Candidate codewords are enumerated with the first transmit antenna (or the
first Alamouti symbol) as the most significant digit; the MLD breaks ties
toward the lowest enumeration index.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix
from .numerics import RngStream

__all__ = [
    "Constellation",
    "SchemeConfig",
    "CodewordBlock",
    "build_constellation",
    "encode",
    "transmit",
    "mld_detect",
    "count_bit_errors",
    "gray_code",
    "VBLAST",
    "ASTBC",
    "SISO",
]

VBLAST, ASTBC, SISO = "VBLAST", "ASTBC", "SISO"
PER_ANTENNA, TOTAL = "per-antenna", "total"
_QAM_ORDERS = (2, 4, 16, 64, 256, 1024, 4096)


def gray_code(n):
    """Binary-reflected Gray code of ``n`` (scalar or integer array)."""
    return n ^ (n >> 1)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    return np.bitwise_count(x).astype(np.int64)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-average-energy point set; ``points[label]`` carries bit label ``label``."""

    kind: str
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        q = pts.size
        if q < 2 or q & (q - 1):
            raise ValueError(f"constellation size must be a power of two >= 2, got {q}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def q(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return self.q.bit_length() - 1

    @property
    def bit_labels(self) -> list[str]:
        k = self.bits_per_symbol
        return [format(i, f"0{k}b") for i in range(self.q)]

    @property
    def name(self) -> str:
        return f"{self.q}-{self.kind}"

    def nearest(self, z: np.ndarray) -> np.ndarray:
        """Label of the nearest point to each entry of ``z``.

        Square QAM is sliced rail by rail; other sets are searched
        exhaustively with ties going to the lowest label.
        """
        z = np.asarray(z)
        if self.kind == "QAM" and self.q >= 4:
            side = math.isqrt(self.q)
            half_bits = side.bit_length() - 1
            scale = math.sqrt(2 * (self.q - 1) / 3)

            def rail(v):
                idx = np.rint((v * scale + (side - 1)) / 2)
                return gray_code(np.clip(idx, 0, side - 1).astype(np.int64))

            return (rail(z.real) << half_bits) | rail(z.imag)
        d = np.abs(z[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def __eq__(self, other):
        return (isinstance(other, Constellation) and self.kind == other.kind
                and np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash((self.kind, self.q))


def build_constellation(kind: str, q: int) -> Constellation:
    """Gray-labelled PSK or square QAM with unit average energy.

    PSK places label ``gray(k)`` at angle ``pi + 2*pi*k/q``, which puts
    label ``1`` at ``+1`` for BPSK. Square QAM uses a Gray-labelled PAM on
    each rail (in-phase bits first). ``QAM`` with ``q = 2`` is BPSK.
    """
    kind = kind.upper()
    q = int(q)
    if kind == "PSK":
        if q < 2 or q & (q - 1):
            raise ValueError(f"PSK order must be a power of two >= 2, got {q}")
        k = np.arange(q)
        pts = np.empty(q, dtype=complex)
        pts[gray_code(k)] = np.exp(1j * (np.pi + 2 * np.pi * k / q))
        if q == 2:
            pts = pts.real.astype(complex)
        elif q == 4:
            pts = np.round(pts.real) + 1j * np.round(pts.imag)
        return Constellation("PSK", pts)
    if kind == "QAM":
        if q not in _QAM_ORDERS:
            raise ValueError(f"unsupported QAM order {q}; choose from {_QAM_ORDERS}")
        if q == 2:
            return Constellation("QAM", build_constellation("PSK", 2).points)
        side = math.isqrt(q)
        half_bits = side.bit_length() - 1
        levels = 2 * np.arange(side) - (side - 1.0)
        pam = np.empty(side)
        pam[gray_code(np.arange(side))] = levels
        labels = np.arange(q)
        pts = pam[labels >> half_bits] + 1j * pam[labels & (side - 1)]
        pts /= math.sqrt(2 * (q - 1) / 3)
        return Constellation("QAM", pts)
    raise ValueError(f"unknown modulation kind {kind!r}; use PSK or QAM")


@dataclass(frozen=True)
class SchemeConfig:
    kind: str
    M: int
    N: int
    constellation: Constellation
    power: str = PER_ANTENNA

    def __post_init__(self):
        kind = self.kind.upper().replace("-", "")
        object.__setattr__(self, "kind", kind)
        if kind not in (VBLAST, ASTBC, SISO):
            raise ValueError(f"scheme kind must be VBLAST, ASTBC or SISO, got {self.kind!r}")
        if self.M < 1 or self.N < 1:
            raise ValueError(f"M and N must be >= 1, got M={self.M}, N={self.N}")
        if kind == ASTBC and self.M != 2:
            raise ValueError(f"ASTBC requires M=2, got M={self.M}")
        if kind == SISO and (self.M != 1 or self.N != 1):
            raise ValueError(f"SISO requires M=N=1, got M={self.M}, N={self.N}")
        if self.power not in (PER_ANTENNA, TOTAL):
            raise ValueError(f"power must be {PER_ANTENNA!r} or {TOTAL!r}, got {self.power!r}")

    @property
    def slots(self) -> int:
        return 2 if self.kind == ASTBC else 1

    @property
    def symbols_per_block(self) -> int:
        return 1 if self.kind == SISO else self.M

    @property
    def bits_per_block(self) -> int:
        return self.symbols_per_block * self.constellation.bits_per_symbol

    @property
    def bits_per_channel_use(self) -> float:
        return self.bits_per_block / self.slots

    @property
    def amplitude(self) -> float:
        """Per-antenna symbol scale: 1, or ``1/sqrt(M)`` under total-power normalization."""
        return 1.0 / math.sqrt(self.M) if self.power == TOTAL else 1.0

    @property
    def codebook_size(self) -> int:
        return self.constellation.q ** self.symbols_per_block

    def label(self) -> str:
        return self.kind


@dataclass(frozen=True, eq=False)
class CodewordBlock:
    """Transmit block: ``symbols`` is ``M x T``; ``bits`` the source bit string."""

    symbols: np.ndarray
    bits: str
    index: int = field(default=-1, compare=False)

    def __eq__(self, other):
        return (isinstance(other, CodewordBlock) and self.bits == other.bits
                and np.array_equal(self.symbols, other.symbols))

    def __hash__(self):
        return hash(self.bits)


def _labels_from_index(index, q: int, count: int) -> np.ndarray:
    """Base-q digits of ``index`` (first digit most significant) along a new last axis."""
    index = np.asarray(index)
    powers = q ** np.arange(count - 1, -1, -1)
    return (index[..., None] // powers) % q


def _block_symbols(scheme: SchemeConfig, labels: np.ndarray) -> np.ndarray:
    """Map label tuples ``(..., symbols_per_block)`` to transmit blocks ``(..., M, T)``."""
    pts = scheme.constellation.points[labels] * scheme.amplitude
    if scheme.kind == ASTBC:
        s1, s2 = pts[..., 0], pts[..., 1]
        out = np.empty(pts.shape[:-1] + (2, 2), dtype=complex)
        out[..., 0, 0] = s1
        out[..., 1, 0] = s2
        out[..., 0, 1] = -np.conj(s2)
        out[..., 1, 1] = np.conj(s1)
        return out
    return pts[..., None]


def codebook(scheme: SchemeConfig) -> np.ndarray:
    """All candidate blocks, shape ``(K, M, T)``, in enumeration order."""
    return _codebook_cached(scheme)


_CODEBOOKS: dict = {}


def _codebook_cached(scheme: SchemeConfig) -> np.ndarray:
    key = (scheme.kind, scheme.M, scheme.constellation.kind, scheme.constellation.q, scheme.power)
    cb = _CODEBOOKS.get(key)
    if cb is None:
        K = scheme.codebook_size
        labels = _labels_from_index(np.arange(K), scheme.constellation.q, scheme.symbols_per_block)
        cb = _block_symbols(scheme, labels)
        cb.setflags(write=False)
        _CODEBOOKS[key] = cb
    return cb


def block_from_index(scheme: SchemeConfig, index: int) -> CodewordBlock:
    q = scheme.constellation.q
    k = scheme.constellation.bits_per_symbol
    labels = _labels_from_index(index, q, scheme.symbols_per_block)
    bits = "".join(format(int(l), f"0{k}b") for l in labels)
    return CodewordBlock(_block_symbols(scheme, labels), bits, int(index))


def encode(scheme: SchemeConfig, bits: str) -> CodewordBlock:
    """Map a bit string to one transmit block.

    V-BLAST: ``M`` symbols in one slot. Alamouti: symbols ``(s1, s2)`` become
    ``[[s1, -conj(s2)], [s2, conj(s1)]]`` (rows = antennas, columns = slots).
    SISO: one symbol.
    """
    bits = "".join(str(b) for b in bits) if not isinstance(bits, str) else bits
    if len(bits) != scheme.bits_per_block or set(bits) - {"0", "1"}:
        raise ValueError(f"{scheme.kind} with {scheme.constellation.name} needs "
                         f"{scheme.bits_per_block} bits, got {bits!r}")
    return block_from_index(scheme, int(bits, 2))


def add_noise(signal: np.ndarray, snr: float, rng: RngStream) -> np.ndarray:
    """``signal + n`` with ``n ~ CN(0, 1/snr)`` per entry (real part drawn first)."""
    if not snr > 0:
        raise ValueError(f"snr must be > 0, got {snr}")
    if math.isinf(snr):
        return np.array(signal, dtype=complex)
    sigma = math.sqrt(0.5 / snr)
    noise = rng.generator.normal(0.0, sigma, signal.shape + (2,))
    return signal + (noise[..., 0] + 1j * noise[..., 1])


def transmit(block: CodewordBlock, H: ChannelMatrix, snr: float, rng: RngStream) -> np.ndarray:
    """Received ``N x T`` matrix ``H s + n``; ``H`` is held over the block's slots."""
    h = H.entries if isinstance(H, ChannelMatrix) else np.asarray(H)
    if h.shape[1] != block.symbols.shape[0]:
        raise ValueError(f"channel has {h.shape[1]} transmit columns but block has "
                         f"{block.symbols.shape[0]} antennas")
    return add_noise(h @ block.symbols, snr, rng)


def mld_metrics(y: np.ndarray, h: np.ndarray, scheme: SchemeConfig) -> np.ndarray:
    """``||y - H s||^2`` summed over slots, for every candidate in enumeration order."""
    cb = codebook(scheme)
    K, M, T = cb.shape
    hs = (h @ cb.transpose(1, 0, 2).reshape(M, K * T)).reshape(h.shape[0], K, T)
    return np.sum(np.abs(y[:, None, :] - hs) ** 2, axis=(0, 2))


def mld_detect(y, H: ChannelMatrix, scheme: SchemeConfig, counter: Counter | None = None) -> CodewordBlock:
    """Exhaustive maximum-likelihood detection with perfect CSIR.

    ``counter``, when given, is incremented by the number of per-slot
    metric evaluations (``q**M`` per V-BLAST slot, ``q**2`` per Alamouti
    block).
    """
    h = H.entries if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if y.ndim == 1:
        y = y[:, None]
    if h.shape != (scheme.N, scheme.M) or y.shape != (scheme.N, scheme.slots):
        raise ValueError(f"shape mismatch: H {h.shape}, y {y.shape} for "
                         f"{scheme.kind} {scheme.N}x{scheme.M}")
    metrics = mld_metrics(y, h, scheme)
    if counter is not None:
        counter["metric_evaluations"] += metrics.size
    return block_from_index(scheme, int(np.argmin(metrics)))


def count_bit_errors(sent: CodewordBlock, detected: CodewordBlock) -> int:
    """Hamming distance between the two blocks' bit strings."""
    if len(sent.bits) != len(detected.bits):
        raise ValueError("blocks carry different numbers of bits")
    return sum(a != b for a, b in zip(sent.bits, detected.bits))


# -- batched paths used by the Monte-Carlo engine ------------------------------

# Upper bound on trials x candidates x receivers held in memory at once.
_BATCH_ELEMENTS = 1 << 21


def detect_batch(y: np.ndarray, h: np.ndarray, scheme: SchemeConfig, exhaustive_limit: int = 4096) -> np.ndarray:
    """Candidate indices chosen by MLD for a batch.

    ``y`` is ``(B, N, T)`` and ``h`` is ``(B, N, M)``. V-BLAST and SISO are
    always searched exhaustively. Alamouti blocks whose codebook exceeds
    ``exhaustive_limit`` are detected through the orthogonal decomposition of
    the block metric, which minimizes the same quantity one symbol at a time.
    """
    if scheme.kind == ASTBC and scheme.codebook_size > exhaustive_limit:
        return _alamouti_decoupled(y, h, scheme)
    cb = codebook(scheme)
    K, M, T = cb.shape
    flat = cb.transpose(1, 0, 2).reshape(M, K * T)
    B, N = y.shape[0], y.shape[1]
    chunk = max(1, _BATCH_ELEMENTS // (K * N * T))
    out = np.empty(B, dtype=np.int64)
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        hs = (h[lo:hi] @ flat).reshape(hi - lo, N, K, T)
        d = y[lo:hi, :, None, :] - hs
        metric = np.sum(d.real ** 2 + d.imag ** 2, axis=(1, 3))
        out[lo:hi] = np.argmin(metric, axis=1)
    return out


def _alamouti_decoupled(y: np.ndarray, h: np.ndarray, scheme: SchemeConfig) -> np.ndarray:
    # ||Y - H S||^2 = ||H||_F^2 * a^2 * sum_i |s_i - z_i/(a ||H||_F^2)|^2 + const
    h1, h2 = h[:, :, 0], h[:, :, 1]
    y1, y2 = y[:, :, 0], y[:, :, 1]
    z1 = np.sum(np.conj(h1) * y1 + h2 * np.conj(y2), axis=1)
    z2 = np.sum(np.conj(h2) * y1 - h1 * np.conj(y2), axis=1)
    gain = np.sum(np.abs(h) ** 2, axis=(1, 2)) * scheme.amplitude
    const = scheme.constellation
    l1 = const.nearest(z1 / gain)
    l2 = const.nearest(z2 / gain)
    return l1 * const.q + l2


def bit_errors_batch(sent: np.ndarray, detected: np.ndarray, scheme: SchemeConfig) -> np.ndarray:
    """Per-trial Hamming distance between candidate indices' bit labels."""
    # Candidate index digits are symbol labels, so the index itself is the
    # concatenated bit string.
    return _popcount(np.bitwise_xor(sent.astype(np.uint64), detected.astype(np.uint64)))
