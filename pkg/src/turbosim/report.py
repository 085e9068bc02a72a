"""CSV emission/parsing and run manifests.

CSV files are UTF-8 with LF line endings; floats are written with
``repr`` (shortest round-trip decimal) so parsing reproduces the exact values.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .montecarlo import BerCurve, BerPoint

__all__ = [
    "BER_COLUMNS",
    "ASYMPTOTE_COLUMNS",
    "CurveKey",
    "fmt",
    "write_csv",
    "read_csv",
    "ber_rows",
    "write_ber_csv",
    "read_ber_csv",
    "RunManifest",
]

BER_COLUMNS = ("scheme", "M", "N", "alpha", "beta", "q", "snr_db", "trials", "bit_errors",
               "ber", "ci_low", "ci_high")
ASYMPTOTE_COLUMNS = ("alpha", "beta", "N", "coefficient", "snr_db", "ber_asymptote", "slope")


def fmt(value) -> str:
    """Cell text: ints as-is, floats as shortest round-trip decimal."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return p


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class CurveKey:
    scheme: str
    M: int
    N: int
    alpha: float
    beta: float
    q: int

    def label(self) -> str:
        return (f"{self.scheme} {self.M}x{self.N} {self.q}-ary "
                f"(alpha={self.alpha:g}, beta={self.beta:g})")


def curve_key(curve: BerCurve) -> CurveKey:
    s, p = curve.scheme, curve.params
    return CurveKey(s.kind, s.M, s.N, p.alpha, p.beta, s.constellation.q)


def ber_rows(curves: Sequence[BerCurve]):
    for curve in curves:
        k = curve_key(curve)
        for pt in curve.points:
            yield (k.scheme, k.M, k.N, k.alpha, k.beta, k.q, pt.snr_db, pt.trials, pt.bit_errors,
                   pt.ber, pt.ci95[0], pt.ci95[1])


def write_ber_csv(path: str | Path, curves: Sequence[BerCurve]) -> Path:
    return write_csv(path, BER_COLUMNS, ber_rows(curves))


def _bits_per_trial(scheme: str, M: int, q: int) -> int:
    k = q.bit_length() - 1
    return {"VBLAST": M * k, "ASTBC": 2 * k, "SISO": k}[scheme]


def read_ber_csv(path: str | Path) -> dict[CurveKey, list[BerPoint]]:
    """Parse a BER CSV back into points grouped by curve, in file order."""
    out: dict[CurveKey, list[BerPoint]] = {}
    for row in read_csv(path):
        key = CurveKey(row["scheme"], int(row["M"]), int(row["N"]), float(row["alpha"]),
                       float(row["beta"]), int(row["q"]))
        pt = BerPoint(float(row["snr_db"]), int(row["trials"]), int(row["bit_errors"]),
                      _bits_per_trial(key.scheme, key.M, key.q), float(row["ber"]),
                      (float(row["ci_low"]), float(row["ci_high"])))
        out.setdefault(key, []).append(pt)
    return out


@dataclass
class RunManifest:
    command: str
    config_hash: int
    seed: int
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    fingerprints: list[str] = field(default_factory=list)

    @staticmethod
    def now() -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def write(self, out_dir: str | Path) -> Path:
        p = Path(out_dir) / "manifest.json"
        payload = {
            "command": self.command,
            "config_hash": f"{self.config_hash:016x}",
            "seed": self.seed,
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
            "fingerprints": self.fingerprints,
        }
        p.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return p
