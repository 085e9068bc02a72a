"""Command-line interface: ``turbosim <subcommand> [options]``.

Settings resolve as flags > ``--config`` file > built-in defaults. Every
command validates its whole configuration before touching ``--out`` and
writes a ``manifest.json`` next to its CSV (and SVG, with ``--svg``).

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import ber_asymptote, cr_closed_form, cr_general, cr_quadrature_bpsk, effective_cdf
from .channel import TurbulenceParams
from .config import ConfigError, RunConfig, load_config
from .montecarlo import (SimConfig, default_workers, empirical_effective_cdf, estimate_capacity,
                         estimate_pep, ladder_scheme, simulate_ber, throughput_at_fec)
from .numerics import QuadratureError, RngStream
from .report import ASYMPTOTE_COLUMNS, RunManifest, write_ber_csv, write_csv
from .signalchain import ASTBC, SISO, VBLAST, SchemeConfig, build_constellation, encode

log = logging.getLogger("turbosim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="INI-like config file with dotted keys")
    p.add_argument("--seed", type=int, metavar="U64", help="base seed (sim.seed)")
    p.add_argument("--workers", type=int, metavar="INT",
                   help="worker processes (sim.workers; default $TURBOSIM_WORKERS or 1)")
    p.add_argument("--out", metavar="DIR", default="turbosim-out", help="output directory")
    p.add_argument("--svg", action="store_true", help="also render an SVG figure from the CSV")
    p.add_argument("--power-normalization", choices=("per-antenna", "total"),
                   help="unit energy per antenna (default) or unit total transmit energy")
    p.add_argument("--alpha", help="large-scale eddy parameter(s), comma separated")
    p.add_argument("--beta", help="small-scale eddy parameter(s), comma separated")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turbosim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"turbosim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="BER curves by Monte-Carlo simulation")
    _common(p)
    p.add_argument("--max-trials", type=int)
    p.add_argument("--min-bit-errors", type=int)

    p = sub.add_parser("asymptote", help="asymptotic BER lines")
    _common(p)
    p.add_argument("--N", dest="N_list", help="receiver counts, comma separated")

    p = sub.add_parser("pep", help="Monte-Carlo pairwise error probability")
    _common(p)
    p.add_argument("--sent", help="sent bits per antenna, e.g. 1,1")
    p.add_argument("--target", help="competing bits per antenna, e.g. 0,0")
    p.add_argument("--trials", type=int)
    p.add_argument("--form", choices=("pairwise", "projected"))

    p = sub.add_parser("cdf", help="empirical vs analytic effective-radius cdf")
    _common(p)
    p.add_argument("--N", dest="N_list", help="receiver counts, comma separated")
    p.add_argument("--r", help="radii, comma separated")
    p.add_argument("--trials", type=int)
    p.add_argument("--method", choices=("direct", "factorized"))

    p = sub.add_parser("compare", help="throughput at the FEC limit: V-BLAST vs Alamouti vs SISO")
    _common(p)
    p.add_argument("--fec", type=float)
    p.add_argument("--unit-irradiance", action="store_true",
                   help="debug: capacity column with every irradiance fixed to 1")

    p = sub.add_parser("capacity", help="ergodic MIMO capacity")
    _common(p)
    p.add_argument("--M", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--unit-irradiance", action="store_true")

    p = sub.add_parser("cr", help="C_r by closed form, quadrature and Monte Carlo")
    _common(p)
    p.add_argument("--trials", type=int)
    return parser


def _overrides(args) -> dict:
    o = {
        "sim.seed": args.seed,
        "sim.workers": args.workers,
        "scheme.power": args.power_normalization,
        "channel.alpha": args.alpha,
        "channel.beta": args.beta,
        "output.svg": "true" if args.svg else None,
    }
    cmd = args.command
    g = lambda name: getattr(args, name, None)  # noqa: E731
    if cmd == "simulate":
        o["sim.max_trials"] = g("max_trials")
        o["sim.min_bit_errors"] = g("min_bit_errors")
    elif cmd == "asymptote":
        o["asymptote.N"] = g("N_list")
    elif cmd == "pep":
        o.update({"pep.sent": g("sent"), "pep.target": g("target"), "pep.trials": g("trials"),
                  "pep.form": g("form")})
    elif cmd == "cdf":
        o.update({"scheme.N": g("N_list"), "cdf.r": g("r"), "cdf.trials": g("trials"),
                  "cdf.method": g("method")})
    elif cmd == "compare":
        o["compare.fec"] = g("fec")
        if g("unit_irradiance"):
            o["capacity.unit_irradiance"] = "true"
    elif cmd == "capacity":
        o.update({"scheme.M": g("M"), "scheme.N": g("N"), "capacity.trials": g("trials")})
        if g("unit_irradiance"):
            o["capacity.unit_irradiance"] = "true"
    elif cmd == "cr":
        o["cr.trials"] = g("trials")
    return o


def resolve_config(args) -> RunConfig:
    file_values = load_config(args.config) if args.config else {}
    cfg = RunConfig.build(file_values, _overrides(args))
    if args.workers is None and "sim.workers" not in file_values:
        cfg.values["sim.workers"] = str(default_workers())
    return cfg


# -- validation helpers -----------------------------------------------------------

def _turbulence_list(cfg: RunConfig) -> list[TurbulenceParams]:
    alphas = cfg.float_list("channel.alpha")
    betas = cfg.float_list("channel.beta")
    out = []
    for a, b in itertools.product(alphas, betas):
        if not (a > 0 and math.isfinite(a)):
            raise ConfigError("channel.alpha", f"must be > 0, got {a}")
        if not (b > 0 and math.isfinite(b)):
            raise ConfigError("channel.beta", f"must be > 0, got {b}")
        out.append(TurbulenceParams(a, b))
    return out


def _schemes(cfg: RunConfig) -> list[SchemeConfig]:
    kinds = [k.upper().replace("-", "") for k in cfg.str_list("scheme.kind")]
    modulation = cfg.text("scheme.modulation").upper()
    power = cfg.text("scheme.power")
    out = []
    for kind, M, N, q in itertools.product(kinds, cfg.int_list("scheme.M", 1),
                                           cfg.int_list("scheme.N", 1), cfg.int_list("scheme.q", 2)):
        try:
            const = build_constellation(modulation, q)
        except ValueError as exc:
            raise ConfigError("scheme.q", str(exc)) from None
        if kind == SISO:
            M = N = 1
        try:
            s = SchemeConfig(kind, M, N, const, power)
        except ValueError as exc:
            key = "scheme.power" if "power" in str(exc) else "scheme.kind"
            raise ConfigError(key, str(exc)) from None
        if s not in out:
            out.append(s)
    return out


def _sim_common(cfg: RunConfig) -> dict:
    return {
        "max_trials": cfg.integer("sim.max_trials", 1),
        "min_bit_errors": cfg.integer("sim.min_bit_errors", 1),
        "seed": cfg.integer("sim.seed", 0),
        "workers": cfg.integer("sim.workers", 1),
        "block_trials": cfg.integer("sim.block_trials", 1),
    }


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig, manifest: RunManifest) -> None:
    grid = cfg.snr_grid()
    schemes = _schemes(cfg)
    params_list = _turbulence_list(cfg)
    common = _sim_common(cfg)
    svg = cfg.flag("output.svg")
    sims = [SimConfig(s, p, tuple(grid), **common) for s in schemes for p in params_list]
    out = _prepare_out(args)
    curves = []
    for sc in sims:
        log.info("simulating %s %dx%d q=%d alpha=%g beta=%g", sc.scheme.kind, sc.scheme.M,
                 sc.scheme.N, sc.scheme.constellation.q, sc.params.alpha, sc.params.beta)
        curves.append(simulate_ber(sc, progress=lambda pt: log.debug("  %s", pt)))
        manifest.fingerprints.append(curves[-1].fingerprint)
    csv_path = write_ber_csv(out / "ber.csv", curves)
    manifest.outputs.append(str(csv_path))
    if svg:
        from .plotting import render_ber_svg
        # overlay the asymptote for 2-Tx BPSK V-BLAST curves, where it applies
        pairs = sorted({(sc.params, sc.scheme.N) for sc in sims
                        if sc.scheme.kind == VBLAST and sc.scheme.M == 2 and sc.scheme.constellation.q == 2
                        and sc.params.alpha > 0.5 and sc.params.beta > 0.5},
                       key=lambda x: (x[0].alpha, x[0].beta, x[1]))
        asy_path = None
        if pairs:
            asy_path = write_csv(out / "asymptote.csv", ASYMPTOTE_COLUMNS,
                                 [row for p, N in pairs for row in _asymptote_rows(p, N, grid)])
            manifest.outputs.append(str(asy_path))
        manifest.outputs.append(str(render_ber_svg(csv_path, out / "ber.svg", asymptote_csv=asy_path,
                                                   min_bit_errors=1)))


def _asymptote_rows(p: TurbulenceParams, N: int, grid):
    model = ber_asymptote(cr_closed_form(p), N)
    return [(p.alpha, p.beta, N, model.coefficient, s, float(model.evaluate_db(s)), -model.slope)
            for s in grid]


def cmd_asymptote(args, cfg: RunConfig, manifest: RunManifest) -> None:
    grid = cfg.snr_grid()
    n_list = cfg.int_list("asymptote.N", 1)
    params_list = _turbulence_list(cfg)
    rows = [row for p in params_list for N in n_list for row in _asymptote_rows(p, N, grid)]
    out = _prepare_out(args)
    csv_path = write_csv(out / "asymptote.csv", ASYMPTOTE_COLUMNS, rows)
    manifest.outputs.append(str(csv_path))


def _bits_to_block(scheme: SchemeConfig, key: str, raw: list[int]):
    bits = "".join(format(v, f"0{scheme.constellation.bits_per_symbol}b") for v in raw)
    try:
        return encode(scheme, bits)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def cmd_pep(args, cfg: RunConfig, manifest: RunManifest) -> None:
    grid = cfg.snr_grid()
    params_list = _turbulence_list(cfg)
    schemes = [s for s in _schemes(cfg) if s.kind != ASTBC]
    if not schemes:
        raise ConfigError("scheme.kind", "pep supports VBLAST and SISO")
    trials = cfg.integer("pep.trials", 1)
    form = cfg.text("pep.form")
    if form not in ("pairwise", "projected"):
        raise ConfigError("pep.form", f"must be pairwise or projected, got {form!r}")
    sent_raw = cfg.int_list("pep.sent", 0)
    target_raw = cfg.int_list("pep.target", 0)
    common = _sim_common(cfg)
    jobs = []
    for s in schemes:
        sent = _bits_to_block(s, "pep.sent", sent_raw)
        target = _bits_to_block(s, "pep.target", target_raw)
        if sent == target:
            raise ConfigError("pep.target", "must differ from pep.sent")
        for p in params_list:
            jobs.append((SimConfig(s, p, tuple(grid), **common), sent, target))
    out = _prepare_out(args)
    rows = []
    for sc, sent, target in jobs:
        delta = (sent.symbols - target.symbols)[:, 0]
        nonzero = delta[delta != 0]
        model = None
        if (nonzero.size == 2 and np.allclose(np.abs(nonzero), 2.0)
                and sc.scheme.constellation.q == 2 and sc.params.beta > 0.5 and sc.params.alpha > 0.5):
            model = ber_asymptote(cr_closed_form(sc.params), sc.scheme.N)
        for est in estimate_pep(sc, sent, target, trials, form):
            rows.append((sc.scheme.kind, sc.scheme.M, sc.scheme.N, sc.params.alpha, sc.params.beta,
                         sent.bits, target.bits, est.snr_db, est.trials, est.events, est.probability,
                         est.std_error, "" if model is None else float(model.evaluate_db(est.snr_db))))
    header = ("scheme", "M", "N", "alpha", "beta", "sent", "target", "snr_db", "trials", "events",
              "pep", "std_error", "pep_asymptote")
    manifest.outputs.append(str(write_csv(out / "pep.csv", header, rows)))


def cmd_cdf(args, cfg: RunConfig, manifest: RunManifest) -> None:
    params_list = _turbulence_list(cfg)
    n_list = cfg.int_list("scheme.N", 1)
    r_grid = cfg.float_list("cdf.r")
    if any(r <= 0 for r in r_grid):
        raise ConfigError("cdf.r", "radii must be > 0")
    trials = cfg.integer("cdf.trials", 1)
    method = cfg.text("cdf.method")
    if method not in ("direct", "factorized"):
        raise ConfigError("cdf.method", f"must be direct or factorized, got {method!r}")
    if method == "factorized" and max(n_list) > 2:
        raise ConfigError("cdf.method", "factorized supports N <= 2; use direct")
    seed = cfg.integer("sim.seed", 0)
    out = _prepare_out(args)
    rows = []
    for k, (p, N) in enumerate(itertools.product(params_list, n_list)):
        cr = cr_closed_form(p)
        emp = empirical_effective_cdf(p, [2, 2], N, r_grid, trials, RngStream(seed, 3 << 56 | k), method)
        for r, e in zip(r_grid, emp):
            try:
                ana = effective_cdf(r, N, cr)
            except ValueError:
                ana = ""
            rows.append((p.alpha, p.beta, N, r, trials, e, ana))
    header = ("alpha", "beta", "N", "r", "trials", "empirical", "analytic")
    manifest.outputs.append(str(write_csv(out / "cdf.csv", header, rows)))


def cmd_compare(args, cfg: RunConfig, manifest: RunManifest) -> None:
    grid = cfg.snr_grid()
    params_list = _turbulence_list(cfg)
    if len(params_list) != 1:
        raise ConfigError("channel.alpha", "compare takes a single (alpha, beta) pair")
    params = params_list[0]
    M = cfg.int_list("scheme.M", 1)[0]
    N = cfg.int_list("scheme.N", 1)[0]
    if M != 2:
        raise ConfigError("scheme.M", "compare needs M=2 (Alamouti)")
    fec = cfg.number("compare.fec")
    if not 0 < fec <= 0.5:
        raise ConfigError("compare.fec", f"must lie in (0, 0.5], got {fec}")
    power = cfg.text("scheme.power")
    try:
        ladders = {
            VBLAST: [ladder_scheme(VBLAST, q, M, N, power) for q in cfg.int_list("compare.ladder", 2)],
            ASTBC: [ladder_scheme(ASTBC, q, M, N, power) for q in cfg.int_list("compare.ladder", 2)],
            SISO: [ladder_scheme(SISO, q, M, N, power) for q in cfg.int_list("compare.siso_ladder", 2)],
        }
    except ValueError as exc:
        raise ConfigError("compare.ladder", str(exc)) from None
    seed = cfg.integer("sim.seed", 0)
    workers = cfg.integer("sim.workers", 1)
    max_trials = cfg.integer("compare.max_trials", 1)
    block = cfg.integer("compare.block_trials", 1)
    min_err = cfg.integer("sim.min_bit_errors", 1)
    cap_trials = cfg.integer("capacity.trials", 10_000)
    unit = cfg.flag("capacity.unit_irradiance")
    cap_M = cfg.integer("capacity.M", 1) if cfg.text("capacity.M") else M
    cap_N = cfg.integer("capacity.N", 1) if cfg.text("capacity.N") else N
    svg = cfg.flag("output.svg")
    out = _prepare_out(args)
    res = throughput_at_fec(ladders, params, grid, fec, max_trials, min_err, seed, workers, block)
    cap = [_capacity_value(None if unit else params, cap_M, cap_N, s, cap_trials, seed, k, power, workers)
           for k, s in enumerate(grid)]
    rows = [(s, res.bits_per_use[VBLAST][k], res.bits_per_use[ASTBC][k], res.bits_per_use[SISO][k], cap[k])
            for k, s in enumerate(grid)]
    csv_path = write_csv(out / "compare.csv", ("snr_db", VBLAST, ASTBC, SISO, "capacity"), rows)
    manifest.outputs.append(str(csv_path))
    cross = res.interpolated_crossover_db(min_bit_errors=min_err)
    log.info("V-BLAST overtakes Alamouti at %s dB", "n/a" if cross is None else f"{cross:.2f}")
    if svg:
        from .plotting import render_compare_svg
        manifest.outputs.append(str(render_compare_svg(csv_path, out / "compare.svg")))


def _capacity_value(params, M, N, snr_db, trials, seed, k, power, workers) -> float:
    snr = 10.0 ** (snr_db / 10.0)
    return estimate_capacity(params, M, N, snr, trials, RngStream(seed, k), power, workers).mean


def cmd_capacity(args, cfg: RunConfig, manifest: RunManifest) -> None:
    grid = cfg.snr_grid()
    params = _turbulence_list(cfg)[0]
    M = cfg.int_list("scheme.M", 1)[0]
    N = cfg.int_list("scheme.N", 1)[0]
    trials = cfg.integer("capacity.trials", 10_000)
    unit = cfg.flag("capacity.unit_irradiance")
    seed = cfg.integer("sim.seed", 0)
    workers = cfg.integer("sim.workers", 1)
    power = cfg.text("scheme.power")
    svg = cfg.flag("output.svg")
    out = _prepare_out(args)
    rows = []
    for k, snr_db in enumerate(grid):
        est = estimate_capacity(None if unit else params, M, N, 10.0 ** (snr_db / 10.0), trials,
                                RngStream(seed, k), power, workers)
        rows.append((M, N, params.alpha, params.beta, snr_db, trials, est.mean, est.std_error))
    header = ("M", "N", "alpha", "beta", "snr_db", "trials", "capacity", "std_error")
    csv_path = write_csv(out / "capacity.csv", header, rows)
    manifest.outputs.append(str(csv_path))
    if svg:
        from .plotting import render_capacity_svg
        manifest.outputs.append(str(render_capacity_svg(csv_path, out / "capacity.svg")))


def cmd_cr(args, cfg: RunConfig, manifest: RunManifest) -> None:
    params_list = _turbulence_list(cfg)
    trials = cfg.integer("cr.trials", 10_000)
    seed = cfg.integer("sim.seed", 0)
    rows = []
    for k, p in enumerate(params_list):
        for value in (cr_closed_form(p), cr_quadrature_bpsk(p),
                      cr_general(p, [2, 2], trials, RngStream(seed, k))):
            rows.append((p.alpha, p.beta, value.method.value, value.value, value.std_error))
    out = _prepare_out(args)
    manifest.outputs.append(str(write_csv(out / "cr.csv", ("alpha", "beta", "method", "value", "std_error"), rows)))


COMMANDS = {
    "simulate": cmd_simulate,
    "asymptote": cmd_asymptote,
    "pep": cmd_pep,
    "cdf": cmd_cdf,
    "compare": cmd_compare,
    "capacity": cmd_capacity,
    "cr": cmd_cr,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        manifest = RunManifest(args.command, cfg.config_hash(), cfg.integer("sim.seed", 0),
                               started=RunManifest.now())
        COMMANDS[args.command](args, cfg, manifest)
    except QuadratureError as exc:
        print(f"turbosim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"turbosim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"turbosim: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest.finished = RunManifest.now()
    manifest.write(args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
