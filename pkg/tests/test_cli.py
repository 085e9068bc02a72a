import json
import math
import subprocess
import sys

import pytest

from turbosim import cli
from turbosim.asymptotics import cr_closed_form
from turbosim.channel import TurbulenceParams
from turbosim.numerics import QuadratureError
from turbosim.report import read_ber_csv, read_csv


def _cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL_SIM = """
[scheme]
kind = VBLAST
M = 2
N = 1,2
[sim]
snr_grid = 0, 6, 12
max_trials = 8192
min_bit_errors = 50
block_trials = 2048
"""


def test_simulate_writes_csv_svg_manifest(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", _cfg(tmp_path, SMALL_SIM), "--out", str(out), "--svg"]) == 0
    curves = read_ber_csv(out / "ber.csv")
    assert len(curves) == 2 and all(len(p) == 3 for p in curves.values())
    assert (out / "ber.svg").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and len(man["fingerprints"]) == 2
    assert man["started"] and man["finished"]


def test_simulate_rerun_and_workers_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, SMALL_SIM)
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    assert (tmp_path / "a/ber.csv").read_bytes() == (tmp_path / "b/ber.csv").read_bytes()
    ha = json.loads((tmp_path / "a/manifest.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "b/manifest.json").read_text())["config_hash"]
    assert ha == hb


def test_flags_override_file(tmp_path):
    cfg = _cfg(tmp_path, SMALL_SIM + "sim.seed = 5\n")
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "9"])
    assert json.loads((tmp_path / "a/manifest.json").read_text())["seed"] == 9


def test_empty_grid_is_config_error_without_outputs(tmp_path, capsys):
    out = tmp_path / "never"
    rc = cli.main(["simulate", "--config", _cfg(tmp_path, "sim.snr_grid =\n"), "--out", str(out)])
    assert rc == 2
    assert "sim.snr_grid" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("text,key", [("channel.alpha = -1\n", "channel.alpha"),
                                      ("scheme.q = 3\n", "scheme.q"),
                                      ("wrong.key = 1\n", "wrong.key"),
                                      ("scheme.power = half\n", "scheme.power")])
def test_config_errors_name_the_key(tmp_path, capsys, text, key):
    rc = cli.main(["simulate", "--config", _cfg(tmp_path, text), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert key in capsys.readouterr().err


def test_gamma_domain_error_exit_code(tmp_path):
    assert cli.main(["asymptote", "--beta", "0.4", "--out", str(tmp_path / "o")]) == 2


def test_quadrature_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise QuadratureError("did not converge")
    monkeypatch.setattr(cli, "cr_quadrature_bpsk", boom)
    assert cli.main(["cr", "--trials", "10000", "--out", str(tmp_path / "o")]) == 3


def test_asymptote_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["asymptote", "--N", "1,2", "--out", str(out),
                     "--config", _cfg(tmp_path, "sim.snr_grid = 10, 20\n")]) == 0
    rows = read_csv(out / "asymptote.csv")
    c = cr_closed_form(TurbulenceParams(4, 2)).value
    n1 = [r for r in rows if r["N"] == "1"]
    assert float(n1[0]["coefficient"]) == pytest.approx(c / 4, rel=1e-14)
    assert all(int(r["slope"]) == -int(r["N"]) for r in rows)
    n2 = [r for r in rows if r["N"] == "2"][1]
    assert float(n2["ber_asymptote"]) == pytest.approx(c * c * 3 / 16 * 1e-4, rel=1e-13)


def test_cr_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["cr", "--trials", "200000", "--alpha", "3", "--beta", "1.5", "--out", str(out)]) == 0
    rows = read_csv(out / "cr.csv")
    vals = {r["method"]: (float(r["value"]), float(r["std_error"])) for r in rows}
    assert vals["CLOSED_FORM"][0] == pytest.approx(135 / 256, rel=1e-13)
    assert vals["QUADRATURE_1D"][0] == pytest.approx(135 / 256, rel=1e-8)
    v, se = vals["MONTE_CARLO_GENERAL"]
    assert abs(v - 135 / 256) < 4 * se


def test_pep_csv(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(tmp_path, "sim.snr_grid = 10, 14\n")
    assert cli.main(["pep", "--config", cfg, "--trials", "100000", "--out", str(out)]) == 0
    rows = read_csv(out / "pep.csv")
    assert [r["sent"] + ">" + r["target"] for r in rows] == ["11>00"] * 2
    assert all(float(r["pep_asymptote"]) > 0 for r in rows)
    assert cli.main(["pep", "--config", cfg, "--target", "1,1", "--out", str(tmp_path / "x")]) == 2


def test_cdf_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["cdf", "--N", "1", "--r", "0.1,5", "--trials", "100000", "--out", str(out)]) == 0
    rows = read_csv(out / "cdf.csv")
    assert rows[0]["analytic"] != "" and rows[1]["analytic"] == ""
    assert float(rows[1]["empirical"]) == 1.0


def test_capacity_unit_irradiance_scalar(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(tmp_path, "sim.snr_grid = 0, 10\n")
    assert cli.main(["capacity", "--M", "1", "--N", "1", "--unit-irradiance", "--trials", "10000",
                     "--config", cfg, "--out", str(out)]) == 0
    for r in read_csv(out / "capacity.csv"):
        snr = 10 ** (float(r["snr_db"]) / 10)
        assert abs(float(r["capacity"]) - math.log2(1 + snr)) < 1e-12


def test_compare_vacuous_fec_and_debug_capacity(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(tmp_path, """
sim.snr_grid = 0, 10
compare.ladder = 2, 4
compare.siso_ladder = 4, 16
compare.max_trials = 2048
compare.block_trials = 1024
capacity.trials = 10000
capacity.M = 1
capacity.N = 1
""")
    assert cli.main(["compare", "--config", cfg, "--fec", "0.5", "--unit-irradiance", "--out", str(out),
                     "--svg"]) == 0
    rows = read_csv(out / "compare.csv")
    assert list(rows[0]) == ["snr_db", "VBLAST", "ASTBC", "SISO", "capacity"]
    for r in rows:
        assert (r["VBLAST"], r["ASTBC"], r["SISO"]) == ("4.0", "4.0", "4.0")
        snr = 10 ** (float(r["snr_db"]) / 10)
        assert abs(float(r["capacity"]) - math.log2(1 + snr)) < 1e-12
    assert (out / "compare.svg").exists()


def test_env_workers_default(tmp_path, monkeypatch):
    monkeypatch.setenv("TURBOSIM_WORKERS", "2")
    args = cli.build_parser().parse_args(["simulate", "--out", str(tmp_path)])
    assert cli.resolve_config(args).integer("sim.workers") == 2
    args = cli.build_parser().parse_args(["simulate", "--workers", "1", "--out", str(tmp_path)])
    assert cli.resolve_config(args).integer("sim.workers") == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "turbosim", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("turbosim ")
