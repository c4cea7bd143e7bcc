import numpy as np
import pytest

from mpnehari import cli
from mpnehari.config import ConfigError, load_config, parse_config
from mpnehari.exprlang import ExprSyntaxError
from mpnehari.presets import PRESETS
from mpnehari.spaces import validate

PRESET_CFG = """
[grid]
n = {n}

[exponents]
preset = section4

[run]
lambda = 1e-4
seed = 0
"""

BAD_ORDER = """
[grid]
dim = 1
n = 41
box = 0, 1

[exponents]
p = "3+absx"
q = "2"
r = "3.5"
s = "5"
beta = "0.5"
alpha = "2"
gamma = "2"
mu1 = "0"
mu2 = "0"
m1 = "1"
m2 = "1"

[run]
lambda = 1e-4
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(argv):
    return cli.main([str(a) for a in argv])


def test_preset_expansion():
    cfg = parse_config(PRESET_CFG.format(n=9))
    ex = PRESETS["section4"]["exponents"]
    assert cfg.exponents["p"] == ex["p"] == "2+absx/3"
    assert ex["s"] == "4.8+sin(3.141592653589793*absx*absx)"
    assert cfg.dim == 3 and cfg.domain == "chi_ball(0,0,0,1)" and cfg.box == (-1.0, 1.0)
    assert validate(cfg.exponent_set()).ok


def test_default_n():
    assert parse_config("[exponents]\npreset = section4\n").n == 33


def test_bad_order_loads_but_fails_validation():
    cfg = parse_config(BAD_ORDER)
    rep = validate(cfg.exponent_set())
    assert not rep.ok and "H1" in rep.failed


@pytest.mark.parametrize("text,key", [
    ("[exponents]\npreset = section4\np = 2\n", "exponents.p"),
    ("[exponents]\npreset = nope\n", "exponents.preset"),
    ("[exponents]\npreset = section4\n[grid]\ndim = 2\n", "grid.dim"),
    ("[exponents]\npreset = section4\n[grid]\nbox = 0, 1\n", "grid.box"),
    ("[exponents]\npreset = section4\n[grid]\nn = two\n", "grid.n"),
    ("[exponents]\npreset = section4\n[solver]\nbogus = 1\n", "solver.bogus"),
    ("[exponents]\npreset = section4\n[solver]\ngrad_tol = -1\n", "solver"),
    ("[exponents]\npreset = section4\n[extra]\n", "extra"),
    ("[exponents]\np = 2\n", "exponents.q"),
])
def test_config_errors(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == key


def test_expression_error_propagates():
    with pytest.raises(ExprSyntaxError):
        parse_config(BAD_ORDER.replace('"3+absx"', '"3+*absx"'))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    assert run(["validate", tmp_path / "absent.ini", "-o", tmp_path / "out"]) == cli.EXIT_CONFIG


def test_solver_section(tmp_path):
    cfg = parse_config(PRESET_CFG.format(n=9) + "[solver]\nbattery_size = 2\neps_x = 0.01\n"
                       "preconditioned = no\n")
    assert cfg.solver.battery_size == 2 and cfg.solver.reg.eps_x == 0.01
    assert cfg.solver.preconditioned is False


def test_validate_command(tmp_path, capsys):
    cfg = write(tmp_path, PRESET_CFG.format(n=33))
    out = tmp_path / "out"
    assert run(["validate", cfg, "-o", out]) == cli.EXIT_OK
    text = (out / "validate.txt").read_text()
    assert text == capsys.readouterr().out
    assert "p_min=2.0" in text and "s_max=5.8" in text and "beta_max=0.9" in text
    assert "lambda_star_analytic=" in text
    assert (out / "manifest.txt").exists()


def test_validate_bad_order_exit_3(tmp_path):
    cfg = write(tmp_path, BAD_ORDER)
    assert run(["validate", cfg, "-o", tmp_path / "o"]) == cli.EXIT_HYPOTHESIS
    assert run(["solve", cfg, "-o", tmp_path / "o"]) == cli.EXIT_HYPOTHESIS


def test_fibering_command(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9))
    out = tmp_path / "fib"
    assert run(["fibering", cfg, "--direction", "1-absx*absx", "--lambda", "1e-4", "-o", out]) == 0
    rows = (out / "fibering.csv").read_text().splitlines()
    assert rows[0] == "t,phi,phi1" and rows[1].startswith("0.0,0.0,")
    assert "n_roots=2" in (out / "roots.txt").read_text()


def test_fibering_zero_direction(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9))
    assert run(["fibering", cfg, "--direction", "0", "-o", tmp_path / "z"]) == cli.EXIT_SOLVER


def test_fibering_bad_expression(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9))
    assert run(["fibering", cfg, "--direction", "1-", "-o", tmp_path / "z"]) == cli.EXIT_CONFIG


def test_solve_and_manifest(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9) + "[solver]\nbattery_size = 2\n")
    out = tmp_path / "solve"
    assert run(["solve", cfg, "-o", out]) == 0
    for name in ("report.txt", "u_plus.csv", "u_minus.csv", "runlog_plus.csv", "runlog_minus.csv",
                 "manifest.txt"):
        assert (out / name).exists()
    report = dict(line.split("=", 1) for line in (out / "report.txt").read_text().splitlines()
                  if "=" in line)
    assert float(report["m_plus"]) < 0 < float(report["m_minus"])
    manifest = (out / "manifest.txt").read_text()
    assert "seed=0" in manifest and "tol_root=1e-09" in manifest and "solver.battery_size=2" in manifest


def test_solve_solver_failure_exit_4(tmp_path):
    # admissible exponents, but no singular forcing: the M+ branch is empty
    text = (BAD_ORDER.replace("dim = 1", "dim = 3").replace("n = 41", "n = 9")
            .replace("box = 0, 1", 'box = -1, 1\ndomain = "chi_ball(0,0,0,1)"')
            .replace('"3+absx"', '"2"').replace('q = "2"', 'q = "2.5"').replace('r = "3.5"', 'r = "3"')
            .replace('s = "5"', 's = "4"').replace('m2 = "1"', 'm2 = "0"'))
    cfg = write(tmp_path, text + "[solver]\nbattery_size = 1\n")
    assert run(["validate", cfg, "-o", tmp_path / "v"]) == 0
    assert run(["solve", cfg, "--lambda", "0", "-o", tmp_path / "s"]) == cli.EXIT_SOLVER


def test_solve_without_lambda(tmp_path):
    cfg = write(tmp_path, "[grid]\nn = 9\n[exponents]\npreset = section4\n")
    assert run(["solve", cfg, "-o", tmp_path / "s"]) == cli.EXIT_CONFIG


def test_sweep_command(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9) + "lambdas = 1e-5, 1e-4\n[solver]\nbattery_size = 1\n")
    out = tmp_path / "sweep"
    assert run(["sweep", cfg, "-o", out]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("lambda,m_plus") and len(rows) == 3
    assert run(["sweep", cfg, "--lambdas", "1e-3,1e-4", "-o", out]) == cli.EXIT_CONFIG


def test_hardy_command(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9))
    out = tmp_path / "hardy"
    assert run(["hardy", cfg, "--battery", "6", "--estimator", "6", "-o", out]) == 0
    rows = (out / "hardy.csv").read_text().splitlines()
    assert rows[0] == cli.HARDY_HEADER and len(rows) == 7
    assert "failed=0" in (out / "hardy_summary.txt").read_text()


def test_output_directory_resolution(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    cfg = write(tmp_path, PRESET_CFG.format(n=9))
    assert run(["validate", cfg]) == 0
    assert (tmp_path / "env" / "validate.txt").exists()
    cfg2 = write(tmp_path, PRESET_CFG.format(n=9) + f"output = {tmp_path / 'cfgout'}\n", "b.ini")
    assert run(["validate", cfg2]) == 0
    assert (tmp_path / "cfgout" / "validate.txt").exists()


def test_manifest_reproducible(tmp_path):
    cfg = write(tmp_path, PRESET_CFG.format(n=9))
    run(["validate", cfg, "-o", tmp_path / "a"])
    run(["validate", cfg, "-o", tmp_path / "a"])
    first = (tmp_path / "a" / "manifest.txt").read_text()
    run(["validate", cfg, "-o", tmp_path / "a"])
    assert (tmp_path / "a" / "manifest.txt").read_text() == first


@pytest.mark.parametrize("name", ["section4.ini", "custom.ini"])
def test_shipped_configs_validate(name, tmp_path):
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / name
    cfg = load_config(path)
    cfg.n = 9
    assert validate(cfg.exponent_set()).ok
