import json
import os

import pytest

from asep2d import cli
from asep2d.errors import ParameterError


@pytest.mark.parametrize("cmd", ["simulate", "oracle", "resolvent", "kintegral", "kappa", "fit"])
def test_selftest(cmd, capsys):
    assert cli.run([cmd, "--selftest"]) == cli.EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


def test_lambda_grid_syntax():
    g = cli.parse_lambda_grid("1e-3:1e-8:log")
    assert len(g) == 6 and g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(1e-8)
    assert len(cli.parse_lambda_grid("1e-3:1e-8:log:11")) == 11
    assert cli.parse_lambda_grid("0.1,0.2") == [0.1, 0.2]
    with pytest.raises(ParameterError):
        cli.parse_lambda_grid("1e-3:1e-8:cubic")
    assert cli.parse_dims("4x6") == (4, 6) and cli.parse_dims("64") == (64, 64)


def test_oracle_outputs_and_manifest(tmp_path):
    out = tmp_path / "o"
    assert cli.run(["oracle", "--L", "3x3", "--k", "4", "--lambda", "0.1,1", "--out", str(out), "--report"]) == 0
    rows = (out / "oracle.csv").read_text().splitlines()
    assert rows[0] == "lambda,resolvent_value,residual" and len(rows) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["L"] == "3x3" and man["version"]
    assert man["checks"]["conservation_balance"] == 0.0
    assert (out / "oracle.png").stat().st_size > 0


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nN = 3\nalternate = true\n")
    out = tmp_path / "k"
    assert cli.run(["kappa", "--config", str(cfg), "--N", "2", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["N"] == "2" and man["config"]["alternate"] == "true"
    assert len((out / "kappa.csv").read_text().splitlines()) == 1 + 4


def test_equal_manifest_equal_output(tmp_path):
    args = ["simulate", "--L", "8", "--rho", "0.5", "--t-max", "2", "--replicas", "8", "--seed", "3"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(args + ["--out", str(a)]) in (0, cli.EXIT_CHECK)
    assert cli.run(args + ["--out", str(b)]) in (0, cli.EXIT_CHECK)
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    ma["config"].pop("out"), mb["config"].pop("out")
    assert ma == mb
    assert (a / "diffusivity.csv").read_bytes() == (b / "diffusivity.csv").read_bytes()


def test_fit_roundtrip(tmp_path):
    import numpy as np

    src = tmp_path / "vals.csv"
    lam = np.logspace(-3, -9, 7)
    src.write_text("lambda,value\n" + "".join(f"{float(l)!r},{float(abs(np.log(l)) ** 0.5)!r}\n" for l in lam))
    out = tmp_path / "f"
    assert cli.run(["fit", "--input", str(src), "--out", str(out), "--min-decades", "5"]) == 0
    line = (out / "fit.csv").read_text().splitlines()[1]
    assert float(line.split(",")[0]) == pytest.approx(0.5, abs=1e-9)


def test_exit_codes(tmp_path):
    assert cli.run(["nosuch"]) == cli.EXIT_USAGE
    assert cli.run([]) == cli.EXIT_USAGE
    assert cli.run(["kintegral", "--kappa", "3", "--out", str(tmp_path / "x")]) == cli.EXIT_PARAM
    assert cli.run(["fit", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "y")]) == cli.EXIT_IO
    assert cli.run(["oracle", "--L", "6x6", "--cap", "100", "--out", str(tmp_path / "z")]) == cli.EXIT_CAPACITY
    assert cli.run(["kintegral", "--radial-cells", "4", "--out", str(tmp_path / "w")]) == cli.EXIT_REFINEMENT
    assert cli.run(["kappa", "--bogus", "1"]) == cli.EXIT_USAGE


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nonsense = 1\n")
    assert cli.run(["kappa", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_PARAM


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.run(["kappa", "--out", str(blocker / "sub")]) == cli.EXIT_IO
