import csv
import subprocess
import sys

import numpy as np
import pytest

from entfeedback.cli import ConfigError, main, parse_grid, parse_initial, resolve


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], float)


def test_parse_grid_inclusive():
    assert np.allclose(parse_grid("-2:2:0.5"), np.arange(-2, 2.01, 0.5))
    assert np.allclose(parse_grid("0.4"), [0.4])
    with pytest.raises(ValueError):
        parse_grid("1:0:0.1")


def test_parse_initial_entries():
    rho = parse_initial(",".join(["0.25", "0", "0", "0", "0", "0.25", "0", "0",
                                  "0", "0", "0.25", "0", "0", "0", "0", "0.25"]))
    assert np.allclose(rho, np.eye(4) / 4)


def test_steady_state_singlet(tmp_path):
    out = tmp_path / "ss.csv"
    assert main(["steady-state", "--mode", "markovian", "--initial", "singlet",
                 "--omega", "0.4", "--lambda", "-0.8", "--out", str(out)]) == 0
    header, data = read_csv(out)
    row = dict(zip(header, data[0]))
    assert abs(row["C"] - 1) < 1e-10
    assert abs(row["R"]) < 1e-12
    assert (tmp_path / "ss.manifest.ini").exists()


def test_steady_state_solve_matches_analytic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["steady-state", "--mode", "markovian", "--initial", "00",
            "--omega", "0.3:0.5:0.1", "--lambda", "-0.5"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--method", "solve", "--out", str(b)]) == 0
    assert np.allclose(read_csv(a)[1], read_csv(b)[1], atol=1e-9)


def test_sweep_writes_optimum(tmp_path):
    out = tmp_path / "sw.csv"
    assert main(["sweep", "--mode", "markovian", "--initial", "00", "--quadrature", "y",
                 "--omega", "0.4", "--lambda", "-2:2:0.05", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert data.shape == (81, 4)
    _, opt = read_csv(tmp_path / "sw.optimum.csv")
    assert abs(opt[0, 1] - 0.31) < 0.02
    assert abs(opt[0, 2] + 0.8) < 1e-9


def test_trajectory_is_reproducible(tmp_path):
    args = ["trajectory", "--mode", "bayesian", "--initial", "10", "--omega", "1",
            "--lambda", "0.5", "--dt", "1e-3", "--t-final", "0.5", "--n-traj", "40",
            "--seed", "7", "--stride", "50"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--threads", "1", "--out", str(a)]) == 0
    assert main(args + ["--threads", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    header, data = read_csv(a)
    assert header[:3] == ["t", "C_mean_state", "C_mean_of_C"]
    assert data.shape[0] == 11


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[steady-state]\nmode = markovian\nomega = 1.0\nlambda = 0.2\n")
    cmd, raw, parsed = resolve(["steady-state", "--config", str(cfg), "--omega", "2"])
    assert parsed["mode"].value == "markovian"
    assert np.allclose(parsed["omega"], [2.0])
    assert np.allclose(parsed["lambda"], [0.2])


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[steady-state]\nn_traj = 5\n")
    with pytest.raises(ConfigError) as err:
        resolve(["steady-state", "--config", str(cfg)])
    assert err.value.key == "n_traj"


@pytest.mark.parametrize("argv, key", [
    (["sweep", "--mode", "none", "--lambda", "0.5"], "lambda"),
    (["trajectory", "--dt", "-1"], "dt"),
    (["steady-state", "--mode", "bayesian"], "mode"),
    (["sweep", "--initial", "bogus"], "initial"),
    (["trajectory", "--backend", "gpu"], "backend"),
])
def test_bad_values_exit_2_naming_key(argv, key, capsys, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "x.csv")]) == 2
    assert f"'{key}'" in capsys.readouterr().err


def test_numerical_failure_exits_3(tmp_path, capsys):
    code = main(["trajectory", "--mode", "bayesian", "--initial", "11", "--omega", "5",
                 "--lambda", "3", "--dt", "0.2", "--t-final", "20", "--n-traj", "4",
                 "--out", str(tmp_path / "t.csv")])
    assert code == 3
    assert "failed" in capsys.readouterr().err


def test_manifest_replays_run(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["sweep", "--mode", "markovian", "--initial", "10",
                 "--omega", "0:1:0.5", "--lambda", "-1:1:0.5", "--out", str(out)]) == 0
    first = out.read_bytes()
    out.unlink()
    assert main(["--config", str(tmp_path / "run.manifest.ini")]) == 0
    assert out.read_bytes() == first


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "entfeedback", "steady-state", "--omega", "0.4",
         "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert str(out) in proc.stdout
