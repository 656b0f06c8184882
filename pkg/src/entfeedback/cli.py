"""Command-line front end.

Three commands write one CSV each plus a manifest next to it::

    entfeedback steady-state --mode markovian --initial 00 --omega 0.4 --lambda -0.8
    entfeedback trajectory --mode bayesian --initial 10 --omega 5 --lambda 1 --n-traj 500
    entfeedback sweep --mode markovian --initial 00 --omega 0:5:0.05 --lambda -2:2:0.05

Every option can also come from an INI file given by ``--config``: a
section named after the command holds ``key = value`` lines whose keys are
the long option names (``n-traj`` or ``n_traj``).  Flags override the file.
The manifest ``<out stem>.manifest.ini`` is such a file, with an extra
``[run]`` section, so ``entfeedback --config <manifest>`` repeats a run.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import math
import re
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .algebra import (
    InvalidStateError,
    check_density_matrix,
    conserved_R,
    ket_projector,
    singlet,
)
from .entanglement import concurrence
from .feedback import controller_from_mode
from .master import (
    AmbiguousSteadyStateError,
    IntegrationDivergedError,
    Mode,
    build_generator,
    steady_state,
    symmetric_stationary,
)
from .sweep import MCParams, sweep
from .trajectories import SCHEMES, StepInstabilityError, ensemble_average

COMMANDS = ("steady-state", "trajectory", "sweep")


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"invalid value for '{key}': {msg}")
        self.key = key


# option name -> (parser, default, commands)
def _float(s):
    return float(s)


def _int(s):
    return int(s)


def parse_grid(text):
    """Scalar ``"0.4"`` or inclusive grid ``"min:max:step"``."""
    text = str(text).strip()
    parts = text.split(":")
    if len(parts) == 1:
        return np.array([float(parts[0])])
    if len(parts) != 3:
        raise ValueError("expected a number or min:max:step")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise ValueError("grid needs step > 0 and max >= min")
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 12) + 0.0


PRESETS = {
    "00": lambda: ket_projector("00"),
    "11": lambda: ket_projector("11"),
    "10": lambda: ket_projector("10"),
    "01": lambda: ket_projector("01"),
    "singlet": singlet,
}


def parse_initial(text):
    """Named preset or 16 comma-separated complex entries in row-major order."""
    text = str(text).strip()
    if text in PRESETS:
        return PRESETS[text]()
    entries = [complex(p.replace(" ", "").replace("i", "j")) for p in text.split(",")]
    if len(entries) != 16:
        raise ValueError(f"expected a preset {sorted(PRESETS)} or 16 entries")
    rho = np.array(entries).reshape(4, 4)
    check_density_matrix(rho)
    return rho


def parse_quadrature(text):
    text = str(text).strip().lower()
    if text == "x":
        return 0.0
    if text == "y":
        return math.pi / 2
    return float(text)


def parse_mode(text):
    return Mode(str(text).strip().lower())


def parse_positive(kind):
    def f(s):
        v = kind(s)
        if v <= 0:
            raise ValueError("must be positive")
        return v
    return f


OPTIONS = {
    "mode": (parse_mode, "none", COMMANDS),
    "initial": (parse_initial, "00", COMMANDS),
    "omega": (parse_grid, "0.4", COMMANDS),
    "lambda": (parse_grid, "0", COMMANDS),
    "quadrature": (parse_quadrature, "x", COMMANDS),
    "method": (str, "analytic", ("steady-state",)),
    "dt": (parse_positive(float), "1e-4", ("trajectory", "sweep")),
    "t-final": (parse_positive(float), "10", ("trajectory", "sweep")),
    "n-traj": (parse_positive(int), "1000", ("trajectory", "sweep")),
    "seed": (_int, "0", ("trajectory", "sweep")),
    "stride": (parse_positive(int), "100", ("trajectory", "sweep")),
    "k": (parse_positive(int), "1", ("trajectory", "sweep")),
    "refine-step": (_float, "0.05", ("sweep",)),
    "threads": (parse_positive(int), "", ("trajectory", "sweep")),
    "backend": (str, _backend.DEFAULT, ("trajectory", "sweep")),
    "scheme": (str, "em", ("trajectory", "sweep")),
    "instability-tol": (parse_positive(float), "1.0", ("trajectory", "sweep")),
    "out": (str, "", COMMANDS),
}


def _build_parser():
    p = argparse.ArgumentParser(
        prog="entfeedback",
        description="Stationary entanglement of two driven qubits under feedback.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", default=None, help="INI file with a [%s] section" % cmd)
        for name, (_, default, cmds) in OPTIONS.items():
            if cmd in cmds:
                sp.add_argument(
                    f"--{name}", dest=name.replace("-", "_"), default=None,
                    help=f"default: {default or 'auto'}",
                )
    return p


def _read_config(path, command):
    cp = configparser.ConfigParser(interpolation=None)
    if not cp.read(path):
        raise ConfigError("config", f"cannot read {path}")
    if command is None:
        if not cp.has_option("run", "command"):
            raise ConfigError("command", "no command given and none in [run]")
        command = cp.get("run", "command")
    if command not in COMMANDS:
        raise ConfigError("command", f"unknown command {command!r}")
    values = {}
    if cp.has_section(command):
        for key, val in cp.items(command):
            name = key.replace("_", "-")
            if name not in OPTIONS or command not in OPTIONS[name][2]:
                raise ConfigError(key, f"not an option of {command}")
            values[name] = val
    return command, values


_NEGATIVE = re.compile(r"^-[0-9.]")


def _join_negative_values(argv):
    """Turn ``--lambda -2:2:0.1`` into ``--lambda=-2:2:0.1`` for argparse."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def resolve(argv):
    """Parse flags and config into ``(command, raw, parsed)``.

    ``raw`` holds the resolved strings (what the manifest records) and
    ``parsed`` the typed values.
    """
    argv = _join_negative_values(list(argv))
    if argv and argv[0] == "--config" and len(argv) >= 2:
        command, file_vals = _read_config(argv[1], None)
        argv = [command] + argv
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        raise SystemExit(2)
    command = args.command
    file_vals = {}
    if args.config:
        _, file_vals = _read_config(args.config, command)
    raw, parsed = {}, {}
    for name, (conv, default, cmds) in OPTIONS.items():
        if command not in cmds:
            continue
        flag = getattr(args, name.replace("-", "_"))
        val = flag if flag is not None else file_vals.get(name, default)
        raw[name] = str(val)
        if val == "" and name in ("threads", "out"):
            parsed[name] = None
            continue
        try:
            parsed[name] = conv(val)
        except (ValueError, InvalidStateError) as exc:
            raise ConfigError(name, f"{val!r} ({exc})") from None
    if command == "steady-state" and parsed["method"] not in ("analytic", "solve"):
        raise ConfigError("method", "expected analytic or solve")
    if "backend" in parsed and parsed["backend"] not in ("compiled", "python"):
        raise ConfigError("backend", "expected compiled or python")
    if "scheme" in parsed and parsed["scheme"] not in SCHEMES:
        raise ConfigError("scheme", f"expected one of {sorted(SCHEMES)}")
    if parsed["mode"] is Mode.NONE and np.any(parsed["lambda"] != 0):
        raise ConfigError("lambda", "mode none takes lambda 0")
    if command == "steady-state" and parsed["mode"] is Mode.BAYESIAN:
        raise ConfigError("mode", "Bayesian feedback has no stationary closed form")
    if command == "trajectory" and (len(parsed["omega"]) > 1 or len(parsed["lambda"]) > 1):
        raise ConfigError("omega", "trajectory takes scalar omega and lambda")
    if not raw["out"]:
        raw["out"] = f"{command}.csv"
        parsed["out"] = raw["out"]
    return command, raw, parsed


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _run_steady_state(p):
    rho0 = p["initial"]
    R0 = min(max(conserved_R(rho0), 0.0), 2.0)
    header = ["omega", "lambda", "R", "C"]
    header += [f"rho_{i}{j}_{part}" for i in range(4) for j in range(4) for part in ("re", "im")]
    rows = []
    for o in p["omega"]:
        for l in p["lambda"]:
            if p["method"] == "analytic":
                st = symmetric_stationary(o, l, p["mode"], R0, p["quadrature"])
            else:
                st = steady_state(rho0, build_generator(o, l, p["mode"], p["quadrature"]))
            rho = st.rho_inf
            c = concurrence(rho, on_negative="warn").value
            flat = np.column_stack([rho.real.ravel(), rho.imag.ravel()]).ravel()
            rows.append([o, l, st.R, c, *flat])
    _write_csv(p["out"], header, rows)
    return [p["out"]]


def _run_trajectory(p):
    ctl = controller_from_mode(p["mode"], p["lambda"][0], p["k"], p["quadrature"])
    res = ensemble_average(
        p["initial"], p["omega"][0], ctl, p["dt"], p["t-final"], p["n-traj"],
        p["seed"], stride=p["stride"], threads=p["threads"], backend=p["backend"],
        instability_tol=p["instability-tol"], scheme=p["scheme"],
    )
    rows = zip(res.times, res.mean_concurrence_of_mean, res.mean_of_concurrence,
               res.standard_error, res.mean_current)
    _write_csv(p["out"], ["t", "C_mean_state", "C_mean_of_C", "stderr", "I_mean"], rows)
    return [p["out"]]


def _run_sweep(p):
    mc = None
    if p["mode"] is Mode.BAYESIAN:
        mc = MCParams(
            dt=p["dt"], t_final=p["t-final"], n_traj=p["n-traj"], master_seed=p["seed"],
            stride=p["stride"], k=p["k"],
            refine_step=p["refine-step"] if p["refine-step"] > 0 else None,
            threads=p["threads"], backend=p["backend"], scheme=p["scheme"],
            instability_tol=p["instability-tol"],
        )
    res = sweep(p["mode"], p["initial"], p["omega"], p["lambda"], mc, p["quadrature"])
    rows = []
    for i, o in enumerate(res.omega_grid):
        for j, l in enumerate(res.lambda_grid):
            c = res.concurrence[i, j]
            if np.isnan(c):
                continue
            se = res.statistical_error[i, j] if res.statistical_error is not None else math.nan
            rows.append([o, l, c, se])
    _write_csv(p["out"], ["omega", "lambda", "C", "stderr"], rows)
    opt = _sibling(p["out"], "optimum.csv")
    _write_csv(opt, ["omega", "c_hat", "lambda_hat"],
               zip(res.omega_grid, res.c_hat, res.lambda_hat))
    return [p["out"], opt]


def _sibling(out, suffix):
    path = Path(out)
    return str(path.with_name(f"{path.stem}.{suffix}"))


def _write_manifest(command, raw, wall, outputs):
    cp = configparser.ConfigParser(interpolation=None)
    cp["run"] = {
        "command": command,
        "version": __version__,
        "seed": raw.get("seed", ""),
        "backend": raw.get("backend", ""),
        "wall_time_s": f"{wall:.3f}",
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "outputs": ", ".join(outputs),
    }
    cp[command] = raw
    path = _sibling(raw["out"], "manifest.ini")
    with open(path, "w") as fh:
        cp.write(fh)
    return path


RUNNERS = {
    "steady-state": _run_steady_state,
    "trajectory": _run_trajectory,
    "sweep": _run_sweep,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, raw, parsed = resolve(argv)
    except ConfigError as exc:
        print(f"entfeedback: {exc}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            outputs = RUNNERS[command](parsed)
    except (StepInstabilityError, IntegrationDivergedError,
            AmbiguousSteadyStateError, InvalidStateError, ValueError) as exc:
        print(f"entfeedback: {command} failed: {exc}", file=sys.stderr)
        return 3
    manifest = _write_manifest(command, raw, time.perf_counter() - start, outputs)
    for path in outputs + [manifest]:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
