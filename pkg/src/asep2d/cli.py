"""Command line front end.

Each subcommand reads an optional ``key=value`` config file, lets flags
override it, writes a CSV (17 significant digits), a JSON manifest echoing
the resolved configuration, and with ``--report`` PNG figures next to them.
"""

import argparse
import csv
import json
import os
import sys
import warnings
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import CapacityError, NumericalError, ParameterError, RangeError, RefinementError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARAM = 3
EXIT_IO = 4
EXIT_CHECK = 5
EXIT_NUMERICAL = 6
EXIT_CAPACITY = 7
EXIT_REFINEMENT = 8

FLOAT_FMT = "%.17g"


class CheckFailure(Exception):
    """An invariant check failed after the computation finished."""


# -- parsing helpers --------------------------------------------------------------


def parse_lambda_grid(text):
    """'1e-3:1e-8:log' (one point per decade), '1e-3:1e-8:log:11', or 'a,b,c'."""
    text = str(text).strip()
    if ":" not in text:
        vals = [float(v) for v in text.split(",") if v]
    else:
        parts = text.split(":")
        if len(parts) not in (3, 4) or parts[2] not in ("log", "lin"):
            raise ParameterError(f"bad grid {text!r}; use start:stop:log[:count]")
        a, b = float(parts[0]), float(parts[1])
        if parts[2] == "log":
            if a <= 0 or b <= 0:
                raise ParameterError("log grids need positive endpoints")
            count = int(parts[3]) if len(parts) == 4 else int(round(abs(np.log10(b / a)))) + 1
            vals = list(np.logspace(np.log10(a), np.log10(b), max(count, 1)))
        else:
            count = int(parts[3]) if len(parts) == 4 else 11
            vals = list(np.linspace(a, b, count))
    if not vals:
        raise ParameterError("empty grid")
    return vals


def parse_dims(text):
    """'4x4' -> (4, 4); '64' -> (64, 64)."""
    text = str(text).lower()
    if "x" in text:
        a, b = text.split("x")
        return int(a), int(b)
    return int(text), int(text)


def read_config(path):
    cfg = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParameterError(f"{path}:{lineno}: expected key=value")
                k, v = line.split("=", 1)
                cfg[k.strip().replace("-", "_")] = v.strip()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    return cfg


def _bool(v):
    if isinstance(v, bool):
        return v
    return str(v).lower() in ("1", "true", "yes", "on")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([FLOAT_FMT % v if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_manifest(path, command, config, outputs, checks):
    clean = {k: (v if isinstance(v, (int, float, str, bool, type(None), list)) else str(v))
             for k, v in sorted(config.items())}
    doc = {"command": command, "version": __version__, "config": clean,
           "outputs": sorted(os.path.basename(p) for p in outputs), "checks": checks}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
    return path


# -- subcommands --------------------------------------------------------------------


def cmd_simulate(cfg, out):
    from .observables import (diffusivity_from_moments, diffusivity_green_kubo,
                              measure_structure_function, run_ensemble)

    Lx, Ly = parse_dims(cfg["L"])
    t_max, dt = float(cfg["t_max"]), float(cfg["dt"])
    if t_max <= 0 or dt <= 0:
        raise ParameterError("t_max and dt must be positive")
    t_grid = np.arange(0.0, t_max + 0.5 * dt, dt)
    rates = (float(cfg["rate_right"]), 0.5, 0.5)
    run = run_ensemble(Lx, Ly, float(cfg["rho"]), t_grid, int(cfg["replicas"]), seed=int(cfg["seed"]),
                       canonical=_bool(cfg["canonical"]), rates=rates)
    corr = measure_structure_function(run)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mom = diffusivity_from_moments(corr)
    gk = diffusivity_green_kubo(run)
    rows = list(zip(mom.t_grid, mom.D11, mom.D11_err, gk.D11, gk.D11_err, mom.velocity, mom.velocity_err))
    files = [write_csv(os.path.join(out, "diffusivity.csv"),
                       ["t", "D11_moments", "err", "D11_gk", "err_gk", "v1", "v1_err"], rows)]
    if _bool(cfg["write_S"]):
        X1, X2 = corr.displacements()
        srows = []
        for i, t in enumerate(corr.t_grid):
            for a, b, s in zip(X1.ravel(), X2.ravel(), corr.values[i].ravel()):
                srows.append((int(a), int(b), float(t), float(s)))
        files.append(write_csv(os.path.join(out, "structure.csv"), ["x1", "x2", "t", "S"], srows))
    total, total_err = corr.total()
    chi = corr.chi
    sum_rule = bool(np.all(np.abs(total - chi) <= 3 * total_err + 1e-12))
    checks = {"compressibility_sum_rule": sum_rule, "flags": mom.flags + [str(w.message) for w in caught]}
    if abs(float(cfg["rho"]) - 0.5) < 1e-12:
        first, first_err = corr.first_moment()
        checks["first_moment_sum_rule"] = bool(np.all(np.abs(first) <= 3 * first_err + 1e-12))
    if _bool(cfg["report"]):
        from .plotting import plot_diffusivity

        files.append(plot_diffusivity(os.path.join(out, "diffusivity.png"), mom.t_grid, mom.D11,
                                      mom.D11_err, gk.D11, gk.D11_err))
    ok = checks["compressibility_sum_rule"] and checks.get("first_moment_sum_rule", True)
    return files, checks, ok


def cmd_oracle(cfg, out):
    from .oracle import build_generator, conservation_residuals, exact_resolvent, stationarity_residuals

    Lx, Ly = parse_dims(cfg["L"])
    k = int(cfg["k"]) if cfg.get("k") not in (None, "") else Lx * Ly // 2
    gen = build_generator(Lx, Ly, k, cap=int(float(cfg["cap"])))
    rows_res, cols_res = stationarity_residuals(gen)
    cons = conservation_residuals(gen)
    lams = parse_lambda_grid(cfg["lambda"])
    rows = []
    for lam in lams:
        r = exact_resolvent(gen, lam, tol=float(cfg["tol"]))
        rows.append((lam, r.value, r.residual))
    files = [write_csv(os.path.join(out, "oracle.csv"), ["lambda", "resolvent_value", "residual"], rows)]
    vals = [r[1] for r in rows]
    order = np.argsort(lams)
    monotone = bool(np.all(np.diff(np.asarray(vals)[order]) <= 1e-12 * max(vals)))
    checks = {"states": gen.size, "row_sum_max": rows_res, "column_sum_max": cols_res,
              "conservation_balance": cons["balance"], "conservation_literal_form": cons["literal"],
              "decreasing_in_lambda": monotone}
    if _bool(cfg["report"]) and len(rows) > 1:
        from .plotting import plot_series

        files.append(plot_series(os.path.join(out, "oracle.png"), lams, [vals], [""], r"$\lambda$",
                                 r"$\langle\langle w,(\lambda-L)^{-1}w\rangle\rangle$", logx=True))
    ok = rows_res <= 1e-12 and cols_res <= 1e-12 and cons["balance"] <= 1e-12 and monotone
    return files, checks, ok


def cmd_resolvent(cfg, out):
    from .fourier import MomentumGrid
    from .hierarchy import NestedResolventSpec, UVParams, resolvent_with_refinement
    from .nystrom import GradedGrid, UniformNodes

    n = int(cfg["n"])
    lams = parse_lambda_grid(cfg["lambda_grid"])
    grid_kind = cfg["grid"]
    M = int(cfg["M"])
    mode = cfg["mode"]
    rows = []
    for lam in lams:
        if grid_kind == "auto":
            kind = "graded" if n == 3 else "torus"
        else:
            kind = grid_kind
        if kind == "graded":
            grid = GradedGrid.for_lambda(lam, order=int(cfg["order"]))
        elif kind == "torus":
            grid = UniformNodes(M) if n == 3 else MomentumGrid(M)
        else:
            raise ParameterError(f"unknown grid {grid_kind!r}")
        uv = None
        if mode != "exact-nested":
            uv = UVParams(float(cfg["kappa"]), float(cfg["tau"]), lam)
        spec = NestedResolventSpec(n, lam, grid, mode=mode, tol=float(cfg["tol"]), uv=uv, coef=float(cfg["coef"]))
        res = resolvent_with_refinement(spec) if _bool(cfg["refine"]) else None
        if res is None:
            from .hierarchy import resolvent_truncated

            res = resolvent_truncated(spec)
        rows.append((n, lam, res.resolution, mode, res.value, res.residual, res.refinement_delta))
    files = [write_csv(os.path.join(out, "resolvent.csv"),
                       ["n", "lambda", "M", "mode", "value", "residual", "refinement_delta"], rows)]
    vals = np.array([r[4] for r in rows])
    lam_arr = np.array(lams)
    order = np.argsort(lam_arr)
    checks = {"decreasing_in_lambda": bool(np.all(np.diff(vals[order]) <= 0))}
    fit = None
    if len(lams) >= 3:
        from .scaling import fit_log_power

        try:
            fit = fit_log_power(lam_arr, vals, min_decades=float(cfg["min_decades"]))
            checks.update(kappa_hat=fit.kappa, window_kappas=list(fit.window_kappas), fit_flags=fit.flags)
        except RangeError as exc:
            checks["fit"] = str(exc)
    if _bool(cfg["report"]):
        from .plotting import plot_scaling

        files.append(plot_scaling(os.path.join(out, "resolvent.png"), lam_arr, vals, fit,
                                  ylabel=rf"$v_{n}(\lambda)$"))
    return files, checks, checks["decreasing_in_lambda"]


def cmd_kintegral(cfg, out):
    from .kintegral import KIntegralSpec, K_integral

    kappa, tau = float(cfg["kappa"]), float(cfg["tau"])
    lams = parse_lambda_grid(cfg["lambda_grid"])
    rows = []
    for lam in lams:
        if cfg["case"] == "edge":
            ab = abs(np.log(lam)) ** (-4.0 * tau)
            a2 = b2 = 0.5 * ab
        else:
            a2, b2 = float(cfg["a2"]), float(cfg["b2"])
        K = K_integral(KIntegralSpec(kappa, tau, a2, b2, lam, radial_cells=int(cfg["radial_cells"])))
        rows.append((kappa, tau, a2, b2, lam, K))
    files = [write_csv(os.path.join(out, "kintegral.csv"), ["kappa", "tau", "a2", "b2", "lambda", "K_value"], rows)]
    ratio = [r[5] / abs(np.log(r[4] + r[2] + r[3])) ** (1 - kappa / 2) for r in rows]
    drift = float(max(ratio) / min(ratio))
    checks = {"ratio_to_log_power": ratio, "drift": drift}
    if _bool(cfg["report"]):
        from .plotting import plot_series

        files.append(plot_series(os.path.join(out, "kintegral.png"), [abs(np.log(l)) for l in lams],
                                 [[r[5] for r in rows]], [rf"$\kappa$={kappa}"], r"$|\log\lambda|$", "K",
                                 logx=True, logy=True))
    return files, checks, True


def cmd_kappa(cfg, out):
    from .scaling import iterate_kappa, kappa_schedule

    sched = kappa_schedule(int(cfg["N"]), alternate=_bool(cfg["alternate"]))
    rows = [(n, str(k), float(k)) for n, k in enumerate(sched.values, 1)]
    files = [write_csv(os.path.join(out, "kappa.csv"), ["n", "kappa", "kappa_float"], rows)]
    it = iterate_kappa(Fraction(0), 20)
    checks = {"recursion_holds": sched.recursion_holds(),
              "fixed_point_error_after_20": float(abs(it[-1] - Fraction(2, 3)))}
    if _bool(cfg["report"]):
        from .plotting import plot_series

        files.append(plot_series(os.path.join(out, "kappa.png"), [r[0] for r in rows], [[r[2] for r in rows]],
                                 [""], "n", r"$\kappa_n$"))
    return files, checks, checks["recursion_holds"]


def cmd_fit(cfg, out):
    from .scaling import fit_log_power

    path = cfg.get("input")
    if not path:
        raise ParameterError("fit needs --input CSV")
    try:
        with open(path) as fh:
            data = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    xcol, ycol = cfg["x_column"], cfg["y_column"]
    try:
        x = np.array([float(r[xcol]) for r in data])
        y = np.array([float(r[ycol]) for r in data])
    except KeyError as exc:
        raise ParameterError(f"column {exc} not in {path}") from exc
    fit = fit_log_power(x, y, variable=cfg["variable"], min_decades=float(cfg["min_decades"]), loglog=True)
    rows = [(fit.kappa, fit.intercept, fit.window_kappas[0] if fit.window_kappas else float("nan"),
             fit.window_kappas[1] if fit.window_kappas else float("nan"), fit.loglog_exponent,
             ";".join(fit.flags))]
    files = [write_csv(os.path.join(out, "fit.csv"),
                       ["kappa_hat", "intercept", "kappa_low_window", "kappa_high_window", "loglog_coef", "flags"], rows)]
    table = os.path.join(out, "fit.txt")
    with open(table, "w") as fh:
        fh.write(f"{'x':>14} {'value':>14} {'residual':>12}\n")
        for xi, yi, ri in zip(fit.x, fit.values, fit.residuals):
            fh.write(f"{xi:14.6g} {yi:14.6g} {ri:12.3e}\n")
        fh.write(f"\nkappa_hat = {fit.kappa:.6f}  windows = {fit.window_kappas}  flags = {fit.flags}\n")
    files.append(table)
    if _bool(cfg["report"]) and cfg["variable"] == "lambda":
        from .plotting import plot_scaling

        files.append(plot_scaling(os.path.join(out, "fit.png"), fit.x, fit.values, fit, ylabel=ycol))
    return files, {"kappa_hat": fit.kappa, "flags": fit.flags}, True


COMMANDS = {
    "simulate": (cmd_simulate, {"rho": "0.5", "L": "64", "t_max": "20", "dt": "1", "replicas": "100",
                                "seed": "0", "canonical": "false", "rate_right": "1.0", "write_S": "false"}),
    "oracle": (cmd_oracle, {"L": "4x4", "k": "", "lambda": "0.01", "tol": "1e-12", "cap": "1e6"}),
    "resolvent": (cmd_resolvent, {"n": "3", "lambda_grid": "1e-3:1e-6:log", "M": "8", "grid": "auto",
                                  "order": "3", "mode": "exact-nested", "kappa": "1.0", "tau": "1.5",
                                  "coef": "1.0", "tol": "1e-10", "refine": "true", "min_decades": "3"}),
    "kintegral": (cmd_kintegral, {"kappa": "1.0", "tau": "1.5", "lambda_grid": "1e-6:1e-12:log:3",
                                  "a2": "0", "b2": "0", "case": "zero", "radial_cells": "96"}),
    "kappa": (cmd_kappa, {"N": "2", "alternate": "false"}),
    "fit": (cmd_fit, {"input": "", "x_column": "lambda", "y_column": "value", "variable": "lambda",
                      "min_decades": "5"}),
}

FLAGS = {
    "simulate": ["rho", "L", "t-max", "dt", "replicas", "seed", "canonical", "rate-right", "write-S"],
    "oracle": ["L", "k", "lambda", "tol", "cap"],
    "resolvent": ["n", "lambda-grid", "M", "grid", "order", "mode", "kappa", "tau", "coef", "tol", "refine",
                  "min-decades"],
    "kintegral": ["kappa", "tau", "lambda-grid", "a2", "b2", "case", "radial-cells"],
    "kappa": ["N", "alternate"],
    "fit": ["input", "x-column", "y-column", "variable", "min-decades"],
}


def build_parser():
    p = argparse.ArgumentParser(prog="asep2d", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")
    for name, flags in FLAGS.items():
        sp = sub.add_parser(name)
        for f in flags:
            sp.add_argument(f"--{f}", dest=f.replace("-", "_"), default=argparse.SUPPRESS)
        sp.add_argument("--config", default=argparse.SUPPRESS, help="key=value file; flags override it")
        sp.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
        sp.add_argument("--report", action="store_const", const="true", default=argparse.SUPPRESS,
                        help="also render PNG figures")
        sp.add_argument("--selftest", action="store_true", help="run the built-in examples and exit")
    return p


def resolve_config(command, args):
    cfg = dict(COMMANDS[command][1])
    cfg.update({"report": "false", "out": os.path.join("asep2d-out", command)})
    given = vars(args).copy()
    if "config" in given:
        cfg.update(read_config(given.pop("config")))
    for key in ("command", "selftest"):
        given.pop(key, None)
    cfg.update({k: str(v) for k, v in given.items()})
    unknown = set(cfg) - set(COMMANDS[command][1]) - {"report", "out"}
    if unknown:
        raise ParameterError(f"unknown config keys {sorted(unknown)}")
    return cfg


def run(argv=None):
    """Parse, dispatch and return an exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.selftest:
        from .selftest import run_selftest

        return EXIT_OK if run_selftest(args.command) else EXIT_CHECK
    try:
        cfg = resolve_config(args.command, args)
        out = cfg["out"]
        os.makedirs(out, exist_ok=True)
        files, checks, ok = COMMANDS[args.command][0](cfg, out)
        files.append(write_manifest(os.path.join(out, "manifest.json"), args.command, cfg, files, checks))
    except (ParameterError, RangeError, ValueError) as exc:
        print(f"asep2d: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except CapacityError as exc:
        print(f"asep2d: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except RefinementError as exc:
        print(f"asep2d: insufficient resolution: {exc}", file=sys.stderr)
        return EXIT_REFINEMENT
    except NumericalError as exc:
        print(f"asep2d: numerical failure: {exc} (residual {exc.residual})", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"asep2d: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for f in files:
        print(f)
    if not ok:
        print(f"asep2d: invariant check failed: {json.dumps(checks, default=str)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
