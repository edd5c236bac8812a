"""Command-line front end. Every command writes CSV (LF line endings, written
atomically) or prints a one-row CSV to stdout for the query commands.

Exit codes: 0 ok, 1 solver failure, 2 invalid input, 3 stability violation,
4 calibration bracket failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import CONFIG_ENV, ConfigError, RunConfig, load_config
from .density import (ConsumptionCI, DeltaStart, calibrate_sigma, population_hazard, quantiles,
                      solve_density)
from .errors import CalibrationBracketError, InsufficientSampleError, SolverError, StabilityError
from .erl import erl_table, solve_erl
from .mc import mc_erl, mc_survival, mc_survivor_quantiles
from .bridge import simulate_paths
from .policy import characteristics_approx, solve_log_policy, solve_policy

EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_STABILITY, EXIT_BRACKET = 0, 1, 2, 3, 4

B_AGES = np.arange(45, 100, 5)
C_AGES = np.arange(60, 100, 5)


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; ``path='-'`` prints instead.

    Files are written to a temporary sibling and renamed into place.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x, digits=10):
    return f"{float(x):.{digits}g}"


def parse_list(text):
    """``"0,5,10"`` or ``"start:stop:step"`` (stop inclusive) as a float array."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(p) for p in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}; expected start:stop:step") from exc
        if not step > 0:
            raise ConfigError("range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9))
        return start + step * np.arange(n + 1)
    try:
        return np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}") from exc


def _out(args, cfg, name):
    return args.out if args.out else str(Path(cfg.out_dir) / name)


def _policy(cfg):
    cfg.prefs().check_stability(cfg.lambdaT)
    model, dyn, grid = cfg.model(), cfg.dyn(), cfg.grid()
    if cfg.gamma == 1:
        return solve_log_policy(cfg.rho, cfg.r, model, dyn, grid)
    return solve_policy(cfg.prefs(), model, dyn, grid)


def q_label(q):
    return f"q{round(q * 100):02d}" if abs(q * 100 - round(q * 100)) < 1e-9 else f"q{q:g}"


# ---------------------------------------------------------------------------
# Commands


def cmd_table(args, cfg):
    header = ["b_age"] + [f"c{c}" for c in C_AGES]
    if args.which == "erl":
        surface = solve_erl(cfg.model(), cfg.dyn(), cfg.grid())
        values = erl_table(surface, B_AGES, C_AGES)
        rows = [[str(b)] + [f"{v:.2f}" for v in row] for b, row in zip(B_AGES, values)]
    else:
        policy = _policy(cfg)
        rows = []
        for b in B_AGES:
            rates = [float(policy.spending_rate(c, b)) * 100 for c in C_AGES]
            rows.append([str(b)] + [f"{v:.3f}" for v in rates])
    name = "erl.csv" if args.which == "erl" else f"spending_gamma{cfg.gamma:g}.csv"
    write_csv(_out(args, cfg, name), header, rows)


def cmd_band(args, cfg):
    times = parse_list(args.times)
    qs = parse_list(args.quantiles)
    if np.any(times < 0) or np.any(times >= cfg.kappaT - cfg.kappa0):
        raise ConfigError("band times must lie in [0, T)")
    model, dyn = cfg.model(), cfg.dyn()
    density = solve_density(model, dyn, cfg.grid(), DeltaStart(), t_end=max(times.max(), 1.0),
                            save_times=list(times))
    policy = _policy(cfg)
    labels = [q_label(q) for q in qs]
    header = ["t", "c_age"] + [f"b_{s}" for s in labels] + [f"spend_{s}" for s in labels]
    rows = []
    for t in times:
        ages = quantiles(density, t, qs).ages
        c_age = cfg.kappa0 + t
        spend = [float(policy.spending_rate(c_age, b)) for b in ages]
        rows.append([fmt(t), fmt(c_age)] + [f"{b:.4f}" for b in ages] + [f"{s:.6f}" for s in spend])
    write_csv(_out(args, cfg, "band.csv"), header, rows)


def cmd_density(args, cfg):
    times = parse_list(args.times)
    if np.any(times <= 0) or np.any(times >= cfg.kappaT - cfg.kappa0):
        raise ConfigError("density times must lie in (0, T)")
    model, dyn = cfg.model(), cfg.dyn()
    density = solve_density(model, dyn, cfg.grid(), DeltaStart(), t_end=times.max(),
                            save_times=list(times))
    rows = []
    for t in times:
        if t < density.g.t_nodes[0]:
            raise ConfigError(f"t={t} falls inside the analytic start window")
        g = density.g.level(t)
        centres = density.g.a_nodes + density.g.shift(t)
        S = density.survival(t)
        keep = g > args.threshold * g.max()
        for b, v in zip(centres[keep], g[keep]):
            rows.append([fmt(t), fmt(cfg.kappa0 + t), f"{b:.4f}", fmt(v), fmt(v / S), fmt(S)])
    write_csv(_out(args, cfg, "density.csv"),
              ["t", "c_age", "b_age", "g", "survivor_pdf", "survival"], rows)


def cmd_survival(args, cfg):
    times = parse_list(args.times)
    model, dyn = cfg.model(), cfg.dyn()
    density = solve_density(model, dyn, cfg.grid(), DeltaStart(), t_end=times.max(),
                            save_times=list(times))
    rows = []
    for t in times:
        rows.append([fmt(t), fmt(cfg.kappa0 + t), fmt(density.survival(t)),
                     fmt(population_hazard(density, t)), fmt(model.hazard(cfg.kappa0 + t))])
    write_csv(_out(args, cfg, "survival.csv"),
              ["t", "c_age", "survival", "pop_hazard", "gompertz_hazard"], rows)


def cmd_erl_query(args, cfg):
    surface = solve_erl(cfg.model(), cfg.dyn(), cfg.grid())
    value = float(surface.at(args.c_age, args.b_age))
    write_csv(args.out or "-", ["c_age", "b_age", "erl"], [[fmt(args.c_age), fmt(args.b_age), fmt(value)]])


def cmd_spend_query(args, cfg):
    policy = _policy(cfg)
    value = float(policy.spending_rate(args.c_age, args.b_age))
    write_csv(args.out or "-", ["c_age", "b_age", "gamma", "spending_rate"],
              [[fmt(args.c_age), fmt(args.b_age), fmt(cfg.gamma), fmt(value)]])


def cmd_simulate(args, cfg):
    model, dyn = cfg.model(), cfg.dyn()
    n, seed, dt = cfg.n_paths, cfg.seed, cfg.mc_dt
    t = args.t
    T = model.horizon
    if not 0 < t < T:
        raise ConfigError("simulation time must lie in (0, T)")
    erl = mc_erl(model, dyn, (0.0, None), n, dt, seed, cfg.workers)
    surv = mc_survival(model, dyn, t, n, dt, seed, workers=cfg.workers)
    quants = mc_survivor_quantiles(model, dyn, t, [0.05, 0.5, 0.95], n, dt, seed,
                                   workers=cfg.workers)
    a0 = dyn.start_age
    rows = [[f"erl_{cfg.kappa0:g}_{a0:g}", fmt(erl.value), fmt(erl.std_error), n, seed],
            [f"survival_{t:g}", fmt(surv.value), fmt(surv.std_error), n, seed]]
    for est in quants:
        rows.append([f"b_{q_label(est.q)}_{t:g}", fmt(est.value), fmt(est.std_error), n, seed])
    write_csv(_out(args, cfg, "simulate.csv"), ["quantity", "value", "std_error", "n_paths", "seed"], rows)
    if args.paths_file:
        batch = simulate_paths(dyn, model, n, dt=dt, seed=seed, t_end=np.inf, probe=t,
                               workers=cfg.workers)
        ages = cfg.kappa0 + t + batch.y_mid
        alive = batch.death_times > t
        write_csv(args.paths_file, ["path", "death_c_age", f"b_age_{t:g}", f"alive_{t:g}"],
                  [[i, fmt(cfg.kappa0 + d), fmt(a), int(al)]
                   for i, (d, a, al) in enumerate(zip(batch.death_times, ages, alive))])


def read_ci_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read CI file {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    if rows and rows[0][0].strip() == "c_age":
        rows = rows[1:]
    out = []
    try:
        for r in rows:
            if len(r) != 3:
                raise ConfigError(f"CI rows need 3 fields (c_age,rate_lo,rate_hi), got {r}")
            out.append(ConsumptionCI(float(r[0]), float(r[1]), float(r[2])))
    except ValueError as exc:
        raise ConfigError(f"bad CI file {path}: {exc}") from exc
    if len(out) != 2 or out[0].c_age == out[1].c_age:
        raise ConfigError("calibration needs intervals at exactly two distinct ages")
    return sorted(out, key=lambda ci: ci.c_age)


def cmd_calibrate(args, cfg):
    observed = read_ci_file(args.ci)
    bracket = tuple(parse_list(args.bracket))
    if len(bracket) != 2:
        raise ConfigError("bracket needs two values lo,hi")
    cfg.prefs().check_stability(cfg.lambdaT)
    result = calibrate_sigma(observed, cfg.prefs(), cfg.model(), cfg.xi, bracket,
                             xatol=args.xatol, grid=cfg.grid())
    fitted = [(observed[0].low, observed[0].high), result.predicted]
    rows = [[fmt(ci.c_age), fmt(ci.low), fmt(ci.high), fmt(f[0]), fmt(f[1]),
             fmt(result.sigma, 6), fmt(result.objective)]
            for ci, f in zip(observed, fitted)]
    write_csv(_out(args, cfg, "calibrate.csv"),
              ["c_age", "observed_lo", "observed_hi", "fitted_lo", "fitted_hi", "sigma_hat", "objective"],
              rows)


def cmd_approx(args, cfg):
    cfg.prefs().check_stability(cfg.lambdaT)
    a0 = cfg.kappa0 if args.a0 is None else args.a0
    times = parse_list(args.times)
    curve = characteristics_approx(cfg.prefs(), cfg.model(), cfg.dyn(), a0=a0, times=times)
    rows = [[fmt(t), fmt(c), fmt(b), fmt(s)]
            for t, c, b, s in zip(curve.times, curve.c_ages, curve.b_ages, curve.spending)]
    write_csv(_out(args, cfg, "approx.csv"), ["t", "c_age", "b_age", "spending_rate"], rows)


# ---------------------------------------------------------------------------
# Argument parsing


def _config_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help=f"key = value config file (default: ${CONFIG_ENV})")
    casts = {"float": float, "int": int, "str": str}
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parent.add_argument(flag, dest=f.name, type=casts[f.type], default=None,
                            help=f"default {f.default}")
    parent.add_argument("--out", help="output file ('-' for stdout)")
    return parent


def build_parser():
    parent = _config_parent()
    p = argparse.ArgumentParser(prog="bioage", description="Lifecycle spending under stochastic biological age")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("table", parents=[parent], help="remaining-lifetime or spending table")
    s.add_argument("which", choices=["erl", "spending"])
    s.set_defaults(func=cmd_table)

    s = sub.add_parser("band", parents=[parent], help="B-age quantile and spending bands over time")
    s.add_argument("--times", default="0:45:5")
    s.add_argument("--quantiles", default="0.05,0.5,0.95")
    s.set_defaults(func=cmd_band)

    s = sub.add_parser("density", parents=[parent], help="survivor sub-density snapshots")
    s.add_argument("--times", default="25")
    s.add_argument("--threshold", type=float, default=1e-10, help="drop cells below this fraction of the peak")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("survival", parents=[parent], help="population survival and hazard")
    s.add_argument("--times", default="1:45:1")
    s.set_defaults(func=cmd_survival)

    for name, func in (("erl-query", cmd_erl_query), ("spend-query", cmd_spend_query)):
        s = sub.add_parser(name, parents=[parent], help="single-point query")
        s.add_argument("--c-age", type=float, required=True)
        s.add_argument("--b-age", type=float, required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("simulate", parents=[parent], help="Monte Carlo estimates")
    s.add_argument("--t", type=float, default=25.0, help="time for survival and quantiles")
    s.add_argument("--paths-file", help="also write one row per path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate", parents=[parent], help="fit sigma to two consumption intervals")
    s.add_argument("--ci", required=True, help="CSV with rows c_age,rate_lo,rate_hi")
    s.add_argument("--bracket", default="0,1")
    s.add_argument("--xatol", type=float, default=1e-3)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("approx", parents=[parent], help="characteristics approximation curve")
    s.add_argument("--a0", type=float, default=None, help="B-age at the start (default kappa0)")
    s.add_argument("--times", default="0:50:1")
    s.set_defaults(func=cmd_approx)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        cfg = load_config(args.config, overrides)
        args.func(args, cfg)
    except StabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    except CalibrationBracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except (SolverError, InsufficientSampleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
