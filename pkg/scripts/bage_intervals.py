"""Survivor B-age intervals at C-age 85: PDE solvers, Monte Carlo and reference.

For each (xi, sigma) the 5% and 95% survivor quantiles at t=25 are computed
with the fitted comoving solver, the upwind comoving solver, the fitted
fixed-frame solver and a Monte Carlo run, and compared with the reference.
"""

import argparse

from bioage import BridgeDynamics, HazardModel, mc_survivor_quantiles, quantiles, solve_density
from bioage.pde import Grid2D

import _paths  # noqa: F401
from reference_values import BAGE_INTERVALS

T_QUERY = 25.0


def interval(model, dyn, grid, scheme):
    d = solve_density(model, dyn, grid, t_end=T_QUERY, scheme=scheme)
    return tuple(quantiles(d, T_QUERY, [0.05, 0.95]).ages)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    model = HazardModel()
    comoving = Grid2D.build(model)
    fixed = Grid2D.build(model, comoving=False, below=40, above=30)
    print(f"{'xi':>4} {'sigma':>5} | {'reference':>15} | {'fitted':>15} | {'upwind':>15} | "
          f"{'fixed frame':>15} | {'monte carlo':>15}")
    for (xi, sigma), ref in sorted(BAGE_INTERVALS.items()):
        dyn = BridgeDynamics.for_model(model, xi=xi, sigma=sigma)
        rows = [ref, interval(model, dyn, comoving, "fitted"),
                interval(model, dyn, comoving, "upwind"), interval(model, dyn, fixed, "fitted")]
        mc = mc_survivor_quantiles(model, dyn, T_QUERY, [0.05, 0.95], n_paths=args.paths,
                                   seed=args.seed, workers=args.workers)
        rows.append((mc[0].value, mc[1].value))
        print(f"{xi:>4} {sigma:>5} | " + " | ".join(f"{lo:6.2f} - {hi:6.2f}" for lo, hi in rows))


if __name__ == "__main__":
    main()
