"""Print the remaining-lifetime and spending tables next to the reference values."""

import argparse
import time

import numpy as np

from bioage import BridgeDynamics, HazardModel, Preferences, erl_table, solve_erl, solve_policy
from bioage.pde import Grid2D

import _paths  # noqa: F401
from reference_values import B_AGES, C_AGES, ERL, SPENDING_GAMMA2, SPENDING_GAMMA8


def show(title, table, reference, unit):
    err = np.abs(table - reference)
    print(f"\n{title}  (max |err| {err.max():.4f}{unit}, mean {err.mean():.4f}{unit})")
    print("B\\C  " + "".join(f"{c:>9.0f}" for c in C_AGES))
    for b, row, ref in zip(B_AGES, table, reference):
        print(f"{b:>4.0f} " + "".join(f"{v:>9.3f}" for v in row))
        print("     " + "".join(f"{v:>9.3f}" for v in ref))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--refine", type=int, default=1, help="grid refinement factor")
    args = parser.parse_args()
    model = HazardModel()
    dyn = BridgeDynamics.for_model(model)
    grid = Grid2D.build(model)
    if args.refine > 1:
        grid = grid.refined(args.refine)

    start = time.perf_counter()
    erl = solve_erl(model, dyn, grid)
    print(f"remaining-lifetime solve: {time.perf_counter() - start:.2f}s")
    show("Remaining lifetime (years); second row is the reference",
         erl_table(erl, B_AGES, C_AGES), ERL, "y")
    for gamma, reference in ((8.0, SPENDING_GAMMA8), (2.0, SPENDING_GAMMA2)):
        policy = solve_policy(Preferences(gamma), model, dyn, grid)
        show(f"Spending rate gamma={gamma:g} (%)", policy.table(B_AGES, C_AGES) * 100,
             reference, "pp")


if __name__ == "__main__":
    main()
