"""Spending at (60, 60) as sigma shrinks, against the deterministic plan and the
characteristics approximation."""

import argparse

from bioage import (BridgeDynamics, HazardModel, Preferences, characteristics_approx,
                    deterministic_plan, solve_policy)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--gamma", type=float, default=8.0)
    parser.add_argument("--sigmas", default="0.6,0.3,0.15,0.05,0.01")
    args = parser.parse_args()
    model = HazardModel()
    prefs = Preferences(args.gamma)
    plan = deterministic_plan(prefs, model).rate
    print(f"deterministic plan: {plan * 100:.6f}%")
    print(f"{'sigma':>6} {'PDE %':>10} {'approx %':>10} {'PDE-plan pp':>12} {'approx-PDE pp':>14}")
    for sigma in (float(s) for s in args.sigmas.split(",")):
        dyn = BridgeDynamics.for_model(model, sigma=sigma)
        pde = float(solve_policy(prefs, model, dyn).spending_rate(60, 60))
        approx = characteristics_approx(prefs, model, dyn).rate_at(0.0)
        print(f"{sigma:>6.3f} {pde * 100:>10.5f} {approx * 100:>10.5f} "
              f"{(pde - plan) * 100:>12.2e} {(approx - pde) * 100:>14.2e}")


if __name__ == "__main__":
    main()
