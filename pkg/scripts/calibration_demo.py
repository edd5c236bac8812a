"""Generate two consumption intervals from a known sigma and recover it."""

import argparse

from bioage import BridgeDynamics, ConsumptionCI, HazardModel, Preferences, calibrate_sigma, solve_policy
from bioage.density import predicted_ci


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sigma", type=float, default=0.3)
    parser.add_argument("--sd", type=float, default=2.0, help="B-age sd behind the first interval")
    parser.add_argument("--gamma", type=float, default=8.0)
    args = parser.parse_args()
    model = HazardModel()
    prefs = Preferences(args.gamma)
    dyn = BridgeDynamics.for_model(model, sigma=args.sigma)
    policy = solve_policy(prefs, model, dyn)
    half = 1.6448536269514722 * args.sd
    first = ConsumptionCI(60.0, float(policy.spending_rate(60, 60 - half)),
                          float(policy.spending_rate(60, 60 + half)))
    second = ConsumptionCI(85.0, *predicted_ci(policy, model, dyn, first, 85.0))
    for ci in (first, second):
        print(f"C-age {ci.c_age:g}: spending {ci.low * 100:.4f}% - {ci.high * 100:.4f}%")
    result = calibrate_sigma([first, second], prefs, model)
    print(f"true sigma {args.sigma:g}, recovered {result.sigma:.5f} "
          f"(objective {result.objective:.2e}, {len(result.evaluations)} evaluations)")


if __name__ == "__main__":
    main()
