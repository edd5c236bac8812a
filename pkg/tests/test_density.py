import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioage import (BridgeDynamics, CalibrationBracketError, ConsumptionCI, DeltaStart,
                    DensityStart, HazardModel, Preferences, calibrate_sigma, mc_survival,
                    population_hazard, quantiles, solve_density, solve_policy, spending_band)
from bioage.density import calibration_objective, predicted_ci
from bioage.mc import survivor_ages
from bioage.pde import BackwardEquation, Grid2D, solve_backward
from reference_values import BAGE_INTERVALS

NO_DEATH = HazardModel(1e-12, 1e-11)


def test_mass_after_the_analytic_start(density):
    t_first = density.g.t_nodes[0]
    assert t_first == pytest.approx(0.25)
    assert density.mass[0] == pytest.approx(np.exp(-0.005 * 0.25), abs=1e-6)
    assert density.survival(0.0) == 1.0


def test_survival_matches_monte_carlo(model, dyn, density):
    est = mc_survival(model, dyn, 25.0, n_paths=100_000, seed=21)
    assert est.within(density.survival(25.0), 3.0)


def test_no_selection_means_symmetric_law():
    dyn = BridgeDynamics.for_model(NO_DEATH, sigma=0.6)
    d = solve_density(NO_DEATH, dyn, t_end=25.0)
    assert d.mean_age(25.0) == pytest.approx(85.0, abs=0.1)
    assert quantiles(d, 25.0, [0.5]).alpha(0.5) == pytest.approx(85.0, abs=0.1)
    assert d.survival(25.0) == pytest.approx(1.0, abs=1e-8)


def test_no_selection_matches_transition_variance():
    dyn = BridgeDynamics.for_model(NO_DEATH, sigma=0.6)
    d = solve_density(NO_DEATH, dyn, t_end=25.0)
    _, var = dyn.conditional_moments(0.0, 25.0, 0.0)
    second = d.moment(25.0, lambda a: (a - 85.0) ** 2)
    assert second == pytest.approx(var, rel=0.01)


@given(st.lists(st.floats(0.001, 0.999), min_size=2, max_size=8, unique=True))
@settings(max_examples=40, deadline=None)
def test_quantile_definition(density, qs):
    qs = np.sort(qs)
    curve = quantiles(density, 25.0, qs)
    assert np.all(np.diff(curve.ages) > 0)
    ages = density.ages(25.0)
    masses = density.cell_masses(25.0)
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    for q, alpha in zip(qs, curve.ages):
        below = np.interp(alpha, ages, cdf)
        assert below == pytest.approx(q * curve.survival, abs=1e-8)


def test_quantile_errors(density):
    with pytest.raises(ValueError):
        quantiles(density, 25.0, [])
    with pytest.raises(ValueError):
        quantiles(density, 25.0, [1.0])
    with pytest.raises(ValueError):
        quantiles(density, 55.0, [0.5])


def test_quantiles_before_the_first_level(density):
    at_start = quantiles(density, 0.0, [0.05, 0.95])
    assert np.all(at_start.ages == 60.0)
    early = quantiles(density, 0.1, [0.05, 0.5, 0.95])
    assert early.ages[1] == pytest.approx(60.1, abs=1e-9)
    assert early.ages[0] < early.ages[1] < early.ages[2]


def test_population_hazard_at_start(density):
    assert population_hazard(density, 0.05) == pytest.approx(0.005, rel=0.05)


def test_population_hazard_matches_monte_carlo(model, dyn, density):
    # Oracle: average hazard over simulated survivors at t = 25.
    lam = model.hazard(survivor_ages(model, dyn, 25.0, n_paths=100_000, seed=8))
    se = lam.std() / np.sqrt(len(lam))
    assert population_hazard(density, 25.0) == pytest.approx(lam.mean(), abs=3 * se)


def test_selection_lowers_population_hazard(model, dyn, density):
    # Without the survival conditioning, A_25 is Gaussian around 85.
    _, var = dyn.conditional_moments(0.0, 25.0, 0.0)
    unconditional = model.hazard(85.0) * np.exp(var / (2 * model.b**2))
    assert population_hazard(density, 25.0) < unconditional


def test_population_hazard_identity_at_range_end(model, dyn):
    d = solve_density(model, dyn, t_end=25.0)
    inner = solve_density(model, dyn, t_end=26.0)
    assert population_hazard(d, 25.0) == pytest.approx(population_hazard(inner, 25.0), rel=1e-3)


def test_population_hazard_without_noise(model):
    dyn = BridgeDynamics.for_model(model, sigma=0.0)
    d = solve_density(model, dyn, t_end=40.0, save_times=[10.0, 25.0])
    for t in (10.0, 25.0):
        assert population_hazard(d, t) == pytest.approx(model.hazard(60 + t), rel=0.01)


def test_survivor_mean_below_chronological_age(density):
    for t in np.arange(1.0, 40.0, 1.0):
        assert density.mean_age(t) < 60 + t


def test_survival_non_increasing(density):
    assert np.all(np.diff(density.mass) <= 1e-15)


def test_non_negative(density):
    assert density.g.values.min() >= -1e-12 * density.g.values.max()


def _backward_expectation(model, dyn, phi, t_end):
    """E[phi(A_t); alive at t] from the backward equation with no source."""
    grid = Grid2D.build(model)
    t = np.linspace(0.0, t_end, int(round(t_end / 0.025)) + 1)
    grid = Grid2D(t, grid.a_nodes, grid.da, 0.025, grid.origin)
    eq = BackwardEquation(dyn.drift, 0.5 * dyn.sigma**2, lambda s, a: model.hazard(a))
    terminal = phi(grid.ages(t_end))
    shrink = lambda s: ((50.0 - t_end) / (50.0 - s)) ** dyn.xi  # noqa: E731

    def edge(x):
        return lambda s: float(phi(60.0 + t_end + x * shrink(s))) * float(
            np.exp(-model.hazard(60.0 + s + x) * 0.0))

    surf = solve_backward(eq, grid, terminal, edge(grid.a_min), edge(grid.a_max))
    return float(surf.at(0.0, 60.0))


@pytest.mark.parametrize("power", [1, 2])
def test_feynman_kac_duality(model, dyn, density, power):
    def phi(a):
        return np.asarray(a, dtype=float) ** power

    forward = density.moment(25.0, phi)
    backward = _backward_expectation(model, dyn, phi, 25.0)
    assert forward == pytest.approx(backward, rel=1e-3)


def test_canonical_interval_matches_reference(density):
    lo, hi = quantiles(density, 25.0, [0.05, 0.95]).ages
    assert lo == pytest.approx(81.92, abs=0.25)
    assert hi == pytest.approx(87.67, abs=0.25)


@pytest.mark.parametrize("xi,sigma", sorted(BAGE_INTERVALS))
def test_left_skew(model, xi, sigma):
    d = solve_density(model, BridgeDynamics.for_model(model, xi=xi, sigma=sigma), t_end=25.0)
    lo, hi = quantiles(d, 25.0, [0.05, 0.95]).ages
    assert 85.0 - lo > hi - 85.0


def test_thin_right_tail_in_long_horizon_setting():
    model = HazardModel(0.0005, 0.5, 10.0, 110.0)
    dyn = BridgeDynamics.for_model(model, xi=1.0, sigma=0.3)
    d = solve_density(model, dyn, t_end=75.0, save_times=[25.0, 50.0])
    for c in (35.0, 60.0, 85.0):
        assert d.mean_age(c - 10.0) < c
    ages = density_centres = d.g.a_nodes + d.g.shift(75.0)
    masses = d.cell_masses(75.0)
    assert masses[ages > 90.0].sum() < masses[ages < 80.0].sum()
    assert density_centres.size == masses.size


def test_spending_band(model, dyn, density, policy8, policy2):
    lo, hi = spending_band(policy8, density, 0.0)
    assert lo == hi == pytest.approx(float(policy8.spending_rate(60, 60)))
    lo, hi = spending_band(policy8, density, 25.0)
    a_lo, a_hi = quantiles(density, 25.0, [0.05, 0.95]).ages
    assert lo == float(policy8.spending_rate(85, a_lo))
    assert hi == float(policy8.spending_rate(85, a_hi))
    lo2, hi2 = spending_band(policy2, density, 25.0)
    assert hi2 - lo2 > hi - lo > 0


def test_spending_band_rejects_mismatched_parameters(model, density):
    other = solve_policy(Preferences(8.0), model, BridgeDynamics.for_model(model, sigma=0.6),
                         Grid2D.build(model, da=0.4, dt=0.2))
    with pytest.raises(ValueError):
        spending_band(other, density, 25.0)


def test_initial_density_must_be_normalized(model, dyn):
    half = DensityStart(lambda a: 0.5 * (np.asarray(a) > 60.0))
    with pytest.raises(ValueError):
        solve_density(model, dyn, initial=half, t_end=5.0)


def test_gaussian_start_mass(model, dyn):
    d = solve_density(model, dyn, initial=DensityStart.gaussian(60.0, 2.0), t_end=1.0)
    assert d.mass[0] == pytest.approx(1.0, abs=1e-12)
    assert d.mean_age(0.0) == pytest.approx(60.0, abs=1e-6)


def test_delta_start_later_and_elsewhere(model, dyn):
    d = solve_density(model, dyn, initial=DeltaStart(a0=55.0, t0=5.0), t_end=10.0)
    assert d.survival(5.0) == 1.0
    assert d.mass[0] == pytest.approx(np.exp(-model.hazard(55.0) * 0.25), abs=1e-6)
    # Mean reverts towards chronological age.
    assert 60.0 < d.mean_age(10.0) < 70.0


def _synthetic(model, prefs, sigma, sd=2.0):
    dyn = BridgeDynamics.for_model(model, sigma=sigma)
    policy = solve_policy(prefs, model, dyn)
    half = 1.6448536269514722 * sd
    first = ConsumptionCI(60.0, float(policy.spending_rate(60, 60 - half)),
                          float(policy.spending_rate(60, 60 + half)))
    lo, hi = predicted_ci(policy, model, dyn, first, 85.0)
    return [first, ConsumptionCI(85.0, lo, hi)]


@pytest.mark.slow
def test_calibration_round_trip(model):
    prefs = Preferences(8.0)
    observed = _synthetic(model, prefs, 0.3)
    result = calibrate_sigma(observed, prefs, model)
    assert 0.28 <= result.sigma <= 0.32


@pytest.mark.slow
def test_calibration_prefers_deterministic_ageing(model):
    prefs = Preferences(8.0)
    observed = _synthetic(model, prefs, 0.0)
    result = calibrate_sigma(observed, prefs, model)
    assert result.sigma < 0.05
    at_zero = calibration_objective(observed, 0.0, prefs, model)[0]
    at_03 = calibration_objective(observed, 0.3, prefs, model)[0]
    assert at_zero < at_03


@pytest.mark.slow
def test_degenerate_first_interval_forces_noise(model, policy8):
    prefs = Preferences(8.0)
    rate = float(policy8.spending_rate(60, 60))
    observed = [ConsumptionCI(60.0, rate, rate), ConsumptionCI(85.0, 0.0615, 0.0655)]
    result = calibrate_sigma(observed, prefs, model, bracket=(0.0, 0.8), xatol=0.01)
    assert result.sigma > 0.1


def test_bracket_errors(model):
    observed = [ConsumptionCI(60.0, 0.038, 0.039), ConsumptionCI(85.0, 0.06, 0.066)]
    with pytest.raises(CalibrationBracketError):
        calibrate_sigma(observed, Preferences(8.0), model, bracket=(0.5, 0.1))
    with pytest.raises(CalibrationBracketError):
        calibrate_sigma(observed, Preferences(8.0), model, bracket=(-0.1, 0.5))


@pytest.mark.slow
def test_optimum_beyond_bracket(model):
    prefs = Preferences(8.0)
    rate = float(solve_policy(prefs, model, BridgeDynamics.for_model(model), Grid2D.build(model)).spending_rate(60, 60))
    observed = [ConsumptionCI(60.0, rate, rate), ConsumptionCI(85.0, 0.05, 0.08)]
    with pytest.raises(CalibrationBracketError):
        calibrate_sigma(observed, prefs, model, bracket=(0.0, 0.1), xatol=0.01)


def test_consumption_interval_validation():
    with pytest.raises(ValueError):
        ConsumptionCI(60.0, 0.05, 0.04)
    with pytest.raises(ValueError):
        ConsumptionCI(60.0, 0.0, 0.04)
