"""Structural properties on the canonical and two perturbed parameter sets."""

import numpy as np
import pytest

from bioage import Preferences, erl_table, quantiles, simulate_paths, solve_erl, solve_policy
from bioage.pde import Grid2D
from conftest import PARAMETER_SETS
from reference_values import B_AGES, C_AGES

SETS = list(PARAMETER_SETS)


@pytest.mark.parametrize("name", SETS)
def test_erl_monotone(solved_sets, name):
    table = erl_table(solved_sets[name]["erl"], B_AGES, C_AGES)
    assert np.all(np.diff(table, axis=0) < 0)
    assert np.all(np.diff(table, axis=1) < 0)


@pytest.mark.parametrize("name", SETS)
def test_spending_monotone(solved_sets, name):
    table = solved_sets[name]["policy"].table(B_AGES, C_AGES)
    assert np.all(np.diff(table, axis=0) > 0)
    assert np.all(np.diff(table, axis=1) > 0)


@pytest.mark.parametrize("name", SETS)
def test_pinning(solved_sets, name):
    s = solved_sets[name]
    batch = simulate_paths(s["dyn"], s["model"], 20_000, seed=1, t_end=50.0)
    assert np.max(np.abs(batch.final_ages - 110.0)) <= 1e-9


@pytest.mark.parametrize("name", SETS)
def test_survivor_mean_inequality(solved_sets, name):
    d = solved_sets[name]["density"]
    for t in np.arange(1.0, 49.0, 1.0):
        assert d.mean_age(t) < 60.0 + t


@pytest.mark.parametrize("name", SETS)
def test_mass_bookkeeping(solved_sets, name):
    d = solved_sets[name]["density"]
    model = solved_sets[name]["model"]
    assert d.survival(0.0) == 1.0
    assert np.all(np.diff(d.mass) <= 1e-15)
    # Transport conserves mass, so S falls exactly by the killed mass.
    t = d.g.t_nodes
    for k in (10, 200, 600):
        killed = d.moment(t[k], model.hazard)
        rate = -(np.log(d.mass[k + 1]) - np.log(d.mass[k - 1])) / (t[k + 1] - t[k - 1])
        assert rate == pytest.approx(killed / d.mass[k], rel=1e-3)


@pytest.mark.parametrize("name", SETS)
def test_quantiles_ordered(solved_sets, name):
    d = solved_sets[name]["density"]
    for t in (5.0, 25.0, 40.0):
        ages = quantiles(d, t, [0.05, 0.25, 0.5, 0.75, 0.95]).ages
        assert np.all(np.diff(ages) > 0)


@pytest.mark.parametrize("name", SETS)
def test_grid_convergence(solved_sets, name):
    s = solved_sets[name]
    model, dyn = s["model"], s["dyn"]
    fine = Grid2D.build(model).refined()
    erl_fine = erl_table(solve_erl(model, dyn, fine), B_AGES, C_AGES)
    assert np.abs(erl_fine - erl_table(s["erl"], B_AGES, C_AGES)).max() < 0.1
    pol_fine = solve_policy(Preferences(8.0), model, dyn, fine).table(B_AGES, C_AGES)
    assert np.abs(pol_fine - s["policy"].table(B_AGES, C_AGES)).max() * 100 < 0.05
