import numpy as np
import pytest

from bioage import BridgeDynamics, HazardModel, Preferences, solve_density, solve_erl, solve_policy

# Canonical calibration and the two perturbed sets used by the property suite.
PARAMETER_SETS = {
    "canonical": dict(lambda0=0.005, xi=1.0, sigma=0.3),
    "lambda0x2": dict(lambda0=0.010, xi=1.0, sigma=0.3),
    "slow_wide": dict(lambda0=0.005, xi=0.5, sigma=0.9),
}


def build(name):
    p = PARAMETER_SETS[name]
    model = HazardModel(lambda0=p["lambda0"])
    return model, BridgeDynamics.for_model(model, xi=p["xi"], sigma=p["sigma"])


@pytest.fixture(scope="session")
def model():
    return HazardModel()


@pytest.fixture(scope="session")
def dyn(model):
    return BridgeDynamics.for_model(model)


@pytest.fixture(scope="session")
def erl_surface(model, dyn):
    return solve_erl(model, dyn)


@pytest.fixture(scope="session")
def policy8(model, dyn):
    return solve_policy(Preferences(8.0), model, dyn)


@pytest.fixture(scope="session")
def policy2(model, dyn):
    return solve_policy(Preferences(2.0), model, dyn)


@pytest.fixture(scope="session")
def density(model, dyn):
    return solve_density(model, dyn, t_end=40.0, save_times=[10.0, 25.0])


@pytest.fixture(scope="session", params=list(PARAMETER_SETS))
def param_set(request):
    model, dyn = build(request.param)
    return request.param, model, dyn


@pytest.fixture(scope="session")
def solved_sets():
    """ERL, gamma=8 policy and density for each parameter set, solved once."""
    out = {}
    for name in PARAMETER_SETS:
        model, dyn = build(name)
        out[name] = dict(
            model=model,
            dyn=dyn,
            erl=solve_erl(model, dyn),
            policy=solve_policy(Preferences(8.0), model, dyn),
            density=solve_density(model, dyn, t_end=49.0, save_times=[5.0, 10.0, 25.0, 40.0]),
        )
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
