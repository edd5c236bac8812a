import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bioage import HazardModel


def test_pins_are_reproduced(model):
    assert model.hazard(60.0) == pytest.approx(0.005, rel=1e-14)
    assert model.hazard(110.0) == pytest.approx(1.0, rel=1e-14)


def test_dispersion_and_mode(model):
    b = 50 / np.log(200)
    assert model.b == pytest.approx(b, rel=1e-14)
    assert model.m == pytest.approx(60 - b * np.log(b * 0.005), rel=1e-14)
    # Hazard equals 1/b at the mode.
    assert model.hazard(model.m) == pytest.approx(1 / model.b, rel=1e-12)


def test_gompertz_round_trip(model):
    again = HazardModel.from_gompertz(model.m, model.b, 60.0, 110.0)
    assert again.lambda0 == pytest.approx(0.005, rel=1e-12)
    assert again.lambdaT == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(lambda0=0.0), dict(lambda0=-1.0), dict(lambdaT=0.001), dict(kappaT=50.0),
])
def test_invalid_pins_rejected(kwargs):
    with pytest.raises(ValueError):
        HazardModel(**kwargs)


@pytest.mark.parametrize("s", [0.0, 1.0, 12.5, 25.0, 50.0])
def test_survival_matches_quadrature(model, s):
    integral, _ = quad(lambda u: model.hazard(60 + u), 0, s, epsabs=1e-13)
    assert model.gompertz_survival(s) == pytest.approx(np.exp(-integral), rel=1e-10)


def test_survival_stops_ageing_at_horizon(model):
    s = 60.0
    head, _ = quad(lambda u: model.hazard(60 + u), 0, 50, epsabs=1e-13)
    assert model.survival(s) == pytest.approx(np.exp(-head - 10 * model.lambdaT), rel=1e-10)
    assert model.survival(30.0) == pytest.approx(model.gompertz_survival(30.0), rel=1e-14)


@given(st.floats(0, 200), st.floats(0.01, 20))
@settings(max_examples=60, deadline=None)
def test_hazard_increasing(a, step):
    m = HazardModel()
    assert m.hazard(a + step) > m.hazard(a)


@given(st.floats(1e-4, 0.05), st.floats(1.5, 500), st.floats(20, 80), st.floats(10, 60))
@settings(max_examples=60, deadline=None)
def test_pins_hold_for_any_valid_calibration(lam0, ratio, k0, span):
    m = HazardModel(lam0, lam0 * ratio, k0, k0 + span)
    assert m.hazard(k0) == pytest.approx(lam0, rel=1e-10)
    assert m.hazard(k0 + span) == pytest.approx(lam0 * ratio, rel=1e-10)
    s = np.linspace(0, span, 9)
    assert np.all(np.diff(m.survival(s)) < 0)
