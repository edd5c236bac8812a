"""Optimal retirement spending with a stochastic biological age.

The CRRA value function scales as ``v(t, a, w) = f(t, a) w**(1-gamma)/(1-gamma)``
and the optimal spending rate (consumption over wealth) is ``f**(-1/gamma)``.
``f`` solves

    f_t + mu f_a + (sigma^2/2) f_aa + r(1-gamma) f - (rho + lambda(a)) f
        + gamma f**(1 - 1/gamma) = 0,

with ``f(T, .) = f_T``. For logarithmic utility ``v = f log w + h`` and both
``f`` and ``h`` solve linear equations.

The module also carries the deterministic-ageing plan (closed form up to a
quadrature) and the characteristics approximation, which follows the
deterministic path ``a(t)`` and drops the diffusion term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .bridge import BridgeDynamics
from .errors import SolverError, StabilityError
from .hazard import HazardModel
from .pde import BackwardEquation, Grid2D, Surface, solve_backward


@dataclass(frozen=True)
class Preferences:
    gamma: float = 8.0
    rho: float = 0.025
    r: float = 0.025

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def k(self):
        """Growth rate ``(r - rho)/gamma`` of deterministic consumption."""
        return (self.r - self.rho) / self.gamma

    def discount_gap(self, lam):
        """``rho + lam - r(1 - gamma)``; must be positive for a finite policy."""
        return self.rho + lam - self.r * (1 - self.gamma)

    def check_stability(self, lambdaT):
        gap = self.discount_gap(lambdaT)
        if not gap > 0:
            raise StabilityError(
                f"rho + lambdaT - r(1-gamma) = {gap:.6g} <= 0 "
                f"(gamma={self.gamma}, rho={self.rho}, r={self.r}, lambdaT={lambdaT})"
            )


def terminal_f(prefs: Preferences, lambdaT):
    """``f_T = ((rho + lambdaT - r(1-gamma))/gamma)**(-gamma)``."""
    prefs.check_stability(lambdaT)
    if prefs.gamma == 1:
        return 1.0 / (prefs.rho + lambdaT)
    return (prefs.discount_gap(lambdaT) / prefs.gamma) ** (-prefs.gamma)


def terminal_rate(prefs: Preferences, lambdaT):
    """Spending rate once ageing has stopped, ``f_T**(-1/gamma)``."""
    prefs.check_stability(lambdaT)
    return prefs.discount_gap(lambdaT) / prefs.gamma


def constant_hazard_g(prefs: Preferences, lam, tau, g_terminal):
    """``G = f**(1/gamma)`` at time-to-go ``tau`` under a constant hazard ``lam``.

    ``G`` solves the linear ODE ``dG/dtau = 1 + c G`` with
    ``c = (r(1-gamma) - rho - lam)/gamma``.
    """
    c = -prefs.discount_gap(lam) / prefs.gamma
    tau = np.asarray(tau, dtype=float)
    if abs(c) < 1e-14:
        return g_terminal + tau
    growth = np.exp(c * tau)
    return g_terminal * growth + np.expm1(c * tau) / c


def edge_g(prefs: Preferences, lam_of_tau, g_terminal, T):
    """``G`` along an edge whose hazard varies with time-to-go ``tau``.

    Integrates ``dG/dtau = 1 - (discount_gap(lam(tau))/gamma) G`` from
    ``G(0) = g_terminal``; returns a callable of ``tau``.
    """

    def rhs(tau, G):
        return 1.0 - prefs.discount_gap(lam_of_tau(tau)) / prefs.gamma * G

    sol = solve_ivp(rhs, (0.0, T), [g_terminal], method="LSODA", dense_output=True,
                    rtol=1e-11, atol=1e-13)
    return lambda tau: float(sol.sol(tau)[0])


def policy_equation(prefs: Preferences, model: HazardModel, dyn: BridgeDynamics):
    g = prefs.gamma
    shift = prefs.rho - prefs.r * (1 - g)
    return BackwardEquation(
        drift=dyn.drift,
        diffusion=0.5 * dyn.sigma**2,
        zeroth=lambda t, a: shift + model.hazard(a),
        source=lambda t, a, u: g * u ** (1 - 1 / g),
        nonlinear=True,
    )


@dataclass
class PolicySurface:
    f: Surface
    prefs: Preferences
    model: HazardModel
    dyn: BridgeDynamics
    terminal_fT: float

    def spending_rate(self, c_age, b_age):
        """Optimal consumption as a fraction of wealth per year."""
        return self.f.at(c_age - self.model.kappa0, b_age) ** (-1 / self.prefs.gamma)

    def value(self, c_age, b_age, wealth):
        g = self.prefs.gamma
        return self.f.at(c_age - self.model.kappa0, b_age) * wealth ** (1 - g) / (1 - g)

    def table(self, b_ages, c_ages):
        b = np.asarray(b_ages, dtype=float)
        return np.column_stack([self.spending_rate(c, b) for c in c_ages])


def solve_policy(prefs: Preferences, model: HazardModel, dyn: BridgeDynamics,
                 grid: Grid2D | None = None) -> PolicySurface:
    """Solve the CRRA spending equation for ``gamma != 1``.

    The truncation edges follow their own hazard with no ageing noise: zero
    hazard at the young edge (closed form) and the hazard of the edge age at
    the old edge (a linear ODE for ``G = f**(1/gamma)``).
    """
    if prefs.gamma == 1:
        raise ValueError("gamma == 1 is logarithmic utility; use solve_log_policy")
    dyn.check_model(model)
    fT = terminal_f(prefs, model.lambdaT)
    grid = grid or Grid2D.build(model)
    T = model.horizon
    g = prefs.gamma
    gT = fT ** (1 / g)

    g_hi = edge_g(prefs, lambda tau: float(model.hazard(grid.a_max + grid.shift(T - tau))), gT, T)

    surface = solve_backward(
        policy_equation(prefs, model, dyn),
        grid,
        terminal=fT,
        bc_lo=lambda t: constant_hazard_g(prefs, 0.0, T - t, gT) ** g,
        bc_hi=lambda t: g_hi(T - t) ** g,
        kind="policy_f",
    )
    if np.any(surface.values <= 0):
        raise SolverError("policy surface lost positivity")
    return PolicySurface(surface, prefs, model, dyn, fT)


def spending_rate(surface, c_age, b_age):
    return surface.spending_rate(c_age, b_age)


@dataclass
class LogPolicySurface:
    f: Surface
    h: Surface
    rho: float
    r: float
    model: HazardModel
    dyn: BridgeDynamics

    def spending_rate(self, c_age, b_age):
        # Consumption c = w / f from the first-order condition with v = f log w + h.
        return 1.0 / self.f.at(c_age - self.model.kappa0, b_age)

    def value(self, c_age, b_age, wealth):
        t = c_age - self.model.kappa0
        return self.f.at(t, b_age) * np.log(wealth) + self.h.at(t, b_age)


def _log_edge(rho, r, lam_of_tau, fT, hT, T):
    """``(f, h)`` at a truncation edge as functions of time-to-go.

    Along the edge the hazard is a known function of time, so ``f`` and ``h``
    obey linear ODEs: ``f' = 1 - (rho + lam) f`` and
    ``h' = r f - log f - 1 - (rho + lam) h``.
    """

    def rhs(tau, y):
        f, h = y
        rate = rho + lam_of_tau(tau)
        return [1.0 - rate * f, r * f - np.log(f) - 1.0 - rate * h]

    sol = solve_ivp(rhs, (0.0, T), [fT, hT], method="LSODA", dense_output=True,
                    rtol=1e-11, atol=1e-13)
    return (lambda tau: float(sol.sol(tau)[0])), (lambda tau: float(sol.sol(tau)[1]))


def solve_log_policy(rho, r, model: HazardModel, dyn: BridgeDynamics,
                     grid: Grid2D | None = None) -> LogPolicySurface:
    """Logarithmic utility: ``f`` first, then ``h`` with source ``r f - log f - 1``."""
    dyn.check_model(model)
    grid = grid or Grid2D.build(model)
    T = model.horizon
    if not rho + model.lambdaT > 0:
        raise StabilityError("rho + lambdaT must be positive")
    fT = 1.0 / (rho + model.lambdaT)
    hT = (r * fT - np.log(fT) - 1) / (rho + model.lambdaT)
    drift, D = dyn.drift, 0.5 * dyn.sigma**2

    def zeroth(t, a):
        return rho + model.hazard(a)

    f_lo, h_lo = _log_edge(rho, r, lambda tau: 0.0, fT, hT, T)
    f_hi, h_hi = _log_edge(
        rho, r, lambda tau: float(model.hazard(grid.a_max + grid.shift(T - tau))), fT, hT, T)
    f = solve_backward(
        BackwardEquation(drift, D, zeroth, lambda t, a, u: 1.0),
        grid, fT,
        bc_lo=lambda t: f_lo(T - t), bc_hi=lambda t: f_hi(T - t), kind="policy_f",
    )

    def h_source(t, a, u):
        fv = f.level(t)
        return r * fv - np.log(fv) - 1

    h = solve_backward(
        BackwardEquation(drift, D, zeroth, h_source),
        grid, hT,
        bc_lo=lambda t: h_lo(T - t), bc_hi=lambda t: h_hi(T - t), kind="policy_h",
    )
    return LogPolicySurface(f, h, rho, r, model, dyn)


@dataclass(frozen=True)
class ConstantHazard:
    """Ageless mortality: the hazard never changes. Duck-types the survival
    interface of :class:`HazardModel` used by :func:`deterministic_plan`."""

    rate: float
    horizon: float = 0.0

    @property
    def lambdaT(self):
        return self.rate

    def cumulative_hazard(self, s):
        return self.rate * np.asarray(s, dtype=float)

    def survival(self, s):
        return np.exp(-self.cumulative_hazard(s))


@dataclass
class DeterministicPlan:
    """Consumption and wealth under deterministic ageing without pension income.

    Wealth only reaches zero asymptotically; the depletion horizon is taken as
    infinite, with the constant-hazard tail past ``T`` integrated in closed form.
    """

    c0: float
    w0: float
    prefs: Preferences
    model: object

    @property
    def rate(self):
        return self.c0 / self.w0

    def discounted_weight(self, s):
        """``exp((k - r) s) * p(s)**(1/gamma)``."""
        p = self.prefs
        s = np.asarray(s, dtype=float)
        return np.exp(((p.r * (1 - p.gamma) - p.rho) * s - self.model.cumulative_hazard(s)) / p.gamma)

    def consumption(self, s):
        p = self.prefs
        s = np.asarray(s, dtype=float)
        return self.c0 * np.exp(p.k * s) * self.model.survival(s) ** (1 / p.gamma)

    def wealth(self, t):
        spent = _weight_integral(self.prefs, self.model, t)
        return (self.w0 - self.c0 * spent) * np.exp(self.prefs.r * t)


def _weight_integral(prefs, model, t):
    """``int_0^t exp((k - r) s) p(s)**(1/gamma) ds`` (``t`` may be ``inf``)."""
    T = model.horizon
    g = prefs.gamma

    def weight(s):
        return np.exp(((prefs.r * (1 - g) - prefs.rho) * s - model.cumulative_hazard(s)) / g)

    head_end = min(t, T)
    head = quad(weight, 0.0, head_end, epsabs=1e-14, epsrel=1e-13, limit=200)[0] if head_end > 0 else 0.0
    if t <= T:
        return head
    # Past T the weight decays exponentially at rate gap/gamma.
    rate = prefs.discount_gap(model.lambdaT) / g
    tail = weight(T) * (1 - np.exp(-rate * (t - T))) / rate if np.isfinite(t) else weight(T) / rate
    return head + tail


def deterministic_plan(prefs: Preferences, model, w0=1.0) -> DeterministicPlan:
    """Closed-form plan for deterministic ageing (biological age equals chronological)."""
    prefs.check_stability(model.lambdaT)
    norm = _weight_integral(prefs, model, np.inf)
    return DeterministicPlan(w0 / norm, w0, prefs, model)


@dataclass
class CharacteristicsCurve:
    times: np.ndarray
    b_ages: np.ndarray
    spending: np.ndarray
    kappa0: float

    @property
    def c_ages(self):
        return self.kappa0 + self.times

    def rate_at(self, t):
        return float(np.interp(t, self.times, self.spending))


def characteristic_path(dyn: BridgeDynamics, a0, t):
    """Deterministic B-age path ``kappa_t + (a0 - kappa0) ((T - t)/T)**xi``."""
    T = dyn.horizon
    t = np.asarray(t, dtype=float)
    return dyn.kappa0 + t + (a0 - dyn.kappa0) * ((T - t) / T) ** dyn.xi


def characteristics_approx(prefs: Preferences, model: HazardModel, dyn: BridgeDynamics,
                           a0=None, times=None) -> CharacteristicsCurve:
    """Leading-order spending rate along the deterministic B-age path from ``a0``.

    Integrates the linear equation for ``G = F**(1/gamma)`` backward from
    ``G(T) = f_T**(1/gamma)``; the spending rate is ``1/G``.
    """
    dyn.check_model(model)
    prefs.check_stability(model.lambdaT)
    a0 = dyn.start_age if a0 is None else a0
    T = model.horizon
    g = prefs.gamma
    times = np.linspace(0.0, T, 201) if times is None else np.asarray(times, dtype=float)

    def rhs(t, G):
        lam = model.hazard(characteristic_path(dyn, a0, t))
        return -1.0 - (prefs.r * (1 - g) - prefs.rho - lam) / g * G

    gT = g / prefs.discount_gap(model.lambdaT)
    sol = solve_ivp(rhs, (T, 0.0), [gT], method="DOP853", dense_output=True, rtol=1e-13, atol=1e-14)
    G = sol.sol(times)[0]
    return CharacteristicsCurve(times, characteristic_path(dyn, a0, times), 1.0 / G, dyn.kappa0)
