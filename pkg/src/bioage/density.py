"""Survivor sub-density of biological age, its quantiles, and sigma calibration.

The sub-density ``g(t, a)`` integrates to the survival probability ``S(t)``
and solves the forward equation

    g_t + (mu g)_a - (sigma^2/2) g_aa + lambda(a) g = 0.

A delta start at ``(t0, a0)`` is replaced by the exact Gaussian bridge
transition a short time ``eps`` later, scaled by ``exp(-lambda(a0) eps)``;
the forward scheme takes over from there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import ndtr, ndtri

from .bridge import BridgeDynamics
from .errors import CalibrationBracketError
from .hazard import HazardModel
from .pde import Grid2D, Surface, step_forward_conservative, time_nodes
from .policy import Preferences, solve_log_policy, solve_policy

EPS = 0.25
RANNACHER_STEPS = 4


@dataclass(frozen=True)
class DeltaStart:
    """All mass at biological age ``a0`` (``None`` means the pinned age) at ``t0``."""

    a0: float | None = None
    t0: float = 0.0


@dataclass(frozen=True)
class DensityStart:
    """A normalized initial density given by its CDF, placed at time ``t0``."""

    cdf: Callable
    t0: float = 0.0
    label: str = "density"

    @classmethod
    def gaussian(cls, mean, sd, t0=0.0):
        if not sd > 0:
            raise ValueError("sd must be positive; use DeltaStart for a point mass")
        return cls(lambda a: ndtr((np.asarray(a) - mean) / sd), t0, f"gaussian({mean:.4g}, {sd:.4g})")


@dataclass
class SubDensitySurface:
    """Forward solution. ``g`` holds cell averages on a (usually comoving) grid."""

    g: Surface
    model: HazardModel
    dyn: BridgeDynamics
    initial: DeltaStart | DensityStart
    edges: np.ndarray  # cell edges in node coordinates
    mass: np.ndarray  # S at each stored level

    @property
    def t_start(self):
        return self.initial.t0

    @property
    def t_end(self):
        return float(self.g.t_nodes[-1])

    @property
    def start_age(self):
        if isinstance(self.initial, DeltaStart):
            return self.dyn.start_age if self.initial.a0 is None else self.initial.a0
        return None

    def _before_first_level(self, t):
        return t < self.g.t_nodes[0] - 1e-12

    def survival(self, t):
        """``S(t)``; log-linear between stored levels, exact before the first."""
        t = float(t)
        self._check_time(t)
        if self._before_first_level(t):
            return float(np.exp(-self.model.hazard(self.start_age) * (t - self.t_start)))
        return float(np.exp(np.interp(t, self.g.t_nodes, np.log(self.mass))))

    def cell_masses(self, t):
        """Mass per cell at time ``t`` (a stored level or linear in between)."""
        self._check_time(t)
        if self._before_first_level(t):
            raise ValueError(f"no grid density before t={self.g.t_nodes[0]:.6g} (delta start)")
        return self.g.level(t) * np.diff(self.edges)

    def ages(self, t):
        """Cell-edge biological ages at time ``t``."""
        return self.edges + self.g.shift(t)

    def mean_age(self, t):
        """Survivor mean biological age."""
        m = self.cell_masses(t)
        centres = 0.5 * (self.edges[1:] + self.edges[:-1]) + self.g.shift(t)
        return float(np.sum(m * centres) / np.sum(m))

    def moment(self, t, phi):
        """``int phi(a) g(t, a) da`` by the midpoint rule."""
        m = self.cell_masses(t)
        centres = 0.5 * (self.edges[1:] + self.edges[:-1]) + self.g.shift(t)
        return float(np.sum(m * phi(centres)))

    def _check_time(self, t):
        if t < self.t_start - 1e-12 or t > self.t_end + 1e-9:
            raise ValueError(f"t={t} outside the solved range [{self.t_start}, {self.t_end}]")


@dataclass
class QuantileCurve:
    t: float
    qs: np.ndarray
    ages: np.ndarray
    survival: float

    def alpha(self, q):
        """Quantile for one of the stored probabilities."""
        i = int(np.argmin(np.abs(self.qs - q)))
        if abs(self.qs[i] - q) > 1e-12:
            raise KeyError(f"quantile {q} was not computed")
        return float(self.ages[i])

    def as_dict(self):
        return dict(zip(self.qs.tolist(), self.ages.tolist()))


def _initial_masses(initial, dyn, model, edges, shift, t_first):
    """Cell masses at ``t_first`` for either kind of start."""
    ages = edges + shift
    if isinstance(initial, DeltaStart):
        a0 = dyn.start_age if initial.a0 is None else initial.a0
        t0 = initial.t0
        y0 = a0 - dyn.kappa(t0)
        mean, var = dyn.conditional_moments(t0, t_first, y0)
        centre = float(dyn.kappa(t_first) + mean)
        if var > 0:
            cdf = ndtr((ages - centre) / np.sqrt(var))
        else:
            cdf = (ages >= centre).astype(float)
        return np.diff(cdf) * np.exp(-model.hazard(a0) * (t_first - t0))
    masses = np.diff(np.asarray(initial.cdf(ages), dtype=float))
    total = masses.sum()
    if abs(total - 1.0) > 1e-6 or np.any(masses < -1e-14):
        raise ValueError(f"initial density must be normalized on the grid (mass {total:.8g})")
    return np.maximum(masses, 0.0)


def _level_times(t_first, t_end, dt, horizon, save_times):
    """Uniform steps of ``dt`` (refined near the horizon) with ``save_times`` inserted."""
    base = time_nodes(horizon, dt)
    inner = base[(base > t_first + 1e-9) & (base < t_end - 1e-9)]
    extra = [s for s in (save_times or []) if t_first + 1e-9 < s < t_end - 1e-9]
    t = np.unique(np.concatenate([[t_first], inner, extra, [t_end]]))
    # Drop slivers left by the inserted times.
    keep = np.concatenate([[True], np.diff(t) > 1e-6])
    keep[-1] = True
    return t[keep]


def solve_density(
    model: HazardModel,
    dyn: BridgeDynamics,
    grid: Grid2D | None = None,
    initial: DeltaStart | DensityStart | None = None,
    t_end=None,
    save_times=None,
    eps=EPS,
    scheme="fitted",
) -> SubDensitySurface:
    """Solve the forward equation from ``initial`` up to ``t_end < T``.

    ``grid`` supplies the age cells (its nodes are the cell edges) and the base
    time step; its time nodes are otherwise ignored. All levels are stored.
    """
    dyn.check_model(model)
    grid = grid or Grid2D.build(model)
    initial = initial or DeltaStart()
    T = model.horizon
    t_end = T - 1.0 if t_end is None else float(t_end)
    t0 = initial.t0
    if not 0 <= t0 < t_end < T:
        raise ValueError(f"need 0 <= t0 < t_end < T, got t0={t0}, t_end={t_end}")
    t_first = min(t0 + eps, t_end) if isinstance(initial, DeltaStart) else t0
    times = _level_times(t_first, t_end, grid.dt, T, save_times)

    edges = grid.a_nodes
    moving = 1.0 if grid.comoving else 0.0
    D = 0.5 * dyn.sigma**2

    def drift(t, x):
        return dyn.drift(t, x + grid.shift(t)) - moving

    def kill(t, x):
        return model.hazard(x + grid.shift(t))

    g = _initial_masses(initial, dyn, model, edges, grid.shift(t_first), t_first) / np.diff(edges)
    levels = np.empty((len(times), len(g)))
    levels[0] = g
    for k in range(1, len(times)):
        theta = 1.0 if k <= RANNACHER_STEPS else 0.5
        g = step_forward_conservative(g, times[k - 1], times[k], edges, drift, D, kill,
                                      theta=theta, scheme=scheme)
        levels[k] = g
    centres = 0.5 * (edges[1:] + edges[:-1])
    surface = Surface(times, centres, levels, "density_g", grid.origin)
    mass = levels @ np.diff(edges)
    return SubDensitySurface(surface, model, dyn, initial, edges, mass)


def quantiles(surface: SubDensitySurface, t, qs) -> QuantileCurve:
    """Survivor quantiles ``alpha(t, q)`` of biological age at time ``t``.

    The CDF is piecewise linear between cell edges (the cell masses are
    exact there), so it is inverted in closed form.
    """
    qs = np.atleast_1d(np.asarray(qs, dtype=float))
    if qs.size == 0:
        raise ValueError("no quantile levels given")
    if np.any((qs <= 0) | (qs >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    t = float(t)
    if t > surface.model.horizon:
        raise ValueError("t beyond the horizon")
    surface._check_time(t)
    if surface._before_first_level(t):
        return _quantiles_before_grid(surface, t, qs)
    masses = surface.cell_masses(t)
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    S = cdf[-1]
    ages = surface.ages(t)
    target = qs * S
    # The first edge where the CDF reaches the target bounds the cell holding it.
    j = np.clip(np.searchsorted(cdf, target, side="left"), 1, len(cdf) - 1)
    lo, hi = cdf[j - 1], cdf[j]
    w = np.where(hi > lo, (target - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
    alpha = ages[j - 1] + w * (ages[j] - ages[j - 1])
    return QuantileCurve(t, qs, alpha, float(S))


def _quantiles_before_grid(surface, t, qs):
    a0 = surface.start_age
    S = surface.survival(t)
    t0 = surface.t_start
    if t <= t0 + 1e-12:
        return QuantileCurve(t, qs, np.full(qs.shape, float(a0)), S)
    dyn = surface.dyn
    mean, var = dyn.conditional_moments(t0, t, a0 - dyn.kappa(t0))
    centre = float(dyn.kappa(t) + mean)
    return QuantileCurve(t, qs, centre + np.sqrt(var) * ndtri(qs), S)


def population_hazard(surface: SubDensitySurface, t, step=None):
    """``-d log S / dt`` by a centred difference of width ``2*step``.

    Where the centred stencil would leave the solved range the equivalent
    identity ``int lambda g da / S`` is used instead.
    """
    t = float(t)
    surface._check_time(t)
    if step is None:
        step = min(surface.g.t_nodes[1] - surface.g.t_nodes[0], 0.05)
    lo, hi = t - step, t + step
    if lo < surface.t_start or hi > surface.t_end:
        if surface._before_first_level(t):
            return float(surface.model.hazard(surface.start_age))
        return surface.moment(t, surface.model.hazard) / surface.survival(t)
    return -(np.log(surface.survival(hi)) - np.log(surface.survival(lo))) / (hi - lo)


def _same_parameters(policy, surface):
    p, d = policy.dyn, surface.dyn
    same = (policy.model == surface.model and p.xi == d.xi and p.sigma == d.sigma
            and p.kappa0 == d.kappa0 and p.horizon == d.horizon)
    if not same:
        raise ValueError("policy and density were solved with different parameters")


def spending_band(policy, surface: SubDensitySurface, t, q_lo=0.05, q_hi=0.95):
    """Spending rates at the ``q_lo`` and ``q_hi`` B-age quantiles at time ``t``.

    Spending rises with biological age, so the first entry is the lower rate.
    """
    _same_parameters(policy, surface)
    curve = quantiles(surface, t, [q_lo, q_hi])
    c_age = surface.model.kappa0 + t
    lo, hi = (float(policy.spending_rate(c_age, b)) for b in curve.ages)
    return lo, hi


# ---------------------------------------------------------------------------
# Calibration of sigma from two consumption-rate intervals


@dataclass(frozen=True)
class ConsumptionCI:
    """Observed spending-rate interval at one chronological age."""

    c_age: float
    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low <= self.high < 1:
            raise ValueError(f"need 0 < low <= high < 1, got [{self.low}, {self.high}]")

    @property
    def width(self):
        return self.high - self.low


@dataclass
class CalibrationResult:
    sigma: float
    objective: float
    evaluations: dict = field(default_factory=dict)  # sigma -> objective
    predicted: tuple | None = None  # model CI at the second age


def _policy_for(prefs, model, dyn):
    if prefs.gamma == 1:
        return solve_log_policy(prefs.rho, prefs.r, model, dyn)
    return solve_policy(prefs, model, dyn)


def invert_spending(policy, c_age, rate, model):
    """Biological age at which ``policy`` spends ``rate`` at chronological age ``c_age``."""
    t = c_age - model.kappa0
    f = policy.f
    x = f.a_nodes
    lo_age, hi_age = x[1] + f.shift(t), x[-2] + f.shift(t)

    def gap(b):
        return float(policy.spending_rate(c_age, b)) - rate

    g_lo, g_hi = gap(lo_age), gap(hi_age)
    if g_lo > 0 or g_hi < 0:
        raise ValueError(f"spending rate {rate:.6g} not attained at age {c_age} on the grid")
    return brentq(gap, lo_age, hi_age, xtol=1e-10, rtol=1e-14)


def predicted_ci(policy, model, dyn, first: ConsumptionCI, second_age, q=0.05, grid=None):
    """Consumption interval at ``second_age`` implied by ``first`` under ``dyn``.

    The first interval is mapped to a B-age interval, a Gaussian (or a point
    mass when the interval has zero width) is fitted to it as the initial
    density, the forward equation is solved, and the later B-age quantiles
    are mapped back to spending rates.
    """
    t0 = first.c_age - model.kappa0
    t1 = second_age - model.kappa0
    b_lo = invert_spending(policy, first.c_age, first.low, model)
    b_hi = invert_spending(policy, first.c_age, first.high, model)
    mean = 0.5 * (b_lo + b_hi)
    sd = (b_hi - b_lo) / (2 * ndtri(1 - q))
    initial = DensityStart.gaussian(mean, sd, t0) if sd > 1e-9 else DeltaStart(mean, t0)
    density = solve_density(model, dyn, grid, initial, t_end=t1)
    return spending_band(policy, density, t1, q, 1 - q)


def calibration_objective(observed, sigma, prefs: Preferences, model: HazardModel, xi=1.0,
                          q=0.05, grid=None, _cache=None):
    """Squared endpoint mismatch at the second age, in percentage points squared."""
    first, second = sorted(observed, key=lambda ci: ci.c_age)
    dyn = BridgeDynamics.for_model(model, xi=xi, sigma=sigma)
    key = round(float(sigma), 12)
    if _cache is not None and key in _cache:
        policy = _cache[key]
    else:
        policy = _policy_for(prefs, model, dyn)
        if _cache is not None:
            _cache[key] = policy
    lo, hi = predicted_ci(policy, model, dyn, first, second.c_age, q, grid)
    return 1e4 * ((lo - second.low) ** 2 + (hi - second.high) ** 2), (lo, hi)


def calibrate_sigma(observed, prefs: Preferences, model: HazardModel, xi=1.0,
                    bracket=(0.0, 1.0), q=0.05, xatol=1e-3, grid=None) -> CalibrationResult:
    """Fit ``sigma`` to two consumption intervals by bounded scalar minimization.

    Raises :class:`CalibrationBracketError` for an invalid bracket or when the
    best fit sits on the upper end of it (the optimum lies beyond).
    """
    if len(observed) != 2:
        raise ValueError("calibration needs exactly two consumption intervals")
    if observed[0].c_age == observed[1].c_age:
        raise ValueError("the two intervals must be at different ages")
    lo, hi = bracket
    if not 0 <= lo < hi:
        raise CalibrationBracketError(f"invalid sigma bracket {bracket}")
    cache, evaluations, predicted = {}, {}, {}

    def objective(sigma):
        try:
            value, ci = calibration_objective(observed, sigma, prefs, model, xi, q, grid, cache)
        except ValueError:
            value, ci = np.inf, None
        evaluations[float(sigma)] = value
        predicted[float(sigma)] = ci
        return value if np.isfinite(value) else 1e12

    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": xatol})
    # The bounded search never evaluates the end points; check both.
    best = float(res.x)
    for end in (lo, hi):
        if objective(end) < evaluations[best]:
            best = end
    if hi - best < 2 * xatol:
        raise CalibrationBracketError(
            f"best sigma {best:.4g} sits on the upper bracket end {hi}; widen the bracket")
    return CalibrationResult(best, evaluations[best], evaluations, predicted[best])
