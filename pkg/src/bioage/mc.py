"""Monte Carlo estimators over simulated biological-age paths.

These are the independent check on the PDE solvers. Every estimator is a
plain average over paths from :func:`bridge.simulate_paths`, so results are
reproducible from ``(seed, n_paths, dt)`` whatever the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .bridge import BridgeDynamics, simulate_paths
from .errors import InsufficientSampleError
from .hazard import HazardModel

MIN_SURVIVORS = 100


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_paths: int
    seed: int

    def within(self, target, n_se=3.0):
        return abs(self.value - target) <= n_se * self.std_error


@dataclass(frozen=True)
class QuantileEstimate:
    q: float
    value: float
    std_error: float
    n_survivors: int


def mc_erl(model: HazardModel, dyn: BridgeDynamics, start=(0.0, None), n_paths=100_000,
           dt=1 / 48, seed=0, workers=1) -> McEstimate:
    """Mean remaining lifetime from ``start = (t, a)``; ``a=None`` means the pinned age."""
    t0, a0 = start
    T = dyn.horizon
    if t0 >= T:
        # Ageing has stopped: the residual lifetime is exponential with rate lambdaT.
        # Simulate it anyway so the estimate carries a genuine standard error.
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        life = rng.exponential(1.0 / model.lambdaT, size=n_paths)
        return _mean_estimate(life, seed)
    a0 = dyn.kappa(t0) if a0 is None else a0
    batch = simulate_paths(dyn, model, n_paths, dt=dt, seed=seed, t0=t0, a0=a0,
                           t_end=np.inf, workers=workers)
    return _mean_estimate(batch.death_times - t0, seed)


def _mean_estimate(samples, seed):
    n = len(samples)
    sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    return McEstimate(float(np.mean(samples)), float(sd / np.sqrt(n)) if n > 1 else 0.0, n, seed)


def mc_survival(model: HazardModel, dyn: BridgeDynamics, t, n_paths=100_000, dt=1 / 48,
                seed=0, a0=None, workers=1) -> McEstimate:
    """Fraction of paths alive at ``t`` with its binomial standard error."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return McEstimate(1.0, 0.0, n_paths, seed)
    batch = simulate_paths(dyn, model, n_paths, dt=dt, seed=seed, a0=a0, t_end=t, workers=workers)
    p = float(np.mean(batch.alive))
    return McEstimate(p, float(np.sqrt(p * (1 - p) / n_paths)), n_paths, seed)


def survivor_ages(model, dyn, t, n_paths=100_000, dt=1 / 48, seed=0, a0=None, workers=1):
    """Biological ages at ``t`` of the paths still alive."""
    if not t < dyn.horizon:
        raise ValueError("t must precede the horizon")
    batch = simulate_paths(dyn, model, n_paths, dt=dt, seed=seed, a0=a0, t_end=t, workers=workers)
    return batch.final_ages[batch.alive]


def mc_survivor_quantiles(model: HazardModel, dyn: BridgeDynamics, t, qs, n_paths=100_000,
                          dt=1 / 48, seed=0, a0=None, workers=1) -> list[QuantileEstimate]:
    """Empirical survivor quantiles of biological age at ``t``.

    Standard errors come from the binomial law of order statistics: the
    ranks ``n q +- sqrt(n q (1-q))`` bracket a one-SE interval, and half its
    width is reported.
    """
    ages = np.sort(survivor_ages(model, dyn, t, n_paths, dt, seed, a0, workers))
    n = len(ages)
    if n < MIN_SURVIVORS:
        raise InsufficientSampleError(f"only {n} survivors at t={t} (need {MIN_SURVIVORS})")
    out = []
    for q in np.atleast_1d(qs):
        value = float(np.quantile(ages, q))
        half = np.sqrt(n * q * (1 - q))
        lo = ages[int(np.clip(np.floor(n * q - half), 0, n - 1))]
        hi = ages[int(np.clip(np.ceil(n * q + half), 0, n - 1))]
        out.append(QuantileEstimate(float(q), value, float(0.5 * (hi - lo)), n))
    return out


def quantile_interval(estimate: QuantileEstimate, level=0.997):
    """Symmetric interval of ``level`` coverage around a quantile estimate."""
    z = norm.ppf(0.5 + level / 2)
    return estimate.value - z * estimate.std_error, estimate.value + z * estimate.std_error
