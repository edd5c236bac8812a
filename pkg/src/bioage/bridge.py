"""Generalized Brownian-bridge dynamics for biological age.

Biological age is ``A_t = kappa_t + Y_t`` with chronological age
``kappa_t = kappa0 + t`` and

    dY_t = -xi * Y_t / (T - t) dt + sigma dB_t,

so that ``Y_T = 0``. Transitions of ``Y`` are Gaussian with closed-form
moments, which the simulators use directly (no Euler discretization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hazard import HazardModel

# Paths are simulated in blocks of this size; each block owns a child seed
# stream, so results do not depend on how blocks are scheduled.
BLOCK_SIZE = 8192


@dataclass(frozen=True)
class BridgeDynamics:
    xi: float = 1.0
    sigma: float = 0.3
    kappa0: float = 60.0
    horizon: float = 50.0
    a0: float | None = None

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @classmethod
    def for_model(cls, model: HazardModel, xi=1.0, sigma=0.3, a0=None) -> "BridgeDynamics":
        return cls(float(xi), float(sigma), model.kappa0, model.horizon, a0)

    @property
    def start_age(self) -> float:
        return self.kappa0 if self.a0 is None else self.a0

    @property
    def kappaT(self) -> float:
        return self.kappa0 + self.horizon

    def kappa(self, t):
        return self.kappa0 + np.asarray(t, dtype=float)

    def drift(self, t, a):
        """Drift of biological age, ``1 + xi*(kappa_t - a)/(T - t)``, for ``t < T``."""
        return 1.0 + self.xi * (self.kappa0 + t - np.asarray(a, dtype=float)) / (self.horizon - t)

    def check_model(self, model: HazardModel):
        if abs(model.kappa0 - self.kappa0) > 1e-12 or abs(model.horizon - self.horizon) > 1e-12:
            raise ValueError(
                "hazard model and bridge dynamics disagree on kappa0/horizon: "
                f"({model.kappa0}, {model.horizon}) vs ({self.kappa0}, {self.horizon})"
            )

    def conditional_moments(self, s, t, ys):
        """Mean and variance of ``Y_t`` given ``Y_s = ys``."""
        T = self.horizon
        if s < 0 or not s < t or not t < T:
            raise ValueError(f"need 0 <= s < t < T, got s={s}, t={t}, T={T}")
        ratio = (T - t) / (T - s)
        mean = ratio**self.xi * np.asarray(ys, dtype=float)
        return mean, self.sigma**2 * (T - t) * _bridge_factor(2 * self.xi - 1, -np.log(ratio))

    def sample_transition(self, s, t, ys, rng):
        """Exact Gaussian draw of ``Y_t`` given ``Y_s = ys``."""
        mean, var = self.conditional_moments(s, t, ys)
        if var == 0:
            return mean
        return mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))

    def _step(self, s, t, y, rng):
        # Final step lands on the pin exactly.
        if t >= self.horizon:
            return np.zeros_like(y)
        return self.sample_transition(s, t, y, rng)


def _bridge_factor(delta, log_ratio):
    """``(1 - exp(-delta*L)) / delta`` with its ``delta -> 0`` limit ``L``."""
    if abs(delta) < 1e-6:
        x = delta * log_ratio
        return log_ratio * (1 - x / 2 + x * x / 6)
    return -np.expm1(-delta * log_ratio) / delta


@dataclass
class SimulatedPath:
    times: np.ndarray
    b_ages: np.ndarray
    death_time: float | None


def _time_grid(t0, t1, dt):
    n = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    return np.linspace(t0, t1, n + 1)


def simulate_path(dyn: BridgeDynamics, model: HazardModel, dt, horizon, rng) -> SimulatedPath:
    """One biological-age trajectory from ``(0, a0)`` with its death time.

    Death is drawn by comparing the trapezoidal integrated hazard with an
    independent unit exponential. Past ``T`` the age stays at ``kappaT``.
    The returned path stops at the death time or at ``horizon``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    dyn.check_model(model)
    T = dyn.horizon
    times = _time_grid(0.0, min(horizon, T), dt)
    if horizon > T:
        times = np.concatenate([times, _time_grid(T, horizon, dt)[1:]])
    threshold = rng.exponential()
    y = dyn.start_age - dyn.kappa0
    ages = [dyn.start_age]
    H = 0.0
    lam_prev = float(model.hazard(dyn.start_age))
    death = None
    for k in range(1, len(times)):
        s, t = times[k - 1], times[k]
        if s < T:
            y = float(dyn._step(s, t, y, rng))
        a = dyn.kappa0 + min(t, T) + y
        lam = float(model.hazard(a))
        dH = 0.5 * (lam_prev + lam) * (t - s)
        if H + dH >= threshold:
            death = s + (t - s) * (threshold - H) / dH
            break
        H += dH
        lam_prev = lam
        ages.append(a)
    n = len(ages)
    return SimulatedPath(times[:n], np.array(ages), death)


@dataclass
class PathBatch:
    """End state of a batch of paths simulated from a common start."""

    final_ages: np.ndarray  # B-age at t_end (meaningful where alive)
    alive: np.ndarray  # survived to t_end
    death_times: np.ndarray  # inf where not resolved before t_end
    y_start: np.ndarray
    y_mid: np.ndarray | None = None  # Y at the optional probe time


def _simulate_block(dyn, model, t0, a0, n, dt, t_end, seed_seq, probe):
    rng = np.random.default_rng(seed_seq)
    T = dyn.horizon
    threshold = rng.exponential(size=n)
    y = np.full(n, a0 - (dyn.kappa0 + t0))
    y0 = y.copy()
    H = np.zeros(n)
    death = np.full(n, np.inf)
    y_mid = None
    sim_end = min(t_end, T)
    if sim_end > t0:
        lam_prev = model.hazard(dyn.kappa0 + t0 + y)
        times = _time_grid(t0, sim_end, dt)
        for k in range(1, len(times)):
            s, t = times[k - 1], times[k]
            y = dyn._step(s, t, y, rng)
            lam = model.hazard(dyn.kappa0 + t + y)
            dH = 0.5 * (lam_prev + lam) * (t - s)
            crossed = np.isinf(death) & (H + dH >= threshold)
            if crossed.any():
                death[crossed] = s + (t - s) * (threshold[crossed] - H[crossed]) / dH[crossed]
            H += dH
            lam_prev = lam
            if probe is not None and abs(t - probe) < 1e-9:
                y_mid = y.copy()
            if probe is None and not np.isinf(death).any():
                break  # every path in the block has died
    if t_end > T:
        # Hazard is constant at lambdaT once ageing stops: exact exponential residual.
        pending = np.isinf(death)
        death[pending] = max(t0, T) + (threshold[pending] - H[pending]) / model.lambdaT
    alive = death > t_end
    final = dyn.kappa0 + sim_end + (y if t_end < T else 0.0)
    return np.broadcast_to(final, (n,)).copy(), alive, death, y0, y_mid


def simulate_paths(
    dyn: BridgeDynamics,
    model: HazardModel,
    n_paths,
    dt=1 / 48,
    seed=0,
    t0=0.0,
    a0=None,
    t_end=None,
    probe=None,
    workers=1,
) -> PathBatch:
    """Vectorized simulation of ``n_paths`` paths from ``(t0, a0)`` to ``t_end``.

    With ``t_end`` beyond the horizon (``inf`` allowed) death times are
    resolved with the exact exponential residual lifetime once ageing has
    stopped; otherwise deaths after ``t_end`` stay ``inf``. ``probe`` records
    ``Y`` at that grid time. Block ``i`` draws from
    ``SeedSequence(seed).spawn``'s ``i``-th child, so output is identical for
    any ``workers``.
    """
    dyn.check_model(model)
    a0 = dyn.start_age if a0 is None else a0
    t_end = dyn.horizon if t_end is None else t_end
    if t_end < t0:
        raise ValueError("t_end must not precede t0")
    n_blocks = -(-n_paths // BLOCK_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(BLOCK_SIZE, n_paths - i * BLOCK_SIZE) for i in range(n_blocks)]
    jobs = [
        (dyn, model, t0, a0, sizes[i], dt, t_end, children[i], probe)
        for i in range(n_blocks)
    ]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _simulate_block(*j), jobs))
    else:
        parts = [_simulate_block(*j) for j in jobs]
    final, alive, death, y0, y_mid = (list(x) for x in zip(*parts))
    return PathBatch(
        np.concatenate(final),
        np.concatenate(alive),
        np.concatenate(death),
        np.concatenate(y0),
        None if probe is None or y_mid[0] is None else np.concatenate(y_mid),
    )
