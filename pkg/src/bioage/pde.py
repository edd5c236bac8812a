"""Finite-difference machinery shared by the backward and forward solvers.

Backward equations have the common form

    u_t + mu(t, a) u_a + D u_aa - c(t, a) u + S(t, a, u) = 0,   t < T,

and are marched from a terminal level at ``T`` towards ``t = 0``. Advection
is upwinded by the sign of ``mu`` and taken fully implicit; diffusion and
the zeroth-order term use a theta scheme (Crank-Nicolson by default). A
nonlinear source is resolved by Picard iteration within each step.

The forward (Fokker-Planck) equation

    g_t + (mu g)_a - D g_aa + k(t, a) g = 0

is discretized in flux form on cell centres with zero-flux truncation
boundaries, so the transport part conserves mass to round-off. The killing
term is applied by Strang splitting with exact exponential factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverError
from .hazard import HazardModel


def tridiag_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system.

    ``lower[i]`` multiplies ``x[i-1]`` in row ``i`` (``lower[0]`` unused) and
    ``upper[i]`` multiplies ``x[i+1]`` (``upper[-1]`` unused).
    """
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def tridiag_apply(lower, diag, upper, x):
    y = diag * x
    y[1:] += lower[1:] * x[:-1]
    y[:-1] += upper[:-1] * x[1:]
    return y


def time_nodes(horizon, dt, refine_window=2.0, dt_min=1e-4):
    """Times in ``[0, horizon]``: uniform ``dt`` up to ``horizon - refine_window``,
    then geometric steps shrinking towards the horizon.

    In the refined stretch every step satisfies ``dt_k / (T - t_k) = dt/refine_window``
    measured at the earlier node, so a drift growing like ``1/(T - t)`` stays
    resolved. The last step is ``[T - dt_min', T]``.
    """
    window = min(refine_window, horizon)
    n_uniform = int(round((horizon - window) / dt))
    if abs(n_uniform * dt - (horizon - window)) > 1e-9:
        window = horizon - n_uniform * dt
    uniform = np.linspace(0.0, horizon - window, n_uniform + 1) if n_uniform else np.array([0.0])
    if window <= 0:
        return uniform
    q = 1.0 - min(dt / window, 0.5)
    k = int(np.ceil(np.log(dt_min / window) / np.log(q)))
    gaps = window * q ** np.arange(1, k + 1)
    return np.concatenate([uniform, horizon - gaps, [horizon]])


@dataclass
class Grid2D:
    """Rectangular (time x age-coordinate) grid.

    With ``origin=None`` the nodes are biological ages. With a number the grid
    is comoving: node ``x`` at time ``t`` stands for the age ``origin + t + x``,
    so the nodes follow chronological age and the pinned path ``a = kappa_t``
    sits on the node ``x = 0`` for all ``t``.
    """

    t_nodes: np.ndarray
    a_nodes: np.ndarray
    da: float
    dt: float
    origin: float | None = None

    @classmethod
    def build(
        cls,
        model: HazardModel,
        da=0.1,
        dt=0.05,
        below=90.0,
        above=50.0,
        refine_window=2.0,
        dt_min=1e-4,
        comoving=True,
    ) -> "Grid2D":
        """Default grid for ``model``.

        Comoving grids cover ``[kappa_t - below, kappa_t + above]`` at every
        ``t``; fixed grids cover ``[kappa0 - below, kappaT + above]``.
        """
        if below <= 30 or above <= 20:
            raise ValueError("age domain must extend more than 30y below and 20y above the pinned path")
        t = time_nodes(model.horizon, dt, refine_window, dt_min)
        if comoving:
            lo, hi, origin = -below, above, model.kappa0
        else:
            lo, hi, origin = model.kappa0 - below, model.kappaT + above, None
        n = int(round((hi - lo) / da))
        a = np.linspace(lo, hi, n + 1)
        return cls(t, a, float(a[1] - a[0]), float(dt), origin)

    @property
    def comoving(self):
        return self.origin is not None

    def shift(self, t):
        """Age represented by node coordinate 0 at time ``t``."""
        return 0.0 if self.origin is None else self.origin + t

    def ages(self, t):
        return self.a_nodes + self.shift(t)

    @property
    def a_min(self):
        return self.a_nodes[0]

    @property
    def a_max(self):
        return self.a_nodes[-1]

    @property
    def horizon(self):
        return self.t_nodes[-1]

    def refined(self, factor=2) -> "Grid2D":
        """Same domain with ``da`` and the time steps divided by ``factor``."""
        a = np.linspace(self.a_min, self.a_max, (len(self.a_nodes) - 1) * factor + 1)
        t = [self.t_nodes[0]]
        for lo, hi in zip(self.t_nodes[:-1], self.t_nodes[1:]):
            t.extend(np.linspace(lo, hi, factor + 1)[1:])
        return Grid2D(np.array(t), a, float(a[1] - a[0]), self.dt / factor, self.origin)


KINDS = ("erl", "policy_f", "policy_h", "density_g", "generic")


@dataclass
class Surface:
    """A field sampled on ``t_nodes x a_nodes`` (rows are time levels).

    ``origin`` has the meaning it has on :class:`Grid2D`; :meth:`at` takes
    biological ages either way.
    """

    t_nodes: np.ndarray
    a_nodes: np.ndarray
    values: np.ndarray
    kind: str = "generic"
    origin: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.values.shape != (len(self.t_nodes), len(self.a_nodes)):
            raise ValueError("values shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise SolverError(f"{self.kind} surface has non-finite values")

    def shift(self, t):
        return 0.0 if self.origin is None else self.origin + t

    def check_bounds(self, t, x):
        """Raise ``ValueError`` unless ``t`` and node coordinate ``x`` are on the grid."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        tol = 1e-9
        if np.any(t < self.t_nodes[0] - tol) or np.any(t > self.t_nodes[-1] + tol):
            raise ValueError(f"time outside [{self.t_nodes[0]}, {self.t_nodes[-1]}]")
        if np.any(x < self.a_nodes[0] - tol) or np.any(x > self.a_nodes[-1] + tol):
            lo, hi = self.a_nodes[0] + self.shift(t), self.a_nodes[-1] + self.shift(t)
            raise ValueError(f"age outside [{lo:.6g}, {hi:.6g}] at t={float(t):.6g}")

    def level(self, t):
        """Values at time ``t``, interpolated linearly between stored levels."""
        self.check_bounds(t, self.a_nodes[0])
        j = int(np.searchsorted(self.t_nodes, t))
        if j < len(self.t_nodes) and abs(self.t_nodes[j] - t) < 1e-9:
            return self.values[j]
        if j > 0 and abs(self.t_nodes[j - 1] - t) < 1e-9:
            return self.values[j - 1]
        j = min(max(j, 1), len(self.t_nodes) - 1)
        t0, t1 = self.t_nodes[j - 1], self.t_nodes[j]
        w = (t - t0) / (t1 - t0)
        return (1 - w) * self.values[j - 1] + w * self.values[j]

    def at(self, t, a):
        """Interpolated value at time ``t`` and biological age ``a`` (scalar or array)."""
        x = np.asarray(a, dtype=float) - self.shift(t)
        self.check_bounds(t, x)
        return np.interp(x, self.a_nodes, self.level(t))


@dataclass(frozen=True)
class BackwardEquation:
    """Coefficients of ``u_t + mu u_a + D u_aa - c u + S(t, a, u) = 0``."""

    drift: Callable  # (t, a) -> mu
    diffusion: float  # D = sigma^2 / 2
    zeroth: Callable  # (t, a) -> c
    source: Callable = field(default=lambda t, a, u: 0.0)  # (t, a, u) -> S
    nonlinear: bool = False


def in_frame(eq: BackwardEquation, origin) -> BackwardEquation:
    """Rewrite ``eq`` in comoving coordinates ``x = a - origin - t``.

    Returns ``eq`` itself for a fixed frame.
    """
    if origin is None:
        return eq

    def drift(t, x):
        return eq.drift(t, x + (origin + t)) - 1.0

    def zeroth(t, x):
        return eq.zeroth(t, x + (origin + t))

    def source(t, x, u):
        return eq.source(t, x + (origin + t), u)

    return BackwardEquation(drift, eq.diffusion, zeroth, source, eq.nonlinear)


def step_backward(u_next, t_next, t_prev, a, eq: BackwardEquation, bc_lo, bc_hi,
                  theta=0.5, picard_tol=1e-10, max_picard=50):
    """One step from level ``t_next`` back to ``t_prev < t_next``.

    Dirichlet values ``bc_lo``/``bc_hi`` are imposed at the end nodes of the
    earlier level. Nodes where ``h * c > 1`` take the zeroth-order term fully
    implicit, which keeps the update positive where the hazard is huge.
    Returns the earlier level.
    """
    h = t_next - t_prev
    da = a[1] - a[0]
    D = eq.diffusion
    mu = np.broadcast_to(eq.drift(t_prev, a), a.shape)
    mup, mum = np.maximum(mu, 0.0), np.minimum(mu, 0.0)
    c = np.broadcast_to(eq.zeroth(t_prev, a), a.shape)
    c_next = np.broadcast_to(eq.zeroth(t_next, a), a.shape)
    theta_c = np.where(h * np.maximum(c, c_next) > 1.0, 1.0, theta)

    # Explicit share of diffusion and reaction, evaluated on the later level.
    explicit = np.zeros_like(a)
    lap = np.zeros_like(a)
    lap[1:-1] = (u_next[2:] - 2 * u_next[1:-1] + u_next[:-2]) / da**2
    explicit[1:-1] = ((1 - theta) * D * lap - (1 - theta_c) * c_next * u_next)[1:-1]
    s_next = np.broadcast_to(eq.source(t_next, a, u_next), a.shape)

    lower = -h * (theta * D / da**2 - mum / da)
    upper = -h * (theta * D / da**2 + mup / da)
    diag = 1 + h * (theta * 2 * D / da**2 + theta_c * c + mup / da - mum / da)
    lower[0] = upper[0] = upper[-1] = lower[-1] = 0.0
    diag[0] = diag[-1] = 1.0

    u = u_next.copy()
    for it in range(max_picard):
        s_prev = np.broadcast_to(eq.source(t_prev, a, u), a.shape)
        rhs = u_next + h * explicit + h * (theta * s_prev + (1 - theta) * s_next)
        rhs[0], rhs[-1] = bc_lo, bc_hi
        u_new = tridiag_solve(lower, diag, upper, rhs)
        if not eq.nonlinear:
            return u_new
        change = np.max(np.abs(u_new - u)) / max(np.max(np.abs(u_new)), 1e-300)
        u = u_new
        if change < picard_tol:
            return u
    raise SolverError(f"Picard iteration did not converge at t={t_prev:.6g} (change {change:.3g})")


def solve_backward(eq: BackwardEquation, grid: Grid2D, terminal, bc_lo, bc_hi, kind="generic",
                   theta=0.5, picard_tol=1e-10, max_picard=50) -> Surface:
    """March ``eq`` from ``terminal`` at the horizon back to ``t = 0`` on ``grid``.

    ``eq`` is written in biological age; it is moved to the grid's frame here.
    ``bc_lo``/``bc_hi`` are callables of ``t`` giving the Dirichlet data at
    the end nodes.
    """
    t_nodes, x = grid.t_nodes, grid.a_nodes
    local = in_frame(eq, grid.origin)
    values = np.empty((len(t_nodes), len(x)))
    values[-1] = np.broadcast_to(terminal, x.shape)
    for j in range(len(t_nodes) - 1, 0, -1):
        values[j - 1] = step_backward(
            values[j], t_nodes[j], t_nodes[j - 1], x, local,
            bc_lo(t_nodes[j - 1]), bc_hi(t_nodes[j - 1]), theta, picard_tol, max_picard,
        )
    return Surface(np.asarray(t_nodes, dtype=float), x, values, kind, grid.origin)


def _bernoulli(x):
    """``x / (exp(x) - 1)`` with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    out[small] = 1 - x[small] / 2 + x[small] ** 2 / 12
    pos = x >= 1e-6
    neg = x <= -1e-6
    # For x > 0 rewrite with exp(-x) so large arguments underflow to 0 quietly.
    out[pos] = x[pos] * np.exp(-x[pos]) / -np.expm1(-x[pos])
    out[neg] = x[neg] / np.expm1(x[neg])
    return out


def _transport_matrix(edges, mu, D, scheme):
    """Tridiagonal flux-form operator for ``-(mu g)_a + D g_aa`` with zero-flux ends.

    ``mu`` is given at the interior cell faces. ``scheme="fitted"`` uses the
    exponentially fitted (Scharfetter-Gummel) face flux, which reduces to
    upwinding when ``D = 0``; ``scheme="upwind"`` is plain first-order upwind.
    """
    da = edges[1] - edges[0]
    n = len(edges) - 1
    if scheme == "fitted" and D > 0:
        peclet = mu * da / D
        w_left = (D / da) * _bernoulli(-peclet)
        w_right = -(D / da) * _bernoulli(peclet)
    elif scheme in ("fitted", "upwind"):
        w_left = np.maximum(mu, 0.0) + D / da
        w_right = np.minimum(mu, 0.0) - D / da
    else:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    # Face j sits between cells j and j+1 and carries flux w_left*g_j + w_right*g_{j+1}.
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    diag[:-1] -= w_left / da
    upper[:-1] -= w_right / da
    diag[1:] += w_right / da
    lower[1:] += w_left / da
    return lower, diag, upper


def step_forward_conservative(g, t, t_next, edges, drift, diffusion, kill,
                              theta=0.5, scheme="fitted", neg_tol=1e-12):
    """Advance the sub-density ``g`` (cell averages) from ``t`` to ``t_next``.

    ``drift(t, x)`` is evaluated at cell faces and ``kill(t, x)`` at cell
    centres, both in the coordinates of ``edges``. The killing factor is
    split symmetrically around the transport step, using the rate at the
    start for the first half and at the end for the second. Raises ``SolverError`` if a value falls below
    ``-neg_tol * max(g)``; smaller negative round-off is set to zero.
    """
    h = t_next - t
    faces = edges[1:-1]
    cells = 0.5 * (edges[1:] + edges[:-1])
    g = g * np.exp(-0.5 * h * np.asarray(kill(t, cells), dtype=float))
    lo1, di1, up1 = _transport_matrix(edges, drift(t_next, faces), diffusion, scheme)
    rhs = g
    if theta < 1:
        lo0, di0, up0 = _transport_matrix(edges, drift(t, faces), diffusion, scheme)
        rhs = g + h * (1 - theta) * tridiag_apply(lo0, di0, up0, g)
    g = tridiag_solve(-h * theta * lo1, 1 - h * theta * di1, -h * theta * up1, rhs)
    g = g * np.exp(-0.5 * h * np.asarray(kill(t_next, cells), dtype=float))
    floor = g.min()
    if floor < 0:
        if floor < -neg_tol * g.max():
            raise SolverError(f"negative density {floor:.3g} at t={t_next:.6g}")
        g = np.maximum(g, 0.0)
    return g


def residual(surface: Surface, eq: BackwardEquation, t_max=None, band=None):
    """Max-norm residual of ``eq`` on the interior nodes of ``surface``.

    Centred differences in both directions, taken in the surface's own frame;
    levels later than ``t_max`` are skipped (the drift is singular at the
    horizon). ``band = (lo, hi)`` restricts the nodes (in node coordinates),
    which keeps the thin layers next to the Dirichlet edges out of the norm.
    """
    local = in_frame(eq, surface.origin)
    t = surface.t_nodes
    x = surface.a_nodes
    u = surface.values
    dx = x[1] - x[0]
    xi = x[1:-1]
    inside = np.ones(xi.shape, bool) if band is None else (xi >= band[0]) & (xi <= band[1])
    worst = 0.0
    for j in range(1, len(t) - 1):
        if t_max is not None and t[j] > t_max:
            break
        ut = (u[j + 1, 1:-1] - u[j - 1, 1:-1]) / (t[j + 1] - t[j - 1])
        ux = (u[j, 2:] - u[j, :-2]) / (2 * dx)
        uxx = (u[j, 2:] - 2 * u[j, 1:-1] + u[j, :-2]) / dx**2
        r = (ut + local.drift(t[j], xi) * ux + local.diffusion * uxx
             - local.zeroth(t[j], xi) * u[j, 1:-1] + local.source(t[j], xi, u[j, 1:-1]))
        worst = max(worst, float(np.max(np.abs(r[inside]))))
    return worst
