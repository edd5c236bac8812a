"""Expected remaining lifetime ``e(t, a)`` from the backward lifetime equation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge import BridgeDynamics
from .hazard import HazardModel
from .pde import BackwardEquation, Grid2D, Surface, solve_backward


def erl_equation(model: HazardModel, dyn: BridgeDynamics) -> BackwardEquation:
    return BackwardEquation(
        drift=dyn.drift,
        diffusion=0.5 * dyn.sigma**2,
        zeroth=lambda t, a: model.hazard(a),
        source=lambda t, a, u: 1.0,
    )


@dataclass
class ErlSurface:
    surface: Surface
    model: HazardModel
    dyn: BridgeDynamics

    def at(self, c_age, b_age):
        """Remaining lifetime in years at chronological age ``c_age`` and B-age ``b_age``."""
        t = c_age - self.model.kappa0
        return self.surface.at(t, b_age)


def solve_erl(model: HazardModel, dyn: BridgeDynamics, grid: Grid2D | None = None) -> ErlSurface:
    """Solve for ``e(t, a)`` on ``grid`` (default grid when omitted).

    Terminal value ``1/lambdaT``; ``T - t + 1/lambdaT`` at the young edge,
    where the hazard is negligible; ``1/lambda`` of the edge age at the old
    edge, where the hazard is so large that death is practically immediate.
    """
    dyn.check_model(model)
    grid = grid or Grid2D.build(model)
    T = model.horizon
    tail = 1.0 / model.lambdaT
    surface = solve_backward(
        erl_equation(model, dyn),
        grid,
        terminal=tail,
        bc_lo=lambda t: T - t + tail,
        bc_hi=lambda t: 1.0 / float(model.hazard(grid.a_max + grid.shift(t))),
        kind="erl",
    )
    return ErlSurface(surface, model, dyn)


def erl_at(surface: ErlSurface, c_age, b_age):
    return surface.at(c_age, b_age)


def erl_table(surface: ErlSurface, b_ages, c_ages):
    """Matrix of remaining lifetimes, rows ``b_ages`` and columns ``c_ages``."""
    return np.column_stack([surface.at(c, np.asarray(b_ages, dtype=float)) for c in c_ages])
