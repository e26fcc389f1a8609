"""Baselines: griddy Gibbs sampling and nearest-neighbor extrapolation.

The griddy Gibbs sampler alternates one exact draw from the local
density at the current grid value with a categorical redraw of the grid
value given the latent state, weights proportional to psi_l(theta) p_l
over the grid.  Post-burn-in visit frequencies, scaled to sum L,
estimate the same grid values as the reweighting estimator but are
subject to mixing failure when the local densities are concentrated:
moves between well-separated modes require intermediate latent states
that the sampler never visits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWeightError
from .grids import HyperGrid
from .models import Model

__all__ = ["GibbsTrace", "run_griddy_gibbs", "nearest_neighbor_extrapolate"]


@dataclass
class GibbsTrace:
    """Visit counts and run metadata of one griddy Gibbs chain."""

    visits: np.ndarray
    n_iter: int
    burn_in: int
    init_state: int
    meta: dict = field(default_factory=dict)

    @property
    def kept(self) -> int:
        return self.n_iter - self.burn_in

    def stationary_estimate(self) -> np.ndarray:
        """Visit frequencies scaled to sum L (the estimator's convention)."""
        if self.kept <= 0:
            raise ValueError("no post-burn-in iterations were kept")
        return self.visits * (self.visits.size / self.kept)


def run_griddy_gibbs(model: Model, grid: HyperGrid, n_iter: int,
                     rng: np.random.Generator, burn_in: int = 0,
                     init_state: int | None = None) -> GibbsTrace:
    """Alternate local draws and categorical grid moves; count visits.

    Each iteration draws theta from the local density at the current
    grid point, then redraws the grid point with log-weights
    log(psi_l(theta) p_l) via the Gumbel-max rule.  States reached after
    the first ``burn_in`` iterations are counted, so the kept effort is
    n_iter - burn_in latent draws (burn_in defaults to 0 to keep effort
    comparisons exact).  The chain starts at the grid midpoint state
    unless ``init_state`` says otherwise; the start is recorded in the
    trace metadata.
    """
    L = len(grid)
    if not 0 <= burn_in < n_iter:
        raise ValueError("need 0 <= burn_in < n_iter")
    state = L // 2 if init_state is None else int(init_state)
    if not 0 <= state < L:
        raise ValueError("init_state outside the grid")
    points = grid.points
    log_priors = np.array([model.log_prior(lam) for lam in points])
    visits = np.zeros(L, dtype=int)
    for t in range(n_iter):
        theta = model.sample_local(points[state], rng, 1)
        logw = np.asarray(
            model.log_weight_matrix(theta, points, log_priors), dtype=float
        ).ravel()
        if not np.any(np.isfinite(logw)):
            raise DegenerateWeightError(
                f"iteration {t}: the latent draw has zero weight against every "
                "grid value"
            )
        state = int(np.argmax(logw + rng.gumbel(size=L)))
        if t >= burn_in:
            visits[state] += 1
    return GibbsTrace(
        visits=visits, n_iter=n_iter, burn_in=burn_in,
        init_state=L // 2 if init_state is None else int(init_state),
        meta={"init_rule": "midpoint" if init_state is None else "explicit"},
    )


def nearest_neighbor_extrapolate(values: np.ndarray, sim_grid: HyperGrid,
                                 eval_grid: HyperGrid) -> np.ndarray:
    """Piecewise-constant extension of grid values to an evaluation grid.

    Each evaluation point takes the value of the Euclidean-nearest
    simulation point in the grid's working scale (log coordinates for
    log grids); ties resolve to the smallest simulation index.  This is
    the crude baseline against which the kernel-based curve is compared.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (len(sim_grid),):
        raise ValueError("need one value per simulation point")
    sim = sim_grid.working_points()
    ev = eval_grid.working_points() if eval_grid.scale == sim_grid.scale else None
    if ev is None or sim.shape[1] != eval_grid.dim:
        raise ValueError("simulation and evaluation grids must share scale and dimension")
    d2 = np.sum((ev[:, None, :] - sim[None, :, :]) ** 2, axis=-1)
    return values[np.argmin(d2, axis=1)]
