"""Whole-curve estimation: the marginal as a function of the hyperparameter.

The same cached samples that produced the grid values extend the
estimate to arbitrary hyperparameter values.  For any lam in the domain
the kernel value at grid point i averages

    exp( log psi_lam(theta) + log p(lam) - lse(theta) )

over the draws at i, where lse is the cached log-sum-exp over the
simulation columns; the curve value is the stationary-weighted sum of
kernel values.  Evaluating at a simulation point reproduces the grid
value (the kernel column coincides with the transition column), the
hyperparameter gradient follows by differentiating through the
exponential, and ratios of integrated test-function kernels estimate
posterior expectations.
"""

from __future__ import annotations

import numpy as np

from .emus import EmusEstimate, segment_mean
from .errors import DegenerateWeightError
from .grids import HyperGrid, trapezoid_weights
from .models import Model

__all__ = ["FunctionalEstimate"]


class FunctionalEstimate:
    """Curve, gradient, and expectation estimators built on a fitted grid.

    Parameters
    ----------
    emus : EmusEstimate
    model : Model
        The model that produced the bank (needed to evaluate new
        log-weights at off-grid hyperparameter values).
    """

    def __init__(self, emus: EmusEstimate, model: Model):
        self.emus = emus
        self.model = model
        self._thetas, self._offsets = emus.bank.flattened()

    # -- kernel machinery -------------------------------------------------

    def _log_numerators(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return self.model.log_psi(self._thetas, lam) + self.model.log_prior(lam)

    def _ratios(self, lam) -> np.ndarray:
        """Per-sample kernel weights exp(log psi p - lse) at one value."""
        return np.exp(self._log_numerators(lam) - self.emus.cache.lse)

    def _ratio_matrix(self, points) -> np.ndarray:
        """Kernel weights for many values at once, shape (samples, M)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        log_priors = np.array([self.model.log_prior(lam) for lam in points])
        logw = np.asarray(
            self.model.log_weight_matrix(self._thetas, points, log_priors), dtype=float
        )
        return np.exp(logw - self.emus.cache.lse[:, None])

    def kernel_values(self, lam) -> np.ndarray:
        """Mean kernel weight per grid point, shape (L,).

        At a simulation grid point this is the corresponding transition
        matrix column.
        """
        return segment_mean(self._ratios(lam), self._offsets)

    def kernel_ratio_variances(self, lam) -> np.ndarray:
        """Unbiased per-point variances of the kernel weights at lam."""
        r = self._ratios(lam)
        counts = np.diff(self._offsets)
        out = np.full(counts.size, np.nan)
        for i in range(counts.size):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            if counts[i] > 1:
                out[i] = np.var(r[lo:hi], ddof=1)
        return out

    # -- the curve ---------------------------------------------------------

    def marginal(self, lam) -> float:
        """Estimated u(lam) on the same scale as the grid values."""
        return float(self.emus.stationary @ self.kernel_values(lam))

    def marginal_many(self, points) -> np.ndarray:
        """Curve values at many hyperparameter points, shape (M,)."""
        kernel_cols = segment_mean(self._ratio_matrix(points), self._offsets)
        return self.emus.stationary @ kernel_cols

    def gradient(self, lam) -> np.ndarray:
        """Hyperparameter gradient of the curve at lam, shape (p,).

        Differentiating each kernel summand through the exponential
        multiplies it by the model's gradient of log(psi_lam p(lam)).
        """
        r = self._ratios(lam)
        g = np.asarray(self.model.grad_log_psi_prior(self._thetas, np.atleast_1d(lam)))
        weighted = segment_mean(r[:, None] * g, self._offsets)
        return self.emus.stationary @ weighted

    def curve_with_gradient(self, points):
        """Values and gradients along a set of points: (M,), (M, p)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = self.marginal_many(points)
        grads = np.stack([self.gradient(lam) for lam in points])
        return values, grads

    # -- expectations over the hyperparameter -------------------------------

    def expectation(self, phi, eval_grid: HyperGrid,
                    quad_weights: np.ndarray | None = None) -> float:
        """Posterior expectation of a latent test function phi(theta).

        Quadrature over the evaluation grid turns the kernel identity
        into the ratio estimator

            sum_l u_l sum_m h_l(lam_m) D_m  /  sum_m u(lam_m) D_m

        where h multiplies phi into each kernel summand.  A constant phi
        returns that constant exactly because numerator and denominator
        are then the same finite sum.
        """
        if quad_weights is None:
            quad_weights = trapezoid_weights(eval_grid)
        ratios = self._ratio_matrix(eval_grid.points)
        phi_vals = np.asarray(phi(self._thetas), dtype=float)
        if phi_vals.shape != (ratios.shape[0],):
            raise ValueError("phi must map the sample array to one value per sample")
        h_cols = segment_mean(ratios * phi_vals[:, None], self._offsets)
        f_cols = segment_mean(ratios, self._offsets)
        numerator = self.emus.stationary @ h_cols @ quad_weights
        denominator = self.emus.stationary @ f_cols @ quad_weights
        if not denominator > 0:
            raise DegenerateWeightError(
                "quadrature normalizer of the curve is not positive; the "
                "evaluation grid misses the estimate's support"
            )
        return float(numerator / denominator)

    def density(self, eval_grid: HyperGrid,
                quad_weights: np.ndarray | None = None) -> np.ndarray:
        """Curve values normalized by quadrature to integrate to 1."""
        if quad_weights is None:
            quad_weights = trapezoid_weights(eval_grid)
        values = self.marginal_many(eval_grid.points)
        total = values @ quad_weights
        if not total > 0:
            raise DegenerateWeightError("curve integrates to a nonpositive value")
        return values / total

    # -- summaries over evaluation grids ------------------------------------

    def profile(self, eval_grid: HyperGrid, axis: int):
        """Profile along one axis: max of the curve over the other axes.

        Returns (axis_values, profile_values).  Needs a tensor-product
        evaluation grid.
        """
        if eval_grid.axes is None:
            raise ValueError("profiles need a tensor-product evaluation grid")
        values = self.marginal_many(eval_grid.points)
        shape = tuple(a.size for a in eval_grid.axes)
        cube = values.reshape(shape)
        other = tuple(d for d in range(len(shape)) if d != axis)
        profile = cube.max(axis=other) if other else cube
        return eval_grid.axes[axis], profile

    def argmax_on(self, eval_grid: HyperGrid):
        """Highest curve value over an evaluation grid.

        Returns (point, value, flat_index); ties resolve to the first
        occurrence, which is the lexicographically smallest point under
        the grid's ordering.
        """
        values = self.marginal_many(eval_grid.points)
        idx = int(np.argmax(values))
        return eval_grid.points[idx], float(values[idx]), idx
