"""Variance diagnostics and spectral analysis of the estimated matrix.

The estimator's relative accuracy is controlled by two ingredients that
are both computable from the fitted object: the per-row sampling
variances of the normalized weights, and how strongly the grid chain
connects each pair of points.  The latter enters through first-visit
probabilities (probability that the chain started at i reaches j before
returning to i) and, for reversible matrices, through the spectral gap
and the group inverse of I - F.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .emus import EmusEstimate, stationary_vector
from .errors import NotReversibleError, ReducibleChainError

__all__ = [
    "hitting_probabilities",
    "weight_ratio_variances",
    "relative_variance_bound",
    "pointwise_variance_bound",
    "VarianceDiagnostics",
    "variance_diagnostics",
    "group_inverse",
    "spectral_gap",
]


def hitting_probabilities(transition: np.ndarray) -> np.ndarray:
    """First-visit probabilities Q[i, j] for all ordered pairs.

    Q[i, j] is the probability that the chain driven by the matrix,
    started at i, visits j before returning to i.  Conditioning on the
    first step gives Q[i, j] = F_ij + sum_{k not in {i, j}} F_ik h_k
    with h the absorption probabilities at j for the chain killed at i,
    which solve the linear system (I - F_BB) h = F_Bj over the states
    B = complement of {i, j}.  The diagonal is set to 1 by convention.
    """
    F = np.asarray(transition, dtype=float)
    n = F.shape[0]
    Q = np.ones((n, n))
    if n == 1:
        return Q
    if n == 2:
        Q[0, 1] = F[0, 1]
        Q[1, 0] = F[1, 0]
        return Q
    idx = np.arange(n)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            keep = idx[(idx != i) & (idx != j)]
            A = np.eye(keep.size) - F[np.ix_(keep, keep)]
            try:
                h = np.linalg.solve(A, F[keep, j])
            except np.linalg.LinAlgError as exc:
                raise ReducibleChainError(
                    f"first-visit system for pair ({i}, {j}) is singular; the "
                    "matrix has absorbing subsets"
                ) from exc
            Q[i, j] = F[i, j] + F[i, keep] @ h
    return Q


def weight_ratio_variances(estimate: EmusEstimate) -> np.ndarray:
    """Unbiased per-row variances R[i, j] of the normalized weights.

    R[i, j] is the sample variance (denominator N_i - 1) over the draws
    at grid point i of the normalized weight against column j, i.e. the
    quantity whose row means form the transition matrix.  Rows with a
    single draw are unavailable and reported as NaN, never as zero.
    """
    cache = estimate.cache
    ratios = np.exp(cache.logw - cache.lse[:, None])
    counts = cache.counts
    n = counts.size
    R = np.full((n, ratios.shape[1]), np.nan)
    for i in range(n):
        lo, hi = cache.offsets[i], cache.offsets[i + 1]
        if counts[i] > 1:
            R[i] = np.var(ratios[lo:hi], axis=0, ddof=1)
    return R


def relative_variance_bound(transition: np.ndarray, R: np.ndarray,
                            sampling_fractions: np.ndarray,
                            Q: np.ndarray | None = None) -> float:
    """Bound on the worst-case asymptotic relative variance of the grid values.

    Computes L * sum_i w_i^{-1} sum_{j != i} R_ij / Q_ij^2 where w are the
    sampling fractions N_i / N and Q the first-visit probabilities of the
    supplied matrix.  Dividing by the total sample count N approximates
    the squared relative error of any single grid value.

    A zero Q_ij against a positive R_ij makes the bound infinite, which
    is returned as such with a warning; NaN rows in R (single-draw
    points) make the bound NaN.
    """
    F = np.asarray(transition, dtype=float)
    n = F.shape[0]
    R = np.asarray(R, dtype=float)
    w = np.asarray(sampling_fractions, dtype=float)
    if Q is None:
        Q = hitting_probabilities(F)
    if np.any(np.isnan(R)):
        return float("nan")
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(off & (R > 0), R / Q**2, 0.0)
    if np.any(np.isinf(terms)) or np.any(np.isnan(terms)):
        warnings.warn(
            "a pair with positive weight variance has zero first-visit "
            "probability; the variance bound is infinite",
            RuntimeWarning,
        )
        return float("inf")
    return float(n * np.sum(terms.sum(axis=1) / w))


@dataclass
class VarianceDiagnostics:
    """Bundle of variance-related quantities for a fitted estimate."""

    R: np.ndarray
    Q: np.ndarray
    sampling_fractions: np.ndarray
    rel_var_bound: float
    eq_sample: bool
    ind_sample: bool


def variance_diagnostics(estimate: EmusEstimate,
                         transition: np.ndarray | None = None) -> VarianceDiagnostics:
    """Compute R, Q and the grid variance bound for a fitted estimate.

    ``transition`` overrides the matrix used for the first-visit
    probabilities (for instance a smoothed or exactly computed one); by
    default the estimate's own matrix is used.  The flags record whether
    the equal-allocation and independent-sampling conditions held; they
    are recorded, not enforced.
    """
    F = estimate.transition if transition is None else np.asarray(transition, dtype=float)
    R = weight_ratio_variances(estimate)
    Q = hitting_probabilities(F)
    counts = estimate.counts
    w = counts / counts.sum()
    bound = relative_variance_bound(F, R, w, Q)
    return VarianceDiagnostics(
        R=R,
        Q=Q,
        sampling_fractions=w,
        rel_var_bound=bound,
        eq_sample=bool(np.all(counts == counts[0])),
        ind_sample=bool(estimate.bank.independent),
    )


def pointwise_variance_bound(functional, lam, diagnostics: VarianceDiagnostics | None = None) -> float:
    """Bound on the asymptotic relative variance of the curve at one point.

    For an off-grid value the bound combines the grid term with the
    variances r_i(lam) of the kernel weights at lam:

        2 sum_i w_i^{-1} [ L sum_{j != i} R_ij / Q_ij^2
                           + (u_i^2 / u(lam)^2) r_i(lam) ]

    using the fitted values as plug-ins.  At a grid column lam = lam_j
    the kernel variances reduce to the corresponding column of R.
    Dividing by the total sample count N approximates the squared
    relative error of the curve value.
    """
    est = functional.emus
    if diagnostics is None:
        diagnostics = variance_diagnostics(est)
    R, Q, w = diagnostics.R, diagnostics.Q, diagnostics.sampling_fractions
    if np.any(np.isnan(R)):
        return float("nan")
    n = R.shape[0]
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        grid_terms = np.where(off & (R > 0), R / Q**2, 0.0)
    if np.any(~np.isfinite(grid_terms)):
        warnings.warn(
            "a pair with positive weight variance has zero first-visit "
            "probability; the variance bound is infinite",
            RuntimeWarning,
        )
        return float("inf")
    grid_part = n * grid_terms.sum(axis=1)
    r = functional.kernel_ratio_variances(lam)
    u_lam = functional.marginal(lam)
    if not u_lam > 0:
        return float("inf")
    point_part = (est.stationary**2 / u_lam**2) * r
    return float(2.0 * np.sum((grid_part + point_part) / w))


def _reversible_eigens(F: np.ndarray, v: np.ndarray, db_tol: float):
    """Eigendecomposition through the detailed-balance similarity.

    For a matrix in detailed balance with the probability vector v,
    D^{1/2} F D^{-1/2} (D = diag(v)) is symmetric, so F has a real
    orthogonal eigensystem in the D-weighted geometry.
    """
    imbalance = np.max(np.abs(v[:, None] * F - (v[:, None] * F).T))
    if imbalance > db_tol:
        raise NotReversibleError(
            f"detailed balance violated by {imbalance:.3e} (> {db_tol:.1e}); "
            "the similarity route needs a reversible matrix"
        )
    d = np.sqrt(v)
    S = (d[:, None] * F) / d[None, :]
    S = 0.5 * (S + S.T)
    eigvals, W = np.linalg.eigh(S)
    return eigvals, W, d


def group_inverse(transition: np.ndarray, stationary: np.ndarray | None = None,
                  method: str = "eigen", db_tol: float = 1e-8) -> np.ndarray:
    """Group inverse of I - F for an irreducible row-stochastic F.

    method="eigen" (default) uses the detailed-balance similarity: with
    D = diag(v), D^{1/2} F D^{-1/2} is symmetric, F = D^{-1/2} W E W^T D^{1/2}
    with orthogonal W, and the group inverse replaces each eigenvalue
    1 - e by its reciprocal, with 0 kept for the unit eigenvalue.  This
    route errors if detailed balance is violated beyond ``db_tol``.

    method="direct" works for any irreducible matrix through the
    fundamental-matrix identity (I - F)^# = (I - F + 1 v^T)^{-1} - 1 v^T
    with v the stationary probability vector.
    """
    F = np.asarray(transition, dtype=float)
    n = F.shape[0]
    if stationary is None:
        stationary = stationary_vector(F)
    v = np.asarray(stationary, dtype=float)
    if np.any(v <= 0):
        raise ReducibleChainError("stationary vector must be strictly positive")
    v = v / v.sum()

    if method == "direct":
        E = np.outer(np.ones(n), v)
        try:
            inv = np.linalg.solve(np.eye(n) - F + E, np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise ReducibleChainError(
                "I - F + 1 v^T is singular; the matrix is not irreducible"
            ) from exc
        return inv - E
    if method != "eigen":
        raise ValueError(f"unknown method {method!r}")

    eigvals, W, d = _reversible_eigens(F, v, db_tol)
    unit = int(np.argmax(eigvals))
    if abs(eigvals[unit] - 1.0) > 1e-8:
        raise ReducibleChainError("no unit eigenvalue found; F is not stochastic")
    others = np.delete(eigvals, unit)
    if others.size and np.max(others) > 1.0 - 1e-12:
        raise ReducibleChainError(
            "the unit eigenvalue is not simple; the matrix is reducible"
        )
    recip = np.zeros(n)
    mask = np.arange(n) != unit
    recip[mask] = 1.0 / (1.0 - eigvals[mask])
    core = (W * recip[None, :]) @ W.T
    return (core / d[:, None]) * d[None, :]


def spectral_gap(transition: np.ndarray, stationary: np.ndarray | None = None,
                 db_tol: float = 1e-8) -> float:
    """1 minus the second-largest eigenvalue magnitude of a reversible F."""
    F = np.asarray(transition, dtype=float)
    if stationary is None:
        stationary = stationary_vector(F)
    v = np.asarray(stationary, dtype=float)
    v = v / v.sum()
    eigvals, _, _ = _reversible_eigens(F, v, db_tol)
    unit = int(np.argmax(eigvals))
    others = np.delete(eigvals, unit)
    if others.size == 0:
        return 1.0
    return float(1.0 - np.max(np.abs(others)))
