"""Core estimator: reweighting local samples into a stationary vector.

Monte Carlo samples are drawn independently at each grid point from the
normalized local density pi_i.  For each sample the vector of log-weights
log(psi_j(theta) p(lam_j)) over all grid columns j is cached together
with its log-sum-exp.  Averaging the normalized weights row by row gives
a row-stochastic matrix whose stationary vector, rescaled to sum L,
estimates the marginal u(lam_l) = z(lam_l) p(lam_l) on the grid up to a
common constant.

The stationary vector is computed from a QR factorization of I - F: the
last column of Q spans the null space of (I - F)^T whenever the matrix
is rank L-1, because (I - F)^T q_L = R^T e_L = 0 when the final diagonal
entry of R vanishes.  The QR solution is sign-corrected and polished
with a fixed number of power-method multiplications before rescaling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeightError, NoOverlapError, ReducibleChainError
from .grids import HyperGrid
from .models import Model

__all__ = [
    "SampleBank",
    "LogWeightCache",
    "EmusEstimate",
    "child_rng",
    "draw_sample_bank",
    "compute_log_weights",
    "estimate_transition_matrix",
    "stationary_vector",
    "fit_emus",
    "bridge_ratio",
]

#: log-weights this far below a sample's maximum are floored to -inf
LOG_WEIGHT_FLOOR = 700.0

#: number of power-method refinements applied after the QR null vector
POWER_POLISH_STEPS = 5


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent child generator for a (replicate, point, ...) context.

    Children are derived as SeedSequence(master_seed, spawn_key=key), so
    any (master, key) pair names the same stream on every run and
    platform, and distinct keys give statistically independent streams.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


@dataclass
class SampleBank:
    """Local samples grouped by grid point.

    Parameters
    ----------
    grid : HyperGrid
    samples : list of ndarray
        One array per grid point, leading axis of length counts[i].
    counts : ndarray of int
        Draws per point, all >= 1.
    seed_lineage : dict
        How the per-point streams were derived (master seed and spawn
        prefix), for reproducibility records.
    """

    grid: HyperGrid
    samples: list
    counts: np.ndarray
    seed_lineage: dict = field(default_factory=dict)
    independent: bool = True

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        if len(self.samples) != len(self.grid) or self.counts.size != len(self.grid):
            raise ValueError("need one sample block and count per grid point")
        if np.any(self.counts < 1):
            raise ValueError("every grid point needs at least one sample")
        for i, block in enumerate(self.samples):
            if np.asarray(block).shape[0] != self.counts[i]:
                raise ValueError(f"sample block {i} does not match its count")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def flattened(self):
        """All samples stacked on axis 0, plus segment offsets (L+1,)."""
        stacked = np.concatenate([np.asarray(b) for b in self.samples], axis=0)
        offsets = np.concatenate([[0], np.cumsum(self.counts)])
        return stacked, offsets


def draw_sample_bank(model: Model, grid: HyperGrid, counts, master_seed: int,
                     warmup: int = 0, spawn_prefix: tuple = ()) -> SampleBank:
    """Draw independent local samples at every grid point.

    The stream for point i is ``child_rng(master_seed, *spawn_prefix, i)``,
    so banks are reproducible point by point and replicate prefixes keep
    replicates independent.
    """
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (len(grid),)).copy()
    samples = []
    for i, lam in enumerate(grid.points):
        rng = child_rng(master_seed, *spawn_prefix, i)
        samples.append(np.asarray(model.sample_local(lam, rng, int(counts[i]), warmup=warmup)))
    lineage = {"master_seed": int(master_seed), "spawn_prefix": tuple(spawn_prefix)}
    return SampleBank(grid=grid, samples=samples, counts=counts, seed_lineage=lineage)


@dataclass
class LogWeightCache:
    """Cached log-weights of every sample against every grid column.

    ``logw[s, j]`` is log(psi_j(theta_s) p(lam_j)) floored to -inf when
    more than LOG_WEIGHT_FLOOR below the sample's own maximum; ``lse``
    is the per-sample log-sum-exp over columns.  ``offsets`` delimits
    the sample segments of each grid point.
    """

    logw: np.ndarray
    lse: np.ndarray
    offsets: np.ndarray
    log_priors: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)


def compute_log_weights(bank: SampleBank, model: Model) -> LogWeightCache:
    """Evaluate and cache all sample-against-column log-weights."""
    thetas, offsets = bank.flattened()
    points = bank.grid.points
    log_priors = np.array([model.log_prior(lam) for lam in points])
    logw = np.asarray(model.log_weight_matrix(thetas, points, log_priors), dtype=float)
    row_max = np.max(logw, axis=1)
    bad = ~np.isfinite(row_max)
    if np.any(bad):
        s = int(np.argmax(bad))
        point = int(np.searchsorted(offsets, s, side="right") - 1)
        raise DegenerateWeightError(
            f"sample {s - offsets[point]} at grid point {point} has zero weight "
            "against every grid column; the local sampler and the grid are "
            "inconsistent or all weights underflowed"
        )
    logw[logw < (row_max[:, None] - LOG_WEIGHT_FLOOR)] = -np.inf
    lse = logsumexp(logw, axis=1)
    return LogWeightCache(logw=logw, lse=lse, offsets=offsets, log_priors=log_priors)


def segment_mean(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Mean of each offset-delimited segment along axis 0."""
    sums = np.add.reduceat(values, offsets[:-1], axis=0)
    counts = np.diff(offsets).astype(float)
    shape = (-1,) + (1,) * (values.ndim - 1)
    return sums / counts.reshape(shape)


def estimate_transition_matrix(bank: SampleBank, model: Model,
                               cache: LogWeightCache | None = None):
    """Row-stochastic matrix of mean normalized weights.

    Entry (i, j) averages psi_j(theta) p(lam_j) / sum_l psi_l(theta) p(lam_l)
    over the samples drawn at grid point i; rows sum to 1 up to floating
    point by construction.

    Returns
    -------
    (F, cache) : (ndarray of shape (L, L), LogWeightCache)
    """
    if cache is None:
        cache = compute_log_weights(bank, model)
    ratios = np.exp(cache.logw - cache.lse[:, None])
    return segment_mean(ratios, cache.offsets), cache


def stationary_vector(transition: np.ndarray, polish: int = POWER_POLISH_STEPS,
                      residual_tol: float = 1e-6,
                      on_degenerate: str = "raise") -> np.ndarray:
    """Left stationary vector of a row-stochastic matrix, scaled to sum L.

    Solves u = F^T u by QR-factorizing A = I - F and taking the last
    column of Q (which spans the null space of A^T when rank(A) = L-1),
    then applying a fixed number of power-method multiplications, then
    rescaling so the entries sum to L.

    A unique positive solution needs the grid to be irreducible: every
    pair of grid points connected through overlapping local densities.
    Two degeneracy symptoms are checked: a second near-vanishing
    singular value of I - F (the null direction is not unique at
    working precision) and nonpositive entries in the solution.  With
    ``on_degenerate="raise"`` (default) either symptom raises; with
    ``"truncate"`` the affected entries are clamped to a floor a factor
    of machine epsilon below the largest one and a RuntimeWarning is
    emitted, which callers that can self-correct (sequential designs
    accumulating overlap) use for provisional fits.  An inaccurate
    solve (residual above ``residual_tol``) always raises.

    Raises
    ------
    ReducibleChainError
    """
    return _solve_stationary(transition, polish, residual_tol, on_degenerate)[0]


def _solve_stationary(transition, polish, residual_tol, on_degenerate):
    """Worker behind stationary_vector; also reports whether it clamped."""
    if on_degenerate not in ("raise", "truncate"):
        raise ValueError(f"unknown on_degenerate mode {on_degenerate!r}")
    F = np.asarray(transition, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("transition matrix must be square")
    n = F.shape[0]
    if np.any(F < -1e-12) or np.max(np.abs(F.sum(axis=1) - 1.0)) > 1e-8:
        raise ValueError("transition matrix must be row-stochastic")
    if n == 1:
        return np.ones(1), False

    A = np.eye(n) - F
    sing = np.linalg.svd(A, compute_uv=False)
    multiple_null = sing[-2] <= 1e-12 * max(sing[0], 1.0)
    if multiple_null and on_degenerate == "raise":
        raise ReducibleChainError(
            "I - F has more than one vanishing singular value, so the "
            "stationary vector is not unique; the grid-irreducibility "
            "assumption is violated (disconnected or barely connected blocks)"
        )
    q = np.linalg.qr(A, mode="complete")[0][:, -1]
    if q.sum() < 0:
        q = -q
    for _ in range(polish):
        q = F.T @ q
        total = np.abs(q).sum()
        if total <= 0:
            raise ReducibleChainError(
                "power polish annihilated the stationary candidate; the grid "
                "does not satisfy the irreducibility assumption"
            )
        q = q / total
    total = q.sum()
    if total <= 0:
        raise ReducibleChainError(
            "stationary candidate has nonpositive mass; the grid does not "
            "satisfy the irreducibility assumption"
        )
    u = q * (n / total)
    residual = np.max(np.abs(F.T @ u - u)) / np.max(np.abs(u))
    if residual > residual_tol:
        raise ReducibleChainError(
            f"stationary residual {residual:.3e} exceeds {residual_tol:.1e}; the "
            "estimated matrix looks reducible (grid points with no mutual "
            "overlap), so the stationary vector is not unique"
        )
    truncated = False
    if np.any(u <= 0.0) or multiple_null:
        if on_degenerate == "raise":
            raise ReducibleChainError(
                "stationary vector has nonpositive entries; some grid points "
                "are unreachable (grid-irreducibility assumption violated)"
            )
        floor = np.finfo(float).eps * np.max(u)
        u = np.where(u < floor, floor, u)
        u = u * (n / u.sum())
        truncated = True
        warnings.warn(
            "stationary vector is degenerate at working precision; entries "
            "below resolution were clamped to a positive floor",
            RuntimeWarning,
        )
    return u, truncated


@dataclass
class EmusEstimate:
    """Fitted estimate on a simulation grid.

    Fields
    ------
    bank : SampleBank
    cache : LogWeightCache
    transition : ndarray (L, L)
        Row-stochastic matrix of mean normalized weights.
    stationary : ndarray (L,)
        Estimated u(lam_l) up to a common constant, normalized to sum L.
    """

    bank: SampleBank
    cache: LogWeightCache
    transition: np.ndarray
    stationary: np.ndarray
    #: True when a degenerate solve was clamped (on_degenerate="truncate")
    truncated: bool = False

    #: how ``stationary`` is normalized (entries sum to the grid size)
    normalization = "sum_to_L"

    @property
    def grid(self) -> HyperGrid:
        return self.bank.grid

    @property
    def counts(self) -> np.ndarray:
        return self.bank.counts


def fit_emus(bank: SampleBank, model: Model,
             on_degenerate: str = "raise") -> EmusEstimate:
    """Estimate the transition matrix and its stationary vector."""
    F, cache = estimate_transition_matrix(bank, model)
    u, truncated = _solve_stationary(F, POWER_POLISH_STEPS, 1e-6, on_degenerate)
    return EmusEstimate(bank=bank, cache=cache, transition=F, stationary=u,
                        truncated=truncated)


def bridge_ratio(transition: np.ndarray, i: int, j: int) -> float:
    """Pairwise estimate of u(lam_j)/u(lam_i) from one matrix entry pair.

    Detailed balance gives u_i F_ij = u_j F_ji, so F_ij / F_ji estimates
    u_j / u_i without solving the eigenproblem.  Only sensible when the
    two local densities overlap.
    """
    if i == j:
        return 1.0
    F = np.asarray(transition, dtype=float)
    if F[j, i] == 0.0:
        raise NoOverlapError(
            f"no overlap observed between grid points {i} and {j}: entry "
            f"({j}, {i}) is zero, the pairwise ratio is undefined"
        )
    return float(F[i, j] / F[j, i])
