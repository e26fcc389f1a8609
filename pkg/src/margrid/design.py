"""Sequential allocation of sampling effort over an evaluation grid.

The curve estimator's accuracy depends on where samples were taken.
Reweighting extends a fitted estimate to a denser evaluation grid: both
the grid matrix and the cross moments of the normalized weights on that
grid are sample averages of products of two weight ratios (numerators at
evaluation columns; one denominator over the evaluation grid, one over
the simulation grid).  The asymptotic-variance calculus then scores each
candidate point by u_m sqrt(tr(G' Xi_m G)) with G the group inverse of
I - F on the evaluation grid; the incremental rule converts those scores
into next-batch weights given what has already been spent, and a pivotal
draw turns weights into integer allocations with exactly the requested
batch size and the prescribed inclusion probabilities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import os

import numpy as np
from scipy.special import logsumexp

from .diagnostics import group_inverse
from .emus import SampleBank, child_rng, fit_emus, stationary_vector
from .errors import GridError, MargridError
from .functional import FunctionalEstimate
from .grids import HyperGrid
from .models import Model

__all__ = [
    "EvalExtension",
    "CrossMomentEstimate",
    "extend_to_eval_grid",
    "estimate_cross_moments",
    "optimal_weights",
    "incremental_weights",
    "pivotal_sample",
    "DesignState",
    "run_design_loop",
    "design_history_to_csv",
]

#: refuse cross-moment tensors beyond this many evaluation points
MAX_EVAL_POINTS = 128


def _require_subset(sim_grid: HyperGrid, eval_grid: HyperGrid) -> np.ndarray:
    """Indices of the simulation points inside the evaluation grid."""
    sim, ev = sim_grid.points, eval_grid.points
    if sim.shape[1] != ev.shape[1]:
        raise GridError("simulation and evaluation grids differ in dimension")
    idx = np.empty(sim.shape[0], dtype=int)
    for i, lam in enumerate(sim):
        hits = np.nonzero(np.all(np.abs(ev - lam[None, :]) <= 1e-12, axis=1))[0]
        if hits.size == 0:
            raise GridError(
                f"simulation point {i} is not on the evaluation grid; the "
                "reweighting identities need the simulation grid to be a subset"
            )
        idx[i] = hits[0]
    return idx


@dataclass
class EvalExtension:
    """Grid matrix and curve values reweighted onto an evaluation grid."""

    eval_grid: HyperGrid
    transition: np.ndarray
    stationary_values: np.ndarray
    sim_indices: np.ndarray
    _eval_ratios: np.ndarray = field(repr=False)   # a: eval-denominator weights
    _sim_ratios: np.ndarray = field(repr=False)    # b: sim-denominator weights
    _sample_scale: np.ndarray = field(repr=False)  # c: u_hat / N per sample


def extend_to_eval_grid(functional: FunctionalEstimate,
                        eval_grid: HyperGrid) -> EvalExtension:
    """Estimate the grid matrix of a finer evaluation grid by reweighting.

    For each cached sample the weight against evaluation column j is
    taken twice: a_j with the log-sum-exp over the evaluation grid in
    the denominator, and b_i with the simulation grid's cached
    log-sum-exp.  Averaging c b_i a_j with c = u_hat/N per sample and
    dividing by the curve value at i gives a row-stochastic matrix that
    estimates the evaluation-grid matrix without any new sampling.
    """
    emus = functional.emus
    model = functional.model
    sim_idx = _require_subset(emus.grid, eval_grid)
    thetas, offsets = emus.bank.flattened()
    points = eval_grid.points
    log_priors = np.array([model.log_prior(lam) for lam in points])
    loga = np.asarray(model.log_weight_matrix(thetas, points, log_priors), dtype=float)
    lse_eval = logsumexp(loga, axis=1)
    a = np.exp(loga - lse_eval[:, None])
    b = np.exp(loga - emus.cache.lse[:, None])
    counts = emus.counts
    c = np.repeat(emus.stationary / counts, counts)
    u_eval = b.T @ c
    if np.any(u_eval <= 0):
        raise MargridError(
            "the reweighted curve vanishes at some evaluation points; the "
            "evaluation grid reaches beyond the samples' support"
        )
    F_eval = (b * c[:, None]).T @ a / u_eval[:, None]
    return EvalExtension(
        eval_grid=eval_grid,
        transition=F_eval,
        stationary_values=u_eval,
        sim_indices=sim_idx,
        _eval_ratios=a,
        _sim_ratios=b,
        _sample_scale=c,
    )


@dataclass
class CrossMomentEstimate:
    """Per-point covariance matrices of the evaluation-grid weights.

    ``xi[m]`` estimates the covariance, under the local density of
    evaluation point m, of the normalized weight vector over the
    evaluation columns; each matrix is symmetrized by transpose
    averaging.  Diagonals can round slightly negative far from the
    samples; consumers clip where positivity matters.
    """

    xi: np.ndarray
    transition: np.ndarray
    stationary_values: np.ndarray
    eval_grid: HyperGrid


def estimate_cross_moments(extension: EvalExtension,
                           max_points: int = MAX_EVAL_POINTS) -> CrossMomentEstimate:
    """Cross moments Xi_m = E_m[a a'] - f_m f_m' for every evaluation point.

    The second moments reuse the same reweighting as the extended grid
    matrix.  Cost and memory scale with the cube of the evaluation grid
    size, so grids beyond ``max_points`` are refused.
    """
    M = len(extension.eval_grid)
    if M > max_points:
        raise GridError(
            f"cross moments need O(M^3) work and memory; {M} evaluation points "
            f"exceed the cap of {max_points}"
        )
    a = extension._eval_ratios
    b = extension._sim_ratios
    c = extension._sample_scale
    F = extension.transition
    u = extension.stationary_values
    xi = np.empty((M, M, M))
    for m in range(M):
        w = (c * b[:, m]) / u[m]
        second = (a * w[:, None]).T @ a
        mat = second - np.outer(F[m], F[m])
        xi[m] = 0.5 * (mat + mat.T)
    return CrossMomentEstimate(
        xi=xi, transition=F, stationary_values=u, eval_grid=extension.eval_grid
    )


def optimal_weights(moments: CrossMomentEstimate):
    """Variance-optimal sampling fractions over the evaluation grid.

    Scores each point by u_m sqrt(tr(G' Xi_m G)), G the group inverse of
    I - F on the evaluation grid (computed by the direct fundamental-
    matrix route, since an estimated matrix is reversible only in
    expectation), and normalizes to a probability vector.  The group
    inverse needs the exact stationary vector of the estimated matrix,
    which is re-solved here (the reweighted curve values only agree
    with it in expectation); provisional fits on weakly connected grids
    are tolerated by clamping.  Negative trace estimates are clipped to
    zero; if every trace vanishes the weights degenerate to uniform and
    the flag says so.

    Returns
    -------
    (w, degenerate) : (ndarray (M,), bool)
    """
    F = moments.transition
    u = np.asarray(moments.stationary_values, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v = stationary_vector(F, on_degenerate="truncate")
    G = group_inverse(F, v, method="direct")
    H = G @ G.T
    traces = np.array([float(np.sum(moments.xi[m] * H)) for m in range(len(u))])
    traces = np.clip(traces, 0.0, None)
    scores = u * np.sqrt(traces)
    total = scores.sum()
    if total <= 0:
        return np.full(u.size, 1.0 / u.size), True
    return scores / total, False


def incremental_weights(w_hat: np.ndarray, counts: np.ndarray, budget: int,
                        stabilize: bool = True):
    """Next-batch weights given target fractions and effort already spent.

    The target w_hat describes where the TOTAL effort should sit; with
    counts already placed and ``budget`` units to place now, the raw
    next-batch scores are (budget + sum(counts)) w - counts, clipped at
    zero.  By default w is the square-root stabilization of w_hat
    (sqrt(w_hat) renormalized to sum 1), which tempers extreme fractions
    estimated early.  If clipping removes everything the stabilized
    weights themselves are used, with a warning.

    Returns
    -------
    (w_bar, used_fallback) : (ndarray (M,), bool)
    """
    w_hat = np.asarray(w_hat, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if np.any(w_hat < 0) or not np.isclose(w_hat.sum(), 1.0):
        raise ValueError("w_hat must be a probability vector")
    if budget <= 0:
        raise ValueError("budget must be positive")
    if stabilize:
        w = np.sqrt(w_hat)
        w = w / w.sum()
    else:
        w = w_hat
    scores = np.clip((budget + counts.sum()) * w - counts, 0.0, None)
    total = scores.sum()
    if total <= 0:
        warnings.warn(
            "every point is already over-allocated relative to the target; "
            "falling back to the target weights for this batch",
            RuntimeWarning,
        )
        return w.copy(), True
    return scores / total, False


def pivotal_sample(expected_counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Integer allocation with the given expectations and exact total.

    ``expected_counts`` must be nonnegative with an integer sum B.
    Integer parts are kept; the fractional parts are resolved by the
    sequential pivotal rule (repeatedly confront two open units and let
    one of them resolve, preserving the pairwise sum and the individual
    expectations), so every unit is included with probability equal to
    its fractional part and the counts always sum to B exactly.
    """
    p = np.asarray(expected_counts, dtype=float)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("expected counts must be finite and nonnegative")
    total = p.sum()
    B = int(round(total))
    if abs(total - B) > 1e-6:
        raise ValueError(f"expected counts must sum to an integer, got {total!r}")
    base = np.floor(p).astype(int)
    frac = p - base
    snap_high = frac > 1.0 - 1e-9
    base[snap_high] += 1
    frac[snap_high] = 0.0
    frac[frac < 1e-9] = 0.0

    chosen = np.zeros(p.size, dtype=bool)
    active = np.nonzero(frac > 0)[0]
    if active.size:
        carry = int(active[0])
        mass = frac[carry]
        for idx in active[1:]:
            idx = int(idx)
            pair = mass + frac[idx]
            if pair <= 1.0:
                if rng.random() * pair < frac[idx]:
                    carry, mass = idx, pair
                else:
                    mass = pair
            else:
                if rng.random() * (2.0 - pair) < 1.0 - frac[idx]:
                    chosen[carry] = True
                    carry, mass = idx, pair - 1.0
                else:
                    chosen[idx] = True
                    mass = pair - 1.0
        if mass > 0.5:
            chosen[carry] = True
    counts = base + chosen
    if counts.sum() != B:
        raise AssertionError("pivotal allocation lost mass; input sums drifted")
    return counts


@dataclass
class DesignState:
    """Cumulative allocation record of a sequential design run."""

    eval_grid: HyperGrid
    samples_per_block: int
    block_counts: np.ndarray
    history: list = field(default_factory=list)
    w_hat: np.ndarray | None = None
    degenerate: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def draw_counts(self) -> np.ndarray:
        return self.block_counts * self.samples_per_block

    @property
    def total_draws(self) -> int:
        return int(self.draw_counts.sum())


def _bootstrap_allocation(M: int, blocks: int) -> np.ndarray:
    """Evenly spread first-iteration allocation over the evaluation grid."""
    base, rem = divmod(int(blocks), M)
    alloc = np.full(M, base, dtype=int)
    if rem:
        idx = np.unique(np.round(np.linspace(0, M - 1, rem)).astype(int))
        alloc[idx] += 1
        short = rem - idx.size
        if short > 0:
            order = np.argsort(alloc, kind="stable")
            alloc[order[:short]] += 1
    return alloc


def run_design_loop(model: Model, eval_grid: HyperGrid, iterations: int,
                    blocks_per_iteration: int, samples_per_block: int,
                    master_seed: int, stabilize: bool = True, warmup: int = 0):
    """Alternate estimation and allocation for a fixed number of rounds.

    Each iteration allocates ``blocks_per_iteration`` blocks over the
    evaluation grid (every block buys ``samples_per_block`` local
    draws), draws them, refits, and re-scores.  The first iteration has
    nothing to score and spreads its blocks uniformly over the grid.
    Draw streams are keyed by (iteration, point), the pivotal stream by
    (iteration,), all under ``master_seed``.

    Returns
    -------
    (state, functional) : (DesignState, FunctionalEstimate)
        The allocation record and the fit after the final iteration.
    """
    M = len(eval_grid)
    state = DesignState(
        eval_grid=eval_grid,
        samples_per_block=int(samples_per_block),
        block_counts=np.zeros(M, dtype=int),
        meta={"stabilize": bool(stabilize), "master_seed": int(master_seed),
              "blocks_per_iteration": int(blocks_per_iteration)},
    )
    stash = [[] for _ in range(M)]
    functional = None
    for it in range(int(iterations)):
        try:
            if it == 0:
                alloc = _bootstrap_allocation(M, blocks_per_iteration)
                w_used = np.full(M, 1.0 / M)
            else:
                extension = extend_to_eval_grid(functional, eval_grid)
                moments = estimate_cross_moments(extension)
                w_hat, degenerate = optimal_weights(moments)
                state.w_hat, state.degenerate = w_hat, degenerate
                w_bar, fallback = incremental_weights(
                    w_hat, state.block_counts, blocks_per_iteration,
                    stabilize=stabilize,
                )
                if fallback:
                    state.meta.setdefault("fallback_iterations", []).append(it)
                alloc = pivotal_sample(
                    blocks_per_iteration * w_bar, child_rng(master_seed, it)
                )
                w_used = w_hat
            for m in np.nonzero(alloc)[0]:
                rng = child_rng(master_seed, it, int(m))
                draws = model.sample_local(
                    eval_grid.points[m], rng,
                    int(alloc[m]) * samples_per_block, warmup=warmup,
                )
                stash[m].append(np.asarray(draws))
            state.block_counts = state.block_counts + alloc
            state.history.append({"blocks": alloc, "weights": w_used})

            occupied = np.nonzero(state.block_counts)[0]
            sim_grid = HyperGrid(
                domain=eval_grid.domain,
                points=eval_grid.points[occupied],
                scale=eval_grid.scale,
            )
            samples = [np.concatenate(stash[m], axis=0) for m in occupied]
            counts = np.array([s.shape[0] for s in samples])
            bank = SampleBank(
                grid=sim_grid, samples=samples, counts=counts,
                seed_lineage={"master_seed": int(master_seed), "design": True},
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                emus = fit_emus(bank, model, on_degenerate="truncate")
            functional = FunctionalEstimate(emus, model)
        except MargridError as exc:
            raise type(exc)(f"design iteration {it}: {exc}") from exc
    return state, functional


def design_history_to_csv(state: DesignState, path_or_buf, header_lines=()) -> None:
    """Write the allocation history as ``iteration,point,weight,allocated``.

    One row per (iteration, evaluation-grid point).  ``weight`` is the
    allocation-weight estimate that drove the iteration (uniform for the
    bootstrap round), ``allocated`` counts latent draws (blocks times
    samples per block) that the iteration placed at the point.
    """
    own = isinstance(path_or_buf, (str, bytes, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("iteration,point,weight,allocated\n")
        for it, record in enumerate(state.history):
            draws = record["blocks"] * state.samples_per_block
            weights = record["weights"]
            for m in range(len(state.eval_grid)):
                fh.write(f"{it},{m},{float(weights[m])!r},{int(draws[m])}\n")
    finally:
        if own:
            fh.close()
