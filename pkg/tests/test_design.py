"""Evaluation-grid extension, allocation weights, and the design loop."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import margrid as mg
from margrid.design import (
    _bootstrap_allocation,
    design_history_to_csv,
    estimate_cross_moments,
    extend_to_eval_grid,
    incremental_weights,
    optimal_weights,
    pivotal_sample,
    run_design_loop,
)

from conftest import SYM_TABLE

# Sim columns 0 and 2 cover every atom that column 1 touches, so the
# held-out middle column is exactly recoverable by reweighting.
WIDE_TABLE = np.array([
    [2.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 1.0, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 0.0, 2.0],
])


def exhaustive_functional(model, columns=None):
    bank = mg.exhaustive_discrete_bank(model, columns)
    emus = mg.fit_emus(bank, model)
    return mg.FunctionalEstimate(emus, model)


# -- reweighting onto a finer grid ----------------------------------------


def test_extension_to_the_same_grid_is_identity(asym_model):
    fn = exhaustive_functional(asym_model)
    ext = extend_to_eval_grid(fn, fn.emus.grid)
    np.testing.assert_allclose(ext.transition, fn.emus.transition, atol=1e-12)
    np.testing.assert_allclose(ext.stationary_values, fn.emus.stationary,
                               atol=1e-12)
    np.testing.assert_array_equal(ext.sim_indices, [0, 1])


def test_extension_recovers_held_out_column_exactly():
    model = mg.DiscreteModel(WIDE_TABLE)
    fn = exhaustive_functional(model, [0, 2])
    eval_grid = model.grid()
    ext = extend_to_eval_grid(fn, eval_grid)

    F_exact, u_exact = mg.enumerate_discrete_transition(model)
    np.testing.assert_allclose(ext.transition, F_exact, atol=1e-12)
    # Reweighted values are on the raw scale of the fit; compare shapes.
    ratio = ext.stationary_values / u_exact
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_extension_requires_sim_subset(asym_model, toy_model, toy_grid):
    fn = exhaustive_functional(asym_model)
    off = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 4)
    with pytest.raises(mg.GridError):
        extend_to_eval_grid(fn, off)


# -- cross moments ---------------------------------------------------------


def test_cross_moments_match_direct_summation():
    model = mg.DiscreteModel(WIDE_TABLE)
    fn = exhaustive_functional(model, [0, 2])
    eval_grid = model.grid()
    ext = extend_to_eval_grid(fn, eval_grid)
    moments = estimate_cross_moments(ext)

    # Exact second moments by summation: a_j(k) = psi_j(k) / T(k) with T
    # the total eval mass at atom k, expectations under pi_m.
    T = WIDE_TABLE.sum(axis=1)
    a = WIDE_TABLE / T[:, None]
    z = WIDE_TABLE.sum(axis=0)
    for m in range(3):
        pi_m = WIDE_TABLE[:, m] / z[m]
        second = (a * pi_m[:, None]).T @ a
        f_m = a.T @ pi_m
        xi_exact = second - np.outer(f_m, f_m)
        np.testing.assert_allclose(moments.xi[m], xi_exact, atol=1e-12)
        np.testing.assert_allclose(moments.xi[m], moments.xi[m].T, atol=1e-15)


def test_cross_moments_refuse_oversized_grids(asym_model):
    fn = exhaustive_functional(asym_model)
    ext = extend_to_eval_grid(fn, fn.emus.grid)
    with pytest.raises(mg.GridError):
        estimate_cross_moments(ext, max_points=1)


# -- allocation weights ----------------------------------------------------


def test_optimal_weights_uniform_when_moments_vanish(asym_model):
    fn = exhaustive_functional(asym_model)
    ext = extend_to_eval_grid(fn, fn.emus.grid)
    moments = estimate_cross_moments(ext)
    moments.xi[:] = 0.0
    w, degenerate = optimal_weights(moments)
    np.testing.assert_allclose(w, [0.5, 0.5])
    assert degenerate


def test_optimal_weights_symmetric_model_splits_evenly():
    model = mg.DiscreteModel(SYM_TABLE)
    fn = exhaustive_functional(model)
    ext = extend_to_eval_grid(fn, fn.emus.grid)
    w, degenerate = optimal_weights(estimate_cross_moments(ext))
    assert not degenerate
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)


def test_optimal_weights_are_a_probability_vector():
    model = mg.DiscreteModel(WIDE_TABLE)
    fn = exhaustive_functional(model, [0, 2])
    ext = extend_to_eval_grid(fn, model.grid())
    w, degenerate = optimal_weights(estimate_cross_moments(ext))
    assert not degenerate
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(1.0)


def test_incremental_weights_from_scratch():
    w_hat = np.array([0.64, 0.16, 0.16, 0.04])
    w, fallback = incremental_weights(w_hat, np.zeros(4), 10, stabilize=False)
    np.testing.assert_allclose(w, w_hat)
    assert not fallback
    w_s, _ = incremental_weights(w_hat, np.zeros(4), 10, stabilize=True)
    expected = np.sqrt(w_hat) / np.sqrt(w_hat).sum()
    np.testing.assert_allclose(w_s, expected)


def test_incremental_weights_subtract_spent_effort():
    # Target is an even split, one point already has all ten draws: the
    # whole next batch goes to the other point.
    w, fallback = incremental_weights(
        np.array([0.5, 0.5]), np.array([10.0, 0.0]), 2, stabilize=False)
    np.testing.assert_allclose(w, [0.0, 1.0])
    assert not fallback


def test_incremental_weights_preserve_zeros():
    w_hat = np.array([0.5, 0.0, 0.5])
    for stab in (False, True):
        w, _ = incremental_weights(w_hat, np.zeros(3), 4, stabilize=stab)
        assert w[1] == 0.0


def test_incremental_weights_validate_inputs():
    with pytest.raises(ValueError):
        incremental_weights(np.array([0.7, 0.7]), np.zeros(2), 4)
    with pytest.raises(ValueError):
        incremental_weights(np.array([0.5, 0.5]), np.zeros(2), 0)


# -- pivotal allocation ------------------------------------------------------


def test_pivotal_integer_expectations_are_deterministic():
    p = np.array([2.0, 0.0, 3.0, 1.0])
    counts = pivotal_sample(p, np.random.default_rng(0))
    np.testing.assert_array_equal(counts, [2, 0, 3, 1])


def test_pivotal_validates_input():
    with pytest.raises(ValueError):
        pivotal_sample(np.array([-0.5, 1.5]), np.random.default_rng(0))
    with pytest.raises(ValueError):
        pivotal_sample(np.array([0.4, 0.3]), np.random.default_rng(0))


@given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_pivotal_total_is_exact(n, budget, seed):
    rng = np.random.default_rng(seed)
    raw = rng.random(n) + 1e-9
    p = raw * (budget / raw.sum())
    counts = pivotal_sample(p, rng)
    assert counts.sum() == budget
    assert np.all(counts >= 0)
    assert np.all(counts >= np.floor(p).astype(int))


def test_pivotal_inclusion_probabilities():
    p = np.array([0.3, 0.7, 0.5, 0.5])
    n = 20_000
    rng = np.random.default_rng(14)
    hits = np.zeros(4)
    for _ in range(n):
        hits += pivotal_sample(p, rng)
    freq = hits / n
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) < 4 * se)


# -- the sequential loop ------------------------------------------------------


@pytest.mark.parametrize("M,blocks", [(10, 4), (3, 7), (5, 5), (4, 13), (6, 1)])
def test_bootstrap_allocation_places_every_block(M, blocks):
    alloc = _bootstrap_allocation(M, blocks)
    assert alloc.sum() == blocks
    assert alloc.shape == (M,)
    assert np.all(alloc >= 0)
    # Even spreading: point loads differ by at most one block.
    assert alloc.max() - alloc.min() <= 1


def test_design_loop_single_iteration_is_uniform(toy_model):
    eval_grid = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 6)
    state, fn = run_design_loop(
        toy_model, eval_grid, iterations=1, blocks_per_iteration=6,
        samples_per_block=8, master_seed=99)
    assert len(state.history) == 1
    np.testing.assert_allclose(state.history[0]["weights"], 1.0 / 6.0)
    np.testing.assert_array_equal(state.history[0]["blocks"], np.ones(6, dtype=int))
    assert state.total_draws == 48
    assert state.w_hat is None
    assert fn.marginal(0.0) > 0


def test_design_loop_accounting_and_reproducibility(toy_model):
    eval_grid = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 8)
    kwargs = dict(iterations=3, blocks_per_iteration=5, samples_per_block=4,
                  master_seed=123)
    state, _ = run_design_loop(toy_model, eval_grid, **kwargs)
    assert len(state.history) == 3
    for record in state.history:
        assert record["blocks"].sum() == 5
        assert record["weights"].sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(
        state.block_counts, sum(r["blocks"] for r in state.history))
    assert state.total_draws == 3 * 5 * 4
    assert state.w_hat is not None and not state.degenerate

    again, _ = run_design_loop(toy_model, eval_grid, **kwargs)
    np.testing.assert_array_equal(state.block_counts, again.block_counts)


def test_design_loop_never_allocates_on_zero_weight_points():
    # Column 1 of the psi table never overlaps the others' support once
    # they are fully sampled... build a model where one eval point has
    # zero optimal weight by symmetry is hard; instead check the loop's
    # books: every allocated point in scored iterations carried positive
    # incremental weight, which pivotal sampling requires.
    model = mg.ToyBimodalModel(y=1.0, q=2.0, tau=2.0)
    eval_grid = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 10)
    state, _ = run_design_loop(
        model, eval_grid, iterations=4, blocks_per_iteration=6,
        samples_per_block=4, master_seed=7)
    for record in state.history[1:]:
        w = record["weights"]
        assert np.all(record["blocks"][w == 0.0] == 0)


def test_design_loop_decorates_errors():
    model = mg.DiscreteModel(WIDE_TABLE)
    bad_grid = mg.HyperGrid(model.grid().domain, np.array([[0.0], [0.5]]))
    with pytest.raises(mg.GridError) as err:
        run_design_loop(model, bad_grid, iterations=1, blocks_per_iteration=2,
                        samples_per_block=4, master_seed=1)
    assert "design iteration 0" in str(err.value)


def test_design_history_csv_layout(toy_model):
    eval_grid = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 4)
    state, _ = run_design_loop(
        toy_model, eval_grid, iterations=2, blocks_per_iteration=4,
        samples_per_block=2, master_seed=5)
    import io

    buf = io.StringIO()
    design_history_to_csv(state, buf, header_lines=("alpha=1",))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# alpha=1"
    assert lines[1] == "iteration,point,weight,allocated"
    body = lines[2:]
    assert len(body) == 2 * 4
    for it in range(2):
        rows = [line.split(",") for line in body[it * 4:(it + 1) * 4]]
        assert [r[0] for r in rows] == [str(it)] * 4
        assert [int(r[1]) for r in rows] == [0, 1, 2, 3]
        placed = sum(int(r[3]) for r in rows)
        assert placed == 4 * 2  # blocks times samples per block
        total_w = sum(float(r[2]) for r in rows)
        assert total_w == pytest.approx(1.0)
