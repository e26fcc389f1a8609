"""Griddy Gibbs chain and nearest-neighbor curve baseline."""

import numpy as np
import pytest

import margrid as mg


def test_gibbs_single_point_grid_counts_everything(toy_model):
    grid = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 1)
    trace = mg.run_griddy_gibbs(toy_model, grid, 50, np.random.default_rng(0))
    assert trace.visits.tolist() == [50]
    np.testing.assert_allclose(trace.stationary_estimate(), [1.0])


def test_gibbs_burn_in_accounting(toy_model, toy_grid):
    trace = mg.run_griddy_gibbs(
        toy_model, toy_grid, 40, np.random.default_rng(1), burn_in=15)
    assert trace.kept == 25
    assert trace.visits.sum() == 25
    assert trace.stationary_estimate().sum() == pytest.approx(8.0)
    with pytest.raises(ValueError):
        mg.run_griddy_gibbs(toy_model, toy_grid, 10, np.random.default_rng(1),
                            burn_in=10)
    with pytest.raises(ValueError):
        mg.run_griddy_gibbs(toy_model, toy_grid, 10, np.random.default_rng(1),
                            init_state=99)


def test_gibbs_is_reproducible(toy_model, toy_grid):
    a = mg.run_griddy_gibbs(toy_model, toy_grid, 60, np.random.default_rng(7))
    b = mg.run_griddy_gibbs(toy_model, toy_grid, 60, np.random.default_rng(7))
    np.testing.assert_array_equal(a.visits, b.visits)
    assert a.init_state == len(toy_grid) // 2
    assert a.meta["init_rule"] == "midpoint"


def test_gibbs_consistent_on_discrete_oracle(asym_model):
    # Long chain on the two-atom model: visit frequencies approach the
    # exact stationary law (8/7, 6/7) because the latent atoms overlap.
    grid = asym_model.grid()
    trace = mg.run_griddy_gibbs(
        asym_model, grid, 60_000, np.random.default_rng(3), burn_in=1000)
    est = trace.stationary_estimate()
    np.testing.assert_allclose(est, [8.0 / 7.0, 6.0 / 7.0], atol=0.05)


def test_gibbs_traps_in_one_mode_when_local_densities_separate():
    # With tight precisions the two marginal modes communicate only
    # through latent values the sampler essentially never draws: one
    # side of the grid ends up with all the visits.
    model = mg.ToyBimodalModel(y=1.0, q=1000.0, tau=1000.0)
    grid = mg.make_regular_grid(mg.Domain(-2.0, 2.0), 8)
    trace = mg.run_griddy_gibbs(
        model, grid, 2000, np.random.default_rng(11), init_state=1)
    signs = np.sign(grid.points[:, 0])
    neg = trace.visits[signs < 0].sum()
    pos = trace.visits[signs > 0].sum()
    assert min(neg, pos) == 0
    assert max(neg, pos) == 2000


def test_nearest_neighbor_identity_on_same_grid(toy_grid):
    values = np.arange(8.0)
    out = mg.nearest_neighbor_extrapolate(values, toy_grid, toy_grid)
    np.testing.assert_array_equal(out, values)


def test_nearest_neighbor_hand_table():
    # 4 simulation points at 0.5, 1.0, 1.5, 2.0 extended to 8 evaluation
    # points at 0.25k; midpoints tie to the smaller simulation index.
    sim = mg.make_regular_grid(mg.Domain(0.0, 2.0), 4)
    ev = mg.make_regular_grid(mg.Domain(0.0, 2.0), 8)
    values = np.array([10.0, 20.0, 30.0, 40.0])
    out = mg.nearest_neighbor_extrapolate(values, sim, ev)
    np.testing.assert_array_equal(
        out, [10.0, 10.0, 10.0, 20.0, 20.0, 30.0, 30.0, 40.0])


def test_nearest_neighbor_log_scale_uses_working_coordinates():
    sim = mg.make_regular_grid(mg.Domain(1.0, 16.0), 2, scale="log")  # 4, 16
    ev = mg.make_regular_grid(mg.Domain(1.0, 16.0), 4, scale="log")  # 2,4,8,16
    values = np.array([1.0, 2.0])
    out = mg.nearest_neighbor_extrapolate(values, sim, ev)
    # log-midpoint of 4 and 16 is 8; ties go to the lower index.
    np.testing.assert_array_equal(out, [1.0, 1.0, 1.0, 2.0])


def test_nearest_neighbor_validates_inputs(toy_grid):
    with pytest.raises(ValueError):
        mg.nearest_neighbor_extrapolate(np.arange(3.0), toy_grid, toy_grid)
    log_ev = mg.make_regular_grid(mg.Domain(0.5, 2.0), 4, scale="log")
    with pytest.raises(ValueError):
        mg.nearest_neighbor_extrapolate(np.arange(8.0), toy_grid, log_ev)
