"""Model-family checks against closed forms and brute-force integration."""

import io
import math

import numpy as np
import pytest
from scipy.integrate import quad

import margrid as mg

from conftest import ASYM_TABLE


# -- toy bimodal model -------------------------------------------------


def test_toy_marginal_is_symmetric(toy_model):
    for lam in (0.0, 0.3, 1.0, 1.7):
        assert toy_model.exact_log_u(lam) == pytest.approx(
            toy_model.exact_log_u(-lam), abs=1e-13
        )


def test_toy_marginal_matches_quadrature(toy_model):
    # Independent check of the closed form: integrate the joint density
    # over theta numerically and compare in log space.
    for lam in (-1.5, 0.0, 0.4, 2.0):
        val, err = quad(
            lambda th: math.exp(toy_model.log_psi(np.array([th]), lam)[0]),
            -12.0,
            12.0,
            limit=200,
        )
        assert err < 1e-7
        assert math.log(val) == pytest.approx(toy_model.exact_log_u(lam), abs=1e-7)


def test_toy_modes_sit_near_plus_minus_y():
    # With tight precisions the mixture components barely overlap and the
    # marginal peaks very close to lam = +/- y.
    model = mg.ToyBimodalModel(y=1.0, q=64.0, tau=1e6)
    lams = np.linspace(-2.0, 2.0, 4001)
    vals = np.array([model.exact_log_u(l) for l in lams])
    order = np.argsort(vals)[::-1]
    top = sorted(lams[order[:2]])
    assert top[0] == pytest.approx(-1.0, abs=0.01)
    assert top[1] == pytest.approx(1.0, abs=0.01)


def test_toy_sampler_matches_mixture_moments(toy_model):
    # sample_local is an exact conjugate draw; compare its first moment
    # against the analytic two-component mixture mean.
    lam, n = 0.7, 200_000
    q, tau, y = toy_model.q, toy_model.tau, toy_model.y
    s = 1.0 / q + 1.0 / tau
    lw = np.array([
        -0.5 * (math.log(2 * math.pi * s) + (y - lam) ** 2 / s),
        -0.5 * (math.log(2 * math.pi * s) + (y + lam) ** 2 / s),
    ])
    w_plus = 1.0 / (1.0 + math.exp(lw[1] - lw[0]))
    v = 1.0 / (q + tau)
    m_plus = (q * y + tau * lam) / (q + tau)
    m_minus = (tau * lam - q * y) / (q + tau)
    mean = w_plus * m_plus + (1 - w_plus) * m_minus
    second = w_plus * (v + m_plus**2) + (1 - w_plus) * (v + m_minus**2)
    sd = math.sqrt(second - mean**2)

    draws = toy_model.sample_local(lam, np.random.default_rng(5), n)
    assert abs(draws.mean() - mean) < 3 * sd / math.sqrt(n)


def test_toy_sampler_is_reproducible(toy_model):
    a = toy_model.sample_local(0.4, np.random.default_rng(99), 64)
    b = toy_model.sample_local(0.4, np.random.default_rng(99), 64)
    np.testing.assert_array_equal(a, b)


def test_toy_log_weight_matrix_matches_columnwise(toy_model, toy_grid):
    thetas = np.linspace(-2.0, 2.0, 11)
    log_priors = np.array([toy_model.log_prior(p) for p in toy_grid.points])
    fast = toy_model.log_weight_matrix(thetas, toy_grid.points, log_priors)
    slow = mg.models.Model.log_weight_matrix(
        toy_model, thetas, toy_grid.points, log_priors
    )
    np.testing.assert_allclose(fast, slow, atol=1e-12)


def test_toy_rejects_nonpositive_precisions():
    with pytest.raises(ValueError):
        mg.ToyBimodalModel(q=0.0)
    with pytest.raises(ValueError):
        mg.ToyBimodalModel(tau=-1.0)


# -- Gaussian process regression model ---------------------------------


@pytest.fixture(scope="module")
def gp_model():
    x, y = mg.make_synthetic_gp_dataset(n=8, seed=3)
    return mg.GpRegressionModel(x, y)


def test_gp_single_point_marginal_closed_form():
    # With one observation the marginal covariance is the scalar
    # tau1/tau2 + noise_var, so log z has a one-line closed form.
    y0 = 0.8
    model = mg.GpRegressionModel([0.0], [y0], noise_var=1.0 / 16.0, jitter_scale=0.0)
    for tau1, tau2 in [(1.0, 1.0), (2.0, 0.5), (0.3, 4.0)]:
        s = tau1 / tau2 + 1.0 / 16.0
        expected = -0.5 * (math.log(2 * math.pi * s) + y0**2 / s)
        assert model.log_marginal_likelihood((tau1, tau2)) == pytest.approx(
            expected, abs=1e-12
        )


def test_gp_gradient_matches_finite_differences(gp_model):
    rng = np.random.default_rng(11)
    lam = np.array([1.3, 0.7])
    thetas = gp_model.sample_local(lam, rng, 3)
    h = 1e-6

    def logp(t, l):
        return gp_model.log_psi(t, l) + gp_model.log_prior(l)

    grad = gp_model.grad_log_psi_prior(thetas, lam)
    for r in range(2):
        step = np.zeros(2)
        step[r] = h
        fd = (logp(thetas, lam + step) - logp(thetas, lam - step)) / (2 * h)
        np.testing.assert_allclose(grad[:, r], fd, rtol=1e-5)


def test_gp_huge_noise_pulls_posterior_to_prior():
    x, y = mg.make_synthetic_gp_dataset(n=6, seed=1)
    model = mg.GpRegressionModel(x, y, noise_var=1e8)
    draws = model.sample_local((1.0, 1.0), np.random.default_rng(0), 50_000)
    # Prior mean is zero and the data carry almost no information, so the
    # sampler mean must vanish within Monte Carlo error.
    prior_sd = math.sqrt(1.0)
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * prior_sd / math.sqrt(50_000))


def test_gp_sampler_mean_matches_posterior(gp_model):
    lam = (1.0, 1.0)
    entry = gp_model._entry(lam)
    mean, _ = gp_model._posterior(entry)
    draws = gp_model.sample_local(lam, np.random.default_rng(2), 40_000)
    sd = draws.std(axis=0)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * sd / math.sqrt(40_000))


def test_gp_exact_log_u_adds_hyperprior(gp_model):
    lam = (0.9, 1.4)
    expected = gp_model.log_marginal_likelihood(lam) - math.log(0.9) - math.log(1.4)
    assert gp_model.exact_log_u(lam) == pytest.approx(expected, abs=1e-12)


def test_gp_rejects_bad_inputs():
    with pytest.raises(ValueError):
        mg.GpRegressionModel([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        mg.GpRegressionModel([0.0], [1.0], noise_var=0.0)
    model = mg.GpRegressionModel([0.0], [1.0])
    with pytest.raises(ValueError):
        model.log_marginal_likelihood((1.0, -1.0))


def test_synthetic_dataset_is_deterministic():
    x1, y1 = mg.make_synthetic_gp_dataset(n=12, seed=42)
    x2, y2 = mg.make_synthetic_gp_dataset(n=12, seed=42)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(y1, y2)
    assert x1.shape == (12,) and y1.shape == (12,)


# -- discrete enumeration model -----------------------------------------


def test_discrete_column_lookup(asym_model):
    assert asym_model.column_of(0.0) == 0
    assert asym_model.column_of(1.0) == 1
    with pytest.raises(mg.GridError):
        asym_model.column_of(0.5)


def test_discrete_exact_log_u(asym_model):
    assert asym_model.exact_log_u(0.0) == pytest.approx(math.log(4.0))
    assert asym_model.exact_log_u(1.0) == pytest.approx(math.log(3.0))


def test_discrete_sampler_frequencies(asym_model):
    n = 100_000
    draws = asym_model.sample_local(0.0, np.random.default_rng(8), n)
    freq = np.bincount(draws, minlength=5) / n
    p = ASYM_TABLE[:, 0] / ASYM_TABLE[:, 0].sum()
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 4 * se + 1e-12)


def test_discrete_grid_subsets(asym_model):
    full = asym_model.grid()
    assert full.points.tolist() == [[0.0], [1.0]]
    sub = asym_model.grid([1])
    assert sub.points.tolist() == [[1.0]]


def test_discrete_requires_positive_mass_per_atom():
    with pytest.raises(mg.DegenerateWeightError):
        mg.DiscreteModel(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        mg.DiscreteModel(np.array([[1.0, -1.0], [1.0, 2.0]]))


def test_gradient_flags():
    assert mg.ToyBimodalModel().has_gradient
    assert mg.GpRegressionModel([0.0], [1.0]).has_gradient
    disc = mg.DiscreteModel(ASYM_TABLE)
    assert not disc.has_gradient
    with pytest.raises(mg.GradientUnavailableError):
        disc.grad_log_psi_prior(np.array([0]), 0.0)


# -- dataset and table serialization ------------------------------------


def test_gp_dataset_csv_round_trip(tmp_path):
    x, y = mg.make_synthetic_gp_dataset(n=5, seed=0)
    path = tmp_path / "data.csv"
    mg.gp_dataset_to_csv(x, y, path)
    x2, y2 = mg.gp_dataset_from_csv(path)
    np.testing.assert_array_equal(x2.ravel(), x)
    np.testing.assert_array_equal(y2, y)


def test_discrete_table_from_csv():
    text = "psi0,psi1\n2,0\n1,0\n1,1\n0,1\n0,1\n"
    table = mg.discrete_table_from_csv(io.StringIO(text))
    np.testing.assert_array_equal(table, ASYM_TABLE)
