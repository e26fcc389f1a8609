"""Statistical models exposing local densities over a hyperparameter.

Every model provides, for hyperparameter values lam in its domain:

- ``log_psi(thetas, lam)``: log of the unnormalized local density
  psi_lam(theta) evaluated at a batch of latent states,
- ``log_prior(lam)``: log prior density over the hyperparameter,
- ``sample_local(lam, rng, size, warmup)``: draws from the normalized
  local density pi_lam = psi_lam / z(lam),
- optionally ``grad_log_psi_prior`` (hyperparameter gradients) and
  ``exact_log_u`` (a closed form for log z(lam) p(lam), used as an
  oracle by diagnostics and experiments).

The marginal quantity of interest is always u(lam) = z(lam) p(lam)
up to a lam-independent constant.
"""

from __future__ import annotations

import csv
import io

import os

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.special import expit

from .errors import DegenerateWeightError, GradientUnavailableError, GridError
from .grids import Domain, HyperGrid

__all__ = [
    "Model",
    "DiscreteModel",
    "ToyBimodalModel",
    "GpRegressionModel",
    "make_synthetic_gp_dataset",
    "gp_dataset_to_csv",
    "gp_dataset_from_csv",
    "discrete_table_from_csv",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _gauss_logpdf(x, mean, var):
    """Elementwise scalar Gaussian log density."""
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


class Model:
    """Interface shared by the model families; see the module docstring."""

    #: shape of one latent draw; () for scalar states
    theta_shape: tuple = ()

    def log_psi(self, thetas, lam):
        raise NotImplementedError

    def log_prior(self, lam) -> float:
        raise NotImplementedError

    def sample_local(self, lam, rng, size: int, warmup: int = 0):
        raise NotImplementedError

    @property
    def has_gradient(self) -> bool:
        return type(self).grad_log_psi_prior is not Model.grad_log_psi_prior

    def grad_log_psi_prior(self, thetas, lam):
        raise GradientUnavailableError(
            f"{type(self).__name__} does not implement hyperparameter gradients"
        )

    def has_exact_log_u(self) -> bool:
        return type(self).exact_log_u is not Model.exact_log_u

    def exact_log_u(self, lam) -> float:
        raise NotImplementedError(
            f"{type(self).__name__} has no closed form for the marginal"
        )

    def log_weight_matrix(self, thetas, points, log_priors):
        """Matrix of log(psi_lam_j(theta_n) p(lam_j)), shape (N, L).

        The default loops over grid columns; models override this when a
        fully broadcast evaluation is cheaper.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(thetas), points.shape[0]))
        for j, lam in enumerate(points):
            out[:, j] = self.log_psi(thetas, lam) + log_priors[j]
        return out


def _as_lambda(lam) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.ndim != 1:
        raise ValueError("a hyperparameter value must be a flat vector")
    return lam


class DiscreteModel(Model):
    """Fully enumerable model over finitely many latent atoms.

    The local densities are columns of a nonnegative table
    ``psi_table[k, a] = psi_a(theta_k)`` with theta-atoms k = 0..K-1 and
    hyperparameter atoms a = 0..A-1 located at ``atom_values``.  Latent
    states are atom indices.  Everything about this model (transition
    matrix, marginals, off-grid kernel columns) can be computed exactly
    by summation, which makes it the reference oracle for the sampled
    estimators.
    """

    def __init__(self, psi_table, atom_values=None, prior=None):
        table = np.asarray(psi_table, dtype=float)
        if table.ndim != 2 or np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("psi_table must be a nonnegative finite (K, A) array")
        if np.any(table.sum(axis=0) <= 0):
            raise DegenerateWeightError("every lambda-atom needs positive total mass")
        self.psi_table = table
        n_atoms = table.shape[1]
        if atom_values is None:
            atom_values = np.arange(n_atoms, dtype=float)
        self.atom_values = np.asarray(atom_values, dtype=float)
        if self.atom_values.shape != (n_atoms,):
            raise ValueError("need one atom value per table column")
        if prior is None:
            prior = np.ones(n_atoms)
        self.prior = np.asarray(prior, dtype=float)
        if self.prior.shape != (n_atoms,) or np.any(self.prior <= 0):
            raise ValueError("prior must be a positive vector over lambda-atoms")

    def column_of(self, lam) -> int:
        lam = _as_lambda(lam)
        if lam.size != 1:
            raise ValueError("discrete models have a one-dimensional hyperparameter")
        hits = np.nonzero(np.isclose(self.atom_values, lam[0], rtol=0.0, atol=1e-9))[0]
        if hits.size == 0:
            raise GridError(f"lambda={lam[0]!r} does not match any model atom")
        return int(hits[0])

    def grid(self, columns=None) -> HyperGrid:
        """Explicit grid over a subset of the lambda-atoms (all by default)."""
        if columns is None:
            columns = np.arange(self.atom_values.size)
        vals = self.atom_values[np.asarray(columns, dtype=int)]
        lo, hi = self.atom_values.min() - 1.0, self.atom_values.max() + 1.0
        return HyperGrid(Domain(lo, hi), vals[:, None])

    def log_psi(self, thetas, lam):
        col = self.column_of(lam)
        idx = np.asarray(thetas, dtype=int).ravel()
        with np.errstate(divide="ignore"):
            return np.log(self.psi_table[idx, col])

    def log_prior(self, lam) -> float:
        return float(np.log(self.prior[self.column_of(lam)]))

    def sample_local(self, lam, rng, size: int, warmup: int = 0):
        col = self.column_of(lam)
        w = self.psi_table[:, col]
        return rng.choice(w.size, size=size, p=w / w.sum())

    def exact_log_u(self, lam) -> float:
        col = self.column_of(lam)
        return float(np.log(self.psi_table[:, col].sum()) + np.log(self.prior[col]))


class ToyBimodalModel(Model):
    """Scalar location model with a sign-ambiguous Gaussian observation.

    One observation y is measured, with precision q, of either +theta or
    -theta with equal probability; theta carries a N(lam, 1/tau) prior
    tied to the hyperparameter lam, and the hyperparameter prior is flat.
    The marginal likelihood has the closed form

        z(lam) = 0.5 N(y; lam, s) + 0.5 N(y; -lam, s),  s = 1/q + 1/tau,

    bimodal in lam around +/- y for concentrated local densities, and the
    local density itself is an explicit two-component Gaussian mixture,
    so exact independent local draws are available at any lam.
    """

    def __init__(self, y: float = 1.0, q: float = 2.0, tau: float = 2.0):
        if q <= 0 or tau <= 0:
            raise ValueError("precisions q and tau must be positive")
        self.y = float(y)
        self.q = float(q)
        self.tau = float(tau)

    # -- local density ------------------------------------------------

    def _log_mixture(self, thetas):
        """lam-independent observation part log(0.5 N(y;th,1/q) + 0.5 N(y;-th,1/q))."""
        a = _gauss_logpdf(self.y, thetas, 1.0 / self.q)
        b = _gauss_logpdf(self.y, -thetas, 1.0 / self.q)
        return np.logaddexp(a, b) + np.log(0.5)

    def log_psi(self, thetas, lam):
        lam = _as_lambda(lam)
        thetas = np.asarray(thetas, dtype=float).ravel()
        return self._log_mixture(thetas) + _gauss_logpdf(thetas, lam[0], 1.0 / self.tau)

    def log_prior(self, lam) -> float:
        return 0.0

    def log_weight_matrix(self, thetas, points, log_priors):
        thetas = np.asarray(thetas, dtype=float).ravel()
        lams = np.atleast_2d(np.asarray(points, dtype=float))[:, 0]
        base = self._log_mixture(thetas)[:, None]
        local = _gauss_logpdf(thetas[:, None], lams[None, :], 1.0 / self.tau)
        return base + local + np.asarray(log_priors)[None, :]

    def grad_log_psi_prior(self, thetas, lam):
        lam = _as_lambda(lam)
        thetas = np.asarray(thetas, dtype=float).ravel()
        return (self.tau * (thetas - lam[0]))[:, None]

    def sample_local(self, lam, rng, size: int, warmup: int = 0):
        # Exact conjugate draw: completing the square in theta shows
        #   pi_lam = w+ N(m+, v) + w- N(m-, v)
        # with v = 1/(q+tau), m+- = (tau lam +- q y)/(q+tau) and component
        # weights proportional to N(y; +-lam, s), s = 1/q + 1/tau.
        lam = _as_lambda(lam)[0]
        s = 1.0 / self.q + 1.0 / self.tau
        lw = np.array([
            _gauss_logpdf(self.y, lam, s),
            _gauss_logpdf(self.y, -lam, s),
        ])
        w_plus = expit(lw[0] - lw[1])
        v = 1.0 / (self.q + self.tau)
        m_plus = (self.q * self.y + self.tau * lam) / (self.q + self.tau)
        m_minus = (self.tau * lam - self.q * self.y) / (self.q + self.tau)
        pick_plus = rng.random(size) < w_plus
        means = np.where(pick_plus, m_plus, m_minus)
        return means + np.sqrt(v) * rng.standard_normal(size)

    def exact_log_u(self, lam) -> float:
        lam = _as_lambda(lam)[0]
        s = 1.0 / self.q + 1.0 / self.tau
        return float(
            np.log(0.5)
            + np.logaddexp(_gauss_logpdf(self.y, lam, s), _gauss_logpdf(self.y, -lam, s))
        )


class GpRegressionModel(Model):
    """Gaussian process regression with a squared-exponential kernel.

    The latent state is the function-value vector theta at the inputs x,
    with prior N(0, C_lam), C_lam = (tau1/tau2) exp(-tau2 |x - x'|^2),
    observation y = theta + Gaussian noise of variance ``noise_var``, and
    an improper flat prior on (log tau1, log tau2), i.e.
    p(tau1, tau2) = 1/(tau1 tau2).  Everything needed here is conjugate:
    exact local draws come from the Gaussian posterior of theta given y
    at fixed lam, and log z(lam) = log N(y; 0, C_lam + noise_var I).

    A relative jitter (``jitter_scale`` times the mean kernel diagonal)
    is added to C_lam before factorization.
    """

    def __init__(self, x, y, noise_var: float = 1.0 / 16.0, jitter_scale: float = 1e-9):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        self.x = x
        self.y = np.asarray(y, dtype=float).ravel()
        if self.y.size != x.shape[0]:
            raise ValueError("x and y must have matching lengths")
        if noise_var <= 0:
            raise ValueError("noise_var must be positive")
        self.noise_var = float(noise_var)
        self.jitter_scale = float(jitter_scale)
        diff = x[:, None, :] - x[None, :, :]
        self._sqdist = np.sum(diff * diff, axis=-1)
        self.theta_shape = (self.y.size,)
        self._cache: dict = {}

    # -- kernel factorizations, cached per hyperparameter value --------

    def _entry(self, lam):
        lam = _as_lambda(lam)
        if lam.size != 2 or np.any(lam <= 0):
            raise ValueError("lam must be a positive pair (tau1, tau2)")
        key = (float(lam[0]), float(lam[1]))
        entry = self._cache.get(key)
        if entry is None:
            tau1, tau2 = key
            kernel = (tau1 / tau2) * np.exp(-tau2 * self._sqdist)
            jitter = self.jitter_scale * (tau1 / tau2)
            cov = kernel + jitter * np.eye(self.y.size)
            chol = cholesky(cov, lower=True)
            noisy = cov + self.noise_var * np.eye(self.y.size)
            chol_noisy = cho_factor(noisy, lower=True)
            entry = {
                "tau": (tau1, tau2),
                "kernel": kernel,
                "cov": cov,
                "chol": chol,
                "logdet": 2.0 * np.sum(np.log(np.diag(chol))),
                "chol_noisy": chol_noisy,
                "logdet_noisy": 2.0 * np.sum(np.log(np.diag(chol_noisy[0]))),
            }
            self._cache[key] = entry
        return entry

    def _posterior(self, entry):
        if "post_chol" not in entry:
            cov = entry["cov"]
            gain = cho_solve(entry["chol_noisy"], cov)  # (C + s2 I)^{-1} C
            mean = gain.T @ self.y
            post = cov - cov @ gain
            post = 0.5 * (post + post.T)
            bump = 1e-12 * max(np.trace(post) / post.shape[0], 1.0)
            entry["post_mean"] = mean
            entry["post_chol"] = cholesky(post + bump * np.eye(post.shape[0]), lower=True)
        return entry["post_mean"], entry["post_chol"]

    # -- Model interface ------------------------------------------------

    def log_psi(self, thetas, lam):
        entry = self._entry(lam)
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[None, :]
        n = self.y.size
        resid = self.y[None, :] - thetas
        obs = -0.5 * (n * (_LOG_2PI + np.log(self.noise_var))
                      + np.sum(resid * resid, axis=1) / self.noise_var)
        white = solve_triangular(entry["chol"], thetas.T, lower=True)
        prior = -0.5 * (n * _LOG_2PI + entry["logdet"] + np.sum(white * white, axis=0))
        return obs + prior

    def log_prior(self, lam) -> float:
        lam = _as_lambda(lam)
        return float(-np.log(lam[0]) - np.log(lam[1]))

    def grad_log_psi_prior(self, thetas, lam):
        # d log N(theta; 0, K)/d tau_r = -tr(K^-1 dK)/2 + theta' K^-1 dK K^-1 theta / 2
        # with dK/dtau1 = K/tau1 and dK/dtau2 = -K/tau2 - kernel * sqdist
        # (the relative jitter folds into K for both derivatives).
        entry = self._entry(lam)
        tau1, tau2 = entry["tau"]
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[None, :]
        n = self.y.size
        chol = entry["chol"]
        v = cho_solve((chol, True), thetas.T)          # K^{-1} theta, (n, N)
        quad_k = np.sum(thetas.T * v, axis=0)          # theta' K^{-1} theta
        cd = entry["kernel"] * self._sqdist            # kernel .* sqdist
        kinv_cd = cho_solve((chol, True), cd)
        tr_kinv_cd = float(np.trace(kinv_cd))
        quad_cd = np.sum(v * (cd @ v), axis=0)         # v' (kernel.*sqdist) v
        g1 = -0.5 * n / tau1 + 0.5 * quad_k / tau1 - 1.0 / tau1
        g2 = (0.5 * n / tau2 + 0.5 * tr_kinv_cd
              - 0.5 * quad_k / tau2 - 0.5 * quad_cd - 1.0 / tau2)
        return np.stack([g1, g2], axis=1)

    def sample_local(self, lam, rng, size: int, warmup: int = 0):
        entry = self._entry(lam)
        mean, chol_post = self._posterior(entry)
        z = rng.standard_normal((size, self.y.size))
        return mean[None, :] + z @ chol_post.T

    def log_marginal_likelihood(self, lam) -> float:
        """log N(y; 0, C_lam + noise_var I), the exact log z(lam)."""
        entry = self._entry(lam)
        n = self.y.size
        alpha = cho_solve(entry["chol_noisy"], self.y)
        return float(-0.5 * (n * _LOG_2PI + entry["logdet_noisy"] + self.y @ alpha))

    def exact_log_u(self, lam) -> float:
        return self.log_marginal_likelihood(lam) + self.log_prior(lam)


def make_synthetic_gp_dataset(n: int = 16, seed: int = 7, noise_var: float = 1.0 / 16.0):
    """Deterministic synthetic regression data for the GP model.

    Inputs on a regular design in [-2, 2]; responses are a smooth curve
    plus Gaussian noise with the model's observation variance.
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(-2.0, 2.0, n)
    f = np.sin(2.0 * x) + 0.5 * x
    y = f + np.sqrt(noise_var) * rng.standard_normal(n)
    return x, y


def gp_dataset_to_csv(x, y, path_or_buf) -> None:
    """Write a regression dataset as CSV with columns x0..x{d-1},y."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).ravel()
    own = isinstance(path_or_buf, (str, bytes, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(fh)
        writer.writerow([f"x{d}" for d in range(x.shape[1])] + ["y"])
        for xi, yi in zip(x, y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
    finally:
        if own:
            fh.close()


def gp_dataset_from_csv(path_or_buf):
    """Read a regression dataset written by :func:`gp_dataset_to_csv`."""
    own = isinstance(path_or_buf, (str, bytes, os.PathLike))
    fh = open(path_or_buf, "r", newline="") if own else path_or_buf
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if header[-1] != "y" or not all(h.startswith("x") for h in header[:-1]):
        raise ValueError("dataset CSV header must be x0,...,y")
    data = np.array([[float(v) for v in r] for r in body])
    x = data[:, :-1]
    if x.shape[1] == 1:
        x = x.ravel()
    return x, data[:, -1]


def discrete_table_from_csv(path_or_buf) -> np.ndarray:
    """Read a psi-table (rows = theta-atoms, columns = lambda-atoms)."""
    own = isinstance(path_or_buf, (str, bytes, os.PathLike))
    fh = open(path_or_buf, "r", newline="") if own else path_or_buf
    try:
        text = fh.read()
    finally:
        if own:
            fh.close()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    first = rows[0]
    try:
        [float(v) for v in first]
        body = rows
    except ValueError:
        body = rows[1:]
    return np.array([[float(v) for v in r] for r in body])
