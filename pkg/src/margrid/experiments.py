"""Config-driven experiment runners behind the command line.

Each runner loads its parameters from an :class:`ExperimentConfig`
(a flat ``key = value`` file with sections), executes one study, writes
plot-ready CSV files plus a JSON run manifest into an output directory,
and returns the manifest as a dict.  Runners are plain functions so
tests and notebooks can call them without going through ``argv``.

Determinism contract: every output embeds the config hash and the
master seed, all randomness is derived from the master seed through
documented spawn keys, and rerunning with an identical config and seed
reproduces every output byte for byte (floats are written via ``repr``,
manifests carry no timestamps).
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import run_griddy_gibbs
from .design import run_design_loop, design_history_to_csv
from .emus import child_rng, draw_sample_bank, fit_emus
from .errors import GridError, MargridError
from .functional import FunctionalEstimate
from .grids import Domain, HyperGrid, make_regular_grid, trapezoid_weights
from .models import (
    DiscreteModel,
    GpRegressionModel,
    Model,
    ToyBimodalModel,
    discrete_table_from_csv,
    gp_dataset_from_csv,
    make_synthetic_gp_dataset,
)
from .diagnostics import variance_diagnostics

__all__ = [
    "ExperimentConfig",
    "build_model",
    "build_grids",
    "mean_abs_error",
    "normalized_l2_error",
    "exact_stationary",
    "exact_reference",
    "run_estimate",
    "run_compare",
    "run_rate_study",
    "run_design_study",
]


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """A parsed experiment file plus the hash of its raw bytes.

    Sections and keys are interpreted by the individual runners; the
    common ones are ``[model]`` (kind and its parameters), ``[domain]``
    (lower/upper/scale), ``[grids]`` (per-axis point counts) and
    ``[sampling]`` (samples per point, warmup, master seed, replicate
    count).  Paths inside the file resolve relative to the file itself
    and are checked at load time.
    """

    parser: configparser.ConfigParser
    sha256: str
    path: str | None = None
    base_dir: str = "."

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            raw = fh.read()
        cfg = cls.from_text(raw.decode("utf-8"), base_dir=os.path.dirname(os.path.abspath(path)))
        cfg.path = str(path)
        return cfg

    @classmethod
    def from_text(cls, text: str, base_dir: str = ".") -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.read_string(text)
        cfg = cls(
            parser=parser,
            sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
            base_dir=base_dir,
        )
        cfg._check_paths()
        return cfg

    # -- typed accessors -----------------------------------------------------

    def get(self, section: str, key: str, fallback=None):
        return self.parser.get(section, key, fallback=fallback)

    def getint(self, section: str, key: str, fallback=None):
        return self.parser.getint(section, key, fallback=fallback)

    def getfloat(self, section: str, key: str, fallback=None):
        return self.parser.getfloat(section, key, fallback=fallback)

    def getboolean(self, section: str, key: str, fallback=None):
        return self.parser.getboolean(section, key, fallback=fallback)

    def floats(self, section: str, key: str, fallback=None):
        raw = self.get(section, key)
        if raw is None:
            if fallback is None:
                raise GridError(f"config needs [{section}] {key}")
            return list(fallback)
        return [float(tok) for tok in raw.replace(",", " ").split()]

    def ints(self, section: str, key: str, fallback=None):
        raw = self.get(section, key)
        if raw is None:
            if fallback is None:
                raise GridError(f"config needs [{section}] {key}")
            return list(fallback)
        return [int(tok) for tok in raw.replace(",", " ").split()]

    def resolve_path(self, value: str) -> str:
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)

    def echo(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}

    def _check_paths(self) -> None:
        for key in ("table", "dataset"):
            value = self.get("model", key)
            if value is None or value == "synthetic":
                continue
            full = self.resolve_path(value)
            if not os.path.exists(full):
                raise FileNotFoundError(f"[model] {key} = {value}: no such file")


def _resolve_seed(config: ExperimentConfig, seed) -> int:
    if seed is not None:
        return int(seed)
    return config.getint("sampling", "master_seed", fallback=0)


def _resolve_replicates(config: ExperimentConfig, replicates) -> int:
    if replicates is not None:
        return int(replicates)
    return config.getint("sampling", "replicates", fallback=32)


def build_model(config: ExperimentConfig) -> Model:
    """Instantiate the model named by the ``[model]`` section."""
    kind = config.get("model", "kind", fallback="toy")
    if kind == "toy":
        return ToyBimodalModel(
            y=config.getfloat("model", "y", fallback=1.0),
            q=config.getfloat("model", "q", fallback=2.0),
            tau=config.getfloat("model", "tau", fallback=2.0),
        )
    if kind == "discrete":
        table = discrete_table_from_csv(config.resolve_path(config.get("model", "table")))
        return DiscreteModel(table)
    if kind in ("gp-regression", "gp"):
        noise_var = config.getfloat("model", "noise_var", fallback=1.0 / 16.0)
        dataset = config.get("model", "dataset", fallback="synthetic")
        if dataset == "synthetic":
            x, y = make_synthetic_gp_dataset(
                n=config.getint("model", "n_data", fallback=16),
                seed=config.getint("model", "dataset_seed", fallback=7),
                noise_var=noise_var,
            )
        else:
            x, y = gp_dataset_from_csv(config.resolve_path(dataset))
        return GpRegressionModel(
            x, y, noise_var=noise_var,
            jitter_scale=config.getfloat("model", "jitter_scale", fallback=1e-9),
        )
    raise GridError(f"unknown model kind {kind!r}")


def build_grids(config: ExperimentConfig, model: Model | None = None):
    """Simulation and evaluation grids named by ``[domain]`` / ``[grids]``.

    Discrete models carry their own hyperparameter atoms, so for them
    both grids are the model's atom grid (optionally restricted with
    ``sim_columns``) and the domain section is ignored.
    """
    kind = config.get("model", "kind", fallback="toy")
    if kind == "discrete":
        if model is None:
            model = build_model(config)
        columns = config.ints("grids", "sim_columns", fallback=())
        grid = model.grid(columns if columns else None)
        return grid, grid
    lower = config.floats("domain", "lower")
    upper = config.floats("domain", "upper")
    scale = config.get("domain", "scale", fallback="linear")
    domain = Domain(np.array(lower), np.array(upper))
    sim_counts = config.ints("grids", "sim_counts")
    eval_counts = config.ints("grids", "eval_counts", fallback=sim_counts)
    sim_grid = make_regular_grid(domain, sim_counts, scale)
    eval_grid = make_regular_grid(domain, eval_counts, scale)
    return sim_grid, eval_grid


def _sample_counts(config: ExperimentConfig, n_points: int) -> np.ndarray:
    per = config.ints("sampling", "samples_per_point", fallback=(16,))
    if len(per) == 1:
        return np.full(n_points, per[0], dtype=int)
    if len(per) != n_points:
        raise GridError(
            f"samples_per_point lists {len(per)} values for {n_points} grid points"
        )
    return np.asarray(per, dtype=int)


# --------------------------------------------------------------------------
# error metrics and exact references


def mean_abs_error(u_hat, u_ref) -> float:
    """Mean absolute difference after normalizing both vectors to sum L."""
    u_hat = np.asarray(u_hat, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    n = u_hat.size
    return float(np.mean(np.abs(u_hat * (n / u_hat.sum()) - u_ref * (n / u_ref.sum()))))


def normalized_l2_error(u_hat, u_ref) -> float:
    """Euclidean distance between the two vectors rescaled to unit 1-norm."""
    u_hat = np.asarray(u_hat, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    return float(np.linalg.norm(u_hat / np.abs(u_hat).sum() - u_ref / np.abs(u_ref).sum()))


def _exact_logs(model: Model, points) -> np.ndarray:
    return np.array([model.exact_log_u(p) for p in points], dtype=float)


def exact_stationary(model: Model, grid: HyperGrid) -> np.ndarray:
    """Exact stationary vector over a grid, normalized to sum L."""
    logs = _exact_logs(model, grid.points)
    z = np.exp(logs - logs.max())
    return z * (len(z) / z.sum())


def exact_reference(model: Model, eval_grid: HyperGrid, sim_grid: HyperGrid) -> np.ndarray:
    """Exact curve over the evaluation grid, on the fitted curve's scale.

    The fitted curve interpolates a stationary vector that sums to L
    over the simulation grid, so the comparable exact values are the
    raw curve rescaled by L over its simulation-grid total.
    """
    log_e = _exact_logs(model, eval_grid.points)
    log_s = _exact_logs(model, sim_grid.points)
    shift = max(log_e.max(), log_s.max())
    z_e = np.exp(log_e - shift)
    z_s = np.exp(log_s - shift)
    return z_e * (len(sim_grid) / z_s.sum())


# --------------------------------------------------------------------------
# output plumbing


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows, comments=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _comments(config: ExperimentConfig, master_seed: int):
    return (f"config_sha256={config.sha256}", f"master_seed={master_seed}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def _versions() -> dict:
    import scipy

    from . import __version__

    return {
        "margrid": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": ".".join(str(v) for v in __import__("sys").version_info[:3]),
    }


def _manifest_skeleton(command: str, config: ExperimentConfig, master_seed: int,
                       replicates: int) -> dict:
    return {
        "command": command,
        "config": config.echo(),
        "config_sha256": config.sha256,
        "master_seed": int(master_seed),
        "replicates": int(replicates),
        "versions": _versions(),
    }


def _write_manifest(out_dir: str, manifest: dict) -> dict:
    payload = _jsonable(manifest)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload


def _parallel_map(fn, items, threads: int):
    items = list(items)
    if threads and int(threads) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _point_header(grid: HyperGrid):
    return [f"dim{k}" for k in range(grid.points.shape[1])]


# --------------------------------------------------------------------------
# runners


def run_estimate(config: ExperimentConfig, out_dir: str, *, seed=None,
                 replicates=None, threads: int = 1) -> dict:
    """Fit the curve estimator and write it over the evaluation grid.

    Outputs: ``curve.csv`` (evaluation-grid curve, with the exact
    reference column when the model supports one), one
    ``profile_axis*.csv`` per hyperparameter axis, ``diagnostics.csv``
    (per simulation point), ``errors.csv`` (per-replicate error metrics
    against the exact reference), and ``manifest.json``.  Replicate r
    draws its bank with spawn keys (r, point_index).
    """
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(config)
    sim_grid, eval_grid = build_grids(config, model)
    counts = _sample_counts(config, len(sim_grid))
    master = _resolve_seed(config, seed)
    reps = _resolve_replicates(config, replicates)
    warmup = config.getint("sampling", "warmup", fallback=0)

    def one(r: int):
        bank = draw_sample_bank(model, sim_grid, counts, master,
                                warmup=warmup, spawn_prefix=(r,))
        emus = fit_emus(bank, model)
        fn = FunctionalEstimate(emus, model)
        curve = fn.marginal_many(eval_grid.points)
        return emus, fn, curve

    results = _parallel_map(one, range(reps), threads)
    emus0, fn0, curve0 = results[0]
    comments = _comments(config, master)
    have_exact = model.has_exact_log_u

    point_cols = _point_header(eval_grid)
    if have_exact:
        reference = exact_reference(model, eval_grid, sim_grid)
        rows = [(*p, c, e) for p, c, e in zip(eval_grid.points, curve0, reference)]
        _write_csv(os.path.join(out_dir, "curve.csv"),
                   point_cols + ["u_hat", "u_exact"], rows, comments)
    else:
        rows = [(*p, c) for p, c in zip(eval_grid.points, curve0)]
        _write_csv(os.path.join(out_dir, "curve.csv"),
                   point_cols + ["u_hat"], rows, comments)

    profile_files = []
    if eval_grid.axes is not None:
        for axis in range(eval_grid.points.shape[1]):
            values, prof = fn0.profile(eval_grid, axis)
            name = f"profile_axis{axis}.csv"
            _write_csv(os.path.join(out_dir, name),
                       [f"dim{axis}", "u_profile"],
                       list(zip(values, prof)), comments)
            profile_files.append(name)

    diag = variance_diagnostics(emus0)
    n = len(sim_grid)
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(off & (diag.R > 0), diag.R / diag.Q**2, 0.0)
        per_point = n * terms.sum(axis=1) / diag.sampling_fractions
    diag_rows = [
        (i, *sim_grid.points[i], counts[i], emus0.stationary[i], per_point[i])
        for i in range(n)
    ]
    _write_csv(os.path.join(out_dir, "diagnostics.csv"),
               ["point"] + _point_header(sim_grid) + ["n_draws", "u_hat", "bound_term"],
               diag_rows, comments)

    summary: dict = {
        "rel_var_bound": diag.rel_var_bound,
        "equal_allocation": diag.eq_sample,
        "independent_sampling": diag.ind_sample,
        "total_draws": int(counts.sum()),
    }
    argmax_point, argmax_value, argmax_index = fn0.argmax_on(eval_grid)
    summary["argmax"] = {
        "point": list(argmax_point),
        "value": argmax_value,
        "index": argmax_index,
    }

    if have_exact:
        exact_sim = exact_stationary(model, sim_grid)
        err_rows = []
        for r, (emus, _fn, curve) in enumerate(results):
            err_rows.append((
                r,
                mean_abs_error(emus.stationary, exact_sim),
                normalized_l2_error(curve, reference),
            ))
        _write_csv(os.path.join(out_dir, "errors.csv"),
                   ["replicate", "l1_sim_grid", "normalized_l2_eval_grid"],
                   err_rows, comments)
        errs = np.array([(r[1], r[2]) for r in err_rows])
        summary["mean_l1_sim_grid"] = errs[:, 0].mean()
        summary["mean_normalized_l2_eval_grid"] = errs[:, 1].mean()

    manifest = _manifest_skeleton("estimate", config, master, reps)
    manifest["summary"] = summary
    manifest["outputs"] = sorted(
        ["curve.csv", "diagnostics.csv"] + profile_files
        + (["errors.csv"] if have_exact else [])
    )
    return _write_manifest(out_dir, manifest)


def run_compare(config: ExperimentConfig, out_dir: str, *, seed=None,
                replicates=None, threads: int = 1) -> dict:
    """Grid estimator against the single-chain Gibbs baseline.

    Both methods see the same total number of latent draws per
    replicate: the chain runs for sum(N_l) + burn_in iterations so its
    kept sweeps match the bank size exactly (asserted, and recorded in
    the manifest).  For toy models a ``tau_sweep`` list in the
    ``[compare]`` section repeats the study across prior precisions.
    Spawn keys: bank (sweep, replicate, 0, point), chain stream
    (sweep, replicate, 1).
    """
    os.makedirs(out_dir, exist_ok=True)
    base_model = build_model(config)
    if not base_model.has_exact_log_u:
        raise GridError("compare needs a model with an exact reference curve")
    sim_grid, _ = build_grids(config, base_model)
    counts = _sample_counts(config, len(sim_grid))
    master = _resolve_seed(config, seed)
    reps = _resolve_replicates(config, replicates)
    warmup = config.getint("sampling", "warmup", fallback=0)
    burn_in = config.getint("compare", "burn_in", fallback=0)
    total = int(counts.sum())
    n_iter = total + burn_in

    kind = config.get("model", "kind", fallback="toy")
    sweep = config.floats("compare", "tau_sweep", fallback=()) if kind == "toy" else []
    if sweep:
        models = [
            (tau, ToyBimodalModel(y=base_model.y, q=base_model.q, tau=tau))
            for tau in sweep
        ]
    else:
        models = [(float("nan"), base_model)]

    first_axis = sim_grid.points[:, 0]
    rows = []
    per_tau = []
    for s, (tau, model) in enumerate(models):
        exact_sim = exact_stationary(model, sim_grid)

        def one(r: int, model=model, s=s, exact_sim=exact_sim):
            bank = draw_sample_bank(model, sim_grid, counts, master,
                                    warmup=warmup, spawn_prefix=(s, r, 0))
            # the sweep deliberately enters regimes where neighboring
            # windows stop overlapping, so fit in the clamping mode and
            # report how often it fired instead of aborting the study
            emus = fit_emus(bank, model, on_degenerate="truncate")
            truncated = emus.truncated
            grid_l1 = mean_abs_error(emus.stationary, exact_sim)
            trace = run_griddy_gibbs(model, sim_grid, n_iter,
                                     child_rng(master, s, r, 1), burn_in=burn_in)
            if trace.kept != total:
                raise AssertionError("effort parity broken between methods")
            chain_l1 = mean_abs_error(trace.stationary_estimate(), exact_sim)
            neg = int(trace.visits[first_axis < 0].sum())
            pos = int(trace.visits[first_axis > 0].sum())
            return grid_l1, chain_l1, neg, pos, truncated

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = _parallel_map(one, range(reps), threads)
        for r, (grid_l1, chain_l1, neg, pos, _trunc) in enumerate(res):
            rows.append((tau, r, grid_l1, chain_l1, neg, pos))
        arr = np.array([(a, b) for a, b, _, _, _ in res])
        trapped = np.array([(neg == 0 or pos == 0) for _, _, neg, pos, _ in res])
        per_tau.append({
            "tau": tau,
            "emus_mean_l1": arr[:, 0].mean(),
            "gibbs_mean_l1": arr[:, 1].mean(),
            "one_sided_fraction": trapped.mean(),
            "truncated_fit_fraction": float(np.mean([t for *_, t in res])),
        })

    _write_csv(os.path.join(out_dir, "compare.csv"),
               ["tau", "replicate", "emus_l1", "gibbs_l1",
                "gibbs_neg_visits", "gibbs_pos_visits"],
               rows, _comments(config, master))

    manifest = _manifest_skeleton("compare", config, master, reps)
    manifest["summary"] = {
        "per_tau": per_tau,
        "effort": {
            "draws_per_method": total,
            "gibbs_burn_in": burn_in,
            "parity": True,
        },
    }
    manifest["outputs"] = ["compare.csv"]
    return _write_manifest(out_dir, manifest)


def run_rate_study(config: ExperimentConfig, out_dir: str, *, seed=None,
                   replicates=None, threads: int = 1) -> dict:
    """Error against sampling effort in two regimes.

    Fixed-grid: the simulation grid stays put while the per-point draw
    count sweeps over ``n_sweep``; the manifest reports the log-log
    slope fitted over the last half of the sweep.  Dense-grid: the
    per-point count stays at ``fixed_n`` while the grid count sweeps
    over ``l_sweep`` (continuous models only); the manifest reports
    whether the per-count median error is non-increasing.  Errors are
    normalized-L2 distances on the evaluation grid (on the simulation
    grid itself for discrete models).  Spawn keys: (regime, sweep
    position, replicate, point).
    """
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(config)
    if not model.has_exact_log_u:
        raise GridError("rate study needs a model with an exact reference curve")
    sim_grid, eval_grid = build_grids(config, model)
    master = _resolve_seed(config, seed)
    reps = _resolve_replicates(config, replicates)
    warmup = config.getint("sampling", "warmup", fallback=0)
    n_sweep = config.ints("rate", "n_sweep", fallback=(16, 32, 64, 128, 256, 512, 1024))
    l_sweep = config.ints("rate", "l_sweep", fallback=(8, 16, 32, 64, 128))
    fixed_n = config.getint("rate", "fixed_n", fallback=4)
    dense_reps = config.getint("rate", "dense_replicates", fallback=3)
    discrete = isinstance(model, DiscreteModel)

    if discrete:
        reference = exact_stationary(model, sim_grid)
    else:
        reference = exact_reference(model, eval_grid, sim_grid)

    def fit_error(grid, n_per_point, prefix, ref):
        bank = draw_sample_bank(model, grid,
                                np.full(len(grid), n_per_point, dtype=int),
                                master, warmup=warmup, spawn_prefix=prefix)
        emus = fit_emus(bank, model)
        if discrete:
            return normalized_l2_error(emus.stationary, ref)
        curve = FunctionalEstimate(emus, model).marginal_many(eval_grid.points)
        return normalized_l2_error(curve, ref)

    rows = []
    fixed_means = []
    for j, n_per in enumerate(n_sweep):
        errs = _parallel_map(
            lambda r, j=j, n_per=n_per: fit_error(sim_grid, n_per, (0, j, r), reference),
            range(reps), threads,
        )
        errs = np.asarray(errs)
        fixed_means.append(errs.mean())
        rows.append(("fixed-grid", n_per, reps, errs.mean(), float(np.median(errs))))

    half = len(n_sweep) // 2
    if len(n_sweep) - half >= 2:
        slope = float(np.polyfit(np.log(np.asarray(n_sweep[half:], dtype=float)),
                                 np.log(np.asarray(fixed_means[half:])), 1)[0])
    else:
        slope = float("nan")

    dense_medians = []
    if not discrete:
        for k, L in enumerate(l_sweep):
            dense_counts = [L] * sim_grid.domain.dim
            grid_k = make_regular_grid(sim_grid.domain, dense_counts, sim_grid.scale)
            ref_k = exact_reference(model, eval_grid, grid_k)
            errs = _parallel_map(
                lambda r, k=k, grid_k=grid_k, ref_k=ref_k:
                    fit_error(grid_k, fixed_n, (1, k, r), ref_k),
                range(dense_reps), threads,
            )
            errs = np.asarray(errs)
            med = float(np.median(errs))
            dense_medians.append(med)
            rows.append(("dense-grid", L, dense_reps, errs.mean(), med))

    _write_csv(os.path.join(out_dir, "rates.csv"),
               ["regime", "sweep_value", "n_replicates", "error_mean", "error_median"],
               rows, _comments(config, master))

    manifest = _manifest_skeleton("rate-study", config, master, reps)
    manifest["summary"] = {
        "fixed_grid": {
            "n_sweep": list(n_sweep),
            "mean_errors": fixed_means,
            "slope_last_half": slope,
            "slope_window": list(n_sweep[half:]),
        },
        "dense_grid": {
            "l_sweep": list(l_sweep) if not discrete else [],
            "median_errors": dense_medians,
            "nonincreasing": bool(np.all(np.diff(dense_medians) <= 0.0))
            if dense_medians else None,
            "fixed_n": fixed_n,
        },
    }
    manifest["outputs"] = ["rates.csv"]
    return _write_manifest(out_dir, manifest)


def _uniform_baseline_indices(n_points: int, n_sites: int) -> np.ndarray:
    return np.unique(np.round(np.linspace(0, n_points - 1, min(n_sites, n_points))).astype(int))


def run_design_study(config: ExperimentConfig, out_dir: str, *, seed=None,
                     replicates=None, threads: int = 1) -> dict:
    """Sequential allocation run plus a variance comparison at equal effort.

    Writes ``design.csv`` (per-iteration ``iteration,point,weight,
    allocated`` history of one run under the master seed).  When the
    ``[design]`` section lists ``probe_points``, also reruns the loop
    ``replicates`` times against a uniform fixed-site baseline of equal
    total effort and writes ``design_variance.csv`` with the
    density values at the probes; the manifest then carries the
    replicate variances and their reduction ratios.  Replicate seeds
    derive from the master via spawn keys (2, r) for design runs and
    (3, r) for baseline banks.
    """
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(config)
    _, eval_grid = build_grids(config, model)
    master = _resolve_seed(config, seed)
    reps = _resolve_replicates(config, replicates)
    warmup = config.getint("sampling", "warmup", fallback=0)
    iterations = config.getint("design", "iterations", fallback=8)
    blocks = config.getint("design", "blocks_per_iteration", fallback=8)
    per_block = config.getint("design", "samples_per_block", fallback=8)
    stabilize = config.getboolean("design", "stabilize", fallback=True)
    comments = _comments(config, master)

    state, functional = run_design_loop(
        model, eval_grid, iterations, blocks, per_block, master,
        stabilize=stabilize, warmup=warmup,
    )
    design_history_to_csv(state, os.path.join(out_dir, "design.csv"),
                          header_lines=comments)

    manifest = _manifest_skeleton("design", config, master, reps)
    summary: dict = {
        "total_draws": state.total_draws,
        "stabilize": stabilize,
        "degenerate_score": state.degenerate,
        "fallback_iterations": state.meta.get("fallback_iterations", []),
        "points_visited": int(np.count_nonzero(state.block_counts)),
    }
    outputs = ["design.csv"]

    probes = config.floats("design", "probe_points", fallback=())
    if probes:
        quad = trapezoid_weights(eval_grid)
        working = eval_grid.working_points()
        probe_pts = np.asarray(probes, dtype=float).reshape(len(probes), -1)
        probe_work = np.log(probe_pts) if eval_grid.scale == "log" else probe_pts
        probe_idx = [
            int(np.argmin(((working - pw) ** 2).sum(axis=1))) for pw in probe_work
        ]
        total = state.total_draws
        n_sites = config.getint("design", "baseline_points", fallback=blocks)
        site_idx = _uniform_baseline_indices(len(eval_grid), n_sites)
        base_counts = np.full(site_idx.size, total // site_idx.size, dtype=int)
        base_counts[: total - base_counts.sum()] += 1
        sub_grid = HyperGrid(domain=eval_grid.domain,
                             points=eval_grid.points[site_idx],
                             scale=eval_grid.scale)

        def probe_density(fn: FunctionalEstimate) -> np.ndarray:
            dens = fn.marginal_many(eval_grid.points)
            dens = dens / (dens @ quad)
            return dens[probe_idx]

        def one_design(r: int):
            rep_master = int(np.random.SeedSequence(
                master, spawn_key=(2, r)).generate_state(1, dtype=np.uint64)[0])
            try:
                _, fn = run_design_loop(model, eval_grid, iterations, blocks,
                                        per_block, rep_master,
                                        stabilize=stabilize, warmup=warmup)
                return probe_density(fn)
            except MargridError:
                return np.full(len(probe_idx), np.nan)

        def one_uniform(r: int):
            bank = draw_sample_bank(model, sub_grid, base_counts, master,
                                    warmup=warmup, spawn_prefix=(3, r))
            try:
                emus = fit_emus(bank, model, on_degenerate="truncate")
                return probe_density(FunctionalEstimate(emus, model))
            except MargridError:
                return np.full(len(probe_idx), np.nan)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            design_vals = np.asarray(_parallel_map(one_design, range(reps), threads))
            uniform_vals = np.asarray(_parallel_map(one_uniform, range(reps), threads))

        var_rows = []
        for r in range(reps):
            for probe, value in zip(probes, design_vals[r]):
                var_rows.append(("design", r, probe, value))
            for probe, value in zip(probes, uniform_vals[r]):
                var_rows.append(("uniform", r, probe, value))
        _write_csv(os.path.join(out_dir, "design_variance.csv"),
                   ["method", "replicate", "probe", "density"],
                   var_rows, comments)
        outputs.append("design_variance.csv")

        ok_d = ~np.isnan(design_vals).any(axis=1)
        ok_u = ~np.isnan(uniform_vals).any(axis=1)
        var_d = design_vals[ok_d].var(axis=0, ddof=1)
        var_u = uniform_vals[ok_u].var(axis=0, ddof=1)
        summary["variance_study"] = {
            "probe_points": list(probes),
            "baseline_sites": int(site_idx.size),
            "design_variance": var_d,
            "uniform_variance": var_u,
            "variance_reduction": 1.0 - var_d / var_u,
            "failed_design_runs": int((~ok_d).sum()),
            "failed_uniform_runs": int((~ok_u).sum()),
        }

    manifest["summary"] = summary
    manifest["outputs"] = sorted(outputs)
    return _write_manifest(out_dir, manifest)
