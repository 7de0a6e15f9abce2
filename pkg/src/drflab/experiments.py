"""Experiment configuration, seeded sweeps, and TSV emission.

Reproduces the package's benchmark protocols at desk scale: error-versus-
overparameterization sweeps for the random-feature pipeline and its
Gaussian surrogate (with scalar saddle-point predictions alongside),
train/generalization universality-gap reports at two sizes, covariance
spectra (empirical histograms against the recursive Stieltjes densities),
and saddle-point-versus-Monte-Carlo comparisons.

Determinism contract: every Monte-Carlo cell draws its generator from
``SeedSequence([master_seed, EXPERIMENT_IDS[kind], cell_index])`` where
``cell_index`` enumerates cells in the fixed order the sweep defines.
Outputs are reduced in that order regardless of scheduling, so a rerun
with the same config and master seed is byte-identical and independent
of the worker count.  Workers come from the ``DRFLAB_THREADS``
environment variable (default 1).

Failures never fabricate numbers: a non-converged cell is dropped from
the averages and surfaces in the ``failed`` column of its row (and in
the process exit code).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import activations
from .cgmt import CgmtNonConvergence, predict_with_averaging
from .moments import constants_chain, gauss_hermite
from .pipeline import (
    NetworkShape,
    covariance_recursion,
    drf_forward,
    regularity_check,
    sample_weights,
    surrogate_forward,
)
from .regression import (
    LabelModel,
    RegressionProblem,
    Regularizer,
    fit_elastic_net,
    fit_ridge,
    generalization_error_empirical,
    synthesize_labels,
)
from .spectral import (
    StieltjesNonConvergence,
    density_richardson,
    density_tsv,
    empirical_spectrum,
    ks_distance,
    refined_grid,
    stieltjes_chain,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentOutcome",
    "EXPERIMENT_IDS",
    "parse_config",
    "run_cgmt_vs_mc",
    "run_figure_sweep",
    "run_spectra",
    "run_universality_gap",
]

EXPERIMENT_IDS = {
    "figure1_ridge": 1,
    "figure2_elastic": 2,
    "figure3_spectra": 3,
    "universality_gap": 4,
    "cgmt_vs_mc": 5,
}

_ACTIVATIONS = {
    "tanh": activations.tanh,
    "erf": activations.erf,
    "linear": activations.linear,
}


class ConfigError(ValueError):
    """A config key failed to parse or violated a constraint."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully-validated description of one experiment run."""

    kind: str = "figure1_ridge"
    n: int = 300
    ratio: float = 1.5
    gamma_grid: tuple = (0.2, 0.55, 0.89, 1.24, 1.58, 1.93, 2.27, 2.62,
                         2.96, 3.31, 3.65, 4.0)
    depths: tuple = (1, 2)
    activation: str = "tanh"
    lambda_grid: tuple = (1.0, 1e-2, 1e-5)
    lambda2: float = 1e-5
    sigma_nu: float = 0.5
    theta_scale: float = 1.0
    seeds: int = 50
    output: str = "results"
    master_seed: int = 0
    order: int = 96
    test_factor: int = 10
    cgmt_draws: int = 4
    p0: int = 1000
    p2: int = 1500
    p1_grid: tuple = (100, 500, 1000, 2000, 5000, 10000)
    bins: int = 120
    omega: float = 2e-4
    rho1: float = None
    rho2: float = None

    def validate(self):
        if self.kind not in EXPERIMENT_IDS:
            raise ConfigError("kind", f"unknown kind {self.kind!r}; "
                              f"expected one of {sorted(EXPERIMENT_IDS)}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError("activation",
                              f"unknown activation {self.activation!r}")
        for key in ("n", "seeds", "order", "test_factor", "cgmt_draws",
                    "p0", "p2", "bins"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be >= 1")
        for key in ("ratio", "sigma_nu", "omega", "lambda2"):
            val = getattr(self, key)
            if not np.isfinite(val) or val <= 0 and key != "sigma_nu":
                raise ConfigError(key, "must be positive and finite")
        if self.sigma_nu < 0:
            raise ConfigError("sigma_nu", "must be >= 0")
        if self.theta_scale < 0 or not np.isfinite(self.theta_scale):
            raise ConfigError("theta_scale", "must be >= 0 and finite")
        gg = self.gamma_grid
        if len(gg) < 1 or any(g <= 0 for g in gg):
            raise ConfigError("gamma_grid", "needs positive entries")
        if any(b <= a for a, b in zip(gg, gg[1:])):
            raise ConfigError("gamma_grid", "must be strictly increasing")
        if len(self.depths) < 1 or any(d < 1 for d in self.depths):
            raise ConfigError("depths", "needs depths >= 1")
        if len(self.lambda_grid) < 1 or any(l <= 0 for l in self.lambda_grid):
            raise ConfigError("lambda_grid", "needs positive entries")
        if len(self.p1_grid) < 1 or any(p < 1 for p in self.p1_grid):
            raise ConfigError("p1_grid", "needs sizes >= 1")
        for key in ("rho1", "rho2"):
            val = getattr(self, key)
            if val is not None and (not np.isfinite(val) or val < 0):
                raise ConfigError(key, "must be a nonnegative number")
        return self


@dataclass(frozen=True)
class ExperimentOutcome:
    """Paths written and how many cells failed (0 means full success)."""

    paths: tuple
    failed: int


_INT_KEYS = {"n", "seeds", "master_seed", "order", "test_factor",
             "cgmt_draws", "p0", "p2", "bins"}
_FLOAT_KEYS = {"ratio", "lambda2", "sigma_nu", "theta_scale", "omega",
               "rho1", "rho2"}
_FLOAT_TUPLE_KEYS = {"gamma_grid", "lambda_grid"}
_INT_TUPLE_KEYS = {"depths", "p1_grid"}
_STR_KEYS = {"kind", "activation", "output"}


def _coerce(key, raw):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _FLOAT_TUPLE_KEYS:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        if key in _INT_TUPLE_KEYS:
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as err:
        raise ConfigError(key, f"cannot parse {raw!r}: {err}") from None
    if key in _STR_KEYS:
        return raw
    raise ConfigError(key, "unknown configuration key")


def parse_config(path=None, overrides=None):
    """Build a validated config from a key=value file plus overrides.

    The file may be absent (all defaults); ``overrides`` is a mapping of
    key to raw string and wins over the file.  Lines starting with ``#``
    and blank lines are ignored.
    """
    values = {}
    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"line {lineno}", f"expected key=value, got {line!r}")
                key, raw = line.split("=", 1)
                values[key.strip()] = _coerce(key.strip(), raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[key] = _coerce(key, raw if isinstance(raw, str) else str(raw))
    known = {f.name for f in fields(ExperimentConfig)}
    for key in values:
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
    return ExperimentConfig(**values).validate()


def _thread_count():
    raw = os.environ.get("DRFLAB_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise ValueError(f"DRFLAB_THREADS must be an integer, got {raw!r}")
    return max(1, count)


def _pool_map(fn, items):
    workers = _thread_count()
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _cell_rng(config, cell_index):
    seq = np.random.SeedSequence(
        [config.master_seed, EXPERIMENT_IDS[config.kind], int(cell_index)])
    return np.random.default_rng(seq)


def _chain_for(config, depth):
    act = _ACTIVATIONS[config.activation]()
    rule = gauss_hermite(config.order)
    return act, constants_chain(act, depth, rule)


def _regularizer(config, lam):
    if config.kind == "figure2_elastic":
        return Regularizer.elastic_net(lam, config.lambda2)
    return Regularizer.ridge(lam)


def _fit(problem):
    if problem.reg.kind == "ridge":
        return fit_ridge(problem)
    return fit_elastic_net(problem)


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and np.isnan(value):
        return "nan"
    if isinstance(value, (float, np.floating)):
        return f"{value:.10g}"
    return str(value)


def _write_tsv(path, metadata, header, rows):
    lines = [f"# {key}={_fmt(val)}" for key, val in metadata.items()]
    lines.append("\t".join(header))
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _config_echo(config):
    meta = {}
    for f in fields(ExperimentConfig):
        val = getattr(config, f.name)
        if isinstance(val, tuple):
            val = ",".join(_fmt(v) for v in val)
        meta[f.name] = val
    meta["version"] = "0.1.0"
    return meta


def _mc_cell(config, act, chain, depth, reg, gamma, rng, sampler=None):
    """One Monte-Carlo cell: paired pipeline/surrogate fits from one draw.

    Returns per-model train objectives and fresh-sample generalization
    errors, plus convergence and input-regularity flags.  The same weights,
    teacher, label noise, and test inputs serve both models so the gap
    between them is a paired statistic.
    """
    n = config.n
    d = max(1, round(n / config.ratio))
    p = max(1, round(gamma * n))
    dims = (d,) + (p,) * depth
    w_seed, g_seed, t_seed = (int(s) for s in rng.integers(0, 2**63, size=3))
    X = sampler(rng, d, n) if sampler else rng.standard_normal((d, n))
    regular = bool(regularity_check(X).passed)
    W = sample_weights(NetworkShape(dims), w_seed)
    model = LabelModel(
        theta_star=_unit_theta(rng, p, config.theta_scale),
        sigma_nu=config.sigma_nu, seed=t_seed)
    X_test = rng.standard_normal((d, config.test_factor * n))

    F = drf_forward(X, W, act)
    G = surrogate_forward(X, W, chain, noise_seed=g_seed)
    F_test = drf_forward(X_test, W, act)
    G_test = surrogate_forward(X_test, W, chain, noise_seed=g_seed + 1)

    out = {"regular": regular, "ok": True}
    for tag, feats, feats_test in (("act", F, F_test), ("gauss", G, G_test)):
        problem = RegressionProblem(
            features=feats, labels=synthesize_labels(feats, model, 0),
            model=model, reg=reg)
        fit = _fit(problem)
        gen, _ = generalization_error_empirical(
            fit.theta_hat, feats_test, model, substream=1)
        out[f"train_{tag}"] = fit.train_error
        out[f"gen_{tag}"] = gen
        out["ok"] = out["ok"] and bool(fit.converged)
    return out


def _unit_theta(rng, p, scale=1.0):
    theta = rng.standard_normal(p)
    return scale * theta / np.linalg.norm(theta)


def _mean_se(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def _cgmt_prediction(config, chain, depth, reg, gamma, rng):
    """Saddle-point train/generalization prediction for one sweep row."""
    n = config.n
    d = max(1, round(n / config.ratio))
    p = max(1, round(gamma * n))
    dims = (d,) + (p,) * depth
    theta = _unit_theta(rng, p, config.theta_scale)
    seed = int(rng.integers(0, 2**63))
    try:
        pred = predict_with_averaging(
            dims, n, chain, reg, config.sigma_nu, theta,
            seed=seed, n_draws=config.cgmt_draws)
        return pred["train_mean"], pred["gen_mean"], True
    except (CgmtNonConvergence, ValueError, FloatingPointError):
        return float("nan"), float("nan"), False


def run_figure_sweep(config):
    """Error-versus-gamma sweep; one TSV per (depth, lambda) pair.

    Columns follow the plotted series: per-gamma seed averages (and
    standard errors) of the pipeline and surrogate train/test errors,
    the saddle-point predictions, and a ``failed`` count of dropped
    cells.
    """
    config.validate()
    if config.kind not in ("figure1_ridge", "figure2_elastic"):
        raise ConfigError("kind", "run_figure_sweep needs figure1_ridge or "
                          "figure2_elastic")
    header = ["gamma",
              "TrainActivation", "TrainActivationSE",
              "TestActivation", "TestActivationSE",
              "TrainGaussian", "TrainGaussianSE",
              "TestGaussian", "TestGaussianSE",
              "TrainCGMT", "TestCGMT", "failed"]
    cells = []
    for depth in config.depths:
        for lam in config.lambda_grid:
            for gamma in config.gamma_grid:
                for seed_idx in range(config.seeds):
                    cells.append((depth, lam, gamma, seed_idx, len(cells)))
    chains = {depth: _chain_for(config, depth) for depth in config.depths}

    def one(cell):
        depth, lam, gamma, _seed_idx, index = cell
        act, chain = chains[depth]
        reg = _regularizer(config, lam)
        try:
            return _mc_cell(config, act, chain, depth, reg, gamma,
                            _cell_rng(config, index))
        except (FloatingPointError, np.linalg.LinAlgError):
            return {"ok": False}

    results = _pool_map(one, cells)
    paths = []
    failed_total = 0
    next_index = len(cells)
    for depth in config.depths:
        act, chain = chains[depth]
        rows = []
        for lam in config.lambda_grid:
            reg = _regularizer(config, lam)
            for gamma in config.gamma_grid:
                sel = [r for c, r in zip(cells, results)
                       if c[0] == depth and c[1] == lam and c[2] == gamma]
                good = [r for r in sel if r.get("ok")]
                failed = len(sel) - len(good)
                tr_a, tr_a_se = _mean_se([r["train_act"] for r in good])
                te_a, te_a_se = _mean_se([r["gen_act"] for r in good])
                tr_g, tr_g_se = _mean_se([r["train_gauss"] for r in good])
                te_g, te_g_se = _mean_se([r["gen_gauss"] for r in good])
                tr_c, te_c, cgmt_ok = _cgmt_prediction(
                    config, chain, depth, reg, gamma,
                    _cell_rng(config, next_index))
                next_index += 1
                if not cgmt_ok:
                    failed += 1
                failed_total += failed
                rows.append([gamma, tr_a, tr_a_se, te_a, te_a_se,
                             tr_g, tr_g_se, te_g, te_g_se, tr_c, te_c,
                             failed])
        for li, lam in enumerate(config.lambda_grid):
            chunk = rows[li * len(config.gamma_grid):
                         (li + 1) * len(config.gamma_grid)]
            meta = _config_echo(config)
            meta.update({"depth": depth, "lambda": lam})
            name = f"{config.kind}_L{depth}_lam{lam:g}.tsv"
            paths.append(_write_tsv(os.path.join(config.output, name),
                                    meta, header, chunk))
    return ExperimentOutcome(paths=tuple(paths), failed=failed_total)


def run_universality_gap(config, input_sampler=None):
    """Pipeline-versus-surrogate gap report at sizes n and 2n.

    Per (depth, lambda, gamma, size): the paired seed-mean gap of train
    and generalization errors with its standard error and a pass flag
    against max(5% relative, 3 s.e.); rows at 2n also check the gap did
    not grow by more than one standard error.  Cells whose inputs fail
    the regularity hypothesis are flagged and excluded from pass/fail
    judgement instead of asserted.
    """
    config.validate()
    if config.kind != "universality_gap":
        raise ConfigError("kind", "run_universality_gap needs kind="
                          "universality_gap")
    sizes = (config.n, 2 * config.n)
    cells = []
    for size in sizes:
        for depth in config.depths:
            for lam in config.lambda_grid:
                for gamma in config.gamma_grid:
                    for seed_idx in range(config.seeds):
                        cells.append((size, depth, lam, gamma, seed_idx,
                                      len(cells)))
    chains = {depth: _chain_for(config, depth) for depth in config.depths}

    def one(cell):
        size, depth, lam, gamma, _seed_idx, index = cell
        act, chain = chains[depth]
        sized = replace(config, n=size)
        try:
            return _mc_cell(sized, act, chain, depth,
                            Regularizer.ridge(lam), gamma,
                            _cell_rng(config, index), sampler=input_sampler)
        except (FloatingPointError, np.linalg.LinAlgError):
            return {"ok": False}

    results = _pool_map(one, cells)
    header = ["n", "depth", "lambda", "gamma",
              "train_gap", "train_se", "train_pass",
              "gen_gap", "gen_se", "gen_pass",
              "hypothesis_ok", "shrink_train_ok", "shrink_gen_ok", "failed"]
    rows = []
    failed_total = 0
    base_gaps = {}
    for size in sizes:
        for depth in config.depths:
            for lam in config.lambda_grid:
                for gamma in config.gamma_grid:
                    sel = [r for c, r in zip(cells, results)
                           if c[0] == size and c[1] == depth
                           and c[2] == lam and c[3] == gamma]
                    good = [r for r in sel if r.get("ok")]
                    failed = len(sel) - len(good)
                    failed_total += failed
                    regular = all(r.get("regular", False) for r in good)
                    row = [size, depth, lam, gamma]
                    gaps = {}
                    for tag, ref in (("train", "train_gauss"),
                                     ("gen", "gen_gauss")):
                        diffs = [r[f"{tag}_act"] - r[f"{tag}_gauss"]
                                 for r in good]
                        ref_mean, _ = _mean_se([r[ref] for r in good])
                        gap_mean, gap_se = _mean_se(diffs)
                        gap = abs(gap_mean)
                        tol = max(0.05 * abs(ref_mean), 3.0 * gap_se)
                        passed = ("skipped" if not regular
                                  else str(bool(gap <= tol)))
                        row.extend([gap, gap_se, passed])
                        gaps[tag] = (gap, gap_se)
                    row.append(str(regular))
                    key = (depth, lam, gamma)
                    if size == sizes[0]:
                        base_gaps[key] = gaps
                        row.extend(["-", "-"])
                    else:
                        for tag in ("train", "gen"):
                            g0, s0 = base_gaps[key][tag]
                            g1, s1 = gaps[tag]
                            slack = np.hypot(s0, s1)
                            row.append(str(bool(g1 <= g0 + slack)))
                    row.append(failed)
                    rows.append(row)
    meta = _config_echo(config)
    path = _write_tsv(os.path.join(config.output, "universality_gap.tsv"),
                      meta, header, rows)
    return ExperimentOutcome(paths=(path,), failed=failed_total)


def run_spectra(config):
    """Empirical and analytic spectra per hidden width; KS summary table.

    For each ``p1``: an eigenvalue histogram of the sampled surrogate
    covariance and the recursive Stieltjes density, written as TSVs
    spanning the same eigenvalue range (the analytic grid contains every
    histogram center), plus one summary row with the KS distance computed
    at the histogram bin edges (edges start at 0 so rank-deficiency atoms
    sit inside a bin rather than on its boundary).
    """
    config.validate()
    if config.kind != "figure3_spectra":
        raise ConfigError("kind", "run_spectra needs kind=figure3_spectra")
    depth = config.depths[-1]
    act, chain = _chain_for(config, depth)
    if config.rho1 is not None or config.rho2 is not None:
        chain = [replace(lc,
                         rho1=config.rho1 if config.rho1 is not None else lc.rho1,
                         rho2=config.rho2 if config.rho2 is not None else lc.rho2)
                 for lc in chain]
    paths = []
    summary_rows = []
    failed = 0
    for index, p1 in enumerate(config.p1_grid):
        if depth == 1:
            dims = (config.p0, int(p1))
        else:
            mids = (int(p1),) * (depth - 1)
            dims = (config.p0,) + mids + (config.p2,)
        rng = _cell_rng(config, index)
        w_seed = int(rng.integers(0, 2**63))
        row = {"p1": int(p1), "ks": float("nan"), "mass": float("nan"),
               "status": "ok"}
        try:
            W = sample_weights(NetworkShape(dims), w_seed)
            R = covariance_recursion(W, chain)
            eigs = np.linalg.eigvalsh(0.5 * (R.matrix + R.matrix.T))
            top = float(eigs.max())
            # edges start at 0 and overshoot the largest eigenvalue so point
            # masses at either end sit inside a bin, not on its boundary
            top_edge = top * 1.02 + 10.0 * config.omega
            edges = np.linspace(0.0, top_edge, config.bins + 1)
            emp = empirical_spectrum(R, edges)
            betas = [b / a for a, b in zip(dims, dims[1:])]
            evaluator = stieltjes_chain(chain, betas)
            # a dense sampling window at the last layer's bias variance:
            # rank deficiency (or a pure-bias layer) parks an atom there,
            # and when no atom exists the extra points are harmless
            spikes = [chain[-1].rho2 ** 2] if chain[-1].rho2 > 0 else []
            lo = min(1e-6, top * 1e-6)
            grid = refined_grid(lo, top_edge * 1.02, 900,
                                spikes=spikes, omega=config.omega)
            grid = np.union1d(grid, emp.lambdas)
            dens = density_richardson(evaluator, grid, omega=config.omega)
            row["ks"] = ks_distance(dens, emp, at=edges)
            row["mass"] = dens.mass
            meta = {"p1": int(p1), "dims": ",".join(str(v) for v in dims),
                    "betas": ",".join(f"{b:.10g}" for b in betas),
                    "rho1s": ",".join(f"{lc.rho1:.10g}" for lc in chain),
                    "rho2s": ",".join(f"{lc.rho2:.10g}" for lc in chain),
                    "omega": config.omega, "master_seed": config.master_seed}
            emp_lines = density_tsv(emp, metadata=meta)
            dens_lines = density_tsv(dens, metadata=meta)
            emp_path = os.path.join(config.output,
                                    f"spectra_p1_{int(p1)}_empirical.tsv")
            dens_path = os.path.join(config.output,
                                     f"spectra_p1_{int(p1)}_stieltjes.tsv")
            os.makedirs(config.output or ".", exist_ok=True)
            with open(emp_path, "w") as fh:
                fh.write(emp_lines)
            with open(dens_path, "w") as fh:
                fh.write(dens_lines)
            paths.extend([emp_path, dens_path])
        except (ArithmeticError, StieltjesNonConvergence,
                np.linalg.LinAlgError) as err:
            row["status"] = f"failed:{type(err).__name__}"
            failed += 1
        summary_rows.append([row["p1"], row["ks"], row["mass"],
                             row["status"]])
    meta = _config_echo(config)
    summary = _write_tsv(os.path.join(config.output, "spectra_summary.tsv"),
                         meta, ["p1", "ks", "mass", "status"], summary_rows)
    paths.append(summary)
    return ExperimentOutcome(paths=tuple(paths), failed=failed)


def run_cgmt_vs_mc(config, elastic=False):
    """Saddle-point predictions against surrogate Monte-Carlo fits.

    One TSV per depth; rows are (lambda, gamma) cells with MC means,
    standard errors, predictions, and relative gaps.
    """
    config.validate()
    if config.kind != "cgmt_vs_mc":
        raise ConfigError("kind", "run_cgmt_vs_mc needs kind=cgmt_vs_mc")
    header = ["lambda", "gamma",
              "TrainMC", "TrainMCSE", "TestMC", "TestMCSE",
              "TrainCGMT", "TestCGMT",
              "TrainRelGap", "TestRelGap", "failed"]
    cells = []
    for depth in config.depths:
        for lam in config.lambda_grid:
            for gamma in config.gamma_grid:
                for seed_idx in range(config.seeds):
                    cells.append((depth, lam, gamma, seed_idx, len(cells)))
    chains = {depth: _chain_for(config, depth) for depth in config.depths}

    def reg_for(lam):
        if elastic:
            return Regularizer.elastic_net(lam, config.lambda2)
        return Regularizer.ridge(lam)

    def one(cell):
        depth, lam, gamma, _seed_idx, index = cell
        act, chain = chains[depth]
        try:
            return _mc_cell(config, act, chain, depth, reg_for(lam), gamma,
                            _cell_rng(config, index))
        except (FloatingPointError, np.linalg.LinAlgError):
            return {"ok": False}

    results = _pool_map(one, cells)
    paths = []
    failed_total = 0
    next_index = len(cells)
    for depth in config.depths:
        act, chain = chains[depth]
        rows = []
        for lam in config.lambda_grid:
            for gamma in config.gamma_grid:
                sel = [r for c, r in zip(cells, results)
                       if c[0] == depth and c[1] == lam and c[2] == gamma]
                good = [r for r in sel if r.get("ok")]
                failed = len(sel) - len(good)
                tr_mc, tr_se = _mean_se([r["train_gauss"] for r in good])
                te_mc, te_se = _mean_se([r["gen_gauss"] for r in good])
                tr_c, te_c, cgmt_ok = _cgmt_prediction(
                    config, chain, depth, reg_for(lam), gamma,
                    _cell_rng(config, next_index))
                next_index += 1
                if not cgmt_ok:
                    failed += 1
                failed_total += failed
                tr_gap = (abs(tr_c - tr_mc) / abs(tr_mc)
                          if np.isfinite(tr_c) and tr_mc else float("nan"))
                te_gap = (abs(te_c - te_mc) / abs(te_mc)
                          if np.isfinite(te_c) and te_mc else float("nan"))
                rows.append([lam, gamma, tr_mc, tr_se, te_mc, te_se,
                             tr_c, te_c, tr_gap, te_gap, failed])
        meta = _config_echo(config)
        meta["depth"] = depth
        name = f"cgmt_vs_mc_L{depth}.tsv"
        paths.append(_write_tsv(os.path.join(config.output, name),
                                meta, header, rows))
    return ExperimentOutcome(paths=tuple(paths), failed=failed_total)
