"""Source laws, contamination, bandwidth rules and Monte Carlo experiments."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .clustering import (Codebook, excess_risk, multi_start_minimize, naive_kmeans,
                         optimal_codebook, pollard_hessian_check)
from .config import Config
from .deconv_risk import (GridDensity, QuadratureGrid, clustering_loss, deconv_density,
                          empirical_risk, make_grid)
from .errors import (ConfigError, DeconvError, DegenerateConfigError, NumericalError,
                     ParameterError, ReplicationError)
from .kernels import BaseKernel, axis_spectrum, build_kernel_table, make_base_kernel
from .noise import NoiseModel, sample_noise

log = logging.getLogger(__name__)

MIN_ACCEPTANCE = 0.01


@dataclass(frozen=True)
class SourceModel:
    kind: str
    M: float
    holder_gamma: float = 2.0
    weights: np.ndarray = None
    means: np.ndarray = None
    stds: np.ndarray = None
    low: np.ndarray = None
    high: np.ndarray = None
    _mass: float = field(default=1.0, repr=False)

    @classmethod
    def uniform_box(cls, low, high, M=None, holder_gamma=2.0):
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        if low.shape != high.shape or np.any(high <= low):
            raise ParameterError("uniform box needs low < high on every axis")
        corner = np.sqrt(np.sum(np.maximum(np.abs(low), np.abs(high)) ** 2))
        M = float(corner if M is None else M)
        if corner > M + 1e-12:
            raise ParameterError(f"box corner at distance {corner:g} lies outside B(0, {M:g})")
        return cls("uniform_box", M, holder_gamma, low=low, high=high)

    @classmethod
    def gaussian_mixture(cls, weights, means, stds, M, holder_gamma=2.0):
        w = np.asarray(weights, dtype=float)
        mu = np.asarray(means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        sd = np.broadcast_to(np.asarray(stds, dtype=float).reshape(len(w), -1), mu.shape).copy()
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("mixture weights must be positive and sum to 1")
        if mu.shape[0] != w.size or np.any(sd <= 0) or not M > 0:
            raise ParameterError("inconsistent mixture parameters")
        if mu.shape[1] > 2:
            raise ParameterError("only d in {1, 2} supported")
        mass = _ball_mass(w, mu, sd, M)
        if mass < MIN_ACCEPTANCE:
            raise ConfigError(f"only {mass:.2e} of the mixture mass lies in B(0, {M})")
        return cls("truncated_gaussian_mixture", float(M), holder_gamma, w, mu, sd, _mass=mass)

    @property
    def dim(self) -> int:
        return self.low.size if self.kind == "uniform_box" else self.means.shape[1]

    def support_box(self):
        if self.kind == "uniform_box":
            return self.low.copy(), self.high.copy()
        return np.full(self.dim, -self.M), np.full(self.dim, self.M)

    def pdf(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if self.kind == "uniform_box":
            inside = np.all((x >= self.low) & (x <= self.high), axis=1)
            return inside / np.prod(self.high - self.low)
        dens = np.zeros(x.shape[0])
        for w, m, s in zip(self.weights, self.means, self.stds):
            dens += w * np.prod(stats.norm.pdf(x, m, s), axis=1)
        inside = np.sum(x * x, axis=1) <= self.M ** 2
        return np.where(inside, dens / self._mass, 0.0)

    def density_on(self, grid: QuadratureGrid) -> GridDensity:
        return GridDensity(grid, self.pdf(grid.points).reshape(grid.shape))


def _ball_mass(w, mu, sd, M):
    if mu.shape[1] == 1:
        return float(np.sum(w * (stats.norm.cdf(M, mu[:, 0], sd[:, 0])
                                 - stats.norm.cdf(-M, mu[:, 0], sd[:, 0]))))
    # Gauss-Legendre in polar coordinates
    r, wr = np.polynomial.legendre.leggauss(200)
    r = 0.5 * M * (r + 1.0)
    wr = 0.5 * M * wr
    th = np.linspace(0.0, 2 * np.pi, 512, endpoint=False)
    rr, tt = np.meshgrid(r, th, indexing="ij")
    pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)
    jac = (wr[:, None] * rr * (2 * np.pi / th.size)).ravel()
    total = 0.0
    for wk, m, s in zip(w, mu, sd):
        total += wk * np.dot(jac, np.prod(stats.norm.pdf(pts, m, s), axis=1))
    return float(total)


def sample_source(model: SourceModel, n: int, seed) -> np.ndarray:
    if n < 0:
        raise ParameterError("n must be >= 0")
    rng = np.random.default_rng(seed)
    if model.kind == "uniform_box":
        return model.low + (model.high - model.low) * rng.random((n, model.dim))
    out = np.empty((0, model.dim))
    drawn = kept = 0
    while out.shape[0] < n:
        batch = max(2 * (n - out.shape[0]), 64)
        comp = rng.choice(model.weights.size, size=batch, p=model.weights)
        x = model.means[comp] + model.stds[comp] * rng.standard_normal((batch, model.dim))
        x = x[np.sum(x * x, axis=1) <= model.M ** 2]
        drawn += batch
        kept += x.shape[0]
        if drawn >= 10_000 and kept / drawn < MIN_ACCEPTANCE:
            raise ConfigError(f"rejection acceptance rate {kept / drawn:.2e} below 1%")
        out = np.vstack([out, x])
    return out[:n]


def contaminate(x, noise: NoiseModel, seed) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != noise.dim:
        raise ParameterError(f"data dimension {x.shape[1]} != noise dimension {noise.dim}")
    return x + sample_noise(noise, x.shape[0], seed)


def theoretical_bandwidth(n, gamma, beta_bar, c0: float = 1.0) -> float:
    """c0 * n^(-1/(gamma + 2 beta_bar))."""
    if n < 1 or not gamma > 0 or beta_bar < 0 or not c0 > 0:
        raise ParameterError("need n >= 1, gamma > 0, beta_bar >= 0, c0 > 0")
    return float(c0 * n ** (-1.0 / (gamma + 2.0 * beta_bar)))


def rate_exponent(gamma, beta_bar) -> float:
    return gamma / (gamma + 2.0 * beta_bar)


# -- building blocks from a Config -------------------------------------------------

def source_from_config(cfg: Config) -> SourceModel:
    s = cfg.source
    if s.kind == "uniform_box":
        low = np.broadcast_to(np.asarray(s.low, float), (s.dim,))
        high = np.broadcast_to(np.asarray(s.high, float), (s.dim,))
        return SourceModel.uniform_box(low, high, holder_gamma=s.holder_gamma)
    if s.kind == "truncated_gaussian_mixture":
        means = np.asarray(s.means, float).reshape(len(s.weights), s.dim)
        return SourceModel.gaussian_mixture(s.weights, means, s.stds, s.M, s.holder_gamma)
    raise ConfigError(f"unknown source kind {s.kind!r}")


def noise_from_config(cfg: Config) -> NoiseModel:
    dim = cfg.source.dim
    try:
        if cfg.noise.kind == "identity":
            return NoiseModel.identity(dim)
        if cfg.noise.kind == "laplace":
            return NoiseModel.laplace(cfg.noise.sigma, dim)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown noise kind {cfg.noise.kind!r}")


def kernel_from_config(cfg: Config) -> BaseKernel:
    try:
        return make_base_kernel(cfg.kernel.kind, cfg.kernel.taper_start)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def estimation_grid(source: SourceModel, lam: float, nodes: int, margin_factor: float = 3.0):
    """Box enclosing the source support with a margin of ``margin_factor * lam``."""
    lo, hi = source.support_box()
    pad = margin_factor * lam
    return make_grid(np.stack([lo - pad, hi + pad], axis=1), nodes)


def fit_deconvolved(z, cfg: Config, lam: float, seed, source=None, noise=None, kernel=None):
    """Deconvolution ERM codebook for one sample; returns (LloydReport, density)."""
    source = source or source_from_config(cfg)
    noise = noise or noise_from_config(cfg)
    kernel = kernel or kernel_from_config(cfg)
    grid = estimation_grid(source, lam, cfg.grid.nodes_per_axis, cfg.grid.margin_factor)
    table = build_kernel_table(kernel, noise, lam, grid, sample_box=_box_around(z, grid),
                               n_freq=cfg.kernel.freq_nodes, cf_floor=cfg.kernel.cf_floor)
    dens = deconv_density(z, table, grid)
    rep = multi_start_minimize(dens, cfg.clustering.k, cfg.clustering.restarts, seed,
                               cfg.clustering.max_iters, cfg.clustering.tol)
    return rep, dens


def _box_around(z, grid):
    z = np.asarray(z, dtype=float).reshape(-1, grid.dim)
    return (np.minimum(z.min(axis=0), grid.lower), np.maximum(z.max(axis=0), grid.upper))


def cv_bandwidth(sample, candidates, folds: int, seed, cfg: Config) -> float:
    """Candidate bandwidth with the smallest held-out deconvolved empirical risk.

    Candidates whose kernel cannot be built (numerical errors) are skipped;
    ties go to the smaller bandwidth.
    """
    z = np.asarray(sample, dtype=float).reshape(-1, cfg.source.dim)
    cands = sorted(float(c) for c in candidates)
    if len(cands) < 2 or folds < 2:
        raise ParameterError("need >= 2 candidates and >= 2 folds")
    k = cfg.clustering.k
    if z.shape[0] < folds * k:
        raise ParameterError(f"{z.shape[0]} points cannot form {folds} folds of >= k={k}")
    rng = np.random.default_rng(seed)
    parts = np.array_split(rng.permutation(z.shape[0]), folds)
    source, noise, kernel = source_from_config(cfg), noise_from_config(cfg), kernel_from_config(cfg)
    best, best_score = None, np.inf
    for lam in cands:
        try:
            score = 0.0
            for f, held in enumerate(parts):
                train = np.delete(z, held, axis=0)
                rep, dens = fit_deconvolved(train, cfg, lam, (seed, f), source, noise, kernel)
                grid = dens.grid
                table = build_kernel_table(kernel, noise, lam, grid, sample_box=_box_around(z, grid),
                                           n_freq=cfg.kernel.freq_nodes,
                                           cf_floor=cfg.kernel.cf_floor)
                score += empirical_risk(rep.final_codebook, z[held], table, grid)
            score /= folds
        except NumericalError as exc:
            log.info("cv: skipping lambda=%g (%s)", lam, exc)
            continue
        log.info("cv: lambda=%g held-out risk %.6g", lam, score)
        if score < best_score:
            best, best_score = lam, score
    if best is None:
        raise ParameterError("no bandwidth candidate could be evaluated")
    return best


def choose_bandwidth(cfg: Config, n: int, z=None, seed=0) -> float:
    b = cfg.bandwidth
    if b.rule == "fixed":
        if not b.value > 0:
            raise ConfigError("bandwidth.value must be positive for rule 'fixed'")
        return float(b.value)
    if b.rule == "theoretical":
        beta_bar = noise_from_config(cfg).beta_bar
        return theoretical_bandwidth(n, cfg.source.holder_gamma, beta_bar, b.c0)
    if b.rule == "cv":
        if z is None:
            raise ConfigError("cv bandwidth needs a sample")
        return cv_bandwidth(z, b.candidates, b.folds, seed, cfg)
    raise ConfigError(f"unknown bandwidth rule {b.rule!r}")


# -- Monte Carlo harness ---------------------------------------------------------

def replication_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _sub_seeds(seed: int, count: int):
    return [int(s.generate_state(1, dtype=np.uint32)[0])
            for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass
class Oracle:
    grid: QuadratureGrid
    density: GridDensity
    codebook: Codebook
    risk: float
    hessian_min_eig: float
    n_optima: int


def compute_oracle(cfg: Config, source: SourceModel | None = None) -> Oracle:
    """c* on a grid refined by ``grid.oracle_factor`` with an enlarged restart budget."""
    source = source or source_from_config(cfg)
    lo, hi = source.support_box()
    grid = make_grid(np.stack([lo, hi], axis=1),
                     cfg.grid.nodes_per_axis * cfg.grid.oracle_factor)
    dens = source.density_on(grid)
    restarts = cfg.clustering.restarts * cfg.clustering.oracle_restart_factor
    best, reports = multi_start_minimize(dens, cfg.clustering.k, restarts,
                                         replication_seed(cfg.master_seed, 2**31 - 1),
                                         max_iters=1000, tol=1e-12, return_all=True)
    optima = []
    for rep in reports:
        if rep.final_risk <= best.final_risk + 1e-8 * (1 + best.final_risk):
            c = rep.final_codebook.centers
            if not any(np.max(np.abs(c - o)) < 1e-3 for o in optima):
                optima.append(c)
    eig = pollard_hessian_check(dens, best.final_codebook, cfg.clustering.hessian_step)
    if not eig > 0:
        raise ConfigError(f"Hessian at c* is not positive definite (min eigenvalue {eig:.3g})")
    return Oracle(grid, dens, best.final_codebook, best.final_risk, eig, len(optima))


def _replicate(cfg: Config, n: int, seed: int, oracle: Oracle):
    s_x, s_eps, s_fit, s_naive, s_bw = _sub_seeds(seed, 5)
    source = source_from_config(cfg)
    noise = noise_from_config(cfg)
    x = sample_source(source, n, s_x)
    z = contaminate(x, noise, s_eps)
    lam = choose_bandwidth(cfg, n, z, s_bw)
    rep, _ = fit_deconvolved(z, cfg, lam, s_fit, source, noise)
    exc = excess_risk(rep.final_codebook, oracle.risk, oracle.density)
    exc_naive = float("nan")
    if cfg.experiment.naive_baseline:
        naive = naive_kmeans(z, cfg.clustering.k, cfg.clustering.restarts, s_naive,
                             cfg.clustering.max_iters, cfg.clustering.tol)
        exc_naive = excess_risk(naive, oracle.risk, oracle.density)
    return exc, exc_naive, lam


def _replicate_task(args):
    cfg, n, rep, seed, oracle = args
    try:
        exc, exc_naive, lam = _replicate(cfg, n, seed, oracle)
    except DeconvError as exc:
        raise ReplicationError(f"replication n={n} rep={rep} failed: {exc}", seed) from exc
    return {"n": n, "rep": rep, "excess_deconv": exc, "excess_naive": exc_naive,
            "lambda": lam, "seed": seed}


@dataclass
class RateFit:
    sample_sizes: np.ndarray
    mean_excess: np.ndarray
    std_error: np.ndarray
    slope: float
    slope_stderr: float
    theoretical_exponent: float
    mean_excess_naive: np.ndarray = None
    std_error_naive: np.ndarray = None
    rows: list = field(default_factory=list, repr=False)
    oracle_risk: float = float("nan")
    oracle_centers: list = field(default_factory=list)
    hessian_min_eig: float = float("nan")
    n_optima: int = 0

    def summary(self) -> dict:
        finite = lambda v: v if np.isfinite(v) else None  # noqa: E731
        return {
            "slope": finite(self.slope),
            "slope_stderr": finite(self.slope_stderr),
            "theoretical_exponent": self.theoretical_exponent,
            "theoretical_slope": -self.theoretical_exponent,
            "sample_sizes": [int(n) for n in self.sample_sizes],
            "mean_excess": self.mean_excess.tolist(),
            "std_error": self.std_error.tolist(),
            "mean_excess_naive": None if self.mean_excess_naive is None
            else self.mean_excess_naive.tolist(),
            "std_error_naive": None if self.std_error_naive is None
            else self.std_error_naive.tolist(),
            "oracle_risk": self.oracle_risk,
            "oracle_centers": self.oracle_centers,
            "hessian_min_eig": self.hessian_min_eig,
            "n_optima": self.n_optima,
        }


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else float("nan")
    return float(v.mean()), float(se)


def fit_loglog(x, y):
    """Unweighted least-squares slope (and its standard error) of log y on log x."""
    res = stats.linregress(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))
    return float(res.slope), float(res.stderr)


def run_rate_experiment(cfg: Config, workers: int = 1, progress=None) -> RateFit:
    """Mean excess risk of the deconvolution estimator along the n-schedule."""
    source = source_from_config(cfg)
    noise = noise_from_config(cfg)
    oracle = compute_oracle(cfg, source)
    log.info("oracle: centers=%s risk=%.6g min-eig=%.3g |M|=%d", oracle.codebook.tolist(),
             oracle.risk, oracle.hessian_min_eig, oracle.n_optima)
    sizes = [int(n) for n in cfg.experiment.sample_sizes]
    tasks = [(cfg, n, r, replication_seed(cfg.master_seed, i, r), oracle)
             for i, n in enumerate(sizes) for r in range(cfg.experiment.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate_task, tasks, chunksize=4))
    else:
        rows = []
        for t in tasks:
            rows.append(_replicate_task(t))
            if progress:
                progress(rows[-1])
    means, ses, means_nv, ses_nv = [], [], [], []
    for n in sizes:
        sel = [r for r in rows if r["n"] == n]
        m, s = _mean_se([r["excess_deconv"] for r in sel])
        means.append(m)
        ses.append(s)
        m, s = _mean_se([r["excess_naive"] for r in sel])
        means_nv.append(m)
        ses_nv.append(s)
    means = np.array(means)
    if np.any(means <= 0):
        raise NumericalError("nonpositive mean excess risk; cannot fit a log-log slope")
    slope = slope_se = float("nan")
    if len(set(sizes)) >= 2:
        slope, slope_se = fit_loglog(sizes, means)
    naive = cfg.experiment.naive_baseline
    return RateFit(np.array(sizes), means, np.array(ses), slope, slope_se,
                   rate_exponent(cfg.source.holder_gamma, noise.beta_bar),
                   np.array(means_nv) if naive else None, np.array(ses_nv) if naive else None,
                   rows, oracle.risk, oracle.codebook.tolist(), oracle.hessian_min_eig,
                   oracle.n_optima)


def paired_sign_test(better, worse) -> tuple[int, int, float]:
    """One-sided sign test that ``better`` < ``worse`` pairwise; ties are dropped."""
    diff = np.asarray(worse, float) - np.asarray(better, float)
    wins = int(np.sum(diff > 0))
    trials = int(np.sum(diff != 0))
    if trials == 0:
        return wins, trials, 1.0
    return wins, trials, float(stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue)


# -- bias experiment -------------------------------------------------------------

@dataclass
class BiasResult:
    lambdas: np.ndarray
    biases: np.ndarray
    slope: float
    slope_stderr: float

    def summary(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "biases": self.biases.tolist(),
                "slope": self.slope, "slope_stderr": self.slope_stderr}


def smoothed_density(density: GridDensity, kernel: BaseKernel, lam, n_freq: int) -> GridDensity:
    """K_lam * f on the grid of ``density`` (midpoint quadrature, per-axis product kernel)."""
    grid = density.grid
    lam = np.broadcast_to(np.asarray(lam, float), (grid.dim,))
    one = lambda v: np.ones_like(v, dtype=complex)  # noqa: E731
    mats = [axis_spectrum(kernel, one, lam[j], n_freq).cross(grid.axes[j], grid.axes[j])
            * grid.spacing[j] for j in range(grid.dim)]
    vals = mats[0] @ density.values
    if grid.dim == 2:
        vals = vals @ mats[1].T
    return GridDensity(grid, vals)


def smoothing_bias(source: SourceModel, kernel: BaseKernel, lam, c, c_alt, grid,
                   n_freq: int = 4096) -> float:
    """|(R - R^lam)(c) - (R - R^lam)(c_alt)| with the noise channel removed."""
    f = source.density_on(grid)
    f_lam = smoothed_density(f, kernel, lam, n_freq)
    diff = clustering_loss(c, grid.points) - clustering_loss(c_alt, grid.points)
    return float(abs(grid.weight * np.dot(f.values.ravel() - f_lam.values.ravel(), diff)))


def run_bias_experiment(cfg: Config, nodes: int | None = None) -> BiasResult:
    """Log-log slope of the smoothing bias of the risk difference against lambda."""
    source = source_from_config(cfg)
    kernel = kernel_from_config(cfg)
    lams = np.asarray(cfg.experiment.bias_lambdas, dtype=float)
    c = Codebook(np.asarray(cfg.experiment.bias_codebook, float).reshape(-1, source.dim))
    c_alt = Codebook(np.asarray(cfg.experiment.bias_codebook_alt, float).reshape(-1, source.dim))
    grid = estimation_grid(source, lams.max(), nodes or cfg.grid.nodes_per_axis,
                           cfg.grid.margin_factor)
    biases = np.array([smoothing_bias(source, kernel, lam, c, c_alt, grid, cfg.kernel.freq_nodes)
                       for lam in lams])
    if biases[np.argmax(lams)] < 1e-12:
        raise DegenerateConfigError("bias vanishes at the largest bandwidth; slope undefined")
    if np.any(biases <= 0):
        raise DegenerateConfigError("zero bias inside the schedule; slope undefined")
    slope, se = fit_loglog(lams, biases)
    return BiasResult(lams, biases, slope, se)
