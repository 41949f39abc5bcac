"""Codebooks, weighted Lloyd iterations on (signed) grid densities, and oracles."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .deconv_risk import GridDensity, clustering_loss, risk_against_density
from .errors import OracleInconsistencyError, ParameterError

EXCESS_FLOOR = -1e-6


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise ParameterError("a codebook needs k >= 1 centers")
        object.__setattr__(self, "centers", c)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def canonical(self) -> "Codebook":
        """Centers sorted lexicographically (first axis first)."""
        order = np.lexsort(self.centers.T[::-1])
        return Codebook(self.centers[order])

    def loss(self, x):
        return clustering_loss(self, x)

    def risk(self, density: GridDensity) -> float:
        return risk_against_density(self, density)

    def tolist(self):
        return self.centers.tolist()


@dataclass
class LloydReport:
    final_codebook: Codebook
    final_risk: float
    iterations: int
    converged: bool
    restarts_used: int = 1
    reseed_events: int = 0
    risk_trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "centers": self.final_codebook.tolist(),
            "risk": self.final_risk,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts_used": self.restarts_used,
            "reseed_events": self.reseed_events,
        }


def _assign(points, centers):
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    # argmin returns the first minimiser: ties go to the lowest center index
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]


def _lloyd(points, weights, init, max_iters, tol, lower=None, upper=None, mass_floor=None):
    """Alternate nearest-center assignment and signed weighted-mean updates.

    Returns (centers, iterations, converged, reseeds, risk_trace) where the
    trace holds sum(w * loss) for the codebook at the start of every
    iteration plus the final one.
    """
    centers = np.array(init, dtype=float)
    k = centers.shape[0]
    positive = weights > 0
    if mass_floor is None:
        mass_floor = 1e-10 * weights[positive].sum()
    reseeds = 0
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        labels, loss = _assign(points, centers)
        trace.append(float(np.dot(weights, loss)))
        new = centers.copy()
        mass = np.bincount(labels, weights=weights, minlength=k)
        for j in range(k):
            if mass[j] > mass_floor:
                sel = labels == j
                new[j] = weights[sel] @ points[sel] / mass[j]
        for j in np.flatnonzero(mass <= mass_floor):
            # relocate to the positive-weight node contributing most to the risk
            _, cur = _assign(points, new)
            contrib = np.where(positive, weights * cur, -np.inf)
            new[j] = points[np.argmax(contrib)]
            reseeds += 1
        if lower is not None:
            new = np.clip(new, lower, upper)
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < tol:
            converged = True
            break
    _, loss = _assign(points, centers)
    trace.append(float(np.dot(weights, loss)))
    return centers, it, converged, reseeds, trace


def weighted_lloyd(density: GridDensity, k: int, init, max_iters: int = 100,
                   tol: float = 1e-8, mass_floor: float | None = None, bounds=None) -> LloydReport:
    """Minimise the grid-weighted clustering risk from ``init``.

    Node weights are quadrature weight times density value and may be
    negative. A cell whose total mass is at most ``mass_floor`` (default
    1e-10 of the total positive mass) gets its center relocated; centers are
    clipped to ``bounds`` (default: the grid box) after every update.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    init = Codebook(getattr(init, "centers", init))
    if init.k != k or init.dim != density.grid.dim:
        raise ParameterError("init codebook does not match k / grid dimension")
    grid = density.grid
    lower, upper = (grid.lower, grid.upper) if bounds is None else bounds
    w = density.node_weights
    centers, its, conv, reseeds, trace = _lloyd(
        grid.points, w, init.centers, max_iters, tol,
        np.asarray(lower, float), np.asarray(upper, float), mass_floor)
    book = Codebook(centers).canonical()
    return LloydReport(book, risk_against_density(book, density), its, conv, 1, reseeds, trace)


def _positive_probs(density: GridDensity) -> np.ndarray:
    p = np.clip(density.node_weights, 0.0, None)
    total = p.sum()
    if total <= 0:
        raise ParameterError("density has no positive mass")
    return p / total


def spread_init(points, probs, k, rng) -> np.ndarray:
    """k-means++ seeding on weighted points."""
    idx = [rng.choice(points.shape[0], p=probs)]
    d2 = ((points - points[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        score = probs * d2
        if score.sum() <= 0:
            score = probs
        nxt = rng.choice(points.shape[0], p=score / score.sum())
        idx.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[idx].copy()


def sampled_init(points, probs, k, rng) -> np.ndarray:
    support = np.count_nonzero(probs)
    idx = rng.choice(points.shape[0], size=k, replace=support < k, p=probs)
    return points[idx].copy()


def multi_start_minimize(density: GridDensity, k: int, restarts: int = 8, seed=0,
                         max_iters: int = 100, tol: float = 1e-8,
                         return_all: bool = False):
    """Best of ``restarts`` weighted Lloyd runs.

    The first start is a k-means++ spread seeding; the others are k nodes
    drawn with probability proportional to the positive part of the density.
    Ties in final risk go to the earliest start.
    """
    if restarts < 1:
        raise ParameterError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    points = density.grid.points
    probs = _positive_probs(density)
    reports = []
    for r in range(restarts):
        init = spread_init(points, probs, k, rng) if r == 0 else sampled_init(points, probs, k, rng)
        reports.append(weighted_lloyd(density, k, init, max_iters, tol))
    best = min(range(restarts), key=lambda i: (reports[i].final_risk, i))
    out = reports[best]
    out.restarts_used = restarts
    return (out, reports) if return_all else out


def naive_kmeans(sample, k: int, restarts: int = 8, seed=0, max_iters: int = 100,
                 tol: float = 1e-8) -> Codebook:
    """Plain k-means on the contaminated observations (baseline)."""
    z = np.asarray(sample, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = z.shape[0]
    if n < k:
        raise ParameterError(f"need at least k={k} observations, got {n}")
    rng = np.random.default_rng(seed)
    w = np.full(n, 1.0 / n)
    best, best_risk = None, np.inf
    for _ in range(max(1, restarts)):
        init = spread_init(z, w, k, rng)
        centers, *_, trace = _lloyd(z, w, init, max_iters, tol, mass_floor=0.0)
        if trace[-1] < best_risk:
            best, best_risk = centers, trace[-1]
    return Codebook(best).canonical()


def optimal_codebook(true_density: GridDensity, k: int, restarts: int = 64, seed=0,
                     max_iters: int = 500, tol: float = 1e-10):
    if np.any(true_density.values < 0):
        raise ParameterError("true density must be nonnegative")
    rep = multi_start_minimize(true_density, k, restarts, seed, max_iters, tol)
    return rep.final_codebook, rep.final_risk


def exhaustive_node_oracle(density: GridDensity, k: int):
    """Minimum risk over all codebooks with centers on grid nodes (repeats allowed)."""
    pts = density.grid.points
    w = density.node_weights
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)  # node x candidate
    best, best_c = np.inf, None
    for combo in itertools.combinations_with_replacement(range(pts.shape[0]), k):
        r = float(np.dot(w, d2[:, list(combo)].min(axis=1)))
        if r < best:
            best, best_c = r, combo
    return Codebook(pts[list(best_c)]).canonical(), best


def excess_risk(c, cstar_risk: float, true_density: GridDensity) -> float:
    exc = risk_against_density(c, true_density) - cstar_risk
    if exc < EXCESS_FLOOR:
        raise OracleInconsistencyError(
            f"excess risk {exc:.3e} below {EXCESS_FLOOR:g}: reference codebook is not optimal")
    return exc


def pollard_hessian_check(true_density: GridDensity, cstar, step: float = 0.05) -> float:
    """Smallest eigenvalue of the central finite-difference Hessian of the risk at cstar."""
    c0 = np.asarray(getattr(cstar, "centers", cstar), dtype=float)
    if c0.ndim == 1:
        c0 = c0[:, None]
    shape = c0.shape
    flat = c0.ravel()
    m = flat.size

    def f(v):
        return risk_against_density(v.reshape(shape), true_density)

    f0 = f(flat)
    hess = np.empty((m, m))
    for a in range(m):
        ea = np.zeros(m)
        ea[a] = step
        hess[a, a] = (f(flat + ea) - 2 * f0 + f(flat - ea)) / step**2
        for b in range(a + 1, m):
            eb = np.zeros(m)
            eb[b] = step
            val = (f(flat + ea + eb) - f(flat + ea - eb) - f(flat - ea + eb)
                   + f(flat - ea - eb)) / (4 * step**2)
            hess[a, b] = hess[b, a] = val
    return float(np.linalg.eigvalsh(hess).min())
