import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deconvkm.clustering import (Codebook, excess_risk, exhaustive_node_oracle,
                                 multi_start_minimize, naive_kmeans, optimal_codebook,
                                 pollard_hessian_check, weighted_lloyd)
from deconvkm.deconv_risk import GridDensity, clustering_loss, make_grid, risk_against_density
from deconvkm.errors import OracleInconsistencyError, ParameterError
from deconvkm.experiments import SourceModel


def uniform_density(nodes=1000):
    grid = make_grid([(0, 1)], nodes)
    return GridDensity(grid, np.ones(nodes))


def uniform_risk(c1, c2):
    """Closed-form k-means risk of the uniform law on [0, 1] for centers c1 < c2."""
    b = 0.5 * (c1 + c2)
    return ((b - c1) ** 3 + c1**3) / 3 + ((1 - c2) ** 3 + (c2 - b) ** 3) / 3


def two_bumps(nodes=400, sep=1.0, sd=0.2):
    grid = make_grid([(-2, 2)], nodes)
    x = grid.axes[0]
    f = np.exp(-0.5 * ((x - sep) / sd) ** 2) + np.exp(-0.5 * ((x + sep) / sd) ** 2)
    return GridDensity(grid, f / (f.sum() * grid.weight))


def test_codebook_canonical_order():
    c = Codebook([[1.0, 0.0], [0.0, 2.0], [0.0, 1.0]]).canonical()
    np.testing.assert_array_equal(c.centers, [[0.0, 1.0], [0.0, 2.0], [1.0, 0.0]])
    assert c.k == 3 and c.dim == 2


def test_uniform_closed_form_oracle_self_check():
    assert uniform_risk(0.25, 0.75) == pytest.approx(1 / 48)


def test_weighted_lloyd_uniform_k2():
    rep = weighted_lloyd(uniform_density(), 2, [[0.1], [0.9]])
    np.testing.assert_allclose(rep.final_codebook.centers.ravel(), [0.25, 0.75], atol=0.01)
    assert rep.final_risk == pytest.approx(1 / 48, abs=1e-3)
    assert rep.converged
    assert rep.final_risk == pytest.approx(
        risk_against_density(rep.final_codebook, uniform_density()), abs=1e-10)


def test_weighted_lloyd_k1_is_centroid_in_one_step():
    dens = two_bumps()
    dens = GridDensity(dens.grid, dens.values * (1 + 0.3 * dens.grid.axes[0]))
    rep = weighted_lloyd(dens, 1, [[0.7]])
    w = dens.node_weights
    assert rep.final_codebook.centers[0, 0] == pytest.approx(w @ dens.grid.axes[0] / w.sum())
    assert rep.iterations <= 2


def test_symmetric_init_keeps_symmetry():
    rep = weighted_lloyd(two_bumps(), 2, [[-0.3], [0.3]])
    c = rep.final_codebook.centers.ravel()
    assert abs(c[0] + c[1]) < 1e-8


def test_monotone_risk_on_nonnegative_density():
    dens = two_bumps(sd=0.4, sep=0.6)
    rep = weighted_lloyd(dens, 3, [[-1.5], [-1.4], [1.9]])
    trace = np.array(rep.risk_trace)
    assert np.all(np.diff(trace) <= 1e-12)
    assert rep.final_risk <= risk_against_density([[-1.5], [-1.4], [1.9]], dens) + 1e-12


def test_permutation_invariance():
    dens = two_bumps(sd=0.3)
    a = weighted_lloyd(dens, 3, [[-1.2], [0.1], [1.5]]).final_codebook.centers
    b = weighted_lloyd(dens, 3, [[1.5], [-1.2], [0.1]]).final_codebook.centers
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_reseed_on_negative_mass_cell():
    grid = make_grid([(-2, 2)], 200)
    x = grid.axes[0]
    vals = np.exp(-0.5 * ((x - 1) / 0.2) ** 2) + np.exp(-0.5 * ((x + 1) / 0.2) ** 2)
    vals = vals - 3.0 * np.exp(-0.5 * ((x - 1.9) / 0.05) ** 2)
    dens = GridDensity(grid, vals)
    rep = weighted_lloyd(dens, 2, [[0.0], [1.95]])
    assert rep.reseed_events >= 1
    assert np.isfinite(rep.final_risk)
    assert np.all(np.abs(rep.final_codebook.centers) <= 2)


def test_multi_start_restarts_one_is_single_run():
    dens = two_bumps()
    rng = np.random.default_rng(3)
    from deconvkm.clustering import _positive_probs, spread_init
    init = spread_init(dens.grid.points, _positive_probs(dens), 2, rng)
    single = weighted_lloyd(dens, 2, init)
    multi = multi_start_minimize(dens, 2, restarts=1, seed=3)
    np.testing.assert_array_equal(single.final_codebook.centers, multi.final_codebook.centers)
    assert multi.final_risk == single.final_risk


def test_multi_start_is_best_of_restarts_and_deterministic():
    dens = two_bumps(sd=0.35, sep=0.7)
    best, reports = multi_start_minimize(dens, 3, restarts=6, seed=9, return_all=True)
    assert best.final_risk <= min(r.final_risk for r in reports)
    again = multi_start_minimize(dens, 3, restarts=6, seed=9)
    np.testing.assert_array_equal(best.final_codebook.centers, again.final_codebook.centers)
    assert best.restarts_used == 6


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.sampled_from([1, 2]))
def test_brute_force_equivalence_small(seed, k):
    rng = np.random.default_rng(seed)
    grid = make_grid([(-1, 1)], 32)
    vals = rng.gamma(0.5, size=32)
    dens = GridDensity(grid, vals / (vals.sum() * grid.weight))
    _, oracle = exhaustive_node_oracle(dens, k)
    rep = multi_start_minimize(dens, k, restarts=8, seed=seed)
    assert rep.final_risk - oracle <= 1e-3 * (1 + oracle)


def test_naive_kmeans_exact_points():
    pts = np.array([[0.0], [3.0], [7.0]])
    c = naive_kmeans(np.repeat(pts, 4, axis=0), 3, restarts=4, seed=0)
    np.testing.assert_allclose(c.centers, pts)
    assert clustering_loss(c, pts).sum() == pytest.approx(0, abs=1e-20)


def test_naive_kmeans_uniform():
    z = np.random.default_rng(0).uniform(0, 1, size=(10_000, 1))
    c = naive_kmeans(z, 2, restarts=4, seed=1)
    np.testing.assert_allclose(c.centers.ravel(), [0.25, 0.75], atol=0.02)


def test_naive_kmeans_needs_k_points():
    with pytest.raises(ParameterError):
        naive_kmeans([[0.0]], 2)


def test_optimal_codebook_uniform():
    c, r = optimal_codebook(uniform_density(), 2, restarts=16, seed=0)
    np.testing.assert_allclose(c.centers.ravel(), [0.25, 0.75], atol=0.01)
    assert r == pytest.approx(1 / 48, abs=1e-3)


def test_optimal_codebook_k1_symmetric():
    c, _ = optimal_codebook(two_bumps(), 1, restarts=4, seed=0)
    assert abs(c.centers[0, 0]) < 1e-8


def test_optimal_codebook_separated_gaussians_vs_grid_search():
    src = SourceModel.gaussian_mixture([0.5, 0.5], [-1.0, 1.0], [0.2, 0.2], 2.5)
    grid = make_grid([(-2.5, 2.5)], 1000)
    dens = src.density_on(grid)
    c, r = optimal_codebook(dens, 2, restarts=16, seed=0)
    np.testing.assert_allclose(c.centers.ravel(), [-1.0, 1.0], atol=0.02)
    # symmetric grid search over c = (-a, a)
    a = np.linspace(0.8, 1.2, 401)
    risks = [risk_against_density([[-t], [t]], dens) for t in a]
    assert r <= min(risks) + 1e-9
    assert c.centers[1, 0] == pytest.approx(a[int(np.argmin(risks))], abs=2e-3)


def test_excess_risk():
    dens = uniform_density()
    cstar, rstar = optimal_codebook(dens, 2, restarts=8, seed=0)
    assert excess_risk(cstar, rstar, dens) == pytest.approx(0, abs=1e-10)
    exc = excess_risk([[0.3], [0.7]], rstar, dens)
    assert exc == pytest.approx(uniform_risk(0.3, 0.7) - 1 / 48, abs=1e-4)
    with pytest.raises(OracleInconsistencyError):
        excess_risk(cstar, rstar + 1e-3, dens)


def test_hessian_uniform_k1():
    assert pollard_hessian_check(uniform_density(), [[0.5]], step=0.05) == pytest.approx(2, abs=0.01)


def test_hessian_uniform_k2_positive():
    assert pollard_hessian_check(uniform_density(), [[0.25], [0.75]]) > 0


def test_hessian_empty_cell_is_flat():
    # the second center owns no mass, so moving it leaves the risk unchanged
    eig = pollard_hessian_check(uniform_density(), [[0.5], [5.0]], step=0.01)
    assert abs(eig) < 1e-8


def test_hessian_coincident_centers_not_positive():
    # splitting two coincident centers lowers the risk linearly: a cusp, never a minimum
    assert pollard_hessian_check(uniform_density(), [[0.5], [0.5]], step=0.01) <= 0


def test_variance_risk_correspondence():
    dens = uniform_density()
    cstar = np.array([0.25, 0.75])
    rstar = uniform_risk(*cstar)
    x = dens.grid.axes[0]
    w = dens.node_weights
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(100):
        c = cstar + rng.uniform(-0.2, 0.2, size=2)
        c.sort()
        diff = clustering_loss(c[:, None], x) - clustering_loss(cstar[:, None], x)
        var = w @ diff**2 - (w @ diff) ** 2
        exc = risk_against_density(c[:, None], dens) - rstar
        ratios.append(var / exc)
    kappa = max(ratios)
    print(f"fitted variance/excess constant: {kappa:.3f}")
    assert np.isfinite(kappa) and kappa > 0
