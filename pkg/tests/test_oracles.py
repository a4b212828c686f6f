import cvxpy as cp
import numpy as np
import pytest

from sdd.errors import TooLarge
from sdd.instances import hypercube_vertices, lifted_cube_lp, make_example1, make_grid_clo, make_hypercube, make_random_lp
from sdd.oracles import (
    cone_distance_ellipsoid,
    dimension_dir,
    enumerate_vertices,
    pointwise_sufficient_brute,
    reachable_optima,
)
from sdd.pointwise import VectorOracle, VertexCones, run_pointwise
from sdd.priors import Ellipsoid, QueryDataset, ball


def rows(V):
    return {tuple(np.round(v, 9)) for v in V}


def test_lifted_cube_vertices():
    V = enumerate_vertices(lifted_cube_lp(3))
    assert len(V) == 8
    assert rows(V) == rows(hypercube_vertices(3))


def test_enumeration_size_guard():
    with pytest.raises(TooLarge):
        enumerate_vertices(lifted_cube_lp(13))


@pytest.mark.parametrize("d_star", [2, 3, 4, 5, 6])
def test_hypercube_reachable_set_and_dimension(d_star):
    for d in (d_star, d_star + 3):
        h = make_hypercube(d_star, d)
        R = reachable_optima(h.lp, h.prior, hypercube_vertices(d))
        expect = [np.concatenate([np.zeros(d), np.ones(d)])]
        expect += [np.concatenate([np.eye(d)[i], 1 - np.eye(d)[i]]) for i in range(d_star)]
        assert rows(R) == rows(expect)
        assert dimension_dir(R) == d_star


def test_single_point_prior_reaches_one_vertex():
    lp = lifted_cube_lp(3)
    prior = Ellipsoid(np.array([1.0, -1.0, 2.0, 0.0, 0.0, 0.0]), np.zeros((6, 6)))
    R = reachable_optima(lp, prior)
    assert rows(R) == {(0.0, 1.0, 0.0, 1.0, 0.0, 1.0)}
    assert dimension_dir(R) == 0


def cone_distance_cvx(prior, D):
    L = np.linalg.cholesky(np.linalg.inv(prior.shape))
    c = cp.Variable(prior.d)
    prob = cp.Problem(cp.Minimize(cp.norm(L.T @ (c - prior.center))), [D @ c >= 0])
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_cone_distance_matches_conic_solver():
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = 4
        M = rng.standard_normal((d, d))
        prior = Ellipsoid(rng.standard_normal(d), M @ M.T + 0.5 * np.eye(d))
        D = rng.standard_normal((3, d))
        assert cone_distance_ellipsoid(prior, D) == pytest.approx(cone_distance_cvx(prior, D), abs=1e-5)


def test_grid_reachable_matches_monte_carlo():
    g = make_grid_clo(3, radius=40.0)
    V = g.vertices()
    R = reachable_optima(g.lp, g.prior, V)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((20_000, g.d))
    r = rng.uniform(size=(20_000, 1)) ** (1.0 / g.d)
    C = g.c0 + 40.0 * r * u / np.linalg.norm(u, axis=1, keepdims=True)
    hit = V[np.unique(np.argmin(C @ V.T, axis=1))]
    # every sampled optimum is reachable; rare cones may be missed by sampling
    assert rows(hit) <= rows(R)
    assert dimension_dir(R) >= dimension_dir(hit)
    assert 1 < len(R) <= len(V)


def test_random_lp_reachable_matches_monte_carlo():
    rng = np.random.default_rng(4)
    lp = make_random_lp(2, 5, rng)
    prior = ball(rng.standard_normal(5), 1.0)
    R = reachable_optima(lp, prior)
    V = enumerate_vertices(lp)
    u = rng.standard_normal((50_000, 5))
    C = prior.center + u / np.linalg.norm(u, axis=1, keepdims=True)
    hit = V[np.unique(np.argmin(C @ V.T, axis=1))]
    assert rows(hit) <= rows(R)


def test_polytope_reachable_on_example1():
    e = make_example1(0.1)
    R = reachable_optima(e.lp, e.prior)
    # the segment prior reaches (0,0) at its top end and (1,1) at (-1,-1)
    assert {tuple(v[:2]) for v in R} >= {(0.0, 0.0), (1.0, 1.0)}


def test_brute_rejects_empty_dataset_at_type():
    h = make_hypercube(3, 3)
    assert not pointwise_sufficient_brute(h.lp, h.prior, QueryDataset.empty(6), h.types[1], n_samples=500)


def test_brute_accepts_certificate():
    h = make_hypercube(3, 3)
    for c in h.types:
        cert = run_pointwise(h.lp, h.prior, VectorOracle(c))
        assert pointwise_sufficient_brute(h.lp, h.prior, cert.dataset, c, n_samples=500)


def test_brute_accepts_singleton_fiber():
    lp = lifted_cube_lp(2)
    prior = ball(np.array([0.5, -0.5, 0.0, 0.0]), 1.0)
    data = QueryDataset(np.eye(4), np.zeros(4))
    assert pointwise_sufficient_brute(lp, prior, data, prior.center, n_samples=50)


def test_brute_on_grid_with_vertex_table():
    g = make_grid_clo(4, radius=5.0)
    V = g.vertices()
    c = g.c0 + 0.5
    cert = run_pointwise(g.lp, g.prior, VectorOracle(c), cones=VertexCones(g.lp, V))
    assert pointwise_sufficient_brute(g.lp, g.prior, cert.dataset, c, vertices=V, n_samples=500)
    assert not pointwise_sufficient_brute(g.lp, g.prior, QueryDataset.empty(g.d), c, vertices=V, n_samples=500)
