import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import null_space

from sdd.errors import DegenerateVertex, NoViolatedFacet
from sdd.instances import make_example1, make_grid_clo, make_hypercube, make_random_lp
from sdd.lp_core import EdgeDirection, edge_matrix, solve_lp
from sdd.oracles import dimension_dir, enumerate_vertices, reachable_optima
from sdd.pointwise import (
    BasisCones,
    VectorOracle,
    VertexCones,
    check_sufficient,
    containment_test,
    facet_hit_select,
    run_pointwise,
)
from sdd.priors import Fiber, QueryDataset, ball, membership


def edges2(*vecs):
    return [EdgeDirection(j, np.asarray(v, dtype=float)) for j, v in enumerate(vecs)]


def test_facet_hit_example_geometry():
    j, alpha = facet_hit_select([1.0, 0.1], [-1.0, -1.0], edges2([1, 0], [0, 1]))
    assert j == 1
    assert alpha == pytest.approx(0.1 / 1.1)


def test_facet_hit_anchor_on_facet():
    j, alpha = facet_hit_select([0.0, 1.0], [-1.0, 1.0], edges2([1, 0], [0, 1]))
    assert (j, alpha) == (0, 0.0)


def test_facet_hit_single_violation():
    j, _ = facet_hit_select([5.0, 0.1], [-100.0, 3.0], edges2([1, 0], [0, 1]))
    assert j == 0


def test_facet_hit_tie_goes_to_lowest_index():
    j, _ = facet_hit_select([1.0, 1.0], [-1.0, -1.0], edges2([1, 0], [0, 1]))
    assert j == 0


def test_facet_hit_requires_violation():
    with pytest.raises(NoViolatedFacet):
        facet_hit_select([1.0, 1.0], [2.0, 0.5], edges2([1, 0], [0, 1]))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_facet_hit_first_hit_property(k, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((k, k + 1))
    c_in = np.linalg.lstsq(D, rng.uniform(0.1, 1.0, k), rcond=None)[0]
    c_out = c_in - 3.0 * rng.standard_normal(k + 1)
    if np.all(D @ c_out >= 0):
        return
    j, alpha = facet_hit_select(c_in, c_out, edges2(*D))
    hit = c_in + alpha * (c_out - c_in)
    assert 0.0 <= alpha < 1.0
    assert D[j] @ hit == pytest.approx(0.0, abs=1e-10)
    assert np.all(D @ hit >= -1e-10)


def test_hypercube_type_needs_exactly_its_direction():
    h = make_hypercube(4, 6, 0.1)
    for i in range(4):
        init = QueryDataset(np.array([h.delta(j) for j in range(4) if j != i]), np.zeros(3))
        oracle = VectorOracle(h.types[i])
        cert = run_pointwise(h.lp, h.prior, oracle, init=init)
        assert cert.queries_added == 1
        assert np.array_equal(cert.dataset.queries[-1], h.delta(i))
        expect = np.concatenate([np.eye(6)[i], 1 - np.eye(6)[i]])
        assert np.array_equal(cert.decision, expect)


def test_interior_cost_needs_no_queries():
    lp = make_hypercube(2, 2).lp
    prior = ball(np.array([1.0, 2.0, 0.0, 0.0]), 0.5)
    oracle = VectorOracle(prior.center)
    cert = run_pointwise(lp, prior, oracle)
    assert cert.queries_added == 0 and cert.iterations == 1
    assert oracle.call_count == 0


def test_example1_picks_reachable_facet():
    e = make_example1(0.1)
    cert = run_pointwise(e.lp, e.prior, VectorOracle(e.cost))
    assert cert.queries_added == 1
    assert np.array_equal(cert.dataset.queries[0], [0.0, 1.0, 0.0, -1.0])
    hit = cert.hits[0]
    assert hit.alpha == pytest.approx(0.1 / 1.1)
    D = edge_matrix(e.lp, solve_lp(e.lp, e.cost))
    assert np.all(D @ hit.c_hit >= -1e-8)


def test_containment_witness_on_hypercube():
    h = make_hypercube(3, 3, 0.1)
    c = h.types[1]
    bs = solve_lp(h.lp, c)
    m_min, j0, c_out = containment_test(h.lp, bs, Fiber(h.prior, QueryDataset.empty(6)))
    assert m_min < 0
    assert j0 == 3 + 1
    assert membership(h.prior, c_out, 1e-9)
    # the witness pushes coordinate 1 upward, like (mu + e_1, 0)
    assert c_out[1] > h.mu[1]


def test_degenerate_vertex_rejected():
    g = make_grid_clo(3)
    with pytest.raises(DegenerateVertex):
        run_pointwise(g.lp, g.prior, VectorOracle(g.c0 + 0.01 * np.arange(g.d)))


def test_vertex_cones_match_basis_cones_when_nondegenerate():
    rng = np.random.default_rng(5)
    lp = make_random_lp(2, 5, rng)
    V = enumerate_vertices(lp)
    vc = VertexCones(lp, V)
    for _ in range(10):
        c = rng.standard_normal(5)
        bs = solve_lp(lp, c)
        k = vc.argmin(c)
        assert np.allclose(V[k], bs.vertex)
        _, Dv = vc.cone(vc.solve(c))
        Db = edge_matrix(lp, bs)
        # same cone: each vertex-difference ray is a positive multiple of an edge
        for row in Dv:
            cos = Db @ row / (np.linalg.norm(Db, axis=1) * np.linalg.norm(row))
            assert cos.max() == pytest.approx(1.0)


def test_grid_run_within_intrinsic_dimension():
    g = make_grid_clo(5)
    V = g.vertices()
    cones = VertexCones(g.lp, V)
    d_star = dimension_dir(reachable_optima(g.lp, g.prior, V))
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(g.d)
        c = g.c0 + 0.9 * u / np.linalg.norm(u)
        cert = run_pointwise(g.lp, g.prior, VectorOracle(c), cones=cones)
        assert cert.iterations <= d_star + 1
        assert cert.queries_added <= d_star


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_run_invariants_on_hypercube(d_star, seed):
    rng = np.random.default_rng(seed)
    h = make_hypercube(d_star, d_star + 2, 0.1)
    u = rng.standard_normal(h.d)
    c = h.prior.center + np.concatenate([rng.uniform(0.2, 1.0) * u / np.linalg.norm(u), np.zeros(h.d)])
    k = rng.integers(0, d_star)
    init = QueryDataset(np.array([h.delta(j) for j in range(k)]).reshape(k, 2 * h.d), np.zeros(k))
    oracle = VectorOracle(c)
    cert = run_pointwise(h.lp, h.prior, oracle, init=init)
    assert cert.iterations <= d_star + 1
    assert cert.queries_added <= d_star
    assert oracle.call_count - k == cert.queries_added
    assert cert.fi_calls <= cert.iterations * (h.lp.d - h.lp.m)
    if len(cert.dataset):
        assert np.linalg.matrix_rank(cert.dataset.queries) == len(cert.dataset)
    Q, s = cert.dataset.queries, cert.dataset.measurements
    for hit in cert.hits:
        # the hit point is a fiber member on a facet of the cone that was tested
        assert membership(h.prior, hit.c_hit, 1e-7)
        assert hit.query @ hit.c_hit == pytest.approx(0.0, abs=1e-7)
    assert np.allclose(Q @ c, s)
    assert check_sufficient(h.prior, cert.dataset, c, BasisCones(h.lp))


def test_certificate_valid_on_sampled_fiber_members():
    # rejection-sample fiber members from a box around c and re-solve the LP
    rng = np.random.default_rng(1)
    h = make_hypercube(3, 4, 0.1)
    for trial in range(3):
        u = rng.standard_normal(h.d)
        c = h.prior.center + np.concatenate([0.6 * u / np.linalg.norm(u), np.zeros(h.d)])
        cert = run_pointwise(h.lp, h.prior, VectorOracle(c))
        pins = np.vstack([cert.dataset.queries, np.eye(2 * h.d)[h.d:]])
        N = null_space(pins)
        accepted = 0
        while accepted < 1000:
            cand = c + rng.uniform(-2.0, 2.0, (4000, N.shape[1])) @ N.T
            ok = np.linalg.norm(cand[:, : h.d] - h.mu, axis=1) <= 1.0
            for cp in cand[ok][: 1000 - accepted]:
                assert cp @ cert.decision == pytest.approx(solve_lp(h.lp, cp).objective, abs=1e-8)
            accepted += min(int(ok.sum()), 1000 - accepted)


def test_unknown_cost_mode_uses_fiber_center():
    h = make_hypercube(3, 3, 0.1)

    class Hidden:
        def __init__(self, c):
            self._c, self.call_count = c, 0

        def query(self, q):
            self.call_count += 1
            return float(np.asarray(q) @ self._c)

    c = h.types[2]
    cert = run_pointwise(h.lp, h.prior, Hidden(c))
    assert check_sufficient(h.prior, cert.dataset, c, BasisCones(h.lp))


def test_certificate_json_fields():
    h = make_hypercube(2, 2, 0.1)
    cert = run_pointwise(h.lp, h.prior, VectorOracle(h.types[0]))
    doc = cert.to_dict()
    assert set(doc) == {"queries", "measurements", "basis_indices", "decision", "iterations", "fi_calls", "oracle_calls"}
    assert doc["oracle_calls"] == 1
