"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import math
import time

import numpy as np
from fi_oracle import fi_projected_gradient
from sdd import experiments
from sdd.clo import CompressedPredictor, TableOracle, lifting_map, make_contextual_model, spo_plus_loss, spo_plus_subgradient, subspace_basis
from sdd.experiments import CloSettings, clo_trial, grid_setup, hypercube_trial, lower_bound_n
from sdd.instances import (
    enumerate_paths,
    hypercube_vertices,
    make_example1,
    make_hypercube,
    make_random_lp,
    path_profiles,
    pispp_brute_check,
    random_3sat,
    sat_to_pispp,
)
from sdd.lp_core import EdgeDirection, edge_matrix, solve_lp
from sdd.oracles import enumerate_vertices, pointwise_sufficient_brute, reachable_optima
from sdd.pointwise import BasisCones, VectorOracle, check_sufficient, containment_test, facet_hit_select, run_pointwise
from sdd.priors import Ellipsoid, Fiber, QueryDataset, ball, ellipsoid_fi_closed_form


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def uniform_in(prior: Ellipsoid, rng, radius=1.0):
    R = prior.sqrt_shape
    z = rng.standard_normal(prior.d)
    z *= radius * rng.uniform() ** (1.0 / prior.d) / np.linalg.norm(z)
    return prior.center + R @ z


def test_criterion_1_termination_and_economy(capsys):
    rng = np.random.default_rng(1)
    bad = []
    start = time.perf_counter()
    for d_star in range(2, 7):
        h = make_hypercube(d_star, d_star + 2, 0.1)
        for _ in range(100):
            c = uniform_in(h.prior, rng)
            oracle = VectorOracle(c)
            cert = run_pointwise(h.lp, h.prior, oracle)
            ok = (
                cert.iterations <= d_star + 1
                and cert.queries_added <= d_star
                and oracle.call_count == cert.queries_added
                and cert.fi_calls <= cert.iterations * (h.lp.d - h.lp.m)
            )
            if not ok:
                bad.append((d_star, cert.iterations, cert.queries_added))
    elapsed = time.perf_counter() - start
    report(capsys, 1, not bad and elapsed < 10.0, f"violations={len(bad)} time={elapsed:.2f}s")


def test_criterion_2_closed_form_fi(capsys):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(500):
        d = int(rng.integers(2, 9))
        k = int(rng.integers(0, min(3, d - 1) + 1))
        M = rng.standard_normal((d, d))
        Sigma = M @ M.T + 0.3 * np.eye(d)
        c0 = rng.standard_normal(d)
        Q = rng.standard_normal((d, k))
        z = rng.standard_normal(d)
        c = c0 + np.linalg.cholesky(Sigma) @ (rng.uniform(0, 0.9) * z / np.linalg.norm(z))
        delta = rng.standard_normal(d)
        val = ellipsoid_fi_closed_form(c0, Sigma, Q, Q.T @ c, delta).min_value
        ref, _ = fi_projected_gradient(c0, Sigma, Q, Q.T @ c, delta)
        worst = max(worst, abs(val - ref))
    report(capsys, 2, worst <= 1e-6, f"max abs error={worst:.2e}")


def test_criterion_3_compression_and_certificate(capsys):
    rows = [hypercube_trial(seed, 6, 9, 0.1, 500, 2000, 0.05) for seed in range(50)]
    fails = sum(r["train_failures"] for r in rows)
    replay = all(r["replay_ok"] for r in rows)
    sizes = all(r["t_size"] <= r["d_size"] <= 6 for r in rows)
    exceed = float(np.mean([r["measured_risk"] > r["bound"] for r in rows]))
    limit = 0.05 + 3 * math.sqrt(0.05 * 0.95 / 50)
    ok = fails == 0 and replay and sizes and exceed <= limit
    report(capsys, 3, ok, f"train failures={fails} replay={replay} sizes={sizes} exceed={exceed:.3f}<={limit:.3f}")


def test_criterion_4_lower_bound(capsys):
    n = lower_bound_n(6, 0.1)
    rows = [hypercube_trial(seed, 6, 6, 0.1, n, 2000, 0.05) for seed in range(200)]
    frac = float(np.mean([r["measured_risk"] > 0.1 for r in rows]))
    limit = 0.5 - 3 * math.sqrt(0.25 / 200)
    report(capsys, 4, n == 6 and frac >= limit, f"n={n} fraction={frac:.3f}>={limit:.3f}")


def test_criterion_5_facet_hit_counterexample(capsys):
    e = make_example1(0.1)
    bs = solve_lp(e.lp, e.cost)
    D = edge_matrix(e.lp, bs)
    _, _, c_out = containment_test(e.lp, bs, Fiber(e.prior, QueryDataset.empty(4)))
    a, b = D @ e.cost, D @ c_out
    violated = np.flatnonzero(b < 0)
    outside = []
    for k in violated:
        hit = e.cost + a[k] / (a[k] - b[k]) * (c_out - e.cost)
        if np.any(D @ hit < -1e-8):
            outside.append(k)
    labels = [int(j) for j in bs.nonbasis]
    j_star, alpha = facet_hit_select(e.cost, c_out, [EdgeDirection(j, d) for j, d in zip(labels, D)])
    hit = e.cost + alpha * (c_out - e.cost)
    ok = len(violated) == 2 and len(outside) == 1 and labels.index(j_star) not in outside and np.all(D @ hit >= -1e-8)
    report(capsys, 5, ok, f"violated={len(violated)} naive-outside={len(outside)} facet-hit min slack={float((D @ hit).min()):.2e}")


def test_criterion_6_grid_dimension(capsys):
    start = time.perf_counter()
    experiments._GRID_CACHE.clear()
    inst, V, _, d_star = grid_setup(5, 5)
    elapsed = time.perf_counter() - start
    ok = d_star == 7 and len(V) == 70 and elapsed < 60.0
    report(capsys, 6, ok, f"d*={d_star} vertices={len(V)} time={elapsed:.2f}s")


def test_criterion_7_clo_ordering(capsys):
    settings = CloSettings(n_stage1=300, n_train=(50, 300), n_test=2000)
    trials = [clo_trial(seed, settings) for seed in range(10)]
    d_star = trials[0]["d_star"]
    matches = sum(t["t_learned"] == d_star for t in trials)
    n_disc = len(trials[0]["dims"])

    def risks(method, n):
        return [r["test_spo_risk"] for t in trials for r in t["rows"] if r["method"] == method and r["n_train"] == n]

    comp300, full300 = np.mean(risks("compressed", 300)), np.mean(risks("full", 300))
    nonneg = all(min(risks(m, n)) >= 0 for m in ("full", "compressed") for n in (50, 300))
    dec = all(np.median(risks(m, 300)) < np.median(risks(m, 50)) for m in ("full", "compressed"))
    ok = n_disc >= 150 and matches >= 8 and comp300 <= full300 and nonneg and dec
    report(capsys, 7, ok, f"t=d* in {matches}/10 compressed={comp300:.4f} full={full300:.4f} nonneg={nonneg} decreasing={dec}")


def test_criterion_8_pispp_structure(capsys):
    rng = np.random.default_rng(8)
    problems = []
    enumerated = 0
    for k in range(50):
        f = random_3sat(int(rng.integers(1, 7)), int(rng.integers(1, 9)), rng)
        inst = sat_to_pispp(f)
        n, m = inst.n_vars, inst.n_clauses
        prof = path_profiles(inst)
        for (ell, nr, ns), _ in prof.items():
            if (nr, ns) not in {(1, 0), (0, 1)} or ell != (2 * n + 2 * m + 1 if nr else 2 * n + 2 * m):
                problems.append((k, "profile"))
        paths = enumerate_paths(inst, limit=2_000_000)
        if len(paths) != sum(prof.values()):
            problems.append((k, "count"))
        length, short = inst.length.tolist(), inst.shortcut.tolist()
        for p in paths:
            nr, ns = int(inst.required_arc in p), sum(short[a] for a in p)
            if (nr, ns) not in {(1, 0), (0, 1)} or sum(length[a] for a in p) != (2 * n + 2 * m + 1 if nr else 2 * n + 2 * m):
                problems.append((k, "path"))
                break
        enumerated += len(paths)
        if not pispp_brute_check(inst, f):
            problems.append((k, "equivalence"))
    report(capsys, 8, not problems, f"formulas=50 paths enumerated={enumerated} problems={len(problems)}")


def test_criterion_9_subgradient(capsys):
    inst, V, _, _ = grid_setup(5, 5)
    oracle = TableOracle(V)
    rng = np.random.default_rng(9)
    model = make_contextual_model(inst.c0, sorted(inst.corridor), 5, rng)
    R = reachable_optima(inst.lp, inst.prior, V)
    U = subspace_basis(R[1:] - R[0])
    lm = lifting_map(inst.c0, inst.prior.shape, U)
    h = 1e-6
    worst, stable, tries = 0.0, 0, 0
    while stable < 200 and tries < 5000:
        tries += 1
        pred = CompressedPredictor(lm, 5.0 * rng.standard_normal((lm.t, 5)))
        xi, c = model.sample(rng, 1)
        xi, c = xi[0], c[0]
        E = rng.standard_normal(pred.B.shape)
        # skip points within 1e-5 of a decision boundary for x*(2 c_hat - c)
        vals = V @ (2 * pred.predict(xi) - c)
        gap = np.partition(vals, 1)[1] - vals.min()
        if gap < 1e-5 or gap < 4 * h * np.abs(V @ (2 * lm.L @ E @ xi)).max():
            continue

        def loss(B):
            return spo_plus_loss(inst.lp, CompressedPredictor(lm, B).predict(xi), c, oracle)

        fd = (loss(pred.B + h * E) - loss(pred.B - h * E)) / (2 * h)
        G = spo_plus_subgradient(inst.lp, pred, xi, c, oracle)
        worst = max(worst, abs(fd - np.sum(G * E)))
        stable += 1
    report(capsys, 9, stable == 200 and worst <= 1e-4, f"stable points={stable} max abs error={worst:.2e}")


def brute_agreement(lp, prior, cones, sampler, vertices, rng, n_probes=100, n_samples=2000):
    """Certificates must pass the brute check; truncated datasets must get
    the same verdict from both checks."""
    contradictions = 0
    for _ in range(n_probes):
        c = sampler()
        cert = run_pointwise(lp, prior, VectorOracle(c), cones=cones)
        if not pointwise_sufficient_brute(lp, prior, cert.dataset, c, vertices=vertices, n_samples=n_samples, rng=rng):
            contradictions += 1
        if len(cert.dataset):
            short = cert.dataset.prefix(int(rng.integers(0, len(cert.dataset))))
            fast = check_sufficient(prior, short, c, cones)
            slow = pointwise_sufficient_brute(lp, prior, short, c, vertices=vertices, n_samples=n_samples, rng=rng)
            contradictions += fast != slow
    return contradictions


def test_criterion_10_oracle_consistency(capsys):
    rng = np.random.default_rng(10)
    counts = {}
    per_dstar = {2: 20, 3: 20, 4: 20, 5: 20, 6: 20}
    total = 0
    for d_star, k in per_dstar.items():
        h = make_hypercube(d_star, d_star, 0.1)
        V = enumerate_vertices(h.lp, lambda: hypercube_vertices(h.d))
        total += brute_agreement(h.lp, h.prior, BasisCones(h.lp), lambda: uniform_in(h.prior, rng), V, rng, k)
    counts["hypercube"] = total

    e = make_example1(0.1)
    V = enumerate_vertices(e.lp)
    p, q = np.array([1.0, 0.1, 0, 0]), np.array([-1.0, -1.0, 0, 0])
    counts["example1"] = brute_agreement(e.lp, e.prior, BasisCones(e.lp), lambda: q + rng.uniform() * (p - q), V, rng)

    inst, Vg, cones, _ = grid_setup(5, 5)
    counts["grid"] = brute_agreement(inst.lp, inst.prior, cones, lambda: uniform_in(inst.prior, rng), Vg, rng)

    total = 0
    for _ in range(10):
        lp = make_random_lp(2, 5, rng)
        prior = ball(rng.standard_normal(5), 0.5)
        V = enumerate_vertices(lp)
        total += brute_agreement(lp, prior, BasisCones(lp), lambda: uniform_in(prior, rng), V, rng, 10)
    counts["random_lp"] = total
    report(capsys, 10, not any(counts.values()), f"contradictions per family={counts}")
