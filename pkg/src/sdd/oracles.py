"""Brute-force ground truth at enumeration scale.

These routines deliberately avoid the cutting-plane machinery: vertices
come from basis or combinatorial enumeration, cone membership from vertex
adjacency, and sufficiency from pairwise comparisons of vertices over
the fiber.
"""
from __future__ import annotations

import itertools
import logging
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import NonConvergence, TooLarge
from .lp_core import StandardFormLP
from .pointwise import VertexCones
from .priors import Ellipsoid, Fiber, HPolytope, PriorSet, QueryDataset, face_intersection_many

log = logging.getLogger(__name__)

DYKSTRA_CAP = 100_000
DYKSTRA_TOL = 1e-10
REACH_SLACK = 1e-6


def enumerate_vertices(lp: StandardFormLP, enumerator: Callable[[], np.ndarray] | None = None, max_d: int = 24) -> np.ndarray:
    """All extreme points as rows, in lexicographic order of their bases
    (or in the enumerator's order).  Duplicates from degenerate bases
    are removed."""
    if enumerator is not None:
        V = np.asarray(enumerator(), dtype=float)
        return _dedupe(V)
    if lp.d > max_d:
        raise TooLarge(f"basis enumeration limited to d <= {max_d}")
    out = []
    for B in itertools.combinations(range(lp.d), lp.m):
        AB = lp.A[:, B]
        if np.linalg.matrix_rank(AB) < lp.m:
            continue
        xB = np.linalg.solve(AB, lp.b)
        if xB.min() < -lp.tol_feas:
            continue
        x = np.zeros(lp.d)
        x[list(B)] = np.where(np.abs(xB) < 1e-12, 0.0, xB)
        out.append(x)
    return _dedupe(np.array(out).reshape(-1, lp.d))


def _dedupe(V: np.ndarray) -> np.ndarray:
    seen, keep = set(), []
    for k, v in enumerate(V):
        key = tuple(np.round(v, 9))
        if key not in seen:
            seen.add(key)
            keep.append(k)
    return V[keep]


def _cone_matrix(lp: StandardFormLP, vertices: np.ndarray) -> list[np.ndarray]:
    cones = VertexCones(lp, vertices)
    return [cones.vertices[cones.adjacent(k)] - vertices[k] for k in range(len(vertices))]


def cone_distance_ellipsoid(prior: Ellipsoid, D: np.ndarray, cap: int = DYKSTRA_CAP, tol: float = DYKSTRA_TOL) -> float:
    """Distance, in the prior's norm, from the centre to ``{c : D c >= 0}``.

    Dykstra's alternating projections in whitened coordinates
    ``c = c0 + S^{1/2} z`` over the halfspaces ``(D S^{1/2}) z >= -D c0``;
    flat directions of a singular shape are projected out.
    """
    R = prior.sqrt_shape
    Dz = D @ R
    off = D @ prior.center
    norms = np.linalg.norm(Dz, axis=1)
    flat = norms <= 1e-12 * max(1.0, norms.max(initial=0.0))
    if np.any(off[flat] < -1e-12):
        return np.inf
    Dz, off, norms = Dz[~flat], off[~flat], norms[~flat]
    if Dz.shape[0] == 0 or np.all(off >= 0):
        return 0.0
    z = np.zeros(Dz.shape[1])
    incr = np.zeros((Dz.shape[0], Dz.shape[1]))
    for _ in range(cap):
        z_prev = z.copy()
        for i in range(Dz.shape[0]):
            y = z + incr[i]
            viol = Dz[i] @ y + off[i]
            z = y - (min(viol, 0.0) / norms[i] ** 2) * Dz[i]
            incr[i] = y - z
        if np.linalg.norm(z - z_prev) <= tol * max(1.0, np.linalg.norm(z)):
            return float(np.linalg.norm(z))
    raise NonConvergence("Dykstra projection did not stabilize")


def reachable_optima(lp: StandardFormLP, prior: PriorSet, vertices: np.ndarray | None = None) -> np.ndarray:
    """Vertices ``v`` whose normal cone meets the prior."""
    V = enumerate_vertices(lp) if vertices is None else np.asarray(vertices, dtype=float)
    cones = _cone_matrix(lp, V)
    keep = []
    for k, D in enumerate(cones):
        if isinstance(prior, Ellipsoid):
            single = -(D @ prior.center) / np.maximum(np.linalg.norm(D @ prior.sqrt_shape, axis=1), 1e-300)
            if np.any(single > 1.0 + REACH_SLACK):
                continue
            try:
                dist = cone_distance_ellipsoid(prior, D)
            except NonConvergence:
                log.warning("vertex %d excluded: cone distance did not converge", k)
                continue
            if dist <= 1.0 + REACH_SLACK:
                keep.append(k)
        else:
            if _polytope_meets_cone(prior, D):
                keep.append(k)
    return V[keep]


def _polytope_meets_cone(prior: HPolytope, D: np.ndarray) -> bool:
    A_ub = np.vstack([prior.G, -D]) if D.size else prior.G
    b_ub = np.concatenate([prior.h, np.zeros(D.shape[0])])
    res = linprog(np.zeros(prior.d), A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * prior.d, method="highs")
    return res.status == 0


def dimension_dir(reachable) -> int:
    """Dimension of the span of pairwise differences."""
    V = np.atleast_2d(np.asarray(reachable, dtype=float))
    if V.shape[0] <= 1:
        return 0
    diffs = V[1:] - V[0]
    s = np.linalg.svd(diffs, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > 1e-8 * s[0]))


def _fiber_samples(fiber: Fiber, rng: np.random.Generator, n: int) -> np.ndarray:
    prior = fiber.prior
    if isinstance(prior, Ellipsoid):
        sl = fiber._slice
        w, V = np.linalg.eigh(sl.M_perp)
        pos = w > 1e-12 * max(1.0, w.max(initial=0.0))
        L = V[:, pos] * np.sqrt(w[pos])
        r = L.shape[1]
        if r == 0 or sl.rho == 0.0:
            return sl.c_perp[None, :]
        g = rng.standard_normal((n, r))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = np.ones(n)
        radii[: n // 2] = rng.uniform(size=n // 2) ** (1.0 / r)
        return sl.c_perp + sl.rho * (g * radii[:, None]) @ L.T
    pts = _polytope_fiber_extremes(prior, fiber.dataset, rng, 4 * prior.d)
    lam = rng.dirichlet(np.ones(len(pts)), size=n)
    return lam @ pts


def _polytope_fiber_min(prior: HPolytope, data: QueryDataset, obj: np.ndarray):
    kw = {}
    if len(data):
        kw = {"A_eq": data.queries, "b_eq": data.measurements}
    res = linprog(obj, A_ub=prior.G, b_ub=prior.h, bounds=[(None, None)] * prior.d, method="highs", **kw)
    if res.status != 0:
        raise NonConvergence(f"fiber LP failed: {res.message}")
    return float(res.fun), res.x


def _polytope_fiber_extremes(prior: HPolytope, data: QueryDataset, rng, k: int) -> np.ndarray:
    dirs = np.vstack([np.eye(prior.d), -np.eye(prior.d), rng.standard_normal((k, prior.d))])
    return np.array([_polytope_fiber_min(prior, data, u)[1] for u in dirs])


def pointwise_sufficient_brute(
    lp: StandardFormLP,
    prior: PriorSet,
    dataset: QueryDataset,
    c,
    vertices: np.ndarray | None = None,
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
    tol: float = 1e-8,
) -> bool:
    """Exhaustive sufficiency check over a vertex table.

    Probes are random fiber members, the fiber centre and, for every pair
    of vertices ``(v, w)``, the fiber point minimizing ``(w - v) @ c'``.
    Reports true iff one vertex is optimal at every probe.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    V = enumerate_vertices(lp) if vertices is None else np.asarray(vertices, dtype=float)
    if len(V) > 400:
        raise TooLarge("pairwise probing is limited to 400 vertices")
    c = np.asarray(c, dtype=float)
    data = dataset.with_measurements(c)
    fiber = Fiber(prior, data)
    probes = [c[None, :], _fiber_samples(fiber, rng, n_samples)]
    pairs = (V[None, :, :] - V[:, None, :]).reshape(-1, V.shape[1])
    pairs = pairs[np.linalg.norm(pairs, axis=1) > 0]
    if isinstance(prior, Ellipsoid):
        probes.append(fiber.center()[None, :])
        probes.append(face_intersection_many(fiber, pairs)[1])
    else:
        probes.append(np.array([_polytope_fiber_min(prior, data, u)[1] for u in pairs]))
    P = np.vstack(probes)
    vals = P @ V.T
    best = vals.min(axis=1, keepdims=True)
    scale = 1.0 + np.abs(P).max(axis=1, keepdims=True) * np.abs(V).sum(axis=1).max()
    optimal = vals <= best + tol * scale
    return bool(np.any(np.all(optimal, axis=0)))
