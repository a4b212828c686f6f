"""Facet-hit cutting-plane certification of pointwise sufficiency.

Starting from an initial dataset, the routine repeatedly solves the LP at
an anchor cost, tests whether the whole fiber stays inside the optimality
cone of the returned decision, and otherwise queries the normal of the
first cone facet crossed on the segment from the anchor to a violating
fiber point.

Cones are supplied by a *cone model*.  :class:`BasisCones` uses simplex
bases and edge directions and requires nondegenerate vertices;
:class:`VertexCones` works from an explicit vertex table and uses the
differences to adjacent vertices, which is the exact normal cone also at
degenerate vertices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import (
    DegenerateRank,
    DegenerateVertex,
    EmptyFiber,
    FiberInconsistent,
    NoProgress,
    NoViolatedFacet,
    OutsideFiber,
)
from .lp_core import (
    BasisSolution,
    EdgeDirection,
    StandardFormLP,
    basis_for_vertex,
    check_nondegenerate,
    edge_matrix,
    solve_lp,
)
from .priors import Fiber, PriorSet, QueryDataset, face_intersection_many

TOL_CERT = 1e-8
PROGRESS_TOL = 1e-8


class CostOracle(Protocol):
    call_count: int

    def query(self, q) -> float: ...


class VectorOracle:
    """In-memory oracle answering ``q @ c`` for a fixed hidden ``c``."""

    def __init__(self, c):
        self._c = np.array(c, dtype=float)
        self._c.setflags(write=False)
        self.call_count = 0

    @property
    def cost(self) -> np.ndarray:
        return self._c

    def query(self, q) -> float:
        self.call_count += 1
        return float(np.asarray(q, dtype=float) @ self._c)


@dataclass(frozen=True, eq=False)
class Decision:
    """An optimal vertex together with the key that identifies its cone."""

    key: object
    vertex: np.ndarray
    basis: BasisSolution | None = None


class BasisCones:
    """Cones ``{c : c @ delta(B, j) >= 0}`` of simplex bases."""

    def __init__(self, lp: StandardFormLP, require_nondegenerate: bool = True):
        self.lp = lp
        self.require_nondegenerate = require_nondegenerate

    def solve(self, c) -> Decision:
        bs = solve_lp(self.lp, c)
        if self.require_nondegenerate and not check_nondegenerate(self.lp, bs):
            raise DegenerateVertex(f"vertex of basis {bs.basis} is degenerate")
        return Decision(bs.basis, bs.vertex, bs)

    def cone(self, dec: Decision) -> tuple[tuple[int, ...], np.ndarray]:
        return dec.basis.nonbasis, edge_matrix(self.lp, dec.basis)

    def basis_of(self, dec: Decision) -> BasisSolution:
        return dec.basis


class VertexCones:
    """Normal cones read off an explicit vertex table.

    Two vertices ``v, w`` are adjacent iff the columns on
    ``supp(v) | supp(w)`` have nullity one; the cone of ``v`` is
    ``{c : c @ (w - v) >= 0 for adjacent w}``.  Decisions are the lowest
    index minimizer over the table.
    """

    def __init__(self, lp: StandardFormLP, vertices, tol: float = 1e-9):
        self.lp = lp
        V = np.array(vertices, dtype=float)
        V.setflags(write=False)
        self.vertices = V
        self.tol = tol
        self._support = V > lp.tol_feas
        self._cones: dict[int, tuple[tuple[int, ...], np.ndarray]] = {}
        self._bases: dict[int, BasisSolution] = {}

    def argmin(self, c) -> int:
        vals = self.vertices @ np.asarray(c, dtype=float)
        best = vals.min()
        return int(np.flatnonzero(vals <= best + self.tol * (1.0 + abs(best)))[0])

    def solve(self, c) -> Decision:
        k = self.argmin(c)
        return Decision(k, self.vertices[k])

    def adjacent(self, k: int) -> list[int]:
        A = self.lp.A
        out = []
        for w in range(len(self.vertices)):
            if w == k:
                continue
            cols = np.flatnonzero(self._support[k] | self._support[w])
            if cols.size - np.linalg.matrix_rank(A[:, cols]) == 1:
                out.append(w)
        return out

    def cone(self, dec: Decision) -> tuple[tuple[int, ...], np.ndarray]:
        k = int(dec.key)
        if k not in self._cones:
            adj = self.adjacent(k)
            D = self.vertices[adj] - self.vertices[k]
            self._cones[k] = (tuple(adj), D + 0.0)
        return self._cones[k]

    def basis_of(self, dec: Decision) -> BasisSolution:
        k = int(dec.key)
        if k not in self._bases:
            self._bases[k] = basis_for_vertex(self.lp, self.vertices[k])
        return self._bases[k]


ConeModel = BasisCones | VertexCones


@dataclass(frozen=True)
class HitRecord:
    """One augmentation: the queried facet, the hit point and its step."""

    label: int
    alpha: float
    c_in: np.ndarray
    c_out: np.ndarray
    c_hit: np.ndarray
    query: np.ndarray


@dataclass(frozen=True, eq=False)
class PointwiseCertificate:
    dataset: QueryDataset
    basis: BasisSolution
    decision: np.ndarray
    iterations: int
    queries_added: int
    fi_calls: int
    oracle_calls: int
    lp_solves: int
    decision_key: object = None
    hits: tuple[HitRecord, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "queries": self.dataset.queries.tolist(),
            "measurements": self.dataset.measurements.tolist(),
            "basis_indices": list(self.basis.basis),
            "decision": self.decision.tolist(),
            "iterations": self.iterations,
            "fi_calls": self.fi_calls,
            "oracle_calls": self.oracle_calls,
        }


def cert_tolerance(D: np.ndarray, scale: float) -> np.ndarray:
    """Per-facet slack accepted for ``m_j >= 0``."""
    return TOL_CERT * (1.0 + np.linalg.norm(D, axis=1) * scale)


def _fi_values(fiber: Fiber, D: np.ndarray):
    try:
        return face_intersection_many(fiber, D)
    except (EmptyFiber, OutsideFiber) as exc:
        raise FiberInconsistent(str(exc)) from exc


def containment_test(lp: StandardFormLP, bs: BasisSolution, fiber: Fiber, cones: ConeModel | None = None):
    """Minimum face-intersection value over the cone facets of ``bs``.

    Returns ``(m_min, j0, c_out)`` where ``j0`` is the lowest nonbasic
    index attaining the minimum and ``c_out`` its minimizer.
    """
    if cones is None:
        labels, D = bs.nonbasis, edge_matrix(lp, bs)
    else:
        labels, D = cones.cone(Decision(bs.basis, bs.vertex, bs))
    values, mins = _fi_values(fiber, D)
    k = int(np.argmin(values))
    return float(values[k]), int(labels[k]), mins[k]


def _select(c_in, c_out, labels: Sequence[int], D: np.ndarray, tol: float = 0.0):
    a = np.maximum(D @ c_in, 0.0)
    b = D @ c_out
    viol = np.flatnonzero(b < -tol)
    if viol.size == 0:
        raise NoViolatedFacet("c_out violates no facet of the cone")
    alpha = a[viol] / (a[viol] - b[viol])
    best = alpha.min()
    tied = viol[alpha <= best + 1e-12]
    k = min(tied, key=lambda i: labels[i])
    return int(k), float(best)


def facet_hit_select(c_in, c_out, edges: Sequence[EdgeDirection]) -> tuple[int, float]:
    """First facet crossed on the segment from ``c_in`` to ``c_out``.

    Over the facets with ``c_out @ delta < 0`` minimizes
    ``alpha = a / (a - b)`` with ``a = c_in @ delta``, ``b = c_out @ delta``;
    ties go to the lowest index.  Returns ``(j_star, alpha_star)``.
    """
    c_in = np.asarray(c_in, dtype=float)
    c_out = np.asarray(c_out, dtype=float)
    labels = [e.j for e in edges]
    D = np.array([e.delta for e in edges], dtype=float).reshape(len(edges), -1)
    k, alpha = _select(c_in, c_out, labels, D)
    return labels[k], alpha


def _measure(oracle: CostOracle, init: QueryDataset | None, d: int) -> QueryDataset:
    if init is None or len(init) == 0:
        return QueryDataset.empty(d)
    s = [oracle.query(q) for q in init.queries]
    return QueryDataset(init.queries, s, init._basis)


def run_pointwise(
    lp: StandardFormLP,
    prior: PriorSet,
    oracle: CostOracle,
    anchor=None,
    init: QueryDataset | None = None,
    cones: ConeModel | None = None,
    max_iterations: int | None = None,
) -> PointwiseCertificate:
    """Grow ``init`` until the fiber fits inside one optimality cone.

    The anchor defaults to the oracle's realized cost when it exposes one
    (``oracle.cost``); without it the centre of the current fiber is used
    at every iteration.
    """
    cones = cones if cones is not None else BasisCones(lp)
    if anchor is None:
        anchor = getattr(oracle, "cost", None)
    fixed = None if anchor is None else np.asarray(anchor, dtype=float)
    start_calls = oracle.call_count
    data = _measure(oracle, init, lp.d)
    n_init = len(data)
    cap = max_iterations if max_iterations is not None else lp.d + 1
    hits: list[HitRecord] = []
    fi_calls = 0
    for it in range(1, cap + 1):
        fiber = Fiber(prior, data)
        c_in = fixed if fixed is not None else fiber.center()
        dec = cones.solve(c_in)
        labels, D = cones.cone(dec)
        values, mins = _fi_values(fiber, D)
        fi_calls += len(labels)
        scale = 1.0 + float(np.abs(c_in).max(initial=0.0))
        tol = cert_tolerance(D, scale)
        if np.all(values >= -tol):
            return PointwiseCertificate(
                dataset=data,
                basis=cones.basis_of(dec),
                decision=dec.vertex.copy(),
                iterations=it,
                queries_added=len(data) - n_init,
                fi_calls=fi_calls,
                oracle_calls=oracle.call_count - start_calls,
                lp_solves=it,
                decision_key=dec.key,
                hits=tuple(hits),
            )
        j0 = int(np.argmin(values))
        c_out = mins[j0]
        k, alpha = _select(c_in, c_out, labels, D, tol=tol)
        q = D[k]
        if data.relative_residual(q) < PROGRESS_TOL:
            raise NoProgress(f"selected facet {labels[k]} is already in the query span")
        s = oracle.query(q)
        try:
            data = data.append(q, s)
        except DegenerateRank as exc:
            raise NoProgress(str(exc)) from exc
        hits.append(HitRecord(labels[k], alpha, c_in.copy(), c_out.copy(), c_in + alpha * (c_out - c_in), q.copy()))
    raise NoProgress(f"no certificate after {cap} iterations")


def check_sufficient(prior: PriorSet, dataset: QueryDataset, c, cones: ConeModel) -> bool:
    """Containment test at the optimal decision for ``c`` without augmenting."""
    c = np.asarray(c, dtype=float)
    data = dataset.with_measurements(c)
    dec = cones.solve(c)
    _, D = cones.cone(dec)
    values, _ = _fi_values(Fiber(prior, data), D)
    scale = 1.0 + float(np.abs(c).max(initial=0.0))
    return bool(np.all(values >= -cert_tolerance(D, scale)))
