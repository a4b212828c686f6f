"""Prior sets, query datasets, fibers and the face-intersection
subproblem ``min {delta @ c : c in fiber}``.

Two prior families are supported:

* :class:`HPolytope` ``{c : G c <= h}`` -- the subproblem is an LP solved
  with the package simplex (free variables split, slacks added);
* :class:`Ellipsoid` ``{c0 + S^{1/2} z : ||z|| <= 1}`` -- closed form.

The ellipsoid shape ``S`` may be singular (positive semidefinite).  A
singular shape describes a flat ellipsoid living in ``c0 + range(S)``,
which is what the lifted hypercube instance uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import DegenerateRank, EmptyFiber, Infeasible, OutsideFiber
from .lp_core import StandardFormLP, solve_lp

MEMBERSHIP_TOL = 1e-9
RHO_CLAMP = 1e-10
INDEPENDENCE_TOL = 1e-8


def _frozen(a, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim == 2 and arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{c : (c - center)^T shape^+ (c - center) <= 1, c - center in range(shape)}``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c0 = _frozen(self.center).reshape(-1)
        S = _frozen(self.shape)
        d = c0.shape[0]
        if S.shape != (d, d):
            raise ValueError(f"shape must be {d}x{d}, got {S.shape}")
        if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("shape must be symmetric")
        object.__setattr__(self, "center", c0)
        object.__setattr__(self, "shape", S)
        if self._eig[0].min(initial=0.0) < -1e-10 * max(1.0, self._eig[0].max(initial=0.0)):
            raise ValueError("shape must be positive semidefinite")

    @property
    def d(self) -> int:
        return self.center.shape[0]

    @cached_property
    def _eig(self):
        w, V = np.linalg.eigh(self.shape)
        return w, V

    @cached_property
    def sqrt_shape(self) -> np.ndarray:
        """Symmetric square root of the shape matrix."""
        w, V = self._eig
        return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T

    @cached_property
    def is_flat(self) -> bool:
        w, _ = self._eig
        return bool(w.min(initial=1.0) <= 1e-12 * max(1.0, w.max(initial=0.0)))

    def mahalanobis2(self, c) -> tuple[float, float]:
        """Return ``(quadratic form, distance off the supporting subspace)``."""
        w, V = self._eig
        y = V.T @ (np.asarray(c, dtype=float) - self.center)
        pos = w > 1e-12 * max(1.0, w.max(initial=0.0))
        return float(np.sum(y[pos] ** 2 / w[pos])), float(np.linalg.norm(y[~pos]))

    def to_dict(self) -> dict:
        return {"ellipsoid": {"c0": self.center.tolist(), "sigma": self.shape.reshape(-1).tolist()}}


@dataclass(frozen=True, eq=False)
class HPolytope:
    """``{c : G c <= h}``; nonemptiness and boundedness are attested by the caller."""

    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        G = _frozen(self.G)
        h = _frozen(self.h).reshape(-1)
        if G.ndim != 2 or G.shape[0] != h.shape[0]:
            raise ValueError("G must be r x d and h must have length r")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def d(self) -> int:
        return self.G.shape[1]

    def to_dict(self) -> dict:
        return {"hpolytope": {"G": self.G.tolist(), "h": self.h.tolist()}}


PriorSet = Union[Ellipsoid, HPolytope]


def box(lo, hi) -> HPolytope:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.shape[0]
    return HPolytope(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]))


def ball(center, radius: float = 1.0) -> Ellipsoid:
    center = np.asarray(center, dtype=float)
    return Ellipsoid(center, radius**2 * np.eye(center.shape[0]))


def prior_from_dict(data: dict) -> PriorSet:
    if "ellipsoid" in data:
        e = data["ellipsoid"]
        c0 = np.asarray(e["c0"], dtype=float)
        S = np.asarray(e["sigma"], dtype=float).reshape(c0.shape[0], c0.shape[0])
        return Ellipsoid(c0, S)
    if "hpolytope" in data:
        p = data["hpolytope"]
        return HPolytope(np.asarray(p["G"], dtype=float), np.asarray(p["h"], dtype=float))
    raise ValueError("prior document needs an 'ellipsoid' or 'hpolytope' key")


def membership(prior: PriorSet, c, tol: float = MEMBERSHIP_TOL) -> bool:
    c = np.asarray(c, dtype=float)
    if isinstance(prior, Ellipsoid):
        q, off = prior.mahalanobis2(c)
        return q <= 1.0 + tol and off <= tol * max(1.0, np.abs(prior.center).max())
    slack = prior.G @ c - prior.h
    return bool(np.all(slack <= tol * (1.0 + np.abs(prior.h))))


@dataclass(frozen=True, eq=False)
class QueryDataset:
    """Ordered queries (rows of ``queries``) and their measurements.

    An orthonormal basis of the query span is maintained incrementally
    (Gram-Schmidt with one re-orthogonalization pass) for rank tests.
    """

    queries: np.ndarray
    measurements: np.ndarray
    _basis: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        Q = np.array(self.queries, dtype=float)
        if Q.size == 0:
            d = Q.shape[1] if Q.ndim == 2 else 0
            Q = Q.reshape(0, d)
        s = np.array(self.measurements, dtype=float).reshape(-1)
        if Q.shape[0] != s.shape[0]:
            raise ValueError("one measurement per query is required")
        Q.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "queries", Q)
        object.__setattr__(self, "measurements", s)
        if self._basis is None:
            basis = np.zeros((0, Q.shape[1]))
            for q in Q:
                r = _residual(basis, q)
                if np.linalg.norm(r) <= INDEPENDENCE_TOL * max(np.linalg.norm(q), 1e-300):
                    raise DegenerateRank("queries are linearly dependent")
                basis = np.vstack([basis, r / np.linalg.norm(r)])
            object.__setattr__(self, "_basis", basis)

    @classmethod
    def empty(cls, d: int) -> "QueryDataset":
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def d(self) -> int:
        return self.queries.shape[1]

    def __len__(self) -> int:
        return self.queries.shape[0]

    def relative_residual(self, q) -> float:
        """Distance of ``q`` from the query span, relative to ``||q||``."""
        q = np.asarray(q, dtype=float)
        nq = np.linalg.norm(q)
        if nq == 0.0:
            return 0.0
        return float(np.linalg.norm(_residual(self._basis, q)) / nq)

    def append(self, q, s: float) -> "QueryDataset":
        q = np.asarray(q, dtype=float)
        r = _residual(self._basis, q)
        nr = np.linalg.norm(r)
        if nr <= INDEPENDENCE_TOL * max(np.linalg.norm(q), 1e-300):
            raise DegenerateRank("query lies in the span of the dataset")
        return QueryDataset(
            np.vstack([self.queries, q[None, :]]),
            np.append(self.measurements, float(s)),
            np.vstack([self._basis, (r / nr)[None, :]]),
        )

    def prefix(self, k: int) -> "QueryDataset":
        return QueryDataset(self.queries[:k], self.measurements[:k], self._basis[:k])

    def with_measurements(self, c) -> "QueryDataset":
        """Same queries, measurements taken at cost ``c``."""
        return QueryDataset(self.queries, self.queries @ np.asarray(c, dtype=float), self._basis)

    def same_queries(self, other: "QueryDataset") -> bool:
        return self.queries.shape == other.queries.shape and bool(np.array_equal(self.queries, other.queries))

    def to_dict(self) -> dict:
        return {"queries": self.queries.tolist(), "measurements": self.measurements.tolist()}

    @classmethod
    def from_dict(cls, data: dict, d: int | None = None) -> "QueryDataset":
        Q = np.asarray(data["queries"], dtype=float)
        if Q.size == 0:
            Q = Q.reshape(0, d or 0)
        return cls(Q, np.asarray(data["measurements"], dtype=float))


def _residual(basis: np.ndarray, q: np.ndarray) -> np.ndarray:
    r = q - basis.T @ (basis @ q)
    return r - basis.T @ (basis @ r)


@dataclass(frozen=True)
class FiResult:
    min_value: float
    minimizer: np.ndarray


@dataclass(frozen=True, eq=False)
class Fiber:
    """``{c in prior : Q c = s}`` for the queries of ``dataset``."""

    prior: PriorSet
    dataset: QueryDataset

    @cached_property
    def _slice(self) -> "_EllipsoidSlice":
        return _EllipsoidSlice.build(self.prior, self.dataset.queries.T, self.dataset.measurements)

    def contains(self, c, tol: float = 1e-7) -> bool:
        c = np.asarray(c, dtype=float)
        Q, s = self.dataset.queries, self.dataset.measurements
        if len(s) and np.abs(Q @ c - s).max() > tol * (1.0 + np.abs(s).max()):
            return False
        return membership(self.prior, c, tol)

    def center(self) -> np.ndarray:
        """A canonical member: the slice center for ellipsoids, the mean of
        coordinate-extreme points for polytopes."""
        if isinstance(self.prior, Ellipsoid):
            return self._slice.c_perp.copy()
        d = self.prior.d
        pts = [face_intersection(self, sgn * e).minimizer for e in np.eye(d) for sgn in (1.0, -1.0)]
        return np.mean(pts, axis=0)


@dataclass(frozen=True, eq=False)
class _EllipsoidSlice:
    c_perp: np.ndarray
    M_perp: np.ndarray
    rho: float

    @classmethod
    def build(cls, prior: Ellipsoid, Q: np.ndarray, s: np.ndarray) -> "_EllipsoidSlice":
        c0, S = prior.center, prior.shape
        k = Q.shape[1] if Q.ndim == 2 else 0
        if k == 0:
            return cls(c0.copy(), S.copy(), 1.0)
        SQ = S @ Q
        G = Q.T @ SQ
        w = np.linalg.eigvalsh(G)
        if w.min() <= 1e-12 * max(1.0, w.max()):
            raise DegenerateRank("Q^T Sigma Q is singular")
        resid = s - Q.T @ c0
        lam = np.linalg.solve(G, resid)
        c_perp = c0 + SQ @ lam
        M_perp = S - SQ @ np.linalg.solve(G, SQ.T)
        M_perp = 0.5 * (M_perp + M_perp.T)
        rho2 = 1.0 - float(resid @ lam)
        if rho2 < -RHO_CLAMP:
            raise OutsideFiber(f"measurements are inconsistent with the ellipsoid (rho^2 = {rho2:.3e})")
        return cls(c_perp, M_perp, float(np.sqrt(max(rho2, 0.0))))

    def minimize(self, deltas: np.ndarray):
        """Closed-form minima for each row of ``deltas``."""
        D = np.atleast_2d(deltas)
        MD = D @ self.M_perp
        quad = np.einsum("ij,ij->i", MD, D)
        scale = 1.0 + np.einsum("ij,ij->i", D, D) * max(1.0, float(np.abs(self.M_perp).max(initial=0.0)))
        flat = quad <= 1e-13 * scale
        root = np.sqrt(np.where(flat, 1.0, np.maximum(quad, 0.0)))
        values = D @ self.c_perp - np.where(flat, 0.0, self.rho * root)
        steps = np.where(flat[:, None], 0.0, self.rho * MD / root[:, None])
        return values, self.c_perp[None, :] - steps


def ellipsoid_fi_closed_form(c0, Sigma, Q, s, delta) -> FiResult:
    """Minimum of ``delta @ c`` over ``{c : (c-c0)^T Sigma^{-1} (c-c0) <= 1, Q^T c = s}``.

    ``Q`` holds the queries as columns.  Uses the centre
    ``c_perp = c0 + Sigma Q (Q^T Sigma Q)^{-1} (s - Q^T c0)``, the residual
    shape ``M = Sigma - Sigma Q (Q^T Sigma Q)^{-1} Q^T Sigma`` and the slice
    radius ``rho``; the minimum is ``delta @ c_perp - rho sqrt(delta^T M delta)``.
    """
    prior = Ellipsoid(c0, Sigma)
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0:
        Q = np.zeros((prior.d, 0))
    sl = _EllipsoidSlice.build(prior, Q, np.asarray(s, dtype=float).reshape(-1))
    values, mins = sl.minimize(np.asarray(delta, dtype=float)[None, :])
    return FiResult(float(values[0]), mins[0])


def _polytope_fi_lp(prior: HPolytope, Q: np.ndarray, s: np.ndarray) -> StandardFormLP:
    """Standard form of ``{G c <= h, Q c = s}`` with ``c = p - n`` and slacks;
    variables are ``(p, n, slack)``."""
    G, h = prior.G, prior.h
    r, d = G.shape
    k = Q.shape[0]
    top = np.hstack([G, -G, np.eye(r)])
    bottom = np.hstack([Q, -Q, np.zeros((k, r))])
    A = np.vstack([top, bottom])
    b = np.concatenate([h, s])
    return StandardFormLP(A, b, bounded=False, check=False)


def face_intersection(fiber: Fiber, delta) -> FiResult:
    values, mins = face_intersection_many(fiber, np.asarray(delta, dtype=float)[None, :])
    return FiResult(float(values[0]), mins[0])


def face_intersection_many(fiber: Fiber, deltas) -> tuple[np.ndarray, np.ndarray]:
    """Solve the subproblem for every row of ``deltas``; returns
    ``(values, minimizers)``."""
    D = np.atleast_2d(np.asarray(deltas, dtype=float))
    prior = fiber.prior
    if isinstance(prior, Ellipsoid):
        return fiber._slice.minimize(D)
    lp = _fiber_lp(fiber)
    d = prior.d
    values = np.empty(D.shape[0])
    mins = np.empty((D.shape[0], d))
    for i, delta in enumerate(D):
        cost = np.concatenate([delta, -delta, np.zeros(prior.G.shape[0])])
        try:
            bs = solve_lp(lp, cost)
        except Infeasible as exc:
            raise EmptyFiber("fiber is empty") from exc
        c = bs.vertex[:d] - bs.vertex[d:2 * d]
        mins[i] = c
        values[i] = float(delta @ c)
    return values, mins


def _fiber_lp(fiber: Fiber) -> StandardFormLP:
    cache = fiber.__dict__.get("_lp")
    if cache is None:
        cache = _polytope_fi_lp(fiber.prior, fiber.dataset.queries, fiber.dataset.measurements)
        fiber.__dict__["_lp"] = cache
    return cache
