"""Standard-form LPs, a revised simplex solver with Bland's rule, and
the edge directions / optimality cones attached to a basis.

The polytope is ``X = {x : A x = b, x >= 0}``.  For a basis ``B`` the
edge direction for nonbasic ``j`` is ``delta_N = e_j``,
``delta_B = -A_B^{-1} A_j`` and the optimality cone of ``B`` is
``{c : c @ delta(B, j) >= 0 for all nonbasic j}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import Infeasible, InvalidLP, IterationLimit, Singular, Unbounded

# pivots between full refactorizations of the basis inverse
_REFACTOR_EVERY = 40
_PIVOT_TOL = 1e-11


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StandardFormLP:
    """Polytope ``{x : A x = b, x >= 0}``.

    ``bounded`` is a caller attestation; it is not verified (that would
    cost ``d`` extra LPs).  ``nondegenerate`` is informational metadata
    set by the instance generators.
    """

    A: np.ndarray
    b: np.ndarray
    tol_feas: float = 1e-9
    tol_cost: float = 1e-9
    bounded: bool = True
    nondegenerate: bool | None = None
    check: bool = True

    def __post_init__(self):
        A = _frozen(self.A)
        b = _frozen(self.b).reshape(-1)
        if A.ndim != 2:
            raise InvalidLP("A must be a 2-D matrix")
        if A.shape[0] != b.shape[0]:
            raise InvalidLP(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidLP("A and b must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.check:
            if A.shape[0] > 0 and np.linalg.matrix_rank(A) < A.shape[0]:
                raise InvalidLP("A must have full row rank")
            try:
                solve_lp(self, np.zeros(A.shape[1]))
            except Infeasible as exc:
                raise InvalidLP("feasible region is empty") from exc

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "d": self.d,
            "A": self.A.reshape(-1).tolist(),
            "b": self.b.tolist(),
            "bounded": bool(self.bounded),
            "nondegenerate": self.nondegenerate,
        }

    @classmethod
    def from_dict(cls, data: dict, check: bool = True) -> "StandardFormLP":
        try:
            m, d = int(data["m"]), int(data["d"])
            A = np.asarray(data["A"], dtype=float)
            b = np.asarray(data["b"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidLP(f"malformed LP document: {exc}") from exc
        if A.ndim == 1:
            if A.size != m * d:
                raise InvalidLP(f"A has {A.size} entries, expected m*d = {m * d}")
            A = A.reshape(m, d)
        if A.shape != (m, d):
            raise InvalidLP(f"A has shape {A.shape}, expected {(m, d)}")
        return cls(
            A,
            b,
            bounded=bool(data.get("bounded", True)),
            nondegenerate=data.get("nondegenerate"),
            check=check,
        )


@dataclass(frozen=True, eq=False)
class BasisSolution:
    basis: tuple[int, ...]
    nonbasis: tuple[int, ...]
    vertex: np.ndarray
    objective: float
    pivots: int = field(default=0, compare=False)


@dataclass(frozen=True, eq=False)
class EdgeDirection:
    j: int
    delta: np.ndarray


def _crash_basis(A: np.ndarray) -> list[int]:
    """For each row pick the lowest-index column that is a positive
    multiple of the unit vector of that row; -1 where none exists."""
    m, d = A.shape
    chosen = [-1] * m
    used = set()
    nz = A != 0
    single = np.flatnonzero(nz.sum(axis=0) == 1)
    for j in single:
        i = int(np.flatnonzero(nz[:, j])[0])
        if chosen[i] < 0 and A[i, j] > 0 and j not in used:
            chosen[i] = int(j)
            used.add(int(j))
    return chosen


class _Simplex:
    """Revised simplex iterations on ``min c x, A x = b, x >= 0`` from a
    given feasible basis, using Bland's rule throughout."""

    def __init__(self, A, b, basis, tol_cost, tol_feas, max_pivots):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.tol_cost = tol_cost
        self.tol_feas = tol_feas
        self.max_pivots = max_pivots
        self.pivots = 0
        self._refactor()

    def _refactor(self):
        AB = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(AB)
        except np.linalg.LinAlgError as exc:
            raise Singular("basis matrix is singular") from exc
        if not np.all(np.isfinite(self.Binv)) or np.linalg.cond(AB) > 1e13:
            raise Singular("basis matrix is numerically singular")
        self.xB = self.Binv @ self.b
        self._since_refactor = 0

    def pivot(self, r: int, j: int, u: np.ndarray):
        piv = u[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(u, row)
        self.Binv[r] = row
        theta = self.xB[r] / piv
        self.xB -= theta * u
        self.xB[r] = theta
        self.basis[r] = j
        self.pivots += 1
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self._refactor()

    def run(self, c: np.ndarray, allowed: np.ndarray | None = None):
        A = self.A
        while True:
            y = c[self.basis] @ self.Binv
            red = c - y @ A
            red[self.basis] = 0.0
            if allowed is not None:
                red[~allowed] = 0.0
            cand = np.flatnonzero(red < -self.tol_cost)
            if cand.size == 0:
                return
            if self.pivots >= self.max_pivots:
                raise IterationLimit(f"simplex exceeded {self.max_pivots} pivots")
            j = int(cand[0])
            u = self.Binv @ A[:, j]
            pos = np.flatnonzero(u > _PIVOT_TOL)
            if pos.size == 0:
                raise Unbounded("objective is unbounded below on the feasible region")
            xB = np.maximum(self.xB[pos], 0.0)
            ratios = xB / u[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
            # Bland: among tied rows leave the lowest basic variable index
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j, u)


def solve_lp(lp: StandardFormLP, c) -> BasisSolution:
    """Minimize ``c @ x`` over the polytope; returns an optimal basis.

    Two-phase revised simplex with Bland's rule (lowest-index entering
    variable, lowest-index leaving variable on ratio ties), so the result
    is a deterministic function of ``(A, b, c)``.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    m, d = lp.A.shape
    if c.shape[0] != d:
        raise ValueError(f"cost has length {c.shape[0]}, expected {d}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost must be finite")
    sign = np.where(lp.b < 0, -1.0, 1.0)
    A = lp.A * sign[:, None]
    b = lp.b * sign
    max_pivots = 50 * (m + d) + 1000

    crash = _crash_basis(A)
    missing = [i for i, j in enumerate(crash) if j < 0]
    pivots = 0
    if missing:
        art = np.zeros((m, len(missing)))
        art[missing, np.arange(len(missing))] = 1.0
        A1 = np.hstack([A, art])
        basis = list(crash)
        for k, i in enumerate(missing):
            basis[i] = d + k
        c1 = np.concatenate([np.zeros(d), np.ones(len(missing))])
        sx = _Simplex(A1, b, basis, lp.tol_cost, lp.tol_feas, max_pivots)
        sx.run(c1)
        infeas = float(c1[sx.basis] @ sx.xB)
        if infeas > lp.tol_feas * max(1.0, float(np.abs(b).max(initial=0.0))):
            raise Infeasible(f"phase 1 ended with infeasibility {infeas:.3e}")
        # drive remaining artificial variables out of the basis
        for r in range(m):
            if sx.basis[r] < d:
                continue
            row = sx.Binv[r] @ A
            row[[j for j in sx.basis if j < d]] = 0.0  # ignore basic columns
            cand = [j for j in np.flatnonzero(np.abs(row) > 1e-9) if j < d and j not in sx.basis]
            if not cand:
                raise Singular("redundant row met while leaving phase 1")
            j = int(cand[0])
            sx.pivot(r, j, sx.Binv @ A1[:, j])
        basis = sx.basis
        pivots = sx.pivots
    else:
        basis = crash

    sx = _Simplex(A, b, basis, lp.tol_cost, lp.tol_feas, max_pivots)
    sx.run(c)
    basis = tuple(int(j) for j in sx.basis)
    x = np.zeros(d)
    x[list(basis)] = sx.xB
    x[np.abs(x) < 1e-13] = 0.0
    inb = np.zeros(d, dtype=bool)
    inb[list(basis)] = True
    nonbasis = tuple(int(j) for j in np.flatnonzero(~inb))
    return BasisSolution(
        basis=basis,
        nonbasis=nonbasis,
        vertex=x,
        objective=float(c @ x),
        pivots=pivots + sx.pivots,
    )


def basis_solution(lp: StandardFormLP, basis: Sequence[int], c=None) -> BasisSolution:
    """Build the basic solution of a given basis (no feasibility check)."""
    basis = tuple(int(j) for j in basis)
    AB = lp.A[:, list(basis)]
    try:
        xB = np.linalg.solve(AB, lp.b)
    except np.linalg.LinAlgError as exc:
        raise Singular("basis matrix is singular") from exc
    x = np.zeros(lp.d)
    x[list(basis)] = xB
    x[np.abs(x) < 1e-13] = 0.0
    nonbasis = tuple(j for j in range(lp.d) if j not in set(basis))
    obj = 0.0 if c is None else float(np.asarray(c, dtype=float) @ x)
    return BasisSolution(basis=basis, nonbasis=nonbasis, vertex=x, objective=obj)


def edge_matrix(lp: StandardFormLP, bs: BasisSolution) -> np.ndarray:
    """Edge directions of ``bs`` as rows of a ``(d - m) x d`` matrix,
    ordered like ``bs.nonbasis``."""
    B = list(bs.basis)
    N = list(bs.nonbasis)
    AB = lp.A[:, B]
    try:
        if np.linalg.cond(AB) > 1e13:
            raise np.linalg.LinAlgError
        W = np.linalg.solve(AB, lp.A[:, N])
    except np.linalg.LinAlgError as exc:
        raise Singular("basis matrix is singular") from exc
    D = np.zeros((len(N), lp.d))
    D[np.arange(len(N)), N] = 1.0
    D[:, B] = -W.T
    return D + 0.0  # no negative zeros


def edge_directions(lp: StandardFormLP, bs: BasisSolution) -> list[EdgeDirection]:
    D = edge_matrix(lp, bs)
    return [EdgeDirection(j=j, delta=D[k]) for k, j in enumerate(bs.nonbasis)]


def reduced_costs(lp: StandardFormLP, bs: BasisSolution, c) -> np.ndarray:
    """``c @ delta(B, j)`` for every nonbasic ``j``."""
    return edge_matrix(lp, bs) @ np.asarray(c, dtype=float)


def check_nondegenerate(lp: StandardFormLP, bs: BasisSolution) -> bool:
    return int(np.count_nonzero(bs.vertex > lp.tol_feas)) == lp.m


def basis_for_vertex(lp: StandardFormLP, x) -> BasisSolution:
    """Complete the support of a vertex to a basis (lowest indices first)."""
    x = np.asarray(x, dtype=float)
    support = [int(j) for j in np.flatnonzero(x > lp.tol_feas)]
    basis: list[int] = []
    for j in support + [j for j in range(lp.d) if j not in support]:
        trial = basis + [j]
        if np.linalg.matrix_rank(lp.A[:, trial]) == len(trial):
            basis = trial
        if len(basis) == lp.m:
            break
    if len(basis) < lp.m:
        raise Singular("could not complete the vertex support to a basis")
    if len(basis) < len(support):
        raise InvalidLP("point is not a vertex: its support columns are dependent")
    bs = basis_solution(lp, sorted(basis))
    if not np.allclose(bs.vertex, x, atol=1e-7):
        raise InvalidLP("point is not a basic solution of the LP")
    return bs
