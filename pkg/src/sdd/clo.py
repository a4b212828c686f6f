"""Contextual linear optimization in a decision-sufficient subspace.

Predictors have the form ``c_hat(xi) = c0 + L_U B xi`` with the lifting
matrix ``L_U = S U (U^T S U)^{-1}``; training minimizes the SPO+
surrogate by stochastic subgradient descent.  Stage I estimates the
conditional mean by centered OLS and runs the cumulative learner on the
resulting pseudo-costs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cumulative import CompressionResult, run_cumulative
from .errors import InvalidParams, RankDeficientDesign, SingularProjection
from .lp_core import StandardFormLP, solve_lp
from .pointwise import ConeModel
from .priors import Ellipsoid, QueryDataset

C_REG = 4.0 * math.sqrt(2.0)

Oracle = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------- decisions


class TableOracle:
    """``x*(c)``: lowest-index minimizer over a vertex table."""

    def __init__(self, vertices, tol: float = 1e-9):
        self.vertices = np.asarray(vertices, dtype=float)
        self.tol = tol
        self.calls = 0

    def index(self, c) -> int:
        self.calls += 1
        vals = self.vertices @ np.asarray(c, dtype=float)
        best = vals.min()
        return int(np.flatnonzero(vals <= best + self.tol * (1.0 + abs(best)))[0])

    def __call__(self, c) -> np.ndarray:
        return self.vertices[self.index(c)]

    def batch(self, C) -> np.ndarray:
        """Decisions for every row of ``C``."""
        vals = np.atleast_2d(C) @ self.vertices.T
        best = vals.min(axis=1, keepdims=True)
        hit = vals <= best + self.tol * (1.0 + np.abs(best))
        self.calls += vals.shape[0]
        return self.vertices[np.argmax(hit, axis=1)]


def lp_oracle(lp: StandardFormLP) -> Oracle:
    """``x*(c)`` from the simplex solver."""
    return lambda c: solve_lp(lp, c).vertex


def _oracle(lp: StandardFormLP, oracle: Oracle | None) -> Oracle:
    return oracle if oracle is not None else lp_oracle(lp)


def spo_loss(lp: StandardFormLP, c_hat, c, oracle: Oracle | None = None) -> float:
    """Regret ``c @ x*(c_hat) - c @ x*(c)``."""
    x_star = _oracle(lp, oracle)
    c = np.asarray(c, dtype=float)
    return float(c @ x_star(np.asarray(c_hat, dtype=float)) - c @ x_star(c))


def spo_plus_loss(lp: StandardFormLP, c_hat, c, oracle: Oracle | None = None) -> float:
    """``(c - 2 c_hat) @ x1 + 2 c_hat @ x0 - c @ x0`` with ``x0 = x*(c)`` and
    ``x1 = x*(2 c_hat - c)``."""
    x_star = _oracle(lp, oracle)
    c = np.asarray(c, dtype=float)
    c_hat = np.asarray(c_hat, dtype=float)
    x0 = x_star(c)
    x1 = x_star(2.0 * c_hat - c)
    return float((c - 2.0 * c_hat) @ x1 + 2.0 * c_hat @ x0 - c @ x0)


# ---------------------------------------------------------------- lifting


@dataclass(frozen=True, eq=False)
class LiftingMap:
    c0: np.ndarray
    Sigma: np.ndarray
    U: np.ndarray
    L: np.ndarray

    @property
    def t(self) -> int:
        return self.U.shape[1]


def lifting_map(c0, Sigma, U) -> LiftingMap:
    """Build ``L_U = Sigma U (U^T Sigma U)^{-1}`` for orthonormal ``U``."""
    c0 = np.asarray(c0, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    U = np.asarray(U, dtype=float).reshape(c0.shape[0], -1)
    if U.shape[1] and not np.allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-10):
        raise SingularProjection("U must have orthonormal columns")
    G = U.T @ Sigma @ U
    if U.shape[1] and np.linalg.eigvalsh(G).min() <= 1e-12 * max(1.0, np.abs(G).max()):
        raise SingularProjection("U^T Sigma U is singular")
    L = Sigma @ U @ np.linalg.inv(G) if U.shape[1] else np.zeros((c0.shape[0], 0))
    return LiftingMap(c0, Sigma, U, L)


def subspace_basis(dataset: QueryDataset | np.ndarray) -> np.ndarray:
    """Orthonormal basis of the span of the queries (columns)."""
    Q = dataset.queries if isinstance(dataset, QueryDataset) else np.asarray(dataset, dtype=float)
    if Q.shape[0] == 0:
        return np.zeros((Q.shape[1], 0))
    U, s, _ = np.linalg.svd(Q.T, full_matrices=False)
    return U[:, s > 1e-8 * s[0]]


def lift(lmap: LiftingMap, s) -> np.ndarray:
    return lmap.c0 + lmap.L @ np.asarray(s, dtype=float)


def compress(lmap: LiftingMap, c) -> np.ndarray:
    """Subspace coordinate ``U^T (c - c0)``."""
    return lmap.U.T @ (np.asarray(c, dtype=float) - lmap.c0)


# ---------------------------------------------------------------- predictors


@dataclass(frozen=True, eq=False)
class CompressedPredictor:
    lifting: LiftingMap
    B: np.ndarray

    def predict(self, xi) -> np.ndarray:
        """``c0 + L_U B xi`` for a context or a batch of contexts (rows)."""
        xi = np.asarray(xi, dtype=float)
        return self.lifting.c0 + (self.lifting.L @ (self.B @ xi.T)).T


def spo_plus_subgradient(lp: StandardFormLP, predictor: CompressedPredictor, xi, c, oracle: Oracle | None = None) -> np.ndarray:
    """``(L_U^T v) xi^T`` with ``v = 2 (x*(c) - x*(2 c_hat - c))``."""
    x_star = _oracle(lp, oracle)
    xi = np.asarray(xi, dtype=float)
    c = np.asarray(c, dtype=float)
    c_hat = predictor.predict(xi)
    v = 2.0 * (x_star(c) - x_star(2.0 * c_hat - c))
    return np.outer(predictor.lifting.L.T @ v, xi)


@dataclass(frozen=True)
class SgdConfig:
    eta0: float = 0.01
    epochs: int = 20
    seed: int = 0
    average: bool = True


def train_spo_plus(
    lp: StandardFormLP,
    lifting: LiftingMap,
    xis: np.ndarray,
    costs: np.ndarray,
    config: SgdConfig = SgdConfig(),
    oracle: Oracle | None = None,
    B0: np.ndarray | None = None,
) -> CompressedPredictor:
    """Stochastic subgradient descent on the SPO+ surrogate.

    Each step draws a sample uniformly, takes ``eta_k = eta0 / sqrt(k + 1)``
    and moves along ``-(L_U^T v_k) xi_k^T``.  With ``average`` the
    returned coefficients are the running mean of the iterates.
    """
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    if xis.shape[0] == 0:
        raise InvalidParams("training needs at least one sample")
    x_star = _oracle(lp, oracle)
    rng = np.random.default_rng(config.seed)
    B = np.zeros((lifting.t, xis.shape[1])) if B0 is None else np.array(B0, dtype=float)
    avg = B.copy()
    steps = config.epochs * xis.shape[0]
    draws = rng.integers(0, xis.shape[0], size=steps)
    x0_cache: dict[int, np.ndarray] = {}
    L = lifting.L
    for k, i in enumerate(draws):
        xi, c = xis[i], costs[i]
        if i not in x0_cache:
            x0_cache[i] = x_star(c)
        c_hat = lifting.c0 + L @ (B @ xi)
        v = 2.0 * (x0_cache[i] - x_star(2.0 * c_hat - c))
        B -= config.eta0 / math.sqrt(k + 1) * np.outer(L.T @ v, xi)
        avg += (B - avg) / (k + 2)
    return CompressedPredictor(lifting, avg if config.average else B)


def spo_risk(predictor: CompressedPredictor, xis, costs, oracle: TableOracle) -> float:
    """Mean SPO loss of ``predictor`` on a sample."""
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    X_hat = oracle.batch(predictor.predict(np.atleast_2d(xis)))
    X_opt = oracle.batch(costs)
    return float(np.mean(np.einsum("ij,ij->i", costs, X_hat - X_opt)))


# ---------------------------------------------------------------- OLS / Stage I


@dataclass(frozen=True, eq=False)
class OlsModel:
    A_hat: np.ndarray
    c0: np.ndarray

    def predict(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.c0 + (self.A_hat @ xi.T).T


def fit_ols(xis, costs, c0) -> OlsModel:
    """Least-squares fit of ``c - c0 = A xi`` via an orthogonal factorization."""
    X = np.atleast_2d(np.asarray(xis, dtype=float))
    Y = np.atleast_2d(np.asarray(costs, dtype=float)) - np.asarray(c0, dtype=float)
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientDesign("design matrix must have full column rank")
    Qf, Rf = np.linalg.qr(X)
    A_t = np.linalg.solve(Rf, Qf.T @ Y)
    return OlsModel(A_t.T, np.asarray(c0, dtype=float))


def shrink_into(prior: Ellipsoid, c) -> tuple[np.ndarray, bool]:
    """Radial shrink toward the centre until ``c`` lies in the prior."""
    c = np.asarray(c, dtype=float)
    q, _ = prior.mahalanobis2(c)
    if q <= 1.0:
        return c, False
    return prior.center + (c - prior.center) / math.sqrt(q), True


@dataclass(frozen=True, eq=False)
class StageOneResult:
    compression: CompressionResult
    projected: int
    dims: tuple[int, ...]

    @property
    def dataset(self) -> QueryDataset:
        return self.compression.final_dataset


def stage1_discover(
    lp: StandardFormLP,
    prior: Ellipsoid,
    ols: OlsModel,
    contexts,
    cones: ConeModel | None = None,
) -> StageOneResult:
    """Run the cumulative learner on pseudo-costs ``mu_hat(xi)``; pseudo-costs
    outside the prior are shrunk radially (counted in ``projected``).
    ``dims[j]`` is the learned dimension after ``j + 1`` contexts."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float)).reshape(-1, ols.A_hat.shape[1])
    pseudo, projected = [], 0
    for xi in contexts:
        c, moved = shrink_into(prior, ols.predict(xi))
        pseudo.append(c)
        projected += moved
    res = run_cumulative(lp, prior, pseudo, cones=cones)
    dims, size = [], 0
    for added in res.per_sample_added:
        size += added
        dims.append(size)
    return StageOneResult(res, projected, tuple(dims))


# ---------------------------------------------------------------- bounds


def _check_positive(**kw):
    for k, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise InvalidParams(f"{k} must be positive and finite")


def _check_prob(**kw):
    for k, v in kw.items():
        if not 0.0 < v < 1.0:
            raise InvalidParams(f"{k} must lie in (0, 1)")


def generalization_term(omega: float, d_star: int, p: int, n: int, n_vertices: int) -> float:
    """``2 omega sqrt(2 (d* p + 1) log(n |V|^2) / n)``."""
    _check_positive(omega=omega, p=p, n=n, n_vertices=n_vertices)
    return 2.0 * omega * math.sqrt(2.0 * (d_star * p + 1) * math.log(n * n_vertices**2) / n)


def confidence_term(omega: float, n: int, delta: float) -> float:
    """``omega sqrt(log(1/delta) / (2n))``."""
    _check_positive(omega=omega, n=n)
    _check_prob(delta=delta)
    return omega * math.sqrt(math.log(1.0 / delta) / (2.0 * n))


def generalization_bound(empirical: float, omega: float, d_star: int, p: int, n: int, n_vertices: int, delta: float) -> float:
    return empirical + generalization_term(omega, d_star, p, n, n_vertices) + confidence_term(omega, n, delta)


def ols_radius(sigma: float, kappa: float, d: int, p: int, delta_mu: float, n_mu: int, c_reg: float = C_REG) -> float:
    """Uniform prediction radius ``C_reg (sigma / sqrt(kappa)) sqrt(d (p + log(4d/delta_mu)) / n_mu)``."""
    _check_positive(sigma=sigma, kappa=kappa, d=d, p=p, n_mu=n_mu, c_reg=c_reg)
    _check_prob(delta_mu=delta_mu)
    return c_reg * sigma / math.sqrt(kappa) * math.sqrt(d * (p + math.log(4.0 * d / delta_mu)) / n_mu)


def stage1_term(n_disc: int, t_size: int, delta: float, c_marg: float, radius: float, alpha: float) -> float:
    """``4/n_disc (6|T| + log(e/delta)) + C_marg r^alpha``."""
    _check_positive(n_disc=n_disc, c_marg=c_marg, radius=radius, alpha=alpha)
    _check_prob(delta=delta)
    if t_size < 0:
        raise InvalidParams("t_size must be nonnegative")
    return 4.0 / n_disc * (6.0 * t_size + math.log(math.e / delta)) + c_marg * radius**alpha


def omega_range(vertices, prior: Ellipsoid) -> float:
    """``sup_{c in C} (max_x c @ x - min_x c @ x)`` over a vertex table;
    exact for ellipsoids via the support function."""
    V = np.asarray(vertices, dtype=float)
    diffs = (V[:, None, :] - V[None, :, :]).reshape(-1, V.shape[1])
    lin = diffs @ prior.center
    quad = np.linalg.norm(diffs @ prior.sqrt_shape, axis=1)
    return float(np.max(lin + quad))


# ---------------------------------------------------------------- data model


@dataclass(frozen=True, eq=False)
class ContextualModel:
    """``c = c0 + A_star xi + noise`` with ``||xi|| <= 1`` and noise uniform
    in a ball, so every cost lies in the prior ball."""

    c0: np.ndarray
    A_star: np.ndarray
    noise_radius: float

    @property
    def p(self) -> int:
        return self.A_star.shape[1]

    def contexts(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.p)) / math.sqrt(2.0 * self.p)
        norms = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1.0)
        return z / norms

    def mean(self, xis) -> np.ndarray:
        return self.c0 + np.atleast_2d(xis) @ self.A_star.T

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        xis = self.contexts(rng, n)
        d = self.c0.shape[0]
        u = rng.standard_normal((n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = self.noise_radius * rng.uniform(size=(n, 1)) ** (1.0 / d)
        return xis, self.mean(xis) + r * u


def make_contextual_model(c0, support: Sequence[int], p: int, rng: np.random.Generator, signal: float = 0.5, noise_radius: float = 0.4) -> ContextualModel:
    """Random ``A_star`` on the rows in ``support`` with spectral norm ``signal``."""
    c0 = np.asarray(c0, dtype=float)
    if signal + noise_radius > 1.0:
        raise InvalidParams("signal + noise_radius must not exceed the prior radius 1")
    A = np.zeros((c0.shape[0], p))
    rows = list(support)
    A[rows] = rng.standard_normal((len(rows), p))
    A *= signal / np.linalg.norm(A, 2)
    return ContextualModel(c0, A, float(noise_radius))
