"""Instance generators.

* lifted hypercube with rare cost types (lower-bound family);
* monotone grid shortest-path flow polytope with a low-cost corridor;
* the two-facet counterexample for the naive query rule;
* random bounded nondegenerate LPs;
* the 3-SAT to partial-inverse-shortest-path gadget, with brute-force
  structural checks.
"""
from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import BadCorridor, BadParams, TooLarge
from .lp_core import StandardFormLP
from .priors import Ellipsoid, HPolytope, PriorSet, prior_from_dict

# ---------------------------------------------------------------- hypercube


@dataclass(frozen=True, eq=False)
class HypercubeRareTypes:
    d_star: int
    d: int
    epsilon: float
    lp: StandardFormLP
    prior: Ellipsoid
    mu: np.ndarray
    types: np.ndarray
    probs: np.ndarray

    def sample_types(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Indices into ``types`` drawn i.i.d. from ``probs``."""
        return rng.choice(len(self.probs), size=n, p=self.probs)

    def sample_costs(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.types[self.sample_types(rng, n)]

    def delta(self, i: int) -> np.ndarray:
        """Edge direction ``(-e_i, e_i)`` learned from type ``i`` (0-based)."""
        v = np.zeros(2 * self.d)
        v[i] = -1.0
        v[self.d + i] = 1.0
        return v

    def vertices(self) -> np.ndarray:
        return hypercube_vertices(self.d)


def lifted_cube_lp(d: int) -> StandardFormLP:
    """``{(x, s) : x + s = 1, x, s >= 0}``, an extended form of ``[0,1]^d``."""
    return StandardFormLP(np.hstack([np.eye(d), np.eye(d)]), np.ones(d), nondegenerate=True, check=False)


def hypercube_vertices(d: int) -> np.ndarray:
    if d > 20:
        raise TooLarge(f"2^{d} vertices")
    X = np.array(list(itertools.product([0.0, 1.0], repeat=d))).reshape(-1, d)
    return np.hstack([X, 1.0 - X])


def make_hypercube(d_star: int, d: int | None = None, epsilon: float = 0.1) -> HypercubeRareTypes:
    """Rare-types family on the lifted ``d``-cube.

    ``mu_j = 0.99`` for the first ``d_star`` coordinates and 10 otherwise;
    the prior is the flat unit ball ``{(c, 0) : ||c - mu|| <= 1}``; type
    ``i`` has cost ``(mu - e_i, 0)`` and type 0 carries mass
    ``1 - 2 epsilon``, the others ``2 epsilon / (d_star - 1)`` each.
    """
    d = d_star if d is None else d
    if not (isinstance(d_star, (int, np.integer)) and d_star >= 2 and d >= d_star):
        raise BadParams("need d >= d_star >= 2")
    if not 0.0 < epsilon < 0.25:
        raise BadParams("epsilon must lie in (0, 1/4)")
    mu = np.where(np.arange(d) < d_star, 0.99, 10.0)
    center = np.concatenate([mu, np.zeros(d)])
    shape = np.zeros((2 * d, 2 * d))
    shape[:d, :d] = np.eye(d)
    types = np.array([center - np.eye(2 * d)[i] for i in range(d_star)])
    probs = np.full(d_star, 2.0 * epsilon / (d_star - 1))
    probs[0] = 1.0 - 2.0 * epsilon
    return HypercubeRareTypes(
        d_star=int(d_star),
        d=int(d),
        epsilon=float(epsilon),
        lp=lifted_cube_lp(d),
        prior=Ellipsoid(center, shape),
        mu=mu,
        types=types,
        probs=probs,
    )


# ---------------------------------------------------------------- facet-hit counterexample


@dataclass(frozen=True, eq=False)
class Example1:
    """Box ``[0,1]^2`` in lifted form with a segment prior."""

    epsilon: float
    lp: StandardFormLP
    prior: HPolytope
    cost: np.ndarray
    witness: np.ndarray


def make_example1(epsilon: float = 0.1) -> Example1:
    """Prior ``conv{(1, eps), (-1, -1)}`` (padded with zero slack costs);
    the hidden cost is ``(1, eps)``."""
    if not 0.0 < epsilon < 1.0:
        raise BadParams("epsilon must lie in (0, 1)")
    p, q = np.array([1.0, epsilon]), np.array([-1.0, -1.0])
    direction = p - q
    normal = np.array([direction[1], -direction[0]])
    level = float(normal @ p)
    G = np.array(
        [
            [*normal, 0, 0],
            [*-normal, 0, 0],
            [1, 0, 0, 0],
            [-1, 0, 0, 0],
            [0, 0, 1, 0],
            [0, 0, -1, 0],
            [0, 0, 0, 1],
            [0, 0, 0, -1],
        ],
        dtype=float,
    )
    h = np.array([level, -level, 1, 1, 0, 0, 0, 0], dtype=float)
    return Example1(
        epsilon=float(epsilon),
        lp=lifted_cube_lp(2),
        prior=HPolytope(G, h),
        cost=np.array([1.0, epsilon, 0.0, 0.0]),
        witness=np.array([-1.0, -1.0, 0.0, 0.0]),
    )


# ---------------------------------------------------------------- random LPs


def make_random_lp(m: int, d: int, rng: np.random.Generator, max_tries: int = 50) -> StandardFormLP:
    """``[M | I] x = b`` with positive ``M`` and ``b``; bounded, and
    nondegenerate with probability one (checked at ``d <= 12``)."""
    if not 1 <= m < d:
        raise BadParams("need 1 <= m < d")
    for _ in range(max_tries):
        M = rng.uniform(0.1, 1.0, size=(m, d - m))
        b = rng.uniform(0.5, 1.5, size=m)
        lp = StandardFormLP(np.hstack([M, np.eye(m)]), b, check=False)
        if d > 12 or _all_vertices_nondegenerate(lp):
            return StandardFormLP(lp.A, lp.b, nondegenerate=True if d <= 12 else None, check=False)
    raise BadParams("could not draw a nondegenerate LP")


def _all_vertices_nondegenerate(lp: StandardFormLP) -> bool:
    for B in itertools.combinations(range(lp.d), lp.m):
        AB = lp.A[:, B]
        if abs(np.linalg.det(AB)) < 1e-12:
            continue
        xB = np.linalg.solve(AB, lp.b)
        if xB.min() >= -1e-12 and xB.min() <= 1e-7:
            return False
    return True


# ---------------------------------------------------------------- grid


@dataclass(frozen=True, eq=False)
class GridCloInstance:
    g: int
    p: int
    lp: StandardFormLP
    prior: Ellipsoid
    c0: np.ndarray
    arcs: tuple[tuple[int, int], ...]
    corridor: frozenset[int]
    dropped_row: int

    @property
    def d(self) -> int:
        return len(self.arcs)

    def vertices(self) -> np.ndarray:
        return grid_path_vertices(self.g, self.arcs)


def grid_arcs(g: int) -> tuple[tuple[int, int], ...]:
    """Arcs of the monotone grid DAG; node ``(r, c)`` has id ``r*g + c`` and
    emits its right arc before its down arc."""
    arcs = []
    for r in range(g):
        for c in range(g):
            u = r * g + c
            if c + 1 < g:
                arcs.append((u, u + 1))
            if r + 1 < g:
                arcs.append((u, u + g))
    return tuple(arcs)


def flow_lp(n_nodes: int, arcs: Sequence[tuple[int, int]], source: int, sink: int) -> StandardFormLP:
    """Unit ``source``-``sink`` flow polytope with the sink row dropped."""
    A = np.zeros((n_nodes, len(arcs)))
    for k, (u, v) in enumerate(arcs):
        A[u, k] += 1.0
        A[v, k] -= 1.0
    b = np.zeros(n_nodes)
    b[source] = 1.0
    keep = [i for i in range(n_nodes) if i != sink]
    return StandardFormLP(A[keep], b[keep], nondegenerate=False, check=False)


def grid_path_vertices(g: int, arcs: Sequence[tuple[int, int]] | None = None) -> np.ndarray:
    """Incidence vectors of all monotone corner-to-corner paths."""
    if comb(2 * (g - 1), g - 1) > 200_000:
        raise TooLarge("too many grid paths")
    arcs = grid_arcs(g) if arcs is None else arcs
    index = {a: k for k, a in enumerate(arcs)}
    out = []
    for downs in itertools.combinations(range(2 * (g - 1)), g - 1):
        x = np.zeros(len(arcs))
        u = 0
        dset = set(downs)
        for step in range(2 * (g - 1)):
            v = u + g if step in dset else u + 1
            x[index[(u, v)]] = 1.0
            u = v
        out.append(x)
    return np.array(out)


def band_cells(g: int) -> list[tuple[int, int]]:
    """Unit cells ``(k, k)`` and ``(k, k + 1)`` along the diagonal."""
    return [(k, k) for k in range(g - 1)] + [(k, k + 1) for k in range(g - 2)]


def _cell_arcs(g: int, r: int, c: int) -> list[tuple[int, int]]:
    u = r * g + c
    return [(u, u + 1), (u, u + g), (u + g, u + g + 1), (u + 1, u + g + 1)]


def corridor_arcs(g: int, spec="band") -> frozenset[tuple[int, int]]:
    """Corridor arc set: ``"band"`` (diagonal strip of unit cells),
    ``"staircase"`` (one alternating path) or an explicit arc list."""
    if isinstance(spec, str):
        if spec == "band":
            cells = band_cells(g)
            return frozenset(a for rc in cells for a in _cell_arcs(g, *rc))
        if spec == "staircase":
            arcs, u = [], 0
            for step in range(2 * (g - 1)):
                v = u + 1 if step % 2 == 0 else u + g
                arcs.append((u, v))
                u = v
            return frozenset(arcs)
        raise BadCorridor(f"unknown corridor {spec!r}")
    return frozenset((int(u), int(v)) for u, v in spec)


def make_grid_clo(g: int = 5, p: int = 5, corridor_spec="band", low: float = 10.0, high: float = 100.0, radius: float = 1.0) -> GridCloInstance:
    """Monotone shortest path on a ``g x g`` grid with prior ball
    ``||c - c0|| <= radius``; ``c0`` is ``low`` on corridor arcs and
    ``high`` elsewhere."""
    if g < 2:
        raise BadParams("grid side must be at least 2")
    arcs = grid_arcs(g)
    corr = corridor_arcs(g, corridor_spec)
    index = {a: k for k, a in enumerate(arcs)}
    if not corr or not corr <= set(index):
        raise BadCorridor("corridor contains arcs that are not grid arcs")
    if not _connects(g, corr):
        raise BadCorridor("corridor does not contain a monotone source-sink path")
    c0 = np.full(len(arcs), high)
    ids = frozenset(index[a] for a in corr)
    c0[list(ids)] = low
    sink = g * g - 1
    return GridCloInstance(
        g=g,
        p=p,
        lp=flow_lp(g * g, arcs, 0, sink),
        prior=Ellipsoid(c0, radius**2 * np.eye(len(arcs))),
        c0=c0,
        arcs=arcs,
        corridor=ids,
        dropped_row=sink,
    )


def _connects(g: int, arcs: Iterable[tuple[int, int]]) -> bool:
    reach = {0}
    for u, v in sorted(arcs):
        if u in reach:
            reach.add(v)
    return g * g - 1 in reach


# ---------------------------------------------------------------- 3-SAT


@dataclass(frozen=True)
class ThreeSatFormula:
    """Clauses of three signed 1-based literals (``-i`` is the negation)."""

    n_vars: int
    clauses: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        fixed = []
        for cl in self.clauses:
            lits = [int(x) for x in cl]
            if not lits or any(x == 0 or abs(x) > self.n_vars for x in lits):
                raise BadParams(f"bad clause {cl}")
            while len(lits) < 3:
                lits.append(lits[-1])
            if len(lits) != 3:
                raise BadParams("clauses may have at most three literals")
            fixed.append(tuple(lits))
        object.__setattr__(self, "clauses", tuple(fixed))

    def satisfied_by(self, assignment: Sequence[bool]) -> bool:
        return all(any(_lit_true(x, assignment) for x in cl) for cl in self.clauses)

    def is_satisfiable(self) -> bool:
        if self.n_vars > 20:
            raise TooLarge("brute-force satisfiability is limited to 20 variables")
        return any(self.satisfied_by(a) for a in itertools.product([False, True], repeat=self.n_vars))


def _lit_true(lit: int, assignment: Sequence[bool]) -> bool:
    val = assignment[abs(lit) - 1]
    return val if lit > 0 else not val


def read_dimacs(text: str) -> ThreeSatFormula:
    n_vars, clauses, cur = None, [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line[0] in "c%":
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise ValueError(f"bad problem line: {line!r}")
            n_vars = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                if cur:
                    clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(tuple(cur))
    if n_vars is None:
        raise ValueError("missing 'p cnf' line")
    return ThreeSatFormula(n_vars, tuple(clauses))


def random_3sat(n_vars: int, n_clauses: int, rng: np.random.Generator) -> ThreeSatFormula:
    clauses = []
    for _ in range(n_clauses):
        vs = rng.integers(1, n_vars + 1, size=3)
        sg = rng.choice([-1, 1], size=3)
        clauses.append(tuple(int(v * s) for v, s in zip(vs, sg)))
    return ThreeSatFormula(n_vars, tuple(clauses))


@dataclass(frozen=True, eq=False)
class PisppInstance:
    n_vars: int
    n_clauses: int
    nodes: tuple[str, ...]
    arcs: tuple[tuple[int, int], ...]
    length: np.ndarray
    kappa: np.ndarray
    budget: float
    required_arc: int
    shortcut: np.ndarray
    source: int
    sink: int
    eta: float = 0.5
    _index: dict = field(default=None, repr=False)

    def node(self, name: str) -> int:
        return self._index[name]

    def arc(self, tail: str, head: str) -> int:
        return self.arcs.index((self.node(tail), self.node(head)))

    def flow_lp(self) -> StandardFormLP:
        return flow_lp(len(self.nodes), self.arcs, self.source, self.sink)


def _var_node(lit: int) -> str:
    return f"x{abs(lit)}" if lit > 0 else f"xbar{abs(lit)}"


def sat_to_pispp(formula: ThreeSatFormula, eta: float = 0.5) -> PisppInstance:
    """Layered DAG: variable gadgets ``s_{i-1} -> x_i | xbar_i -> s_i``,
    required arc ``(s_n, t_0)``, clause gadgets ``t_{j-1} -> b_jk -> t_j``
    and a shortcut into each ``b_jk`` from the variable vertex falsifying
    its literal."""
    if not 0.0 < eta < 1.0:
        raise BadParams("eta must lie in (0, 1)")
    n, m = formula.n_vars, len(formula.clauses)
    names = [f"s{i}" for i in range(n + 1)] + [f"t{j}" for j in range(m + 1)]
    names += [v for i in range(1, n + 1) for v in (f"x{i}", f"xbar{i}")]
    names += [f"b{j}_{k}" for j in range(1, m + 1) for k in range(1, 4)]
    idx = {v: k for k, v in enumerate(names)}
    arcs, length, short = [], [], []

    def add(u, v, ell=1.0, sc=False):
        arcs.append((idx[u], idx[v]))
        length.append(ell)
        short.append(sc)

    for i in range(1, n + 1):
        add(f"s{i - 1}", f"x{i}")
        add(f"x{i}", f"s{i}")
        add(f"s{i - 1}", f"xbar{i}")
        add(f"xbar{i}", f"s{i}")
    for j in range(1, m + 1):
        for k in range(1, 4):
            add(f"t{j - 1}", f"b{j}_{k}")
            add(f"b{j}_{k}", f"t{j}")
    add(f"s{n}", "t0")
    r = len(arcs) - 1
    for j, cl in enumerate(formula.clauses, start=1):
        for k, lit in enumerate(cl, start=1):
            i = abs(lit)
            add(_var_node(-lit), f"b{j}_{k}", 2.0 * (n - i + j), True)
    budget = float(n + 2 * m)
    short_arr = np.array(short)
    return PisppInstance(
        n_vars=n,
        n_clauses=m,
        nodes=tuple(names),
        arcs=tuple(arcs),
        length=np.array(length),
        kappa=np.where(short_arr, budget + 1.0, 1.0),
        budget=budget,
        required_arc=r,
        shortcut=short_arr,
        source=idx["s0"],
        sink=idx[f"t{m}"],
        eta=float(eta),
        _index=idx,
    )


def _topo_order(inst: PisppInstance) -> list[int]:
    indeg = Counter(v for _, v in inst.arcs)
    out: dict[int, list[int]] = {}
    for k, (u, _) in enumerate(inst.arcs):
        out.setdefault(u, []).append(k)
    order, stack = [], [v for v in range(len(inst.nodes)) if indeg[v] == 0]
    while stack:
        u = stack.pop()
        order.append(u)
        for k in out.get(u, []):
            v = inst.arcs[k][1]
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return order


def path_profiles(inst: PisppInstance, lengths=None) -> Counter:
    """Exact census of all source-sink paths: a counter over
    ``(length, uses_required, n_shortcuts)`` built by dynamic programming
    over the DAG."""
    lengths = inst.length if lengths is None else np.asarray(lengths, dtype=float)
    into: dict[int, list[int]] = {}
    for k, (_, v) in enumerate(inst.arcs):
        into.setdefault(v, []).append(k)
    prof: dict[int, Counter] = {inst.source: Counter({(0.0, 0, 0): 1})}
    for v in _topo_order(inst):
        if v == inst.source:
            continue
        acc: Counter = Counter()
        for k in into.get(v, []):
            u = inst.arcs[k][0]
            for (ell, nr, ns), cnt in prof.get(u, {}).items():
                key = (round(ell + lengths[k], 9), nr + (k == inst.required_arc), ns + int(inst.shortcut[k]))
                acc[key] += cnt
        prof[v] = acc
    return prof.get(inst.sink, Counter())


def enumerate_paths(inst: PisppInstance, limit: int = 200_000) -> list[tuple[int, ...]]:
    """All source-sink paths as arc-index tuples (depth-first)."""
    out_arcs: dict[int, list[int]] = {}
    for k, (u, _) in enumerate(inst.arcs):
        out_arcs.setdefault(u, []).append(k)
    paths: list[tuple[int, ...]] = []

    def walk(u, acc):
        if len(paths) > limit:
            raise TooLarge(f"more than {limit} paths")
        if u == inst.sink:
            paths.append(tuple(acc))
            return
        for k in out_arcs.get(u, []):
            acc.append(k)
            walk(inst.arcs[k][1], acc)
            acc.pop()

    walk(inst.source, [])
    return paths


def _shortest(inst: PisppInstance, lengths: np.ndarray, src: int, dst: int) -> float:
    dist = {src: 0.0}
    out_arcs: dict[int, list[int]] = {}
    for k, (u, _) in enumerate(inst.arcs):
        out_arcs.setdefault(u, []).append(k)
    for u in _topo_order(inst):
        if u not in dist:
            continue
        for k in out_arcs.get(u, []):
            v = inst.arcs[k][1]
            dist[v] = min(dist.get(v, np.inf), dist[u] + lengths[k])
    return dist.get(dst, np.inf)


def required_path_is_shortest(inst: PisppInstance, lengths, tol: float = 1e-9) -> bool:
    """Whether some shortest source-sink path uses the required arc."""
    lengths = np.asarray(lengths, dtype=float)
    u, v = inst.arcs[inst.required_arc]
    via = _shortest(inst, lengths, inst.source, u) + lengths[inst.required_arc] + _shortest(inst, lengths, v, inst.sink)
    return via <= _shortest(inst, lengths, inst.source, inst.sink) + tol


def construction_modification(inst: PisppInstance, formula: ThreeSatFormula, assignment: Sequence[bool]) -> np.ndarray:
    """Modification vector built from an assignment: a unit increase on the
    entry arc of each unchosen variable vertex and on the exit arcs of the
    two non-selected literal vertices per clause (selected = first true
    literal, or the first slot if none is true)."""
    w = np.zeros(len(inst.arcs))
    for i in range(1, formula.n_vars + 1):
        unchosen = f"xbar{i}" if assignment[i - 1] else f"x{i}"
        w[inst.arc(f"s{i - 1}", unchosen)] = 1.0
    for j, cl in enumerate(formula.clauses, start=1):
        chosen = next((k for k, lit in enumerate(cl, start=1) if _lit_true(lit, assignment)), 1)
        for k in range(1, 4):
            if k != chosen:
                w[inst.arc(f"b{j}_{k}", f"t{j}")] = 1.0
    return w


def pispp_brute_check(inst: PisppInstance, formula: ThreeSatFormula) -> bool:
    """True iff satisfiability agrees with the existence of a budget-feasible
    modification (from the assignment construction) under which a shortest
    path uses the required arc."""
    if formula.n_vars > 12:
        raise TooLarge("brute-force check is limited to 12 variables")
    sat = formula.is_satisfiable()
    feasible = False
    for a in itertools.product([False, True], repeat=formula.n_vars):
        w = construction_modification(inst, formula, a)
        if inst.kappa @ w <= inst.budget + 1e-9 and required_path_is_shortest(inst, inst.length + w):
            feasible = True
            break
    return sat == feasible


def telescoping_perturbation(inst: PisppInstance, rho, eps: float) -> np.ndarray:
    """Arc perturbation ``eps * (rho(head) - rho(tail))``; every source-sink
    path shifts by ``eps * (rho(sink) - rho(source))``."""
    rho = np.asarray(rho, dtype=float)
    return np.array([eps * (rho[v] - rho[u]) for u, v in inst.arcs])


# ---------------------------------------------------------------- bundles


def instance_bundle(lp: StandardFormLP, prior: PriorSet, family: str, params: dict, d_star_known=None) -> dict:
    return {
        "lp": lp.to_dict(),
        "prior": prior.to_dict(),
        "metadata": {"family": family, "params": params, "d_star_known": d_star_known},
    }


def load_bundle(text: str) -> tuple[StandardFormLP, PriorSet, dict]:
    data = json.loads(text)
    try:
        lp = StandardFormLP.from_dict(data["lp"])
        prior = prior_from_dict(data["prior"])
    except KeyError as exc:
        raise ValueError(f"instance bundle is missing {exc}") from exc
    return lp, prior, data.get("metadata", {})
