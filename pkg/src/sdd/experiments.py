"""Trial drivers shared by the command line and the acceptance suite.

Every trial takes an integer seed and is a pure function of its
arguments, so trials can run in any order or in parallel.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .clo import (
    SgdConfig,
    TableOracle,
    fit_ols,
    lifting_map,
    make_contextual_model,
    spo_risk,
    stage1_discover,
    subspace_basis,
    train_spo_plus,
)
from .cumulative import certificate, empirical_risk, replay_check, run_cumulative, training_failures
from .instances import make_grid_clo, make_hypercube
from .oracles import dimension_dir, reachable_optima
from .pointwise import VertexCones

Z90 = 1.6448536269514722


def worker_count(n_tasks: int) -> int:
    try:
        cap = int(os.environ.get("SDD_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def run_trials(fn: Callable, seeds: Sequence[int], *args) -> list:
    """``[fn(seed, *args) for seed in seeds]``, on a process pool when
    ``SDD_THREADS`` allows more than one worker."""
    workers = worker_count(len(seeds))
    if workers == 1:
        return [fn(s, *args) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds, *[[a] * len(seeds) for a in args]))


def mean_ci90(values) -> tuple[float, float]:
    """Mean and half-width of the normal-approximation 90% interval."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()) if v.size else float("nan"), 0.0
    return float(v.mean()), float(Z90 * v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------- hypercube


def hypercube_trial(seed: int, d_star: int, d: int, epsilon: float, n: int, n_fresh: int = 2000, delta: float = 0.05) -> dict:
    """Learn on ``n`` draws, then measure fresh-sample risk against the
    certificate."""
    inst = make_hypercube(d_star, d, epsilon)
    rng = np.random.default_rng(seed)
    costs = inst.sample_costs(rng, n)
    res = run_cumulative(inst.lp, inst.prior, costs)
    fresh = inst.sample_costs(rng, n_fresh)
    risk = empirical_risk(inst.lp, inst.prior, res.final_dataset, fresh)
    cert = certificate(max(n, 1), res.t_size, delta, d_star)
    return {
        "seed": seed,
        "n": n,
        "t_size": res.t_size,
        "d_size": len(res.final_dataset),
        "bound": cert.bound_T,
        "measured_risk": risk,
        "train_failures": training_failures(inst.lp, inst.prior, res.final_dataset, costs),
        "replay_ok": replay_check(inst.lp, inst.prior, costs, res),
    }


def lower_bound_n(d_star: int, epsilon: float) -> int:
    return int(math.floor((d_star - 1) / (8.0 * epsilon)))


# ---------------------------------------------------------------- grid CLO


@dataclass(frozen=True)
class CloSettings:
    g: int = 5
    p: int = 5
    n_stage1: int = 300
    n_train: tuple[int, ...] = (50, 300)
    n_test: int = 2000
    eta0: float = 0.01
    epochs: int = 20
    methods: tuple[str, ...] = ("full", "compressed")
    corridor: str = "band"


_GRID_CACHE: dict = {}


def grid_setup(g: int, p: int, corridor: str = "band"):
    """Instance, vertex table, cone model and oracle d* (cached)."""
    key = (g, p, corridor)
    if key not in _GRID_CACHE:
        inst = make_grid_clo(g, p, corridor)
        V = inst.vertices()
        d_star = dimension_dir(reachable_optima(inst.lp, inst.prior, V))
        _GRID_CACHE[key] = (inst, V, VertexCones(inst.lp, V), d_star)
    return _GRID_CACHE[key]


def clo_trial(seed: int, settings: CloSettings = CloSettings()) -> dict:
    """One two-stage run; returns the learned-dimension trace and test SPO
    risk per method and training size."""
    inst, V, cones, d_star = grid_setup(settings.g, settings.p, settings.corridor)
    oracle = TableOracle(V)
    rng = np.random.default_rng(seed)
    model = make_contextual_model(inst.c0, sorted(inst.corridor), settings.p, rng)
    xi1, c1 = model.sample(rng, settings.n_stage1)
    n_mu = settings.n_stage1 // 2
    ols = fit_ols(xi1[:n_mu], c1[:n_mu], inst.c0)
    stage1 = stage1_discover(inst.lp, inst.prior, ols, xi1[n_mu:], cones)
    U = subspace_basis(stage1.dataset)
    lifts = {
        "compressed": lifting_map(inst.c0, inst.prior.shape, U),
        "full": lifting_map(np.zeros(inst.d), np.eye(inst.d), np.eye(inst.d)),
        "full_anchored": lifting_map(inst.c0, np.eye(inst.d), np.eye(inst.d)),
    }
    xt, ct = model.sample(rng, settings.n_test)
    xs_all, cs_all = model.sample(rng, max(settings.n_train))
    rows = []
    for n in settings.n_train:
        for method in settings.methods:
            cfg = SgdConfig(eta0=settings.eta0, epochs=settings.epochs, seed=seed)
            pred = train_spo_plus(inst.lp, lifts[method], xs_all[:n], cs_all[:n], cfg, oracle=oracle)
            rows.append(
                {
                    "seed": seed,
                    "n_train": n,
                    "method": method,
                    "t_learned": U.shape[1],
                    "test_spo_risk": spo_risk(pred, xt, ct, oracle),
                }
            )
    return {
        "seed": seed,
        "d_star": d_star,
        "t_learned": U.shape[1],
        "dims": list(stage1.dims),
        "projected": stage1.projected,
        "rows": rows,
    }
