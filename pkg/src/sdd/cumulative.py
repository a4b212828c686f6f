"""Cumulative warm-started learning over cost samples, the
stable-compression certificate and replay verification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import BadParams, InvalidDelta
from .lp_core import StandardFormLP
from .pointwise import BasisCones, ConeModel, PointwiseCertificate, VectorOracle, check_sufficient, run_pointwise
from .priors import PriorSet, QueryDataset


@dataclass(frozen=True, eq=False)
class CompressionResult:
    final_dataset: QueryDataset
    hard_indices: tuple[int, ...]
    per_sample_added: tuple[int, ...]
    n: int
    init: QueryDataset | None = field(default=None, repr=False)

    @property
    def t_size(self) -> int:
        return len(self.hard_indices)

    def to_dict(self) -> dict:
        return {
            "final_dataset": self.final_dataset.to_dict(),
            "hard_indices": list(self.hard_indices),
            "per_sample_added": list(self.per_sample_added),
            "n": self.n,
        }


@dataclass(frozen=True)
class CertificateReport:
    n: int
    t_size: int
    delta: float
    bound_T: float
    bound_dstar: float | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "t_size": self.t_size,
            "delta": self.delta,
            "bound_T": self.bound_T,
            "bound_dstar": self.bound_dstar,
        }


def _oracle(sample):
    return sample if hasattr(sample, "query") else VectorOracle(sample)


def _cost_key(oracle) -> bytes | None:
    c = getattr(oracle, "cost", None)
    return None if c is None else np.asarray(c, dtype=float).tobytes()


def run_cumulative(
    lp: StandardFormLP,
    prior: PriorSet,
    samples: Iterable,
    init: QueryDataset | None = None,
    cones: ConeModel | None = None,
    reuse: bool = True,
) -> CompressionResult:
    """Run the pointwise routine on each sample, warm-started with the
    dataset left by the previous one.

    ``samples`` may be cost oracles or raw cost vectors and is consumed
    lazily.  With ``reuse`` a sample whose cost was already certified
    under the current dataset is skipped; the result is unchanged since
    the routine is deterministic.
    """
    cones = cones if cones is not None else BasisCones(lp)
    data = init if init is not None else QueryDataset.empty(lp.d)
    hard: list[int] = []
    added: list[int] = []
    certified: set[bytes] = set()
    n = 0
    for i, sample in enumerate(samples):
        n += 1
        oracle = _oracle(sample)
        key = _cost_key(oracle)
        if reuse and key is not None and key in certified:
            added.append(0)
            continue
        cert: PointwiseCertificate = run_pointwise(lp, prior, oracle, init=data, cones=cones)
        added.append(cert.queries_added)
        if cert.queries_added > 0:
            hard.append(i)
            certified.clear()
        data = cert.dataset
        if key is not None:
            certified.add(key)
    return CompressionResult(data, tuple(hard), tuple(added), n, init)


def sufficiency_check(lp: StandardFormLP, prior: PriorSet, dataset: QueryDataset, c, cones: ConeModel | None = None) -> bool:
    """Zero-one loss complement: is ``dataset`` pointwise sufficient at ``c``?"""
    cones = cones if cones is not None else BasisCones(lp)
    return check_sufficient(prior, dataset, c, cones)


def replay_check(lp: StandardFormLP, prior: PriorSet, samples, result: CompressionResult, cones: ConeModel | None = None) -> bool:
    """Rerun on the hard subsequence only and compare the final queries."""
    samples = list(samples)
    sub = [samples[i] for i in result.hard_indices]
    replay = run_cumulative(lp, prior, sub, init=result.init, cones=cones)
    return replay.final_dataset.same_queries(result.final_dataset)


def training_failures(lp: StandardFormLP, prior: PriorSet, dataset: QueryDataset, samples, cones: ConeModel | None = None) -> int:
    """Number of training samples at which ``dataset`` is not sufficient."""
    samples = list(samples)
    return int(round(empirical_risk(lp, prior, dataset, samples, cones) * len(samples)))


def empirical_risk(lp: StandardFormLP, prior: PriorSet, dataset: QueryDataset, fresh, cones: ConeModel | None = None) -> float:
    """Fraction of ``fresh`` samples at which ``dataset`` is not sufficient.
    Repeated cost vectors are evaluated once."""
    cones = cones if cones is not None else BasisCones(lp)
    memo: dict[bytes, bool] = {}
    fails = 0
    total = 0
    for sample in fresh:
        c = np.asarray(getattr(sample, "cost", sample), dtype=float)
        key = c.tobytes()
        if key not in memo:
            memo[key] = check_sufficient(prior, dataset, c, cones)
        fails += not memo[key]
        total += 1
    return fails / total if total else 0.0


def certificate_bound(n: int, size: float, delta: float) -> float:
    return 4.0 / n * (6.0 * size + math.log(math.e / delta))


def certificate(n: int, t_size: int, delta: float, d_star: int | None = None) -> CertificateReport:
    """Risk bound ``(4/n)(6|T| + ln(e/delta))`` holding with probability
    at least ``1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise InvalidDelta("delta must lie in (0, 1)")
    if n < 1 or t_size < 0:
        raise BadParams("need n >= 1 and t_size >= 0")
    bd = None if d_star is None else certificate_bound(n, d_star, delta)
    return CertificateReport(int(n), int(t_size), float(delta), certificate_bound(n, t_size, delta), bd)
