"""Replicated Monte Carlo harness for the normalized functionals.

各 n ごとに 1 回だけ共分散を分解し、レプリケートを ThreadPoolExecutor で展開して
F_n/n（一次）または F_n/√n（二次）のモーメントを推定し、極限則のターゲットと比べる。
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kstwobign

from functional import TestFunction, evaluate_F
from kernels import KernelSpec
from limitlaw import LimitLawSpec, Order, limit_law, limit_moment, sample_limit
from sampler import Method, build_grid, factorization_count, factorize, sample, union_grid

logger = logging.getLogger(__name__)

DEFAULT_M_MAX = 4


class ExperimentError(ValueError):
    """Raised for invalid experiment configurations."""


@dataclass(frozen=True)
class ExperimentConfig:
    spec: KernelSpec
    f: TestFunction
    order: Order
    n_list: tuple[float, ...]
    t1: float
    t2: float
    replicates: int
    M_lin: int = 8
    M_log: int = 128
    root_seed: int = 0
    workers: int = 1
    m_max: int = DEFAULT_M_MAX

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", Order(self.order))
        object.__setattr__(self, "n_list", tuple(float(n) for n in self.n_list))
        if self.replicates < 2:
            raise ExperimentError(f"replicates は 2 以上: {self.replicates}")
        if not self.n_list or any(n <= 0 for n in self.n_list):
            raise ExperimentError(f"n_list は正の値の非空リスト: {self.n_list}")
        if self.t1 <= 0 or self.t2 <= 0:
            raise ExperimentError(f"t1, t2 は正の値: {(self.t1, self.t2)}")
        if self.order == Order.SECOND and self.f.mass != 0.0:
            raise ExperimentError(f"order=second には ∫f = 0 が必要です (∫f = {self.f.mass:g})")
        if self.f.d != self.spec.d:
            raise ExperimentError(f"f の次元 {self.f.d} と kernel の d={self.spec.d} が一致しません")
        if self.workers < 1:
            raise ExperimentError(f"workers は 1 以上: {self.workers}")
        if self.m_max < 1:
            raise ExperimentError(f"m_max は 1 以上: {self.m_max}")

    @property
    def t_min(self) -> float:
        return min(self.t1, self.t2)

    def normalization(self, n: float) -> float:
        return n if self.order == Order.FIRST else math.sqrt(n)


@dataclass(frozen=True, eq=False)
class NMoments:
    n: float
    means: np.ndarray
    ses: np.ndarray
    targets: np.ndarray
    zscores: np.ndarray
    values: np.ndarray
    runtime: float


@dataclass(frozen=True, eq=False)
class MomentReport:
    law: LimitLawSpec
    results: tuple[NMoments, ...]
    root_seed: int
    replicates: int
    factorizations: int
    runtime: float = field(default=0.0)

    def to_rows(self) -> list[dict]:
        """Flat rows ``n,m,empirical,se,target,zscore``."""

        rows = []
        for result in self.results:
            for index in range(len(result.means)):
                rows.append(
                    {
                        "n": result.n,
                        "m": index + 1,
                        "empirical": float(result.means[index]),
                        "se": float(result.ses[index]),
                        "target": float(result.targets[index]),
                        "zscore": float(result.zscores[index]),
                    }
                )
        return rows

    def to_dict(self) -> dict:
        return {
            "law": {
                "order": self.law.order.value,
                "lambda": self.law.lam,
                "t": self.law.t,
                "constant": self.law.constant,
                "d": self.law.d,
            },
            "root_seed": self.root_seed,
            "replicates": self.replicates,
            "factorizations": self.factorizations,
            "runtime_sec": round(self.runtime, 6),
            "moments": self.to_rows(),
            "runtime_per_n": {str(r.n): round(r.runtime, 6) for r in self.results},
        }


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float


def jackknife_se(samples: np.ndarray) -> float:
    """Jackknife standard error of the sample mean."""

    samples = np.asarray(samples, dtype=float)
    count = samples.size
    if count < 2:
        raise ExperimentError(f"標本数は 2 以上が必要です: {count}")
    leave_one_out = (samples.sum() - samples) / (count - 1)
    spread = leave_one_out - leave_one_out.mean()
    return float(math.sqrt((count - 1) / count * float(np.dot(spread, spread))))


def estimate_moments(values, m_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Power-moment means E[V^m], m = 1..m_max, with jackknife SEs."""

    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ExperimentError(f"標本数は 2 以上が必要です: {values.size}")
    powers = [values**m for m in range(1, m_max + 1)]
    means = np.array([p.mean() for p in powers])
    ses = np.array([jackknife_se(p) for p in powers])
    return means, ses


def zscore(empirical: float, se: float, target: float) -> float:
    if se > 0:
        return (empirical - target) / se
    return 0.0 if empirical == target else math.nan


def compare_distributions(a, b) -> KSResult:
    """Two-sample Kolmogorov–Smirnov statistic with the asymptotic p-value."""

    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ExperimentError("compare_distributions には空でない標本が必要です")
    pooled = np.concatenate([a, b])
    cdf1 = np.searchsorted(a, pooled, side="right") / n1
    cdf2 = np.searchsorted(b, pooled, side="right") / n2
    statistic = float(np.max(np.abs(cdf1 - cdf2)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    pvalue = float(kstwobign.sf((en + 0.12 + 0.11 / en) * statistic))
    return KSResult(statistic=statistic, pvalue=min(max(pvalue, 0.0), 1.0))


def normalized_values(cfg: ExperimentConfig, n: float, *, workers: int | None = None) -> np.ndarray:
    """F_n(t₁,t₂)/n or /√n over all replicates, one factorization for this n."""

    grid_u = build_grid(n, cfg.t1, cfg.M_lin, cfg.M_log)
    grid_v = build_grid(n, cfg.t2, cfg.M_lin, cfg.M_log)
    if cfg.t1 == cfg.t2:
        sampling, idx_u, idx_v = grid_u, None, None
    else:
        sampling, idx_u, idx_v = union_grid(grid_u, grid_v)
    fact = factorize(cfg.spec, sampling, Method.CHOLESKY)
    scale = cfg.normalization(n)

    def one(replicate: int) -> float:
        batch = sample(fact, cfg.spec.d, replicate, cfg.root_seed)
        return evaluate_F(cfg.f, batch, grid_u, grid_v, idx_u=idx_u, idx_v=idx_v).value / scale

    with ThreadPoolExecutor(max_workers=workers or cfg.workers) as pool:
        values = list(pool.map(one, range(cfg.replicates)))
    return np.asarray(values, dtype=float)


def run_experiment(cfg: ExperimentConfig, *, workers: int | None = None) -> MomentReport:
    law = limit_law(cfg.spec, cfg.f, cfg.order, cfg.t_min)
    targets = np.array([limit_moment(law, m) for m in range(1, cfg.m_max + 1)])
    started = time.perf_counter()
    counted = factorization_count()
    results = []
    for n in cfg.n_list:
        tick = time.perf_counter()
        values = normalized_values(cfg, n, workers=workers)
        means, ses = estimate_moments(values, cfg.m_max)
        zscores = np.array([zscore(e, s, t) for e, s, t in zip(means, ses, targets)])
        elapsed = time.perf_counter() - tick
        logger.info(
            "n=%g: mean=%.6g (se=%.3g) target=%.6g [%.2fs]", n, means[0], ses[0], targets[0], elapsed
        )
        results.append(
            NMoments(n=n, means=means, ses=ses, targets=targets, zscores=zscores, values=values, runtime=elapsed)
        )
    return MomentReport(
        law=law,
        results=tuple(results),
        root_seed=cfg.root_seed,
        replicates=cfg.replicates,
        factorizations=factorization_count() - counted,
        runtime=time.perf_counter() - started,
    )


def trend_table(report: MomentReport) -> list[dict]:
    """|empirical − target| per (n, m); reported, never extrapolated."""

    return [
        {
            "n": row["n"],
            "m": row["m"],
            "empirical": row["empirical"],
            "target": row["target"],
            "gap": abs(row["empirical"] - row["target"]),
        }
        for row in report.to_rows()
    ]


def compare_with_limit(report: MomentReport, count: int, seed: int) -> KSResult:
    """KS distance between the largest-n normalized values and direct limit draws."""

    draws = sample_limit(report.law, count, seed)
    return compare_distributions(report.results[-1].values, draws)


__all__ = [
    "DEFAULT_M_MAX",
    "ExperimentConfig",
    "ExperimentError",
    "KSResult",
    "MomentReport",
    "NMoments",
    "compare_distributions",
    "compare_with_limit",
    "estimate_moments",
    "jackknife_se",
    "normalized_values",
    "run_experiment",
    "trend_table",
    "zscore",
]
