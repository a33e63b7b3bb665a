"""Numerical validators for the increment assumptions (A1), (A2), (B), (C1), (C2).

(C1)/(C2) は各ファミリの明示的な β(γ) と比較し、(A1)/(A2) は経験的エンベロープ φ̂ を、
(B) は正規化 Gram 行列の最小固有値 κ̂ を報告する。乱数は streams のサブストリームから取る。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from kernels import Family, KernelSpec, alphas, cov_matrix, h_eff, increment_variance
from streams import Stream, substream

logger = logging.getLogger(__name__)

QUADRUPLE_LOG10_RANGE = (-4.0, 4.0)
KAPPA_LOG10_RANGE = (-2.0, 2.0)
A_TIME_LOG10_RANGE = (-3.0, 3.0)
MAX_KAPPA_M = 12
MAX_POOL_ROUNDS = 200


class Assumption(str, Enum):
    A1 = "A1"
    A2 = "A2"
    B = "B"
    C1 = "C1"
    C2 = "C2"


_STREAM_INDEX = {kind: index for index, kind in enumerate(Assumption)}


class AssumptionError(ValueError):
    """Raised for invalid validator arguments or a failed eigen solve."""


@dataclass(frozen=True)
class AssumptionReport:
    assumption: Assumption
    spec: KernelSpec
    gamma: float
    trials: int
    violations: int
    worst_margin: float
    empirical_constant: float
    bound: float = math.nan
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.violations > self.trials:
            raise AssumptionError("violations が trials を超えています")

    def as_row(self) -> dict:
        is_kappa = self.assumption == Assumption.B
        return {
            "family": self.spec.family,
            "H": self.spec.H,
            "K": self.spec.K,
            "assumption": self.assumption.value,
            "gamma": "" if is_kappa else self.gamma,
            "trials": self.trials,
            "violations": self.violations,
            "beta_hat": "" if is_kappa else self.empirical_constant,
            "kappa_hat": self.empirical_constant if is_kappa else "",
        }


@dataclass(frozen=True)
class EnvelopeSweep:
    reports: list[AssumptionReport]
    slope: float
    shrink_violations: int


def _rng(seed: int, kind: Assumption, block: int = 0) -> np.random.Generator:
    return substream(seed, Stream.ASSUMPTIONS, _STREAM_INDEX[kind], block)


# --- (A1) / (A2) ---------------------------------------------------------------------


def expected_envelope_slope(spec: KernelSpec, which: Assumption | str) -> float | None:
    """Power-law exponent of φ(ε) for the family, ``None`` when φ ≡ 0."""

    which = Assumption(which)
    h = h_eff(spec)
    if spec.family == Family.FBM:
        return None
    if which == Assumption.A1:
        return min(1.0, 2.0 * h)
    if which == Assumption.A2:
        return 2.0 - 2.0 * h
    raise AssumptionError(f"A1/A2 以外は対象外です: {which}")


def check_A(
    spec: KernelSpec,
    which: Assumption | str,
    ratio_bound: float,
    trials: int,
    seed: int,
    *,
    gamma_max: float = 1.0,
) -> AssumptionReport:
    """Empirical envelope of the (A1)/(A2) variance ratio for h/t ≤ ratio_bound.

    ratio_bound は (0, 1/gamma_max] に限る。gamma_max は (C1)/(C2) 側で使う γ の最大値。
    """

    which = Assumption(which)
    if which not in (Assumption.A1, Assumption.A2):
        raise AssumptionError(f"check_A は A1/A2 のみ: {which}")
    if gamma_max < 1.0:
        raise AssumptionError(f"gamma_max は 1 以上: {gamma_max}")
    if not 0.0 < ratio_bound <= 1.0 / gamma_max:
        raise AssumptionError(f"ratio_bound は (0, 1/{gamma_max:g}] で指定してください: {ratio_bound}")
    if trials < 1:
        raise AssumptionError(f"trials は 1 以上: {trials}")

    rng = _rng(seed, which)
    t = 10.0 ** rng.uniform(*A_TIME_LOG10_RANGE, size=trials)
    # 比 h/t は [ratio_bound/10, ratio_bound] で対数一様
    ratio = ratio_bound * 10.0 ** (-rng.uniform(0.0, 1.0, size=trials))
    h = ratio * t
    two_h = 2.0 * h_eff(spec)
    alpha1, alpha2, _ = alphas(spec)
    if which == Assumption.A1:
        var = increment_variance(spec, h, t + h)
        scaled = var / t**two_h
        target = alpha1
    else:
        var = increment_variance(spec, t, t + h)
        scaled = var / h**two_h
        target = alpha2

    deviation = np.abs(scaled - target)
    return AssumptionReport(
        assumption=which,
        spec=spec,
        gamma=float(ratio_bound),
        trials=int(trials),
        violations=int(np.count_nonzero(var < 0)),
        worst_margin=float(np.min(scaled)),
        empirical_constant=float(np.max(deviation)),
        extra={"target_alpha": target},
    )


def envelope_schedule(
    spec: KernelSpec,
    which: Assumption | str,
    ratios: Sequence[float],
    trials: int,
    seed: int,
) -> EnvelopeSweep:
    """φ̂ over a decreasing ratio schedule with a log-log slope fit."""

    ordered = sorted((float(r) for r in ratios), reverse=True)
    reports = [check_A(spec, which, ratio, trials, seed) for ratio in ordered]
    phi = np.array([report.empirical_constant for report in reports])
    shrink_violations = int(np.count_nonzero(np.diff(phi) > 1e-12))
    slope = math.nan
    if len(ordered) >= 2 and np.all(phi > 0):
        slope = float(np.polyfit(np.log(ordered), np.log(phi), 1)[0])
    return EnvelopeSweep(reports=reports, slope=slope, shrink_violations=shrink_violations)


# --- (B) ------------------------------------------------------------------------------


def increment_gram(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    """Gram matrices of consecutive increments for ordered rows 0 < s₁ < … < s_m."""

    points = np.asarray(points, dtype=float)
    previous = np.concatenate([np.zeros(points.shape[:-1] + (1,)), points[..., :-1]], axis=-1)
    b, a = points[..., :, None], previous[..., :, None]
    d, c = points[..., None, :], previous[..., None, :]
    return cov_matrix(spec, d, b) - cov_matrix(spec, d, a) - cov_matrix(spec, c, b) + cov_matrix(spec, c, a)


def estimate_kappa(spec: KernelSpec, m: int, trials: int, seed: int) -> AssumptionReport:
    if not 1 <= m <= MAX_KAPPA_M:
        raise AssumptionError(f"m は 1..{MAX_KAPPA_M} で指定してください: {m}")
    if trials < 1:
        raise AssumptionError(f"trials は 1 以上: {trials}")

    rng = _rng(seed, Assumption.B, m)
    steps = 10.0 ** rng.uniform(*KAPPA_LOG10_RANGE, size=(trials, m))
    points = np.cumsum(steps, axis=1)
    gram = increment_gram(spec, points)
    scale = steps ** h_eff(spec)
    normalized = gram / (scale[:, :, None] * scale[:, None, :])
    try:
        eigenvalues = np.linalg.eigvalsh(normalized)
    except np.linalg.LinAlgError as exc:
        raise AssumptionError(f"固有値計算に失敗しました: {exc}") from exc
    smallest = eigenvalues[:, 0]
    kappa_hat = float(np.min(smallest))
    return AssumptionReport(
        assumption=Assumption.B,
        spec=spec,
        gamma=math.nan,
        trials=int(trials),
        violations=int(np.count_nonzero(smallest <= 0)),
        worst_margin=kappa_hat,
        empirical_constant=kappa_hat,
        extra={"m": int(m)},
    )


# --- (C1) / (C2) ----------------------------------------------------------------------


def _fbm_c1(H: float, gamma: float) -> float:
    return 4.0 * gamma ** (-min(H, 1.0 - H))


def _fbm_c2(H: float, gamma: float) -> float:
    return 2.0 * gamma ** (-(2.0 - 2.0 * H))


def beta_bound(spec: KernelSpec, which: Assumption | str, gamma: float) -> float:
    """Explicit β(γ) for the family (increment correlation bound)."""

    which = Assumption(which)
    if gamma <= 1.0:
        raise AssumptionError(f"gamma は 1 より大きい値: {gamma}")
    H, K = spec.H, spec.K
    if spec.family == Family.FBM:
        return _fbm_c1(H, gamma) if which == Assumption.C1 else _fbm_c2(H, gamma)
    if spec.family == Family.SUBFBM:
        floor = min(2.0 - 2.0 ** (2.0 * H - 1.0), 1.0)
        if which == Assumption.C1:
            extra = 4.0 * (gamma ** (-H) + gamma ** (-(1.0 - H)))
            return (extra + _fbm_c1(H, gamma)) / floor
        return 2.0 * _fbm_c2(H, gamma) / floor
    if spec.family == Family.BIFBM:
        HK = H * K
        fbm_weight = 2.0 ** (1.0 - K)
        if which == Assumption.C1:
            extra = gamma ** (-HK) if H <= 0.5 else 8.0 * gamma ** (-(K - HK))
            return extra + fbm_weight * _fbm_c1(HK, gamma)
        extra = 16.0 * gamma ** (2.0 * HK - min(4.0 * H, 2.0))
        return extra + fbm_weight * _fbm_c2(HK, gamma)
    raise AssumptionError(f"β(γ) が未定義の family です: {spec.family}")


def draw_quadruples(count: int, rng: np.random.Generator) -> np.ndarray:
    """Rows (t₁, t₂, t₃, t₄) with log-uniform Δt's over [1e-4, 1e4]."""

    deltas = 10.0 ** rng.uniform(*QUADRUPLE_LOG10_RANGE, size=(count, 4))
    return np.cumsum(deltas, axis=1)


def _accept(which: Assumption, times: np.ndarray, gamma: float) -> np.ndarray:
    dt2 = times[:, 1] - times[:, 0]
    dt3 = times[:, 2] - times[:, 1]
    dt4 = times[:, 3] - times[:, 2]
    if which == Assumption.C1:
        ratio = dt2 / dt4
        return (ratio <= 1.0 / gamma) | (ratio >= gamma)
    return (dt2 / dt3 <= 1.0 / gamma) & (dt4 / dt3 <= 1.0 / gamma)


def correlation_ratios(spec: KernelSpec, times: np.ndarray) -> np.ndarray:
    """|E(X_{t4}−X_{t3})(X_{t2}−X_{t1})| / (σ₄σ₂) row-wise."""

    t1, t2, t3, t4 = (times[:, k] for k in range(4))
    cross = (
        cov_matrix(spec, t4, t2)
        - cov_matrix(spec, t4, t1)
        - cov_matrix(spec, t3, t2)
        + cov_matrix(spec, t3, t1)
    )
    sigma2 = np.sqrt(increment_variance(spec, t1, t2))
    sigma4 = np.sqrt(increment_variance(spec, t3, t4))
    return np.abs(cross) / (sigma2 * sigma4)


def sweep_C(
    spec: KernelSpec,
    which: Assumption | str,
    gammas: Sequence[float],
    trials: int,
    seed: int,
) -> list[AssumptionReport]:
    """(C1)/(C2) over several γ on one common quadruple pool.

    受理集合は γ について入れ子になるため β̂(γ) は単調非増加になる。
    """

    which = Assumption(which)
    if which not in (Assumption.C1, Assumption.C2):
        raise AssumptionError(f"sweep_C は C1/C2 のみ: {which}")
    if trials < 1:
        raise AssumptionError(f"trials は 1 以上: {trials}")
    gammas = [float(g) for g in gammas]
    if not gammas or min(gammas) <= 1.0:
        raise AssumptionError(f"gamma は 1 より大きい値: {gammas}")

    rng = _rng(seed, which)
    chunk = max(4 * trials, 4096)
    strictest = max(gammas)
    pools: list[np.ndarray] = []
    accepted = 0
    for _ in range(MAX_POOL_ROUNDS):
        block = draw_quadruples(chunk, rng)
        pools.append(block)
        accepted += int(np.count_nonzero(_accept(which, block, strictest)))
        if accepted >= trials:
            break
    else:
        raise AssumptionError(f"γ={strictest:g} で {trials} 件の四つ組を集められませんでした")
    pool = np.concatenate(pools)
    ratios = correlation_ratios(spec, pool)

    reports = []
    for gamma in gammas:
        mask = _accept(which, pool, gamma)
        bound = beta_bound(spec, which, gamma)
        chosen = ratios[mask]
        reports.append(
            AssumptionReport(
                assumption=which,
                spec=spec,
                gamma=gamma,
                trials=int(chosen.size),
                violations=int(np.count_nonzero(chosen > bound)),
                worst_margin=float(np.min(bound - chosen)),
                empirical_constant=float(np.max(chosen)),
                bound=bound,
                extra={"max_ratio_pool": float(np.max(ratios)), "pool_size": int(pool.shape[0])},
            )
        )
    logger.debug("sweep %s %s: pool=%d gammas=%s", spec.family, which.value, pool.shape[0], gammas)
    return reports


def check_C(
    spec: KernelSpec,
    which: Assumption | str,
    gamma: float,
    trials: int,
    seed: int,
) -> AssumptionReport:
    return sweep_C(spec, which, [gamma], trials, seed)[0]


__all__ = [
    "Assumption",
    "AssumptionError",
    "AssumptionReport",
    "EnvelopeSweep",
    "beta_bound",
    "check_A",
    "check_C",
    "correlation_ratios",
    "draw_quadruples",
    "envelope_schedule",
    "estimate_kappa",
    "expected_envelope_slope",
    "increment_gram",
    "sweep_C",
]
