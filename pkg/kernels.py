"""Covariance kernels for the Gaussian process families used by the toolkit.

fBm / sub-fBm / bi-fBm の共分散、分散、増分共分散と定数 α₁・α₂・λ をまとめる。
各ファミリは `KERNEL_REGISTRY` に登録され、下流モジュールは `cov_matrix` / `h_eff`
経由でのみ参照する（ファミリごとの分岐を持ち込まない）。
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

CRITICAL_TOL = 1e-12


class Family(str, Enum):
    FBM = "fbm"
    SUBFBM = "subfbm"
    BIFBM = "bifbm"


class KernelSpecError(ValueError):
    """Raised when a kernel specification is invalid."""


@dataclass(frozen=True)
class KernelSpec:
    family: str
    H: float
    d: int
    K: float = 1.0
    critical: bool = False

    def __post_init__(self) -> None:
        family = str(getattr(self.family, "value", self.family)).lower()
        if family not in KERNEL_REGISTRY:
            raise KernelSpecError(f"未知の kernel family です: {self.family}")
        object.__setattr__(self, "family", family)
        if not 0.0 < self.H < 1.0:
            raise KernelSpecError(f"H は (0,1) の範囲で指定してください: {self.H}")
        if not 0.0 < self.K <= 1.0:
            raise KernelSpecError(f"K は (0,1] の範囲で指定してください: {self.K}")
        if family != Family.BIFBM and self.K != 1.0:
            raise KernelSpecError(f"K は bifbm 専用です（{family} では 1 固定）")
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise KernelSpecError(f"d は正の整数で指定してください: {self.d}")
        object.__setattr__(self, "d", int(self.d))
        if self.critical and abs(h_eff(self) * self.d - 2.0) > CRITICAL_TOL:
            raise KernelSpecError(
                f"critical=true ですが h_eff*d={h_eff(self) * self.d:.12g} が 2 になりません"
            )

    @property
    def alpha1(self) -> float:
        return alphas(self)[0]

    @property
    def alpha2(self) -> float:
        return alphas(self)[1]

    @property
    def lam(self) -> float:
        return alphas(self)[2]

    def to_dict(self) -> dict:
        payload = {"family": self.family, "H": self.H, "d": self.d, "critical": self.critical}
        if self.family == Family.BIFBM:
            payload["K"] = self.K
        return payload


@dataclass(frozen=True)
class KernelFamily:
    """Plugin entry: covariance plus the two variance constants and the exponent."""

    name: str
    cov: Callable[[KernelSpec, np.ndarray, np.ndarray], np.ndarray]
    alphas: Callable[[KernelSpec], tuple[float, float]]
    h_eff: Callable[[KernelSpec], float]
    variance_bounds: Callable[[KernelSpec], tuple[float, float]]


@dataclass(frozen=True)
class IncrementQuadruple:
    t1: float
    t2: float
    t3: float
    t4: float

    def __post_init__(self) -> None:
        if self.t1 < 0:
            raise KernelSpecError(f"t1 は非負である必要があります: {self.t1}")
        if not self.t1 < self.t2 < self.t3 < self.t4:
            raise KernelSpecError(
                f"t1 < t2 < t3 < t4 を満たしていません: {(self.t1, self.t2, self.t3, self.t4)}"
            )

    @property
    def deltas(self) -> tuple[float, float, float, float]:
        # Δt1 = t1 (t0 = 0)
        return (self.t1, self.t2 - self.t1, self.t3 - self.t2, self.t4 - self.t3)


def _pow(x, exponent: float) -> np.ndarray:
    """x**exponent via exp(exponent*ln x); x = 0 maps to 0."""

    x = np.asarray(x, dtype=float)
    pos = x > 0
    logs = np.log(np.where(pos, x, 1.0))
    return np.where(pos, np.exp(exponent * logs), 0.0)


def _fbm_cov(spec: KernelSpec, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    two_h = 2.0 * spec.H
    return 0.5 * (_pow(t, two_h) + _pow(s, two_h) - _pow(np.abs(t - s), two_h))


def _subfbm_cov(spec: KernelSpec, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    two_h = 2.0 * spec.H
    return (
        _pow(t, two_h)
        + _pow(s, two_h)
        - 0.5 * (_pow(t + s, two_h) + _pow(np.abs(t - s), two_h))
    )


def _bifbm_cov(spec: KernelSpec, t: np.ndarray, s: np.ndarray) -> np.ndarray:
    two_h = 2.0 * spec.H
    base = _pow(t, two_h) + _pow(s, two_h)
    return 2.0 ** (-spec.K) * (_pow(base, spec.K) - _pow(np.abs(t - s), two_h * spec.K))


def _subfbm_alpha1(H: float) -> float:
    return 2.0 - 2.0 ** (2.0 * H - 1.0)


KERNEL_REGISTRY: dict[str, KernelFamily] = {}


def register_kernel(family: KernelFamily) -> KernelFamily:
    """Register a kernel family under ``family.name`` (plugin hook)."""

    if family.name in KERNEL_REGISTRY:
        raise KernelSpecError(f"kernel family は登録済みです: {family.name}")
    KERNEL_REGISTRY[family.name] = family
    return family


register_kernel(
    KernelFamily(
        name=Family.FBM.value,
        cov=_fbm_cov,
        alphas=lambda spec: (1.0, 1.0),
        h_eff=lambda spec: spec.H,
        variance_bounds=lambda spec: (1.0, 1.0),
    )
)
register_kernel(
    KernelFamily(
        name=Family.SUBFBM.value,
        cov=_subfbm_cov,
        alphas=lambda spec: (_subfbm_alpha1(spec.H), 1.0),
        h_eff=lambda spec: spec.H,
        variance_bounds=lambda spec: (
            min(_subfbm_alpha1(spec.H), 1.0),
            max(_subfbm_alpha1(spec.H), 1.0),
        ),
    )
)
register_kernel(
    KernelFamily(
        name=Family.BIFBM.value,
        cov=_bifbm_cov,
        alphas=lambda spec: (1.0, 2.0 ** (1.0 - spec.K)),
        h_eff=lambda spec: spec.H * spec.K,
        variance_bounds=lambda spec: (1.0, 2.0 ** (1.0 - spec.K)),
    )
)


def _family(spec: KernelSpec) -> KernelFamily:
    return KERNEL_REGISTRY[spec.family]


def h_eff(spec: KernelSpec) -> float:
    """Effective self-similarity exponent: H, or HK for bi-fBm."""

    return float(_family(spec).h_eff(spec))


def alphas(spec: KernelSpec) -> tuple[float, float, float]:
    alpha1, alpha2 = _family(spec).alphas(spec)
    lam = (alpha2 / alpha1) ** (spec.d / 4.0)
    return float(alpha1), float(alpha2), float(lam)


def variance_bounds(spec: KernelSpec) -> tuple[float, float]:
    """Constants (lo, hi) with lo·|t−s|^{2h} ≤ Var(X_t − X_s) ≤ hi·|t−s|^{2h}."""

    lo, hi = _family(spec).variance_bounds(spec)
    return float(lo), float(hi)


def cov_matrix(spec: KernelSpec, t, s) -> np.ndarray:
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(t_arr < 0) or np.any(s_arr < 0):
        raise KernelSpecError("時刻は非負で指定してください")
    t_arr, s_arr = np.broadcast_arrays(t_arr, s_arr)
    return _family(spec).cov(spec, t_arr, s_arr)


def cov(spec: KernelSpec, t: float, s: float) -> float:
    return float(cov_matrix(spec, t, s))


def variance(spec: KernelSpec, t) -> np.ndarray | float:
    """Closed form α₁ t^{2h_eff}."""

    value = alphas(spec)[0] * _pow(t, 2.0 * h_eff(spec))
    return float(value) if np.ndim(value) == 0 else value


def increment_variance(spec: KernelSpec, s, t):
    """Var(X_t − X_s), vectorized."""

    value = cov_matrix(spec, t, t) + cov_matrix(spec, s, s) - 2.0 * cov_matrix(spec, t, s)
    return float(value) if np.ndim(value) == 0 else value


def interval_cov(spec: KernelSpec, first: tuple, second: tuple):
    """E[(X_b − X_a)(X_d − X_c)] for intervals [a,b] and [c,d] (any placement)."""

    a, b = first
    c, d = second
    value = (
        cov_matrix(spec, d, b)
        - cov_matrix(spec, d, a)
        - cov_matrix(spec, c, b)
        + cov_matrix(spec, c, a)
    )
    return float(value) if np.ndim(value) == 0 else value


def increment_cov(spec: KernelSpec, q: IncrementQuadruple) -> float:
    return interval_cov(spec, (q.t1, q.t2), (q.t3, q.t4))


def critical_spec(family: str, d: int, *, K: float = 1.0) -> KernelSpec:
    """Spec with H chosen so that h_eff·d = 2."""

    if d < 3:
        raise KernelSpecError(f"臨界ケースには d ≥ 3 が必要です: {d}")
    H = 2.0 / d / (K if str(getattr(family, "value", family)) == Family.BIFBM else 1.0)
    return KernelSpec(family=family, H=H, K=K, d=d, critical=True)


def describe(spec: KernelSpec) -> str:
    alpha1, alpha2, lam = alphas(spec)
    return (
        f"{spec.family}(H={spec.H:g}, K={spec.K:g}, d={spec.d}) "
        f"alpha1={alpha1:.6g} alpha2={alpha2:.6g} lambda={lam:.6g}"
    )


__all__ = [
    "CRITICAL_TOL",
    "Family",
    "IncrementQuadruple",
    "KERNEL_REGISTRY",
    "KernelFamily",
    "KernelSpec",
    "KernelSpecError",
    "alphas",
    "cov",
    "cov_matrix",
    "critical_spec",
    "describe",
    "h_eff",
    "increment_cov",
    "increment_variance",
    "interval_cov",
    "register_kernel",
    "variance",
    "variance_bounds",
]
