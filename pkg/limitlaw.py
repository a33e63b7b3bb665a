"""Limiting constants, moments and direct samplers of the critical-case limit laws.

一次（F_n/n）と二次（F_n/√n）の極限分布を LimitLawSpec で表し、
C_{f,d}・D_{f,d}・Z_λ のモーメントを閉形式で返す。Γ 比は積の漸化式で計算し、
Γ 関数の差分は使わない。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.integrate
import scipy.special

from functional import (
    FunctionKind,
    TestFunction,
    fhat_radial,
    log_kernel_pair_integral,
    sphere_area,
)
from kernels import KernelSpec, alphas
from streams import Stream, substream

logger = logging.getLogger(__name__)

MASS_TOL = 1e-14
LAMBDA_ONE_TOL = 1e-12
REMARK18_TOL = 1e-2

SCHWARTZ_NOTE = (
    "ガウス型 f は C_c^∞ ではなく Schwartz 級。対数核の恒等式はこのクラスへの拡張として"
    "数値的に確認しているだけで、証明ではない"
)


class Order(str, Enum):
    FIRST = "first"
    SECOND = "second"


class LimitLawError(ValueError):
    """Raised for invalid limit-law parameters or unavailable samplers."""


@dataclass(frozen=True)
class LimitLawSpec:
    """First order: C·t·Z_λ·Z̃_λ·N². Second order: sqrt(D·t·Z_λ·Z̃_λ·N²)·η."""

    order: Order
    lam: float
    t: float
    constant: float
    d: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", Order(self.order))
        if not self.lam > 0:
            raise LimitLawError(f"λ は正の値: {self.lam}")
        if not self.t > 0:
            raise LimitLawError(f"t は正の値: {self.t}")
        if not math.isfinite(self.constant):
            raise LimitLawError(f"極限定数が有限ではありません: {self.constant}")
        if self.order == Order.SECOND and self.constant < 0:
            raise LimitLawError(f"D_{{f,d}} は非負: {self.constant}")


@dataclass(frozen=True)
class Remark18Result:
    lhs: float
    rhs: float
    rel_err: float
    passed: bool
    note: str = SCHWARTZ_NOTE


def _double_factorial(k: int) -> int:
    # (−1)!! = 0!! = 1
    return math.prod(range(k, 0, -2))


def z_moment(lam: float, m: int) -> float:
    """E[Z_λ^m] = Γ(m+λ)/(m!Γ(λ)) = Π_{i<m}(λ+i)/(i+1)."""

    if not lam > 0:
        raise LimitLawError(f"λ は正の値: {lam}")
    if m < 0:
        raise LimitLawError(f"m は非負整数: {m}")
    value = 1.0
    for i in range(m):
        value *= (lam + i) / (i + 1)
    return value


def beta_dd(d: int) -> float:
    """B(d/4, d/4) through log-gamma with compensated summation."""

    q = d / 4.0
    return math.exp(
        math.fsum([scipy.special.gammaln(q), scipy.special.gammaln(q), -scipy.special.gammaln(2.0 * q)])
    )


def _check_dims(d: int, alpha2: float) -> None:
    if d < 3:
        raise LimitLawError(f"d ≥ 3 が必要です: {d}")
    if not alpha2 > 0:
        raise LimitLawError(f"α₂ は正の値: {alpha2}")


def c_fd(d: int, alpha2: float, mass: float) -> float:
    """C_{f,d} = (d/4)·B(d/4,d/4)·(2πα₂)^{−d/2}·∫f."""

    _check_dims(d, alpha2)
    return (d / 4.0) * beta_dd(d) * (2.0 * math.pi * alpha2) ** (-d / 2.0) * mass


def _gaussian_log_integral(f: TestFunction) -> float:
    # Σ_jk c_j c_k = 0 のとき ∫ Σ c_j c_k e^{−b_jk r²} / r dr = −½ Σ c_j c_k ln b_jk
    comps = f.components()
    total = [
        -0.5 * cj * ck * math.log((sj**2 + sk**2) / 2.0)
        for cj, sj in comps
        for ck, sk in comps
    ]
    return math.fsum(total)


def radial_log_integral(f: TestFunction, *, method: str = "quad") -> float:
    """∫_0^∞ |f̂(r)|² r^{−1} dr for radial f (requires f̂(0) = 0)."""

    if abs(f.mass) > MASS_TOL:
        raise LimitLawError(
            f"integral diverges at 0 unless f̂(0)=0 (∫f = {f.mass:g})"
        )
    if method == "closed":
        return _gaussian_log_integral(f)
    if method != "quad":
        raise LimitLawError(f"未知の method です: {method}")
    if f.kind == FunctionKind.DIFF_GAUSS and f.sigma1 == f.sigma2:
        return 0.0

    def integrand(r: float) -> float:
        value = fhat_radial(f, r)
        return value * value / r

    pieces = []
    for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
        part, _ = scipy.integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400)
        pieces.append(part)
    return math.fsum(pieces)


def fourier_energy(d: int, alpha2: float, f: TestFunction, *, method: str = "quad") -> float:
    """J = (2πα₂)^{−d}·∫|f̂(x)|²|x|^{−d} dx."""

    _check_dims(d, alpha2)
    if f.d != d:
        raise LimitLawError(f"f の次元 {f.d} と d={d} が一致しません")
    return (2.0 * math.pi * alpha2) ** (-d) * sphere_area(d) * radial_log_integral(f, method=method)


def d_fd(d: int, alpha2: float, f: TestFunction, *, method: str = "quad") -> float:
    """D_{f,d} = d·B(d/4,d/4)·Γ²((d+4)/4)/π^{d/2}·(2πα₂)^{−d}∫|f̂|²|x|^{−d}."""

    energy = fourier_energy(d, alpha2, f, method=method)
    gamma_sq = math.exp(2.0 * scipy.special.gammaln((d + 4) / 4.0))
    return d * beta_dd(d) * gamma_sq / math.pi ** (d / 2.0) * energy


def d_fd_alternative(d: int, alpha2: float, f: TestFunction) -> float:
    """4(2π)^{−d/2}·J·(∫_0^∞ e^{−r^{2H}/2} dr)²·(d/4)B(d/4,d/4) with the time integral by quadrature."""

    energy = fourier_energy(d, alpha2, f)
    time_integral = gaussian_time_integral(math.sqrt(0.5), d, method="quad")
    return 4.0 * (2.0 * math.pi) ** (-d / 2.0) * energy * time_integral**2 * (d / 4.0) * beta_dd(d)


def pair_time_constant(d: int) -> float:
    """2π^{d/2}Γ²((d+4)/4)/Γ((d+2)/2); equals π^{d/2}(d/4)B(d/4,d/4)."""

    log_value = math.fsum(
        [
            math.log(2.0),
            (d / 2.0) * math.log(math.pi),
            2.0 * scipy.special.gammaln((d + 4) / 4.0),
            -scipy.special.gammaln((d + 2) / 2.0),
        ]
    )
    return math.exp(log_value)


def first_order_moment(lam: float, d: int, alpha2: float, t: float, m: int) -> float:
    """m-th moment of the limit of the normalized occupation-type integral.

    (2π/α₂)^{md/2}·z_moment(λ,m)²·((d/4)B)^m·(2m−1)!!·t^m
    """

    _check_dims(d, alpha2)
    z = z_moment(lam, m)
    return (
        (2.0 * math.pi / alpha2) ** (m * d / 2.0)
        * z
        * z
        * ((d / 4.0) * beta_dd(d)) ** m
        * _double_factorial(2 * m - 1)
        * t**m
    )


def second_order_moment(law: LimitLawSpec, m: int) -> float:
    if law.order != Order.SECOND:
        raise LimitLawError("second_order_moment は order=SECOND 専用です")
    if m < 0:
        raise LimitLawError(f"m は非負整数: {m}")
    if m % 2:
        return 0.0
    half = m // 2
    z = z_moment(law.lam, half)
    return z * z * (law.constant * law.t) ** half * _double_factorial(m - 1) ** 2


def first_order_target(law: LimitLawSpec, m: int) -> float:
    """E[(C·t·Z·Z̃·N²)^m] = (C t)^m·z_moment(λ,m)²·(2m−1)!!."""

    if law.order != Order.FIRST:
        raise LimitLawError("first_order_target は order=FIRST 専用です")
    if m < 0:
        raise LimitLawError(f"m は非負整数: {m}")
    z = z_moment(law.lam, m)
    return (law.constant * law.t) ** m * z * z * _double_factorial(2 * m - 1)


def second_order_target(law: LimitLawSpec, m: int) -> float:
    return second_order_moment(law, m)


def limit_moment(law: LimitLawSpec, m: int) -> float:
    if law.order == Order.FIRST:
        return first_order_target(law, m)
    return second_order_target(law, m)


def limit_law(spec: KernelSpec, f: TestFunction, order: Order | str, t: float) -> LimitLawSpec:
    """LimitLawSpec for kernel ``spec`` and test function ``f`` at time ``t``."""

    order = Order(order)
    _, alpha2, lam = alphas(spec)
    if order == Order.FIRST:
        constant = c_fd(spec.d, alpha2, f.mass)
    else:
        constant = d_fd(spec.d, alpha2, f)
    return LimitLawSpec(order=order, lam=lam, t=t, constant=constant, d=spec.d)


def sample_limit(law: LimitLawSpec, count: int, seed: int, *, replicate: int = 0) -> np.ndarray:
    """Draw ``count`` values of the limit variable (λ ≤ 1 only)."""

    if count < 0:
        raise LimitLawError(f"count は非負: {count}")
    if law.lam > 1.0 + LAMBDA_ONE_TOL:
        raise LimitLawError(
            f"limit law moment-determinate but no named sampler (λ={law.lam:.6g} > 1)"
        )
    rng = substream(seed, Stream.LIMIT_LAW, replicate)
    if abs(law.lam - 1.0) <= LAMBDA_ONE_TOL:
        z = np.ones(count)
        zt = np.ones(count)
    else:
        z = rng.beta(law.lam, 1.0 - law.lam, size=count)
        zt = rng.beta(law.lam, 1.0 - law.lam, size=count)
    normal = rng.standard_normal(count)
    scale = law.constant * law.t * z * zt * normal**2
    if law.order == Order.FIRST:
        return scale
    eta = rng.standard_normal(count)
    return np.sqrt(scale) * eta


def beta_moment_oracle(lam: float, m: int) -> float:
    """∫_0^1 x^m·x^{λ−1}(1−x)^{−λ} dx / B(λ, 1−λ) by algebraic-weight quadrature."""

    if not 0.0 < lam < 1.0:
        raise LimitLawError(f"Beta(λ,1−λ) には λ ∈ (0,1) が必要です: {lam}")
    value, _ = scipy.integrate.quad(
        lambda x: x**m, 0.0, 1.0, weight="alg", wvar=(lam - 1.0, -lam), epsabs=0.0, epsrel=1e-13
    )
    return value / scipy.special.beta(lam, 1.0 - lam)


def gaussian_space_integral(a: float, d: int, *, method: str = "closed") -> float:
    """∫_{R^d} e^{−a|x|²} dx = (π/a)^{d/2}."""

    if not a > 0:
        raise LimitLawError(f"a は正の値: {a}")
    if method == "closed":
        return (math.pi / a) ** (d / 2.0)
    value, _ = scipy.integrate.quad(
        lambda r: math.exp(-a * r * r) * r ** (d - 1), 0.0, np.inf, epsabs=0.0, epsrel=1e-12
    )
    return sphere_area(d) * value


def gaussian_time_integral(a: float, d: int, *, method: str = "closed") -> float:
    """∫_0^∞ e^{−a²u^{2H}} du with H = 2/d; closed form a^{−d/2}Γ(1+d/4)."""

    if not a > 0:
        raise LimitLawError(f"a は正の値: {a}")
    if method == "closed":
        return a ** (-d / 2.0) * math.gamma(1.0 + d / 4.0)
    two_h = 4.0 / d
    pieces = []
    for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
        part, _ = scipy.integrate.quad(
            lambda u: math.exp(-(a * a) * u**two_h), lo, hi, epsabs=0.0, epsrel=1e-12, limit=200
        )
        pieces.append(part)
    return math.fsum(pieces)


def log_window_bound(a: float, b: float, gamma: float, d: int) -> tuple[float, float]:
    """(∫_{a/γ}^{aγ}∫_{b/γ}^{bγ}(u^{2H}+v^{2H})^{−d/2} du dv, (π/H²)·ln γ) with H = 2/d."""

    if not (a > 0 and b > 0):
        raise LimitLawError(f"a, b は正の値: {(a, b)}")
    if gamma < 1:
        raise LimitLawError(f"γ ≥ 1 が必要です: {gamma}")
    H = 2.0 / d
    value, _ = scipy.integrate.dblquad(
        lambda v, u: (u ** (2 * H) + v ** (2 * H)) ** (-d / 2.0),
        a / gamma,
        a * gamma,
        b / gamma,
        b * gamma,
        epsabs=1e-12,
        epsrel=1e-10,
    )
    return value, math.pi / H**2 * math.log(gamma)


def log_horizon_rate(d: int, n: float, *, method: str = "reduced") -> float:
    """(1/n)∫_1^{e^n}∫_1^{e^n}(u^{2H}+v^{2H})^{−d/2} du dv at H = 2/d.

    reduced: 2∫_0^n (1−x/n) e^x (1+e^{2Hx})^{−d/2} dx。n → ∞ で (d/4)B(d/4,d/4) に単調に近づく。
    """

    if not n > 0:
        raise LimitLawError(f"n は正の値: {n}")
    two_h = 4.0 / d
    if method == "double":
        value, _ = scipy.integrate.dblquad(
            lambda v, u: (u**two_h + v**two_h) ** (-d / 2.0),
            1.0,
            math.exp(n),
            1.0,
            math.exp(n),
            epsabs=1e-12,
            epsrel=1e-10,
        )
        return value / n
    if method != "reduced":
        raise LimitLawError(f"未知の method です: {method}")
    value, _ = scipy.integrate.quad(
        lambda x: (1.0 - x / n) * math.exp(x - (d / 2.0) * math.log1p(math.exp(two_h * x))),
        0.0,
        n,
        epsabs=0.0,
        epsrel=1e-12,
        limit=200,
    )
    return 2.0 * value


def remark18_check(f: TestFunction, quad_tol: float = REMARK18_TOL) -> Remark18Result:
    """Compare ∫_{R⁴}|f̂|²|x|^{−4} dx with −2π²∬f(x)f(y)ln|x−y| dx dy."""

    if f.d != 4:
        raise LimitLawError(f"対数核の恒等式は d=4 専用です: d={f.d}")
    if not f.is_radial_gaussian:
        raise LimitLawError("remark18_check は同梱のラジアル関数 (gauss/diff_gauss) のみ対応")
    lhs = sphere_area(4) * radial_log_integral(f)
    rhs = -2.0 * math.pi**2 * log_kernel_pair_integral(f)
    scale = max(abs(lhs), abs(rhs))
    rel_err = 0.0 if scale == 0.0 else abs(lhs - rhs) / scale
    logger.info(SCHWARTZ_NOTE)
    return Remark18Result(lhs=lhs, rhs=rhs, rel_err=rel_err, passed=rel_err <= quad_tol)


__all__ = [
    "LimitLawError",
    "LimitLawSpec",
    "Order",
    "Remark18Result",
    "beta_dd",
    "beta_moment_oracle",
    "c_fd",
    "d_fd",
    "d_fd_alternative",
    "first_order_moment",
    "first_order_target",
    "fourier_energy",
    "gaussian_space_integral",
    "gaussian_time_integral",
    "limit_law",
    "limit_moment",
    "log_horizon_rate",
    "log_window_bound",
    "pair_time_constant",
    "radial_log_integral",
    "remark18_check",
    "sample_limit",
    "second_order_moment",
    "second_order_target",
    "sphere_area",
    "z_moment",
]
