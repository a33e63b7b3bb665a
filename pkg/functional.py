"""Test functions f and quadrature evaluation of the functionals.

F_n(t₁,t₂) = ∫∫ f(X_u − X̃_v) du dv と単一過程 ∫ f(X_u) du を格子上の台形則で評価する。
f はガウス密度 p_σ とその差（平均ゼロ）を同梱し、フーリエ変換は閉形式
f̂(ξ) = ∫ f(x) e^{iξ·x} dx で与える。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.special

from kernels import KernelSpec, alphas, h_eff
from sampler import PathBatch, TimeGrid

logger = logging.getLogger(__name__)


class FunctionKind(str, Enum):
    GAUSS = "gauss"
    DIFF_GAUSS = "diff_gauss"
    CUSTOM = "custom"


class FunctionalError(ValueError):
    """Raised for missing transforms or inconsistent dimensions."""


@dataclass(frozen=True)
class TestFunction:
    kind: FunctionKind
    d: int
    sigma: float = 1.0
    sigma1: float = 1.0
    sigma2: float = 2.0
    scale: float = 1.0
    f_radial: Callable[[np.ndarray], np.ndarray] | None = None
    fhat_radial: Callable[[np.ndarray], np.ndarray] | None = None
    custom_mass: float | None = None

    # pytest がクラス名からテストとして収集しないように
    __test__ = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FunctionKind(self.kind))
        if self.d < 1:
            raise FunctionalError(f"d は 1 以上: {self.d}")
        for name in ("sigma", "sigma1", "sigma2"):
            if getattr(self, name) <= 0:
                raise FunctionalError(f"{name} は正の値: {getattr(self, name)}")
        if self.kind == FunctionKind.CUSTOM and self.f_radial is None:
            raise FunctionalError("CUSTOM には f_radial が必要です")

    @property
    def mass(self) -> float:
        if self.kind == FunctionKind.GAUSS:
            return float(self.scale)
        if self.kind == FunctionKind.DIFF_GAUSS:
            return 0.0
        if self.custom_mass is not None:
            return float(self.scale * self.custom_mass)
        return float(self.scale * fhat_radial(replace(self, scale=1.0), 0.0))

    @property
    def beta_ok(self) -> bool:
        return True

    @property
    def is_radial_gaussian(self) -> bool:
        return self.kind in (FunctionKind.GAUSS, FunctionKind.DIFF_GAUSS)

    def components(self) -> list[tuple[float, float]]:
        """(coefficient, σ) pairs of the Gaussian mixture."""

        if self.kind == FunctionKind.GAUSS:
            return [(self.scale, self.sigma)]
        if self.kind == FunctionKind.DIFF_GAUSS:
            return [(self.scale, self.sigma1), (-self.scale, self.sigma2)]
        raise FunctionalError("CUSTOM はガウス混合ではありません")

    def scaled(self, factor: float) -> "TestFunction":
        return replace(self, scale=self.scale * factor)

    def label(self) -> str:
        if self.kind == FunctionKind.GAUSS:
            body = f"gauss(sigma={self.sigma:g})"
        elif self.kind == FunctionKind.DIFF_GAUSS:
            body = f"diff_gauss(sigma1={self.sigma1:g}, sigma2={self.sigma2:g})"
        else:
            body = "custom"
        return body if self.scale == 1.0 else f"{self.scale:g}*{body}"


def gauss(sigma: float, d: int, *, scale: float = 1.0) -> TestFunction:
    return TestFunction(kind=FunctionKind.GAUSS, d=d, sigma=sigma, scale=scale)


def diff_gauss(sigma1: float, sigma2: float, d: int, *, scale: float = 1.0) -> TestFunction:
    return TestFunction(kind=FunctionKind.DIFF_GAUSS, d=d, sigma1=sigma1, sigma2=sigma2, scale=scale)


def custom(
    d: int,
    f_radial: Callable[[np.ndarray], np.ndarray],
    fhat_radial: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    mass: float | None = None,
) -> TestFunction:
    return TestFunction(
        kind=FunctionKind.CUSTOM, d=d, f_radial=f_radial, fhat_radial=fhat_radial, custom_mass=mass
    )


@dataclass(frozen=True)
class FunctionalSample:
    value: float
    n: float
    t1: float
    t2: float
    M_u: int
    M_v: int
    replicate: int


def sphere_area(d: int) -> float:
    """|S^{d−1}| = 2π^{d/2}/Γ(d/2)."""

    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def f_radial_eval(f: TestFunction, r2) -> np.ndarray:
    """f evaluated at points with squared norm ``r2``."""

    r2 = np.asarray(r2, dtype=float)
    if f.kind == FunctionKind.CUSTOM:
        return f.scale * np.asarray(f.f_radial(np.sqrt(r2)), dtype=float)
    total = np.zeros_like(r2)
    for coef, sigma in f.components():
        total = total + coef * (2.0 * math.pi * sigma**2) ** (-f.d / 2.0) * np.exp(-r2 / (2.0 * sigma**2))
    return total


def f_eval(f: TestFunction, x) -> np.ndarray:
    """f at points ``x`` of shape (d, ...)."""

    x = np.asarray(x, dtype=float)
    if x.shape[0] != f.d:
        raise FunctionalError(f"次元が一致しません: x は {x.shape[0]} 次元, f は d={f.d}")
    return f_radial_eval(f, np.sum(x * x, axis=0))


def fhat_radial(f: TestFunction, rho) -> np.ndarray | float:
    """f̂ as a function of |ξ|."""

    rho = np.asarray(rho, dtype=float)
    if f.kind == FunctionKind.CUSTOM:
        if f.fhat_radial is None:
            raise FunctionalError("transform required: CUSTOM には fhat_radial を指定してください")
        value = f.scale * np.asarray(f.fhat_radial(rho), dtype=float)
    else:
        value = np.zeros_like(rho)
        for coef, sigma in f.components():
            value = value + coef * np.exp(-(sigma**2) * rho**2 / 2.0)
    return float(value) if value.ndim == 0 else value


def fhat(f: TestFunction, xi) -> complex | np.ndarray:
    """f̂(ξ) for ξ of shape (d,) or (d, ...); real-valued for the radial kinds."""

    xi = np.asarray(xi, dtype=float)
    if xi.shape[0] != f.d:
        raise FunctionalError(f"次元が一致しません: ξ は {xi.shape[0]} 次元, f は d={f.d}")
    rho = np.sqrt(np.sum(xi * xi, axis=0))
    value = np.asarray(fhat_radial(f, rho), dtype=complex)
    return complex(value) if value.ndim == 0 else value


def _check_batch(f: TestFunction, batch: PathBatch) -> None:
    if batch.X.shape != batch.Xt.shape:
        raise FunctionalError(f"X と X̃ の形状が一致しません: {batch.X.shape} vs {batch.Xt.shape}")
    if batch.d != f.d:
        raise FunctionalError(f"次元が一致しません: batch d={batch.d}, f d={f.d}")


def _resolve_index(batch: PathBatch, grid: TimeGrid, index: np.ndarray | None) -> np.ndarray:
    if index is None:
        if batch.M != grid.M:
            raise FunctionalError(f"batch の M={batch.M} と grid の M={grid.M} が一致しません")
        return np.arange(grid.M)
    index = np.asarray(index, dtype=int)
    if index.shape != (grid.M,):
        raise FunctionalError("index の長さが grid と一致しません")
    return index


def evaluate_F(
    f: TestFunction,
    batch: PathBatch,
    grid_u: TimeGrid,
    grid_v: TimeGrid,
    *,
    idx_u: np.ndarray | None = None,
    idx_v: np.ndarray | None = None,
) -> FunctionalSample:
    """Σ_{i,j} w_i w_j f(X_{u_i} − X̃_{v_j}).

    batch が union grid 上で描かれた場合は idx_u / idx_v で各格子のノード位置を渡す。
    """

    _check_batch(f, batch)
    iu = _resolve_index(batch, grid_u, idx_u)
    iv = _resolve_index(batch, grid_v, idx_v)
    diff = batch.X[:, iu][:, :, None] - batch.Xt[:, iv][:, None, :]
    values = f_radial_eval(f, np.einsum("kij,kij->ij", diff, diff))
    total = float(grid_u.weights @ values @ grid_v.weights)
    return FunctionalSample(
        value=total,
        n=grid_u.n,
        t1=grid_u.t,
        t2=grid_v.t,
        M_u=grid_u.M,
        M_v=grid_v.M,
        replicate=int(batch.seed_info[1]),
    )


def evaluate_single(
    f: TestFunction,
    batch: PathBatch,
    grid: TimeGrid,
    *,
    idx: np.ndarray | None = None,
) -> FunctionalSample:
    """Σ_i w_i f(X_{u_i}) (X only)."""

    _check_batch(f, batch)
    iu = _resolve_index(batch, grid, idx)
    path = batch.X[:, iu]
    total = float(grid.weights @ f_radial_eval(f, np.sum(path * path, axis=0)))
    return FunctionalSample(
        value=total, n=grid.n, t1=grid.t, t2=grid.t, M_u=grid.M, M_v=0, replicate=int(batch.seed_info[1])
    )


def gaussian_expectation(f: TestFunction, s2, *, method: str = "auto") -> np.ndarray:
    """E f(Z) for Z ~ N(0, s2·I_d), elementwise over ``s2``.

    closed: ガウス混合の畳み込み公式 (2π(σ²+s²))^{−d/2}
    radial: (2π)^{−d}|S^{d−1}| ∫ f̂(r) e^{−s²r²/2} r^{d−1} dr を数値積分
    """

    s2 = np.asarray(s2, dtype=float)
    if method == "auto":
        method = "closed" if f.is_radial_gaussian else "radial"
    if method == "closed":
        total = np.zeros_like(s2)
        for coef, sigma in f.components():
            total = total + coef * (2.0 * math.pi * (sigma**2 + s2)) ** (-f.d / 2.0)
        return total
    if method != "radial":
        raise FunctionalError(f"未知の method です: {method}")

    prefactor = (2.0 * math.pi) ** (-f.d) * sphere_area(f.d)
    unique, inverse = np.unique(s2, return_inverse=True)
    results = np.empty_like(unique)
    for k, value in enumerate(unique):
        integral, _ = scipy.integrate.quad(
            lambda r, v=value: fhat_radial(f, r) * math.exp(-v * r * r / 2.0) * r ** (f.d - 1),
            0.0,
            np.inf,
            epsabs=0.0,
            epsrel=1e-10,
            limit=200,
        )
        results[k] = prefactor * integral
    return results[inverse].reshape(s2.shape)


def mean_F_oracle(
    spec: KernelSpec,
    f: TestFunction,
    grid_u: TimeGrid,
    grid_v: TimeGrid,
    *,
    method: str = "auto",
) -> float:
    """E of the discretized F_n without sampling (X_u − X̃_v ~ N(0, α₁(u^{2h}+v^{2h}) I))."""

    alpha1 = alphas(spec)[0]
    two_h = 2.0 * h_eff(spec)
    s2 = alpha1 * (grid_u.nodes[:, None] ** two_h + grid_v.nodes[None, :] ** two_h)
    return float(grid_u.weights @ gaussian_expectation(f, s2, method=method) @ grid_v.weights)


def mean_single_oracle(spec: KernelSpec, f: TestFunction, grid: TimeGrid, *, method: str = "auto") -> float:
    alpha1 = alphas(spec)[0]
    s2 = alpha1 * grid.nodes ** (2.0 * h_eff(spec))
    return float(grid.weights @ gaussian_expectation(f, s2, method=method))


def log_kernel_pair_integral(f: TestFunction) -> float:
    """∬ f(x) f(y) ln|x − y| dx dy in R⁴ for radial f, via a 2-D radial quadrature.

    R⁴ の球面平均: ⟨ln|x−y|⟩ = ln max(r,s) + (min/max)²/4。
    """

    if f.d != 4:
        raise FunctionalError(f"対数核の積分は d=4 のみ対応: d={f.d}")
    area = sphere_area(4)

    def radial(r: float) -> float:
        return float(f_radial_eval(f, r * r))

    def inner(s: float) -> float:
        # r < s 側と r > s 側に分けて積分
        below, _ = scipy.integrate.quad(
            lambda r: radial(r) * (math.log(s) + (r / s) ** 2 / 4.0) * r**3, 0.0, s, epsabs=1e-13, limit=200
        )
        above, _ = scipy.integrate.quad(
            lambda r: radial(r) * (math.log(r) + (s / r) ** 2 / 4.0) * r**3, s, np.inf, epsabs=1e-13, limit=200
        )
        return radial(s) * s**3 * (below + above)

    outer, _ = scipy.integrate.quad(inner, 0.0, np.inf, epsabs=1e-13, limit=200)
    return area * area * outer


__all__ = [
    "FunctionKind",
    "FunctionalError",
    "FunctionalSample",
    "TestFunction",
    "custom",
    "diff_gauss",
    "evaluate_F",
    "evaluate_single",
    "f_eval",
    "f_radial_eval",
    "fhat",
    "fhat_radial",
    "gauss",
    "gaussian_expectation",
    "log_kernel_pair_integral",
    "mean_F_oracle",
    "mean_single_oracle",
    "sphere_area",
]
