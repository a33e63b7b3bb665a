"""Exact joint sampling of X and X̃ on a time grid.

- ``build_grid`` : 線形ノード (0,1] + 幾何ノード [1, e^{nt}] と台形重み
- ``factorize``  : Gram 行列の Cholesky 分解、または fBm 一様格子向けの circulant embedding
- ``sample``     : (root_seed, process, component, replicate) をキーにした独立サブストリームで描画

分解結果 (PathFactorization) は不変で、複数ワーカーから共有してよい。
"""

from __future__ import annotations

import logging
import math
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg

from kernels import Family, KernelSpec, cov_matrix, h_eff
from streams import Process, path_stream

logger = logging.getLogger(__name__)

MAX_HORIZON_EXPONENT = 700.0
JITTER_CAP_FACTOR = 1e-12
# 上限に向けて段階的に増やす（決定的なスケジュール）
JITTER_SCHEDULE = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
CIRCULANT_NEGATIVE_TOL = 1e-8
UNION_NODE_RTOL = 1e-10

DUMP_MAGIC = b"GLPB"
DUMP_VERSION = 1
DUMP_HEADER = struct.Struct("<4sIIIQ8x")


class GridError(ValueError):
    """Raised when grid parameters are invalid."""


class SamplerError(RuntimeError):
    """Raised when a factorization or a path dump cannot be produced."""


class Method(str, Enum):
    CHOLESKY = "cholesky"
    CIRCULANT = "circulant"


@dataclass(frozen=True, eq=False)
class TimeGrid:
    nodes: np.ndarray
    weights: np.ndarray
    n: float = 0.0
    t: float = 0.0
    M_lin: int = 0
    M_log: int = 0

    def __post_init__(self) -> None:
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.size == 0:
            raise GridError("nodes は 1 次元で 1 点以上必要です")
        if nodes.shape != weights.shape:
            raise GridError(f"nodes と weights の長さが一致しません: {nodes.shape} vs {weights.shape}")
        if nodes[0] <= 0 or np.any(np.diff(nodes) <= 0):
            raise GridError("nodes は正で狭義単調増加である必要があります")
        if np.any(weights <= 0):
            raise GridError("weights は正である必要があります")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_nodes(cls, nodes, weights=None) -> "TimeGrid":
        nodes = np.asarray(nodes, dtype=float)
        if weights is None:
            weights = trapezoid_weights(nodes)
        return cls(nodes=nodes, weights=np.asarray(weights, dtype=float))

    @property
    def M(self) -> int:
        return int(self.nodes.size)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    """Trapezoid weights on [0, u_M]; the cell (0, u₁) is folded into w₁."""

    nodes = np.asarray(nodes, dtype=float)
    if nodes.size == 1:
        return nodes.copy()
    gaps = np.diff(nodes)
    weights = np.empty_like(nodes)
    weights[0] = nodes[0] + gaps[0] / 2.0
    weights[1:-1] = (gaps[:-1] + gaps[1:]) / 2.0
    weights[-1] = gaps[-1] / 2.0
    return weights


def build_grid(n: float, t: float, M_lin: int, M_log: int) -> TimeGrid:
    nt = float(n) * float(t)
    if not nt > 0:
        raise GridError(f"n*t は正である必要があります: n={n}, t={t}")
    if nt > MAX_HORIZON_EXPONENT:
        raise GridError(f"horizon too large: n*t={nt:g} > {MAX_HORIZON_EXPONENT:g}")
    if M_lin < 2 or M_log < 2:
        raise GridError(f"M_lin, M_log は 2 以上: M_lin={M_lin}, M_log={M_log}")

    linear = np.arange(1, M_lin + 1, dtype=float) / M_lin
    geometric = np.exp(np.linspace(0.0, nt, M_log))
    geometric[0] = 1.0
    geometric[-1] = math.exp(nt)
    nodes = np.concatenate([linear, geometric[1:]])
    return TimeGrid(
        nodes=nodes,
        weights=trapezoid_weights(nodes),
        n=float(n),
        t=float(t),
        M_lin=int(M_lin),
        M_log=int(M_log),
    )


def uniform_grid(horizon: float, M: int) -> TimeGrid:
    """Nodes kδ (k = 1..M, δ = horizon/M), the layout accepted by the circulant path."""

    if horizon <= 0 or M < 1:
        raise GridError(f"uniform grid の指定が不正です: horizon={horizon}, M={M}")
    step = horizon / M
    nodes = step * np.arange(1, M + 1, dtype=float)
    return TimeGrid.from_nodes(nodes)


def union_grid(grid_u: TimeGrid, grid_v: TimeGrid) -> tuple[TimeGrid, np.ndarray, np.ndarray]:
    """Merged sampling grid plus the index of every grid_u / grid_v node inside it.

    ほぼ同一のノード（浮動小数の丸め差）は 1 点にまとめる。Gram 行列の特異化を避けるため。
    """

    merged = np.sort(np.concatenate([grid_u.nodes, grid_v.nodes]))
    keep = np.ones(merged.size, dtype=bool)
    keep[1:] = np.diff(merged) > UNION_NODE_RTOL * merged[1:]
    nodes = merged[keep]

    def _locate(values: np.ndarray) -> np.ndarray:
        idx = np.clip(np.searchsorted(nodes, values), 0, nodes.size - 1)
        left = np.clip(idx - 1, 0, nodes.size - 1)
        pick = np.where(np.abs(nodes[left] - values) < np.abs(nodes[idx] - values), left, idx)
        if np.any(np.abs(nodes[pick] - values) > UNION_NODE_RTOL * values):
            raise GridError("union grid にノードを対応付けられませんでした")
        return pick

    union = TimeGrid(
        nodes=nodes,
        weights=trapezoid_weights(nodes),
        n=max(grid_u.n, grid_v.n),
        t=max(grid_u.t, grid_v.t),
        M_lin=max(grid_u.M_lin, grid_v.M_lin),
        M_log=max(grid_u.M_log, grid_v.M_log),
    )
    return union, _locate(grid_u.nodes), _locate(grid_v.nodes)


def gram_matrix(spec: KernelSpec, grid: TimeGrid) -> np.ndarray:
    nodes = grid.nodes
    return cov_matrix(spec, nodes[:, None], nodes[None, :])


@dataclass(frozen=True, eq=False)
class PathFactorization:
    grid: TimeGrid
    spec: KernelSpec
    method: Method
    factor: np.ndarray
    jitter: float = 0.0
    clipped: int = 0
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PathBatch:
    X: np.ndarray
    Xt: np.ndarray
    seed_info: tuple[int, int]

    @property
    def d(self) -> int:
        return int(self.X.shape[0])

    @property
    def M(self) -> int:
        return int(self.X.shape[1])


_FACTORIZATION_LOCK = threading.Lock()
_FACTORIZATION_COUNT = 0


def factorization_count() -> int:
    return _FACTORIZATION_COUNT


def reset_factorization_count() -> None:
    global _FACTORIZATION_COUNT
    with _FACTORIZATION_LOCK:
        _FACTORIZATION_COUNT = 0


def _count_factorization() -> None:
    global _FACTORIZATION_COUNT
    with _FACTORIZATION_LOCK:
        _FACTORIZATION_COUNT += 1


def _cholesky(spec: KernelSpec, grid: TimeGrid) -> PathFactorization:
    gram = gram_matrix(spec, grid)
    cap = JITTER_CAP_FACTOR * float(np.trace(gram)) / grid.M
    for fraction in JITTER_SCHEDULE:
        jitter = fraction * cap
        try:
            factor = scipy.linalg.cholesky(
                gram + jitter * np.eye(grid.M), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(factor)):
            continue
        if jitter > 0:
            logger.warning(
                "Gram 行列が数値的に正定値でないため jitter=%.3e を対角に加えました (M=%d, %s)",
                jitter,
                grid.M,
                spec.family,
            )
        return PathFactorization(grid=grid, spec=spec, method=Method.CHOLESKY, factor=factor, jitter=jitter)
    raise SamplerError(
        f"Cholesky 分解に失敗しました: jitter 上限 {cap:.3e} (=1e-12*trace/M) を超えます"
    )


def fgn_autocovariance(H: float, step: float, lags: np.ndarray) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    two_h = 2.0 * H
    return 0.5 * step**two_h * (np.abs(k + 1) ** two_h - 2.0 * k**two_h + np.abs(k - 1) ** two_h)


def _circulant(spec: KernelSpec, grid: TimeGrid) -> PathFactorization:
    if spec.family != Family.FBM:
        raise SamplerError(f"circulant は fbm 専用です（{spec.family} は増分が非定常）")
    step = float(grid.nodes[0])
    expected = step * np.arange(1, grid.M + 1, dtype=float)
    if not np.allclose(grid.nodes, expected, rtol=1e-12, atol=0.0):
        raise SamplerError("circulant には一様格子 u_k = kδ が必要です")

    N = grid.M
    gamma = fgn_autocovariance(h_eff(spec), step, np.arange(N + 1))
    row = np.concatenate([gamma, gamma[N - 1 : 0 : -1]])
    eigenvalues = np.real(scipy.fft.fft(row))
    top = float(eigenvalues.max())
    bottom = float(eigenvalues.min())
    if bottom < -CIRCULANT_NEGATIVE_TOL * top:
        raise SamplerError(f"embedding not PSD: min eigenvalue {bottom:.3e}, max {top:.3e}")
    negative = int(np.count_nonzero(eigenvalues < 0))
    if negative:
        logger.warning("circulant 固有値の負値 %d 個を 0 にクリップしました (min=%.3e)", negative, bottom)
        eigenvalues = np.clip(eigenvalues, 0.0, None)
    factor = np.sqrt(eigenvalues / (2 * N))
    return PathFactorization(
        grid=grid,
        spec=spec,
        method=Method.CIRCULANT,
        factor=factor,
        clipped=negative,
        meta={"step": step},
    )


def factorize(spec: KernelSpec, grid: TimeGrid, method: Method | str = Method.CHOLESKY) -> PathFactorization:
    method = Method(method)
    _count_factorization()
    logger.debug("factorize: %s M=%d method=%s", spec.family, grid.M, method.value)
    if method == Method.CIRCULANT:
        return _circulant(spec, grid)
    return _cholesky(spec, grid)


def implied_covariance(fact: PathFactorization) -> np.ndarray:
    """Covariance of the paths that ``fact`` actually produces."""

    if fact.method == Method.CHOLESKY:
        return fact.factor @ fact.factor.T
    N = fact.grid.M
    spectrum = fact.factor**2 * (2 * N)
    autocov = np.real(scipy.fft.ifft(spectrum))[:N]
    toeplitz = scipy.linalg.toeplitz(autocov)
    return toeplitz.cumsum(axis=0).cumsum(axis=1)


def draw_paths(fact: PathFactorization, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """``count`` independent N(0, Gram) paths, shape (count, M)."""

    M = fact.grid.M
    if fact.method == Method.CHOLESKY:
        z = rng.standard_normal((count, M))
        return z @ fact.factor.T
    noise = rng.standard_normal((count, 2 * M)) + 1j * rng.standard_normal((count, 2 * M))
    increments = np.real(scipy.fft.fft(fact.factor * noise, axis=1))[:, :M]
    return np.cumsum(increments, axis=1)


def sample(fact: PathFactorization, d: int, replicate: int, root_seed: int) -> PathBatch:
    if d < 1:
        raise SamplerError(f"d は 1 以上: {d}")
    paths = {}
    for process in (Process.X, Process.X_TILDE):
        rows = [
            draw_paths(fact, path_stream(root_seed, process, component, replicate))[0]
            for component in range(d)
        ]
        paths[process] = np.vstack(rows)
    return PathBatch(X=paths[Process.X], Xt=paths[Process.X_TILDE], seed_info=(int(root_seed), int(replicate)))


def write_batch(path: Path, batch: PathBatch) -> Path:
    """Debug dump: 32-byte header then X rows then X̃ rows (float64 little-endian)."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, batch.d, batch.M, int(batch.seed_info[1]))
    with path.open("wb") as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(batch.X, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(batch.Xt, dtype="<f8").tobytes())
    return path


def read_batch(path: Path, *, root_seed: int = 0) -> PathBatch:
    raw = Path(path).read_bytes()
    if len(raw) < DUMP_HEADER.size:
        raise SamplerError(f"ダンプが短すぎます: {path}")
    magic, version, d, M, replicate = DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC or version != DUMP_VERSION:
        raise SamplerError(f"未対応のダンプ形式です: magic={magic!r}, version={version}")
    body = np.frombuffer(raw, dtype="<f8", offset=DUMP_HEADER.size)
    if body.size != 2 * d * M:
        raise SamplerError(f"ダンプの要素数が不正です: {body.size} != {2 * d * M}")
    X = body[: d * M].reshape(d, M).astype(float)
    Xt = body[d * M :].reshape(d, M).astype(float)
    return PathBatch(X=X, Xt=Xt, seed_info=(int(root_seed), int(replicate)))


__all__ = [
    "GridError",
    "Method",
    "PathBatch",
    "PathFactorization",
    "SamplerError",
    "TimeGrid",
    "build_grid",
    "draw_paths",
    "factorization_count",
    "factorize",
    "fgn_autocovariance",
    "gram_matrix",
    "implied_covariance",
    "read_batch",
    "reset_factorization_count",
    "sample",
    "trapezoid_weights",
    "uniform_grid",
    "union_grid",
    "write_batch",
]
