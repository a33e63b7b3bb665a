"""Permutation machinery behind the moment computations, checked by brute force.

|σ|（非レコード数）、有理数での恒等式 Σ A^{m−|σ|} = Π(A+i−1)、ペア保存クラス 𝒫₁、
パリティ保存ペアリングの構成をまとめる。添字はすべて 1 始まり。
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np
import scipy.sparse
from scipy.sparse.csgraph import maximum_bipartite_matching

logger = logging.getLogger(__name__)

MAX_ENUMERATION_M = 8


class CombinatoricsError(ValueError):
    """Raised for invalid permutations or out-of-range enumeration sizes."""


@dataclass(frozen=True)
class Perm:
    mapping: tuple[int, ...]

    def __post_init__(self) -> None:
        mapping = tuple(int(v) for v in self.mapping)
        if not is_perm(mapping):
            raise CombinatoricsError(f"1..m の置換ではありません: {self.mapping}")
        object.__setattr__(self, "mapping", mapping)

    @property
    def m(self) -> int:
        return len(self.mapping)

    def __call__(self, i: int) -> int:
        if not 1 <= i <= self.m:
            raise CombinatoricsError(f"添字 {i} が範囲外です (m={self.m})")
        return self.mapping[i - 1]

    def __iter__(self) -> Iterator[int]:
        return iter(self.mapping)


@dataclass(frozen=True)
class CheckResult:
    name: str
    m: int
    passed: bool
    detail: str = ""


def is_perm(seq) -> bool:
    values = list(seq)
    return sorted(values) == list(range(1, len(values) + 1))


def all_perms(m: int) -> Iterator[Perm]:
    if m < 1:
        raise CombinatoricsError(f"m は 1 以上: {m}")
    for mapping in itertools.permutations(range(1, m + 1)):
        yield Perm(mapping)


def _guard_enumeration(m: int) -> None:
    if not 1 <= m <= MAX_ENUMERATION_M:
        raise CombinatoricsError(f"全列挙は 1 ≤ m ≤ {MAX_ENUMERATION_M} のみ対応: m={m}")


def _require_even(m: int) -> None:
    if m % 2:
        raise CombinatoricsError(f"m は偶数である必要があります: {m}")


def records(p: Perm) -> list[int]:
    """Positions i where σ(i) exceeds every earlier value (left-to-right maxima)."""

    positions = []
    best = 0
    for i, value in enumerate(p, start=1):
        if value > best:
            positions.append(i)
            best = value
    return positions


def sigma_stat(p: Perm) -> int:
    """|σ| = m − #records."""

    return p.m - len(records(p))


def sigma_distribution(m: int) -> dict[int, int]:
    _guard_enumeration(m)
    counts = Counter(sigma_stat(p) for p in all_perms(m))
    return dict(sorted(counts.items()))


def rising_factorial(A: Fraction, m: int) -> Fraction:
    return math.prod((A + (i - 1) for i in range(1, m + 1)), start=Fraction(1))


def lemma55_identity(m: int, A) -> tuple[Fraction, Fraction, bool]:
    """(Σ_σ A^{m−|σ|}, Π_{i=1}^m (A+i−1), equal) in exact rational arithmetic."""

    _guard_enumeration(m)
    A = Fraction(A)
    if A <= 0:
        raise CombinatoricsError(f"A は正の有理数: {A}")
    lhs = sum((A ** (m - sigma_stat(p)) for p in all_perms(m)), start=Fraction(0))
    rhs = rising_factorial(A, m)
    return lhs, rhs, lhs == rhs


def _pair_blocks(p: Perm) -> list[frozenset[int]]:
    return [frozenset((p(2 * k - 1), p(2 * k))) for k in range(1, p.m // 2 + 1)]


def classify_P1(p: Perm) -> bool:
    """True iff each consecutive pair {σ(2k−1), σ(2k)} is some {2j−1, 2j}."""

    _require_even(p.m)
    return all(min(block) % 2 == 1 and max(block) == min(block) + 1 for block in _pair_blocks(p))


def count_P1(m: int) -> int:
    _guard_enumeration(m)
    _require_even(m)
    return sum(1 for p in all_perms(m) if classify_P1(p))


def expected_count_P1(m: int) -> int:
    _require_even(m)
    return 2 ** (m // 2) * math.factorial(m // 2)


def A_set(p: Perm, i: int) -> frozenset[int]:
    """{σ(i),…,σ(m)} Δ {σ(i)+1,…,σ(m)+1}; may contain m+1."""

    if not 1 <= i <= p.m:
        raise CombinatoricsError(f"添字 {i} が範囲外です (m={p.m})")
    tail = set(p.mapping[i - 1 :])
    return frozenset(tail ^ {v + 1 for v in tail})


def A_set_oracle(p: Perm, i: int) -> frozenset[int]:
    """Indices with a nonzero coefficient in Σ_{j≥i} (e_{σ(j)} − e_{σ(j)+1})."""

    coefficients: Counter[int] = Counter()
    for j in range(i, p.m + 1):
        coefficients[p(j)] += 1
        coefficients[p(j) + 1] -= 1
    return frozenset(k for k, c in coefficients.items() if c != 0)


def build_pairing(p: Perm) -> Perm:
    """Parity-preserving σ̃ with σ̃(i) ∈ A_i^σ for every i.

    偶数 i: ブロック {σ(i−1), σ(i)} の偶数側。
    奇数 i: A_i^σ ∩ [1,m] の奇数要素から代表系を二部マッチングで選ぶ。
    """

    _require_even(p.m)
    if not classify_P1(p):
        raise CombinatoricsError(f"𝒫₁ に属さない置換です: {p.mapping}")
    m = p.m
    pairing = [0] * m
    for i in range(2, m + 1, 2):
        pairing[i - 1] = p(i) if p(i) % 2 == 0 else p(i - 1)

    half = m // 2
    adjacency = np.zeros((half, half), dtype=np.int8)
    for row, i in enumerate(range(1, m, 2)):
        for k in A_set(p, i):
            if k <= m and k % 2 == 1:
                adjacency[row, (k - 1) // 2] = 1
    matching = maximum_bipartite_matching(scipy.sparse.csr_matrix(adjacency), perm_type="column")
    if np.any(matching < 0):
        raise CombinatoricsError(f"奇数位置の代表系が見つかりません: {p.mapping}")
    for row, i in enumerate(range(1, m, 2)):
        pairing[i - 1] = 2 * int(matching[row]) + 1

    result = Perm(tuple(pairing))
    logger.debug("pairing %s -> %s", p.mapping, result.mapping)
    return result


def random_region_y(m: int, gamma: float, eps: float, rng: np.random.Generator) -> np.ndarray:
    """y_1..y_m with |y_odd| < ε pairwise γ-separated and |y_even| > γε.

    返り値は長さ m。y_{m+1} は 0 として扱う。
    """

    _require_even(m)
    if gamma <= 1 or eps <= 0:
        raise CombinatoricsError(f"γ > 1, ε > 0 が必要です: γ={gamma}, ε={eps}")
    y = np.empty(m)
    ranks = rng.permutation(m // 2)
    # 隣り合う順位の比は γ² / γ = γ 以上
    jitter = np.exp(rng.uniform(0.0, math.log(gamma), size=m // 2))
    y[0::2] = eps * gamma ** (-2.0 * ranks - 1.0) * jitter
    y[1::2] = gamma * eps * np.exp(rng.uniform(0.01, 3.0, size=m // 2))
    signs = rng.choice((-1.0, 1.0), size=m)
    return signs * y


def pairing_dominates(p: Perm, pairing: Perm, y: np.ndarray) -> bool:
    """sup_{j∈A_i^σ}|y_j| ≥ |y_{σ̃(i)}| for every i (y_{m+1} = 0)."""

    padded = np.abs(np.append(np.asarray(y, dtype=float), 0.0))
    for i in range(1, p.m + 1):
        members = sorted(A_set(p, i))
        top = max(padded[k - 1] for k in members) if members else 0.0
        if top < padded[pairing(i) - 1]:
            return False
    return True


def verify(m: int, *, rng: np.random.Generator, trials: int = 1000, gamma: float = 8.0, eps: float = 1e-2) -> list[CheckResult]:
    """Run every brute-force check for size ``m``; used by ``combinatorics-verify``."""

    _guard_enumeration(m)
    results = []
    for A in (Fraction(1), Fraction(2), Fraction(1, 2), Fraction(7, 3)):
        lhs, rhs, equal = lemma55_identity(m, A)
        results.append(CheckResult("lemma55_identity", m, equal, f"A={A} lhs={lhs} rhs={rhs}"))

    oracle_ok = all(A_set(p, i) == A_set_oracle(p, i) for p in all_perms(m) for i in range(1, m + 1))
    results.append(CheckResult("A_set_oracle", m, oracle_ok))

    if m % 2 == 0:
        counted = count_P1(m)
        expected = expected_count_P1(m)
        results.append(CheckResult("count_P1", m, counted == expected, f"{counted} vs {expected}"))

        members = [p for p in all_perms(m) if classify_P1(p)]
        failures = 0
        for p in members:
            pairing = build_pairing(p)
            parity = all(pairing(j) % 2 == j % 2 for j in range(1, m + 1))
            if not parity:
                failures += 1
        results.append(CheckResult("build_pairing_parity", m, failures == 0, f"failures={failures}"))

        violations = 0
        for _ in range(trials):
            p = members[int(rng.integers(len(members)))]
            y = random_region_y(m, gamma, eps, rng)
            if not pairing_dominates(p, build_pairing(p), y):
                violations += 1
        results.append(CheckResult("pairing_domination", m, violations == 0, f"trials={trials} violations={violations}"))
    return results


__all__ = [
    "A_set",
    "A_set_oracle",
    "CheckResult",
    "CombinatoricsError",
    "MAX_ENUMERATION_M",
    "Perm",
    "all_perms",
    "build_pairing",
    "classify_P1",
    "count_P1",
    "expected_count_P1",
    "is_perm",
    "lemma55_identity",
    "pairing_dominates",
    "random_region_y",
    "records",
    "rising_factorial",
    "sigma_distribution",
    "sigma_stat",
    "verify",
]
