"""Reproducible random substreams keyed by (root seed, stream, ...).

numpy の Philox (counter-based) を SeedSequence の spawn_key で分岐させる。
同じキーなら実行順序・ワーカー数に関係なく同じ乱数列になる。
"""

from __future__ import annotations

import logging
import secrets
from enum import IntEnum

import numpy as np

logger = logging.getLogger(__name__)


class Stream(IntEnum):
    SAMPLER = 0
    LIMIT_LAW = 1
    ASSUMPTIONS = 2
    COMBINATORICS = 3


class Process(IntEnum):
    X = 0
    X_TILDE = 1


def substream(root_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under ``root_seed``."""

    if root_seed < 0:
        raise ValueError(f"root_seed は非負整数で指定してください: {root_seed}")
    spawn_key = tuple(int(k) for k in key)
    if any(k < 0 for k in spawn_key):
        raise ValueError(f"substream key は非負整数のみです: {key}")
    sequence = np.random.SeedSequence(entropy=int(root_seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(sequence))


def path_stream(root_seed: int, process: Process, component: int, replicate: int) -> np.random.Generator:
    return substream(root_seed, Stream.SAMPLER, process, component, replicate)


def resolve_seed(seed: int | None) -> int:
    """Return ``seed`` or a fresh OS-entropy seed (logged so the run can be replayed)."""

    if seed is not None:
        return int(seed)
    chosen = secrets.randbits(63)
    logger.info("--seed 未指定のため OS エントロピーから seed=%d を採用", chosen)
    return chosen


__all__ = ["Process", "Stream", "path_stream", "resolve_seed", "substream"]
