from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from kernels import KernelSpec  # noqa: E402
from sampler import PathBatch  # noqa: E402

CONFIG_DIR = ROOT / "configs"


@pytest.fixture
def fbm_d4() -> KernelSpec:
    return KernelSpec(family="fbm", H=0.5, d=4, critical=True)


@pytest.fixture
def subfbm_d5() -> KernelSpec:
    return KernelSpec(family="subfbm", H=0.4, d=5, critical=True)


@pytest.fixture
def bifbm_d4() -> KernelSpec:
    return KernelSpec(family="bifbm", H=0.75, K=2.0 / 3.0, d=4)


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


def frozen_batch(X, Xt, replicate: int = 0) -> PathBatch:
    """PathBatch with hand-written paths (no sampling)."""

    return PathBatch(X=np.asarray(X, dtype=float), Xt=np.asarray(Xt, dtype=float), seed_info=(0, replicate))
