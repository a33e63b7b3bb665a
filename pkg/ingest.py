"""Experiment config ingestion.

configs/*.json を読み込み、フィールド単位で検証して frozen dataclass に変換する。
検証エラーは IngestError（field / line 付き）で返し、CLI では exit 2 に対応させる。
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from functional import FunctionKind, TestFunction, diff_gauss, gauss
from kernels import KernelSpec, KernelSpecError
from limitlaw import Order
from montecarlo import ExperimentConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_CONFIG_DIR = Path("configs")

_TOP_LEVEL_KEYS = {
    "schema_version",
    "kernel",
    "function",
    "order",
    "n_list",
    "t1",
    "t2",
    "replicates",
    "grid",
    "root_seed",
    "assumptions",
}
_KERNEL_KEYS = {"family", "H", "K", "d", "critical"}
_FUNCTION_KEYS = {"kind", "sigma", "sigma1", "sigma2", "scale"}
_GRID_KEYS = {"M_lin", "M_log"}
_ASSUMPTION_KEYS = {"gammas", "trials", "kappa_m", "ratio_schedule"}


class IngestError(Exception):
    def __init__(self, message: str, *, field: str | None = None, line: int | None = None) -> None:
        self.field = field
        self.line = line
        location = []
        if field:
            location.append(f"field={field}")
        if line:
            location.append(f"line={line}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


@dataclass(frozen=True)
class AssumptionSettings:
    gammas: tuple[float, ...] = (2.0, 5.0, 10.0, 100.0)
    trials: int = 10_000
    kappa_m: tuple[int, ...] = (1, 2, 4, 8)
    ratio_schedule: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class RunConfig:
    kernel: KernelSpec
    function: TestFunction
    order: Order
    n_list: tuple[float, ...]
    t1: float
    t2: float
    replicates: int
    M_lin: int = 8
    M_log: int = 128
    root_seed: int | None = None
    assumptions: AssumptionSettings = field(default_factory=AssumptionSettings)
    schema_version: int = SCHEMA_VERSION
    source: str | None = field(default=None, compare=False)

    def to_experiment(self, *, root_seed: int, workers: int = 1) -> ExperimentConfig:
        return ExperimentConfig(
            spec=self.kernel,
            f=self.function,
            order=self.order,
            n_list=self.n_list,
            t1=self.t1,
            t2=self.t2,
            replicates=self.replicates,
            M_lin=self.M_lin,
            M_log=self.M_log,
            root_seed=root_seed,
            workers=workers,
        )


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


class _Validator:
    def __init__(self, text: str | None) -> None:
        self.text = text

    def fail(self, message: str, field_name: str) -> IngestError:
        return IngestError(message, field=field_name, line=_line_of(self.text, field_name.split(".")[-1]))

    def mapping(self, value: Any, name: str, allowed: set[str]) -> dict:
        if not isinstance(value, dict):
            raise self.fail("オブジェクトである必要があります", name)
        for key in value:
            if key not in allowed:
                raise self.fail(f"未知のキーです: {key}", f"{name}.{key}" if name else key)
        return value

    def number(self, value: Any, name: str, *, positive: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(f"数値である必要があります: {value!r}", name)
        if positive and not value > 0:
            raise self.fail(f"正の値である必要があります: {value!r}", name)
        return float(value)

    def integer(self, value: Any, name: str, *, minimum: int | None = None) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(f"整数である必要があります: {value!r}", name)
        if minimum is not None and value < minimum:
            raise self.fail(f"{minimum} 以上である必要があります: {value}", name)
        return int(value)

    def number_list(self, value: Any, name: str, *, positive: bool = True) -> tuple[float, ...]:
        if not isinstance(value, list) or not value:
            raise self.fail("空でない配列である必要があります", name)
        return tuple(self.number(v, name, positive=positive) for v in value)


def _parse_kernel(v: _Validator, raw: Any) -> KernelSpec:
    raw = v.mapping(raw, "kernel", _KERNEL_KEYS)
    for key in ("family", "H", "d"):
        if key not in raw:
            raise v.fail("必須キーがありません", f"kernel.{key}")
    critical = raw.get("critical", False)
    if not isinstance(critical, bool):
        raise v.fail("真偽値である必要があります", "kernel.critical")
    try:
        return KernelSpec(
            family=str(raw["family"]),
            H=v.number(raw["H"], "kernel.H"),
            K=v.number(raw.get("K", 1.0), "kernel.K"),
            d=v.integer(raw["d"], "kernel.d", minimum=1),
            critical=critical,
        )
    except KernelSpecError as exc:
        raise v.fail(str(exc), "kernel") from exc


def _parse_function(v: _Validator, raw: Any, d: int) -> TestFunction:
    raw = v.mapping(raw, "function", _FUNCTION_KEYS)
    kind = raw.get("kind")
    scale = v.number(raw.get("scale", 1.0), "function.scale")
    if kind == FunctionKind.GAUSS.value:
        return gauss(v.number(raw.get("sigma", 1.0), "function.sigma", positive=True), d, scale=scale)
    if kind == FunctionKind.DIFF_GAUSS.value:
        return diff_gauss(
            v.number(raw.get("sigma1", 1.0), "function.sigma1", positive=True),
            v.number(raw.get("sigma2", 2.0), "function.sigma2", positive=True),
            d,
            scale=scale,
        )
    raise v.fail(f"kind は gauss / diff_gauss のいずれか: {kind!r}", "function.kind")


def _parse_assumptions(v: _Validator, raw: Any) -> AssumptionSettings:
    if raw is None:
        return AssumptionSettings()
    raw = v.mapping(raw, "assumptions", _ASSUMPTION_KEYS)
    defaults = AssumptionSettings()
    gammas = v.number_list(raw.get("gammas", list(defaults.gammas)), "assumptions.gammas")
    if any(g <= 1 for g in gammas):
        raise v.fail("γ は 1 より大きい値", "assumptions.gammas")
    kappa_m = raw.get("kappa_m", list(defaults.kappa_m))
    if not isinstance(kappa_m, list) or not kappa_m:
        raise v.fail("空でない配列である必要があります", "assumptions.kappa_m")
    return AssumptionSettings(
        gammas=gammas,
        trials=v.integer(raw.get("trials", defaults.trials), "assumptions.trials", minimum=1),
        kappa_m=tuple(v.integer(m, "assumptions.kappa_m", minimum=1) for m in kappa_m),
        ratio_schedule=v.number_list(
            raw.get("ratio_schedule", list(defaults.ratio_schedule)), "assumptions.ratio_schedule"
        ),
    )


def parse_config(payload: Any, *, text: str | None = None, source: str | None = None) -> RunConfig:
    """Validate a decoded JSON object into a RunConfig."""

    v = _Validator(text)
    payload = v.mapping(payload, "", _TOP_LEVEL_KEYS)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise v.fail(f"schema_version は {SCHEMA_VERSION} のみ対応: {version!r}", "schema_version")
    for key in ("kernel", "function", "order", "n_list", "t1", "t2", "replicates"):
        if key not in payload:
            raise v.fail("必須キーがありません", key)

    kernel = _parse_kernel(v, payload["kernel"])
    function = _parse_function(v, payload["function"], kernel.d)
    try:
        order = Order(payload["order"])
    except ValueError as exc:
        raise v.fail(f"order は first / second: {payload['order']!r}", "order") from exc

    grid = v.mapping(payload.get("grid", {}), "grid", _GRID_KEYS)
    root_seed = payload.get("root_seed")
    if root_seed is not None:
        root_seed = v.integer(root_seed, "root_seed", minimum=0)

    config = RunConfig(
        kernel=kernel,
        function=function,
        order=order,
        n_list=v.number_list(payload["n_list"], "n_list"),
        t1=v.number(payload["t1"], "t1", positive=True),
        t2=v.number(payload["t2"], "t2", positive=True),
        replicates=v.integer(payload["replicates"], "replicates", minimum=2),
        M_lin=v.integer(grid.get("M_lin", 8), "grid.M_lin", minimum=2),
        M_log=v.integer(grid.get("M_log", 128), "grid.M_log", minimum=2),
        root_seed=root_seed,
        assumptions=_parse_assumptions(v, payload.get("assumptions")),
        source=source,
    )
    if order == Order.SECOND and function.mass != 0.0:
        raise v.fail("order=second には ∫f = 0 の関数 (diff_gauss) が必要です", "function.kind")
    return config


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"設定ファイルが見つかりません: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"JSON の構文エラー: {exc.msg}", line=exc.lineno) from exc
    config = parse_config(payload, text=text, source=str(path))
    logger.debug("loaded config %s (hash=%s)", path, config_hash(config))
    return config


def config_to_dict(config: RunConfig) -> dict:
    """Normalized JSON-ready form (defaults filled in)."""

    f = config.function
    if f.kind == FunctionKind.GAUSS:
        function = {"kind": f.kind.value, "sigma": f.sigma, "scale": f.scale}
    else:
        function = {"kind": f.kind.value, "sigma1": f.sigma1, "sigma2": f.sigma2, "scale": f.scale}
    payload = {
        "schema_version": config.schema_version,
        "kernel": config.kernel.to_dict(),
        "function": function,
        "order": config.order.value,
        "n_list": list(config.n_list),
        "t1": config.t1,
        "t2": config.t2,
        "replicates": config.replicates,
        "grid": {"M_lin": config.M_lin, "M_log": config.M_log},
        "assumptions": {
            "gammas": list(config.assumptions.gammas),
            "trials": config.assumptions.trials,
            "kappa_m": list(config.assumptions.kappa_m),
            "ratio_schedule": list(config.assumptions.ratio_schedule),
        },
    }
    if config.root_seed is not None:
        payload["root_seed"] = config.root_seed
    return payload


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(config: RunConfig) -> str:
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Return ``config`` with validated overrides (None values are ignored)."""

    valid_keys = {f.name for f in fields(RunConfig)}
    filtered: dict[str, Any] = {}
    for key, value in overrides.items():
        if key not in valid_keys:
            raise ValueError(f"未知の設定キーです: {key}")
        if value is not None:
            filtered[key] = value
    if not filtered:
        return config
    return replace(config, **filtered)


def default_config_path(name: str) -> Path:
    candidate = Path(name)
    if candidate.exists():
        return candidate
    # fbm_d4 / fbm_d4.json / fbm_d4.cfg はすべて configs/fbm_d4.json
    return DEFAULT_CONFIG_DIR / f"{candidate.stem if candidate.suffix in ('.json', '.cfg') else name}.json"


__all__ = [
    "AssumptionSettings",
    "DEFAULT_CONFIG_DIR",
    "IngestError",
    "RunConfig",
    "SCHEMA_VERSION",
    "apply_overrides",
    "config_hash",
    "config_to_dict",
    "default_config_path",
    "dump_config",
    "load_config",
    "parse_config",
]
