"""Entry point that routes subcommands (simulate / constants / checks) to the toolkit modules."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from assumptions import Assumption, AssumptionError, envelope_schedule, estimate_kappa, sweep_C
from combinatorics import CombinatoricsError, lemma55_identity, verify
from export_report import ExportError, normalize_formats, write_json, write_table
from functional import FunctionalError, diff_gauss
from ingest import IngestError, RunConfig, apply_overrides, config_hash, default_config_path, dump_config, load_config
from kernels import Family, KernelSpec, KernelSpecError, alphas, critical_spec, describe
from limitlaw import (
    LimitLawError,
    LimitLawSpec,
    Order,
    c_fd,
    d_fd,
    first_order_target,
    limit_law,
    remark18_check,
    sample_limit,
    second_order_moment,
)
from montecarlo import ExperimentError, compare_with_limit, run_experiment, trend_table
from sampler import GridError, SamplerError, build_grid, factorize, sample, write_batch
from streams import Stream, resolve_seed, substream

TOOLKIT_VERSION = "0.1.0"
DEFAULT_OUTPUT_ROOT = Path("result")

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

NUMERIC_ERRORS = (
    KernelSpecError,
    GridError,
    SamplerError,
    FunctionalError,
    LimitLawError,
    CombinatoricsError,
    ExperimentError,
    AssumptionError,
    np.linalg.LinAlgError,
)

MOMENT_COLUMNS = ["n", "m", "empirical", "se", "target", "zscore"]
TREND_COLUMNS = ["n", "m", "empirical", "target", "gap"]
RAW_COLUMNS = ["replicate", "n", "t1", "t2", "value"]
CONSTANT_COLUMNS = [
    "d",
    "family",
    "H",
    "K",
    "alpha1",
    "alpha2",
    "lambda",
    "C_fd(mass=1)",
    "D_fd(f)",
    "first_moments(m=1..4)",
    "second_moments(m=2,4)",
]
ASSUMPTION_COLUMNS = ["family", "H", "K", "assumption", "gamma", "trials", "violations", "beta_hat", "kappa_hat"]
ENVELOPE_COLUMNS = ["family", "H", "K", "assumption", "ratio", "trials", "violations", "phi_hat", "slope"]
COMBINATORICS_COLUMNS = ["name", "m", "passed", "detail"]
REMARK18_COLUMNS = ["sigma1", "sigma2", "lhs", "rhs", "rel_err", "note"]
LIMIT_SAMPLE_COLUMNS = ["index", "value"]

logger = logging.getLogger("dispatcher")


@dataclass
class RunManifest:
    version: str
    subcommand: str
    config_hash: str
    root_seed: int | None
    started_at: str
    finished_at: str = ""
    outputs: list[str] = field(default_factory=list)
    config_source: str | None = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _params_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _load_config(args: argparse.Namespace) -> RunConfig | None:
    if not getattr(args, "config", None):
        return None
    config = load_config(default_config_path(args.config))
    return apply_overrides(config, root_seed=args.seed)


def _kernel_from_args(args: argparse.Namespace, config: RunConfig | None) -> KernelSpec:
    if config is not None and not getattr(args, "family", None):
        return config.kernel
    family = getattr(args, "family", None)
    if not family or getattr(args, "d", None) is None:
        raise IngestError("--config か --family/--d のどちらかを指定してください", field="kernel")
    K = args.K if args.K is not None else 1.0
    if args.H is None:
        return critical_spec(family, args.d, K=K)
    return KernelSpec(family=family, H=args.H, K=K, d=args.d)


def _out_dir(args: argparse.Namespace, subcommand: str) -> Path:
    target = Path(args.out_dir) / subcommand
    target.mkdir(parents=True, exist_ok=True)
    return target


def _finish(manifest: RunManifest, out_dir: Path, outputs: list[Path]) -> None:
    manifest.outputs = [str(path) for path in outputs]
    manifest.finished_at = _now()
    path = write_json(out_dir / "manifest.json", asdict(manifest))
    print(f"[dispatcher] manifest: {path}")


def _meta(manifest: RunManifest) -> dict:
    return {
        "subcommand": manifest.subcommand,
        "version": manifest.version,
        "config_hash": manifest.config_hash,
        "root_seed": manifest.root_seed,
        "config": manifest.config_source or "",
    }


# --- subcommands -----------------------------------------------------------------------


def run_simulate(args: argparse.Namespace, config: RunConfig | None) -> int:
    if config is None:
        raise IngestError("simulate には --config が必要です", field="config")
    seed = resolve_seed(config.root_seed)
    manifest = RunManifest(
        version=TOOLKIT_VERSION,
        subcommand="simulate",
        config_hash=config_hash(config),
        root_seed=seed,
        started_at=_now(),
        config_source=config.source,
    )
    formats = normalize_formats(args.formats)
    out_dir = _out_dir(args, "simulate")
    experiment = config.to_experiment(root_seed=seed, workers=args.workers)
    report = run_experiment(experiment)
    print(
        f"[dispatcher] simulate: {len(experiment.n_list)} n × {experiment.replicates} replicates, "
        f"factorizations={report.factorizations}"
    )

    payload = report.to_dict()
    if report.law.lam <= 1.0:
        ks = compare_with_limit(report, max(experiment.replicates, 1000), seed)
        payload["ks_vs_limit"] = {"statistic": ks.statistic, "pvalue": ks.pvalue}

    outputs = write_table(
        out_dir, "moments", report.to_rows(), MOMENT_COLUMNS, formats=formats, payload=payload, meta=_meta(manifest)
    )
    outputs += write_table(out_dir, "trend", trend_table(report), TREND_COLUMNS, formats=("csv",))
    if args.raw:
        raw_rows = [
            {"replicate": index, "n": result.n, "t1": experiment.t1, "t2": experiment.t2, "value": float(value)}
            for result in report.results
            for index, value in enumerate(result.values)
        ]
        outputs += write_table(out_dir, "raw_values", raw_rows, RAW_COLUMNS, formats=("csv",))
    if args.dump_paths:
        n = experiment.n_list[-1]
        grid = build_grid(n, experiment.t_min, experiment.M_lin, experiment.M_log)
        batch = sample(factorize(experiment.spec, grid), experiment.spec.d, 0, seed)
        outputs.append(write_batch(out_dir / f"paths_n{n:g}_rep0.bin", batch))

    for row in report.to_rows():
        if row["m"] == 1:
            print(f"[dispatcher] n={row['n']:g}: mean={row['empirical']:.6g} ± {row['se']:.3g} (target {row['target']:.6g})")
    _finish(manifest, out_dir, outputs)
    return EXIT_OK


def constants_row(spec: KernelSpec, second_f=None, *, t: float = 1.0) -> dict:
    alpha1, alpha2, lam = alphas(spec)
    second_f = second_f or diff_gauss(1.0, 2.0, spec.d)
    C = c_fd(spec.d, alpha2, 1.0)
    first = LimitLawSpec(order=Order.FIRST, lam=lam, t=t, constant=C, d=spec.d)
    D = d_fd(spec.d, alpha2, second_f)
    second = LimitLawSpec(order=Order.SECOND, lam=lam, t=t, constant=D, d=spec.d)
    return {
        "d": spec.d,
        "family": spec.family,
        "H": spec.H,
        "K": spec.K,
        "alpha1": alpha1,
        "alpha2": alpha2,
        "lambda": lam,
        "C_fd(mass=1)": C,
        "D_fd(f)": D,
        "first_moments(m=1..4)": ";".join(repr(first_order_target(first, m)) for m in range(1, 5)),
        "second_moments(m=2,4)": ";".join(repr(second_order_moment(second, m)) for m in (2, 4)),
    }


def run_constants(args: argparse.Namespace, config: RunConfig | None) -> int:
    spec = _kernel_from_args(args, config)
    second_f = None
    t = 1.0
    if config is not None:
        t = min(config.t1, config.t2)
        if config.function.mass == 0.0:
            if config.function.d != spec.d:
                raise IngestError(
                    f"config の関数は d={config.function.d} ですが --d={spec.d} が指定されています",
                    field="function",
                )
            second_f = config.function
    manifest = RunManifest(
        version=TOOLKIT_VERSION,
        subcommand="constants",
        config_hash=config_hash(config) if config else _params_hash(spec.to_dict()),
        root_seed=None,
        started_at=_now(),
        config_source=config.source if config else None,
    )
    print(f"[dispatcher] kernel: {describe(spec)}")
    row = constants_row(spec, second_f, t=t)
    out_dir = _out_dir(args, "constants")
    outputs = write_table(
        out_dir, "constants", [row], CONSTANT_COLUMNS, formats=normalize_formats(args.formats), meta=_meta(manifest)
    )
    print(",".join(CONSTANT_COLUMNS))
    print(",".join(str(row[c]) if not isinstance(row[c], float) else repr(row[c]) for c in CONSTANT_COLUMNS))
    _finish(manifest, out_dir, outputs)
    return EXIT_OK


def run_check_assumptions(args: argparse.Namespace, config: RunConfig | None) -> int:
    spec = _kernel_from_args(args, config)
    settings = config.assumptions if config else None
    gammas = settings.gammas if settings else (2.0, 5.0, 10.0, 100.0)
    trials = args.trials or (settings.trials if settings else 10_000)
    kappa_m = settings.kappa_m if settings else (1, 2, 4, 8)
    ratios = settings.ratio_schedule if settings else (1e-1, 1e-2, 1e-3, 1e-4)
    seed = resolve_seed(args.seed if args.seed is not None else (config.root_seed if config else None))
    manifest = RunManifest(
        version=TOOLKIT_VERSION,
        subcommand="check-assumptions",
        config_hash=config_hash(config) if config else _params_hash(spec.to_dict()),
        root_seed=seed,
        started_at=_now(),
        config_source=config.source if config else None,
    )

    print(f"[dispatcher] kernel: {describe(spec)}")
    reports = []
    for which in (Assumption.C1, Assumption.C2):
        reports.extend(sweep_C(spec, which, gammas, trials, seed))
    for m in kappa_m:
        reports.append(estimate_kappa(spec, m, trials, seed))
    rows = [report.as_row() for report in reports]

    envelope_rows = []
    for which in (Assumption.A1, Assumption.A2):
        sweep = envelope_schedule(spec, which, ratios, trials, seed)
        for report in sweep.reports:
            envelope_rows.append(
                {
                    "family": spec.family,
                    "H": spec.H,
                    "K": spec.K,
                    "assumption": which.value,
                    "ratio": report.gamma,
                    "trials": report.trials,
                    "violations": report.violations + sweep.shrink_violations,
                    "phi_hat": report.empirical_constant,
                    "slope": sweep.slope,
                }
            )

    out_dir = _out_dir(args, "check-assumptions")
    formats = normalize_formats(args.formats)
    outputs = write_table(out_dir, "assumptions", rows, ASSUMPTION_COLUMNS, formats=formats, meta=_meta(manifest))
    outputs += write_table(out_dir, "envelopes", envelope_rows, ENVELOPE_COLUMNS, formats=("csv",))

    total = sum(report.violations for report in reports)
    for report in reports:
        status = "PASS" if report.violations == 0 else "FAIL"
        label = f"m={report.extra.get('m')}" if report.assumption == Assumption.B else f"gamma={report.gamma:g}"
        print(
            f"[dispatcher] {report.assumption.value} {label}: {status} "
            f"(trials={report.trials}, violations={report.violations}, value={report.empirical_constant:.4g})"
        )
    if total:
        logger.warning("仮定チェックで違反が %d 件ありました", total)
    _finish(manifest, out_dir, outputs)
    return EXIT_OK


def run_limit_sample(args: argparse.Namespace, config: RunConfig | None) -> int:
    if config is None:
        raise IngestError("limit-sample には --config が必要です", field="config")
    seed = resolve_seed(config.root_seed)
    law = limit_law(config.kernel, config.function, config.order, min(config.t1, config.t2))
    manifest = RunManifest(
        version=TOOLKIT_VERSION,
        subcommand="limit-sample",
        config_hash=config_hash(config),
        root_seed=seed,
        started_at=_now(),
        config_source=config.source,
    )
    draws = sample_limit(law, args.count, seed)
    rows = [{"index": index, "value": float(value)} for index, value in enumerate(draws)]
    out_dir = _out_dir(args, "limit-sample")
    outputs = write_table(out_dir, "limit_samples", rows, LIMIT_SAMPLE_COLUMNS, formats=("csv",))
    print(
        f"[dispatcher] limit-sample: order={law.order.value} lambda={law.lam:.6g} "
        f"constant={law.constant:.6g} count={args.count} mean={float(np.mean(draws)) if len(draws) else float('nan'):.6g}"
    )
    _finish(manifest, out_dir, outputs)
    return EXIT_OK


def run_combinatorics_verify(args: argparse.Namespace, config: RunConfig | None) -> int:
    seed = resolve_seed(args.seed)
    manifest = RunManifest(
        version=TOOLKIT_VERSION,
        subcommand="combinatorics-verify",
        config_hash=_params_hash({"m": args.m, "trials": args.trials}),
        root_seed=seed,
        started_at=_now(),
    )
    rng = substream(seed, Stream.COMBINATORICS, args.m)
    results = verify(args.m, rng=rng, trials=args.trials or 1000)
    for A in ("1", "2", "1/2", "7/3"):
        lhs, rhs, equal = lemma55_identity(args.m, A)
        relation = "=" if equal else "!="
        print(f"lemma55: {'PASS' if equal else 'FAIL'} ({lhs} {relation} {rhs} at A={A})")
    for result in results:
        if result.name == "lemma55_identity":
            continue
        status = "PASS" if result.passed else "FAIL"
        print(f"{result.name}: {status} ({result.detail})" if result.detail else f"{result.name}: {status}")

    rows = [asdict(result) for result in results]
    out_dir = _out_dir(args, "combinatorics-verify")
    outputs = write_table(
        out_dir, "combinatorics", rows, COMBINATORICS_COLUMNS, formats=normalize_formats(args.formats), meta=_meta(manifest)
    )
    _finish(manifest, out_dir, outputs)
    return EXIT_OK if all(result.passed for result in results) else EXIT_NUMERIC


def _parse_pair(text: str) -> tuple[float, float]:
    try:
        first, second = (float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"'sigma1,sigma2' 形式で指定してください: {text}") from exc
    return first, second


def run_remark18(args: argparse.Namespace, config: RunConfig | None) -> int:
    pairs = args.pairs or [(1.0, 2.0), (1.0, 3.0)]
    manifest = RunManifest(
        version=TOOLKIT_VERSION,
        subcommand="remark18",
        config_hash=_params_hash({"pairs": [list(p) for p in pairs], "tol": args.tol}),
        root_seed=None,
        started_at=_now(),
    )
    rows = []
    for sigma1, sigma2 in pairs:
        result = remark18_check(diff_gauss(sigma1, sigma2, 4), args.tol)
        rows.append(
            {
                "sigma1": sigma1,
                "sigma2": sigma2,
                "lhs": result.lhs,
                "rhs": result.rhs,
                "rel_err": result.rel_err,
                "note": result.note,
            }
        )
        status = "PASS" if result.passed else "FAIL"
        print(f"[dispatcher] remark18 ({sigma1:g},{sigma2:g}): {status} lhs={result.lhs:.8g} rhs={result.rhs:.8g} rel_err={result.rel_err:.2e}")
    out_dir = _out_dir(args, "remark18")
    outputs = write_table(
        out_dir, "remark18", rows, REMARK18_COLUMNS, formats=normalize_formats(args.formats), meta=_meta(manifest)
    )
    _finish(manifest, out_dir, outputs)
    return EXIT_OK


SUBCOMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig | None], int]] = {
    "simulate": run_simulate,
    "constants": run_constants,
    "check-assumptions": run_check_assumptions,
    "limit-sample": run_limit_sample,
    "combinatorics-verify": run_combinatorics_verify,
    "remark18": run_remark18,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="root seed（未指定時は OS エントロピーから採番してログに出す）")
    common.add_argument("--out-dir", type=Path, default=DEFAULT_OUTPUT_ROOT, help="出力ルート（result/<subcommand>/ に保存）")
    common.add_argument("--config", default=None, help="configs/*.json のパスまたは名前（例: fbm_d4）")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="レプリケート並列数")
    common.add_argument(
        "--formats",
        nargs="+",
        default=["csv", "json"],
        help="出力形式（csv json xlsx から複数指定可）",
    )
    common.add_argument("--dump-config", action="store_true", help="正規化した config を標準出力に出して終了")
    common.add_argument("--verbose", action="store_true", help="DEBUG ログを出す")

    kernel = argparse.ArgumentParser(add_help=False)
    kernel.add_argument("--family", choices=[f.value for f in Family], default=None)
    kernel.add_argument("--H", type=float, default=None, help="未指定なら h_eff·d = 2 となる臨界値")
    kernel.add_argument("--K", type=float, default=None)
    kernel.add_argument("--d", type=int, default=None)

    parser = argparse.ArgumentParser(prog="dispatcher.py", description="臨界ケース Gaussian functional の検証ツールキット")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo でモーメントを推定")
    simulate.add_argument("--raw", action="store_true", help="raw_values.csv も出力")
    simulate.add_argument("--dump-paths", action="store_true", help="最大 n のレプリケート 0 のパスをバイナリ出力")

    sub.add_parser("constants", parents=[common, kernel], help="α₁, α₂, λ, C_{f,d}, D_{f,d} とモーメント表")

    check = sub.add_parser("check-assumptions", parents=[common, kernel], help="(A1)(A2)(B)(C1)(C2) の数値確認")
    check.add_argument("--trials", type=int, default=None)

    limit = sub.add_parser("limit-sample", parents=[common], help="極限分布から直接サンプル")
    limit.add_argument("--count", type=int, default=10_000)

    comb = sub.add_parser("combinatorics-verify", parents=[common], help="置換まわりの恒等式を全列挙で確認")
    comb.add_argument("--m", type=int, default=4)
    comb.add_argument("--trials", type=int, default=None)

    remark = sub.add_parser("remark18", parents=[common], help="R⁴ の対数核恒等式の数値確認")
    remark.add_argument("--pairs", type=_parse_pair, nargs="+", default=None, help="sigma1,sigma2 の組（例: 1,2 1,3）")
    remark.add_argument("--tol", type=float, default=1e-2)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(name)s] %(message)s",
    )
    try:
        config = _load_config(args)
        if args.dump_config:
            if config is None:
                raise IngestError("--dump-config には --config が必要です", field="config")
            sys.stdout.write(dump_config(config))
            return EXIT_OK
        if args.workers < 1:
            raise IngestError(f"--workers は 1 以上: {args.workers}", field="workers")
        return SUBCOMMANDS[args.subcommand](args, config)
    except (IngestError, ExportError) as exc:
        print(f"[dispatcher] エラー: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"[dispatcher] エラー: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
