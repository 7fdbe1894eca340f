"""Command line front end for bivex.

Subcommands:
- rate:   J (right scale) or I (large scale), case label, minimizer, regime
- sharp:  (b, c, K) and the finite-n sharp ratio for each a_n
- oracle: exact tail, single-index tail and inclusion-exclusion pieces
- mc:     naive / importance-sampling tail estimates, index coincidence
- verify: the named convergence criteria, pass/fail per row

Grid flags (--rho, --u1, --u2, --an, --n, --logn) are repeatable and
swept as a cartesian product. Values can also come from a flat
`key = value` config file (--config); flags override the file.

Exit codes: 0 success, 1 a verify criterion failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

import bivex.tracing as tracing
from bivex import config, formatters
from bivex.errors import DegenerateCorrelation, InvalidThreshold, UnsortedThreshold, UsageError
from bivex.exact_oracle import ScalingSequence, exists_single_index_tail, sharp_ratio, union_sum
from bivex.gaussian_core import CorrelationStructure
from bivex.monte_carlo import EstimatorMethod, estimate_tail_is, estimate_tail_naive, index_coincidence
from bivex.rate_functions import (
    Scale,
    Threshold,
    rate_I,
    rate_J,
    regime_classify,
    sharp_constants,
    standardize,
)
from bivex.verify import VERIFY_COLUMNS, CRITERIA, VerifySettings, all_passed, run_verify

INVALID_RIGHT_SCALE = "u ≤ √2·σ"

RATE_COLUMNS = [
    "scale", "rho", "sigma1", "sigma2", "u1", "u2", "rate", "case", "minimizer1", "minimizer2",
    "one_index", "two_index", "regime", "status", "reason",
]
SHARP_COLUMNS = [
    "rho", "u1", "u2", "n", "log_n", "a_n", "b", "c", "k", "k_published", "k_row", "rate", "case",
    "log_T", "ratio", "ratio_over_k", "status", "reason",
]
ORACLE_COLUMNS = [
    "scale", "rho", "u1", "u2", "n", "log_n", "a_n", "v1", "v2", "log_T", "normalized_log_T",
    "reference_rate", "log_single", "normalized_log_single", "log_S_unequal", "log_S_equal", "log_e_n",
    "dominant", "status", "reason",
]
MC_COLUMNS = [
    "method", "rho", "u1", "u2", "a_n", "v1", "v2", "n", "trials", "seed", "log_p", "std_err_log",
    "hits", "ess", "flag",
]
COINCIDENCE_COLUMNS = [
    "method", "rho", "u1", "u2", "a_n", "n", "trials", "seed", "p_distinct", "std_err",
    "conditioning_hits", "flag",
]


@dataclass
class SweepConfig:
    """Resolved sweep parameters after merging config file values and flags."""

    rho_grid: List[float] = field(default_factory=lambda: [0.0])
    u_grid: List[Tuple[float, float]] = field(default_factory=lambda: [(2.0, 2.0)])
    sigma: Tuple[float, float] = (1.0, 1.0)
    scale: Scale = Scale.RIGHT
    n_values: List[int] = field(default_factory=list)
    log_n_values: List[float] = field(default_factory=list)
    a_n_values: List[float] = field(default_factory=list)
    trials: int = 100_000
    seed: int = 1
    method: EstimatorMethod = EstimatorMethod.NAIVE
    coincidence: bool = False
    sort: bool = False
    output_format: str = formatters.CSV
    output_path: Optional[str] = None
    threads: Optional[int] = None
    criteria: List[str] = field(default_factory=list)
    quick: bool = False

    def counts(self, default_n: Optional[int] = None) -> List[Tuple[Optional[int], float]]:
        """(n, log n) pairs; n is None for counts given only as log n."""
        out: List[Tuple[Optional[int], float]] = [(n, math.log(n)) for n in self.n_values]
        out += [(None, ln) for ln in self.log_n_values]
        if not out and default_n is not None:
            out = [(default_n, math.log(default_n))]
        return out


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Flat key = value config file; flags override its values")
    p.add_argument("--format", choices=formatters.FORMATS, help="Output format (default: csv)")
    p.add_argument("--out", help="Output file path (default: stdout)")
    p.add_argument("--silent", action="store_true", help="Log to file only, no console trace output")
    p.add_argument("--threads", type=int, help="Worker count (overrides BIVEX_THREADS)")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho", type=float, action="append", help="Correlation; repeatable")
    p.add_argument("--u1", type=float, action="append", help="First threshold coordinate; repeatable")
    p.add_argument("--u2", type=float, action="append", help="Second threshold coordinate; repeatable")


def _add_counts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, action="append", help="Sample size; repeatable")
    p.add_argument("--logn", type=float, action="append", help="Natural log of the sample size; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bivex",
        description="Rate functions, sharp asymptotics and oracles for maxima of bivariate Gaussian samples",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="Right-scale J(u) or large-scale I(u) per grid point")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--sigma1", type=float, help="Standard deviation of coordinate 1 (default 1)")
    p.add_argument("--sigma2", type=float, help="Standard deviation of coordinate 2 (default 1)")
    p.add_argument("--scale", choices=[s.value for s in Scale], help="right (default) or large")

    p = sub.add_parser("sharp", help="Sharp constants (b, c, K) and finite-n sharp ratios")
    _add_common(p)
    _add_grid(p)
    _add_counts(p)
    p.add_argument("--an", type=float, action="append", help="Threshold scale a_n; repeatable")
    p.add_argument("--sort", action="store_true", help="Swap coordinates when u2 > u1 instead of failing")

    p = sub.add_parser("oracle", help="Exact tail, single-index tail and inclusion-exclusion terms")
    _add_common(p)
    _add_grid(p)
    _add_counts(p)
    p.add_argument("--an", type=float, action="append", help="Threshold scale a_n (large scale); repeatable")
    p.add_argument("--scale", choices=[s.value for s in Scale], help="right: a_n = sqrt(log n); large: use --an")

    p = sub.add_parser("mc", help="Monte Carlo tail or index-coincidence estimates")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--n", type=int, action="append", help="Sample size; repeatable")
    p.add_argument("--an", type=float, action="append", help="Threshold scale (v = a_n u, default 1); repeatable")
    p.add_argument("--trials", type=int, help="Number of trials (default 100000)")
    p.add_argument("--seed", type=int, help="Seed of the random streams (default 1)")
    p.add_argument("--method", choices=["naive", "is"], help="Estimator (default naive)")
    p.add_argument("--coincidence", action="store_true", help="Estimate P(I* != J* | event) instead of the tail")

    p = sub.add_parser("verify", help="Run convergence criteria and report pass/fail rows")
    _add_common(p)
    p.add_argument("--criterion", action="append", choices=list(CRITERIA), help="Criterion to run; repeatable (default all)")
    p.add_argument("--logn", type=float, help="log n of the right-scale criteria T1 and P1 (default 46)")
    p.add_argument("--seed", type=int, help="Seed of the Monte Carlo criteria")
    p.add_argument("--quick", action="store_true", help="Smaller sweeps")

    return parser


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def resolve_sweep(args: argparse.Namespace) -> SweepConfig:
    """Merge defaults, config file values and flags (in increasing priority)."""
    file_values: Dict[str, str] = config.load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(flag: Optional[Any], key: str, parse: Callable[[str], Any], default: Any) -> Any:
        if flag is not None and flag is not False:
            return flag
        if key in file_values:
            try:
                return parse(file_values[key])
            except ValueError:
                raise UsageError(f"config value for '{key}' is invalid: {file_values[key]!r}")
        return default

    cfg = SweepConfig()
    cfg.rho_grid = pick(getattr(args, "rho", None), "rho", _floats, cfg.rho_grid)
    u1s = pick(getattr(args, "u1", None), "u1", _floats, [2.0])
    u2s = pick(getattr(args, "u2", None), "u2", _floats, [2.0])
    cfg.u_grid = list(itertools.product(u1s, u2s))
    cfg.sigma = (
        pick(getattr(args, "sigma1", None), "sigma1", float, 1.0),
        pick(getattr(args, "sigma2", None), "sigma2", float, 1.0),
    )
    cfg.scale = Scale(pick(getattr(args, "scale", None), "scale", str, Scale.RIGHT.value))
    cfg.n_values = pick(getattr(args, "n", None), "n", _ints, [])
    cfg.log_n_values = pick(getattr(args, "logn", None) if args.command != "verify" else None, "logn", _floats, [])
    if "log10_n" in file_values and not cfg.log_n_values:
        cfg.log_n_values = [x * math.log(10.0) for x in _floats(file_values["log10_n"])]
    cfg.a_n_values = pick(getattr(args, "an", None), "an", _floats, [])
    cfg.trials = pick(getattr(args, "trials", None), "trials", int, cfg.trials)
    cfg.seed = pick(getattr(args, "seed", None), "seed", int, cfg.seed)
    cfg.method = EstimatorMethod.parse(pick(getattr(args, "method", None), "method", str, "naive"))
    cfg.coincidence = pick(getattr(args, "coincidence", None), "coincidence", _bool, False)
    cfg.sort = pick(getattr(args, "sort", None), "sort", _bool, False)
    cfg.output_format = pick(getattr(args, "format", None), "format", str, formatters.CSV)
    cfg.output_path = pick(getattr(args, "out", None), "out", str, None)
    cfg.threads = pick(getattr(args, "threads", None), "threads", int, None)
    cfg.criteria = pick(getattr(args, "criterion", None), "criterion", lambda s: [c.strip() for c in s.split(",") if c.strip()], [])
    cfg.quick = pick(getattr(args, "quick", None), "quick", _bool, False)

    if cfg.output_format not in formatters.FORMATS:
        raise UsageError(f"Unsupported output format: {cfg.output_format}. Use 'csv' or 'json'")
    if any(n < 1 for n in cfg.n_values):
        raise UsageError("--n must be a positive integer")
    if any(not (math.isfinite(x) and x >= 0) for x in cfg.log_n_values):
        raise UsageError("--logn must be finite and >= 0")
    if any(not (math.isfinite(a) and a > 0) for a in cfg.a_n_values):
        raise UsageError("--an must be positive")
    if cfg.trials < 1:
        raise UsageError("--trials must be at least 1")
    if cfg.seed < 0:
        raise UsageError("--seed must be non-negative")
    return cfg


# ---------------------------------------------------------------------------
# grid evaluation


def _map_grid(fn: Callable[[Any], List[Dict[str, Any]]], points: Sequence[Any], workers: Optional[int]) -> List[Dict[str, Any]]:
    """Evaluate grid points in parallel; rows come back in grid order."""
    workers = min(config.resolve_workers(workers), max(len(points), 1))
    if workers <= 1:
        results = [fn(p) for p in points]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(fn, points))
    return [row for rows in results for row in rows]


def _skip(row: Dict[str, Any], reason: str) -> Dict[str, Any]:
    row.update(status="skipped", reason=reason)
    return row


def cmd_rate(cfg: SweepConfig) -> List[Dict[str, Any]]:
    sigma1, sigma2 = cfg.sigma
    points = [(rho, u) for rho in cfg.rho_grid for u in cfg.u_grid]

    def evaluate(point: Tuple[float, Tuple[float, float]]) -> List[Dict[str, Any]]:
        rho, (u1, u2) = point
        row: Dict[str, Any] = {"scale": cfg.scale, "rho": rho, "sigma1": sigma1, "sigma2": sigma2, "u1": u1, "u2": u2}
        try:
            corr = CorrelationStructure(sigma1, sigma2, rho)
            u = Threshold(u1, u2)
            if cfg.scale == Scale.RIGHT:
                if not u.is_right_scale_valid(corr):
                    return [_skip(row, INVALID_RIGHT_SCALE)]
                res = rate_J(u, corr)
            else:
                res = rate_I(standardize(u, corr), rho)
            regime = regime_classify(u, corr, cfg.scale)
        except (DegenerateCorrelation, InvalidThreshold) as e:
            return [_skip(row, str(e))]
        row.update(
            rate=res.value,
            case=res.case_label,
            minimizer1=res.minimizer[0] * (sigma1 if cfg.scale == Scale.LARGE else 1.0),
            minimizer2=res.minimizer[1] * (sigma2 if cfg.scale == Scale.LARGE else 1.0),
            one_index=res.one_index,
            two_index=res.two_index,
            regime=regime,
            status="ok",
        )
        return [row]

    return _map_grid(evaluate, points, cfg.threads)


def _sorted_threshold(u1: float, u2: float, sort: bool) -> Threshold:
    u = Threshold(u1, u2)
    if u.is_sorted:
        return u
    if not sort:
        raise UsageError(f"thresholds must satisfy u2 ≤ u1 (got u1={u1}, u2={u2}); pass --sort to swap them")
    return u.sorted()


def cmd_sharp(cfg: SweepConfig) -> List[Dict[str, Any]]:
    thresholds = [_sorted_threshold(u1, u2, cfg.sort) for u1, u2 in cfg.u_grid]
    a_values = cfg.a_n_values or [4.0, 6.0, 8.0]
    points = [(rho, u, c, a) for rho in cfg.rho_grid for u in thresholds for c in cfg.counts(1000) for a in a_values]

    def evaluate(point: Tuple[float, Threshold, Tuple[Optional[int], float], float]) -> List[Dict[str, Any]]:
        rho, u, (n, log_n), a_n = point
        row: Dict[str, Any] = {"rho": rho, "u1": u.u1, "u2": u.u2, "n": n, "log_n": log_n, "a_n": a_n}
        try:
            sc = sharp_constants(u, rho)
            ratio = sharp_ratio(n, a_n, u, rho, log_n=None if n is not None else log_n)
        except (DegenerateCorrelation, InvalidThreshold) as e:
            return [_skip(row, str(e))]
        row.update(
            b=sc.b,
            c=sc.c,
            k=sc.k,
            k_published=sc.k_published,
            k_row=sc.row,
            rate=sc.rate,
            case=sc.regime,
            log_T=math.log(ratio) - sc.b * math.log(a_n) + sc.c * log_n - a_n * a_n * sc.rate if ratio > 0 else -math.inf,
            ratio=ratio,
            ratio_over_k=ratio / sc.k,
            status="ok",
        )
        return [row]

    return _map_grid(evaluate, points, cfg.threads)


def _scaling(scale: Scale, n: Optional[int], log_n: float, a_n: Optional[float]) -> ScalingSequence:
    count: Dict[str, Any] = {"n": n} if n is not None else {"log_n": log_n}
    if scale == Scale.RIGHT:
        return ScalingSequence.right_scale(**count)
    return ScalingSequence.explicit(a_n if a_n is not None else math.sqrt(log_n), **count)


def cmd_oracle(cfg: SweepConfig) -> List[Dict[str, Any]]:
    counts = cfg.counts(1000)
    a_values: List[Optional[float]] = list(cfg.a_n_values) if cfg.scale == Scale.LARGE and cfg.a_n_values else [None]
    points = [
        (rho, u, n, log_n, a_n)
        for rho in cfg.rho_grid
        for u in cfg.u_grid
        for n, log_n in counts
        for a_n in a_values
    ]

    def evaluate(point: Tuple[float, Tuple[float, float], Optional[int], float, Optional[float]]) -> List[Dict[str, Any]]:
        rho, (u1, u2), n, log_n, a_n = point
        row: Dict[str, Any] = {"scale": cfg.scale, "rho": rho, "u1": u1, "u2": u2, "n": n, "log_n": log_n, "a_n": a_n}
        try:
            seq = _scaling(cfg.scale, n, log_n, a_n)
        except ValueError as e:
            return [_skip(row, str(e))]
        a_n = seq.a_n
        row["a_n"] = a_n
        count = seq.count_kwargs()
        try:
            u = Threshold(u1, u2)
            corr = CorrelationStructure.standard(rho)
            if cfg.scale == Scale.RIGHT:
                if not u.is_right_scale_valid(corr):
                    return [_skip(row, INVALID_RIGHT_SCALE)]
                reference = rate_J(u, corr).value
                speed = log_n
            else:
                reference = -rate_I(u.sorted(), rho).value
                speed = a_n * a_n
            d = union_sum(a_n=a_n, u=u, rho=rho, **count)
            log_single = exists_single_index_tail(v=u.scaled(a_n), rho=rho, **count)
        except (DegenerateCorrelation, InvalidThreshold) as e:
            return [_skip(row, str(e))]
        row.update(
            v1=a_n * u1,
            v2=a_n * u2,
            log_T=d.log_T,
            normalized_log_T=d.log_T / speed if speed > 0 else None,
            reference_rate=reference,
            log_single=log_single,
            normalized_log_single=log_single / speed if speed > 0 else None,
            log_S_unequal=d.log_S_unequal,
            log_S_equal=d.log_S_equal,
            log_e_n=d.log_e_n,
            dominant=d.dominant,
            status="ok",
        )
        return [row]

    return _map_grid(evaluate, points, cfg.threads)


def cmd_mc(cfg: SweepConfig) -> List[Dict[str, Any]]:
    rows: List[Dict[str, Any]] = []
    a_values = cfg.a_n_values or [1.0]
    n_values = cfg.n_values or [100]
    # Estimators parallelize over trial blocks, so grid points run in order.
    for rho in cfg.rho_grid:
        for u1, u2 in cfg.u_grid:
            for n in n_values:
                for a_n in a_values:
                    u = Threshold(u1, u2)
                    row: Dict[str, Any] = {
                        "method": cfg.method, "rho": rho, "u1": u1, "u2": u2, "a_n": a_n,
                        "n": n, "trials": cfg.trials, "seed": cfg.seed,
                    }
                    try:
                        if cfg.coincidence:
                            est = index_coincidence(n, a_n, u, rho, cfg.trials, cfg.seed, cfg.method, cfg.threads)
                            row.update(
                                method=est.method, p_distinct=est.p_distinct, std_err=est.std_err,
                                conditioning_hits=est.conditioning_hits, flag=est.flag,
                            )
                        else:
                            estimator = estimate_tail_is if cfg.method == EstimatorMethod.IMPORTANCE_SAMPLING else estimate_tail_naive
                            est = estimator(n, u.scaled(a_n), rho, cfg.trials, cfg.seed, cfg.threads)
                            row.update(
                                method=est.method, v1=a_n * u1, v2=a_n * u2, log_p=est.log_p,
                                std_err_log=est.std_err_log, hits=est.hits, ess=est.ess, flag=est.flag,
                            )
                    except (DegenerateCorrelation, InvalidThreshold) as e:
                        row["flag"] = f"skipped: {e}"
                    if row.get("flag"):
                        tracing.trace_print(f"Warning: {row['flag']} at rho={rho}, u=({u1}, {u2}), n={n}, a_n={a_n}")
                    rows.append(row)
    return rows


def cmd_verify(cfg: SweepConfig, log_n: Optional[float]) -> List[Dict[str, Any]]:
    settings = VerifySettings(seed=cfg.seed, workers=cfg.threads)
    if cfg.quick:
        settings = settings.quick()
    if log_n is not None:
        settings = replace(settings, right_log_n=log_n, right_log_n_next=max(100.0, 2.0 * log_n))
    return run_verify(cfg.criteria or None, settings)


# ---------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    tracing.set_silent(args.silent)
    try:
        cfg = resolve_sweep(args)
        tracing.log_result(cfg, label=f"bivex {args.command}: resolved sweep")
        if args.command == "rate":
            rows, columns = cmd_rate(cfg), RATE_COLUMNS
        elif args.command == "sharp":
            rows, columns = cmd_sharp(cfg), SHARP_COLUMNS
        elif args.command == "oracle":
            rows, columns = cmd_oracle(cfg), ORACLE_COLUMNS
        elif args.command == "mc":
            rows, columns = cmd_mc(cfg), COINCIDENCE_COLUMNS if cfg.coincidence else MC_COLUMNS
        else:
            rows, columns = cmd_verify(cfg, args.logn), VERIFY_COLUMNS
    except (UsageError, UnsortedThreshold, ValueError) as e:
        tracing.trace_print(f"Error: {e}")
        return 2

    formatters.write_rows(rows, columns, cfg.output_format, cfg.output_path)
    if cfg.output_path:
        tracing.trace_print(f"Wrote {len(rows)} rows to {cfg.output_path}", log_only=True)

    if args.command == "verify" and not all_passed(rows):
        failed = [r for r in rows if not r["pass"]]
        tracing.trace_print(f"{len(failed)} of {len(rows)} verification rows failed")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
