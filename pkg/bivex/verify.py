"""Convergence and consistency checks, run as named criteria.

Each criterion returns report rows with the columns in VERIFY_COLUMNS. A
row passes when |observed - expected| <= tolerance unless the criterion
documents another comparison (for "shrinks" rows the tolerance is the gap
measured at the previous, smaller scale).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from bivex import tracing
from bivex.exact_oracle import (
    exact_max_tail,
    exists_single_index_tail,
    laplace_prefactor_check,
    laplace_prefactor_limit,
    sharp_ratio,
    union_sum,
)
from bivex.gaussian_core import CorrelationStructure, bvn_upper_tail, std_normal_tail
from bivex.monte_carlo import (
    block_rng,
    estimate_tail_is,
    estimate_tail_naive,
    index_coincidence,
)
from bivex.rate_functions import (
    Regime,
    Scale,
    Threshold,
    brute_force_qp,
    essinf_qp,
    kkt_residual,
    rate_I,
    rate_J,
    regime_classify,
    sharp_constants,
)

VERIFY_COLUMNS = ["criterion", "parameters", "expected", "observed", "tolerance", "pass"]

Row = Dict[str, object]


@dataclass(frozen=True)
class VerifySettings:
    """Sizes of the verification sweeps. quick() shrinks them for unit tests."""

    seed: int = 1
    workers: Optional[int] = None
    qp_points: int = 1000
    right_log_n: float = 46.0
    right_log_n_next: float = 100.0
    naive_trials: int = 100_000
    is_trials: int = 20_000
    coincidence_n: int = 1_000_000
    coincidence_trials: int = 600
    calibration_points: int = 20

    def quick(self) -> "VerifySettings":
        return replace(
            self,
            qp_points=100,
            naive_trials=20_000,
            is_trials=4_000,
            coincidence_n=10_000,
            coincidence_trials=1_000,
            calibration_points=4,
        )


def _params(**kwargs: object) -> str:
    parts = []
    for k, v in kwargs.items():
        if isinstance(v, float):
            v = repr(v)
        elif isinstance(v, tuple):
            v = "(" + ",".join(repr(float(x)) for x in v) + ")"
        parts.append(f"{k}={v}")
    return ";".join(parts)


def _row(criterion: str, parameters: str, expected: float, observed: float, tolerance: float, passed: Optional[bool] = None) -> Row:
    if passed is None:
        passed = math.isfinite(observed) and abs(observed - expected) <= tolerance
    return {
        "criterion": criterion,
        "parameters": parameters,
        "expected": expected,
        "observed": observed,
        "tolerance": tolerance,
        "pass": bool(passed),
    }


def _rel_err(log_value: float, log_ref: float) -> float:
    return abs(math.expm1(log_value - log_ref))


# ---------------------------------------------------------------------------
# criteria


def check_qp(settings: VerifySettings) -> List[Row]:
    """Closed-form QP against the grid + L-BFGS-B oracle on random (rho, u)."""
    rng = block_rng(settings.seed, 0)
    worst_value = 0.0
    worst_kkt = 0.0
    for _ in range(settings.qp_points):
        rho = float(rng.uniform(-0.95, 0.95))
        u = Threshold(float(rng.uniform(0.1, 4.0)), float(rng.uniform(0.1, 4.0)))
        corr = CorrelationStructure.standard(rho)
        closed = essinf_qp(u, corr)
        brute = brute_force_qp(u, corr)
        worst_value = max(worst_value, abs(closed.value - brute.value))
        worst_kkt = max(worst_kkt, kkt_residual(closed, u, corr))
    params = _params(points=settings.qp_points, seed=settings.seed)
    return [
        _row("QP", params + ";check=value", 0.0, worst_value, 1e-8),
        _row("QP", params + ";check=kkt", 0.0, worst_kkt, 1e-10),
    ]


ARCSIN_RHOS = (-0.9, -0.5, 0.25, 0.5, 0.9)


def check_quadrature(settings: VerifySettings) -> List[Row]:
    """Orthant probabilities: independence product and the arcsin identity."""
    grid = np.linspace(-3.0, 8.0, 10)
    worst = 0.0
    for a in grid:
        for b in grid:
            ref = std_normal_tail(a) + std_normal_tail(b)
            worst = max(worst, _rel_err(bvn_upper_tail(a, b, 0.0), ref))
    rows = [_row("QUAD", _params(rho=0.0, grid="10x10"), 0.0, worst, 1e-12)]
    for rho in ARCSIN_RHOS:
        expected = 0.25 + math.asin(rho) / (2.0 * math.pi)
        observed = math.exp(bvn_upper_tail(0.0, 0.0, rho))
        rows.append(_row("QUAD", _params(rho=rho, a=0.0, b=0.0), expected, observed, 1e-10 * expected))
    return rows


LAPLACE_POINTS = ((0.5, (2.0, 2.0)), (0.0, (2.0, 1.0)), (0.3, (1.5, 1.2)))


def check_laplace(settings: VerifySettings) -> List[Row]:
    rows = []
    for rho, (u1, u2) in LAPLACE_POINTS:
        u = Threshold(u1, u2)
        limit = laplace_prefactor_limit(u, rho)
        gap4 = abs(laplace_prefactor_check(4.0, u, rho) / limit - 1.0)
        gap8 = abs(laplace_prefactor_check(8.0, u, rho) / limit - 1.0)
        rows.append(_row("LAPLACE", _params(rho=rho, u=(u1, u2), a_n=8.0, check="relative_gap"), 0.0, gap8, 0.05))
        rows.append(_row("LAPLACE", _params(rho=rho, u=(u1, u2), a_n=8.0, check="shrinks_from_a_n_4"), 0.0, gap8, gap4, gap8 < gap4))
    return rows


SHARP_POINTS = (
    (-0.5, (2.0, 1.0)),
    (0.0, (2.0, 1.0)),
    (-0.5, (2.0, 2.0)),
    (0.8, (2.0, 1.0)),
    (0.5, (2.0, 1.0)),
    (0.5, (2.0, 2.0)),
)


def check_sharp(settings: VerifySettings) -> List[Row]:
    rows = []
    n, a_n = 1000, 8.0
    for rho, (u1, u2) in SHARP_POINTS:
        u = Threshold(u1, u2)
        sc = sharp_constants(u, rho)
        ratio = sharp_ratio(n, a_n, u, rho)
        rows.append(_row("T3", _params(rho=rho, u=(u1, u2), n=n, a_n=a_n, row=sc.row), 1.0, ratio / sc.k, 0.1))
    return rows


LARGE_RHOS = (-0.5, 0.0, 0.5)
LARGE_US = ((2.0, 1.0), (2.0, 2.0), (3.0, 2.0))


def check_large_scale(settings: VerifySettings) -> List[Row]:
    rows = []
    n = 1000
    for rho in LARGE_RHOS:
        for u1, u2 in LARGE_US:
            u = Threshold(u1, u2)
            rate = rate_I(u, rho).value
            gaps = {}
            for a_n in (10.0, 14.0):
                gaps[a_n] = abs(exact_max_tail(n, u.scaled(a_n), rho) / (a_n * a_n) + rate)
            rows.append(_row("T2", _params(rho=rho, u=(u1, u2), n=n, a_n=10.0), 0.0, gaps[10.0], 0.08))
            tol = max(gaps[10.0], 0.01)
            rows.append(
                _row("T2", _params(rho=rho, u=(u1, u2), n=n, a_n=14.0, check="shrinks"), 0.0, gaps[14.0], tol, gaps[14.0] < tol)
            )
    return rows


RIGHT_RHOS = (-0.5, 0.0, 0.5, 0.9)
RIGHT_US = ((1.6, 1.6), (2.0, 1.5), (2.5, 2.0))


def right_scale_grid() -> List[Tuple[float, Threshold]]:
    grid = [(rho, Threshold(*u)) for rho in RIGHT_RHOS for u in RIGHT_US]
    grid.append((0.9, Threshold(2.5, 1.6)))
    return grid


RIGHT_TOLERANCE = 0.2


def _right_rows(criterion: str, settings: VerifySettings, log_tail: Callable, reference: Callable) -> List[Row]:
    rows = []
    for rho, u in right_scale_grid():
        expected = reference(u, rho)
        gaps = []
        for log_n in (settings.right_log_n, settings.right_log_n_next):
            observed = log_tail(log_n, u.scaled(math.sqrt(log_n)), rho) / log_n
            gaps.append((log_n, observed, abs(observed - expected)))
        (ln0, obs0, gap0), (ln1, obs1, gap1) = gaps
        rows.append(_row(criterion, _params(rho=rho, u=(u.u1, u.u2), log_n=ln0), expected, obs0, RIGHT_TOLERANCE))
        rows.append(_row(criterion, _params(rho=rho, u=(u.u1, u.u2), log_n=ln1, check="shrinks"), expected, obs1, gap0, gap1 < gap0))
    return rows


def check_right_scale(settings: VerifySettings) -> List[Row]:
    return _right_rows(
        "T1",
        settings,
        lambda log_n, v, rho: exact_max_tail(None, v, rho, log_n=log_n),
        lambda u, rho: rate_J(u, CorrelationStructure.standard(rho)).value,
    )


def check_single_index(settings: VerifySettings) -> List[Row]:
    return _right_rows(
        "P1",
        settings,
        lambda log_n, v, rho: exists_single_index_tail(None, v, rho, log_n=log_n),
        lambda u, rho: 1.0 - essinf_qp(u, CorrelationStructure.standard(rho)).value,
    )


OVERLAP_RHOS = (-0.5, 0.0, 0.5, 0.8, 0.95)
OVERLAP_VS = ((1.5, 1.5), (2.0, 1.5), (2.5, 2.0), (1.5, 2.5))
DEEP_RHOS = (-0.5, 0.0, 0.5, 0.8)
DEEP_POINTS = ((4.0, (1.0, 1.0)), (5.0, (1.0, 1.0)), (6.0, (1.0, 1.0)), (4.0, (1.2, 0.9)), (5.0, (1.1, 0.8)))


def check_estimators(settings: VerifySettings) -> List[Row]:
    """z-scores of naive and IS estimates against the exact tail, and IS determinism across worker counts."""
    rows = []
    overlap = [(rho, Threshold(*v)) for rho in OVERLAP_RHOS for v in OVERLAP_VS][: settings.calibration_points]
    for i, (rho, v) in enumerate(overlap):
        n = 100
        exact = exact_max_tail(n, v, rho)
        est = estimate_tail_naive(n, v, rho, settings.naive_trials, settings.seed + i, settings.workers)
        z = (est.log_p - exact) / est.std_err_log
        rows.append(_row("IS", _params(method="naive", rho=rho, v=(v.u1, v.u2), n=n, trials=est.trials, seed=est.seed), 0.0, z, 4.0))

    deep = [(rho, a, Threshold(*u)) for rho in DEEP_RHOS for a, u in DEEP_POINTS][: settings.calibration_points]
    for i, (rho, a_n, u) in enumerate(deep):
        n = 1000
        v = u.scaled(a_n)
        exact = exact_max_tail(n, v, rho)
        est = estimate_tail_is(n, v, rho, settings.is_trials, settings.seed + 1000 + i, settings.workers)
        z = (est.log_p - exact) / est.std_err_log
        rows.append(
            _row("IS", _params(method="is", rho=rho, u=(u.u1, u.u2), a_n=a_n, n=n, trials=est.trials, seed=est.seed), 0.0, z, 4.0)
        )

    v = Threshold(5.0, 5.0)
    one = estimate_tail_is(1000, v, 0.5, settings.is_trials, settings.seed, workers=1)
    many = estimate_tail_is(1000, v, 0.5, settings.is_trials, settings.seed, workers=8)
    same = one.log_p == many.log_p and one.std_err_log == many.std_err_log
    rows.append(
        _row(
            "IS",
            _params(check="workers_1_vs_8", rho=0.5, v=(5.0, 5.0), n=1000, trials=settings.is_trials, seed=settings.seed),
            0.0,
            abs(one.log_p - many.log_p),
            0.0,
            same,
        )
    )
    return rows


COINCIDENCE_POINTS = ((0.0, (1.6, 1.6)), (0.9, (2.5, 1.6)))


def check_coincidence(settings: VerifySettings) -> List[Row]:
    rows = []
    n = settings.coincidence_n
    a_n = math.sqrt(math.log(n))
    for rho, (u1, u2) in COINCIDENCE_POINTS:
        u = Threshold(u1, u2)
        regime = regime_classify(u, CorrelationStructure.standard(rho), Scale.RIGHT)
        est = index_coincidence(n, a_n, u, rho, settings.coincidence_trials, settings.seed, workers=settings.workers)
        limit = 1.0 if regime == Regime.TWO_INDEX else 0.0
        params = _params(rho=rho, u=(u1, u2), n=n, a_n=a_n, regime=regime.value, trials=est.trials, seed=est.seed)
        rows.append(_row("COINC", params, limit, est.p_distinct, 0.1, abs(est.p_distinct - limit) < 0.1))
        rows.append(
            _row("COINC", params + ";check=conditioning_hits", 100.0, float(est.conditioning_hits), 0.0, est.conditioning_hits >= 100)
        )
    return rows


SANDWICH_RHOS = (-0.5, 0.0, 0.5, 0.8)
SANDWICH_US = ((2.0, 1.0), (2.0, 2.0), (1.5, 1.2))
SANDWICH_AS = (4.0, 6.0)

# Slack in log units for the bound comparisons.
_LOG_SLACK = 1e-9


def check_sandwich(settings: VerifySettings) -> List[Row]:
    rows = []
    n = 1000
    for rho in SANDWICH_RHOS:
        for u1, u2 in SANDWICH_US:
            u = Threshold(u1, u2)
            regime = regime_classify(u, CorrelationStructure.standard(rho), Scale.LARGE)
            for a_n in SANDWICH_AS:
                d = union_sum(n, a_n, u, rho)
                params = _params(rho=rho, u=(u1, u2), n=n, a_n=a_n)
                ok = d.log_lower - _LOG_SLACK <= d.log_T <= d.log_union + _LOG_SLACK
                rows.append(_row("SANDWICH", params + ";check=bounds", d.log_T, d.log_T, 0.0, ok))
                if a_n >= 6.0:
                    top = max(d.log_S_unequal, d.log_S_equal)
                    rows.append(_row("SANDWICH", params + ";check=e_n_margin", top - 5.0, d.log_e_n, 0.0, d.log_e_n <= top - 5.0))
                expected_dominant = "unequal" if regime == Regime.TWO_INDEX else "equal"
                rows.append(
                    _row(
                        "SANDWICH",
                        params + f";check=dominant;regime={regime.value};dominant={d.dominant}",
                        d.log_S_unequal if expected_dominant == "unequal" else d.log_S_equal,
                        max(d.log_S_unequal, d.log_S_equal),
                        0.0,
                        d.dominant == expected_dominant,
                    )
                )
    return rows


CRITERIA: Dict[str, Callable[[VerifySettings], List[Row]]] = {
    "QP": check_qp,
    "QUAD": check_quadrature,
    "LAPLACE": check_laplace,
    "T3": check_sharp,
    "T2": check_large_scale,
    "T1": check_right_scale,
    "P1": check_single_index,
    "IS": check_estimators,
    "COINC": check_coincidence,
    "SANDWICH": check_sandwich,
}


def run_verify(criteria: Optional[Sequence[str]] = None, settings: Optional[VerifySettings] = None) -> List[Row]:
    """Run the named criteria (all by default) in registry order."""
    settings = settings or VerifySettings()
    names = list(CRITERIA) if not criteria else [c.upper() for c in criteria]
    unknown = [c for c in names if c not in CRITERIA]
    if unknown:
        raise ValueError(f"Unknown criterion: {', '.join(unknown)}. Choose from {', '.join(CRITERIA)}")

    rows: List[Row] = []
    for name in CRITERIA:
        if name not in names:
            continue
        started = time.perf_counter()
        produced = CRITERIA[name](settings)
        failed = sum(1 for r in produced if not r["pass"])
        tracing.trace_print(
            f"verify {name}: {len(produced)} rows, {failed} failed ({time.perf_counter() - started:.1f}s)",
            log_only=True,
        )
        rows.extend(produced)
    return rows


def all_passed(rows: Sequence[Row]) -> bool:
    return all(bool(r["pass"]) for r in rows)


__all__ = [
    "VERIFY_COLUMNS",
    "VerifySettings",
    "CRITERIA",
    "run_verify",
    "all_passed",
    "right_scale_grid",
]
