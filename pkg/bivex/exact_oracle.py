"""Exact finite-n tail probabilities of the componentwise maximum.

For n i.i.d. standard bivariate normal rows and level v,

    T = P(max_i X_i1 > v1, max_i X_i2 > v2)
      = 1 - (1-q1)^n - (1-q2)^n + F^n,   F = 1 - q1 - q2 + q12,

with q1, q2 the marginal tails and q12 the joint upper-orthant tail. The
identity is evaluated through the factorization

    T = (1 - (1-q1)^n)(1 - (1-q2)^n)
        + [(1-q1)(1-q2)]^n * expm1(n log1p((q12 - q1 q2) / ((1-q1)(1-q2))))

entirely in log-space, which stays accurate when T is far below the
smallest double and when n itself is too large for an integer (pass log_n).

The inclusion-exclusion pieces (union sum, equal-index sum, second-order
error term) and the sharp-limit ratios are built on top of it.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from bivex import tracing
from bivex.errors import PrecisionLossWarning, RegimeViolation, UnsortedThreshold
from bivex.gaussian_core import (
    LOG_ZERO,
    LogProb,
    bvn_upper_tail,
    log1mexp,
    log_sum_exp,
    std_normal_log_cdf,
    std_normal_tail,
)
from bivex.rate_functions import Threshold, is_tie, mahalanobis, sharp_constants

LOG2 = math.log(2.0)

# Below this n * max(q1, q2) the second-order series is evaluated alongside
# the exact form and the two are compared.
SERIES_CROSSOVER = 1e-4


def _log(x: float) -> float:
    return math.log(x) if x > 0 else LOG_ZERO


def _neg_exp(x: float) -> float:
    """-e^x, saturating to -inf instead of overflowing."""
    return -math.exp(x) if x < 709.0 else LOG_ZERO


# ---------------------------------------------------------------------------
# sample counts


@dataclass(frozen=True)
class _Count:
    """A sample count n carried both as log n and, when small enough, as an int."""

    log_n: float
    n: Optional[int]

    @property
    def is_one(self) -> bool:
        return self.n == 1 or self.log_n == 0.0

    def log_falling(self, k: int) -> float:
        """log n (n-1) ... (n-k+1); -inf when n < k."""
        if self.n is not None:
            if self.n < k:
                return LOG_ZERO
            return sum(math.log(self.n - i) for i in range(k))
        total = 0.0
        for i in range(k):
            frac = i * math.exp(-self.log_n)
            if frac >= 1.0:
                return LOG_ZERO
            total += self.log_n + math.log1p(-frac)
        return total


def _resolve_count(n: Optional[int], log_n: Optional[float]) -> _Count:
    if n is None and log_n is None:
        raise ValueError("either n or log_n is required")
    if n is not None:
        if int(n) != n or n < 1:
            raise ValueError(f"n must be a positive integer, got {n}")
        n = int(n)
        if log_n is not None and not math.isclose(log_n, math.log(n), rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"n = {n} and log_n = {log_n} disagree")
        return _Count(math.log(n), n)
    log_n = float(log_n)
    if not (math.isfinite(log_n) and log_n >= 0.0):
        raise ValueError(f"log_n must be finite and >= 0, got {log_n}")
    return _Count(log_n, 1 if log_n == 0.0 else None)


class ScalingKind(str, enum.Enum):
    RIGHT = "RightScale"
    LARGE = "LargeScale"
    EXPLICIT = "Explicit"


@dataclass(frozen=True)
class ScalingSequence:
    """A sample size n (as log n) paired with the threshold scale a_n."""

    kind: ScalingKind
    log_n: float
    a_n: float
    n: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.log_n) and self.log_n >= 0.0):
            raise ValueError(f"log_n must be finite and >= 0, got {self.log_n}")
        if not (math.isfinite(self.a_n) and self.a_n > 0.0):
            raise ValueError(f"a_n must be positive and finite, got {self.a_n}")
        if self.kind == ScalingKind.RIGHT and self.a_n != math.sqrt(self.log_n):
            raise ValueError("right scale requires a_n = sqrt(log n)")
        if self.kind == ScalingKind.LARGE and self.log_n > 0.0 and self.a_n * self.a_n <= self.log_n:
            raise ValueError(f"large scale requires a_n^2 > log n, got a_n={self.a_n}, log n={self.log_n}")

    @classmethod
    def right_scale(cls, log_n: Optional[float] = None, n: Optional[int] = None) -> "ScalingSequence":
        count = _resolve_count(n, log_n)
        return cls(ScalingKind.RIGHT, count.log_n, math.sqrt(count.log_n), count.n)

    @classmethod
    def large_scale(cls, a_n: float, n: Optional[int] = None, log_n: Optional[float] = None) -> "ScalingSequence":
        count = _resolve_count(n, log_n)
        return cls(ScalingKind.LARGE, count.log_n, float(a_n), count.n)

    @classmethod
    def explicit(cls, a_n: float, n: Optional[int] = None, log_n: Optional[float] = None) -> "ScalingSequence":
        count = _resolve_count(n, log_n)
        return cls(ScalingKind.EXPLICIT, count.log_n, float(a_n), count.n)

    def threshold(self, u: Threshold) -> Threshold:
        return u.scaled(self.a_n)

    def count_kwargs(self) -> Dict[str, object]:
        if self.n is not None:
            return {"n": self.n}
        return {"n": None, "log_n": self.log_n}


@dataclass(frozen=True)
class TailDecomposition:
    """Exact tail alongside its first- and second-order inclusion-exclusion pieces."""

    log_T: LogProb
    log_S_unequal: LogProb
    log_S_equal: LogProb
    log_e_n: LogProb

    @property
    def log_union(self) -> LogProb:
        """log(S_unequal + S_equal): the inclusion-exclusion upper bound."""
        return log_sum_exp([self.log_S_unequal, self.log_S_equal])[0]

    @property
    def log_lower(self) -> LogProb:
        """log(S_unequal + S_equal - e_n), or -inf when the bound is not positive."""
        value, sign = log_sum_exp([self.log_S_unequal, self.log_S_equal, self.log_e_n], [1.0, 1.0, -1.0])
        return value if sign > 0 else LOG_ZERO

    @property
    def dominant(self) -> str:
        return "unequal" if self.log_S_unequal > self.log_S_equal else "equal"


# ---------------------------------------------------------------------------
# signed log-space helpers


def _log_neg_log1m(lq: float, lc: float) -> float:
    """log(-log(1 - q)) from lq = log q and lc = log(1 - q)."""
    if lq == LOG_ZERO:
        return LOG_ZERO
    if lq < -20.0:
        q = math.exp(lq)
        return lq + math.log1p(q / 2.0 + q * q / 3.0)
    return _log(-lc)


def _log_one_minus_exp_neg(ly: float) -> float:
    """log(1 - e^-y) from ly = log y."""
    if ly < -700.0:
        return ly
    if ly > 6.6:
        return 0.0
    return log1mexp(-math.exp(ly))


def _log_abs_log1p(lz: float, sz: float) -> Tuple[float, float]:
    """Signed log|log1p(z)| for z = sz * e^lz."""
    if sz == 0 or lz == LOG_ZERO:
        return LOG_ZERO, 0.0
    z = sz * math.exp(lz)
    if lz < -20.0:
        return lz + math.log1p(-z / 2.0 + z * z / 3.0), sz
    val = math.log1p(z)
    return _log(abs(val)), math.copysign(1.0, val) if val != 0 else 0.0


def _log_abs_expm1(lw: float, sw: float) -> Tuple[float, float]:
    """Signed log|expm1(w)| for w = sw * e^lw, with w <= 50 when positive."""
    if sw == 0 or lw == LOG_ZERO:
        return LOG_ZERO, 0.0
    if lw < -20.0:
        w = sw * math.exp(lw)
        return lw + math.log1p(w / 2.0 + w * w / 6.0), sw
    w = sw * math.exp(min(lw, 700.0))
    val = math.expm1(w)
    return _log(abs(val)), math.copysign(1.0, val)


def _tails(v: Threshold, rho: float) -> Tuple[float, float, float]:
    return std_normal_tail(v.u1), std_normal_tail(v.u2), bvn_upper_tail(v.u1, v.u2, rho)


def _factorized_tail(count: _Count, v: Threshold, lq1: float, lq2: float, lq12: float) -> LogProb:
    l1c = std_normal_log_cdf(v.u1)
    l2c = std_normal_log_cdf(v.u2)

    # (1 - (1-q1)^n)(1 - (1-q2)^n)
    l_first = _log_one_minus_exp_neg(count.log_n + _log_neg_log1m(lq1, l1c)) + _log_one_minus_exp_neg(
        count.log_n + _log_neg_log1m(lq2, l2c)
    )

    # [(1-q1)(1-q2)]^n * expm1(n log1p(z))
    l_pow = _neg_exp(count.log_n + _log(-(l1c + l2c)))
    l_num, s_num = log_sum_exp([lq12, lq1 + lq2], [1.0, -1.0])
    if s_num == 0:
        return l_first
    lz = l_num - l1c - l2c
    if s_num < 0 and lz >= 0.0:
        # F = 0: the second term is -[(1-q1)(1-q2)]^n
        l_second, s_second = l_pow, -1.0
    else:
        l_log1p, s_log1p = _log_abs_log1p(lz, s_num)
        lw = count.log_n + l_log1p
        if s_log1p > 0 and lw > math.log(50.0):
            # expm1(W) ~ e^W: combine exponents as n log F before exponentiating
            log_F = l1c + l2c + math.exp(l_log1p)
            l_second, s_second = _neg_exp(count.log_n + _log(-log_F)), 1.0
        else:
            l_em, s_em = _log_abs_expm1(lw, s_log1p)
            l_second, s_second = l_pow + l_em, s_em
    if not math.isfinite(l_second):
        l_second, s_second = LOG_ZERO, 0.0

    value, sign = log_sum_exp([l_first, l_second], [1.0, s_second])
    if sign <= 0:
        return LOG_ZERO
    return value


def _series_tail(count: _Count, lq1: float, lq2: float, lq12: float) -> LogProb:
    # n q12 + C(n,2) [2 q1 q2 - 2 q12 (q1 + q2) + q12^2]
    l_sum12 = log_sum_exp([lq1, lq2])[0]
    l_bracket, s_bracket = log_sum_exp(
        [LOG2 + lq1 + lq2, LOG2 + lq12 + l_sum12, 2.0 * lq12],
        [1.0, -1.0, 1.0],
    )
    l_pairs = count.log_falling(2) - LOG2
    value, sign = log_sum_exp([count.log_n + lq12, l_pairs + l_bracket], [1.0, s_bracket])
    return value if sign > 0 else LOG_ZERO


def second_order_series(
    n: Optional[int], v: Threshold, rho: float, log_n: Optional[float] = None
) -> LogProb:
    """Second-order expansion of exact_max_tail in the marginal tails.

    Relative truncation error is of order n * max(q1, q2).
    """
    count = _resolve_count(n, log_n)
    return _series_tail(count, *_tails(v, rho))


def exact_max_tail(n: Optional[int], v: Threshold, rho: float, log_n: Optional[float] = None) -> LogProb:
    """log P(max_i X_i1 > v1, max_i X_i2 > v2) over n standard bivariate normal rows.

    Pass log_n instead of n for counts beyond integer range. When
    n * max(q1, q2) < SERIES_CROSSOVER the second-order series is computed
    too; a disagreement beyond its truncation bound raises
    PrecisionLossWarning. The factorized value is always returned.
    """
    count = _resolve_count(n, log_n)
    lq1, lq2, lq12 = _tails(v, rho)
    if count.is_one:
        return lq12

    value = _factorized_tail(count, v, lq1, lq2, lq12)

    l_nq = count.log_n + max(lq1, lq2)
    if l_nq < math.log(SERIES_CROSSOVER) and value != LOG_ZERO:
        series = _series_tail(count, lq1, lq2, lq12)
        rel = abs(math.expm1(series - value)) if series != LOG_ZERO else 1.0
        tol = 1e-6 + 4.0 * math.exp(l_nq)
        if rel > tol:
            msg = (
                f"exact_max_tail: factorized and series forms disagree (rel={rel:.3e}, tol={tol:.3e}) "
                f"at log n={count.log_n}, v=({v.u1}, {v.u2}), rho={rho}"
            )
            tracing.trace_print(msg, log_only=True)
            warnings.warn(msg, PrecisionLossWarning, stacklevel=2)
    return value


def exists_single_index_tail(n: Optional[int], v: Threshold, rho: float, log_n: Optional[float] = None) -> LogProb:
    """log P(some row i has X_i > v in both coordinates) = log(1 - (1 - q12)^n)."""
    count = _resolve_count(n, log_n)
    lq12 = bvn_upper_tail(v.u1, v.u2, rho)
    if count.is_one or lq12 == LOG_ZERO:
        return lq12
    lc12 = log1mexp(lq12) if lq12 < 0.0 else LOG_ZERO
    return _log_one_minus_exp_neg(count.log_n + _log_neg_log1m(lq12, lc12))


def _unequal_pairs(count: _Count, u: Threshold, halve_symmetric_pairs: bool) -> float:
    l_pairs = count.log_falling(2)
    if halve_symmetric_pairs and is_tie(u.u1, u.u2):
        l_pairs -= LOG2
    return l_pairs


def error_term_components(
    n: Optional[int], a_n: float, u: Threshold, rho: float, log_n: Optional[float] = None
) -> Dict[str, LogProb]:
    """Log of each index pattern of the pairwise-intersection sum e_n(u).

    Events are A_(i,j) = {X_i1 > a u1, X_j2 > a u2} over ordered (i, j);
    e_n sums P(A cap A') over unordered pairs of distinct events. Keys
    name the probability of the pattern; values include the exact count.
    """
    count = _resolve_count(n, log_n)
    lq1, lq2, lq12 = _tails(u.scaled(a_n), rho)
    f2, f3, f4 = count.log_falling(2), count.log_falling(3), count.log_falling(4)
    return {
        # (i,i)&(k,k) and (i,j)&(j,i): both rows exceed both levels
        "q12^2": f2 + 2.0 * lq12,
        # (i,i)&(i,l), (i,i)&(k,i)
        "q12*q2": f2 + lq12 + lq2,
        "q12*q1": f2 + lq12 + lq1,
        # (i,i)&(k,l) and (i,j)&(k,i) with three distinct rows
        "q12*q1*q2": LOG2 + f3 + lq12 + lq1 + lq2,
        # (i,j)&(i,l) and (i,j)&(k,j)
        "q1*q2^2": f3 - LOG2 + lq1 + 2.0 * lq2,
        "q1^2*q2": f3 - LOG2 + 2.0 * lq1 + lq2,
        # four distinct rows
        "q1^2*q2^2": f4 - LOG2 + 2.0 * (lq1 + lq2),
    }


def error_term_bound(n: Optional[int], a_n: float, u: Threshold, rho: float, log_n: Optional[float] = None) -> LogProb:
    """log e_n(u), the second Bonferroni term for the ordered-pair union; -inf for n = 1."""
    return log_sum_exp(list(error_term_components(n, a_n, u, rho, log_n).values()))[0]


def union_sum(
    n: Optional[int],
    a_n: float,
    u: Threshold,
    rho: float,
    log_n: Optional[float] = None,
    halve_symmetric_pairs: bool = False,
) -> TailDecomposition:
    """Unequal-index sum n(n-1) q1 q2, equal-index sum n q12, e_n bound and exact tail at level a_n u.

    halve_symmetric_pairs counts n(n-1)/2 unequal pairs when u1 = u2. The
    sandwich log_lower <= log_T <= log_union only holds without it.
    """
    count = _resolve_count(n, log_n)
    u = u.sorted()
    v = u.scaled(a_n)
    lq1, lq2, lq12 = _tails(v, rho)
    return TailDecomposition(
        log_T=exact_max_tail(count.n, v, rho, log_n=count.log_n if count.n is None else None),
        log_S_unequal=_unequal_pairs(count, u, halve_symmetric_pairs) + lq1 + lq2,
        log_S_equal=count.log_n + lq12,
        log_e_n=error_term_bound(count.n, a_n, u, rho, log_n=count.log_n if count.n is None else None),
    )


def sharp_ratio(n: Optional[int], a_n: float, u: Threshold, rho: float, log_n: Optional[float] = None) -> float:
    """a_n^b n^-c e^{a_n^2 I(u)} P(max > a_n u), which tends to sharp_constants(u, rho).k.

    u must be standardized with u2 <= u1.
    """
    count = _resolve_count(n, log_n)
    sc = sharp_constants(u, rho)
    log_t = exact_max_tail(count.n, u.scaled(a_n), rho, log_n=count.log_n if count.n is None else None)
    return math.exp(sc.b * math.log(a_n) - sc.c * count.log_n + a_n * a_n * sc.rate + log_t)


def laplace_prefactor_limit(u: Threshold, rho: float) -> float:
    """(1 - rho^2)^{3/2} / ((u1 - rho u2)(u2 - rho u1))."""
    one_m = (1.0 - rho) * (1.0 + rho)
    return one_m * math.sqrt(one_m) / ((u.u1 - rho * u.u2) * (u.u2 - rho * u.u1))


def laplace_prefactor_check(a_n: float, u: Threshold, rho: float) -> float:
    """2 pi a^2 e^{a^2 M(u)/2} P(Z1 > a u1, Z2 > a u2), M the Mahalanobis form.

    Tends to laplace_prefactor_limit(u, rho); the gap is O(a^-2). Only
    defined inside the corner regime rho u1 < u2 <= u1.
    """
    if not u.is_sorted:
        raise UnsortedThreshold(f"thresholds must satisfy u2 <= u1, got u1={u.u1}, u2={u.u2}")
    if u.u2 <= rho * u.u1:
        raise RegimeViolation(f"need rho*u1 < u2, got rho*u1={rho * u.u1}, u2={u.u2}")
    a2 = a_n * a_n
    log_joint = bvn_upper_tail(a_n * u.u1, a_n * u.u2, rho)
    return math.exp(math.log(2.0 * math.pi * a2) + 0.5 * a2 * mahalanobis(u, rho) + log_joint)


__all__ = [
    "ScalingKind",
    "ScalingSequence",
    "TailDecomposition",
    "SERIES_CROSSOVER",
    "exact_max_tail",
    "second_order_series",
    "exists_single_index_tail",
    "union_sum",
    "error_term_bound",
    "error_term_components",
    "sharp_ratio",
    "laplace_prefactor_check",
    "laplace_prefactor_limit",
]
