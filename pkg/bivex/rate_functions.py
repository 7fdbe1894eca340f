"""Closed-form rate functions for bivariate Gaussian componentwise maxima.

This module provides:
- essinf_qp(u, corr): min of 1/2 x' S^-1 x over x >= u, three-case closed form
- rate_J(u, corr): the right-scale rate (a_n = sqrt(log n))
- rate_I(u, rho): the large-scale rate (a_n >> sqrt(log n)), standardized inputs
- sharp_constants(u, rho): exponents (b, c) and the constant K of the sharp limit
- regime_classify(u, corr, scale): whether one or two sample indices carry the tail
- brute_force_qp / kkt_residual: an independent numerical QP and its optimality check

Every operation standardizes by (sigma1, sigma2) first, so results depend on
u only through u / sigma.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from bivex.errors import DegenerateCorrelation, InvalidThreshold, UnsortedThreshold
from bivex.gaussian_core import CorrelationStructure

TIE_RTOL = 1e-12
SQRT2 = math.sqrt(2.0)


def is_tie(a: float, b: float, rtol: float = TIE_RTOL) -> bool:
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class Threshold:
    """Tail levels (u1, u2) in the units of the Gaussian coordinates."""

    u1: float
    u2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u1) and math.isfinite(self.u2)):
            raise InvalidThreshold(f"threshold must be finite, got ({self.u1}, {self.u2})")

    @property
    def norm_sq(self) -> float:
        return self.u1 * self.u1 + self.u2 * self.u2

    @property
    def is_sorted(self) -> bool:
        return self.u2 <= self.u1

    def scaled(self, a: float) -> "Threshold":
        return Threshold(a * self.u1, a * self.u2)

    def sorted(self) -> "Threshold":
        """Coordinates reordered so that u2 <= u1."""
        return self if self.is_sorted else Threshold(self.u2, self.u1)

    def is_right_scale_valid(self, corr: CorrelationStructure) -> bool:
        return self.u1 > SQRT2 * corr.sigma1 and self.u2 > SQRT2 * corr.sigma2

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2], dtype=float)


class RateCase(str, enum.Enum):
    CONE_U2 = "ConeU2"  # u2 <= rho u1: only the first constraint binds
    CONE_U1 = "ConeU1"  # u1 <= rho u2
    INTERIOR_TWO_INDEX = "InteriorTwoIndex"
    INTERIOR_ONE_INDEX = "InteriorOneIndex"
    BOUNDARY_TIE = "BoundaryTie"


CONE_CASES = (RateCase.CONE_U2, RateCase.CONE_U1)


class Scale(str, enum.Enum):
    RIGHT = "right"
    LARGE = "large"


class Regime(str, enum.Enum):
    TWO_INDEX = "TwoIndexDominant"
    ONE_INDEX = "OneIndexDominant"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class RateResult:
    """A rate value with the branch that produced it.

    minimizer is the QP argmin x* in the caller's (unstandardized) units.
    one_index / two_index hold the two competing terms when the rate is a
    max or min over them (J1, J2 for rate_J; essinf and |u|^2/2 for rate_I).
    """

    value: float
    case_label: RateCase
    minimizer: Tuple[float, float]
    one_index: Optional[float] = None
    two_index: Optional[float] = None


@dataclass(frozen=True)
class SharpAsymptote:
    b: int
    c: int
    k: float
    k_published: float
    row: int
    rate: float
    regime: RateCase


def standardize(u: Threshold, corr: CorrelationStructure) -> Threshold:
    return Threshold(u.u1 / corr.sigma1, u.u2 / corr.sigma2)


def mahalanobis(u: Threshold, rho: float) -> float:
    """(u1^2 - 2 rho u1 u2 + u2^2) / (1 - rho^2): the quadratic form x' S^-1 x at x = u."""
    if abs(rho) >= 1.0:
        raise DegenerateCorrelation("Mahalanobis form needs |rho| < 1")
    return (u.u1 * u.u1 - 2.0 * rho * u.u1 * u.u2 + u.u2 * u.u2) / ((1.0 - rho) * (1.0 + rho))


def _require_regular(corr: CorrelationStructure) -> None:
    if corr.is_degenerate:
        raise DegenerateCorrelation(f"rho = {corr.rho}: the quadratic program needs |rho| < 1")


def essinf_qp(u: Threshold, corr: CorrelationStructure) -> RateResult:
    """1/2 essinf_{x >= u} x' S^-1 x and its minimizer.

    Cone boundaries are inclusive: a point with u2 = rho u1 is reported as
    ConeU2. The corner x* = u is reported as InteriorOneIndex.
    """
    _require_regular(corr)
    s = standardize(u, corr)
    u1, u2, rho = s.u1, s.u2, corr.rho
    if u1 <= 0.0 and u2 <= 0.0:
        raise InvalidThreshold(f"essinf over x >= ({u.u1}, {u.u2}) is attained at the origin; need a positive coordinate")

    if u1 > 0.0 and (u2 <= rho * u1 or is_tie(u2, rho * u1)):
        x = (u.u1, max(u.u2, corr.sigma2 * rho * u1))
        return RateResult(0.5 * u1 * u1, RateCase.CONE_U2, x)
    if u2 > 0.0 and (u1 <= rho * u2 or is_tie(u1, rho * u2)):
        x = (max(u.u1, corr.sigma1 * rho * u2), u.u2)
        return RateResult(0.5 * u2 * u2, RateCase.CONE_U1, x)
    return RateResult(0.5 * mahalanobis(s, rho), RateCase.INTERIOR_ONE_INDEX, (u.u1, u.u2))


def rate_J(u: Threshold, corr: CorrelationStructure) -> RateResult:
    """Right-scale rate J(u / sigma) = max{J2, J1} outside the cones.

    J1 = 1 - essinf, J2 = 2 - |u / sigma|^2 / 2. In a cone the rate is J1.
    """
    _require_regular(corr)
    if not u.is_right_scale_valid(corr):
        raise InvalidThreshold(
            f"u = ({u.u1}, {u.u2}) has u <= sqrt(2)*sigma in some coordinate; the right-scale limit is 0 there"
        )
    s = standardize(u, corr)
    qp = essinf_qp(u, corr)
    j1 = 1.0 - qp.value
    j2 = 2.0 - 0.5 * s.norm_sq

    if qp.case_label in CONE_CASES:
        return RateResult(j1, qp.case_label, qp.minimizer, j1, j2)
    if is_tie(j1, j2):
        return RateResult(j1, RateCase.BOUNDARY_TIE, qp.minimizer, j1, j2)
    if j2 > j1:
        return RateResult(j2, RateCase.INTERIOR_TWO_INDEX, qp.minimizer, j1, j2)
    return RateResult(j1, RateCase.INTERIOR_ONE_INDEX, qp.minimizer, j1, j2)


def rate_I(u: Threshold, rho: float) -> RateResult:
    """Large-scale rate I(u) on standardized u.

    Cone cases give u_j^2 / 2; otherwise min{|u|^2, Mahalanobis} / 2.
    """
    corr = CorrelationStructure.standard(rho)
    _require_regular(corr)
    if u.u1 <= 0.0 or u.u2 <= 0.0:
        raise InvalidThreshold(f"rate_I needs u > 0, got ({u.u1}, {u.u2})")

    qp = essinf_qp(u, corr)
    two = 0.5 * u.norm_sq
    if qp.case_label in CONE_CASES:
        return RateResult(qp.value, qp.case_label, qp.minimizer, qp.value, two)
    if is_tie(qp.value, two):
        return RateResult(two, RateCase.BOUNDARY_TIE, qp.minimizer, qp.value, two)
    if two < qp.value:
        return RateResult(two, RateCase.INTERIOR_TWO_INDEX, qp.minimizer, qp.value, two)
    return RateResult(qp.value, RateCase.INTERIOR_ONE_INDEX, qp.minimizer, qp.value, two)


def sharp_constants(u: Threshold, rho: float, halve_symmetric_pairs: bool = False) -> SharpAsymptote:
    """(b, c, K) of the sharp limit a^b n^-c e^{a^2 I(u)} P(max > a u) -> K.

    u must be standardized with u2 <= u1. `k` is the constant the exact
    oracle converges to with ordered-pair counting; `k_published` is the
    table value, which differs in rows 2-5. With halve_symmetric_pairs the
    symmetric two-index row uses the halved pair count, matching row 2 of
    the table.
    """
    if not u.is_sorted:
        raise UnsortedThreshold(f"thresholds must satisfy u2 <= u1, got u1={u.u1}, u2={u.u2}")
    res = rate_I(u, rho)
    u1, u2 = u.u1, u.u2
    two_pi = 2.0 * math.pi
    sqrt_two_pi = math.sqrt(two_pi)

    if res.case_label in (RateCase.INTERIOR_TWO_INDEX, RateCase.BOUNDARY_TIE):
        b, c = 2, 2
        if is_tie(u1, u2):
            row = 2
            k_published = 1.0 / (2.0 * two_pi * u1 * u2)
            k = k_published if halve_symmetric_pairs else 1.0 / (two_pi * u1 * u2)
        else:
            row = 1
            k = k_published = 1.0 / (two_pi * u1 * u2)
    elif res.case_label == RateCase.CONE_U2:
        b, c = 1, 1
        if is_tie(u2, rho * u1):
            row = 4
            k = 1.0 / (2.0 * sqrt_two_pi * u1)
            k_published = 1.0 / (2.0 * two_pi * u1)
        else:
            row = 3
            k = 1.0 / (sqrt_two_pi * u1)
            k_published = 1.0 / (two_pi * u1)
    else:
        b, c, row = 2, 1, 5
        one_m = (1.0 - rho) * (1.0 + rho)
        k_published = one_m / (two_pi * (u1 - rho * u2) * (u2 - rho * u1))
        k = k_published * math.sqrt(one_m)

    return SharpAsymptote(b=b, c=c, k=k, k_published=k_published, row=row, rate=res.value, regime=res.case_label)


def regime_classify(u: Threshold, corr: CorrelationStructure, scale: Scale) -> Regime:
    """Which index pattern dominates the tail event.

    Right scale compares J2 with J1 (Boundary on a tie). Large scale is
    two-index exactly when I(u) = |u|^2 / 2, which includes the Mahalanobis
    tie at rho = 0; Boundary is never returned there.
    """
    scale = Scale(scale)
    if scale == Scale.RIGHT:
        case = rate_J(u, corr).case_label
        if case == RateCase.INTERIOR_TWO_INDEX:
            return Regime.TWO_INDEX
        if case == RateCase.BOUNDARY_TIE:
            return Regime.BOUNDARY
        return Regime.ONE_INDEX

    case = rate_I(standardize(u, corr), corr.rho).case_label
    if case in (RateCase.INTERIOR_TWO_INDEX, RateCase.BOUNDARY_TIE):
        return Regime.TWO_INDEX
    return Regime.ONE_INDEX


# ---------------------------------------------------------------------------
# numerical QP oracle


def brute_force_qp(u: Threshold, corr: CorrelationStructure, grid_points: int = 201) -> RateResult:
    """Dense grid search over the box [u, u_max]^2 followed by L-BFGS-B with x >= u.

    Independent of the closed form; used to certify essinf_qp.
    """
    _require_regular(corr)
    s = standardize(u, corr)
    lo = s.as_array()
    hi = np.full(2, max(abs(s.u1), abs(s.u2)) + 1.0)
    hi = np.maximum(hi, lo + 1.0)
    q_inv = CorrelationStructure.standard(corr.rho).inverse

    g1 = np.linspace(lo[0], hi[0], grid_points)
    g2 = np.linspace(lo[1], hi[1], grid_points)
    x1, x2 = np.meshgrid(g1, g2, indexing="ij")
    values = 0.5 * (q_inv[0, 0] * x1 * x1 + 2.0 * q_inv[0, 1] * x1 * x2 + q_inv[1, 1] * x2 * x2)
    i, j = np.unravel_index(np.argmin(values), values.shape)
    x0 = np.array([g1[i], g2[j]])

    def fun(x: np.ndarray) -> Tuple[float, np.ndarray]:
        grad = q_inv @ x
        return 0.5 * float(x @ grad), grad

    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(lo[0], None), (lo[1], None)],
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000},
    )
    x = np.maximum(res.x, lo)
    value = fun(x)[0]

    active1 = abs(x[0] - lo[0]) <= 1e-7 * max(1.0, abs(lo[0]))
    active2 = abs(x[1] - lo[1]) <= 1e-7 * max(1.0, abs(lo[1]))
    if active1 and active2:
        case = RateCase.INTERIOR_ONE_INDEX
    elif active1:
        case = RateCase.CONE_U2
    else:
        case = RateCase.CONE_U1
    minimizer = (float(x[0] * corr.sigma1), float(x[1] * corr.sigma2))
    return RateResult(value, case, minimizer)


def kkt_residual(result: RateResult, u: Threshold, corr: CorrelationStructure, active_tol: float = 1e-9) -> float:
    """Largest violation of the KKT conditions at result.minimizer, in standardized units.

    A coordinate strictly above its bound must have zero gradient; a
    coordinate on its bound must have a nonnegative gradient (multiplier).
    Infeasibility counts as a violation too.
    """
    _require_regular(corr)
    s = standardize(u, corr).as_array()
    x = np.array([result.minimizer[0] / corr.sigma1, result.minimizer[1] / corr.sigma2])
    grad = CorrelationStructure.standard(corr.rho).inverse @ x

    worst = 0.0
    for j in range(2):
        worst = max(worst, s[j] - x[j])
        if x[j] - s[j] > active_tol * max(1.0, abs(s[j])):
            worst = max(worst, abs(grad[j]))
        else:
            worst = max(worst, -grad[j])
    return float(worst)


__all__ = [
    "Threshold",
    "RateCase",
    "RateResult",
    "SharpAsymptote",
    "Scale",
    "Regime",
    "standardize",
    "mahalanobis",
    "essinf_qp",
    "rate_J",
    "rate_I",
    "sharp_constants",
    "regime_classify",
    "brute_force_qp",
    "kkt_residual",
    "is_tie",
]
