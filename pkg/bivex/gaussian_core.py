"""Scalar and bivariate Gaussian primitives.

All probabilities are returned as natural logs (LogProb) so that tails far
below the double-precision underflow threshold can still be combined.
log(0) is represented by -inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize, special

from bivex import tracing
from bivex.errors import DegenerateCorrelation

LogProb = float
LOG_ZERO: LogProb = -math.inf

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Beyond this the Mills expansion is used for the upper tail; the series
# truncation error there is below 1e-15 relative.
MILLS_CUTOFF = 38.0
_MILLS_TERMS = 6

# Integrand window for the conditional-tail quadrature, in log units below
# the peak. Mass outside the window is below e^-60 of the peak.
_QUAD_WINDOW = 60.0
_QUAD_EPSREL = 1e-13
_QUAD_LIMIT = 200


@dataclass(frozen=True)
class CorrelationStructure:
    """Standard deviations and correlation of a centred bivariate normal."""

    sigma1: float = 1.0
    sigma2: float = 1.0
    rho: float = 0.0

    def __post_init__(self) -> None:
        for name in ("sigma1", "sigma2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")
        if math.isnan(self.rho) or abs(self.rho) > 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")

    @classmethod
    def standard(cls, rho: float) -> "CorrelationStructure":
        return cls(1.0, 1.0, rho)

    @property
    def is_degenerate(self) -> bool:
        return abs(self.rho) == 1.0

    @property
    def covariance(self) -> np.ndarray:
        s1, s2, r = self.sigma1, self.sigma2, self.rho
        return np.array([[s1 * s1, r * s1 * s2], [r * s1 * s2, s2 * s2]])

    @property
    def inverse(self) -> np.ndarray:
        """Closed-form inverse of the covariance; only defined for |rho| < 1."""
        if self.is_degenerate:
            raise DegenerateCorrelation("covariance is singular when |rho| = 1")
        s1, s2, r = self.sigma1, self.sigma2, self.rho
        det_scale = (1.0 - r) * (1.0 + r)
        return np.array(
            [
                [1.0 / (s1 * s1 * det_scale), -r / (s1 * s2 * det_scale)],
                [-r / (s1 * s2 * det_scale), 1.0 / (s2 * s2 * det_scale)],
            ]
        )


# ---------------------------------------------------------------------------
# log-space arithmetic


def log1mexp(x: float) -> float:
    """log(1 - e^x) for x <= 0."""
    if x > 0:
        raise ValueError(f"log1mexp needs x <= 0, got {x}")
    if x == 0:
        return LOG_ZERO
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def log_diff_exp(a: float, b: float) -> float:
    """log(e^a - e^b) for a >= b."""
    if b == LOG_ZERO:
        return a
    if b > a:
        raise ValueError(f"log_diff_exp needs a >= b, got {a} < {b}")
    return a + log1mexp(b - a)


def log_sum_exp(values: Sequence[float], signs: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """Signed log-sum-exp: returns (log|sum|, sign) of sum(sign_i * e^value_i).

    Entries at -inf are dropped; an empty or exactly cancelling sum returns
    (-inf, 0.0).
    """
    vals = np.asarray(values, dtype=float)
    sgn = np.ones_like(vals) if signs is None else np.asarray(signs, dtype=float)
    keep = np.isfinite(vals) & (sgn != 0)
    if not np.any(keep):
        return LOG_ZERO, 0.0
    out, sign = special.logsumexp(vals[keep], b=sgn[keep], return_sign=True)
    if sign == 0:
        return LOG_ZERO, 0.0
    return float(out), float(sign)


# ---------------------------------------------------------------------------
# univariate


def _mills_log_tail(x: float) -> LogProb:
    # 1 - Phi(x) = phi(x)/x * sum_k (-1)^k (2k-1)!! / x^(2k)
    inv_x2 = 1.0 / (x * x)
    term, total = 1.0, 1.0
    for k in range(1, _MILLS_TERMS):
        term *= -(2 * k - 1) * inv_x2
        total += term
    return -0.5 * x * x - LOG_SQRT_2PI - math.log(x) + math.log(total)


def std_normal_tail(x: float) -> LogProb:
    """log(1 - Phi(x)) for a standard normal."""
    x = float(x)
    if math.isnan(x):
        raise ValueError("std_normal_tail: x is NaN")
    if x == math.inf:
        return LOG_ZERO
    if x > MILLS_CUTOFF:
        return _mills_log_tail(x)
    return float(special.log_ndtr(-x))


def std_normal_log_cdf(x: float) -> LogProb:
    """log Phi(x); the complement of std_normal_tail."""
    return std_normal_tail(-float(x))


# ---------------------------------------------------------------------------
# bivariate


def _conditional_tail_quadrature(h: float, k: float, rho: float) -> LogProb:
    """log P(Z1 > h, Z2 > k) as log of  int_h^inf phi(z) P(Z > (k - rho z)/s) dz.

    The integrand is written as exp(L(t)) with z = h + t; L is concave, so
    it is normalized by its peak and integrated over the window where it is
    within _QUAD_WINDOW log-units of that peak.
    """
    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    ratio = rho / s

    def L(t: float) -> float:
        z = h + t
        return -0.5 * z * z + float(special.log_ndtr((rho * z - k) / s))

    def dL(t: float) -> float:
        z = h + t
        w = (rho * z - k) / s
        hazard = math.exp(-0.5 * w * w - LOG_SQRT_2PI - float(special.log_ndtr(w)))
        return -z + ratio * hazard

    if dL(0.0) <= 0.0:
        t_peak = 0.0
    else:
        hi = max(1.0, abs(h) + abs(k))
        while dL(hi) > 0.0:
            hi *= 2.0
        t_peak = optimize.brentq(dL, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    L_peak = L(t_peak)
    floor = L_peak - _QUAD_WINDOW

    t_lo = 0.0
    if L(0.0) < floor:
        t_lo = optimize.brentq(lambda t: L(t) - floor, 0.0, t_peak, xtol=1e-10)
    step = 1.0
    t_hi = t_peak + step
    while L(t_hi) > floor:
        step *= 2.0
        t_hi = t_peak + step
    t_hi = optimize.brentq(lambda t: L(t) - floor, t_peak, t_hi, xtol=1e-10)

    points = [t_peak] if t_lo < t_peak < t_hi else None
    value, abserr, info, *msg = integrate.quad(
        lambda t: math.exp(L(t) - L_peak),
        t_lo,
        t_hi,
        points=points,
        epsabs=0.0,
        epsrel=_QUAD_EPSREL,
        limit=_QUAD_LIMIT,
        full_output=1,
    )
    if msg and abserr > 1e-10 * value:
        tracing.trace_print(
            f"bvn_upper_tail quadrature h={h!r} k={k!r} rho={rho!r}: {msg[0]} (abserr={abserr:.3e}, value={value:.3e})",
            log_only=True,
        )
    return L_peak - LOG_SQRT_2PI + math.log(value)


def bvn_upper_tail(a: float, b: float, rho: float) -> LogProb:
    """log P(Z1 > a, Z2 > b) for a standard bivariate normal with correlation rho.

    Arguments are put in canonical order first, so the result is exactly
    symmetric in (a, b). |rho| = 1 reduces to one dimension.
    """
    a, b, rho = float(a), float(b), float(rho)
    if math.isnan(a) or math.isnan(b) or math.isnan(rho):
        raise ValueError("bvn_upper_tail: NaN input")
    if abs(rho) > 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")

    h, k = (a, b) if a >= b else (b, a)

    if rho == 1.0:
        return std_normal_tail(h)
    if rho == -1.0:
        # {Z > h, -Z > k} = {h < Z < -k}
        if h >= -k:
            return LOG_ZERO
        return log_diff_exp(std_normal_tail(h), std_normal_tail(-k))
    if h == math.inf:
        return LOG_ZERO
    if k == -math.inf:
        return std_normal_tail(h)
    return _conditional_tail_quadrature(h, k, rho)


def sample_bvn(
    rho: float,
    rng: np.random.Generator,
    size: Union[None, int, Tuple[int, ...]] = None,
) -> Tuple[Union[float, np.ndarray], Union[float, np.ndarray]]:
    """Draw standard bivariate normal pairs via Z2 = rho Z1 + sqrt(1 - rho^2) Z.

    Always consumes exactly 2 * prod(size) standard normals from rng, so
    the stream position after a call depends only on size.
    """
    rho = float(rho)
    if math.isnan(rho) or abs(rho) > 1.0:
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    if size is None:
        shape: Tuple[int, ...] = ()
    elif isinstance(size, Iterable):
        shape = tuple(int(s) for s in size)
    else:
        shape = (int(size),)

    z = rng.standard_normal((2,) + shape)
    z1 = z[0]
    z2 = rho * z1 + math.sqrt((1.0 - rho) * (1.0 + rho)) * z[1]
    if size is None:
        return float(z1), float(z2)
    return z1, z2


__all__ = [
    "LogProb",
    "LOG_ZERO",
    "CorrelationStructure",
    "std_normal_tail",
    "std_normal_log_cdf",
    "bvn_upper_tail",
    "sample_bvn",
    "log1mexp",
    "log_diff_exp",
    "log_sum_exp",
]
