"""Marginal loss models and their quantile / expected-shortfall functionals.

Everything here lives in *loss* space: positive numbers are losses, and a
risk level ``p`` close to 1 points at the upper tail.  Three families are
provided —

* Student-t (and, as a limiting convenience, normal) margins with
  closed-form VaR and ES,
* a generalized Pareto tail grafted on beyond a threshold quantile,
* plain finite samples with order-statistic estimators.

Each family exposes ``var(p)`` and ``es(p)`` with the same meaning, so the
conditional risk measures downstream never need to know which one they
were handed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import InfiniteTailError, InsufficientDataError

__all__ = [
    "StudentTParams",
    "NormalParams",
    "GpdTail",
    "LossSample",
    "t_quantile",
    "t_es",
    "gpd_var_beyond",
    "gpd_es_beyond",
    "hist_var",
    "hist_es",
]

# Shape parameters this close to zero are treated as exactly zero in the
# GPD formulas, where the xi -> 0 limit is exponential.
_XI_ZERO = 1e-10


def _check_level(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"risk level must lie strictly in (0, 1), got {p!r}")
    return p


@dataclass(frozen=True)
class StudentTParams:
    """Location-scale Student-t margin with ``nu`` degrees of freedom."""

    nu: float
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError(f"degrees of freedom must be positive, got {self.nu}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def var(self, p: float) -> float:
        return t_quantile(p, self)

    def es(self, p: float) -> float:
        return t_es(p, self)


@dataclass(frozen=True)
class NormalParams:
    """Gaussian margin; the nu -> infinity limit of :class:`StudentTParams`."""

    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self) -> None:
        if not self.sd > 0:
            raise ValueError(f"standard deviation must be positive, got {self.sd}")

    def var(self, p: float) -> float:
        q = stats.norm.ppf(_check_level(p))
        return self.mean + self.sd * q

    def es(self, p: float) -> float:
        p = _check_level(p)
        q = stats.norm.ppf(p)
        return self.mean + self.sd * stats.norm.pdf(q) / (1.0 - p)


def t_quantile(p: float, params: StudentTParams) -> float:
    """Quantile (VaR) of a location-scale Student-t margin."""
    p = _check_level(p)
    return params.loc + params.scale * float(stats.t.ppf(p, params.nu))


def t_es(p: float, params: StudentTParams) -> float:
    """Expected shortfall of a Student-t margin beyond level ``p``.

    Uses the closed form ES_p = f(q) (nu + q^2) / ((nu - 1)(1 - p)) for the
    standardized margin with density f and quantile q; requires nu > 1 for
    the tail mean to exist.
    """
    p = _check_level(p)
    nu = params.nu
    if nu <= 1:
        raise InfiniteTailError(
            f"expected shortfall of a t margin needs nu > 1, got nu={nu}"
        )
    q = float(stats.t.ppf(p, nu))
    core = float(stats.t.pdf(q, nu)) * (nu + q * q) / ((nu - 1.0) * (1.0 - p))
    return params.loc + params.scale * core


@dataclass(frozen=True)
class GpdTail:
    """Generalized Pareto tail beyond the ``gamma`` quantile.

    ``u`` is the loss threshold sitting at probability level ``gamma``,
    ``s`` the GPD scale and ``xi`` the (non-negative) shape.
    """

    gamma: float
    u: float
    s: float
    xi: float

    def __post_init__(self) -> None:
        if not 0.5 < self.gamma < 1.0:
            raise ValueError(f"threshold level gamma must lie in (0.5, 1), got {self.gamma}")
        if not self.s > 0:
            raise ValueError(f"GPD scale must be positive, got {self.s}")
        if self.xi < 0:
            raise ValueError(f"GPD shape must be non-negative, got {self.xi}")

    def var(self, p: float) -> float:
        return gpd_var_beyond(p, self)

    def es(self, p: float) -> float:
        return gpd_es_beyond(p, self)


def gpd_var_beyond(p: float, tail: GpdTail) -> float:
    """VaR at level ``p >= gamma`` implied by a fitted GPD tail."""
    p = _check_level(p)
    if p < tail.gamma:
        raise ValueError(
            f"level {p} lies below the tail threshold gamma={tail.gamma}"
        )
    ratio = (1.0 - p) / (1.0 - tail.gamma)
    if abs(tail.xi) < _XI_ZERO:
        return tail.u - tail.s * math.log(ratio)
    return tail.u + tail.s * (ratio ** -tail.xi - 1.0) / tail.xi


def gpd_es_beyond(p: float, tail: GpdTail) -> float:
    """Expected shortfall at level ``p >= gamma`` implied by a GPD tail.

    Diverges for xi >= 1, in which case :class:`InfiniteTailError` is
    raised rather than returning a meaningless number.
    """
    p = _check_level(p)
    if p < tail.gamma:
        raise ValueError(
            f"level {p} lies below the tail threshold gamma={tail.gamma}"
        )
    if tail.xi >= 1.0:
        raise InfiniteTailError(
            f"GPD expected shortfall is infinite for shape xi={tail.xi} >= 1"
        )
    ratio = (1.0 - p) / (1.0 - tail.gamma)
    if abs(tail.xi) < _XI_ZERO:
        return tail.u + tail.s * (1.0 - math.log(ratio))
    t = ratio ** -tail.xi
    return tail.u + tail.s * (t / (1.0 - tail.xi) + (t - 1.0) / tail.xi)


class LossSample:
    """A finite sample of losses, held sorted ascending and read-only."""

    __slots__ = ("values",)

    def __init__(self, values) -> None:
        arr = np.sort(np.asarray(values, dtype=float))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("loss sample must be a non-empty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("loss sample contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("LossSample is immutable")

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size

    def order_statistic(self, i: int) -> float:
        """The i-th smallest loss, 1-indexed."""
        if not 1 <= i <= self.n:
            raise IndexError(f"order statistic index {i} outside 1..{self.n}")
        return float(self.values[i - 1])

    def var(self, p: float) -> float:
        return hist_var(self, p)

    def es(self, p: float) -> float:
        return hist_es(self, p)


def _as_sorted(sample) -> np.ndarray:
    if isinstance(sample, LossSample):
        return sample.values
    return LossSample(sample).values


def _var_index(n: int, p: float) -> int:
    """1-based order-statistic index ceil(n p), guarded against the
    floating-point product spilling across an integer boundary."""
    k = math.ceil(n * p)
    if k >= 1 and (k - 1) / n >= p:
        k -= 1
    elif k / n < p:
        k += 1
    return min(max(k, 1), n)


def _tail_start(n: int, p: float) -> int:
    """0-based start of the upper tail, floor(n p) with the same guards."""
    j = math.floor(n * p)
    if j < n and (j + 1) / n <= p:
        j += 1
    elif j >= 1 and j / n > p:
        j -= 1
    return min(max(j, 0), n)


def hist_var(sample, p: float) -> float:
    """Empirical VaR: the ceil(n p)-th order statistic of the sample."""
    p = _check_level(p)
    values = _as_sorted(sample)
    return float(values[_var_index(values.size, p) - 1])


def hist_es(sample, p: float) -> float:
    """Empirical expected shortfall: mean of the losses strictly beyond
    the floor(n p) smallest ones."""
    p = _check_level(p)
    values = _as_sorted(sample)
    j = _tail_start(values.size, p)
    if j >= values.size:
        raise InsufficientDataError(
            f"no observations beyond level {p} in a sample of {values.size}"
        )
    return float(values[j:].mean())
