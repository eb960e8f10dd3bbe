"""Bivariate copulas: the dependence half of every conditional risk measure.

The Gumbel family carries the upper-tail dependence the measures are
sensitive to; independence, comonotone and countermonotone copulas pin down
the boundary cases; and the empirical beta copula is the smooth, rank-based
estimator used on data.  All models answer three questions

* ``cdf(u, v)``        -- P(U <= u, V <= v)
* ``survival(u, v)``   -- P(U > u, V > v), by inclusion-exclusion
* ``partial_v(u, v)``  -- dC/dv, i.e. P(U <= u | V = v)

and can ``sample`` pairs given an explicit seed.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

__all__ = [
    "CopulaModel",
    "GumbelCopula",
    "IndependenceCopula",
    "ComonotoneCopula",
    "CountermonotoneCopula",
    "EmpiricalBetaCopula",
    "PseudoObservations",
    "gumbel_cdf",
    "sample_gumbel",
    "tau_to_theta",
    "pseudo_observations",
    "fit_beta_copula",
]

_TINY = float(np.finfo(float).tiny)
_ONE_MINUS = float(np.nextafter(1.0, 0.0))


def _unit_interval(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def _scalar_or_array(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required for sampling")
    return np.random.default_rng(seed)


class CopulaModel(abc.ABC):
    """Common interface for bivariate copulas."""

    @abc.abstractmethod
    def cdf(self, u, v):
        """Copula CDF C(u, v); accepts scalars or broadcastable arrays."""

    @abc.abstractmethod
    def partial_v(self, u, v):
        """Partial derivative dC/dv, the conditional law P(U <= u | V = v)."""

    @abc.abstractmethod
    def sample(self, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` pairs from the copula.  ``seed`` is mandatory."""

    def survival(self, u, v):
        """Joint survival P(U > u, V > v) = 1 - u - v + C(u, v)."""
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        out = 1.0 - uu - vv + np.asarray(self.cdf(uu, vv))
        return _scalar_or_array(out)


def tau_to_theta(tau: float) -> float:
    """Gumbel parameter theta = 1 / (1 - tau) matching a Kendall's tau."""
    tau = float(tau)
    if not 0.0 <= tau < 1.0:
        raise ValueError(
            f"Gumbel copulas cover Kendall tau in [0, 1) only, got {tau}"
        )
    return 1.0 / (1.0 - tau)


def gumbel_cdf(u, v, theta: float):
    """Gumbel copula exp(-((-ln u)^theta + (-ln v)^theta)^(1/theta))."""
    if not (math.isfinite(theta) and theta >= 1.0):
        raise ValueError(f"Gumbel parameter must satisfy theta >= 1, got {theta}")
    uu = _unit_interval(u, "u")
    vv = _unit_interval(v, "v")
    if theta == 1.0:
        return _scalar_or_array(uu * vv)
    with np.errstate(divide="ignore", over="ignore"):
        lu = -np.log(uu)
        lv = -np.log(vv)
        g = (lu**theta + lv**theta) ** (1.0 / theta)
    return _scalar_or_array(np.exp(-g))


def sample_gumbel(n: int, theta: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` pairs from a Gumbel copula via its positive-stable frailty.

    Each pair consumes exactly one row of a single ``(n, 4)`` uniform block
    (stable angle, stable exponential, two frailty exponentials), so for a
    fixed seed the first ``m`` pairs of a size-``n`` draw coincide with a
    size-``m`` draw.  That prefix property is what makes nested-sample
    experiments meaningful.
    """
    if not (math.isfinite(theta) and theta >= 1.0):
        raise ValueError(f"Gumbel parameter must satisfy theta >= 1, got {theta}")
    if n < 0:
        raise ValueError("sample size must be non-negative")
    rng = _as_generator(seed)
    block = rng.random((n, 4))
    a = 1.0 / theta
    angle = np.clip(block[:, 0], 1e-12, 1.0 - 1e-12) * np.pi
    w = np.maximum(-np.log1p(-block[:, 1]), _TINY)
    e1 = -np.log1p(-block[:, 2])
    e2 = -np.log1p(-block[:, 3])
    # Positive stable S with Laplace transform exp(-t^a), Kanter's form.
    s = (
        (np.sin((1.0 - a) * angle) / w) ** ((1.0 - a) / a)
        * np.sin(a * angle)
        / np.sin(angle) ** (1.0 / a)
    )
    u = np.exp(-((e1 / s) ** a))
    v = np.exp(-((e2 / s) ** a))
    return (
        np.clip(u, _TINY, _ONE_MINUS),
        np.clip(v, _TINY, _ONE_MINUS),
    )


class GumbelCopula(CopulaModel):
    """Gumbel (logistic) copula with parameter theta >= 1."""

    def __init__(self, theta: float) -> None:
        if not (math.isfinite(theta) and theta >= 1.0):
            raise ValueError(f"Gumbel parameter must satisfy theta >= 1, got {theta}")
        self.theta = float(theta)

    @classmethod
    def from_kendall_tau(cls, tau: float) -> "GumbelCopula":
        return cls(tau_to_theta(tau))

    @property
    def kendall_tau(self) -> float:
        return 1.0 - 1.0 / self.theta

    def __repr__(self) -> str:
        return f"GumbelCopula(theta={self.theta!r})"

    def cdf(self, u, v):
        return gumbel_cdf(u, v, self.theta)

    def partial_v(self, u, v):
        uu = _unit_interval(u, "u")
        vv = np.clip(_unit_interval(v, "v"), _TINY, _ONE_MINUS)
        th = self.theta
        if th == 1.0:
            return _scalar_or_array(np.broadcast_arrays(uu, np.asarray(vv))[0] + 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            lu = -np.log(uu)
            lv = -np.log(vv)
            aa = lu**th + lv**th
            out = np.exp(-(aa ** (1.0 / th))) * lv ** (th - 1.0) / vv * aa ** (1.0 / th - 1.0)
        return _scalar_or_array(out)

    def sample(self, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
        return sample_gumbel(n, self.theta, seed)


class IndependenceCopula(CopulaModel):
    """C(u, v) = u v."""

    def cdf(self, u, v):
        return _scalar_or_array(_unit_interval(u, "u") * _unit_interval(v, "v"))

    def partial_v(self, u, v):
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        return _scalar_or_array(np.broadcast_arrays(uu, vv)[0] + 0.0)

    def sample(self, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
        rng = _as_generator(seed)
        block = rng.random((n, 2))
        return (
            np.clip(block[:, 0], _TINY, _ONE_MINUS),
            np.clip(block[:, 1], _TINY, _ONE_MINUS),
        )


class ComonotoneCopula(CopulaModel):
    """Upper Frechet bound C(u, v) = min(u, v): perfect positive dependence."""

    def cdf(self, u, v):
        return _scalar_or_array(
            np.minimum(_unit_interval(u, "u"), _unit_interval(v, "v"))
        )

    def partial_v(self, u, v):
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        return _scalar_or_array(np.where(vv < uu, 1.0, 0.0))

    def sample(self, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
        rng = _as_generator(seed)
        z = np.clip(rng.random(n), _TINY, _ONE_MINUS)
        return z, z.copy()


class CountermonotoneCopula(CopulaModel):
    """Lower Frechet bound C(u, v) = max(u + v - 1, 0)."""

    def cdf(self, u, v):
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        return _scalar_or_array(np.maximum(uu + vv - 1.0, 0.0))

    def partial_v(self, u, v):
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        return _scalar_or_array(np.where(uu + vv > 1.0, 1.0, 0.0))

    def sample(self, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
        rng = _as_generator(seed)
        z = np.clip(rng.random(n), _TINY, _ONE_MINUS)
        return z, 1.0 - z


@dataclass(frozen=True)
class PseudoObservations:
    """Average ranks of a paired sample, the input to rank-based copulas."""

    ranks_x: np.ndarray
    ranks_y: np.ndarray

    def __post_init__(self) -> None:
        rx = np.asarray(self.ranks_x, dtype=float)
        ry = np.asarray(self.ranks_y, dtype=float)
        if rx.ndim != 1 or rx.shape != ry.shape:
            raise ValueError("rank vectors must be 1-D and of equal length")
        if rx.size < 2:
            raise ValueError("pseudo-observations need at least two pairs")
        n = rx.size
        for r, name in ((rx, "ranks_x"), (ry, "ranks_y")):
            if np.any(r < 1.0) or np.any(r > n) or not np.all(np.isfinite(r)):
                raise ValueError(f"{name} must lie within [1, n]")
        rx.setflags(write=False)
        ry.setflags(write=False)
        object.__setattr__(self, "ranks_x", rx)
        object.__setattr__(self, "ranks_y", ry)

    @property
    def n(self) -> int:
        return self.ranks_x.size

    @property
    def u(self) -> np.ndarray:
        """Scaled ranks r / (n + 1), guaranteed inside (0, 1)."""
        return self.ranks_x / (self.n + 1.0)

    @property
    def v(self) -> np.ndarray:
        return self.ranks_y / (self.n + 1.0)


def pseudo_observations(x, y) -> PseudoObservations:
    """Average ranks of the paired sample ``(x, y)``.

    Rank-based, so any strictly increasing transform of either margin
    leaves the result unchanged; ties get their average rank.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.ndim != 1 or xa.shape != ya.shape:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if xa.size < 2:
        raise ValueError("pseudo-observations need at least two pairs")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise ValueError("input contains non-finite values")
    return PseudoObservations(
        stats.rankdata(xa, method="average"),
        stats.rankdata(ya, method="average"),
    )


def fit_beta_copula(pobs: PseudoObservations) -> "EmpiricalBetaCopula":
    """Empirical beta copula of a paired sample, from its rank vectors."""
    return EmpiricalBetaCopula(pobs.ranks_x, pobs.ranks_y)


class EmpiricalBetaCopula(CopulaModel):
    """Rank-based smooth copula estimator.

    C_hat(u, v) = (1/n) sum_i B(u; r_i, n+1-r_i) B(v; s_i, n+1-s_i) where B
    is the regularized incomplete beta function and (r_i, s_i) the ranks of
    the i-th pair.  Unlike the raw empirical copula it is a genuine smooth
    copula for every n, with exactly uniform margins.
    """

    _CHUNK_ELEMENTS = 4_000_000
    _CACHE_CAP = 256

    def __init__(self, ranks_x, ranks_y) -> None:
        pobs = PseudoObservations(
            np.array(ranks_x, dtype=float), np.array(ranks_y, dtype=float)
        )
        self._rx = pobs.ranks_x
        self._ry = pobs.ranks_y
        self.n = pobs.n
        self._cache: dict[tuple[int, float], np.ndarray] = {}

    def __repr__(self) -> str:
        return f"EmpiricalBetaCopula(n={self.n})"

    def _kernel(self, axis: int, p: float) -> np.ndarray:
        """Vector of B(p; r_i, n+1-r_i) along one margin, memoized because
        root searches re-evaluate the same first argument many times."""
        key = (axis, p)
        hit = self._cache.get(key)
        if hit is None:
            r = self._rx if axis == 0 else self._ry
            hit = special.betainc(r, self.n + 1.0 - r, p)
            if len(self._cache) >= self._CACHE_CAP:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def cdf(self, u, v):
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        if uu.ndim == 0 and vv.ndim == 0:
            bu = self._kernel(0, float(uu))
            bv = self._kernel(1, float(vv))
            return float(bu @ bv) / self.n
        ub, vb = np.broadcast_arrays(uu, vv)
        out = np.empty(ub.shape)
        flat_out = out.reshape(-1)
        if uu.ndim == 0:
            self._accumulate_scalar_side(0, float(uu), vb.reshape(-1), flat_out)
        elif vv.ndim == 0:
            self._accumulate_scalar_side(1, float(vv), ub.reshape(-1), flat_out)
        else:
            self._accumulate_general(ub.reshape(-1), vb.reshape(-1), flat_out)
        return out

    def _accumulate_scalar_side(self, axis, fixed, grid, out):
        b_fixed = self._kernel(axis, fixed)
        r = self._ry if axis == 0 else self._rx
        a_par, b_par = r, self.n + 1.0 - r
        step = max(1, self._CHUNK_ELEMENTS // self.n)
        for i in range(0, grid.size, step):
            sl = slice(i, i + step)
            m = special.betainc(a_par, b_par, grid[sl, None])
            out[sl] = (m @ b_fixed) / self.n

    def _accumulate_general(self, us, vs, out):
        a1, b1 = self._rx, self.n + 1.0 - self._rx
        a2, b2 = self._ry, self.n + 1.0 - self._ry
        step = max(1, self._CHUNK_ELEMENTS // self.n)
        for i in range(0, us.size, step):
            sl = slice(i, i + step)
            m1 = special.betainc(a1, b1, us[sl, None])
            m2 = special.betainc(a2, b2, vs[sl, None])
            out[sl] = np.einsum("ij,ij->i", m1, m2) / self.n

    def partial_v(self, u, v):
        uu = _unit_interval(u, "u")
        vv = _unit_interval(v, "v")
        a2, b2 = self._ry, self.n + 1.0 - self._ry
        if uu.ndim == 0 and vv.ndim == 0:
            bu = self._kernel(0, float(uu))
            dens = stats.beta.pdf(float(vv), a2, b2)
            return float(bu @ dens) / self.n
        ub, vb = np.broadcast_arrays(uu, vv)
        out = np.empty(ub.shape)
        flat_u, flat_v = ub.reshape(-1), vb.reshape(-1)
        flat_out = out.reshape(-1)
        a1, b1 = self._rx, self.n + 1.0 - self._rx
        step = max(1, self._CHUNK_ELEMENTS // self.n)
        for i in range(0, flat_u.size, step):
            sl = slice(i, i + step)
            m1 = special.betainc(a1, b1, flat_u[sl, None])
            m2 = stats.beta.pdf(flat_v[sl, None], a2, b2)
            flat_out[sl] = np.einsum("ij,ij->i", m1, m2) / self.n
        return out

    def sample(self, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
        rng = _as_generator(seed)
        idx = rng.integers(0, self.n, size=n)
        rx, ry = self._rx[idx], self._ry[idx]
        u = rng.beta(rx, self.n + 1.0 - rx)
        v = rng.beta(ry, self.n + 1.0 - ry)
        return (
            np.clip(u, _TINY, _ONE_MINUS),
            np.clip(v, _TINY, _ONE_MINUS),
        )
