"""Offspring, service and environment distribution families.

Offspring laws expose the CDF, the generalized inverse and the tail
behaviour the stepping kernels and the classifier need.  Environment laws
are characterized entirely by their Laplace-Stieltjes transform (LST),
its inverse, a sampler and the mean logarithm of the environment
variable.

All law objects are immutable after construction and safe to share
across threads; random generators are passed in by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

EULER_GAMMA = 0.5772156649015329

# States below this are indistinguishable from the absorbing state in
# double precision (Frechet quantile underflow near u -> 0).
NUMERIC_FLOOR = 1e-300


class NumericsError(RuntimeError):
    """Raised when an iterative numerical routine fails to converge."""


def _check_prob_open(u, name: str = "u") -> None:
    arr = np.asarray(u, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise ValueError(f"{name} must lie in the open interval (0, 1)")


# ---------------------------------------------------------------------------
# service laws
# ---------------------------------------------------------------------------

class ServiceLaw:
    """Service-time distribution B for the gated queue."""

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        """Survival function 1 - B(x)."""
        return 1.0 - self.cdf(x)

    def sf_inverse(self, p):
        """Generalized inverse of the survival function: inf{x : sf(x) <= p}."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ServiceLaw):
    mean: float

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError("mean must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, -np.expm1(-np.maximum(x, 0.0) / self.mean))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, np.exp(-np.maximum(x, 0.0) / self.mean))

    def sf_inverse(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            raise ValueError("p must be positive")
        return np.maximum(-self.mean * np.log(np.minimum(p, 1.0)), 0.0)

    def sample(self, rng, size=None):
        return rng.exponential(self.mean, size)


@dataclass(frozen=True)
class Deterministic(ServiceLaw):
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("value must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.value, 1.0, 0.0)

    def sf_inverse(self, p):
        p = np.asarray(p, dtype=float)
        return np.where(p >= 1.0, 0.0, self.value)

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)


@dataclass(frozen=True)
class Pareto(ServiceLaw):
    """Lomax-style Pareto with sf(x) = (1 + x/scale)^(-shape), support [0, inf)."""

    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("shape and scale must be positive")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, 1.0 - (1.0 + np.maximum(x, 0.0) / self.scale) ** (-self.shape))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, (1.0 + np.maximum(x, 0.0) / self.scale) ** (-self.shape))

    def sf_inverse(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            raise ValueError("p must be positive")
        return np.maximum(self.scale * (np.minimum(p, 1.0) ** (-1.0 / self.shape) - 1.0), 0.0)

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.scale * ((1.0 - u) ** (-1.0 / self.shape) - 1.0)


@dataclass(frozen=True)
class EmpiricalService(ServiceLaw):
    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.ndim != 1 or v.size == 0 or v.size != p.size:
            raise ValueError("values and probs must be nonempty and of equal length")
        if np.any(np.diff(v) <= 0):
            raise ValueError("values must be strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        if np.any(v < 0):
            raise ValueError("service times must be nonnegative")
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_cum", np.cumsum(p))

    def cdf(self, x):
        idx = np.searchsorted(self._v, np.asarray(x, dtype=float), side="right")
        cum = np.concatenate(([0.0], self._cum))
        return cum[idx]

    def sf_inverse(self, p):
        p = np.asarray(p, dtype=float)
        # inf{x : 1 - B(x) <= p} on a step CDF
        idx = np.searchsorted(self._cum, 1.0 - p, side="left")
        idx = np.minimum(idx, self._v.size - 1)
        return self._v[idx]

    def sample(self, rng, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cum, u, side="left")
        return self._v[np.minimum(idx, self._v.size - 1)]


# ---------------------------------------------------------------------------
# offspring laws
# ---------------------------------------------------------------------------

class OffspringLaw:
    """Descendant distribution F on the state set T.

    ``support`` is "continuous" (subset of the nonnegative reals) or
    "integer".  ``atom_at_zero`` is the mass F(0).  ``quantile_neg_log``
    evaluates the generalized inverse at exp(-t); closed forms avoid the
    underflow of forming exp(-t) explicitly when t is huge.
    """

    support = "continuous"

    @property
    def atom_at_zero(self) -> float:
        return float(self.cdf(0.0))

    @property
    def zeta_transformable(self) -> bool:
        """True when F is continuous, strictly increasing and F(0) = 0."""
        return False

    def cdf(self, x):
        raise NotImplementedError

    def neg_log_cdf(self, x):
        """-ln F(x); may be +inf where F(x) = 0."""
        with np.errstate(divide="ignore"):
            return -np.log(self.cdf(x))

    def quantile(self, u):
        """Generalized inverse inf{x : F(x) >= u} for u in (0, 1)."""
        _check_prob_open(u)
        return self.quantile_neg_log(-np.log(u))

    def quantile_neg_log(self, t):
        """quantile(exp(-t)) for t > 0, stable for extreme t."""
        raise NotImplementedError


@dataclass(frozen=True)
class Frechet(OffspringLaw):
    """F(x) = exp{-(x/c)^(-beta)} on (0, inf)."""

    c: float
    beta: float
    unit: bool = False

    def __post_init__(self):
        if self.c <= 0 or self.beta <= 0:
            raise ValueError("c and beta must be positive")

    support = "continuous"

    @property
    def atom_at_zero(self) -> float:
        return 0.0

    @property
    def zeta_transformable(self) -> bool:
        return True

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.exp(-np.where(x > 0, x / self.c, np.inf) ** (-self.beta))
        return np.where(x > 0, out, 0.0)

    def neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, (x / self.c) ** (-self.beta), np.inf)

    def quantile_neg_log(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        with np.errstate(divide="ignore"):
            return self.c * t ** (-1.0 / self.beta)


def UnitFrechet(beta: float) -> Frechet:
    """F(x) = exp{-x^(-beta)}."""
    return Frechet(1.0, beta, unit=True)


@dataclass(frozen=True)
class GumbelShifted(OffspringLaw):
    """F(x) = exp{-e^(-(x-m))} truncated to [0, inf); F(0) acts as an atom."""

    m: float

    support = "continuous"

    @property
    def atom_at_zero(self) -> float:
        return math.exp(-math.exp(self.m))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.exp(-np.exp(-(np.maximum(x, 0.0) - self.m))))

    def neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, np.inf, np.exp(-(np.maximum(x, 0.0) - self.m)))

    def quantile_neg_log(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        with np.errstate(divide="ignore"):
            return np.maximum(self.m - np.log(t), 0.0)


@dataclass(frozen=True)
class QueueInduced(OffspringLaw):
    """F(x) = exp{-lam * (1 - B(x))}, the law induced by the gated queue."""

    lam: float
    service: ServiceLaw

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    support = "continuous"

    @property
    def atom_at_zero(self) -> float:
        return float(np.exp(-self.lam * self.service.sf(0.0)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.exp(-self.lam * self.service.sf(np.maximum(x, 0.0))))

    def neg_log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, np.inf, self.lam * self.service.sf(np.maximum(x, 0.0)))

    def quantile_neg_log(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        sf0 = float(np.asarray(self.service.sf(0.0)))
        hit_atom = t >= self.lam * sf0
        safe = np.where(hit_atom, self.lam * sf0 / 2.0, t)
        return np.where(hit_atom, 0.0, self.service.sf_inverse(safe / self.lam))


@dataclass(frozen=True)
class IntegerTail(OffspringLaw):
    """Discrete law on the positive integers with 1 - F(k) = q/k.

    F(k) = 1 - q/k for k >= floor(q) + 1 and 0 below, so the tail
    functional x * (1 - F(x)) is exactly q on the support.
    """

    q: float

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be positive")

    support = "integer"

    @property
    def k_min(self) -> int:
        return int(math.floor(self.q)) + 1

    @property
    def atom_at_zero(self) -> float:
        return 0.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(x)
        with np.errstate(divide="ignore"):
            out = 1.0 - self.q / np.where(k >= self.k_min, k, np.inf)
        return np.where(k >= self.k_min, out, 0.0)

    def quantile(self, u):
        _check_prob_open(u)
        u = np.asarray(u, dtype=float)
        return np.maximum(np.ceil(self.q / (1.0 - u)), self.k_min)

    def quantile_neg_log(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        one_minus_u = -np.expm1(-t)
        with np.errstate(divide="ignore"):
            return np.maximum(np.ceil(self.q / one_minus_u), self.k_min)


@dataclass(frozen=True)
class Empirical(OffspringLaw):
    """Tabulated law: sorted values with a step CDF; generalized inverse is exact."""

    values: tuple
    probs: tuple
    integer: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.ndim != 1 or v.size == 0 or v.size != p.size:
            raise ValueError("values and probs must be nonempty and of equal length")
        if np.any(np.diff(v) <= 0):
            raise ValueError("values must be strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        if np.any(v < 0):
            raise ValueError("offspring values must be nonnegative")
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_cum", np.cumsum(p))

    @property
    def support(self):  # type: ignore[override]
        return "integer" if self.integer else "continuous"

    @property
    def atom_at_zero(self) -> float:
        if self._v[0] == 0.0:
            return float(self._cum[0])
        return 0.0

    def cdf(self, x):
        idx = np.searchsorted(self._v, np.asarray(x, dtype=float), side="right")
        cum = np.concatenate(([0.0], self._cum))
        return cum[idx]

    def quantile(self, u):
        _check_prob_open(u)
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(self._cum, u, side="left")
        return self._v[np.minimum(idx, self._v.size - 1)]

    def quantile_neg_log(self, t):
        t = np.asarray(t, dtype=float)
        u = -np.expm1(-t)  # 1 - exp(-t)
        idx = np.searchsorted(self._cum, 1.0 - u, side="left")
        return self._v[np.minimum(idx, self._v.size - 1)]


# ---------------------------------------------------------------------------
# environment laws
# ---------------------------------------------------------------------------

class EnvironmentLaw:
    """Environment variable nu with distribution G, seen through its LST.

    ``lst`` is phi(u) = E exp(-u nu), convex and strictly decreasing with
    phi(0) = 1.  ``lst_inverse`` inverts phi on (0, 1); closed forms are
    used where available, otherwise monotone bracketing plus Brent.
    ``mean_log_nu`` returns E ln nu, +inf for super-heavy tails, or None
    when unknown.
    """

    def lst(self, u):
        raise NotImplementedError

    def lst_inverse(self, v):
        _check_prob_open(v, "v")
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            return self._invert_scalar(float(v))
        return np.array([self._invert_scalar(float(x)) for x in v.ravel()]).reshape(v.shape)

    def _invert_scalar(self, v: float) -> float:
        hi = 1.0
        for _ in range(2000):
            if self.lst(hi) <= v:
                break
            hi *= 2.0
        else:
            raise NumericsError(f"lst_inverse: no upper bracket for v={v!r}")
        lo = 0.0
        try:
            root = brentq(lambda u: self.lst(u) - v, lo, hi, xtol=1e-15, rtol=8.9e-16,
                          maxiter=200)
        except Exception as exc:  # pragma: no cover - defensive
            raise NumericsError(f"lst_inverse failed for v={v!r}: {exc}") from exc
        if abs(self.lst(root) - v) > 1e-10:
            raise NumericsError(f"lst_inverse residual too large at v={v!r}")
        return float(root)

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def sample_log(self, rng: np.random.Generator, size=None):
        """Sample ln(nu); overridden where forming nu itself would overflow."""
        return np.log(self.sample(rng, size))

    def mean_log_nu(self):
        return None


@dataclass(frozen=True)
class Degenerate(EnvironmentLaw):
    """Point mass nu = a; phi(u) = exp(-a*u).  a = 1 is the no-environment case."""

    a: float

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be positive")

    def lst(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("u must be nonnegative")
        return np.exp(-self.a * u)

    def lst_inverse(self, v):
        _check_prob_open(v, "v")
        return -np.log(np.asarray(v, dtype=float)) / self.a

    def sample(self, rng, size=None):
        if size is None:
            return self.a
        return np.full(size, self.a)

    def mean_log_nu(self):
        return math.log(self.a)


@dataclass(frozen=True)
class ExponentialEnv(EnvironmentLaw):
    """Exponential nu with mean theta; phi(u) = (1 + theta*u)^(-1)."""

    theta: float

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    def lst(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("u must be nonnegative")
        return 1.0 / (1.0 + self.theta * u)

    def lst_inverse(self, v):
        _check_prob_open(v, "v")
        v = np.asarray(v, dtype=float)
        return (1.0 / v - 1.0) / self.theta

    def sample(self, rng, size=None):
        return rng.exponential(self.theta, size)

    def mean_log_nu(self):
        return math.log(self.theta) - EULER_GAMMA


@dataclass(frozen=True)
class StrictlyStable(EnvironmentLaw):
    """One-sided strictly stable nu: phi(u) = exp(-c * u^alpha), 0 < alpha < 1."""

    alpha: float
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def lst(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("u must be nonnegative")
        return np.exp(-self.c * u ** self.alpha)

    def lst_inverse(self, v):
        _check_prob_open(v, "v")
        v = np.asarray(v, dtype=float)
        return (-np.log(v) / self.c) ** (1.0 / self.alpha)

    def sample(self, rng, size=None):
        """Kanter / Chambers-Mallows-Stuck one-sided stable generator."""
        a = self.alpha
        theta = rng.uniform(0.0, np.pi, size)
        w = rng.exponential(1.0, size)
        x = (np.sin(a * theta) / np.sin(theta) ** (1.0 / a)) \
            * (np.sin((1.0 - a) * theta) / w) ** ((1.0 - a) / a)
        return self.c ** (1.0 / a) * x

    def mean_log_nu(self):
        return (EULER_GAMMA * (1.0 - self.alpha) + math.log(self.c)) / self.alpha


@dataclass(frozen=True)
class HeavyLogTail(EnvironmentLaw):
    """G(x) = 1 - 1/ln(x) for x >= e; E ln nu = +inf (super-heavy tail)."""

    def lst(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("u must be nonnegative")
        if u.ndim == 0:
            return self._lst_scalar(float(u))
        return np.array([self._lst_scalar(float(x)) for x in u.ravel()]).reshape(u.shape)

    @staticmethod
    def _lst_scalar(u: float) -> float:
        if u == 0.0:
            return 1.0
        # substitute t = ln x: integral over (1, inf) of exp(-u e^t)/t^2
        log_u = math.log(u)

        def integrand(t):
            if log_u + t > 7.0:  # exponent above ~1100: the term underflows
                return 0.0
            return math.exp(-u * math.exp(t)) / t ** 2

        val, _ = quad(integrand, 1.0, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)
        return val

    def sample(self, rng, size=None):
        u = rng.random(size)
        with np.errstate(over="ignore"):
            return np.exp(1.0 / (1.0 - u))

    def sample_log(self, rng, size=None):
        # ln(nu) = 1/(1-U) has exactly the 1/x tail; avoids exp overflow
        u = rng.random(size)
        return 1.0 / (1.0 - u)

    def mean_log_nu(self):
        return math.inf


@dataclass(frozen=True)
class EmpiricalEnv(EnvironmentLaw):
    """Finite table of environment values; phi is a finite exponential sum."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.ndim != 1 or v.size == 0 or v.size != p.size:
            raise ValueError("values and probs must be nonempty and of equal length")
        if np.any(v <= 0):
            raise ValueError("environment values must be positive")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_p", p)
        object.__setattr__(self, "_cum", np.cumsum(p))

    def lst(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("u must be nonnegative")
        return np.exp(-np.multiply.outer(u, self._v)) @ self._p

    def sample(self, rng, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cum, u, side="left")
        return self._v[np.minimum(idx, self._v.size - 1)]

    def mean_log_nu(self):
        return float(np.dot(self._p, np.log(self._v)))
