"""Regime analysis: the drift constant, tail functionals and classification.

The chain transformed through the Gumbel quantile is an autoregression
whose noise has mean ``delta = gamma + E ln nu``; ``exp(-delta)`` is the
threshold the tail functional ``x * (-ln F(x))`` is compared against at
both ends of the state space.  For integer chains without environment the
comparison constant is ``exp(-gamma)`` with the pi^2/12 refinement in the
critical case.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .laws import (
    EULER_GAMMA,
    Degenerate,
    Deterministic,
    Empirical,
    EnvironmentLaw,
    Exponential,
    Frechet,
    GumbelShifted,
    HeavyLogTail,
    IntegerTail,
    OffspringLaw,
    Pareto,
    QueueInduced,
)
from .process import sample_eta, step_mbpplre, _open_uniform

PI2_OVER_12 = math.pi ** 2 / 12.0

# Below this separation from the threshold, a grid-based liminf estimate
# must not masquerade as a verdict.
NUMERIC_MARGIN = 1e-3

VERDICT_ERGODIC = "Ergodic"
VERDICT_DEGENERATE = "Degenerate"
VERDICT_TRANSIENT = "Transient"
VERDICT_CRITICAL = "Critical"
VERDICT_INDETERMINATE = "Indeterminate"


# ---------------------------------------------------------------------------
# drift constant
# ---------------------------------------------------------------------------

@dataclass
class DriftReport:
    delta: float
    method: str  # "closed-form" or "quadrature"
    delta_closed: Optional[float]
    delta_quadrature: Optional[float]
    quadrature_error_estimate: float
    indeterminate: bool = False

    @property
    def e_minus_delta(self) -> float:
        return math.exp(-self.delta) if math.isfinite(self.delta) else 0.0


def compute_delta(env: EnvironmentLaw, cross_check: bool = True) -> DriftReport:
    """Mean of the autoregression noise: gamma + E ln nu, cross-checked by
    quadrature of the noise CDF phi(e^{-x}) when the integrals converge."""
    mean_log = env.mean_log_nu()
    delta_closed = None if mean_log is None else EULER_GAMMA + mean_log

    delta_quad = None
    quad_err = math.inf
    if delta_closed is None or (cross_check and math.isfinite(delta_closed)):
        try:
            delta_quad, quad_err = _delta_quadrature(env)
        except Exception:
            delta_quad = None

    if delta_closed is not None:
        return DriftReport(delta=delta_closed, method="closed-form",
                           delta_closed=delta_closed, delta_quadrature=delta_quad,
                           quadrature_error_estimate=quad_err)
    if delta_quad is not None:
        return DriftReport(delta=delta_quad, method="quadrature",
                           delta_closed=None, delta_quadrature=delta_quad,
                           quadrature_error_estimate=quad_err)
    return DriftReport(delta=math.nan, method="quadrature", delta_closed=None,
                       delta_quadrature=None, quadrature_error_estimate=math.inf,
                       indeterminate=True)


def _delta_quadrature(env: EnvironmentLaw) -> tuple[float, float]:
    # delta = int_0^inf (1 - phi(e^{-x})) dx - int_0^inf phi(e^x) dx;
    # substitute t = e^{-x} resp. s = e^x so both integrands are monotone.
    def upper(t):
        return (1.0 - float(env.lst(t))) / t

    def lower(s):
        return float(env.lst(s)) / s

    i1, e1 = quad(upper, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10, limit=400)
    i2, e2 = quad(lower, 1.0, np.inf, epsabs=1e-10, epsrel=1e-10, limit=400)
    err = e1 + e2
    if err > 1e-8:
        raise RuntimeError(f"quadrature error estimate {err:g} above tolerance")
    return i1 - i2, err


# ---------------------------------------------------------------------------
# tail functionals
# ---------------------------------------------------------------------------

@dataclass
class TailFunctionals:
    """Limits of x*(-ln F(x)) (continuous) or x*(1-F(x)) (integer laws)."""

    liminf_at_infinity: float
    limsup_at_infinity: float
    liminf_at_zero: float
    critical_d: Optional[float]
    mode: str  # "analytic" or "numeric-grid"


def tail_functionals(law: OffspringLaw) -> TailFunctionals:
    if isinstance(law, Frechet):
        # x * (-ln F(x)) = c^beta * x^(1-beta)
        if law.beta > 1.0:
            return TailFunctionals(0.0, 0.0, math.inf, None, "analytic")
        if law.beta < 1.0:
            return TailFunctionals(math.inf, math.inf, 0.0, None, "analytic")
        return TailFunctionals(law.c, law.c, law.c, None, "analytic")
    if isinstance(law, GumbelShifted):
        # x * e^{m - x} vanishes at both ends
        return TailFunctionals(0.0, 0.0, 0.0, None, "analytic")
    if isinstance(law, QueueInduced):
        return _queue_tails(law)
    if isinstance(law, IntegerTail):
        d = _integer_tail_critical_d(law.q)
        return TailFunctionals(law.q, law.q, 0.0, d, "analytic")
    return _numeric_tails(law)


def _integer_tail_critical_d(q: float) -> float:
    scaled = math.exp(EULER_GAMMA) * q - 1.0
    if scaled == 0.0:
        return 0.0
    return math.copysign(math.inf, scaled)


def _queue_tails(law: QueueInduced) -> TailFunctionals:
    service = law.service
    lam = law.lam
    if isinstance(service, (Exponential, Deterministic)):
        return TailFunctionals(0.0, 0.0, 0.0, None, "analytic")
    if isinstance(service, Pareto):
        if service.shape > 1.0:
            at_inf = 0.0
        elif service.shape < 1.0:
            at_inf = math.inf
        else:
            at_inf = lam * service.scale
        return TailFunctionals(at_inf, at_inf, 0.0, None, "analytic")
    return _numeric_tails(law)


def _numeric_tails(law: OffspringLaw) -> TailFunctionals:
    xs = np.logspace(-8.0, 8.0, 321)
    if law.support == "integer":
        ks = np.unique(np.ceil(np.logspace(0.0, 8.0, 161)))
        g = ks * (1.0 - np.asarray(law.cdf(ks), dtype=float))
        top = g[ks >= 1e6]
        return TailFunctionals(float(np.min(top)), float(np.max(top)), 0.0,
                               None, "numeric-grid")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        g = xs * np.asarray(law.neg_log_cdf(xs), dtype=float)
    top = g[xs >= 1e6]
    bottom = g[xs <= 1e-6]
    return TailFunctionals(float(np.min(top)), float(np.max(top)),
                           float(np.min(bottom)), None, "numeric-grid")


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class Classification:
    verdict: str
    delta: float
    threshold: float
    margins: dict = field(default_factory=dict)
    conditions_cited: list = field(default_factory=list)
    direction: Optional[str] = None

    def to_json_dict(self) -> dict:
        def enc(x):
            if x is None or isinstance(x, str):
                return x
            if math.isnan(x):
                return "nan"
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x
        return {
            "verdict": self.verdict,
            "delta": enc(self.delta),
            "threshold": enc(self.threshold),
            "margins": {k: enc(v) for k, v in self.margins.items()},
            "conditions_cited": list(self.conditions_cited),
            "direction": self.direction,
        }


def classify(law: OffspringLaw, env: EnvironmentLaw) -> Classification:
    """Regime verdict from tail functionals against exp(-delta).

    Decision order: degeneracy (positive atom with light upper tail),
    ergodicity (light upper tail, heavy lower tail), the integer
    no-environment recurrence criteria, the beta = 1 Frechet random walk,
    otherwise Indeterminate with margins.
    """
    drift = compute_delta(env)
    delta = drift.delta
    threshold = drift.e_minus_delta
    tails = tail_functionals(law)
    numeric = tails.mode == "numeric-grid"

    margins = {
        "liminf_at_infinity_minus_threshold": tails.liminf_at_infinity - threshold,
        "liminf_at_zero_minus_threshold": tails.liminf_at_zero - threshold,
        "atom_at_zero": law.atom_at_zero,
    }

    def separated(value: float, ref: float) -> bool:
        if not numeric:
            return True
        return abs(value - ref) >= NUMERIC_MARGIN

    below_at_inf = tails.liminf_at_infinity < threshold and \
        separated(tails.liminf_at_infinity, threshold)
    above_at_zero = tails.liminf_at_zero > threshold and \
        separated(tails.liminf_at_zero, threshold)

    # (i) positive atom at zero plus a light upper tail: absorption wins
    if law.atom_at_zero > 0.0 and below_at_inf:
        return Classification(VERDICT_DEGENERATE, delta, threshold, margins,
                              ["atom-at-zero-with-light-upper-tail"])

    # (ii) light upper tail and heavy lower tail: ergodic
    if below_at_inf and above_at_zero:
        return Classification(VERDICT_ERGODIC, delta, threshold, margins,
                              ["upper-tail-below-threshold",
                               "lower-tail-above-threshold"])

    # (iii) integer chain without environment: classical recurrence criteria
    if law.support == "integer" and isinstance(env, Degenerate) and env.a == 1.0:
        e_gamma = math.exp(-EULER_GAMMA)
        margins["limsup_at_infinity_minus_e_minus_gamma"] = \
            tails.limsup_at_infinity - e_gamma
        if tails.limsup_at_infinity < e_gamma and separated(tails.limsup_at_infinity, e_gamma):
            return Classification(VERDICT_ERGODIC, delta, e_gamma, margins,
                                  ["integer-tail-below-recurrence-threshold"])
        if tails.liminf_at_infinity > e_gamma and separated(tails.liminf_at_infinity, e_gamma):
            return Classification(VERDICT_TRANSIENT, delta, e_gamma, margins,
                                  ["integer-tail-above-recurrence-threshold"],
                                  direction="to_infinity")
        d = tails.critical_d
        if d is not None:
            margins["critical_drift_minus_pi2_over_12"] = d - PI2_OVER_12
            if d < PI2_OVER_12:
                return Classification(VERDICT_ERGODIC, delta, e_gamma, margins,
                                      ["critical-drift-below-pi2-over-12"])
            if d > PI2_OVER_12:
                return Classification(VERDICT_TRANSIENT, delta, e_gamma, margins,
                                      ["critical-drift-above-pi2-over-12"],
                                      direction="to_infinity")
            return Classification(VERDICT_CRITICAL, delta, e_gamma, margins,
                                  ["critical-drift-at-pi2-over-12"])
        return Classification(VERDICT_INDETERMINATE, delta, e_gamma, margins,
                              ["critical-drift-undefined"])

    # (iv) beta = 1 Frechet: transformed chain is a simple random walk.
    # Exact equality with the threshold is decided on closed forms only.
    if isinstance(law, Frechet) and law.beta == 1.0 and not math.isnan(delta):
        if law.c > threshold:
            return Classification(VERDICT_TRANSIENT, delta, threshold, margins,
                                  ["random-walk-positive-drift"],
                                  direction="to_infinity")
        if law.c < threshold:
            return Classification(VERDICT_TRANSIENT, delta, threshold, margins,
                                  ["random-walk-negative-drift"],
                                  direction="to_zero")
        return Classification(VERDICT_CRITICAL, delta, threshold, margins,
                              ["random-walk-zero-drift"])

    return Classification(VERDICT_INDETERMINATE, delta, threshold, margins,
                          ["no-criterion-applies"])


# ---------------------------------------------------------------------------
# stationary moments for the Frechet / stable pair
# ---------------------------------------------------------------------------

@dataclass
class MomentResult:
    value: float
    n_terms: int
    remainder_bound: float

    def __float__(self):
        return self.value


def stationary_moment_frechet_stable(alpha: float, beta: float, s: float,
                                     term_tol: float = 1e-14) -> MomentResult:
    """E of the s-th power of the stationary state for a unit-scale stable
    environment and unit Frechet offspring: the product over n >= 1 of
    Gamma(1 - s / (alpha * beta^n)), evaluated as a sum of log-gamma terms."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if beta <= 1.0:
        raise ValueError("beta must exceed 1")
    if not 0.0 < s < alpha * beta:
        raise ValueError("moment exists only for s in (0, alpha*beta)")
    log_sum = 0.0
    n = 0
    while True:
        n += 1
        term = float(gammaln(1.0 - s / (alpha * beta ** n)))
        log_sum += term
        if abs(term) < term_tol:
            break
        if n > 10_000:  # pragma: no cover - defensive
            raise RuntimeError("log-gamma product failed to truncate")
    # terms decay geometrically with ratio 1/beta: bound the dropped tail
    remainder = abs(term) / (beta - 1.0)
    return MomentResult(value=math.exp(log_sum), n_terms=n, remainder_bound=remainder)


# ---------------------------------------------------------------------------
# super-heavy environment: convergence of the discounted noise series
# ---------------------------------------------------------------------------

@dataclass
class SeriesReport:
    stabilized_fraction: float
    increment_tol: float
    tail_product: float
    tail_product_se: float
    tail_x: float
    n_paths: int
    n_terms: int


def delta_infinite_series_check(beta: float, env: EnvironmentLaw, n_paths: int,
                                seed: int = 0, n_terms: int = 120,
                                stable_after: int = 50,
                                increment_tol: float = 1e-6,
                                tail_n: int = 10 ** 6,
                                tail_x: float = 100.0) -> SeriesReport:
    """Monte Carlo check that the series sum_n beta^{-n} eta_n converges.

    Reports the fraction of paths whose partial-sum increments after
    ``stable_after`` terms all stay below ``increment_tol``, and the
    empirical x * P(eta > x) at ``tail_x``.
    """
    if beta <= 1.0:
        raise ValueError("beta must exceed 1")
    rng = np.random.default_rng(seed)
    eta = sample_eta(env, rng, (n_paths, n_terms))
    weights = beta ** (-np.arange(n_terms, dtype=float))
    increments = np.abs(eta * weights)
    stabilized = np.all(increments[:, stable_after:] < increment_tol, axis=1)

    eta_tail = sample_eta(env, rng, tail_n)
    p_hat = float(np.mean(eta_tail > tail_x))
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / tail_n)
    return SeriesReport(stabilized_fraction=float(np.mean(stabilized)),
                        increment_tol=increment_tol,
                        tail_product=tail_x * p_hat,
                        tail_product_se=tail_x * se,
                        tail_x=tail_x, n_paths=n_paths, n_terms=n_terms)


# ---------------------------------------------------------------------------
# numerical drift probe
# ---------------------------------------------------------------------------

@dataclass
class DriftProbeRow:
    x: float
    drift: float
    std_err: float


def drift_probe(law: OffspringLaw, env: EnvironmentLaw, xs, x1: float = 0.5,
                x2: float = 2.0, n_samples: int = 20_000,
                seed: int = 0) -> list[DriftProbeRow]:
    """Monte Carlo estimate of the one-step change of the log-distance
    potential g(x) = ln(x/x2)_+ + ln(x1/x)_+ at each probe state."""
    if x1 > x2:
        raise ValueError("x1 must not exceed x2")
    rng = np.random.default_rng(seed)

    def g(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            up = np.where(z > 0, np.maximum(np.log(z / x2), 0.0), 0.0)
            down = np.where(z > 0, np.maximum(np.log(x1 / z), 0.0), np.inf)
        return up + down

    rows = []
    for x in xs:
        u = _open_uniform(rng, n_samples)
        z1 = np.asarray(step_mbpplre(float(x), u, law, env), dtype=float)
        vals = g(z1) - g(float(x))
        rows.append(DriftProbeRow(x=float(x), drift=float(np.mean(vals)),
                                  std_err=float(np.std(vals, ddof=1) / math.sqrt(n_samples))))
    return rows
