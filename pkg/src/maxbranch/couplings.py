"""Shared-uniform couplings, scaling transport and stationary estimation.

Two chains fed bitwise-identical uniforms preserve the ordering of their
initial states and of their (stochastically ordered) laws pathwise; these
checks are exact, not statistical.  Distributional claims (association,
stationary-law ordering) are verified by one-sided statistical gates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from .analysis import VERDICT_DEGENERATE, VERDICT_ERGODIC, classify
from .laws import Degenerate, EnvironmentLaw, Frechet, OffspringLaw
from .process import (
    MBPPLRE,
    ProcessSpec,
    Trajectory,
    _open_uniform,
    batch_states,
    absorption_curve,
    step_mbpplre,
    terminal_states,
)


class OrderCertificateError(ValueError):
    """The claimed stochastic ordering of the input laws does not hold."""


class CouplingViolationError(AssertionError):
    """A pathwise ordering invariant failed; this is a bug, not a statistic."""


# ---------------------------------------------------------------------------
# stochastic-order certificates
# ---------------------------------------------------------------------------

ORDER_GRID_SIZE = 1000


def certify_offspring_order(low: OffspringLaw, high: OffspringLaw,
                            grid: Optional[np.ndarray] = None) -> None:
    """Check F_low(x) >= F_high(x) everywhere (low precedes high).

    Frechet pairs with equal shape are ordered analytically by the scale;
    other pairs are checked on a shared evaluation grid.
    """
    if isinstance(low, Frechet) and isinstance(high, Frechet) and low.beta == high.beta:
        if low.c <= high.c:
            return
        raise OrderCertificateError("Frechet scales are not ordered")
    if grid is None:
        grid = np.logspace(-6, 6, ORDER_GRID_SIZE)
    f_low = np.asarray(low.cdf(grid), dtype=float)
    f_high = np.asarray(high.cdf(grid), dtype=float)
    if np.any(f_low < f_high - 1e-12):
        raise OrderCertificateError("offspring CDFs are not pointwise ordered")


def certify_environment_order(low: EnvironmentLaw, high: EnvironmentLaw,
                              grid: Optional[np.ndarray] = None) -> None:
    """Check phi_low(u) >= phi_high(u) for u > 0, implied by G_low preceding G_high."""
    if isinstance(low, Degenerate) and isinstance(high, Degenerate):
        if low.a <= high.a:
            return
        raise OrderCertificateError("degenerate environments are not ordered")
    if grid is None:
        grid = np.logspace(-6, 6, ORDER_GRID_SIZE)
    phi_low = np.asarray(low.lst(grid), dtype=float)
    phi_high = np.asarray(high.lst(grid), dtype=float)
    if np.any(phi_low < phi_high - 1e-12):
        raise OrderCertificateError("environment LSTs are not pointwise ordered")


def certify_initial_order(low, high) -> None:
    if isinstance(low, (int, float)) and isinstance(high, (int, float)):
        if float(low) <= float(high):
            return
        raise OrderCertificateError("initial states are not ordered")
    us = np.linspace(1e-6, 1.0 - 1e-6, ORDER_GRID_SIZE)
    q_low = np.asarray(_quantile_of_initial(low, us), dtype=float)
    q_high = np.asarray(_quantile_of_initial(high, us), dtype=float)
    if np.any(q_low > q_high + 1e-12):
        raise OrderCertificateError("initial laws are not ordered")


def _quantile_of_initial(initial, u):
    if isinstance(initial, (int, float)):
        return np.full(np.shape(u), float(initial))
    return initial.quantile(u)


# ---------------------------------------------------------------------------
# coupled pairs
# ---------------------------------------------------------------------------

@dataclass
class CoupledPair:
    spec_low: ProcessSpec
    spec_high: ProcessSpec
    shared_seed: int
    low: Trajectory
    high: Trajectory


def _coupled_run(spec_low: ProcessSpec, spec_high: ProcessSpec, n: int,
                 seed: int) -> CoupledPair:
    """Run two chains in lockstep on identical uniforms, asserting ordering."""
    rng = np.random.default_rng(seed)
    u0 = _open_uniform(rng)
    z_low = spec_low.draw_initial(u=u0)
    z_high = spec_high.draw_initial(u=u0)
    lo = np.empty(n + 1)
    hi = np.empty(n + 1)
    lo[0], hi[0] = z_low, z_high
    abs_low = 0 if z_low == 0 else None
    abs_high = 0 if z_high == 0 else None
    for k in range(1, n + 1):
        u = _open_uniform(rng)
        if z_low > 0:
            z_low = float(step_mbpplre(z_low, u, spec_low.offspring, spec_low.environment))
            if z_low == 0 and abs_low is None:
                abs_low = k
        if z_high > 0:
            z_high = float(step_mbpplre(z_high, u, spec_high.offspring, spec_high.environment))
            if z_high == 0 and abs_high is None:
                abs_high = k
        if z_low > z_high:
            raise CouplingViolationError(
                f"ordering violated at step {k}: {z_low!r} > {z_high!r}")
        lo[k], hi[k] = z_low, z_high
    return CoupledPair(spec_low=spec_low, spec_high=spec_high, shared_seed=seed,
                       low=Trajectory(lo, seed, abs_low),
                       high=Trajectory(hi, seed, abs_high))


def coupled_monotone_paths(z0_low: float, z0_high: float, spec: ProcessSpec,
                           n: int, seed: int) -> CoupledPair:
    """Same laws, ordered initial states: the paths stay ordered exactly."""
    if z0_low > z0_high:
        raise OrderCertificateError("z0_low must not exceed z0_high")
    spec_low = ProcessSpec(MBPPLRE, spec.offspring, spec.environment, float(z0_low))
    spec_high = ProcessSpec(MBPPLRE, spec.offspring, spec.environment, float(z0_high))
    return _coupled_run(spec_low, spec_high, n, seed)


def coupled_parameter_paths(spec_low: ProcessSpec, spec_high: ProcessSpec,
                            n: int, seed: int) -> CoupledPair:
    """Ordered laws (offspring, environment, initial) give ordered paths."""
    certify_offspring_order(spec_low.offspring, spec_high.offspring)
    certify_environment_order(spec_low.environment, spec_high.environment)
    certify_initial_order(spec_low.initial, spec_high.initial)
    return _coupled_run(spec_low, spec_high, n, seed)


# ---------------------------------------------------------------------------
# scaling transport
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledLaw(OffspringLaw):
    """The offspring law of the state-scaled chain: F(x/lam)^(1/lam)."""

    base: OffspringLaw
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    support = "continuous"

    @property
    def atom_at_zero(self) -> float:
        return float(self.base.atom_at_zero) ** (1.0 / self.lam)

    @property
    def zeta_transformable(self) -> bool:
        return self.base.zeta_transformable

    def cdf(self, x):
        return np.asarray(self.base.cdf(np.asarray(x, dtype=float) / self.lam)) \
            ** (1.0 / self.lam)

    def neg_log_cdf(self, x):
        return np.asarray(self.base.neg_log_cdf(np.asarray(x, dtype=float) / self.lam)) \
            / self.lam

    def quantile_neg_log(self, t):
        return self.lam * np.asarray(self.base.quantile_neg_log(self.lam * np.asarray(t, dtype=float)))


def scaling_transport(law: OffspringLaw, lam: float) -> OffspringLaw:
    """Offspring law for the lam-scaled chain; Frechet maps to Frechet with
    scale c * lam^(1 - 1/beta)."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if isinstance(law, Frechet):
        return Frechet(law.c * lam ** (1.0 - 1.0 / law.beta), law.beta)
    return ScaledLaw(law, lam)


def check_scaling_transport(law: OffspringLaw, env: EnvironmentLaw, lams,
                            n_cases: int = 10_000, seed: int = 0) -> float:
    """Max relative mismatch of lam*step(z, u; F) vs step(lam*z, u; F_lam)
    over random (z, u, lam); the identity is exact up to rounding."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for lam in np.atleast_1d(lams):
        lam = float(lam)
        scaled = scaling_transport(law, lam)
        z = np.exp(rng.uniform(-3, 3, n_cases))
        u = _open_uniform(rng, n_cases)
        lhs = lam * np.asarray(step_mbpplre(z, u, law, env), dtype=float)
        rhs = np.asarray(step_mbpplre(lam * z, u, scaled, env), dtype=float)
        rel = np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-300)
        worst = max(worst, float(np.max(rel)))
    return worst


# ---------------------------------------------------------------------------
# association
# ---------------------------------------------------------------------------

@dataclass
class AssociationRow:
    name: str
    covariance: float
    std_err: float
    ok: bool


def association_test(spec: ProcessSpec, indices: Sequence[int], n_samples: int,
                     seed: int = 0,
                     extra_pairs: Optional[Sequence[tuple[str, Callable, Callable]]] = None
                     ) -> list[AssociationRow]:
    """One-sided check that nondecreasing functionals of the path have
    nonnegative covariance: every estimate must exceed -4 standard errors."""
    states = batch_states(spec, indices, n_samples, seed)
    cols = {idx: states[:, k] for k, idx in enumerate(sorted(set(int(i) for i in indices)))}
    idxs = sorted(cols)
    med = {i: np.median(cols[i]) for i in idxs}

    pairs: list[tuple[str, np.ndarray, np.ndarray]] = []
    for a in idxs:
        for b in idxs:
            if a < b:
                pairs.append((f"proj[{a}]~proj[{b}]", cols[a], cols[b]))
    if len(idxs) >= 2:
        a, b = idxs[0], idxs[-1]
        pairs.append((f"upper[{a}]~upper[{b}]",
                      (cols[a] > med[a]).astype(float),
                      (cols[b] > med[b]).astype(float)))
        total = np.sum(states, axis=1)
        pairs.append((f"sum~proj[{b}]", total, cols[b]))
    if extra_pairs:
        for name, f, g in extra_pairs:
            pairs.append((name, np.asarray(f(states)), np.asarray(g(states))))

    rows = []
    for name, fa, ga in pairs:
        prod = (fa - fa.mean()) * (ga - ga.mean())
        cov = float(np.mean(prod))
        se = float(np.std(prod, ddof=1) / math.sqrt(len(prod)))
        rows.append(AssociationRow(name=name, covariance=cov, std_err=se,
                                   ok=cov >= -4.0 * se))
    return rows


# ---------------------------------------------------------------------------
# stationary-law estimation
# ---------------------------------------------------------------------------

@dataclass
class StationaryEstimate:
    samples: np.ndarray
    burn_in: int
    n_samples: int
    moments: dict = field(default_factory=dict)  # s -> (estimate, std_err)
    stabilization_warning: bool = False
    split_ks_statistic: float = 0.0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        sorted_s = np.sort(self.samples)
        return np.searchsorted(sorted_s, x, side="right") / len(sorted_s)


class NotErgodicError(ValueError):
    """Stationary estimation refused for a spec not classified Ergodic."""


def estimate_stationary(spec: ProcessSpec, burn_in: int, n_samples: int, seed: int,
                        moments: Sequence[float] = (), override: bool = False
                        ) -> StationaryEstimate:
    """Terminal states of independent paths after burn-in, with moment
    estimates and a split-half Kolmogorov-Smirnov stabilization check."""
    if not override and not isinstance(spec.offspring, (list, tuple)):
        verdict = classify(spec.offspring, spec.environment).verdict
        if verdict != VERDICT_ERGODIC:
            raise NotErgodicError(
                f"spec classified {verdict}; pass override=True to force estimation")
    samples = terminal_states(spec, burn_in, n_samples, seed)
    half = n_samples // 2
    stat, _ = ks_two_sample(samples[:half], samples[half:])
    warn = stat > ks_critical_value(half, n_samples - half, 0.01)
    est = StationaryEstimate(samples=samples, burn_in=burn_in, n_samples=n_samples,
                             stabilization_warning=warn, split_ks_statistic=stat)
    for s in moments:
        powered = samples ** float(s)
        mean = float(np.mean(powered))
        se = _jackknife_se(powered)
        est.moments[float(s)] = (mean, se)
    return est


def _jackknife_se(values: np.ndarray) -> float:
    # delete-1 jackknife of the sample mean
    n = len(values)
    total = values.sum()
    loo = (total - values) / (n - 1)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


@dataclass
class OrderCheckReport:
    grid: np.ndarray
    cdf_low: np.ndarray
    cdf_high: np.ndarray
    max_violation: float
    ok: bool


def stationary_order_check(spec_low: ProcessSpec, spec_high: ProcessSpec,
                           burn_in: int = 200, n_samples: int = 10_000,
                           seed: int = 0, n_grid: int = 50,
                           override: bool = False) -> OrderCheckReport:
    """Empirical stationary CDFs of ordered specs must satisfy
    CDF_low(x) >= CDF_high(x) up to 4 combined binomial standard errors."""
    certify_offspring_order(spec_low.offspring, spec_high.offspring)
    certify_environment_order(spec_low.environment, spec_high.environment)
    est_low = estimate_stationary(spec_low, burn_in, n_samples, seed, override=override)
    est_high = estimate_stationary(spec_high, burn_in, n_samples, seed + 1,
                                   override=override)
    pooled = np.concatenate([est_low.samples, est_high.samples])
    grid = np.quantile(pooled, np.linspace(0.02, 0.98, n_grid))
    c_low = est_low.cdf(grid)
    c_high = est_high.cdf(grid)
    se = np.sqrt(c_low * (1 - c_low) / n_samples + c_high * (1 - c_high) / n_samples)
    slack = c_high - c_low - 4.0 * se
    max_violation = float(np.max(slack))
    return OrderCheckReport(grid=grid, cdf_low=c_low, cdf_high=c_high,
                            max_violation=max_violation, ok=max_violation <= 0.0)


# ---------------------------------------------------------------------------
# degeneracy experiment
# ---------------------------------------------------------------------------

@dataclass
class DegeneracyCurve:
    checkpoints: list
    absorbed_fraction: np.ndarray


def degeneracy_experiment(spec: ProcessSpec, n: int, n_paths: int, seed: int = 0,
                          n_checkpoints: int = 20,
                          override: bool = False) -> DegeneracyCurve:
    """Absorbed-path fraction over time for a spec classified Degenerate."""
    if not override:
        verdict = classify(spec.offspring, spec.environment).verdict
        if verdict != VERDICT_DEGENERATE:
            raise ValueError(f"spec classified {verdict}, not Degenerate")
    checkpoints = sorted(set(int(c) for c in
                             np.unique(np.linspace(1, n, n_checkpoints).astype(int))))
    fractions = absorption_curve(spec, checkpoints, n_paths, seed)
    return DegeneracyCurve(checkpoints=checkpoints, absorbed_fraction=fractions)


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def ks_two_sample(sample_a, sample_b) -> tuple[float, float]:
    """Classical two-sample KS statistic with asymptotic p-value."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    res = ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_critical_value(n: int, m: int, level: float) -> float:
    """Asymptotic two-sample KS critical value at the given level."""
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c * math.sqrt((n + m) / (n * m))
