"""Stepping kernels and trajectory engines for maximal branching processes.

Variants:

* ``mbp-integer`` -- integer-valued chain, next state is the max of z iid
  offspring draws.
* ``mbp-continuous`` -- chain on a continuous state set driven by one
  uniform per step through the generalized inverse of F.
* ``mbpre-integer`` -- integer chain whose offspring law is re-drawn each
  step from a countable family indexed by the environment variable.
* ``mbpplre`` -- power-law random environment: the environment enters
  only through the inverse LST of nu.

All kernels taking an explicit uniform consume exactly one uniform per
step, so two chains fed the same uniforms are coupled pathwise.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .laws import (
    NUMERIC_FLOOR,
    Degenerate,
    EnvironmentLaw,
    OffspringLaw,
)

MBP_INTEGER = "mbp-integer"
MBP_CONTINUOUS = "mbp-continuous"
MBPRE_INTEGER = "mbpre-integer"
MBPPLRE = "mbpplre"

VARIANTS = (MBP_INTEGER, MBP_CONTINUOUS, MBPRE_INTEGER, MBPPLRE)

# Above this state, the maximum of z iid integer draws is taken by inverse
# transform from F^z directly (exact in law); naive sampling would stall.
LARGE_Z_THRESHOLD = 10 ** 6

_MASK64 = (1 << 64) - 1


class SimulationError(RuntimeError):
    """Numeric failure during trajectory generation; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class UnsupportedTransformError(ValueError):
    """The Gumbel transform needs F continuous, strictly increasing, F(0)=0."""


def mix_seed(base_seed: int, index: int) -> int:
    """Derive a per-path seed: splitmix64 finalizer of base_seed + golden-ratio step.

    This is the documented splitting rule for ``simulate_batch``: path i
    uses ``mix_seed(base_seed, i)``, independent of execution order.
    """
    x = (base_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class ProcessSpec:
    """A fully specified process: variant tag, laws and initial state.

    ``initial`` is either a fixed nonnegative state or an object with a
    ``quantile`` method (an initial law H, inverted at a shared uniform
    for couplings).  For ``mbpre-integer`` pass the indexed family as a
    sequence of integer offspring laws; the environment law must then
    sample positive integers indexing it (1-based).
    """

    variant: str
    offspring: Union[OffspringLaw, Sequence[OffspringLaw]]
    environment: EnvironmentLaw = field(default_factory=lambda: Degenerate(1.0))
    initial: object = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == MBPRE_INTEGER:
            if isinstance(self.offspring, OffspringLaw):
                raise ValueError("mbpre-integer needs a sequence of offspring laws")
            for law in self.offspring:
                if law.support != "integer":
                    raise ValueError("mbpre-integer offspring laws must be integer-valued")
        else:
            if not isinstance(self.offspring, OffspringLaw):
                raise ValueError("a single offspring law is required")
            if self.variant == MBP_INTEGER and self.offspring.support != "integer":
                raise ValueError("mbp-integer needs an integer offspring law")
        if isinstance(self.initial, (int, float)) and self.initial < 0:
            raise ValueError("initial state must be nonnegative")

    def draw_initial(self, u: Optional[float] = None, rng: Optional[np.random.Generator] = None):
        if isinstance(self.initial, (int, float)):
            return float(self.initial)
        if u is None:
            u = rng.random()
        return float(self.initial.quantile(u))


@dataclass
class Trajectory:
    """A seeded realized path Z_0..Z_n."""

    states: np.ndarray
    seed: int
    absorbed_at: Optional[int] = None
    numeric_absorption: bool = False

    def __len__(self):
        return len(self.states)

    def zeta(self, law: OffspringLaw) -> np.ndarray:
        """Transformed path zeta_n = Lambda^{-1}(F(Z_n)), Lambda the Gumbel CDF."""
        if not law.zeta_transformable:
            raise UnsupportedTransformError(
                "transform requires a continuous strictly increasing F with F(0)=0")
        if self.absorbed_at is not None:
            raise UnsupportedTransformError("transform undefined on absorbed paths")
        return -np.log(law.neg_log_cdf(self.states))


# ---------------------------------------------------------------------------
# step kernels (pure functions)
# ---------------------------------------------------------------------------

def step_mbp_continuous(z, u, law: OffspringLaw):
    """One step of the continuous-state recursion: F^{-1}(u^{1/z}) for z > 0."""
    t = -np.log(u) / z
    return law.quantile_neg_log(t)


def step_mbpplre(z, u, law: OffspringLaw, env: EnvironmentLaw):
    """One step with power-law random environment: F^{-1}(exp{-phi^{-1}(u)/z})."""
    if isinstance(env, Degenerate) and env.a == 1.0:
        # phi^{-1}(u) = -ln u: identical to the no-environment kernel
        return step_mbp_continuous(z, u, law)
    t = env.lst_inverse(u) / z
    return law.quantile_neg_log(t)


def step_mbp_integer(z: int, rng: np.random.Generator, law: OffspringLaw,
                     large_z_threshold: int = LARGE_Z_THRESHOLD):
    """Maximum of z iid integer offspring draws; the max over zero draws is zero."""
    if law.support != "integer":
        raise ValueError("step_mbp_integer needs an integer offspring law")
    z = int(z)
    if z == 0:
        return 0
    if z > large_z_threshold:
        # exact in law: the maximum of z iid draws has CDF F^z
        u = rng.random()
        t = -math.log(u) / z if u > 0 else math.inf
        return int(law.quantile_neg_log(t))
    draws = law.quantile(_open_uniform(rng, z))
    return int(np.max(draws))


def step_mbpre_integer(z: int, rng: np.random.Generator,
                       family: Sequence[OffspringLaw], env: EnvironmentLaw,
                       large_z_threshold: int = LARGE_Z_THRESHOLD):
    """Draw the environment index, then the max of z iid draws from that law."""
    nu = env.sample(rng)
    idx = int(round(float(nu)))
    if idx < 1 or idx > len(family) or abs(idx - float(nu)) > 1e-9:
        raise ValueError(f"environment index {nu!r} outside the offspring family")
    return step_mbp_integer(z, rng, family[idx - 1], large_z_threshold)


def step_frechet_multiplicative(z, w, beta: float):
    """Multiplicative form of the Frechet-offspring recursion: w * z^(1/beta)."""
    return w * np.asarray(z, dtype=float) ** (1.0 / beta)


def frechet_w_quantile(u, env: EnvironmentLaw, c: float, beta: float):
    """Quantile of the multiplicative noise W, whose CDF is phi((x/c)^-beta)."""
    return c * np.asarray(env.lst_inverse(u), dtype=float) ** (-1.0 / beta)


def eta_from_uniform(u, env: EnvironmentLaw):
    """Autoregression noise eta = -ln phi^{-1}(u); its CDF is phi(e^{-x})."""
    return -np.log(env.lst_inverse(u))


def sample_eta(env: EnvironmentLaw, rng: np.random.Generator, size=None):
    """Sample eta by the identity eta = ln nu + Gumbel, equal in law to
    -ln phi^{-1}(U) since phi(e^{-x}) = E Lambda(x - ln nu)."""
    return env.sample_log(rng, size) + rng.gumbel(0.0, 1.0, size)


def step_autoregression(zeta, eta, law: OffspringLaw):
    """One step of the transformed chain: f(zeta) + eta, f(u) = ln F^{-1}(Lambda(u))."""
    if not law.zeta_transformable:
        raise UnsupportedTransformError(
            "autoregression form requires a continuous strictly increasing F with F(0)=0")
    zeta = np.asarray(zeta, dtype=float)
    # Lambda(zeta) = exp(-e^(-zeta)), so -ln Lambda(zeta) = e^(-zeta)
    f = np.log(law.quantile_neg_log(np.exp(-zeta)))
    return f + eta


def _open_uniform(rng: np.random.Generator, size=None):
    """Uniform draws guaranteed inside the open interval (0, 1)."""
    u = rng.random(size)
    tiny = np.finfo(float).tiny
    if np.ndim(u) == 0:
        return float(u) if u > 0.0 else tiny
    np.maximum(u, tiny, out=u)
    return u


# ---------------------------------------------------------------------------
# trajectory engines
# ---------------------------------------------------------------------------

def _clamp(z: float) -> tuple[float, bool]:
    if 0.0 < z < NUMERIC_FLOOR:
        return 0.0, True
    return z, False


def simulate(spec: ProcessSpec, n_steps: int, seed: int) -> Trajectory:
    """Generate one reproducible path; same (spec, seed) gives the same path."""
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rng = np.random.default_rng(seed)
    z = spec.draw_initial(rng=rng)
    states = np.empty(n_steps + 1)
    states[0] = z
    absorbed_at = 0 if z == 0.0 else None
    numeric = False
    for n in range(1, n_steps + 1):
        if z == 0.0:
            states[n] = 0.0
            continue
        try:
            if spec.variant == MBP_CONTINUOUS:
                z_new = float(step_mbp_continuous(z, _open_uniform(rng), spec.offspring))
            elif spec.variant == MBPPLRE:
                z_new = float(step_mbpplre(z, _open_uniform(rng), spec.offspring,
                                           spec.environment))
            elif spec.variant == MBP_INTEGER:
                z_new = float(step_mbp_integer(z, rng, spec.offspring))
            else:
                z_new = float(step_mbpre_integer(z, rng, spec.offspring, spec.environment))
        except (ValueError, ArithmeticError) as exc:
            raise SimulationError(str(exc), n) from exc
        if math.isnan(z_new):
            raise SimulationError("state became NaN", n)
        z_new, clamped = _clamp(z_new)
        numeric = numeric or clamped
        if z_new == 0.0 and absorbed_at is None:
            absorbed_at = n
        states[n] = z_new
        z = z_new
    return Trajectory(states=states, seed=seed, absorbed_at=absorbed_at,
                      numeric_absorption=numeric)


def simulate_batch(spec: ProcessSpec, n_steps: int, n_paths: int, base_seed: int,
                   n_jobs: int = 1) -> list[Trajectory]:
    """Independent paths on streams derived by ``mix_seed``; the result is
    identical for any parallelism degree."""
    seeds = [mix_seed(base_seed, i) for i in range(n_paths)]
    if n_jobs <= 1:
        return [simulate(spec, n_steps, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda s: simulate(spec, n_steps, s), seeds))


# ---------------------------------------------------------------------------
# vectorized batch engine
# ---------------------------------------------------------------------------
# Draws one uniform per path per step across a whole array of paths.  The
# stream layout differs from simulate_batch (which owns one generator per
# path) but every path has the exact process law; use this engine for
# estimator-scale Monte Carlo where per-path generators are too slow.

def _batch_step(z: np.ndarray, u: np.ndarray, spec: ProcessSpec,
                rng: np.random.Generator) -> np.ndarray:
    alive = z > 0.0
    z_new = np.zeros_like(z)
    if not np.any(alive):
        return z_new
    za, ua = z[alive], u[alive]
    if spec.variant == MBP_CONTINUOUS:
        out = step_mbp_continuous(za, ua, spec.offspring)
    elif spec.variant == MBPPLRE:
        out = step_mbpplre(za, ua, spec.offspring, spec.environment)
    elif spec.variant == MBP_INTEGER:
        # inverse transform from F^z: exact in law for the batch engine
        out = spec.offspring.quantile_neg_log(-np.log(ua) / za)
    else:  # MBPRE_INTEGER
        nu = np.asarray(spec.environment.sample(rng, za.shape), dtype=float)
        idx = np.rint(nu).astype(int)
        if idx.min() < 1 or idx.max() > len(spec.offspring):
            raise ValueError("environment index outside the offspring family")
        out = np.empty_like(za)
        for l in np.unique(idx):
            m = idx == l
            out[m] = spec.offspring[l - 1].quantile_neg_log(-np.log(ua[m]) / za[m])
    out = np.asarray(out, dtype=float)
    out[out < NUMERIC_FLOOR] = 0.0
    z_new[alive] = out
    return z_new


def _batch_init(spec: ProcessSpec, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec.initial, (int, float)):
        return np.full(n_paths, float(spec.initial))
    return np.asarray(spec.initial.quantile(_open_uniform(rng, n_paths)), dtype=float)


def terminal_states(spec: ProcessSpec, n_steps: int, n_paths: int, seed: int) -> np.ndarray:
    """Terminal states Z_n of n_paths vectorized paths."""
    rng = np.random.default_rng(seed)
    z = _batch_init(spec, n_paths, rng)
    for _ in range(n_steps):
        z = _batch_step(z, _open_uniform(rng, n_paths), spec, rng)
    return z


def batch_states(spec: ProcessSpec, indices: Sequence[int], n_paths: int,
                 seed: int) -> np.ndarray:
    """States at the given step indices, shape (n_paths, len(indices))."""
    indices = sorted(int(i) for i in indices)
    if indices and indices[0] < 0:
        raise ValueError("indices must be nonnegative")
    rng = np.random.default_rng(seed)
    z = _batch_init(spec, n_paths, rng)
    out = np.empty((n_paths, len(indices)))
    want = {idx: col for col, idx in enumerate(indices)}
    if 0 in want:
        out[:, want[0]] = z
    last = indices[-1] if indices else 0
    for n in range(1, last + 1):
        z = _batch_step(z, _open_uniform(rng, n_paths), spec, rng)
        if n in want:
            out[:, want[n]] = z
    return out


def absorption_curve(spec: ProcessSpec, checkpoints: Sequence[int], n_paths: int,
                     seed: int) -> np.ndarray:
    """Fraction of absorbed paths at each checkpoint step (nondecreasing)."""
    checkpoints = sorted(int(c) for c in checkpoints)
    rng = np.random.default_rng(seed)
    z = _batch_init(spec, n_paths, rng)
    fractions = np.empty(len(checkpoints))
    want = {c: i for i, c in enumerate(checkpoints)}
    if 0 in want:
        fractions[want[0]] = np.mean(z == 0.0)
    for n in range(1, (checkpoints[-1] if checkpoints else 0) + 1):
        z = _batch_step(z, _open_uniform(rng, n_paths), spec, rng)
        if n in want:
            fractions[want[n]] = np.mean(z == 0.0)
    return fractions
