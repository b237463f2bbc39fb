"""Release-gate verification suite surfaced by the CLI.

Exact invariants (couplings, transport identities, closed-form
cross-checks) must hold to rounding and fail the run; statistical gates
are reported and warn only.
"""
from __future__ import annotations

import math

import numpy as np

from . import couplings
from .analysis import compute_delta
from .laws import (
    Degenerate,
    Exponential,
    ExponentialEnv,
    Frechet,
    QueueInduced,
    StrictlyStable,
)
from .process import (
    MBPPLRE,
    ProcessSpec,
    absorption_curve,
    step_mbp_continuous,
    step_mbpplre,
)


def _check(name: str, kind: str, passed: bool, detail: str) -> dict:
    return {"name": name, "kind": kind, "passed": bool(passed), "detail": detail}


def run_verification(n_pairs: int = 100, n_coupled_steps: int = 200,
                     n_transport_cases: int = 2000,
                     n_kernel_samples: int = 100_000, seed: int = 0) -> list[dict]:
    checks = []
    law = Frechet(1.0, 2.0)
    env1 = Degenerate(1.0)
    spec = ProcessSpec(MBPPLRE, law, env1, 1.0)

    # -- exact: monotone coupling in the initial state
    violations = 0
    for k in range(n_pairs):
        try:
            couplings.coupled_monotone_paths(0.01, 100.0, spec, n_coupled_steps,
                                             seed=seed + k)
        except couplings.CouplingViolationError:
            violations += 1
    checks.append(_check("monotone-coupling", "exact", violations == 0,
                         f"{violations} ordering violations over "
                         f"{n_pairs * n_coupled_steps} coupled steps"))

    # -- exact: coupling under ordered laws
    violations = 0
    low = ProcessSpec(MBPPLRE, Frechet(1.0, 2.0), Degenerate(1.0), 1.0)
    high = ProcessSpec(MBPPLRE, Frechet(2.0, 2.0), Degenerate(2.0), 1.0)
    for k in range(n_pairs):
        try:
            couplings.coupled_parameter_paths(low, high, n_coupled_steps, seed=seed + k)
        except couplings.CouplingViolationError:
            violations += 1
    checks.append(_check("parameter-coupling", "exact", violations == 0,
                         f"{violations} ordering violations over "
                         f"{n_pairs * n_coupled_steps} coupled steps"))

    # -- exact: scaling transport identity
    worst = couplings.check_scaling_transport(law, env1, [0.5, 2.0, 10.0],
                                              n_cases=n_transport_cases, seed=seed)
    checks.append(_check("scaling-transport", "exact", worst <= 1e-9,
                         f"max relative mismatch {worst:.3e}"))

    # -- exact: environment-free reduction of the power-law kernel
    rng = np.random.default_rng(seed)
    z = np.exp(rng.uniform(-3, 3, 10_000))
    u = rng.random(10_000) * (1 - 2e-12) + 1e-12
    diff = np.max(np.abs(np.asarray(step_mbpplre(z, u, law, env1))
                         - np.asarray(step_mbp_continuous(z, u, law))))
    checks.append(_check("degenerate-env-reduction", "exact", diff <= 1e-12,
                         f"max abs diff {diff:.3e}"))

    # -- exact: drift constant closed form vs quadrature
    worst = 0.0
    for env in [ExponentialEnv(0.5), ExponentialEnv(1.0), ExponentialEnv(2.0),
                StrictlyStable(0.5, 1.0)]:
        rep = compute_delta(env)
        worst = max(worst, abs(rep.delta_closed - rep.delta_quadrature))
    checks.append(_check("delta-quadrature", "exact", worst <= 1e-6,
                         f"max closed-vs-quadrature gap {worst:.3e}"))

    # -- exact: LST inversion residual on a grid
    worst = 0.0
    for env in [ExponentialEnv(1.0), StrictlyStable(0.5, 1.0), Degenerate(2.0)]:
        vs = np.linspace(0.01, 0.99, 25)
        worst = max(worst, float(np.max(np.abs(
            np.asarray(env.lst(env.lst_inverse(vs))) - vs))))
    checks.append(_check("lst-inverse-residual", "exact", worst <= 1e-10,
                         f"max residual {worst:.3e}"))

    # -- statistical: one-step kernel law of the power-law chain
    env_stable = StrictlyStable(0.5, 1.0)
    x0 = 1.5
    u = rng.random(n_kernel_samples)
    z1 = np.asarray(step_mbpplre(x0, np.clip(u, 1e-12, 1 - 1e-12), law, env_stable))
    max_sigma = 0.0
    for y in [0.5, 1.0, 1.5, 2.5, 4.0]:
        target = float(env_stable.lst(-x0 * math.log(float(law.cdf(y)))))
        p_hat = float(np.mean(z1 <= y))
        se = math.sqrt(max(target * (1 - target), 1e-12) / n_kernel_samples)
        max_sigma = max(max_sigma, abs(p_hat - target) / se)
    checks.append(_check("kernel-law", "statistical", max_sigma <= 4.0,
                         f"max deviation {max_sigma:.2f} std errs over grid"))

    # -- statistical: stable sampler consistency against its LST
    n = 200_000
    nu = env_stable.sample(np.random.default_rng(seed + 1), n)
    emp = np.exp(-nu)
    se = float(np.std(emp, ddof=1) / math.sqrt(n))
    gap = abs(float(np.mean(emp)) - float(env_stable.lst(1.0)))
    checks.append(_check("stable-sampler-lst", "statistical", gap <= 4 * se,
                         f"|phi_hat(1) - phi(1)| = {gap:.2e} ({gap / se:.2f} std errs)"))

    # -- statistical: association of an ergodic chain
    rows = couplings.association_test(spec, [2, 5, 7], 20_000, seed=seed + 2)
    bad = [r.name for r in rows if not r.ok]
    checks.append(_check("association", "statistical", not bad,
                         "all covariances above -4 std errs" if not bad
                         else f"negative covariances: {', '.join(bad)}"))

    # -- statistical: degeneracy of the queue-induced law
    degen = ProcessSpec(MBPPLRE, QueueInduced(1.0, Exponential(1.0)), env1, 1.0)
    frac = float(absorption_curve(degen, [1000], 2000, seed + 3)[0])
    checks.append(_check("queue-induced-degeneracy", "statistical", frac >= 0.99,
                         f"absorbed fraction {frac:.4f} at step 1000"))

    return checks
