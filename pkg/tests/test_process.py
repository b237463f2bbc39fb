"""Step kernels, reductions and trajectory engines."""
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from maxbranch.laws import (
    Degenerate,
    Empirical,
    EmpiricalEnv,
    Exponential,
    ExponentialEnv,
    Frechet,
    IntegerTail,
    QueueInduced,
    UnitFrechet,
)
from maxbranch.process import (
    MBP_CONTINUOUS,
    MBP_INTEGER,
    MBPPLRE,
    MBPRE_INTEGER,
    ProcessSpec,
    UnsupportedTransformError,
    absorption_curve,
    eta_from_uniform,
    frechet_w_quantile,
    mix_seed,
    sample_eta,
    simulate,
    simulate_batch,
    step_autoregression,
    step_frechet_multiplicative,
    step_mbp_continuous,
    step_mbp_integer,
    step_mbpplre,
    step_mbpre_integer,
    terminal_states,
)

EULER_GAMMA = 0.5772156649015329


# ---------------------------------------------------------------------------
# continuous / power-law-environment kernels
# ---------------------------------------------------------------------------

def test_step_mbpplre_frechet_closed_form():
    law = Frechet(1.0, 2.0)
    env = Degenerate(1.0)
    assert float(step_mbpplre(1.0, math.exp(-1.0), law, env)) == pytest.approx(1.0, abs=1e-12)
    assert float(step_mbpplre(4.0, math.exp(-1.0), law, env)) == pytest.approx(2.0, abs=1e-12)


def test_step_kernel_near_one_approaches_support_sup():
    law = Frechet(1.0, 2.0)
    assert float(step_mbp_continuous(2.0, 1.0 - 1e-12, law)) > 1e5


def test_step_continuous_single_particle_is_one_draw():
    law = Frechet(1.7, 1.3)
    for u in (0.1, 0.5, 0.9):
        assert float(step_mbp_continuous(1.0, u, law)) == \
            pytest.approx(float(law.quantile(u)), abs=1e-12)


def test_step_continuous_unit_frechet_example():
    # z=2, u=e^{-2}: t = -ln(u)/z = 1, quantile_neg_log(1) = 1
    law = UnitFrechet(1.0)
    assert float(step_mbp_continuous(2.0, math.exp(-2.0), law)) == pytest.approx(1.0, abs=1e-12)


def test_degenerate_environment_reduction_exact():
    law = Frechet(1.3, 2.4)
    env = Degenerate(1.0)
    rng = np.random.default_rng(5)
    z = np.exp(rng.uniform(-3, 3, 10_000))
    u = rng.uniform(1e-9, 1 - 1e-9, 10_000)
    a = np.asarray(step_mbpplre(z, u, law, env), dtype=float)
    b = np.asarray(step_mbp_continuous(z, u, law), dtype=float)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_mbpplre_kernel_law():
    # empirical P(Z' <= y | Z = x) vs phi(-x ln F(y)) within 4 binomial se
    law = Frechet(1.0, 2.0)
    env = ExponentialEnv(1.0)
    x = 1.5
    n = 100_000
    rng = np.random.default_rng(11)
    u = rng.uniform(1e-12, 1 - 1e-12, n)
    z1 = np.asarray(step_mbpplre(x, u, law, env), dtype=float)
    for y in (0.5, 1.0, 1.5, 2.5, 4.0):
        target = float(np.asarray(env.lst(x * float(np.asarray(law.neg_log_cdf(y))))))
        p_hat = float(np.mean(z1 <= y))
        se = math.sqrt(target * (1.0 - target) / n)
        assert abs(p_hat - target) <= 4.0 * se


# ---------------------------------------------------------------------------
# integer kernels
# ---------------------------------------------------------------------------

def test_step_mbp_integer_zero_is_absorbing():
    rng = np.random.default_rng(0)
    assert step_mbp_integer(0, rng, IntegerTail(0.4)) == 0


def test_step_mbp_integer_single_draw_matches_quantile():
    law = Empirical((1.0, 2.0, 3.0), (0.2, 0.3, 0.5), integer=True)
    rng = np.random.default_rng(1)
    draws = np.array([step_mbp_integer(1, rng, law) for _ in range(20_000)])
    _, p = chisquare(
        [np.sum(draws == k) for k in (1, 2, 3)],
        [20_000 * q for q in (0.2, 0.3, 0.5)])
    assert p > 0.001


def test_step_mbp_integer_kernel_is_cdf_power():
    # P(max of z draws <= j) = F(j)^z for a 3-point law
    law = Empirical((1.0, 2.0, 3.0), (0.2, 0.3, 0.5), integer=True)
    z = 3
    n = 100_000
    rng = np.random.default_rng(2)
    draws = np.array([step_mbp_integer(z, rng, law) for _ in range(n)])
    cdf = np.array([0.2, 0.5, 1.0])
    probs = np.diff(np.concatenate(([0.0], cdf ** z)))
    _, p = chisquare([np.sum(draws == k) for k in (1, 2, 3)], n * probs)
    assert p > 0.001


def test_step_mbp_integer_rejects_continuous_law():
    with pytest.raises(ValueError):
        step_mbp_integer(2, np.random.default_rng(0), Frechet(1.0, 2.0))


def test_step_mbp_integer_large_z_inverse_transform():
    law = IntegerTail(0.4)
    rng = np.random.default_rng(3)
    vals = [step_mbp_integer(10, rng, law, large_z_threshold=5) for _ in range(2000)]
    assert min(vals) >= 1
    # exact median of the max of 10 iid draws: smallest k with F(k)^10 >= 1/2
    k_star = next(k for k in range(1, 100) if (1.0 - 0.4 / k) ** 10 >= 0.5)
    assert k_star - 1 <= np.median(vals) <= k_star + 1


def test_step_mbpre_degenerate_index_matches_plain_integer():
    law = Empirical((1.0, 2.0, 3.0), (0.2, 0.3, 0.5), integer=True)
    family = [law]
    env = Degenerate(1.0)
    r1 = np.random.default_rng(42)
    r2 = np.random.default_rng(42)
    for z in (1, 2, 5):
        a = step_mbpre_integer(z, r1, family, env)
        b = step_mbp_integer(z, r2, law)
        assert a == b


def test_step_mbpre_index_out_of_family_raises():
    family = [Empirical((1.0, 2.0), (0.5, 0.5), integer=True)]
    with pytest.raises(ValueError):
        step_mbpre_integer(2, np.random.default_rng(0), family, Degenerate(2.0))


def test_step_mbpre_kernel_matches_mixture():
    # P(Z' <= j | z) = E F_nu^z(j) over a finite environment table
    f1 = Empirical((1.0, 2.0), (0.5, 0.5), integer=True)
    f2 = Empirical((1.0, 2.0, 3.0), (0.2, 0.3, 0.5), integer=True)
    env = EmpiricalEnv((1.0, 2.0), (0.4, 0.6))
    z = 2
    n = 100_000
    rng = np.random.default_rng(9)
    draws = np.array([step_mbpre_integer(z, rng, [f1, f2], env) for _ in range(n)])
    grid = np.array([1.0, 2.0, 3.0])
    mix_cdf = 0.4 * np.asarray(f1.cdf(grid)) ** z + 0.6 * np.asarray(f2.cdf(grid)) ** z
    probs = np.diff(np.concatenate(([0.0], mix_cdf)))
    _, p = chisquare([np.sum(draws == k) for k in (1, 2, 3)], n * probs)
    assert p > 0.001


# ---------------------------------------------------------------------------
# multiplicative and autoregression reductions
# ---------------------------------------------------------------------------

def test_multiplicative_arithmetic():
    assert float(step_frechet_multiplicative(3.0, 2.0, 1.0)) == 6.0


@pytest.mark.parametrize("env", [Degenerate(1.0), ExponentialEnv(2.0)])
def test_multiplicative_matches_kernel_pathwise(env):
    c, beta = 1.3, 2.5
    law = Frechet(c, beta)
    rng = np.random.default_rng(21)
    z = np.exp(rng.uniform(-3, 3, 10_000))
    u = rng.uniform(1e-9, 1 - 1e-9, 10_000)
    w = frechet_w_quantile(u, env, c, beta)
    a = np.asarray(step_frechet_multiplicative(z, w, beta), dtype=float)
    b = np.asarray(step_mbpplre(z, u, law, env), dtype=float)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_multiplicative_noise_has_frechet_cdf_without_environment():
    # W = quantile of CDF phi((x/c)^{-beta}); with phi(u)=e^{-u}, c=1 this is
    # the unit Frechet CDF e^{-x^{-beta}}
    beta = 2.0
    us = np.linspace(0.01, 0.99, 50)
    w = np.asarray(frechet_w_quantile(us, Degenerate(1.0), 1.0, beta), dtype=float)
    back = np.exp(-w ** (-beta))
    assert np.max(np.abs(back - us)) <= 1e-10


def test_autoregression_frechet_affine():
    # f(u) = u/beta + ln c; Frechet(1,2) gives f(2) + 0.3 = 1.3
    assert float(step_autoregression(2.0, 0.3, Frechet(1.0, 2.0))) == \
        pytest.approx(1.3, abs=1e-12)
    assert float(step_autoregression(1.0, 0.0, Frechet(math.e, 2.0))) == \
        pytest.approx(1.5, abs=1e-12)


def test_autoregression_rejects_atomic_law():
    with pytest.raises(UnsupportedTransformError):
        step_autoregression(1.0, 0.0, QueueInduced(1.0, Exponential(1.0)))


@pytest.mark.parametrize("env", [Degenerate(1.0), ExponentialEnv(2.0)])
def test_transform_conjugacy(env):
    # zeta(step(z)) == f(zeta(z)) + eta(u) to 1e-9
    law = Frechet(1.5, 2.0)
    rng = np.random.default_rng(33)
    z = np.exp(rng.uniform(-2, 2, 10_000))
    u = rng.uniform(1e-9, 1 - 1e-9, 10_000)
    z1 = np.asarray(step_mbpplre(z, u, law, env), dtype=float)
    zeta1 = -np.log(np.asarray(law.neg_log_cdf(z1), dtype=float))
    zeta0 = -np.log(np.asarray(law.neg_log_cdf(z), dtype=float))
    eta = np.asarray(eta_from_uniform(u, env), dtype=float)
    pred = np.asarray(step_autoregression(zeta0, eta, law), dtype=float)
    assert np.max(np.abs(zeta1 - pred)) <= 1e-9


def test_eta_without_environment_is_gumbel():
    n = 1_000_000
    eta = sample_eta(Degenerate(1.0), np.random.default_rng(77), n)
    se = math.pi / math.sqrt(6.0) / math.sqrt(n)
    assert abs(float(np.mean(eta)) - EULER_GAMMA) <= 3.0 * se


def test_eta_sampler_matches_inverse_lst_in_law():
    # two constructions of eta agree distributionally (KS on 10^5 draws)
    from maxbranch.couplings import ks_critical_value, ks_two_sample
    env = ExponentialEnv(2.0)
    rng = np.random.default_rng(8)
    a = sample_eta(env, rng, 50_000)
    b = np.asarray(eta_from_uniform(rng.uniform(1e-12, 1 - 1e-12, 50_000), env))
    stat, _ = ks_two_sample(a, b)
    assert stat < ks_critical_value(len(a), len(b), 0.01)


# ---------------------------------------------------------------------------
# trajectory engines
# ---------------------------------------------------------------------------

def _ergodic_spec(initial=1.0):
    return ProcessSpec(MBPPLRE, Frechet(1.0, 2.0), Degenerate(1.0), initial)


def test_simulate_zero_steps():
    traj = simulate(_ergodic_spec(), 0, 0)
    assert list(traj.states) == [1.0]


def test_simulate_from_zero_is_absorbed():
    traj = simulate(_ergodic_spec(initial=0.0), 10, 0)
    assert np.all(traj.states == 0.0)
    assert traj.absorbed_at == 0


def test_simulate_deterministic_under_seed():
    a = simulate(_ergodic_spec(), 200, 123)
    b = simulate(_ergodic_spec(), 200, 123)
    assert np.array_equal(a.states, b.states)
    c = simulate(_ergodic_spec(), 200, 124)
    assert not np.array_equal(a.states, c.states)


def test_simulate_absorption_propagates():
    spec = ProcessSpec(MBP_CONTINUOUS, QueueInduced(1.0, Exponential(1.0)),
                       Degenerate(1.0), 1.0)
    traj = simulate(spec, 400, 4)
    assert traj.absorbed_at is not None
    assert np.all(traj.states[traj.absorbed_at:] == 0.0)


def test_simulate_negative_steps_rejected():
    with pytest.raises(ValueError):
        simulate(_ergodic_spec(), -1, 0)


def test_simulate_batch_single_path_matches_derived_seed():
    spec = _ergodic_spec()
    batch = simulate_batch(spec, 50, 1, 900)
    single = simulate(spec, 50, mix_seed(900, 0))
    assert np.array_equal(batch[0].states, single.states)


def test_simulate_batch_parallelism_invariant():
    spec = _ergodic_spec()
    serial = simulate_batch(spec, 100, 16, 7, n_jobs=1)
    parallel = simulate_batch(spec, 100, 16, 7, n_jobs=8)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.states, b.states)


def test_mix_seed_deterministic_and_distinct():
    seeds = [mix_seed(5, i) for i in range(1000)]
    assert seeds == [mix_seed(5, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_terminal_state_cdf_is_valid():
    z = terminal_states(_ergodic_spec(), 100, 10_000, 0)
    assert np.all(z > 0)
    assert np.isfinite(z).all()


def test_absorption_curve_nondecreasing():
    spec = ProcessSpec(MBP_CONTINUOUS, QueueInduced(1.0, Exponential(1.0)),
                       Degenerate(1.0), 1.0)
    curve = absorption_curve(spec, [1, 5, 20, 100, 300], 2000, 0)
    assert np.all(np.diff(curve) >= 0.0)


def test_zeta_transform_on_trajectory():
    law = Frechet(1.0, 2.0)
    traj = simulate(_ergodic_spec(), 50, 6)
    zeta = traj.zeta(law)
    expected = -np.log(np.asarray(law.neg_log_cdf(traj.states), dtype=float))
    assert np.allclose(zeta, expected, atol=1e-12)


def test_zeta_transform_rejected_for_atomic_or_absorbed():
    traj = simulate(_ergodic_spec(), 10, 0)
    with pytest.raises(UnsupportedTransformError):
        traj.zeta(QueueInduced(1.0, Exponential(1.0)))
    absorbed = simulate(_ergodic_spec(initial=0.0), 10, 0)
    with pytest.raises(UnsupportedTransformError):
        absorbed.zeta(Frechet(1.0, 2.0))


def test_process_spec_validation():
    with pytest.raises(ValueError):
        ProcessSpec("bogus", Frechet(1.0, 2.0))
    with pytest.raises(ValueError):
        ProcessSpec(MBP_INTEGER, Frechet(1.0, 2.0))
    with pytest.raises(ValueError):
        ProcessSpec(MBPRE_INTEGER, Frechet(1.0, 2.0))
    with pytest.raises(ValueError):
        ProcessSpec(MBPPLRE, Frechet(1.0, 2.0), Degenerate(1.0), -1.0)


def test_initial_law_inversion():
    spec = ProcessSpec(MBPPLRE, Frechet(1.0, 2.0), Degenerate(1.0),
                       Empirical((2.0, 5.0), (0.5, 0.5)))
    assert spec.draw_initial(u=0.25) == 2.0
    assert spec.draw_initial(u=0.75) == 5.0
