import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_complex
from fluidbia.bia import (
    BiaInstance,
    build_schedule,
    error_covariance,
    rates_batch,
    received_signals,
    sample_disturbance,
    simulate_decode,
    stack_noise,
    sum_rate,
    user_rate,
    user_rate_direct,
)
from fluidbia.numerics import logdet2

# log2 det(I + P H H^H Omega^-1) for the fixed instance below, evaluated in
# 40-digit arithmetic with mpmath
FIXED_RATE = 13.793012071100591
FIXED_RATE_LITERAL = 14.885195380207523


def fixed_instance():
    H = np.array([[1, 1j], [0.5, 2]])
    D = np.array([[0.1, 0], [0, 0.1j]])
    return BiaInstance(H[0], H[1], D[0], D[1], 0.25, 1e-3, 3)


def random_instance(rng, K=4, delta_scale=0.1, sigma2=1e-3, power=0.25):
    H = random_complex(rng, (2, 2))
    D = random_complex(rng, (2, 2)) * delta_scale
    return BiaInstance(H[0], H[1], D[0], D[1], power, sigma2, K)


def test_schedule_two_users():
    s = build_schedule(2)
    assert s.num_slots == 3
    assert s.transmit == ((0, 1), (0,), (1,))
    np.testing.assert_array_equal(s.patterns, [[1, 1], [2, 1], [1, 2]])
    assert s.dof == Fraction(4, 3)


@pytest.mark.parametrize("K", [2, 3, 4, 5, 8])
def test_schedule_invariants(K):
    s = build_schedule(K)
    assert s.num_slots == K + 1
    assert s.transmit[0] == tuple(range(K)) and np.all(s.patterns[0] == 1)
    for k in range(K):
        assert s.transmit[k + 1] == (k,)
        assert list(np.flatnonzero(s.patterns[k + 1] == 2)) == [k]
        assert s.symbols_delivered(k) == 2
    assert s.dof == Fraction(2 * K, K + 1)


def test_schedule_four_users_and_errors():
    s = build_schedule(4)
    assert s.num_slots == 5 and s.dof == Fraction(8, 5)
    with pytest.raises(ValueError):
        build_schedule(1)


def _random_channels(rng, K):
    return random_complex(rng, (K, 2, 2))


def test_decode_two_users_reference_case(rng):
    h = _random_channels(rng, 2)
    s = random_complex(rng, (2, 2))
    out = simulate_decode(h, s, np.zeros((2, 3)), 0.25)
    np.testing.assert_allclose(out[0], 0.5 * h[0] @ s[0], atol=1e-12)
    np.testing.assert_allclose(out[1], 0.5 * h[1] @ s[1], atol=1e-12)


def test_decode_zero_symbols_is_noise_combination(rng):
    K = 4
    h = _random_channels(rng, K)
    noise = random_complex(rng, (K, K + 1))
    out = simulate_decode(h, np.zeros((K, 2)), noise, 0.25)
    for k in range(K):
        np.testing.assert_allclose(out[k], stack_noise(noise[k], k), atol=1e-14)


@pytest.mark.parametrize("K", [2, 3, 4, 5])
def test_decode_interference_cancels(rng, K):
    for _ in range(20):
        h = _random_channels(rng, K)
        s = random_complex(rng, (K, 2))
        zero = np.zeros((K, K + 1))
        out = simulate_decode(h, s, zero, 0.25)
        np.testing.assert_allclose(out, 0.5 * np.einsum("kmi,ki->km", h, s), atol=1e-9)
        for k in range(K):
            s_int = s.copy()
            s_int[k] = 0
            assert np.max(np.abs(simulate_decode(h, s_int, zero, 0.25)[k])) < 1e-9


def test_decode_dimension_mismatch(rng):
    sched = build_schedule(3)
    with pytest.raises(ValueError):
        received_signals(sched, _random_channels(rng, 2), np.zeros((3, 2)), np.zeros((3, 4)), 1.0)


def test_error_covariance_examples():
    z = np.zeros(2)
    inst = BiaInstance(z, z, z, z, 0.25, 1e-9, 4)
    np.testing.assert_allclose(error_covariance(inst), np.diag([4e-9, 1e-9]), rtol=1e-15)
    inst = BiaInstance(z, z, z, z, 0.5, 2e-3, 3)
    np.testing.assert_allclose(error_covariance(inst), np.diag([6e-3, 2e-3]))
    np.testing.assert_allclose(error_covariance(inst, literal=True), np.diag([3e-3, 1e-3]))


def test_error_covariance_structure(rng):
    for _ in range(50):
        inst = random_instance(rng)
        om = error_covariance(inst)
        np.testing.assert_allclose(om, om.conj().T, atol=1e-15)
        excess = om - np.diag([inst.num_users * inst.sigma2, inst.sigma2])
        assert np.linalg.eigvalsh(excess).min() > -1e-15
        D = inst.delta
        expect = inst.power * np.array([[D[0] @ D[0].conj(), D[0] @ D[1].conj()],
                                        [D[1] @ D[0].conj(), D[1] @ D[1].conj()]])
        np.testing.assert_allclose(excess, expect, atol=1e-15)


def test_omega_monte_carlo(rng):
    for K in (2, 4):
        inst = random_instance(rng, K=K, sigma2=0.01)
        x = sample_disturbance(inst.delta, K, inst.sigma2, inst.power, 400_000, rng)
        emp = x.T @ x.conj() / len(x)
        om = error_covariance(inst)
        assert np.linalg.norm(emp - om) / np.linalg.norm(om) < 0.03


def test_stacked_noise_variance(rng):
    K, s2 = 4, 0.3
    x = sample_disturbance(np.zeros((2, 2)), K, s2, 0.25, 1_000_000, rng, user=2)
    assert np.mean(np.abs(x[:, 0]) ** 2) == pytest.approx(K * s2, rel=0.01)
    assert np.mean(np.abs(x[:, 1]) ** 2) == pytest.approx(s2, rel=0.01)


def test_rate_closed_form():
    inst = BiaInstance([1, 0], [0, 1], [0, 0], [0, 0], 0.25, 1e-9, 4)
    expect = math.log2(1 + 0.25 / 4e-9) + math.log2(1 + 0.25 / 1e-9)
    assert user_rate(inst) == pytest.approx(expect, abs=1e-9)
    assert user_rate(inst) == pytest.approx(53.794, abs=1e-3)


def test_rate_frozen_value():
    assert user_rate(fixed_instance()) == pytest.approx(FIXED_RATE, abs=1e-10)
    assert user_rate(fixed_instance(), literal=True) == pytest.approx(FIXED_RATE_LITERAL, abs=1e-10)
    assert user_rate_direct(fixed_instance()) == pytest.approx(FIXED_RATE, abs=1e-8)


def test_rate_trivial_limits(rng):
    z = np.zeros(2)
    D = random_complex(rng, (2, 2)) * 0.1
    assert user_rate(BiaInstance(z, z, D[0], D[1], 0.25, 1e-9, 4)) == pytest.approx(0, abs=1e-9)
    H = random_complex(rng, (2, 2))
    tiny = BiaInstance(H[0], H[1], D[0], D[1], 1e-12, 1.0, 4)
    assert 0 <= user_rate(tiny) < 1e-10


def test_rate_matches_direct_inverse(rng):
    for _ in range(200):
        inst = random_instance(rng)
        assert user_rate(inst) == pytest.approx(user_rate_direct(inst), rel=1e-9, abs=1e-9)
        assert user_rate(inst) >= 0


@given(t=st.floats(0, 2 * math.pi), p=st.floats(0, 2 * math.pi), seed=st.integers(0, 2**31))
@settings(max_examples=100, deadline=None)
def test_rate_unitary_invariance(t, p, seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    U = np.array([[math.cos(t), -math.sin(t) * np.exp(-1j * p)],
                  [math.sin(t) * np.exp(1j * p), math.cos(t)]])
    H, om = inst.h_tilde, error_covariance(inst)
    S = inst.power * H @ H.conj().T
    base = logdet2(om + S, False) - logdet2(om, False)
    Hu, omu = U @ H, U @ om @ U.conj().T
    Su = inst.power * Hu @ Hu.conj().T
    rot = logdet2(omu + Su, False) - logdet2(omu, False)
    assert rot == pytest.approx(base, abs=1e-9)


def test_rate_decreases_with_error_scale_in_expectation(rng):
    H = random_complex(rng, (2, 2))
    means = []
    for eta in (0.01, 0.1, 1.0, 10.0):
        D = random_complex(rng, (5000, 2, 2)) * math.sqrt(0.02 * eta / 2)
        est = np.broadcast_to(H, D.shape)
        means.append(rates_batch(est, D, 0.25, 1e-9, 4).mean())
    assert all(a > b for a, b in zip(means, means[1:]))


def test_sum_rate(rng):
    z = np.zeros(2)
    zeros = [BiaInstance(z, z, z, z, 0.25, 1e-9, 4) for _ in range(4)]
    assert sum_rate(zeros) == 0
    inst = random_instance(rng)
    assert sum_rate([inst] * 4) == pytest.approx(4 * user_rate(inst), rel=1e-14)
    many = [random_instance(rng) for _ in range(4)]
    total = 0.0
    for i in many:
        total += user_rate(i)
    assert sum_rate(many) == pytest.approx(total, rel=1e-14)


@pytest.mark.parametrize("literal", [False, True])
def test_rates_batch_matches_scalar(rng, literal):
    est = random_complex(rng, (100, 2, 2))
    d = random_complex(rng, (100, 2, 2)) * 0.1
    r = rates_batch(est, d, 0.25, 1e-3, 4, literal)
    for i in range(100):
        inst = BiaInstance(est[i, 0], est[i, 1], d[i, 0], d[i, 1], 0.25, 1e-3, 4)
        assert r[i] == pytest.approx(user_rate(inst, literal), abs=1e-9)


def test_instance_validation():
    z = np.zeros(2)
    with pytest.raises(ValueError):
        BiaInstance(z, z, z, z, 0.0, 1e-9, 4)
    with pytest.raises(ValueError):
        BiaInstance(z, z, z, z, 0.25, 1e-9, 1)
