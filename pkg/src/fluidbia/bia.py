"""K-user blind interference alignment with two transmit antennas.

Slot 1 broadcasts every user's two symbols with all receivers in pattern 1.
Slot ``k+1`` sends only user ``k``'s symbols while user ``k`` alone switches
to pattern 2. User ``k`` subtracts the slots it did not own from slot 1,
leaving an interference-free 2x2 system

    [y(1) - sum_{p != k} y(p+1); y(k+1)] = sqrt(P) H s_k + n_k

from which the per-user rate and its robust form under CSI error follow.

Users and slots are 0-indexed in code: slot 0 is the broadcast slot and
slot ``k + 1`` belongs to user ``k``.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .numerics import inv2, logdet2, standard_complex_normal

__all__ = [
    "BiaSchedule",
    "BiaInstance",
    "build_schedule",
    "received_signals",
    "simulate_decode",
    "stack_noise",
    "error_covariance",
    "user_rate",
    "user_rate_direct",
    "sum_rate",
    "rates_batch",
    "sample_symbols",
    "sample_disturbance",
]


@dataclass(frozen=True)
class BiaSchedule:
    """Transmission schedule over ``K + 1`` slots.

    ``transmit[t]`` lists the users whose symbols are sent in slot ``t``;
    ``patterns[t, k]`` is user ``k``'s antenna pattern (1 or 2) in slot ``t``.
    """

    num_users: int
    transmit: tuple
    patterns: np.ndarray

    @property
    def num_slots(self):
        return self.num_users + 1

    @property
    def dof(self):
        return Fraction(2 * self.num_users, self.num_users + 1)

    def symbols_delivered(self, k):
        # slot 0 and slot k+1 both carry s_k; each decodes a 2-vector
        return 2


def build_schedule(num_users):
    """Antenna-switching schedule for ``num_users >= 2``."""
    K = int(num_users)
    if K < 2:
        raise ValueError(f"BIA needs at least 2 users, got {num_users}")
    transmit = [tuple(range(K))] + [(k,) for k in range(K)]
    patterns = np.ones((K + 1, K), dtype=int)
    for k in range(K):
        patterns[k + 1, k] = 2
    patterns.setflags(write=False)
    return BiaSchedule(K, tuple(transmit), patterns)


def received_signals(schedule, true_h, symbols, noise, power):
    """Per-slot received samples ``y[k, t]``.

    Parameters
    ----------
    true_h : (K, 2, 2) complex
        ``true_h[k, m]`` is user ``k``'s channel row in pattern ``m + 1``.
    symbols : (K, 2) complex
    noise : (K, K + 1) complex
    """
    K = schedule.num_users
    true_h = np.asarray(true_h, dtype=np.complex128)
    symbols = np.asarray(symbols, dtype=np.complex128)
    noise = np.asarray(noise, dtype=np.complex128)
    if true_h.shape != (K, 2, 2) or symbols.shape != (K, 2) or noise.shape != (K, K + 1):
        raise ValueError(
            f"shape mismatch for K={K}: h {true_h.shape}, s {symbols.shape}, n {noise.shape}")
    y = np.empty((K, K + 1), dtype=np.complex128)
    sqrt_p = np.sqrt(power)
    for t in range(K + 1):
        x = sqrt_p * symbols[list(schedule.transmit[t])].sum(axis=0)
        for k in range(K):
            y[k, t] = true_h[k, schedule.patterns[t, k] - 1] @ x + noise[k, t]
    return y


def simulate_decode(true_h, symbols, noise, power, schedule=None):
    """Interference-subtracted 2x1 stacks, one row per user, shape (K, 2)."""
    true_h = np.asarray(true_h)
    if schedule is None:
        schedule = build_schedule(true_h.shape[0])
    y = received_signals(schedule, true_h, symbols, noise, power)
    K = schedule.num_users
    out = np.empty((K, 2), dtype=np.complex128)
    for k in range(K):
        others = [p + 1 for p in range(K) if p != k]
        out[k, 0] = y[k, 0] - y[k, others].sum()
        out[k, 1] = y[k, k + 1]
    return out


def stack_noise(noise, k):
    """Noise combination seen by user ``k``: ``[n(0) - sum_{p!=k} n(p+1), n(k+1)]``.

    ``noise`` has slots on the last axis; works on batches.
    """
    noise = np.asarray(noise)
    K = noise.shape[-1] - 1
    others = [p + 1 for p in range(K) if p != k]
    first = noise[..., 0] - noise[..., others].sum(axis=-1)
    return np.stack([first, noise[..., k + 1]], axis=-1)


@dataclass(frozen=True, eq=False)
class BiaInstance:
    """One user's estimated channels and error realizations at both patterns."""

    est_h1: np.ndarray
    est_h2: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    power: float
    sigma2: float
    num_users: int

    def __post_init__(self):
        if not self.power > 0 or not self.sigma2 > 0:
            raise ValueError("power and sigma2 must be positive")
        if self.num_users < 2:
            raise ValueError("num_users must be >= 2")
        for name in ("est_h1", "est_h2", "delta1", "delta2"):
            v = np.asarray(getattr(self, name), dtype=np.complex128).reshape(2)
            object.__setattr__(self, name, v)

    @property
    def h_tilde(self):
        return np.stack([self.est_h1, self.est_h2])

    @property
    def delta(self):
        return np.stack([self.delta1, self.delta2])


def error_covariance(inst, literal=False):
    """Covariance of the CSI-error self-interference plus stacked noise.

    ``P Delta Delta^H + diag(K sigma2, sigma2)``. With ``literal=True`` the
    noise diagonal is also scaled by ``P``.
    """
    D = inst.delta
    noise = np.diag([inst.num_users * inst.sigma2, inst.sigma2]).astype(np.complex128)
    if literal:
        return inst.power * (D @ D.conj().T + noise)
    return inst.power * (D @ D.conj().T) + noise


def user_rate(inst, literal=False):
    """Robust rate ``log2|I + P H H^H Omega^-1|`` in bits per channel use.

    Evaluated as ``logdet(Omega + P H H^H) - logdet(Omega)``, which keeps both
    arguments Hermitian positive definite.
    """
    omega = error_covariance(inst, literal)
    H = inst.h_tilde
    signal = inst.power * (H @ H.conj().T)
    return logdet2(omega + signal, check_hermitian=False) - logdet2(omega, check_hermitian=False)


def user_rate_direct(inst, literal=False):
    """Same rate through the explicit inverse; used as a cross-check."""
    omega = error_covariance(inst, literal)
    H = inst.h_tilde
    M = np.eye(2) + inst.power * H @ H.conj().T @ inv2(omega)
    d = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return float(np.log2(abs(d)))


def sum_rate(instances, literal=False):
    return float(sum(user_rate(inst, literal) for inst in instances))


def rates_batch(h_est, delta, power, sigma2, num_users, literal=False):
    """Vectorized :func:`user_rate` over (N, 2, 2) channel/error stacks."""
    return kernels.bia_rates(h_est, delta, power, sigma2, num_users, literal)


def sample_symbols(rng, size):
    """Gaussian codebook symbols, CN(0, 1) per stream so ``E[s s^H] = I``."""
    lead = size if isinstance(size, tuple) else (size,)
    return standard_complex_normal(rng, lead + (2,))


def sample_disturbance(delta, num_users, sigma2, power, num_draws, rng, user=0):
    """Draws of the stacked disturbance ``sqrt(P) Delta s + n_k``.

    The noise term is built from ``K + 1`` independent slot draws combined
    exactly as the decoder subtracts them. Returns shape (num_draws, 2).
    """
    delta = np.asarray(delta, dtype=np.complex128)
    s = sample_symbols(rng, num_draws)
    slot_noise = standard_complex_normal(rng, (num_draws, num_users + 1)) * np.sqrt(sigma2)
    n = stack_noise(slot_noise, user)
    return np.sqrt(power) * s @ delta.T + n
