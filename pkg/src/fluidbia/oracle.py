"""Brute-force verification suites behind ``fluidbia oracle``.

Each check recomputes a quantity by an independent route (per-slot
simulation, Monte-Carlo expectation, closed form, finite differences) and
reports ``OracleResult(name, passed, detail)``.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels_py, kernels
from .bia import BiaInstance, error_covariance, sample_disturbance, simulate_decode, user_rate
from .channel import channel_at, channel_many, sample_geometry, wavelength_for
from .numerics import standard_complex_normal
from .policy import MlpParams, backward, flatten, forward, unflatten

__all__ = [
    "OracleResult",
    "decode_oracle",
    "covariance_oracle",
    "rate_closed_form",
    "gradient_oracle",
    "kernel_agreement",
    "run_all",
]


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def decode_oracle(users=(2, 3, 4, 5), trials=100, power=0.25, seed=0, tol=1e-9):
    """Noise- and error-free decoding recovers ``sqrt(P) H_k s_k`` exactly."""
    rng = np.random.default_rng(seed)
    lam = wavelength_for(60e9)
    worst_rec, worst_leak = 0.0, 0.0
    for K in users:
        for _ in range(trials):
            h = np.empty((K, 2, 2), dtype=np.complex128)
            for k in range(K):
                g = sample_geometry(4, 4, lam, rng)
                u = rng.uniform(-0.25, 0.25, size=(2, 3))
                h[k] = [channel_at(g, u[0]), channel_at(g, u[1])]
            s = standard_complex_normal(rng, (K, 2))
            zero = np.zeros((K, K + 1))
            out = simulate_decode(h, s, zero, power)
            expect = np.sqrt(power) * np.einsum("kmi,ki->km", h, s)
            worst_rec = max(worst_rec, float(np.max(np.abs(out - expect))))
            for k in range(K):
                s_int = s.copy()
                s_int[k] = 0.0
                leak = simulate_decode(h, s_int, zero, power)[k]
                worst_leak = max(worst_leak, float(np.max(np.abs(leak))))
    ok = worst_rec < tol and worst_leak < tol
    return OracleResult("bia-decode", ok,
                        f"max reconstruction error {worst_rec:.2e}, max leakage {worst_leak:.2e}")


def covariance_oracle(tuples=20, draws=1_000_000, seed=1, tol=0.02):
    """Sample covariance of the stacked disturbance matches the closed form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(tuples):
        K = int(rng.integers(2, 6))
        sigma2 = float(10 ** rng.uniform(-3, -1))
        power = float(rng.uniform(0.1, 1.0))
        delta = standard_complex_normal(rng, (2, 2)) * math.sqrt(rng.uniform(0.01, 0.1))
        x = sample_disturbance(delta, K, sigma2, power, draws, rng)
        emp = x.T @ x.conj() / draws
        inst = BiaInstance(np.zeros(2), np.zeros(2), delta[0], delta[1], power, sigma2, K)
        omega = error_covariance(inst)
        worst = max(worst, float(np.linalg.norm(emp - omega) / np.linalg.norm(omega)))
    return OracleResult("omega-monte-carlo", worst < tol,
                        f"worst relative Frobenius error {worst:.4f} (tol {tol})")


def rate_closed_form(power=0.25, sigma2=1e-9, K=4, tol=1e-9):
    inst = BiaInstance([1, 0], [0, 1], [0, 0], [0, 0], power, sigma2, K)
    got = user_rate(inst)
    expect = math.log2(1 + power / (K * sigma2)) + math.log2(1 + power / sigma2)
    return OracleResult("rate-closed-form", abs(got - expect) < tol,
                        f"rate {got:.12f} vs closed form {expect:.12f}")


def gradient_oracle(nets=50, seed=2, tol=1e-4, step=1e-5):
    """Backward pass vs central finite differences on small random MLPs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(nets):
        net = MlpParams.init(8, 3, rng, hidden=16)
        for p in net.arrays().values():
            p += rng.normal(0, 0.1, p.shape)
        up = rng.normal(size=(4, 3))
        # finite differences are only valid away from a ReLU kink
        while True:
            x = rng.normal(size=(4, 8))
            _, cache = forward(net, x, return_cache=True)
            if min(np.abs(cache[1]).min(), np.abs(cache[3]).min()) > 1e-3:
                break
        analytic = flatten(backward(net, cache, up).arrays())
        params = net.arrays()
        theta = flatten(params)
        numeric = np.empty_like(theta)
        for i in range(theta.size):
            for sgn in (1, -1):
                t = theta.copy()
                t[i] += sgn * step
                unflatten(params, t)
                val = float(np.sum(up * forward(net, x)))
                numeric[i] = val if sgn == 1 else (numeric[i] - val) / (2 * step)
        unflatten(params, theta)
        err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
        worst = max(worst, float(err.max()))
    return OracleResult("mlp-gradient", worst < tol, f"worst relative error {worst:.2e}")


def kernel_agreement(seed=3, n=2000):
    """Active kernel backend vs the numpy reference and the scalar channel path."""
    rng = np.random.default_rng(seed)
    lam = wavelength_for(60e9)
    g = sample_geometry(4, 4, lam, rng)
    pos = rng.uniform(2.75, 3.25, size=(n, 3))
    h_k = channel_many(g, pos)
    h_ref = _kernels_py.channel_gains(g.rx_dirs, g.prm_frm, pos, g.wavenumber)
    h_loop = np.array([channel_at(g, p) for p in pos[:50]])
    est = standard_complex_normal(rng, (n, 2, 2))
    d = standard_complex_normal(rng, (n, 2, 2)) * 0.1
    r_k = kernels.bia_rates(est, d, 0.25, 1e-9, 4)
    r_ref = _kernels_py.bia_rates(est, d, 0.25, 1e-9, 4)
    e1 = float(np.max(np.abs(h_k - h_ref)))
    e2 = float(np.max(np.abs(h_k[:50] - h_loop)))
    e3 = float(np.max(np.abs(r_k - r_ref)))
    ok = max(e1, e2) < 1e-9 and e3 < 1e-9
    return OracleResult(f"kernels[{kernels.BACKEND}]", ok,
                        f"channel vs numpy {e1:.1e}, vs scalar {e2:.1e}, rate {e3:.1e}")


def run_all(quick=False):
    """Run every suite; ``quick`` shrinks Monte-Carlo and trial counts."""
    checks = [
        lambda: decode_oracle(trials=10 if quick else 100),
        lambda: covariance_oracle(tuples=5 if quick else 20,
                                  draws=200_000 if quick else 1_000_000,
                                  tol=0.04 if quick else 0.02),
        rate_closed_form,
        lambda: gradient_oracle(nets=5 if quick else 50),
        kernel_agreement,
    ]
    results = []
    for check in checks:
        t0 = time.perf_counter()
        res = check()
        res.detail += f" [{time.perf_counter() - t0:.2f}s]"
        results.append(res)
    return results
