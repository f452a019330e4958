"""Single-user antenna-position problem as an episodic MDP.

The sum-rate problem decouples across users, so one environment holds one
user's geometry. An action is a pair of 3-D positions produced by squashing
six unbounded reals into the feasible box; the reward is the robust BIA rate
at those positions under a fresh CSI-error draw, or a fixed penalty when the
minimum-distance constraint fails. The next state is the estimated CSI at
the positions just chosen.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bia import BiaInstance, rates_batch, user_rate
from .channel import (
    CARRIER_FREQ,
    DEFAULT_ERROR_COV,
    CsiErrorModel,
    apply_csi_error,
    channel_at,
    channel_many,
    draw_csi_errors,
    sample_geometry,
    wavelength_for,
)

__all__ = [
    "FeasibleRegion",
    "PositionAction",
    "EnvConfig",
    "Trajectory",
    "PositionEnv",
    "Scenario",
    "default_env_config",
    "featurize",
    "squash",
    "is_feasible",
    "reward",
    "rollout",
    "rollout_batch",
    "make_scenario",
    "decouple",
]

OBS_DIM = 8
ACT_DIM = 6


@dataclass(frozen=True, eq=False)
class FeasibleRegion:
    """Axis-aligned box ``[lo, hi]`` in meters, closed on every face."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not np.all(hi > lo):
            raise ValueError(f"region max {hi} must exceed min {lo} on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, center, edge):
        c = np.asarray(center, dtype=float)
        return cls(c - edge / 2, c + edge / 2)

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def half_widths(self):
        return 0.5 * (self.hi - self.lo)

    def contains(self, points):
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)


@dataclass(frozen=True, eq=False)
class PositionAction:
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u1", np.asarray(self.u1, dtype=float).reshape(3))
        object.__setattr__(self, "u2", np.asarray(self.u2, dtype=float).reshape(3))

    def as_array(self):
        return np.stack([self.u1, self.u2])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).reshape(2, 3)
        return cls(a[0], a[1])


@dataclass(frozen=True, eq=False)
class EnvConfig:
    region: FeasibleRegion
    d_min: float
    power: float = 0.25
    sigma2: float = 1e-9
    num_users: int = 4
    error: CsiErrorModel = field(default_factory=CsiErrorModel)
    episode_length: int = 50
    violation_penalty: float = -10.0
    literal_omega: bool = False

    def __post_init__(self):
        if not self.d_min > 0:
            raise ValueError("d_min must be positive")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if not self.violation_penalty < 0:
            raise ValueError("violation_penalty must be negative")
        if self.num_users < 2:
            raise ValueError("num_users must be >= 2")

    def to_dict(self):
        cov = np.asarray(self.error.cov)
        return {
            "region": {"lo": self.region.lo.tolist(), "hi": self.region.hi.tolist()},
            "d_min": self.d_min,
            "power": self.power,
            "sigma2": self.sigma2,
            "num_users": self.num_users,
            "error": {"cov_re": cov.real.tolist(), "cov_im": cov.imag.tolist(),
                      "scale": self.error.scale},
            "episode_length": self.episode_length,
            "violation_penalty": self.violation_penalty,
            "literal_omega": self.literal_omega,
        }

    @classmethod
    def from_dict(cls, d):
        known = {"region", "d_min", "power", "sigma2", "num_users", "error",
                 "episode_length", "violation_penalty", "literal_omega"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown EnvConfig keys: {sorted(unknown)}")
        kw = dict(d)
        kw["region"] = FeasibleRegion(d["region"]["lo"], d["region"]["hi"])
        if "error" in d:
            e = d["error"]
            cov = np.asarray(e["cov_re"], dtype=float) + 1j * np.asarray(e["cov_im"], dtype=float)
            kw["error"] = CsiErrorModel(cov, float(e["scale"]))
        return cls(**kw)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def default_env_config(eta=1.0, freq=CARRIER_FREQ, user_location=(3.0, 0.0, 0.0),
                       edge=0.5, **overrides):
    """Evaluation setup: 0.5 m cube at the user, d_min = lambda/2, P = 0.25 W."""
    lam = wavelength_for(freq)
    kw = dict(
        region=FeasibleRegion.cube(user_location, edge),
        d_min=lam / 2,
        error=CsiErrorModel(DEFAULT_ERROR_COV, eta),
    )
    kw.update(overrides)
    return EnvConfig(**kw)


def squash(pre, region):
    """Map unbounded (..., 6) reals into positions (..., 2, 3) inside ``region``."""
    pre = np.asarray(pre, dtype=float)
    u = region.center + region.half_widths * np.tanh(pre.reshape(pre.shape[:-1] + (2, 3)))
    return u


def featurize(est_h):
    """(..., 2, 2) complex CSI -> (..., 8) interleaved (re, im) features."""
    est_h = np.asarray(est_h)
    flat = est_h.reshape(est_h.shape[:-2] + (4,))
    return np.stack([flat.real, flat.imag], axis=-1).reshape(est_h.shape[:-2] + (OBS_DIM,))


def _feasible_array(positions, cfg):
    p = np.asarray(positions, dtype=float)
    inside = np.all(cfg.region.contains(p), axis=-1)
    dist = np.linalg.norm(p[..., 0, :] - p[..., 1, :], axis=-1)
    return inside & (dist >= cfg.d_min)


def is_feasible(a, cfg):
    """Minimum distance (closed) and box membership for both positions."""
    return bool(_feasible_array(a.as_array(), cfg))


def reward(a, geom, cfg, rng):
    """Reward of one action; returns ``(r, instance)``.

    Infeasible actions get ``cfg.violation_penalty`` and instance ``None``.
    """
    if not is_feasible(a, cfg):
        return cfg.violation_penalty, None
    est1, d1 = apply_csi_error(channel_at(geom, a.u1), cfg.error, rng)
    est2, d2 = apply_csi_error(channel_at(geom, a.u2), cfg.error, rng)
    inst = BiaInstance(est1, est2, d1, d2, cfg.power, cfg.sigma2, cfg.num_users)
    return user_rate(inst, cfg.literal_omega), inst


class PositionEnv:
    """Vectorized environment over ``n`` independent parallel trajectories."""

    obs_dim = OBS_DIM
    act_dim = ACT_DIM

    def __init__(self, geom, cfg):
        self.geom = geom
        self.cfg = cfg

    @property
    def episode_length(self):
        return self.cfg.episode_length

    def reference_positions(self):
        c = self.cfg.region.center
        off = np.array([self.cfg.d_min / 2, 0.0, 0.0])
        return np.stack([c - off, c + off])

    def to_positions(self, pre):
        return squash(pre, self.cfg.region)

    def evaluate_positions(self, positions, rng):
        """Rewards and next states for positions of shape (n, 2, 3)."""
        positions = np.asarray(positions, dtype=float)
        n = positions.shape[0]
        cfg = self.cfg
        h_true = channel_many(self.geom, positions)
        delta = draw_csi_errors(cfg.error, rng, (n, 2))
        est = h_true - delta
        r = rates_batch(est, delta, cfg.power, cfg.sigma2, cfg.num_users, cfg.literal_omega)
        r = np.where(_feasible_array(positions, cfg), r, cfg.violation_penalty)
        return r, featurize(est)

    def initial_states(self, n, rng):
        ref = np.broadcast_to(self.reference_positions(), (n, 2, 3))
        return self.evaluate_positions(ref, rng)[1]

    def step(self, pre, rng):
        return self.evaluate_positions(self.to_positions(pre), rng)


@dataclass
class Trajectory:
    """Batch of trajectories; leading axes ``(n, T)``.

    ``actions`` are pre-squash samples, ``log_probs`` their Gaussian log
    density under the sampling policy.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray

    @property
    def terminal_rewards(self):
        return self.rewards[:, -1]

    def __len__(self):
        return self.rewards.shape[1]


def rollout_batch(policy, env, n, rng, deterministic=False, length=None):
    """Run ``n`` parallel episodes of ``length`` (default ``env.episode_length``) steps."""
    T = env.episode_length if length is None else int(length)
    states = np.empty((n, T, env.obs_dim))
    actions = np.empty((n, T, env.act_dim))
    rewards = np.empty((n, T))
    logps = np.empty((n, T))
    s = env.initial_states(n, rng)
    for t in range(T):
        a, lp = policy.act(s, rng, deterministic=deterministic)
        states[:, t] = s
        actions[:, t] = a
        logps[:, t] = lp
        r, s = env.step(a, rng)
        rewards[:, t] = r
    return Trajectory(states, actions, rewards, logps)


def rollout(policy, geom, cfg, rng, deterministic=False):
    """One episode; the trajectory reward is ``traj.rewards[0, -1]``."""
    return rollout_batch(policy, PositionEnv(geom, cfg), 1, rng, deterministic)


@dataclass(frozen=True, eq=False)
class Scenario:
    """K-user downlink: shared config, one independent geometry per user."""

    cfg: EnvConfig
    geometries: tuple


def make_scenario(cfg, rng, num_rx_paths=4, num_tx_paths=4, freq=CARRIER_FREQ,
                  path_loss_distance=None):
    lam = wavelength_for(freq)
    geoms = tuple(sample_geometry(num_rx_paths, num_tx_paths, lam, rng,
                                  path_loss_distance=path_loss_distance)
                  for _ in range(cfg.num_users))
    return Scenario(cfg, geoms)


def decouple(scenario):
    """Split the K-user problem into K independent single-user environments."""
    if scenario.cfg.num_users < 2:
        raise ValueError("K must be >= 2")
    return [PositionEnv(g, scenario.cfg) for g in scenario.geometries]
