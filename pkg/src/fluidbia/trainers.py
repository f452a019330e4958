"""Critic-free group policy optimization and a clipped-surrogate PPO baseline.

Both trainers work against any vectorized environment exposing ``obs_dim``,
``act_dim``, ``episode_length``, ``initial_states(n, rng)`` and
``step(actions, rng) -> (rewards, next_states)``.
"""

import csv
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import rollout_batch
from .policy import (HIDDEN, LOG_STD_MAX, LOG_STD_MIN, Adam, GaussianPolicy, ValueFunction,
                     clip_grad_norm)

__all__ = [
    "GrpoConfig",
    "PpoConfig",
    "TrainRecord",
    "group_advantages",
    "clip_ratio",
    "kl_estimate",
    "grpo_objective",
    "evaluate_policy",
    "train_grpo",
    "train_ppo",
    "gae",
    "write_records_csv",
    "RECORD_COLUMNS",
]

DEGENERATE_STD = 1e-12


@dataclass
class GrpoConfig:
    group_size: int = 50
    trajectory_length: int = 50
    clip: float = 0.05
    kl_penalty: float = 1e-5
    learning_rate: float = 1e-4
    iterations: int = 2000
    batch_size: int = 256
    epochs: int = 1
    max_grad_norm: float = 5.0
    eval_every: int = 20
    eval_instances: int = 64
    hidden: int = HIDDEN

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if self.kl_penalty < 0:
            raise ValueError("kl_penalty must be >= 0")
        if self.trajectory_length < 1 or self.batch_size < 1 or self.iterations < 0:
            raise ValueError("trajectory_length, batch_size >= 1 and iterations >= 0 required")


@dataclass
class PpoConfig:
    clip: float = 0.05
    learning_rate: float = 1e-4
    batch_size: int = 256
    total_steps: int = 100_000
    gae_lambda: float = 0.95
    gamma: float = 0.99
    value_loss_weight: float = 0.5
    entropy_weight: float = 0.0
    epochs: int = 4
    num_envs: int = 40
    max_grad_norm: float = 5.0
    normalize_rewards: bool = True
    eval_every: int = 1
    eval_instances: int = 64
    hidden: int = HIDDEN

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.total_steps < 0 or self.num_envs < 1:
            raise ValueError("total_steps >= 0 and num_envs >= 1 required")


@dataclass
class TrainRecord:
    step: int
    mean_reward: float
    eval_reward: float = math.nan
    loss: float = math.nan
    kl: float = math.nan
    ms: float = 0.0


RECORD_COLUMNS = ("step", "mean_reward", "eval_reward", "loss", "kl", "ms")
RECORD_SCHEMA_LINE = "# fluidbia training schema v1"


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_records_csv(fh, records, timing=False, method=None):
    """TrainRecord rows; wall-clock ``ms`` is zeroed unless ``timing``."""
    fh.write(RECORD_SCHEMA_LINE + "\n")
    w = csv.writer(fh, lineterminator="\n")
    cols = (("method",) if method else ()) + RECORD_COLUMNS
    w.writerow(cols)
    for r in records:
        d = asdict(r)
        if not timing:
            d["ms"] = 0.0
        row = [method] if method else []
        w.writerow(row + [_fmt(d[c]) for c in RECORD_COLUMNS])


def group_advantages(rewards):
    """Standardize rewards within a group (population std).

    A group whose std is below 1e-12 yields all-zero advantages.
    """
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValueError("group needs at least 2 rewards")
    std = r.std()
    if std < DEGENERATE_STD:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def clip_ratio(ratio, c):
    return np.maximum(np.minimum(ratio, 1.0 + c), 1.0 - c)


def kl_estimate(ratio):
    """Unbiased, nonnegative KL estimator ``x - log x - 1`` with ``x = pi_ref / pi``."""
    x = np.asarray(ratio, dtype=float)
    if np.any(x <= 0):
        raise ValueError("ratio must be positive")
    out = x - np.log(x) - 1.0
    return float(out) if out.ndim == 0 else out


def grpo_objective(policy, states, actions, old_logp, ref_logp, advantages, clip, kl_penalty):
    """Clipped group-relative surrogate minus the KL penalty, with its gradient.

    All per-sample inputs are flat over (trajectory, step). Returns
    ``(J, grads, kl_mean)``; ``grads`` is the ascent direction for ``J``.
    Gradient flows through the unclipped ratio only where it is the minimum.
    """
    lp, vjp = policy.log_prob_vjp(states, actions)
    ratio = np.exp(lp - old_logp)
    clipped = clip_ratio(ratio, clip)
    surr_unclipped = ratio * advantages
    surr_clipped = clipped * advantages
    surr = np.minimum(surr_unclipped, surr_clipped)
    x = np.exp(ref_logp - lp)
    kl = x - np.log(x) - 1.0
    n = lp.shape[0]
    J = float(np.mean(surr - kl_penalty * kl))
    use_unclipped = surr_unclipped <= surr_clipped
    # d kl / d lp = 1 - x
    dJ_dlp = (np.where(use_unclipped, surr_unclipped, 0.0) + kl_penalty * (x - 1.0)) / n
    return J, vjp(dJ_dlp), float(np.mean(kl))


def evaluate_policy(policy, env, num_instances, rng, length=None):
    """Mean terminal reward of deterministic (mean-action) rollouts."""
    traj = rollout_batch(policy, env, num_instances, rng, deterministic=True, length=length)
    return float(np.mean(traj.terminal_rewards))


def _ascend(opt, grads, max_norm):
    neg = {k: -g for k, g in grads.items()}
    clip_grad_norm(neg, max_norm)
    opt.step(neg)


def train_grpo(env, cfg, rng, ref_policy, policy=None, eval_env=None):
    """Group relative policy optimization.

    ``policy`` defaults to a copy of ``ref_policy``. The policy with the best
    periodic evaluation is returned together with per-iteration records; the
    reference policy is never modified.
    """
    if ref_policy is None:
        raise ValueError("GRPO needs a reference policy")
    policy = ref_policy.copy() if policy is None else policy
    eval_env = env if eval_env is None else eval_env
    eval_rng = np.random.default_rng(rng.integers(2**63))
    opt = Adam(policy.params(), lr=cfg.learning_rate)
    records = []
    best, best_eval = policy.copy(), -math.inf
    G, T = cfg.group_size, cfg.trajectory_length

    for it in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        traj = rollout_batch(policy, env, G, rng, length=T)
        adv_g = group_advantages(traj.terminal_rewards)
        states = traj.states.reshape(G * T, -1)
        actions = traj.actions.reshape(G * T, -1)
        old_logp = traj.log_probs.reshape(G * T)
        adv = np.repeat(adv_g, T)
        ref_logp = ref_policy.log_prob(states, actions)

        losses, kls = [], []
        for _ in range(cfg.epochs):
            perm = rng.permutation(G * T)
            for start in range(0, G * T, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                J, grads, kl = grpo_objective(policy, states[idx], actions[idx], old_logp[idx],
                                              ref_logp[idx], adv[idx], cfg.clip, cfg.kl_penalty)
                _ascend(opt, grads, cfg.max_grad_norm)
                losses.append(-J)
                kls.append(kl)

        rec = TrainRecord(it, float(np.mean(traj.terminal_rewards)),
                          loss=float(np.mean(losses)), kl=float(np.mean(kls)))
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            rec.eval_reward = evaluate_policy(policy, eval_env, cfg.eval_instances, eval_rng, T)
            if rec.eval_reward >= best_eval:
                best, best_eval = policy.copy(), rec.eval_reward
        rec.ms = (time.perf_counter() - t0) * 1e3
        records.append(rec)
    return best, records


def gae(rewards, values, gamma, lam):
    """Generalized advantage estimates for fixed-length episodes.

    ``rewards`` and ``values`` are (n, T); every episode terminates after
    step ``T - 1``. Returns ``(advantages, returns)``.
    """
    n, T = rewards.shape
    adv = np.zeros((n, T))
    last = np.zeros(n)
    for t in range(T - 1, -1, -1):
        next_v = values[:, t + 1] if t + 1 < T else 0.0
        delta = rewards[:, t] + gamma * next_v - values[:, t]
        last = delta + gamma * lam * last
        adv[:, t] = last
    return adv, adv + values


class _ReturnScaler:
    """Divide rewards by a running std of discounted returns."""

    def __init__(self, gamma):
        self.gamma = gamma
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, rewards):
        n, T = rewards.shape
        ret = np.zeros(n)
        rets = np.empty((T, n))
        for t in range(T):
            ret = ret * self.gamma + rewards[:, t]
            rets[t] = ret
        # Chan et al. parallel mean/variance merge
        b = rets.size
        b_mean = float(rets.mean())
        b_m2 = float(((rets - b_mean) ** 2).sum())
        tot = self.count + b
        d = b_mean - self.mean
        self.mean += d * b / tot
        self.m2 += b_m2 + d * d * self.count * b / tot
        self.count = tot

    @property
    def std(self):
        if self.count < 2:
            return 1.0
        return max(math.sqrt(self.m2 / self.count), 1e-8)


def train_ppo(env, cfg, rng, policy=None, value_fn=None):
    """Clipped-surrogate PPO with a separate MLP critic and GAE."""
    init_rng = np.random.default_rng(rng.integers(2**63))
    if policy is None:
        policy = GaussianPolicy.init(env.obs_dim, env.act_dim, init_rng, cfg.hidden)
    if value_fn is None:
        value_fn = ValueFunction.init(env.obs_dim, init_rng, cfg.hidden)
    eval_rng = np.random.default_rng(rng.integers(2**63))
    pi_opt = Adam(policy.params(), lr=cfg.learning_rate)
    v_opt = Adam(value_fn.params(), lr=cfg.learning_rate)
    scaler = _ReturnScaler(cfg.gamma) if cfg.normalize_rewards else None
    T = env.episode_length
    records = []
    steps, update = 0, 0
    best, best_eval = None, -math.inf

    while steps < cfg.total_steps:
        t0 = time.perf_counter()
        n_envs = min(cfg.num_envs, math.ceil((cfg.total_steps - steps) / T))
        traj = rollout_batch(policy, env, n_envs, rng)
        steps += n_envs * T
        update += 1
        rewards = traj.rewards
        if scaler is not None:
            scaler.update(rewards)
            rewards = rewards / scaler.std
        values = value_fn(traj.states.reshape(n_envs * T, -1)).reshape(n_envs, T)
        adv, ret = gae(rewards, values, cfg.gamma, cfg.gae_lambda)

        N = n_envs * T
        states = traj.states.reshape(N, -1)
        actions = traj.actions.reshape(N, -1)
        old_logp = traj.log_probs.reshape(N)
        adv, ret = adv.reshape(N), ret.reshape(N)
        losses, kls = [], []
        for _ in range(cfg.epochs):
            perm = rng.permutation(N)
            for start in range(0, N, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                a = adv[idx]
                if a.size > 1:
                    a = (a - a.mean()) / (a.std() + 1e-8)
                lp, vjp = policy.log_prob_vjp(states[idx], actions[idx])
                ratio = np.exp(lp - old_logp[idx])
                unc = ratio * a
                clp = clip_ratio(ratio, cfg.clip) * a
                m = len(idx)
                d_lp = np.where(unc <= clp, unc, 0.0) / m
                grads = vjp(d_lp)
                if cfg.entropy_weight:
                    # Gaussian entropy = sum(log_std) + const
                    inside = (policy.log_std_raw >= LOG_STD_MIN) & (policy.log_std_raw <= LOG_STD_MAX)
                    grads["log_std"] = grads["log_std"] + cfg.entropy_weight * inside
                _ascend(pi_opt, grads, cfg.max_grad_norm)

                v, v_vjp = value_fn.value_vjp(states[idx])
                err = v - ret[idx]
                vgrads = v_vjp(cfg.value_loss_weight * 2.0 * err / m)
                clip_grad_norm(vgrads, cfg.max_grad_norm)
                v_opt.step(vgrads)
                losses.append(float(-np.mean(np.minimum(unc, clp))
                                    + cfg.value_loss_weight * np.mean(err ** 2)))
                kls.append(float(np.mean(old_logp[idx] - lp)))

        rec = TrainRecord(steps, float(np.mean(traj.rewards)),
                          loss=float(np.mean(losses)), kl=float(np.mean(kls)))
        if update % cfg.eval_every == 0 or steps >= cfg.total_steps:
            rec.eval_reward = evaluate_policy(policy, env, cfg.eval_instances, eval_rng)
            if rec.eval_reward >= best_eval:
                best, best_eval = (policy.copy(), value_fn.copy()), rec.eval_reward
        rec.ms = (time.perf_counter() - t0) * 1e3
        records.append(rec)

    if best is None:
        return policy, value_fn, records
    return best[0], best[1], records
