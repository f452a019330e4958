"""Three-layer ReLU MLPs with hand-written reverse-mode gradients.

The actor is a diagonal Gaussian over six pre-squash action coordinates
with a state-independent ``log_std``; the critic is the same trunk with a
scalar head. Parameters live in plain dicts of numpy arrays so that
optimizers, gradient checks and checkpoints can treat every model the same
way.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .env import PositionAction, squash

__all__ = [
    "HIDDEN",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
    "MlpParams",
    "GaussianPolicy",
    "ValueFunction",
    "forward",
    "backward",
    "gaussian_log_prob",
    "squash_log_det",
    "sample_action",
    "param_count",
    "flop_count",
    "Adam",
    "clip_grad_norm",
    "flatten",
    "unflatten",
    "save_checkpoint",
    "load_checkpoint",
]

HIDDEN = 256
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

_LAYERS = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @classmethod
    def init(cls, n_in, n_out, rng, hidden=HIDDEN):
        """Glorot-uniform weights, zero biases."""
        def glorot(fan_in, fan_out):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_in, fan_out))

        return cls(glorot(n_in, hidden), np.zeros(hidden),
                   glorot(hidden, hidden), np.zeros(hidden),
                   glorot(hidden, n_out), np.zeros(n_out))

    @classmethod
    def zeros(cls, n_in, n_out, hidden=HIDDEN):
        return cls(np.zeros((n_in, hidden)), np.zeros(hidden),
                   np.zeros((hidden, hidden)), np.zeros(hidden),
                   np.zeros((hidden, n_out)), np.zeros(n_out))

    @property
    def n_in(self):
        return self.W1.shape[0]

    @property
    def n_out(self):
        return self.W3.shape[1]

    @property
    def hidden(self):
        return self.W1.shape[1]

    def arrays(self):
        return {k: getattr(self, k) for k in _LAYERS}

    def copy(self):
        return MlpParams(**{k: v.copy() for k, v in self.arrays().items()})


def forward(net, x, return_cache=False):
    """``relu(relu(x W1 + b1) W2 + b2) W3 + b3`` for x of shape (n, in) or (in,)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.n_in:
        raise ValueError(f"input size {x.shape[-1]} != network input {net.n_in}")
    z1 = x @ net.W1 + net.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ net.W2 + net.b2
    a2 = np.maximum(z2, 0.0)
    out = a2 @ net.W3 + net.b3
    if return_cache:
        return out, (x, z1, a1, z2, a2)
    return out


def backward(net, cache, upstream):
    """Gradients of ``sum(upstream * forward(x))`` w.r.t. every parameter."""
    x, z1, a1, z2, a2 = cache
    g = np.asarray(upstream, dtype=float)
    if x.ndim == 1:
        x, z1, a1, z2, a2, g = (v[None] for v in (x, z1, a1, z2, a2, g))
    dW3 = a2.T @ g
    db3 = g.sum(axis=0)
    g2 = (g @ net.W3.T) * (z2 > 0)
    dW2 = a1.T @ g2
    db2 = g2.sum(axis=0)
    g1 = (g2 @ net.W2.T) * (z1 > 0)
    dW1 = x.T @ g1
    db1 = g1.sum(axis=0)
    return MlpParams(dW1, db1, dW2, db2, dW3, db3)


def gaussian_log_prob(mean, log_std, a):
    """Diagonal Gaussian log density summed over the last axis."""
    z = (a - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def squash_log_det(pre, half_widths):
    """``log|d squash / d pre|`` for the tanh box map, summed over coordinates."""
    pre = np.asarray(pre, dtype=float)
    hw = np.tile(np.asarray(half_widths, dtype=float), pre.shape[-1] // 3)
    t = np.tanh(pre)
    return np.sum(np.log(hw) + np.log1p(-t * t), axis=-1)


class GaussianPolicy:
    """MLP mean with a free, clamped ``log_std`` vector."""

    def __init__(self, net, log_std):
        self.net = net
        self.log_std_raw = np.asarray(log_std, dtype=float).copy()

    @classmethod
    def init(cls, obs_dim, act_dim, rng, hidden=HIDDEN, log_std=LOG_STD_INIT):
        return cls(MlpParams.init(obs_dim, act_dim, rng, hidden), np.full(act_dim, log_std))

    @property
    def log_std(self):
        return np.clip(self.log_std_raw, LOG_STD_MIN, LOG_STD_MAX)

    def params(self):
        p = self.net.arrays()
        p["log_std"] = self.log_std_raw
        return p

    def copy(self):
        return GaussianPolicy(self.net.copy(), self.log_std_raw.copy())

    def mean(self, states):
        return forward(self.net, states)

    def log_prob(self, states, actions, half_widths=None):
        """Log density of pre-squash ``actions``.

        With ``half_widths`` the density is that of the squashed position,
        i.e. the tanh log-Jacobian is subtracted.
        """
        lp = gaussian_log_prob(self.mean(states), self.log_std, actions)
        if half_widths is not None:
            lp = lp - squash_log_det(actions, half_widths)
        return lp

    def act(self, states, rng, deterministic=False):
        mu = self.mean(states)
        if deterministic:
            a = mu
        else:
            a = mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)
        return a, gaussian_log_prob(mu, self.log_std, a)

    def log_prob_vjp(self, states, actions):
        """Log-probs plus a function mapping per-sample weights to the grads
        of ``sum(weights * log_prob)``; one forward pass serves both."""
        mu, cache = forward(self.net, states, return_cache=True)
        ls = self.log_std
        inv_std = np.exp(-ls)
        z = (actions - mu) * inv_std
        lp = np.sum(-0.5 * z * z - ls - _HALF_LOG_2PI, axis=-1)
        inside = (self.log_std_raw >= LOG_STD_MIN) & (self.log_std_raw <= LOG_STD_MAX)

        def vjp(weights):
            w = np.asarray(weights, dtype=float)[..., None]
            grads = backward(self.net, cache, w * z * inv_std).arrays()
            grads["log_std"] = np.sum(w * (z * z - 1.0), axis=0) * inside
            return grads

        return lp, vjp

    def log_prob_and_grad(self, states, actions, weights):
        """Return ``log_prob`` per sample and grads of ``sum(weights * log_prob)``."""
        lp, vjp = self.log_prob_vjp(states, actions)
        return lp, vjp(weights)


class ValueFunction:
    def __init__(self, net):
        self.net = net

    @classmethod
    def init(cls, obs_dim, rng, hidden=HIDDEN):
        return cls(MlpParams.init(obs_dim, 1, rng, hidden))

    def params(self):
        return self.net.arrays()

    def copy(self):
        return ValueFunction(self.net.copy())

    def __call__(self, states):
        return forward(self.net, states)[..., 0]

    def value_vjp(self, states):
        out, cache = forward(self.net, states, return_cache=True)

        def vjp(weights):
            g = np.asarray(weights, dtype=float)[..., None]
            return backward(self.net, cache, g).arrays()

        return out[..., 0], vjp

    def value_and_grad(self, states, weights):
        """Values and grads of ``sum(weights * value)``."""
        v, vjp = self.value_vjp(states)
        return v, vjp(weights)


def sample_action(pol, state, region, rng):
    """Sample one position pair; log-prob is that of the squashed action."""
    pre, _ = pol.act(np.asarray(state, dtype=float)[None], rng)
    lp = pol.log_prob(np.asarray(state, dtype=float)[None], pre, region.half_widths)
    return PositionAction.from_array(squash(pre[0], region)), float(lp[0])


def param_count(model):
    """Number of trainable scalars of an :class:`MlpParams` or model object."""
    if isinstance(model, MlpParams):
        return int(sum(v.size for v in model.arrays().values()))
    return int(sum(np.size(v) for v in model.params().values()))


def flop_count(model):
    """Multiply-accumulate operations of one forward pass on one sample."""
    net = model if isinstance(model, MlpParams) else model.net
    return int(net.W1.size + net.W2.size + net.W3.size)


def flatten(params):
    return np.concatenate([np.ravel(params[k]) for k in sorted(params)])


def unflatten(params, flat):
    """Write ``flat`` back into the arrays of ``params`` in place."""
    i = 0
    for k in sorted(params):
        n = params[k].size
        params[k][...] = np.reshape(flat[i:i + n], params[k].shape)
        i += n
    return params


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        s = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= s
    return total


class Adam:
    """Adam on a dict of arrays, updated in place (minimizes)."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


CHECKPOINT_FORMAT = "fluidbia-checkpoint"


def _net_dict(net):
    return {k: v.tolist() for k, v in net.arrays().items()}


def _net_from(d):
    return MlpParams(**{k: np.asarray(d[k], dtype=float) for k in _LAYERS})


def save_checkpoint(path, policy, seed=None, step=0, value_fn=None):
    """JSON checkpoint; float ``repr`` round-trips so reloads are bitwise exact."""
    net = policy.net
    doc = {
        "header": {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "shapes": {k: list(v.shape) for k, v in net.arrays().items()},
            "seed": seed,
            "step": step,
        },
        "actor": _net_dict(net),
        "log_std": policy.log_std_raw.tolist(),
    }
    if value_fn is not None:
        doc["critic"] = _net_dict(value_fn.net)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Return ``(policy, value_fn_or_None, header)``."""
    with open(path) as fh:
        doc = json.load(fh)
    header = doc.get("header", {})
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    policy = GaussianPolicy(_net_from(doc["actor"]), np.asarray(doc["log_std"], dtype=float))
    for k, shape in header["shapes"].items():
        if list(getattr(policy.net, k).shape) != shape:
            raise ValueError(f"{path}: shape mismatch for {k}")
    value_fn = ValueFunction(_net_from(doc["critic"])) if "critic" in doc else None
    return policy, value_fn, header
