"""MaximumGain and RandomGain heuristics over a discretized feasible region."""

from dataclasses import dataclass

import numpy as np

from .channel import channel_many
from .env import PositionAction, reward

__all__ = [
    "DiscretizedRegion",
    "NoFeasiblePairError",
    "discretize",
    "maximum_gain",
    "random_gain",
    "evaluate_heuristic",
    "MaximumGain",
    "RandomGain",
]

DEFAULT_NUM_SLOTS = 50_000
RANDOM_GAIN_MAX_ATTEMPTS = 1000


class NoFeasiblePairError(RuntimeError):
    """No pair of slots satisfies the minimum-distance constraint."""


@dataclass(frozen=True, eq=False)
class DiscretizedRegion:
    positions: np.ndarray
    seed: object = None

    def __len__(self):
        return self.positions.shape[0]


def discretize(region, num_slots, rng, grid=False):
    """Candidate antenna slots inside ``region``.

    Uniform random slots by default. ``grid=True`` takes the first
    ``num_slots`` points of the smallest cubic lattice with at least that
    many nodes.
    """
    if num_slots < 2:
        raise ValueError("need at least 2 slots")
    if grid:
        per_axis = int(np.ceil(num_slots ** (1 / 3) - 1e-9))
        axes = [np.linspace(region.lo[i], region.hi[i], per_axis) for i in range(3)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        pos = mesh[:num_slots]
    else:
        pos = rng.uniform(region.lo, region.hi, size=(num_slots, 3))
    pos.setflags(write=False)
    return DiscretizedRegion(pos)


def maximum_gain(geom, disc, cfg, channels=None):
    """Top-gain slot and the best remaining slot at least ``d_min`` away.

    Gain is ``||h(u)||_2`` of ``channels`` (default: the true channel at
    every slot). Ties go to the smaller slot index.
    """
    pos = disc.positions
    h = channel_many(geom, pos) if channels is None else channels
    gain = np.linalg.norm(h, axis=-1)
    order = np.argsort(-gain, kind="stable")
    for i, first in enumerate(order):
        d = np.linalg.norm(pos[order[i + 1:]] - pos[first], axis=-1)
        ok = np.flatnonzero(d >= cfg.d_min)
        if ok.size:
            # candidates after `first` keep the gain ordering
            second = order[i + 1 + ok[0]]
            return PositionAction(pos[first], pos[second])
    raise NoFeasiblePairError("no slot pair satisfies d_min")


def random_gain(disc, cfg, rng):
    """Two distinct slots drawn uniformly, redrawn until ``d_min`` holds."""
    pos = disc.positions
    if len(pos) < 2:
        raise ValueError("need at least 2 slots")
    for _ in range(RANDOM_GAIN_MAX_ATTEMPTS):
        i, j = rng.choice(len(pos), size=2, replace=False)
        if np.linalg.norm(pos[i] - pos[j]) >= cfg.d_min:
            return PositionAction(pos[i], pos[j])
    raise NoFeasiblePairError(f"no feasible pair in {RANDOM_GAIN_MAX_ATTEMPTS} attempts")


class MaximumGain:
    """Selector; the choice depends only on the geometry, so it is cached."""

    name = "maxgain"

    def __init__(self, disc, cfg, estimated=False):
        self.disc = disc
        self.cfg = cfg
        self.estimated = estimated
        self._cache = {}

    def __call__(self, geom, rng):
        if self.estimated:
            from .channel import draw_csi_errors
            h = channel_many(geom, self.disc.positions)
            h = h - draw_csi_errors(self.cfg.error, rng, len(h))
            return maximum_gain(geom, self.disc, self.cfg, channels=h)
        key = id(geom)
        if key not in self._cache:
            self._cache[key] = (geom, maximum_gain(geom, self.disc, self.cfg))
        return self._cache[key][1]


class RandomGain:
    name = "randomgain"

    def __init__(self, disc, cfg):
        self.disc = disc
        self.cfg = cfg

    def __call__(self, geom, rng):
        return random_gain(self.disc, self.cfg, rng)


def evaluate_heuristic(selector, geoms, cfg, num_instances, rng, return_all=False):
    """Mean rate of ``selector`` over ``num_instances`` error draws.

    Instance ``i`` uses ``geoms[i % len(geoms)]``: pass one geometry per
    instance for fresh geometries, or a single one for a fixed scenario.
    """
    if num_instances < 1:
        raise ValueError("num_instances must be >= 1")
    geoms = list(geoms)
    rates = np.empty(num_instances)
    for i in range(num_instances):
        g = geoms[i % len(geoms)]
        a = selector(g, rng)
        rates[i] = reward(a, g, cfg, rng)[0]
    if return_all:
        return float(rates.mean()), rates
    return float(rates.mean())
