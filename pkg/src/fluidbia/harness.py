"""Experiment orchestration: scenario setup, training cells, sweeps, reports.

Every (method, eta, seed) cell draws its randomness from a
``numpy.random.SeedSequence`` keyed on the seed and a fixed tag, so a cell's
output does not depend on which other cells run or in what order. The
scenario geometry depends on the seed only; all methods and all eta values
for one seed therefore face the same propagation environment.
"""

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .baselines import MaximumGain, RandomGain, discretize, evaluate_heuristic
from .channel import CARRIER_FREQ, DEFAULT_ERROR_COV, CsiErrorModel, wavelength_for
from .env import EnvConfig, FeasibleRegion, PositionEnv, make_scenario
from .policy import GaussianPolicy, ValueFunction, flop_count, param_count
from .trainers import GrpoConfig, PpoConfig, evaluate_policy, train_grpo, train_ppo

__all__ = [
    "METHODS",
    "ConfigError",
    "ExperimentConfig",
    "load_config_dict",
    "ResultRow",
    "ema_smooth",
    "gains_table",
    "report_model_stats",
    "build_env_config",
    "scenario_for_seed",
    "train_cell",
    "run_experiment",
    "write_results_csv",
    "summarize",
    "RESULT_COLUMNS",
    "SCHEMA_LINE",
]

METHODS = ("grpo", "ppo", "ppo-init", "maxgain", "randomgain")
EMA_FACTOR = 0.99
SCHEMA_LINE = "# fluidbia results schema v1"
RESULT_COLUMNS = ("method", "eta", "seed", "raw_rate", "ema_rate", "steps", "elapsed_ms")

_TAGS = {"geometry": 1, "slots": 2, "eval": 3, "grpo": 10, "ppo": 11, "ppo-init": 12,
         "maxgain": 13, "randomgain": 14}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""

    def __init__(self, field_name, msg):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    K: int = 4
    power: float = 0.25
    sigma2: float = 1e-9
    carrier_freq: float = CARRIER_FREQ
    region_edge: float = 0.5
    region_volume_literal: bool = False
    user_distance: float = 3.0
    path_loss: bool = False
    d_min: float | None = None
    num_tx_paths: int = 4
    num_rx_paths: int = 4
    eta_list: list = field(default_factory=lambda: [10.0, 1.0, 0.1, 0.01])
    methods: list = field(default_factory=lambda: list(METHODS))
    ppo_steps: int = 3_000_000
    ppo_init_steps: int = 100_000
    grpo_iterations: int = 60_000
    group_size: int = 50
    trajectory_length: int = 50
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    scale_factor: float = 30.0
    num_slots: int = 50_000
    slot_grid: bool = False
    eval_instances: int = 1000
    users: int = 1
    violation_penalty: float = -10.0
    literal_omega: bool = False
    heuristic_estimated_gain: bool = False
    output: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.eta_list:
            raise ConfigError("eta_list", "must be nonempty")
        if any(not (e >= 0) for e in self.eta_list):
            raise ConfigError("eta_list", "error scales must be >= 0")
        if not self.scale_factor >= 1:
            raise ConfigError("scale_factor", "must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError("methods", f"unknown or empty methods {bad}; choose from {METHODS}")
        if self.K < 2:
            raise ConfigError("K", "need at least 2 users")
        if not 1 <= self.users <= self.K:
            raise ConfigError("users", f"must lie in [1, K={self.K}]")
        if not self.seeds:
            raise ConfigError("seeds", "must be nonempty")
        for name in ("power", "sigma2", "carrier_freq", "region_edge"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")
        if self.d_min is not None and not self.d_min > 0:
            raise ConfigError("d_min", "must be positive")
        if self.group_size < 2:
            raise ConfigError("group_size", "must be >= 2")
        if self.trajectory_length < 1:
            raise ConfigError("trajectory_length", "must be >= 1")
        if self.num_slots < 2:
            raise ConfigError("num_slots", "must be >= 2")
        if self.eval_instances < 1:
            raise ConfigError("eval_instances", "must be >= 1")
        if not self.violation_penalty < 0:
            raise ConfigError("violation_penalty", "must be negative")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from exc

    @classmethod
    def from_json_file(cls, path):
        return cls.from_dict(load_config_dict(path))

    def to_dict(self):
        return asdict(self)

    def scaled(self, n):
        """Step count after dividing by ``scale_factor`` (at least 1 if nonzero)."""
        return 0 if n == 0 else max(1, math.ceil(n / self.scale_factor))

    @property
    def wavelength(self):
        return wavelength_for(self.carrier_freq)


def load_config_dict(path):
    """Raw key/value mapping from a JSON config file (keys checked by ``from_dict``)."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config", "top level must be a JSON object")
    unknown = sorted(set(d) - {f.name for f in fields(ExperimentConfig)})
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    return d


@dataclass
class ResultRow:
    method: str
    eta: float
    seed: int
    raw_rate: float
    ema_rate: float
    steps: int
    elapsed_ms: float = 0.0


def ema_smooth(series, factor=EMA_FACTOR):
    """``out[0] = x[0]``, ``out[t] = factor * out[t-1] + (1 - factor) * x[t]``."""
    if not 0 <= factor < 1:
        raise ValueError("factor must lie in [0, 1)")
    out = []
    acc = None
    for x in series:
        acc = float(x) if acc is None else factor * acc + (1.0 - factor) * float(x)
        out.append(acc)
    return out


def _mean_rates(rows):
    acc = {}
    for r in rows:
        acc.setdefault((r.method, float(r.eta)), []).append(r.raw_rate)
    return {k: float(np.mean(v)) for k, v in acc.items()}


def gains_table(results, reference="grpo", baselines=None):
    """Percentage gain of ``reference`` over each baseline at every eta.

    ``results`` is a list of :class:`ResultRow` (averaged over seeds) or a
    mapping ``{(method, eta): rate}``. Returns ``{baseline: {eta: %, ...,
    "average": %}}``.
    """
    means = results if isinstance(results, dict) else _mean_rates(results)
    etas = sorted({e for (m, e) in means if m == reference}, reverse=True)
    if not etas:
        raise KeyError(f"no results for reference method {reference!r}")
    if baselines is None:
        baselines = [m for m in METHODS if m != reference and any(k[0] == m for k in means)]
    table = {}
    for b in baselines:
        row = {}
        for e in etas:
            if (b, e) not in means:
                raise KeyError(f"missing result for method {b!r} at eta={e}")
            base = means[(b, e)]
            row[e] = 100.0 * (means[(reference, e)] - base) / base
        row["average"] = float(np.mean([row[e] for e in etas]))
        table[b] = row
    return table


def report_model_stats(obs_dim=8, act_dim=6, hidden=256):
    """Parameter and FLOP comparison of the critic-free actor vs actor+critic.

    Per-sample update cost is modeled as one forward plus a backward pass of
    twice the forward cost for every network that is trained.
    """
    rng = np.random.default_rng(0)
    actor = GaussianPolicy.init(obs_dim, act_dim, rng, hidden)
    critic = ValueFunction.init(obs_dim, rng, hidden)
    a_params, c_params = param_count(actor), param_count(critic)
    a_flops, c_flops = flop_count(actor), flop_count(critic)
    grpo_update = 3 * a_flops
    ppo_update = 3 * (a_flops + c_flops)
    return {
        "actor_params": a_params,
        "critic_params": c_params,
        "grpo_params": a_params,
        "ppo_params": a_params + c_params,
        "param_reduction_pct": 100.0 * (1.0 - a_params / (a_params + c_params)),
        "actor_flops_forward": a_flops,
        "critic_flops_forward": c_flops,
        "grpo_flops_update": grpo_update,
        "ppo_flops_update": ppo_update,
        "flops_reduction_pct": 100.0 * (1.0 - grpo_update / ppo_update),
    }


def build_env_config(cfg, eta):
    lam = cfg.wavelength
    edge = cfg.region_edge ** (1.0 / 3.0) if cfg.region_volume_literal else cfg.region_edge
    region = FeasibleRegion.cube((cfg.user_distance, 0.0, 0.0), edge)
    return EnvConfig(
        region=region,
        d_min=lam / 2 if cfg.d_min is None else cfg.d_min,
        power=cfg.power,
        sigma2=cfg.sigma2,
        num_users=cfg.K,
        error=CsiErrorModel(DEFAULT_ERROR_COV, eta),
        episode_length=cfg.trajectory_length,
        violation_penalty=cfg.violation_penalty,
        literal_omega=cfg.literal_omega,
    )


def _rng(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *tags]))


def scenario_for_seed(cfg, seed, eta=1.0):
    env_cfg = build_env_config(cfg, eta)
    dist = cfg.user_distance if cfg.path_loss else None
    return make_scenario(env_cfg, _rng(seed, _TAGS["geometry"]), cfg.num_rx_paths,
                         cfg.num_tx_paths, cfg.carrier_freq, path_loss_distance=dist)


def _eta_tag(eta):
    # stable integer tag for an eta value
    return int(round(float(eta) * 1e6))


def _ppo_cfg(cfg, steps):
    return PpoConfig(total_steps=steps)


def train_cell(cfg, method, eta, seed, user=0, _cache=None):
    """Train one DRL method for one user; returns ``(policy, value_fn, records, steps)``.

    ``grpo`` first trains ``ppo-init`` for the scaled PPO-Init budget and uses
    it both as reference policy and as starting point.
    """
    if method not in ("grpo", "ppo", "ppo-init"):
        raise ValueError(f"{method!r} is not a trained method")
    key = (method, float(eta), int(seed), user)
    if _cache is not None and key in _cache:
        return _cache[key]
    scen = scenario_for_seed(cfg, seed, eta)
    env = PositionEnv(scen.geometries[user], scen.cfg)
    et = _eta_tag(eta)
    if method == "grpo":
        ref, _, _, init_steps = train_cell(cfg, "ppo-init", eta, seed, user, _cache)
        gcfg = GrpoConfig(group_size=cfg.group_size, trajectory_length=cfg.trajectory_length,
                          iterations=cfg.scaled(cfg.grpo_iterations))
        pol, recs = train_grpo(env, gcfg, _rng(seed, _TAGS["grpo"], et, user), ref)
        out = (pol, None, recs, init_steps + gcfg.iterations * gcfg.group_size * gcfg.trajectory_length)
    else:
        budget = cfg.ppo_steps if method == "ppo" else cfg.ppo_init_steps
        steps = cfg.scaled(budget)
        pol, vf, recs = train_ppo(env, _ppo_cfg(cfg, steps), _rng(seed, _TAGS[method], et, user))
        out = (pol, vf, recs, steps)
    if _cache is not None:
        _cache[key] = out
    return out


def _evaluate_cell(cfg, method, eta, seed, cache):
    scen = scenario_for_seed(cfg, seed, eta)
    rates, emas, steps = [], [], 0
    for user in range(cfg.users):
        geom = scen.geometries[user]
        eval_rng = _rng(seed, _TAGS["eval"], _eta_tag(eta), user)
        if method in ("maxgain", "randomgain"):
            disc = discretize(scen.cfg.region, cfg.num_slots, _rng(seed, _TAGS["slots"], user),
                              grid=cfg.slot_grid)
            sel = (MaximumGain(disc, scen.cfg, estimated=cfg.heuristic_estimated_gain)
                   if method == "maxgain" else RandomGain(disc, scen.cfg))
            mean, per = evaluate_heuristic(sel, [geom], scen.cfg, cfg.eval_instances,
                                           eval_rng, return_all=True)
            rates.append(mean)
            emas.append(ema_smooth(per)[-1])
        else:
            pol, _, recs, steps = train_cell(cfg, method, eta, seed, user, cache)
            env = PositionEnv(geom, scen.cfg)
            rates.append(evaluate_policy(pol, env, cfg.eval_instances, eval_rng))
            curve = [r.eval_reward for r in recs if not math.isnan(r.eval_reward)]
            emas.append(ema_smooth(curve)[-1] if curve else rates[-1])
    return float(np.mean(rates)), float(np.mean(emas)), steps


def run_experiment(cfg, progress=None):
    """Run every (method, eta, seed) cell; one :class:`ResultRow` per cell."""
    cfg.validate()
    rows = []
    cache = {}
    for method in cfg.methods:
        for eta in cfg.eta_list:
            for seed in cfg.seeds:
                t0 = time.perf_counter()
                raw, ema, steps = _evaluate_cell(cfg, method, eta, seed, cache)
                row = ResultRow(method, float(eta), int(seed), raw, ema, int(steps),
                                (time.perf_counter() - t0) * 1e3)
                rows.append(row)
                if progress is not None:
                    progress(row)
    return rows


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_results_csv(fh, rows, timing=False):
    """Versioned CSV; ``elapsed_ms`` is written as 0 unless ``timing``."""
    fh.write(SCHEMA_LINE + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        d = asdict(r)
        if not timing:
            d["elapsed_ms"] = 0.0
        w.writerow([_fmt(d[c]) for c in RESULT_COLUMNS])


def read_results_csv(fh):
    text = fh.read() if hasattr(fh, "read") else fh
    lines = [ln for ln in io.StringIO(text) if not ln.startswith("#")]
    rows = []
    for d in csv.DictReader(lines):
        rows.append(ResultRow(d["method"], float(d["eta"]), int(d["seed"]), float(d["raw_rate"]),
                              float(d["ema_rate"]), int(d["steps"]), float(d["elapsed_ms"])))
    return rows


def summarize(rows, model_stats=True):
    """JSON-ready summary: per-method per-eta mean/std, gains table, model stats."""
    per = {}
    acc = {}
    for r in rows:
        acc.setdefault(r.method, {}).setdefault(repr(float(r.eta)), []).append(r.raw_rate)
    for m, by_eta in acc.items():
        per[m] = {e: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
                  for e, v in by_eta.items()}
    out = {"schema": "v1", "per_method": per}
    if any(r.method == "grpo" for r in rows) and len(acc) > 1:
        try:
            gt = gains_table(rows)
            out["gains"] = {b: {repr(k) if isinstance(k, float) else k: v for k, v in row.items()}
                            for b, row in gt.items()}
        except KeyError as exc:
            out["gains_error"] = str(exc)
    if model_stats:
        out["model_stats"] = report_model_stats()
    return out
