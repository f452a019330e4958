"""Command-line interface: ``fluidbia {train,evaluate,sweep,stats,oracle}``.

Flags mirror :class:`~fluidbia.harness.ExperimentConfig` field names
(``--eta-list``, ``--ppo-steps``, ...), with repeatable shorthands
``--eta``, ``--seed`` and ``--method``. Values resolve as defaults, then
flags, then the ``--config`` JSON file, so the file wins.

Exit status: 0 on success, 1 for configuration errors, 2 for numerical
failures (singular or indefinite matrices, non-finite rates, failed oracles).
"""

import argparse
import json
import math
import sys
import typing
from dataclasses import MISSING, fields

import numpy as np

from . import harness, oracle
from .env import PositionEnv
from .harness import ConfigError, ExperimentConfig, ResultRow
from .numerics import NotPositiveDefiniteError, SingularMatrixError
from .policy import load_checkpoint, save_checkpoint
from .trainers import evaluate_policy, write_records_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

_LIST_TYPES = {"eta_list": float, "seeds": int, "methods": str}
_SHORTHAND = {"eta_list": "--eta", "seeds": "--seed", "methods": "--method"}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for numerics
    def error(self, message):
        raise ConfigError("arguments", message)


def _field_type(f):
    if f.name in _LIST_TYPES:
        return _LIST_TYPES[f.name]
    default = f.default if f.default is not MISSING else None
    if isinstance(default, bool):
        return bool
    if default is None:
        args = [a for a in typing.get_args(f.type) if a is not type(None)]
        return args[0] if args else str
    return type(default)


def _add_config_flags(p):
    g = p.add_argument_group("experiment configuration")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = _field_type(f)
        if f.name in _LIST_TYPES:
            g.add_argument(flag, _SHORTHAND[f.name], dest=f.name, type=kind, nargs="+",
                           action="extend", default=argparse.SUPPRESS, metavar=f.name.upper())
        elif kind is bool:
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                           default=argparse.SUPPRESS)
        elif f.name == "output":
            g.add_argument(flag, "--out", dest="output", default=argparse.SUPPRESS,
                           help="CSV path (default: stdout)")
        else:
            g.add_argument(flag, dest=f.name, type=kind, default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON config file; its values override flags")
    p.add_argument("--summary", help="write the JSON summary here")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock columns (otherwise written as 0)")


def build_parser():
    p = _Parser(prog="fluidbia", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tr = sub.add_parser("train", help="train one DRL cell and save a checkpoint")
    _add_config_flags(tr)
    tr.add_argument("--checkpoint", help="write the trained policy here")

    ev = sub.add_parser("evaluate", help="evaluate methods, or a saved checkpoint")
    _add_config_flags(ev)
    ev.add_argument("--checkpoint", help="evaluate this policy instead of training")

    sw = sub.add_parser("sweep", help="full (method, eta, seed) grid with summary")
    _add_config_flags(sw)
    sw.add_argument("--quiet", action="store_true", help="no per-cell progress on stderr")

    sub.add_parser("stats", help="actor vs actor+critic parameter and FLOP counts")

    orc = sub.add_parser("oracle", help="run the brute-force verification suites")
    orc.add_argument("--quick", action="store_true", help="smaller trial counts")
    return p


_RUN_KEYS = {"config", "summary", "timing", "checkpoint", "quiet", "command"}


def resolve_config(ns):
    """Defaults, overridden by flags, overridden by the ``--config`` file."""
    d = {k: v for k, v in vars(ns).items() if k not in _RUN_KEYS}
    if getattr(ns, "config", None):
        d.update(harness.load_config_dict(ns.config))
    return ExperimentConfig.from_dict(d)


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _check_finite(rows):
    bad = [r for r in rows if not (math.isfinite(r.raw_rate) and math.isfinite(r.ema_rate))]
    if bad:
        raise FloatingPointError(f"non-finite rate for {bad[0].method} eta={bad[0].eta}")


def _write_rows(cfg, ns, rows):
    _check_finite(rows)
    fh = _open_out(cfg.output)
    try:
        harness.write_results_csv(fh, rows, timing=ns.timing)
    finally:
        if fh is not sys.stdout:
            fh.close()
    summary = ns.summary
    if summary is None and ns.command == "sweep" and cfg.output not in (None, "-"):
        summary = cfg.output.rsplit(".", 1)[0] + ".json"
    if summary:
        with open(summary, "w") as fh:
            json.dump(harness.summarize(rows), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _single(cfg, name):
    vals = getattr(cfg, name)
    if len(vals) != 1:
        raise ConfigError(name, f"this command takes exactly one value, got {vals}")
    return vals[0]


def cmd_train(ns):
    cfg = resolve_config(ns)
    method = _single(cfg, "methods")
    eta, seed = _single(cfg, "eta_list"), _single(cfg, "seeds")
    if method not in ("grpo", "ppo", "ppo-init"):
        raise ConfigError("methods", f"{method!r} has no training phase")
    pol, vf, recs, steps = harness.train_cell(cfg, method, eta, seed, user=0, _cache={})
    if any(not math.isfinite(r.mean_reward) for r in recs):
        raise FloatingPointError("non-finite training reward")
    fh = _open_out(cfg.output)
    try:
        write_records_csv(fh, recs, timing=ns.timing, method=method)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if ns.checkpoint:
        save_checkpoint(ns.checkpoint, pol, seed=int(seed), step=int(steps), value_fn=vf)
    if ns.summary:
        evals = [r.eval_reward for r in recs if not math.isnan(r.eval_reward)]
        with open(ns.summary, "w") as fh:
            json.dump({"schema": "v1", "method": method, "eta": eta, "seed": seed,
                       "steps": steps, "best_eval_reward": max(evals) if evals else None},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_evaluate(ns):
    cfg = resolve_config(ns)
    if not ns.checkpoint:
        _write_rows(cfg, ns, harness.run_experiment(cfg))
        return EXIT_OK
    try:
        pol, _, header = load_checkpoint(ns.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError("checkpoint", str(exc)) from exc
    rows = []
    for eta in cfg.eta_list:
        for seed in cfg.seeds:
            scen = harness.scenario_for_seed(cfg, seed, eta)
            rates = []
            for user in range(cfg.users):
                rng = np.random.default_rng(np.random.SeedSequence(
                    [int(seed), harness._TAGS["eval"], harness._eta_tag(eta), user]))
                env = PositionEnv(scen.geometries[user], scen.cfg)
                rates.append(evaluate_policy(pol, env, cfg.eval_instances, rng))
            mean = float(np.mean(rates))
            rows.append(ResultRow("checkpoint", float(eta), int(seed), mean, mean,
                                  int(header.get("step", 0))))
    _write_rows(cfg, ns, rows)
    return EXIT_OK


def cmd_sweep(ns):
    cfg = resolve_config(ns)

    def progress(row):
        if not ns.quiet:
            print(f"{row.method:>10s} eta={row.eta:<6g} seed={row.seed} "
                  f"rate={row.raw_rate:.4f}", file=sys.stderr)

    _write_rows(cfg, ns, harness.run_experiment(cfg, progress=progress))
    return EXIT_OK


def cmd_stats(ns):
    json.dump(harness.report_model_stats(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_oracle(ns):
    results = oracle.run_all(quick=ns.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


_COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
             "stats": cmd_stats, "oracle": cmd_oracle}


def main(argv=None):
    try:
        ns = build_parser().parse_args(argv)
        return _COMMANDS[ns.command](ns)
    except ConfigError as exc:
        print(f"fluidbia: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularMatrixError, NotPositiveDefiniteError, FloatingPointError) as exc:
        print(f"fluidbia: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
