"""Command-line entry point: ``fednest run|sweep|verify|ledger``.

Exit codes: 0 success, 1 invalid input, 2 divergence, 3 verify failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import load_config, run_config
from .exceptions import ConfigError, DivergenceError, FedNestError
from .orchestrator import epoch_budget
from .trace import write_trace
from .verify import SUITES, run_all

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _seed_range(text):
    lo, sep, hi = text.partition("..")
    try:
        lo, hi = int(lo), int(hi if sep else lo)
    except ValueError:
        raise ConfigError(f"--seeds expects A..B, got {text!r}") from None
    if hi < lo or lo < 0:
        raise ConfigError(f"empty or negative seed range {text!r}")
    return list(range(lo, hi + 1))


def _run_one(cfg, out_dir, csv_name, json_name):
    os.makedirs(out_dir, exist_ok=True)
    trace = run_config(cfg)
    write_trace(trace, os.path.join(out_dir, csv_name), os.path.join(out_dir, json_name))
    return trace.final


def _fmt_final(final):
    keys = ("epoch", "rounds", "grad_norm_sq", "x_err_sq", "y_err_sq")
    return " ".join(f"{k}={final[k]:.6g}" if isinstance(final[k], float) else f"{k}={final[k]}"
                    for k in keys)


def cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out or cfg.output.dir
    final = _run_one(cfg, out, cfg.output.csv, cfg.output.json)
    print(f"{cfg.algorithm} seed={cfg.seed} {_fmt_final(final)}")
    return EXIT_OK


def _sweep_job(job):
    cfg, out, seed = job
    stem = f"seed{seed}"
    return seed, _run_one(cfg.with_seed(seed), out, f"{stem}.csv", f"{stem}.json")


def cmd_sweep(args):
    cfg = load_config(args.config)
    seeds = _seed_range(args.seeds)
    out = args.out or cfg.output.dir
    jobs = [(cfg, out, s) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    for seed, final in results:
        print(f"{cfg.algorithm} seed={seed} {_fmt_final(final)}")
    return EXIT_OK


def cmd_verify(args):
    names = args.only or None
    if names:
        unknown = [n for n in names if n not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suite {unknown[0]!r}; known: {sorted(SUITES)}")
    results = run_all(names)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_ledger(args):
    cfg = load_config(args.config)
    kind = cfg.problem.kind.replace("-quadratic", "")
    if cfg.algorithm not in ("fednest", "lfednest", "fednest_sgd", "lfednest_svrg"):
        print(1)
        return EXIT_OK
    print(epoch_budget(cfg.algorithm, kind, cfg.schedule))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="fednest", description="Federated nested optimisation simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run one config over a seed range")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", required=True, help="inclusive range A..B")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("verify", help="run the built-in oracle suites")
    v.add_argument("--only", nargs="*", help="subset of suite names")
    v.set_defaults(func=cmd_verify)
    lg = sub.add_parser("ledger", help="print the per-epoch round budget")
    lg.add_argument("--config", required=True)
    lg.set_defaults(func=cmd_ledger)
    for sp in (r, s, v, lg):
        sp.error = p.error
    return p


def cli_main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except DivergenceError as exc:
        where = "" if exc.epoch is None else f" at epoch {exc.epoch}"
        print(f"error: divergence{where}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FedNestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
