"""Command line: ``thzalloc {plan,solve,sweep,verify}``.

Exit codes: 0 success, 1 solver failure (infeasible / degenerate inputs), 2 bad
configuration or usage.
"""

from __future__ import annotations

import argparse
import sys

from .config import (METHODS, RunConfig, export_results, load_config, summarize, summary_csv,
                     ResultTable)
from .errors import ConfigError, ThzAllocError
from .spectrum import GHZ, THZ


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    common.add_argument("--method", choices=METHODS, help="solver / baseline")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), action="append", dest="formats",
                        help="result format (repeatable)")
    ap = argparse.ArgumentParser(prog="thzalloc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("plan", parents=[common], help="stage one only: edge bands, sub-band count and width")
    sub.add_parser("solve", parents=[common], help="one drop with the chosen method")
    sw = sub.add_parser("sweep", parents=[common], help="Monte-Carlo sweep from the [sweep] section")
    sw.add_argument("--jobs", type=int, help="worker processes")
    sw.add_argument("--timing", action="store_true", help="record wall-clock runtime (output no longer byte-stable)")
    sub.add_parser("verify", parents=[common], help="run the built-in property checks")
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.method:
        kw["method"] = args.method
    if args.out:
        kw["out_dir"] = args.out
    if args.formats:
        kw["formats"] = tuple(dict.fromkeys(args.formats))
    return cfg.replace(**kw) if kw else cfg


def cmd_plan(cfg: RunConfig) -> int:
    from .orchestrator import plan_from_config
    p = plan_from_config(cfg)
    print(f"window      {cfg.window}  [{p.f_I / GHZ:.6g}, {p.f_E / GHZ:.6g}] GHz")
    print(f"w_I         {p.w_I / GHZ:.6g} GHz")
    print(f"w_E         {p.w_E / GHZ:.6g} GHz")
    print(f"S*          {p.S_star}")
    print(f"w           {p.w / GHZ:.6g} GHz")
    print(f"max w/f_s   {p.fractional_bandwidths.max():.6g}")
    print("centers     " + " ".join(f"{f / THZ:.6g}" for f in p.f_centers) + " THz")
    return 0


def cmd_solve(cfg: RunConfig) -> int:
    from .orchestrator import METHOD_TAGS, drop_seed, solve_drop
    seed = drop_seed(cfg.seed, 0)
    rep = solve_drop(cfg, seed, cfg.method)
    table = ResultTable()
    table.add(METHOD_TAGS[cfg.method], "", None, 0, seed, rep.sum_rate, rep.aom, rep.outer_iterations)
    paths = export_results(table, cfg.output_dir(), cfg.formats, stem="solve")
    print(f"method {rep.method}  S={rep.plan['S']}  sum_rate={rep.sum_rate / 1e9:.6g} Gbit/s  "
          f"aom={rep.aom:.4g}  outer_iterations={rep.outer_iterations}")
    if rep.message_log is not None:
        print(f"messages: {rep.message_log.rounds} rounds, {sum(rep.message_log.payload_sizes)} floats")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_sweep(cfg: RunConfig, jobs=None, timing=False) -> int:
    from .orchestrator import SweepSpec, run_sweep
    if cfg.param is None:
        raise ConfigError("sweep needs [sweep] param and values")
    spec = SweepSpec(cfg.param, cfg.values, cfg.drops, cfg.methods)
    table = run_sweep(spec, cfg, n_jobs=jobs or cfg.n_jobs, timing=timing)
    paths = export_results(table, cfg.output_dir(), cfg.formats)
    summ = summarize(table)
    out = cfg.output_dir() / "summary.csv"
    out.write_text(summary_csv(summ))
    for r in summ:
        print(f"{r['method']:>15} {r['param']}={r['value']:<8g} n={r['n']:<3d} "
              f"sum_rate={r['sum_rate_mean'] / 1e9:.6g}±{r['sum_rate_se'] / 1e9:.3g} Gbit/s  aom={r['aom_mean']:.4g}")
    failed = sum(r["status"] != "ok" for r in table.rows)
    if failed:
        print(f"{failed} rows failed", file=sys.stderr)
    for p in [*paths, out]:
        print(f"wrote {p}")
    return 0


def cmd_verify() -> int:
    from .verify import run_all
    ok = True
    for name, passed, detail in run_all():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<12} {detail}")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.cmd == "plan":
            return cmd_plan(cfg)
        if args.cmd == "solve":
            return cmd_solve(cfg)
        if args.cmd == "sweep":
            return cmd_sweep(cfg, args.jobs, args.timing)
        return cmd_verify()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ThzAllocError as e:
        print(f"solver error ({type(e).__name__}): {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
