"""Command line interface.

Exit codes: 0 all asserted checks pass, 1 assertion failure, 2 usage or
config error (including invalid space files), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import (ConfigError, FieldMismatchError, NumericError,
                     TripleFormatError, TripleValidationError)
from .runner import (CHECK_NAMES, WORKERS_ENV_VAR, CheckRequest,
                     ExperimentConfig, exit_code, parse_config, read_table,
                     rows_to_csv, rows_to_jsonl, run_checks, summary_dict,
                     write_outputs)
from .semigroup import build_cache, heat
from .spaces import (SpaceSpec, grid_coordinates, load_triple_with_metadata,
                     model_metadata, save_triple)

EXIT_PASS = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _space_spec_from_arg(arg):
    """A space argument is either a file path or 'model:key=val,key=val'."""
    if os.path.exists(arg):
        return SpaceSpec(model="file", params={"path": arg})
    name, _, rest = arg.partition(":")
    params = {}
    if rest:
        for tok in rest.split(","):
            if "=" not in tok:
                raise ConfigError(f"bad space parameter {tok!r} in {arg!r}")
            k, _, v = tok.partition("=")
            params[k.strip()] = v.strip()
    try:
        return SpaceSpec(model=name, params=params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_space(arg, normalize=False):
    spec = _space_spec_from_arg(arg)
    triple = spec.build(normalize=normalize)
    if spec.model == "file":
        _, metadata = load_triple_with_metadata(spec.params["path"],
                                                normalize=normalize)
        model = metadata.get("model")
        if model in ("two_point", "ou_chain", "cycle", "complete", "hypercube"):
            spec = SpaceSpec(model=model,
                             params={k: v for k, v in metadata.items()
                                     if k not in ("model", "format_version")})
    return triple, spec


def _cmd_build(args):
    params = {}
    if args.rho is not None:
        params["rho"] = args.rho
    if args.rate is not None:
        params["rate"] = args.rate
    if args.half_width is not None:
        params["R"] = args.half_width
    if args.n is not None:
        params["n"] = args.n
    if args.d is not None:
        params["d"] = args.d
    spec = SpaceSpec(model=args.model, params=params)
    triple = spec.build()
    save_triple(triple, args.output, metadata=model_metadata(spec))
    print(f"wrote {args.output}: n={triple.n}")
    return EXIT_PASS


def _cmd_validate(args):
    try:
        triple, _ = _load_space(args.space, normalize=args.normalize)
    except TripleValidationError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_ASSERTION
    print(f"ok: n={triple.n}, edges={int(triple.support.sum()) // 2}")
    return EXIT_PASS


def _cmd_curvature(args):
    from .curvature import curvature_global

    triple, _ = _load_space(args.space)
    rep = curvature_global(triple, kernel_tol=args.kernel_tol)
    if args.per_state:
        for x, k in enumerate(rep.k_per_state):
            token = "NEG_INF" if math.isinf(k) and k < 0 else f"{k:.11e}"
            print(f"{x},{token}")
    if rep.degenerate:
        print("NEG_INF")
    else:
        print(f"{rep.k_global:.12g}")
    return EXIT_PASS


def _cmd_evolve(args):
    triple, spec = _load_space(args.space)
    cache = build_cache(triple)
    times = [float(t) for t in args.times.split(",") if t.strip()]
    if any(t < 0 for t in times):
        raise ConfigError("times must be nonnegative")
    f = _field_from_arg(args.field, triple, spec)
    print("time,state,value")
    for t in sorted(times):
        hf = heat(cache, f, t)
        for x in range(triple.n):
            print(f"{t:.11e},{x},{hf[x]:.11e}")
    return EXIT_PASS


def _field_from_arg(arg, triple, spec):
    if arg.startswith("indicator:"):
        x = int(arg.split(":", 1)[1])
        f = np.zeros(triple.n)
        f[x] = 1.0
        return f
    if arg.startswith("random"):
        seed = int(arg.split(":", 1)[1]) if ":" in arg else 0
        return np.random.default_rng(seed).uniform(0.0, 1.0, triple.n)
    if arg.startswith("file:"):
        return np.loadtxt(arg.split(":", 1)[1], dtype=float)
    if arg == "coordinate":
        if spec.model == "ou_chain":
            return grid_coordinates(int(spec.params["n"]), float(spec.params["R"]))
        return np.linspace(0.0, 1.0, triple.n)
    raise ConfigError(f"unknown field spec {arg!r}")


def _parse_sets(pairs):
    params = {}
    for tok in pairs or ():
        if "=" not in tok:
            raise ConfigError(f"--set expects KEY=VALUE, got {tok!r}")
        k, _, v = tok.partition("=")
        params[k.strip()] = v.strip()
    return params


def _cmd_check(args):
    params = _parse_sets(args.set)
    if args.intervals is not None:
        params["intervals"] = args.intervals
    space = args.space or "two_point:rho=1"
    cfg = ExperimentConfig(
        space=_space_spec_from_arg(space),
        checks=[CheckRequest(name=args.name, params=params, mode=args.mode)],
        fmt=args.format, seed=args.seed,
        tolerance_scale=args.tolerance_scale)
    outcomes = run_checks(cfg)
    rows = [r for o in outcomes for r in o.rows]
    sys.stdout.write(rows_to_csv(rows) if args.format == "csv"
                     else rows_to_jsonl(rows))
    for o in outcomes:
        for s in o.subresults:
            flag = "asserted" if s.asserted else "reported"
            print(f"# {o.name}/{s.label}: margin {s.margin:.6e} "
                  f"tol {s.tolerance:g} [{flag}] "
                  f"{'pass' if s.passed else 'FAIL'}", file=sys.stderr)
        if args.name == "gauss-oracle" and o.rows:
            r = o.rows[0]
            if r.lhs is not None:
                print(f"# mass {r.lhs:.7f}, perimeter {r.rhs:.7f}",
                      file=sys.stderr)
    if args.out:
        cfg.out_dir = args.out
        write_outputs(cfg, outcomes)
    return exit_code(outcomes)


def _cmd_run(args):
    cfg = parse_config(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format is not None:
        cfg.fmt = args.format
    if args.tolerance_scale is not None:
        cfg.tolerance_scale = args.tolerance_scale
    if args.workers is not None:
        cfg.workers = args.workers
    outcomes = run_checks(cfg)
    table_path = write_outputs(cfg, outcomes)
    for o in outcomes:
        worst = max((s.margin for s in o.subresults), default=-math.inf)
        print(f"{o.name}: {o.status} (worst margin {worst:.6e})"
              + (f" [{o.note}]" if o.note else ""))
    print(f"tables: {table_path}")
    return exit_code(outcomes)


def _cmd_report(args):
    rows = []
    summaries = []
    for run_dir in args.runs:
        table = None
        for cand in ("checks.csv", "checks.jsonl"):
            p = os.path.join(run_dir, cand)
            if os.path.exists(p):
                table = p
                break
        if table is None:
            raise ConfigError(f"{run_dir}: no checks table found")
        rows.extend(read_table(table))
        summ = os.path.join(run_dir, "summary.json")
        if os.path.exists(summ):
            with open(summ) as fh:
                summaries.append(fh.read())
    out = args.out or "gammalab-report"
    os.makedirs(out, exist_ok=True)
    merged = os.path.join(out, "merged.csv")
    with open(merged, "w") as fh:
        fh.write(rows_to_csv(rows))
    print(f"merged table: {merged} ({len(rows)} rows from {len(args.runs)} runs)")
    if summaries:
        with open(os.path.join(out, "summaries.json"), "w") as fh:
            fh.write("[\n" + ",\n".join(s.rstrip() for s in summaries) + "\n]\n")
    if not args.no_plots:
        from .plots import render_figures

        written = render_figures(rows, out)
        print(f"figures: {len(written)} rendered under {os.path.join(out, 'figures')}")
    return EXIT_PASS


def build_parser():
    p = argparse.ArgumentParser(
        prog="gammalab",
        description="Curvature and functional-inequality laboratory for "
                    "finite reversible Markov triples.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a model space and write it to a file")
    b.add_argument("model", choices=("two_point", "ou_chain", "cycle",
                                     "complete", "hypercube"))
    b.add_argument("--rho", type=float, default=None, help="exchange rate")
    b.add_argument("--rate", type=float, default=None, help="edge rate")
    b.add_argument("--n", type=int, default=None, help="state count")
    b.add_argument("-R", "--half-width", type=float, default=None,
                   help="chain half width")
    b.add_argument("--d", type=int, default=None, help="hypercube dimension")
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=_cmd_build)

    v = sub.add_parser("validate", help="validate a space file")
    v.add_argument("space")
    v.add_argument("--normalize", action="store_true",
                   help="rescale the measure to unit sum before validation")
    v.set_defaults(func=_cmd_validate)

    c = sub.add_parser("curvature", help="print the optimal curvature constant")
    c.add_argument("space")
    c.add_argument("--kernel-tol", type=float, default=1e-10)
    c.add_argument("--per-state", action="store_true")
    c.set_defaults(func=_cmd_curvature)

    e = sub.add_parser("evolve", help="print heat-flow tables on a time grid")
    e.add_argument("space")
    e.add_argument("--times", required=True, help="comma separated times")
    e.add_argument("--field", default="coordinate",
                   help="coordinate | indicator:X | random[:SEED] | file:PATH")
    e.set_defaults(func=_cmd_evolve)

    k = sub.add_parser("check", help="run a single named check")
    k.add_argument("name", choices=CHECK_NAMES)
    k.add_argument("--space", default=None,
                   help="space file or inline spec like ou_chain:n=200,R=6")
    k.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="check parameter override")
    k.add_argument("--intervals", default=None,
                   help="interval union for gauss-oracle, e.g. \"[-1,1]\"")
    k.add_argument("--mode", choices=("assert", "report"), default=None)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    k.add_argument("--tolerance-scale", type=float, default=1.0)
    k.add_argument("-o", "--out", default=None)
    k.set_defaults(func=_cmd_check)

    r = sub.add_parser("run", help="run a config of checks and write reports")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--format", choices=("csv", "json-lines"), default=None)
    r.add_argument("--tolerance-scale", type=float, default=None)
    r.add_argument("--workers", type=int, default=None,
                   help=f"worker count (default: ${WORKERS_ENV_VAR} or cores)")
    r.set_defaults(func=_cmd_run)

    m = sub.add_parser("report", help="merge run outputs and render figures")
    m.add_argument("runs", nargs="+", help="run output directories")
    m.add_argument("-o", "--out", default=None)
    m.add_argument("--no-plots", action="store_true",
                   help="skip figure rendering")
    m.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, TripleFormatError, FieldMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TripleValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
