"""Command-line entry point: ``dalsolve {solve,path,bench,synth}``.

Exit codes: 0 success, 2 non-convergence, 3 input error.
"""
import argparse
import os
import sys

from .data import load_dataset, synth, write_libsvm
from .errors import InputError
from .runner import PathConfig, SOLVERS, SolveSpec, bench, build_problem, \
    run_path, run_solver, write_summary

EXIT_OK, EXIT_NONCONVERGENCE, EXIT_INPUT = 0, 2, 3


def _eta0(text):
    if text in ("aggressive", "conservative"):
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected aggressive, conservative or a positive number") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("eta0 must be positive")
    return v


def _add_data_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="input file")
    src.add_argument("--synth", nargs=2, type=int, metavar=("M", "N"),
                     help="generate a synthetic problem instead")
    p.add_argument("--format", choices=("libsvm", "csv"), default="libsvm")
    p.add_argument("--header", action="store_true", help="CSV has a header line")
    p.add_argument("--seed", type=int, default=0)


def _add_problem_args(p, standardize_default):
    p.add_argument("--loss", choices=("logistic", "squared", "sech"), default="logistic")
    p.add_argument("--reg", choices=("l1", "weighted-l1", "group", "elastic-net"),
                   default="l1")
    p.add_argument("--theta", type=float, default=0.5, help="elastic-net mixing")
    p.add_argument("--group-size", type=int, help="contiguous group size")
    p.add_argument("--eta0", type=_eta0, default="aggressive")
    p.add_argument("--eta-factor", type=float, default=2.0)
    p.add_argument("--rdg-tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction,
                   default=standardize_default)


def build_parser():
    parser = argparse.ArgumentParser(prog="dalsolve",
                                     description="Sparse estimation with DAL and baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single solve")
    _add_data_args(p)
    _add_problem_args(p, False)
    p.add_argument("--solver", choices=SOLVERS, default="dal")
    p.add_argument("--lambda-bar", type=float, default=0.01)
    p.add_argument("--trace", help="per-iteration record file")
    p.add_argument("--summary", help="one-line summary file")

    p = sub.add_parser("path", help="warm-started regularization path")
    _add_data_args(p)
    _add_problem_args(p, False)
    p.add_argument("--solver", choices=SOLVERS, default="dal")
    p.add_argument("--lambda-max", type=float, default=0.5)
    p.add_argument("--lambda-min", type=float, default=0.001)
    p.add_argument("--num-points", type=int, default=20)
    p.add_argument("--warm-start", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--trace-dir", help="directory for per-point record files")
    p.add_argument("--summary", help="summary file (default: stdout)")

    p = sub.add_parser("bench", help="compare solvers on one problem")
    _add_data_args(p)
    _add_problem_args(p, True)
    p.add_argument("--solvers", default="dal,fista",
                   help="comma-separated subset of " + ",".join(SOLVERS))
    p.add_argument("--lambda-bar", type=float, default=0.01)
    p.add_argument("--trace-dir", help="directory for per-solver record files")
    p.add_argument("--summary", help="summary file (default: stdout)")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--support-frac", type=float, default=0.04)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _dataset(args):
    if args.synth:
        return synth(args.synth[0], args.synth[1], seed=args.seed), \
            f"synth-{args.synth[0]}x{args.synth[1]}-s{args.seed}"
    fmt_kw = {"header": args.header} if args.format == "csv" else {}
    return load_dataset(args.data, args.format, **fmt_kw), os.path.basename(args.data)


def _spec(args, solver):
    return SolveSpec(loss=args.loss, reg=args.reg, theta=args.theta,
                     group_size=args.group_size, solver=solver, eta0=args.eta0,
                     eta_factor=args.eta_factor, rdg_tol=args.rdg_tol,
                     max_iter=args.max_iter, standardize=args.standardize)


def _write(path, fn):
    if path is None:
        fn(sys.stdout)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fn(fh)


def _cmd_solve(args):
    ds, name = _dataset(args)
    spec = _spec(args, args.solver)
    problem, lam = build_problem(ds, spec, args.lambda_bar)
    out = run_solver(problem, spec, lambda_bar=args.lambda_bar, lam=lam)
    if args.trace:
        _write(args.trace, out.trace.write)
    _write(args.summary, lambda fh: write_summary(fh, [(name, out)]))
    if not out.converged:
        print(out.message, file=sys.stderr)
    return EXIT_OK if out.converged else EXIT_NONCONVERGENCE


def _cmd_path(args):
    ds, name = _dataset(args)
    spec = _spec(args, args.solver)
    cfg = PathConfig(args.lambda_max, args.lambda_min, args.num_points, args.warm_start)
    outs = run_path(ds, spec, cfg)
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
        for i, o in enumerate(outs):
            _write(os.path.join(args.trace_dir, f"{name}-{spec.solver}-{i:03d}.tsv"),
                   o.trace.write)
    _write(args.summary, lambda fh: write_summary(fh, [(name, o) for o in outs]))
    return EXIT_OK if all(o.converged for o in outs) else EXIT_NONCONVERGENCE


def _cmd_bench(args):
    ds, name = _dataset(args)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    bad = [s for s in solvers if s not in SOLVERS]
    if bad:
        raise SystemExit(f"unknown solver(s): {', '.join(bad)}")
    specs = [_spec(args, s) for s in solvers]
    results = bench({name: ds}, specs, args.lambda_bar)
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
        for (dname, solver), o in results.items():
            _write(os.path.join(args.trace_dir, f"{dname}-{solver}.tsv"), o.trace.write)
    rows = [(dname, o) for (dname, _), o in results.items()]
    _write(args.summary, lambda fh: write_summary(fh, rows))
    return EXIT_OK if all(o.converged for _, o in rows) else EXIT_NONCONVERGENCE


def _cmd_synth(args):
    ds = synth(args.m, args.n, args.support_frac, args.noise, args.seed)
    write_libsvm(args.out, ds.design, ds.labels)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    cmd = {"solve": _cmd_solve, "path": _cmd_path, "bench": _cmd_bench,
           "synth": _cmd_synth}[args.command]
    try:
        return cmd(args)
    except (InputError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
