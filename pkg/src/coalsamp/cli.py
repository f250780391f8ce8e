"""Command-line entry point: ``coalsamp <command> ...``.

Exit codes: 0 success, 2 invalid input or unsupported request, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys

from . import harness
from .closedform import q_approx, q_leading
from .configspace import format_config, parse_config
from .errors import CoalsampError, SolverError
from .exact import exact_q, exact_q_table
from .model import load_model, reversibility_residual
from .oracle import q_leading_oracle
from .urn import mc_estimate_R, tree_distribution

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3

log = logging.getLogger("coalsamp")


def _log10(x: float) -> float:
    return x / math.log(10)


def _theta_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad theta list {text!r}") from None


def _model(args):
    return load_model(args.model, theta=getattr(args, "theta_override", None))


def cmd_qexact(args):
    model = _model(args)
    config = parse_config(args.config, model.K)
    val = exact_q(model, config, method=args.method, workers=args.workers)
    print(f"config   {format_config(config)}")
    print(f"log10_q  {_log10(val.log_q):.12g}")
    print(f"q        {val.q:.12g}" + ("  (underflows double; use log10_q)" if val.underflow else ""))


def cmd_qtable(args):
    model = _model(args)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["size", "rank", "config", "log_q"])

        def write(table):
            for idx, (row, lq) in enumerate(zip(table.configs(), table.log_values())):
                w.writerow([table.size, idx, format_config(row), f"{lq:.15g}"])

        exact_q_table(model, args.nmax, keep=False, callback=write,
                      method=args.method, workers=args.workers)
    print(f"wrote levels 1..{args.nmax} to {args.out}")


def cmd_qapprox(args):
    model = _model(args)
    config = parse_config(args.config, model.K)
    lead = q_leading(model, config, use_corollary=args.corollary)
    log_qa, _ = q_approx(model, config)
    print(f"observed  {config.n_observed}")
    print(f"Q         {lead.value:.12g}")
    print(f"R         {lead.rescaled:.12g}")
    print(f"log10_q_approx  {_log10(log_qa):.12g}")


def cmd_oracle(args):
    model = _model(args)
    config = parse_config(args.config, model.K)
    arith = "rational" if args.rational else "double"
    lead = q_leading_oracle(model, config, arith, args.method)
    fmt = str if args.rational else (lambda x: f"{x:.15g}")
    print(f"R  {fmt(lead.rescaled)}")
    print(f"Q  {fmt(lead.value)}")


def cmd_mc(args):
    model = _model(args)
    config = parse_config(args.config, model.K)
    est = mc_estimate_R(model, config, args.samples, args.seed, workers=args.workers)
    print(f"mean    {est.mean:.12g}")
    print(f"stderr  {est.stderr:.6g}")
    print(f"samples {est.samples}  seed {est.seed}")
    if args.trees:
        dist = tree_distribution(model, config, args.samples, args.seed, workers=args.workers)
        print("tree table (frequency, tree):")
        for tree, freq in sorted(dist.items(), key=lambda kv: -kv[1]):
            print(f"  {freq:.6f}  {tree}")


def cmd_sweep(args):
    model = _model(args)
    reports = harness.sweep_errors(model, args.theta, args.nmin, args.nmax,
                                   method=args.method, workers=args.workers)
    harness.emit_csv(reports, args.out)
    if args.plot_dir:
        harness.emit_plot_data(reports, args.plot_dir)
    if args.svg:
        harness.emit_svg(reports, args.svg)
    for r in reports:
        if r.n in (args.nmin, args.nmax) or r.n % 10 == 0:
            ratio = r.worst_err / r.ex_err if r.ex_err > 0 else float("nan")
            print(f"theta={r.theta:g} n={r.n:3d} ExErr={r.ex_err:.4e} "
                  f"WorstErr={r.worst_err:.4e} ratio={ratio:.3f} worst={format_config(r.worst_config)}")
    print(f"wrote {len(reports)} rows to {args.out}")


def cmd_identities(args):
    results = harness.identity_suite(max_size=args.max, max_ab=args.max_ab)
    bad = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{status}  {r.name:26s} {r.cases:7d} cases  {len(r.failures)} failures")
        for case in r.failures[:3]:
            print(f"      {case}")
        bad += not r.ok
    return 1 if bad else 0


def cmd_stationary(args):
    model = _model(args)
    print("pi  " + " ".join(f"{p:.6f}" for p in model.pi))
    res, pair = reversibility_residual(model, range(model.K))
    print(f"detailed-balance residual  {res:.4g}" + (f"  (worst pair {pair})" if pair else ""))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coalsamp",
        description="Coalescent sampling probabilities under finite-alleles mutation models.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_model(p):
        p.add_argument("--model", required=True, metavar="FILE", help="JSON model file")
        p.add_argument("--theta", dest="theta_override", type=float, default=None,
                       help="override the file's theta")
        return p

    def with_solver(p):
        p.add_argument("--method", choices=["gauss-seidel", "jacobi"], default="gauss-seidel")
        p.add_argument("--workers", type=int, default=1)
        return p

    p = with_solver(with_model(sub.add_parser("qexact", help="exact q(n) from the recursion")))
    p.add_argument("--config", required=True, help="comma-separated counts, e.g. 2,1,1,0")
    p.set_defaults(func=cmd_qexact)

    p = with_solver(with_model(sub.add_parser("qtable", help="write every level up to --nmax")))
    p.add_argument("--nmax", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_qtable)

    p = with_model(sub.add_parser("qapprox", help="closed-form leading coefficient"))
    p.add_argument("--config", required=True)
    p.add_argument("--corollary", action="store_true",
                   help="reversible shortcut for three observed alleles")
    p.set_defaults(func=cmd_qapprox)

    p = with_model(sub.add_parser("oracle", help="reference recursion for R and Q"))
    p.add_argument("--config", required=True)
    p.add_argument("--rational", action="store_true")
    p.add_argument("--method", choices=["dp", "subsample"], default="dp")
    p.set_defaults(func=cmd_oracle)

    p = with_model(sub.add_parser("mc", help="urn-process Monte Carlo estimate of R"))
    p.add_argument("--config", required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trees", action="store_true", help="also print the rooted-tree table")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("sweep", help="ExErr / WorstErr over sample sizes")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--theta", type=_theta_list, default=[1e-3, 5e-3, 1e-2],
                   help="comma-separated list (default 1e-3,5e-3,1e-2)")
    p.add_argument("--nmin", type=int, default=2)
    p.add_argument("--nmax", type=int, default=harness.DEFAULT_NMAX)
    p.add_argument("--out", default="errors.csv")
    p.add_argument("--svg", default=None)
    p.add_argument("--plot-dir", default=None, help="directory for per-theta series files")
    with_solver(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("identities", help="closed forms against brute force, exactly")
    p.add_argument("--max", type=int, default=8, help="largest count-vector total")
    p.add_argument("--max-ab", type=int, default=10)
    p.set_defaults(func=cmd_identities)

    p = with_model(sub.add_parser("stationary", help="stationary distribution and reversibility"))
    p.set_defaults(func=cmd_stationary)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (CoalsampError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return rc or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
