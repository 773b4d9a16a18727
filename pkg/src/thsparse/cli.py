"""Command-line harness.

Subcommands: ``gen`` (write a problem to disk), ``solve`` (run one method on
a stored problem), ``bench`` (sparsity/SNR sweeps to CSV), ``denoise1d``,
``smooth2d`` (gradient-domain smoothing), ``report`` (render a bench CSV).

Every subcommand accepts ``--config FILE`` with a JSON object of flag
defaults; explicit flags override the file.  Exit codes: 0 success, 1 usage
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import baselines
from .bench import SweepSpec, classify_failure, rre, run_sweep, sweep_to_csv, SUCCESS_RRE
from .continuation import ContinuationConfig, continuation_run
from .gradient_domain import (
    SmoothingProblem,
    edge_pixels,
    from_unit,
    read_pgm,
    smooth_continuation,
    to_unit,
    write_pgm,
)
from .linalg import NearSingular
from .penalty import penalty_value
from .problems import GenSpec, load_problem, make_problem, save_problem

_FAMILIES = {"a1": "gaussian", "gaussian": "gaussian", "a2": "dct", "dct": "dct"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_grid(text):
    """Parse 'start:step:stop' (inclusive) or a comma list of numbers."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("grid step must be positive")
        values = np.arange(start, stop + step / 2, step)
    else:
        values = np.array([float(p) for p in text.split(",")])
    if np.allclose(values, np.round(values)):
        return tuple(int(v) for v in np.round(values))
    return tuple(float(v) for v in values)


def build_parser():
    parser = _Parser(prog="thsparse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subparsers = {}

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of flag defaults")
        subparsers[name] = p
        return p

    p = add("gen", "generate a recovery problem and store it")
    p.add_argument("--family", required=True, choices=sorted(_FAMILIES))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=float, help="row correlation (gaussian family)")
    p.add_argument("--F", type=float, help="oversampling factor (dct family)")
    p.add_argument("--s", type=int, required=True, help="sparsity of the truth")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix (.bin/.json)")

    p = add("solve", "run one solver on a stored problem")
    p.add_argument("--problem", required=True, help="problem prefix from `gen`")
    p.add_argument("--method", required=True, choices=["th", "l1", "iht", "irls"])
    p.add_argument("--mu0", type=float)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mu-min", type=float)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--iht-s", type=int, help="sparsity target (default: truth's)")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--solution-out", help="write the estimate as one-column CSV")

    p = add("bench", "sweep sparsity or SNR and write a CSV table")
    p.add_argument("--family", required=True, choices=sorted(_FAMILIES))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", type=float)
    p.add_argument("--F", type=float)
    p.add_argument("--s-grid", help="sparsity grid, start:step:stop or comma list")
    p.add_argument("--snr-grid", help="SNR grid in dB (needs --s)")
    p.add_argument("--s", type=int, default=0, help="sparsity for SNR sweeps")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--methods", default="th", help="comma list: th,l1,iht,irls")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, help="fixed data weight for noisy th")
    p.add_argument("--mu-min", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output path")

    p = add("denoise1d", "smooth a 1-d signal (CSV, one value per line)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="smoothed signal CSV")
    p.add_argument("--edges-out", help="0/1 jump marks CSV (one per difference)")

    p = add("smooth2d", "smooth a grayscale PGM image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", help="smoothed PGM (default: <in>.smooth.pgm)")
    p.add_argument("--edges-out", help="edge-map PGM (default: <in>.edges.pgm)")

    p = add("report", "render a bench CSV as an aligned table")
    p.add_argument("--in", dest="infile", required=True)

    return parser, subparsers


def _apply_config(parser, subparsers, argv):
    """Honor --config: file values become defaults, flags still override."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        sp = subparsers[args.command]
        known = {a.dest for a in sp._actions}
        unknown = set(cfg) - known
        if unknown:
            sp.error(f"unknown config keys: {sorted(unknown)}")
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _family_param(args, parser):
    kind = _FAMILIES[args.family]
    if kind == "gaussian":
        if args.r is None:
            parser.error("--r is required for the gaussian family")
        return kind, args.r
    if args.F is None:
        parser.error("--F is required for the dct family")
    return kind, args.F


def _cmd_gen(args, parser):
    kind, param = _family_param(args, parser)
    spec = GenSpec(kind=kind, m=args.m, n=args.n, param=param, s=args.s,
                   sigma=args.sigma, seed=args.seed)
    problem = make_problem(spec)
    save_problem(problem, args.out)
    print(f"wrote {args.out}.bin and {args.out}.json "
          f"({kind}, {args.m}x{args.n}, s={args.s}, sigma={args.sigma})")
    return 0


def _cmd_solve(args, parser):
    problem = load_problem(args.problem)
    report = {"method": args.method, "problem": args.problem}
    if args.method == "th":
        kwargs = dict(mu0=args.mu0, rho=args.rho, max_epochs=args.epochs,
                      alpha=args.alpha, inner_tol=args.tol)
        if args.mu_min is not None:
            kwargs["mu_min"] = args.mu_min
        cfg = ContinuationConfig(**kwargs)
        mode = "constrained" if problem.sigma == 0.0 else "regularized"
        state, trace = continuation_run(problem, cfg, mode=mode)
        xhat = state.x
        report.update(mode=mode, converged=state.converged, epochs=len(trace),
                      iterations=sum(r.inner_iters for r in trace),
                      mu_final=trace.records[-1].mu, objective=state.objective)
        penalty_fn = lambda v: penalty_value(v, trace.records[-1].mu)
    elif args.method == "l1":
        res = baselines.basis_pursuit(problem.A, problem.b)
        xhat = res.x
        report.update(converged=res.converged, iterations=res.iterations)
        penalty_fn = lambda v: float(np.sum(np.abs(v)))
    elif args.method == "iht":
        s = args.iht_s
        if s is None:
            if problem.truth is None:
                parser.error("--iht-s is required when the problem has no truth")
            s = int(np.count_nonzero(problem.truth))
        res = baselines.iht(problem.A, problem.b, s)
        xhat = res.x
        report.update(converged=res.converged, iterations=res.iterations, s=s)
        penalty_fn = lambda v: float(np.count_nonzero(v))
    else:
        res = baselines.irls_lp(problem.A, problem.b, p=0.5)
        xhat = res.x
        report.update(converged=res.converged, iterations=res.iterations)
        penalty_fn = lambda v: float(np.sum(np.abs(v) ** 0.5))
    report["residual"] = float(np.linalg.norm(problem.A @ xhat - problem.b))
    if problem.truth is not None:
        err = rre(xhat, problem.truth)
        report["rre"] = err
        report["success"] = bool(err < SUCCESS_RRE)
        report["failure_class"] = (
            "none" if err < SUCCESS_RRE
            else classify_failure(xhat, problem.truth, penalty_fn)
        )
    text = json.dumps(report, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.solution_out:
        np.savetxt(args.solution_out, xhat, fmt="%.17g")
    return 0


def _cmd_bench(args, parser):
    kind, param = _family_param(args, parser)
    if (args.s_grid is None) == (args.snr_grid is None):
        parser.error("exactly one of --s-grid / --snr-grid is required")
    if args.s_grid is not None:
        grid_kind, grid = "sparsity", _parse_grid(args.s_grid)
    else:
        grid_kind, grid = "snr", _parse_grid(args.snr_grid)
        if args.s < 1:
            parser.error("--s (sparsity) is required for SNR sweeps")
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    spec = SweepSpec(kind=kind, m=args.m, n=args.n, param=param,
                     grid_kind=grid_kind, grid=grid, methods=methods,
                     trials=args.trials, s=args.s, seed=args.seed,
                     th_alpha=args.alpha, th_mu_min=args.mu_min)
    rows = run_sweep(spec, jobs=args.jobs)
    sweep_to_csv(spec, rows, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_denoise1d(args, parser):
    signal = np.loadtxt(args.infile, ndmin=1)
    problem = SmoothingProblem(data=signal, alpha=args.alpha, mu=args.mu)
    result, _ = smooth_continuation(problem, rho=args.rho, max_epochs=args.epochs,
                                    tol=args.tol)
    np.savetxt(args.out, result.x, fmt="%.17g")
    if args.edges_out:
        np.savetxt(args.edges_out, result.omega.astype(int), fmt="%d")
    print(f"wrote {args.out}"
          + (f" and {args.edges_out}" if args.edges_out else "")
          + f" ({int(result.omega.sum())} jump marks)")
    return 0


def _cmd_smooth2d(args, parser):
    img = read_pgm(args.infile)
    problem = SmoothingProblem(data=to_unit(img), alpha=args.alpha, mu=args.mu)
    result, _ = smooth_continuation(problem, rho=args.rho, max_epochs=args.epochs,
                                    tol=args.tol)
    out = args.out or args.infile + ".smooth.pgm"
    edges_out = args.edges_out or args.infile + ".edges.pgm"
    write_pgm(out, from_unit(result.x))
    mask = edge_pixels(result.omega, img.shape)
    write_pgm(edges_out, (mask * 255).astype(np.uint8))
    print(f"wrote {out} and {edges_out} ({int(result.omega.sum())} edge marks)")
    return 0


def _cmd_report(args, parser):
    with open(args.infile) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    meta = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise ValueError("CSV has no table rows")
    for ln in meta:
        print(ln)
    table = [ln.split(",") for ln in body]
    # family, grid_kind, grid_value, method, trials, the four rates, mean_rre
    keep = [0, 4, 5, 6, 7, 13, 14, 15, 16, 17]
    table = [[row[i] for i in keep] for row in table]
    widths = [max(len(r[c]) for r in table) for c in range(len(table[0]))]
    for row in table:
        print("  ".join(cell.ljust(width) for cell, width in zip(row, widths)))
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "denoise1d": _cmd_denoise1d,
    "smooth2d": _cmd_smooth2d,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        args = _apply_config(parser, subparsers, argv)
        return _COMMANDS[args.command](args, subparsers[args.command])
    except SystemExit as exc:
        return int(exc.code or 0)
    except (NearSingular, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
