"""Benchmark harness: recovery metrics, failure taxonomy, seeded sweeps, CSV.

A trial is successful when the relative recovery error is below 1e-3.
Failed trials are classified by comparing penalty values at the truth and
the estimate: the truth penalizing *more* is a model failure (the model's
global optimum is not the truth), the truth penalizing *less* is an
algorithm failure (the solver missed a better point); ties within 1e-10 are
left unresolved.

Sweeps are deterministic: every trial draws from its own counter-based
substream keyed by (seed, grid index, trial index), so re-running an
identical spec reproduces the CSV byte for byte (timing columns aside), and
trials may be executed in parallel without affecting results.  All solver
hyperparameters are echoed into ``#``-prefixed metadata rows.

Every method is initialized from the same minimum-l1 point, following the
common benchmark protocol; its cost is reported as the ``l1`` method's own
time and is not charged to the warm-started solvers.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import baselines
from .continuation import ContinuationConfig, continuation_run
from .penalty import penalty_value
from .problems import (
    GenSpec,
    Problem,
    achieved_snr_db,
    gen_dct,
    gen_gaussian,
    gen_sparse_truth,
    observe,
    rng_stream,
    sigma_for_snr,
)

__all__ = [
    "SUCCESS_RRE",
    "RecoveryReport",
    "SweepSpec",
    "rre",
    "classify_failure",
    "run_trial",
    "run_sweep",
    "sweep_to_csv",
    "CSV_COLUMNS",
]

SUCCESS_RRE = 1e-3
TIE_TOL = 1e-10
CSV_FORMAT_VERSION = 1

CSV_COLUMNS = (
    "family,param,m,n,grid_kind,grid_value,method,trials,successes,"
    "model_failures,algorithm_failures,unresolved,errors,success_rate,"
    "model_fail_rate,algo_fail_rate,unresolved_rate,mean_rre,"
    "mean_snr_db,mean_snr_db_printed,mean_seconds"
)


def rre(xhat, xbar) -> float:
    """Relative recovery error ||xhat - xbar|| / ||xbar||."""
    xhat = np.asarray(xhat, dtype=np.float64)
    xbar = np.asarray(xbar, dtype=np.float64)
    denom = np.linalg.norm(xbar)
    if denom == 0.0:
        raise ValueError("ground truth is zero; relative error undefined")
    return float(np.linalg.norm(xhat - xbar) / denom)


def classify_failure(xhat, xbar, penalty_value_fn) -> str:
    """Failure taxonomy for an already-failed trial; see module docstring."""
    pt = penalty_value_fn(np.asarray(xbar, dtype=np.float64))
    pe = penalty_value_fn(np.asarray(xhat, dtype=np.float64))
    if pt > pe + TIE_TOL:
        return "model"
    if pt < pe - TIE_TOL:
        return "algorithm"
    return "unresolved"


@dataclass
class RecoveryReport:
    method: str
    rre: float
    success: bool
    failure_class: str  # none | model | algorithm | unresolved
    iterations: int
    epochs: int
    wall_seconds: float
    seed: int
    error: str | None = None

    def to_dict(self):
        return {
            "method": self.method,
            "rre": self.rre,
            "success": self.success,
            "failure_class": self.failure_class,
            "iterations": self.iterations,
            "epochs": self.epochs,
            "wall_seconds": self.wall_seconds,
            "seed": self.seed,
            "error": self.error,
        }


@dataclass(frozen=True)
class SweepSpec:
    """One benchmark sweep: a matrix family crossed with a grid.

    ``grid_kind`` is ``"sparsity"`` (grid values are sparsity levels) or
    ``"snr"`` (grid values are target SNRs in dB; ``s`` fixes the sparsity).
    ``th_alpha`` fixes the regularized-mode data weight; None tracks the
    per-epoch default.
    """

    kind: str
    m: int
    n: int
    param: float
    grid_kind: str
    grid: tuple
    methods: tuple = ("th",)
    trials: int = 50
    s: int = 0
    seed: int = 0
    th_alpha: float | None = None
    th_mu_min: float | None = None

    def __post_init__(self):
        if self.grid_kind not in ("sparsity", "snr"):
            raise ValueError(f"unknown grid kind {self.grid_kind!r}")
        if not self.grid:
            raise ValueError("grid must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        known = {"th", "l1", "iht", "irls"}
        bad = set(self.methods) - known
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; known: {sorted(known)}")


def _trial_problem(spec: SweepSpec, grid_index: int, trial: int) -> Problem:
    value = spec.grid[grid_index]
    if spec.grid_kind == "sparsity":
        s, snr = int(value), None
    else:
        s, snr = spec.s, float(value)
    gen = gen_gaussian if spec.kind == "gaussian" else gen_dct
    A = gen(spec.m, spec.n, spec.param, rng_stream(spec.seed, grid_index, trial, 0))
    truth = gen_sparse_truth(spec.n, s, rng_stream(spec.seed, grid_index, trial, 1))
    sigma = 0.0 if snr is None else sigma_for_snr(A, truth, snr)
    b = observe(A, truth, sigma, rng_stream(spec.seed, grid_index, trial, 2))
    gspec = GenSpec(kind=spec.kind, m=spec.m, n=spec.n, param=spec.param, s=s,
                    sigma=sigma, seed=spec.seed)
    return Problem(A=A, b=b, truth=truth, sigma=sigma, spec=gspec, seed=spec.seed)


def _th_penalty_fn(mu):
    return lambda v: penalty_value(v, mu)


def _l0_count(v):
    return float(np.count_nonzero(v))


def run_trial(problem: Problem, method: str, seed: int = 0, x0=None,
              th_alpha: float | None = None, th_mu_min: float | None = None) -> RecoveryReport:
    """Run one method on one problem and grade it against the truth."""
    if problem.truth is None:
        raise ValueError("run_trial needs a problem with known truth")
    if x0 is None and method in ("th", "irls"):
        x0 = baselines.basis_pursuit(problem.A, problem.b).x
    start = time.perf_counter()
    epochs = 0
    error = None
    try:
        if method == "th":
            cfg_kwargs = {}
            if th_alpha is not None:
                cfg_kwargs["alpha"] = th_alpha
            if th_mu_min is not None:
                cfg_kwargs["mu_min"] = th_mu_min
            mode = "constrained" if problem.sigma == 0.0 else "regularized"
            state, trace = continuation_run(
                problem, ContinuationConfig(**cfg_kwargs), mode=mode, x0=x0
            )
            xhat = state.x
            iterations = sum(r.inner_iters for r in trace)
            epochs = len(trace)
            penalty_fn = _th_penalty_fn(trace.records[-1].mu)
        elif method == "l1":
            res = baselines.basis_pursuit(problem.A, problem.b)
            xhat, iterations = res.x, res.iterations
            penalty_fn = lambda v: float(np.sum(np.abs(v)))
        elif method == "iht":
            s = int(np.count_nonzero(problem.truth))
            res = baselines.iht(problem.A, problem.b, s)
            xhat, iterations = res.x, res.iterations
            penalty_fn = _l0_count
        elif method == "irls":
            res = baselines.irls_lp(problem.A, problem.b, p=0.5, x0=x0)
            xhat, iterations = res.x, res.iterations
            penalty_fn = lambda v: float(np.sum(np.abs(v) ** 0.5))
        else:
            raise ValueError(f"unknown method {method!r}")
        err = rre(xhat, problem.truth)
    except Exception as exc:  # recorded, never aborts a sweep
        wall = time.perf_counter() - start
        return RecoveryReport(method=method, rre=float("inf"), success=False,
                              failure_class="unresolved", iterations=0, epochs=epochs,
                              wall_seconds=wall, seed=seed, error=repr(exc))
    wall = time.perf_counter() - start
    success = err < SUCCESS_RRE
    failure_class = "none" if success else classify_failure(xhat, problem.truth, penalty_fn)
    return RecoveryReport(method=method, rre=err, success=success,
                          failure_class=failure_class, iterations=iterations,
                          epochs=epochs, wall_seconds=wall, seed=seed, error=error)


@dataclass
class _Cell:
    """Aggregate of one (grid point, method) cell."""

    reports: list = field(default_factory=list)
    snrs: list = field(default_factory=list)


def _run_grid_point(spec: SweepSpec, grid_index: int) -> dict:
    cells = {method: _Cell() for method in spec.methods}
    for trial in range(spec.trials):
        problem = _trial_problem(spec, grid_index, trial)
        x0 = None
        if any(m in ("th", "irls") for m in spec.methods):
            x0 = baselines.basis_pursuit(problem.A, problem.b).x
        snr_pair = None
        if problem.sigma > 0.0:
            snr_pair = achieved_snr_db(problem.b, problem.A @ problem.truth)
        for method in spec.methods:
            report = run_trial(problem, method, seed=spec.seed, x0=x0,
                               th_alpha=spec.th_alpha, th_mu_min=spec.th_mu_min)
            cells[method].reports.append(report)
            if snr_pair is not None:
                cells[method].snrs.append(snr_pair)
    return cells


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list:
    """Execute the sweep and aggregate one row per (grid point, method).

    With ``jobs > 1`` grid points run in separate processes; rows are
    gathered in grid order so results are independent of scheduling.
    """
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_grid_point, spec, gi) for gi in range(len(spec.grid))]
            per_point = [f.result() for f in futures]
    else:
        per_point = [_run_grid_point(spec, gi) for gi in range(len(spec.grid))]

    rows = []
    for grid_index, cells in enumerate(per_point):
        for method in spec.methods:
            cell = cells[method]
            reports = cell.reports
            trials = len(reports)
            successes = sum(r.success for r in reports)
            model = sum(r.failure_class == "model" for r in reports)
            algo = sum(r.failure_class == "algorithm" for r in reports)
            unresolved = sum(r.failure_class == "unresolved" for r in reports)
            errors = sum(r.error is not None for r in reports)
            finite = [r.rre for r in reports if np.isfinite(r.rre)]
            assert Fraction(successes + model + algo + unresolved, trials) == 1
            row = {
                "family": spec.kind,
                "param": float(spec.param),
                "m": spec.m,
                "n": spec.n,
                "grid_kind": spec.grid_kind,
                "grid_value": spec.grid[grid_index],
                "method": method,
                "trials": trials,
                "successes": successes,
                "model_failures": model,
                "algorithm_failures": algo,
                "unresolved": unresolved,
                "errors": errors,
                "success_rate": successes / trials,
                "model_fail_rate": model / trials,
                "algo_fail_rate": algo / trials,
                "unresolved_rate": unresolved / trials,
                "mean_rre": float(np.mean(finite)) if finite else float("inf"),
                "mean_snr_db": float(np.mean([s[0] for s in cell.snrs])) if cell.snrs else None,
                "mean_snr_db_printed": float(np.mean([s[1] for s in cell.snrs])) if cell.snrs else None,
                "mean_seconds": float(np.mean([r.wall_seconds for r in reports])),
                "reports": reports,
            }
            rows.append(row)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # plain-float repr regardless of numpy scalar types
    return str(value)


def sweep_to_csv(spec: SweepSpec, rows, path_or_file=None) -> str:
    """Render sweep rows as versioned CSV; returns the text.

    Metadata rows are ``#``-prefixed; the trailing ``mean_seconds`` column is
    the only non-deterministic field.
    """
    buf = io.StringIO()
    buf.write(f"# thsparse-bench-csv v{CSV_FORMAT_VERSION}\n")
    buf.write(
        f"# family={spec.kind} param={_fmt(float(spec.param))} m={spec.m} n={spec.n}\n"
    )
    grid_txt = ",".join(_fmt(v) for v in spec.grid)
    buf.write(
        f"# grid_kind={spec.grid_kind} grid={grid_txt} s={spec.s} "
        f"trials={spec.trials} seed={spec.seed}\n"
    )
    buf.write(f"# methods={','.join(spec.methods)}\n")
    cfg = ContinuationConfig()
    th_alpha = "auto" if spec.th_alpha is None else _fmt(float(spec.th_alpha))
    th_mu_min = cfg.mu_min if spec.th_mu_min is None else spec.th_mu_min
    buf.write(
        f"# th: rho={_fmt(cfg.rho)} max_epochs={cfg.max_epochs} "
        f"mu_min={_fmt(th_mu_min)} inner_tol={_fmt(cfg.inner_tol)} alpha={th_alpha}\n"
    )
    buf.write("# l1: admm penalty=1.0 over_relax=1.6 max_iter=10000\n")
    buf.write("# iht: max_iter=1000 tol=1e-08 step=1/||A||^2 with halving\n")
    buf.write("# irls: p=0.5 eps0=1.0 eps_floor=1e-08\n")
    buf.write(CSV_COLUMNS + "\n")
    order = CSV_COLUMNS.split(",")
    for row in rows:
        buf.write(",".join(_fmt(row[c]) for c in order) + "\n")
    text = buf.getvalue()
    if path_or_file is not None:
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            with open(path_or_file, "w") as fh:
                fh.write(text)
        else:
            path_or_file.write(text)
    return text
