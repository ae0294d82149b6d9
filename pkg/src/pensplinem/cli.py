"""Command-line interface: fit from CSV, simulation studies, rate scans,
RKHS diagnostics, and the design solvability check.

Conventions: stdout carries data (JSON or CSV), stderr carries diagnostics.
Exit codes: 0 success; 1 negative verdict (check-existence unsatisfiable,
diagnose check failed); 2 IO/parse/config errors; 3 singular system;
4 non-converged fit (suppressed by --allow-partial).  Set PENSPLINEM_LOG to
debug/info/warning to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .basis import DataFormatError, LongData, check_existence, make_knots
from .loss import parse_loss
from .penalty import PenaltyConfig
from .rkhs import diagnostics_report
from .select import select_lambda
from .simulate import ESTIMATORS, SimConfig, rate_experiment, run_study
from .solver import SingularSystem, SolverConfig, fit_penalized

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_SINGULAR = 3
EXIT_NO_CONVERGENCE = 4


def _fmt(x: float) -> str:
    """Machine-file float format: 17 significant digits (lossless for doubles)."""
    return format(float(x), ".17g")


def _parse_lambda(spec: str):
    """--lambda accepts 'auto', a single value, or 'a:b:count' (log-spaced)."""
    if spec == "auto":
        return "auto"
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad --lambda range {spec!r}, expected a:b:count")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if lo <= 0 or hi <= 0 or count < 1:
            raise ValueError("--lambda range endpoints must be > 0 and count >= 1")
        return np.logspace(np.log10(lo), np.log10(hi), count)
    return float(spec)


def _parse_df(spec: str):
    if spec in ("gaussian", "zero"):
        return spec
    return int(spec)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pensplinem",
        description="Penalized spline M-estimation for discretely sampled functional data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spline_flags(p):
        p.add_argument("--order", type=int, default=4, help="spline order p (default 4)")
        p.add_argument(
            "--penalty-order", type=int, default=2,
            help="penalized derivative order r (default 2)",
        )
        p.add_argument(
            "--knots", type=int, default=30,
            help="number of equidistant interior knots K (default 30)",
        )

    p_fit = sub.add_parser("fit", help="fit a mean curve from a CSV of (id,t,y) records")
    p_fit.add_argument("--input", required=True, help="input CSV with header id,t,y")
    p_fit.add_argument("--output", help="write the JSON artifact here (default stdout)")
    add_spline_flags(p_fit)
    p_fit.add_argument("--loss", default="ls", help="ls | lad | huber[:k] (default ls)")
    p_fit.add_argument(
        "--lambda", dest="lam", default="auto",
        help="auto | <value> | <start>:<stop>:<count> log-spaced (default auto)",
    )
    p_fit.add_argument(
        "--eval-grid", type=int, default=101,
        help="number of equidistant points for fitted-value output (default 101)",
    )
    p_fit.add_argument(
        "--max-iterations", type=int, default=200,
        help="IRLS iteration cap (default 200)",
    )
    p_fit.add_argument(
        "--allow-partial", action="store_true",
        help="exit 0 even if the solver did not converge",
    )

    p_sim = sub.add_parser("simulate", help="run the replication study")
    p_sim.add_argument("--output", required=True, help="results CSV path")
    p_sim.add_argument("--raw-output", help="optional per-replication CSV path")
    p_sim.add_argument("--mean", default="mu1", choices=["mu1", "mu2"])
    p_sim.add_argument("--score-df", default="5", help="integer df, 'gaussian' or 'zero'")
    p_sim.add_argument("--noise-df", default="5", help="integer df or 'zero'")
    p_sim.add_argument("--noise-scale", type=float, default=0.5)
    p_sim.add_argument("--n", type=int, default=100, help="number of subjects")
    p_sim.add_argument("--m-min", type=int, default=25)
    p_sim.add_argument("--m-max", type=int, default=40)
    p_sim.add_argument("--grid", type=int, default=50, help="observation grid size")
    p_sim.add_argument("--reps", type=int, default=500)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument(
        "--estimators", default="penls,penlad,smlad",
        help=f"comma list from {sorted(ESTIMATORS)}",
    )
    p_sim.add_argument(
        "--lambda", dest="lam", default="auto",
        help="penalty grid passed to selection (default auto)",
    )
    p_sim.add_argument("--threads", type=int, default=1, help="worker threads")
    p_sim.add_argument(
        "--timing", action="store_true",
        help="include wall-clock timing in the CSVs (makes output run-dependent)",
    )

    p_rate = sub.add_parser("rate", help="MSE versus n under a dense design")
    p_rate.add_argument("--output", required=True, help="CSV path for (n, mean_mse)")
    p_rate.add_argument("--n-list", default="50,100,200,400")
    p_rate.add_argument("--dense-m", type=int, default=50)
    p_rate.add_argument("--loss", default="ls")
    p_rate.add_argument("--reps", type=int, default=100)
    p_rate.add_argument("--seed", type=int, default=0)
    p_rate.add_argument("--score-df", default="5")
    p_rate.add_argument("--noise-df", default="5")
    p_rate.add_argument("--mean", default="mu1", choices=["mu1", "mu2"])

    p_diag = sub.add_parser("diagnose", help="JSON report of kernel-space invariants")
    add_spline_flags(p_diag)
    p_diag.set_defaults(knots=10)
    p_diag.add_argument("--seed", type=int, default=0)
    p_diag.add_argument("--output", help="write the JSON report here (default stdout)")

    p_chk = sub.add_parser(
        "check-existence",
        help="check the sampling-point interlacing condition for a design",
    )
    p_chk.add_argument("--input", required=True, help="input CSV with header id,t,y")
    add_spline_flags(p_chk)

    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    try:
        data = LongData.from_csv(args.input)
        kv = make_knots(args.order, args.knots)
        cfg = PenaltyConfig(kv, args.penalty_order)
        loss = parse_loss(args.loss)
        lam_spec = _parse_lambda(args.lam)
    except (DataFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    solver = SolverConfig(loss=loss, max_iterations=args.max_iterations)
    try:
        if isinstance(lam_spec, float):
            fit = fit_penalized(kv, cfg, data, lam_spec, solver)
            gcv = None
        else:
            res = select_lambda(kv, cfg, data, lam_spec, solver)
            fit, gcv = res.best_fit, res
    except SingularSystem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR

    eval_grid = np.linspace(0.0, 1.0, args.eval_grid)
    artifact = {
        "order": kv.order,
        "penalty_order": cfg.deriv,
        "knots": kv.knots.tolist(),
        "loss": args.loss,
        "lambda": fit.lam,
        "edf": fit.edf,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "objective": fit.objective,
        "coefficients": fit.spline.coefficients.tolist(),
        "eval_grid": eval_grid.tolist(),
        "fitted": fit.spline(eval_grid).tolist(),
    }
    if gcv is not None:
        artifact["gcv"] = {
            "lambda_grid": gcv.lambda_grid.tolist(),
            "scores": gcv.scores.tolist(),
        }
    _emit(json.dumps(artifact, indent=2) + "\n", args.output)
    if not fit.converged:
        print(
            f"warning: IRLS stopped after {fit.iterations} iterations without "
            "converging",
            file=sys.stderr,
        )
        if not args.allow_partial:
            return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _results_csv(result, with_timing: bool) -> str:
    lines = ["estimator,mean_mse,se_mse,mean_time_s,reps,failures"]
    for name, s in result.summaries.items():
        t = _fmt(s.mean_time_s) if with_timing else ""
        lines.append(
            f"{name},{_fmt(s.mean_mse)},{_fmt(s.se_mse)},{t},{s.reps},{s.failures}"
        )
    return "\n".join(lines) + "\n"


def _raw_csv(result, with_timing: bool) -> str:
    lines = ["estimator,rep,mse,time_s"]
    for name, s in result.summaries.items():
        for rep in range(s.reps):
            t = _fmt(s.times[rep]) if with_timing else ""
            lines.append(f"{name},{rep},{_fmt(s.mses[rep])},{t}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    try:
        cfg = SimConfig(
            mean=args.mean,
            score_df=_parse_df(args.score_df),
            noise_df=_parse_df(args.noise_df),
            noise_scale=args.noise_scale,
            n=args.n,
            m_range=(args.m_min, args.m_max),
            grid_size=args.grid,
            reps=args.reps,
            seed=args.seed,
            estimators=tuple(e.strip() for e in args.estimators.split(",") if e.strip()),
        )
        lam_spec = _parse_lambda(args.lam)
        if isinstance(lam_spec, float):
            lam_spec = np.asarray([lam_spec])
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    result = run_study(cfg, lambda_grid=lam_spec, threads=args.threads)
    _emit(_results_csv(result, args.timing), args.output)
    if args.raw_output:
        _emit(_raw_csv(result, args.timing), args.raw_output)

    print(f"{'estimator':<12}{'mean_mse(x1000)':>18}{'se_mse(x1000)':>16}")
    for name, s in result.summaries.items():
        print(f"{name:<12}{1000.0 * s.mean_mse:>18.2f}{1000.0 * s.se_mse:>16.2f}")
    return EXIT_OK


def cmd_rate(args) -> int:
    try:
        n_list = [int(v) for v in args.n_list.split(",") if v.strip()]
        loss = parse_loss(args.loss)
        points = rate_experiment(
            n_list,
            args.dense_m,
            loss,
            args.seed,
            reps=args.reps,
            mean=args.mean,
            score_df=_parse_df(args.score_df),
            noise_df=_parse_df(args.noise_df),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    lines = ["n,mean_mse"] + [f"{n},{_fmt(m)}" for n, m in points]
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    try:
        kv = make_knots(args.order, args.knots)
        cfg = PenaltyConfig(kv, args.penalty_order)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = diagnostics_report(kv, cfg, seed=args.seed)
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return EXIT_OK if report["all_passed"] else EXIT_NEGATIVE


def cmd_check_existence(args) -> int:
    try:
        data = LongData.from_csv(args.input)
        kv = make_knots(args.order, args.knots)
    except (DataFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    chk = check_existence(kv, data)
    if chk.ok:
        payload = {"satisfiable": True, "witness": chk.witness.tolist()}
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
        return EXIT_OK
    payload = {"satisfiable": False, "failed_index": chk.failed_index}
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    print(
        f"no sampling point inside the support of basis function {chk.failed_index}",
        file=sys.stderr,
    )
    return EXIT_NEGATIVE


def main(argv=None) -> int:
    level = os.environ.get("PENSPLINEM_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    dispatch = {
        "fit": cmd_fit,
        "simulate": cmd_simulate,
        "rate": cmd_rate,
        "diagnose": cmd_diagnose,
        "check-existence": cmd_check_existence,
    }
    return dispatch[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
