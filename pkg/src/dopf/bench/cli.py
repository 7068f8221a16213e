"""``dopf`` command line: run experiments, plot traces, compare runs."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..trace import ConvergenceTrace
from .compare import FingerprintMismatch, compare_report
from .experiment import EXIT_BAD_INPUT, ExperimentConfig, parse_report, run_experiment
from .plot import plot_traces

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dopf", description="Distributed AC OPF experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one ADMM or ALADIN experiment")
    r.add_argument("--case", required=True, type=Path, help="MATPOWER case file")
    r.add_argument("--partition", required=True, type=Path, help="bus-to-region file")
    r.add_argument("--engine", required=True, choices=("admm", "aladin"))
    r.add_argument("--init", default="flat", help="flat, feasible or file:<path>")
    r.add_argument("--rho", required=True, type=float)
    r.add_argument("--mu", type=float, default=1e7, help="ALADIN slack penalty")
    r.add_argument("--sigma", choices=("identity", "paper-footnote"), default="paper-footnote",
                   help="ALADIN proximal scaling")
    r.add_argument("--max-iter", type=int, default=300)
    r.add_argument("--min-iter", type=int, default=0)
    r.add_argument("--eps", type=float, default=1e-6, help="termination tolerance")
    r.add_argument("--stall-window", type=int, default=10)
    r.add_argument("--stall-tol", type=float, default=1e-6)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--perturb", type=float, default=0.0,
                   help="std. deviation of Gaussian noise added to z0")
    r.add_argument("--no-timings", action="store_true",
                   help="write zeros to the timing columns for byte-identical traces")
    r.add_argument("--out", required=True, type=Path)

    pl = sub.add_parser("plot", help="render traces as a four-panel SVG")
    pl.add_argument("traces", nargs="+", type=Path)
    pl.add_argument("--labels", nargs="+", help="defaults to the parent directory names")
    pl.add_argument("--out", required=True, type=Path)

    c = sub.add_parser("compare", help="iterations-to-threshold table")
    c.add_argument("traces", nargs="+", type=Path)
    c.add_argument("--labels", nargs="+")
    c.add_argument("--f-star", type=float, help="defaults to the value in report.txt")
    c.add_argument("--out", required=True, type=Path)
    return p


def _labels(args):
    if args.labels is None:
        return [t.parent.name or t.stem for t in args.traces]
    if len(args.labels) != len(args.traces):
        raise ValueError("one label per trace is required")
    return args.labels


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        case_path=args.case, partition_path=args.partition, engine=args.engine, init=args.init,
        rho=args.rho, mu=args.mu, sigma=args.sigma, max_iter=args.max_iter,
        termination_eps=args.eps, output_dir=args.out, seed=args.seed,
        perturbation=args.perturb, min_iter=args.min_iter, stall_window=args.stall_window,
        stall_tol=args.stall_tol, timings=not args.no_timings)
    res = run_experiment(cfg)
    rep = res.report
    msg = f"{rep.get('status')}: {len(res.trace)} iterations"
    if len(res.trace):
        last = res.trace[-1]
        msg += (f", consensus gap {last.consensus_gap:.3e}, objective {last.objective:.6f}, "
                f"violation {last.violation:.3e}")
    if "stalled" in rep:
        msg += f", stalled={str(rep['stalled']).lower()}"
    print(msg)
    if "error" in rep:
        print(f"error: {rep['error']}", file=sys.stderr)
    return res.exit_code


def _cmd_plot(args) -> int:
    traces = [ConvergenceTrace.read_csv(t) for t in args.traces]
    plot_traces(traces, _labels(args), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_compare(args) -> int:
    traces = [ConvergenceTrace.read_csv(t) for t in args.traces]
    reports = []
    for t in args.traces:
        rp = t.parent / "report.txt"
        reports.append(parse_report(rp.read_text()) if rp.is_file() else {})
    fps = [r["fingerprint"] for r in reports if "fingerprint" in r]
    f_star = args.f_star
    if f_star is None:
        stars = {r["f_star"] for r in reports if "f_star" in r}
        if not stars:
            raise ValueError("no f* given and no report.txt next to the traces")
        f_star = float(sorted(stars)[0])
    stalled = [None if "stalled" not in r else r["stalled"] == "true" for r in reports]
    table = compare_report(traces, _labels(args), f_star, fingerprints=fps, stalled=stalled)
    table.write(args.out)
    sys.stdout.write(table.to_text())
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as "not converged"
        return 0 if exc.code in (0, None) else EXIT_BAD_INPUT
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "plot":
            return _cmd_plot(args)
        return _cmd_compare(args)
    except (OSError, ValueError, FingerprintMismatch) as exc:
        print(f"dopf: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
