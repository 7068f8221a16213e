"""Configure, run and record one distributed OPF experiment."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..admm import AdmmConfig, RunResult, admm_run, detect_stall
from ..aladin import AladinConfig, aladin_run
from ..centralized import centralized_solve
from ..errors import ConvergenceError, DopfError
from ..opf import build_partitioned_opf, load_case, load_partition
from ..opf.init import feasible_init
from ..problem import IterateState, PartitionedProblem, estimate_duals, kkt_residual
from ..trace import ConvergenceTrace

__all__ = [
    "EXIT_OK",
    "EXIT_NOT_CONVERGED",
    "EXIT_SOLVER_FAILURE",
    "EXIT_BAD_INPUT",
    "ExperimentConfig",
    "ExperimentResult",
    "fingerprint",
    "format_report",
    "parse_report",
    "reference_solution",
    "run_experiment",
]

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_SOLVER_FAILURE = 3
EXIT_BAD_INPUT = 4

ENGINES = ("admm", "aladin")
SIGMAS = ("identity", "paper-footnote")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines one run.

    ``init`` is ``"flat"``, ``"feasible"`` or ``"file:<path>"`` where the
    file holds the stacked ``z0`` (``.npy`` or whitespace separated text).
    A positive ``perturbation`` adds ``perturbation * N(0, 1)`` noise drawn
    from ``seed`` to ``z0`` before clipping it into the bounds.
    ``timings=False`` writes zeros to the wall-clock columns so that
    repeated runs produce identical CSV bytes.
    """

    case_path: Path
    partition_path: Path
    engine: str
    init: str
    rho: float
    mu: float = 1e7
    sigma: str = "paper-footnote"
    max_iter: int = 300
    termination_eps: float = 1e-6
    output_dir: Optional[Path] = None
    seed: int = 0
    perturbation: float = 0.0
    min_iter: int = 0
    stall_window: int = 10
    stall_tol: float = 1e-6
    consensus_sign: float = -1.0
    timings: bool = True

    def validate(self):
        for p in (self.case_path, self.partition_path):
            if not Path(p).is_file():
                raise FileNotFoundError(f"no such file: {p}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.sigma not in SIGMAS:
            raise ValueError(f"sigma must be one of {SIGMAS}")
        if self.init not in ("flat", "feasible") and not self.init.startswith("file:"):
            raise ValueError("init must be flat, feasible or file:<path>")
        if self.init.startswith("file:") and not Path(self.init[5:]).is_file():
            raise FileNotFoundError(f"no such file: {self.init[5:]}")
        for name in ("rho", "mu", "termination_eps", "stall_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 0 or self.min_iter < 0 or self.perturbation < 0:
            raise ValueError("max_iter, min_iter and perturbation must be nonnegative")


@dataclass
class ExperimentResult:
    trace: ConvergenceTrace
    status: str
    exit_code: int
    report: dict = field(default_factory=dict)
    run: Optional[RunResult] = None


def fingerprint(case_path, partition_path) -> str:
    """Hash of the case and partition file contents."""
    h = hashlib.sha256()
    for p in (case_path, partition_path):
        data = Path(p).read_bytes()
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return h.hexdigest()[:16]


def _cache_dir() -> Path:
    env = os.environ.get("DOPF_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "dopf"


def reference_solution(problem: PartitionedProblem, layout, key: str):
    """Centralized ``(x*, f*)``, cached under ``DOPF_CACHE_DIR`` by ``key``."""
    path = _cache_dir() / f"xstar-{key}.npz"
    if path.is_file():
        with np.load(path) as data:
            x = data["x"]
            if x.shape == (problem.n_x,):
                return x, float(data["f"])
    ref = centralized_solve(problem, layout.flat_start())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, x=ref.x, f=ref.f)
        os.replace(tmp, path)
    except OSError:
        pass
    return ref.x, ref.f


def _initial_point(config, problem, case, spec, layout):
    if config.init == "flat":
        zs = layout.flat_start()
    elif config.init == "feasible":
        zs = list(feasible_init(problem, case, spec, layout).z)
    else:
        p = Path(config.init[5:])
        z = np.load(p) if p.suffix == ".npy" else np.loadtxt(p)
        z = np.asarray(z, dtype=float).ravel()
        if z.shape != (problem.n_x,):
            raise ValueError(f"initial point file has {z.size} entries, expected {problem.n_x}")
        zs = problem.scatter(z)
    if config.perturbation > 0:
        rng = np.random.default_rng(config.seed)
        zs = [np.clip(z + config.perturbation * rng.standard_normal(z.size), r.lower, r.upper)
              for z, r in zip(zs, problem.regions)]
    return zs


def _strip_timings(trace):
    out = ConvergenceTrace()
    for r in trace:
        out.append(replace(r, local_ms=0.0, coord_ms=0.0))
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Build the problem, solve for ``x*``, run the engine and write outputs.

    Writes ``trace.csv`` and ``report.txt`` to ``config.output_dir`` when it
    is set.  Exit codes: ``EXIT_OK`` when the engine's termination test
    passed, ``EXIT_NOT_CONVERGED`` at ``max_iter``, ``EXIT_SOLVER_FAILURE``
    for a failed local, coordination or reference solve and
    ``EXIT_BAD_INPUT`` for invalid configuration or input files.
    """
    report = {"engine": config.engine, "init": config.init, "rho": config.rho,
              "sigma": config.sigma}
    if config.engine == "aladin":
        report["mu"] = config.mu
    try:
        config.validate()
        case = load_case(config.case_path)
        spec = load_partition(config.partition_path)
        problem, layout = build_partitioned_opf(case, spec)
        report["fingerprint"] = fingerprint(config.case_path, config.partition_path)
    except (OSError, ValueError, DopfError) as exc:
        report.update(status="bad-input", exit_code=EXIT_BAD_INPUT, error=str(exc))
        return _finish(config, ExperimentResult(ConvergenceTrace(), "bad-input", EXIT_BAD_INPUT,
                                                report))
    if config.sigma == "identity":
        problem = PartitionedProblem(tuple(r.replace(scaling_diag=np.ones(r.n_xi))
                                           for r in problem.regions))
    try:
        x_star, f_star = reference_solution(problem, layout, report["fingerprint"])
        zs = _initial_point(config, problem, case, spec, layout)
    except ConvergenceError as exc:
        report.update(status="solver-failure", exit_code=EXIT_SOLVER_FAILURE, error=str(exc))
        return _finish(config, ExperimentResult(ConvergenceTrace(), "solver-failure",
                                                EXIT_SOLVER_FAILURE, report))
    except (OSError, ValueError) as exc:
        report.update(status="bad-input", exit_code=EXIT_BAD_INPUT, error=str(exc))
        return _finish(config, ExperimentResult(ConvergenceTrace(), "bad-input", EXIT_BAD_INPUT,
                                                report))
    report["f_star"] = f_star
    stall = None
    if config.engine == "admm":
        cfg = AdmmConfig(rho=config.rho, max_iter=config.max_iter,
                         termination_eps=config.termination_eps,
                         stall_window=config.stall_window, stall_tol=config.stall_tol,
                         # the stall detector needs a full window of steps
                         min_iter=max(config.min_iter, config.stall_window + 1),
                         consensus_sign=config.consensus_sign)
        run = admm_run(problem, IterateState.for_admm(problem, zs), cfg, reference=x_star,
                       keep_history=False)
        stall = detect_stall(run, cfg)
    else:
        cfg = AladinConfig(rho=config.rho, mu=config.mu, max_iter=config.max_iter,
                           termination_eps=config.termination_eps, min_iter=config.min_iter)
        run = aladin_run(problem, IterateState.for_aladin(problem, zs), cfg, reference=x_star,
                         keep_history=False)
    trace = run.trace if config.timings else _strip_timings(run.trace)
    code = {"converged": EXIT_OK, "max_iter": EXIT_NOT_CONVERGED}.get(run.status,
                                                                     EXIT_SOLVER_FAILURE)
    report.update(status=run.status, exit_code=code, iterations=run.iterations)
    if run.error:
        report["error"] = run.error
    if len(trace):
        last = trace[-1]
        report.update(final_consensus_gap=last.consensus_gap, final_objective=last.objective,
                      objective_gap=last.objective - f_star, final_dist_to_ref=last.dist_to_ref,
                      final_violation=last.violation, final_primal_gap=last.primal_gap)
    if run.state.x is not None:
        xs = list(run.state.x)
        stat = kkt_residual(problem, xs, estimate_duals(problem, xs)).stationarity
        report["final_stationarity"] = stat
        if run.status == "converged" and len(trace) and trace[-1].dist_to_ref > 1e-4:
            report["note"] = ("terminated away from the centralized minimizer; "
                              f"stationarity residual {stat:.3e}")
    if stall is not None:
        report.update(stalled=stall.stalled, stall_since=stall.since_iter,
                      stall_objective_drift=stall.objective_drift, stall_max_step=stall.max_step,
                      stall_stationarity=stall.stationarity)
    return _finish(config, ExperimentResult(trace, run.status, code, report, run))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_report(report: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in report.items())


def parse_report(text: str) -> dict:
    """Inverse of the report writer; values stay strings."""
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


def _finish(config, result: ExperimentResult) -> ExperimentResult:
    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.trace.write_csv(out / "trace.csv")
        (out / "report.txt").write_text(format_report(result.report))
    return result
