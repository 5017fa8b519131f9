"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 non-convergence,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import instances, problem_io
from .admm import AdmmConfig, admm_classical, admm_equilibrate, reference_zeta
from .battery import run_battery
from .core import DiagonalMetric, ProblemSpec, metric_from_vector, validate_problem
from .metric_select import (
    ReferenceSolveError,
    estimate_reference,
    one_shot_solve,
    optimal_metric,
)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3
DEFAULT_GAMMA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
SOLVER_EPS_FLOOR = 1e-12
COMMANDS = ("solve", "oneshot", "compare", "verify", "bench", "generate")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    out: str = "."
    seed: int = 0
    tol: float = 1e-8
    kmax: int = 10000
    gamma: Optional[list] = None
    metric: Optional[str] = None
    eps_floor: Optional[float] = None
    family: str = "lasso_dense"
    n: int = 20
    p: Optional[int] = None
    count: int = 20
    require_dominance: bool = False
    extra: dict = field(default_factory=dict)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _vec(v):
    return [float(t) for t in np.asarray(v)]


def _load_specs(cfg: RunConfig):
    """``[(instance_id, spec)]`` from --input (file or directory) or a generated family."""
    if cfg.input:
        path = Path(cfg.input)
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        if not files:
            raise CliError(f"no problem files in {path}", EXIT_INVALID)
        out = []
        for fp in files:
            try:
                spec = problem_io.load(fp)
            except problem_io.ProblemFormatError as exc:
                raise CliError(f"{fp}: {exc}", EXIT_INVALID) from None
            except OSError as exc:
                raise CliError(f"{fp}: {exc.strerror}", EXIT_INVALID) from None
            report = validate_problem(spec)
            if not report.valid:
                raise CliError(f"{fp}: invalid problem: {report}", EXIT_INVALID)
            out.append((fp.stem, spec))
        return out
    try:
        specs = instances.generate(cfg.family, cfg.n, cfg.count, cfg.seed, cfg.p)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    return [(f"{cfg.family}_{i:03d}", s) for i, s in enumerate(specs)]


def _resolve_metric(cfg, spec, ref=None):
    """``(DiagonalMetric, MetricChoice or None, reference or None)`` for --metric."""
    mode = cfg.metric
    if mode == "identity":
        return DiagonalMetric(np.ones(spec.p)), None, ref
    if mode == "optimal":
        ref = ref or estimate_reference(spec)
        eps = SOLVER_EPS_FLOOR if cfg.eps_floor is None else cfg.eps_floor
        choice = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=eps)
        return choice.to_metric(), choice, ref
    if mode and mode.startswith("file:"):
        path = Path(mode[5:])
        try:
            raw = json.loads(path.read_text())
            m = raw["m"] if isinstance(raw, dict) else raw
            metric = metric_from_vector(m)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CliError(f"metric file {path}: {exc}", EXIT_INVALID) from None
        if metric.size != spec.p:
            raise CliError(f"metric file has {metric.size} entries, problem needs {spec.p}", EXIT_INVALID)
        return metric, None, ref
    raise CliError(f"unknown metric mode {mode!r}", EXIT_INVALID)


def _solve_one(cfg, spec, ref=None):
    """Run the configured solver; returns (tag, param, solution, trace, zeta_star)."""
    acfg = AdmmConfig(k_max=cfg.kmax, tol=cfg.tol)
    if cfg.metric is None:
        gamma = cfg.gamma[0] if cfg.gamma else 1.0
        sol, tr = admm_classical(spec, gamma, cfg=acfg)
        zstar = None
        if ref is not None:
            zstar = spec.B @ ref.z_star + spec.c + ref.lambda_star / gamma
        return "classical_scalar", repr(float(gamma)), sol, tr, zstar, None
    metric, choice, ref = _resolve_metric(cfg, spec, ref)
    sol, tr = admm_equilibrate(spec, metric, cfg=acfg)
    zstar = None if ref is None else reference_zeta(spec, metric, ref.x_star, ref.lambda_star, ref.z_star)
    return "equilibrate_operator", cfg.metric, sol, tr, zstar, choice


def _solution_record(iid, tag, param, sol):
    return {
        "instance": iid,
        "parametrization": tag,
        "parameter": param,
        "x": _vec(sol.x_star),
        "lambda": _vec(sol.lambda_star),
        "z": None if sol.z_star is None else _vec(sol.z_star),
        "objective": float(sol.objective),
        "residual": float(sol.residual),
        "tol": float(sol.tol),
        "iterations": int(sol.iterations),
        "converged": sol.converged,
    }


def cmd_solve(cfg: RunConfig, out: Path):
    specs = _load_specs(cfg)
    code = EXIT_OK
    rows = []
    for iid, spec in specs:
        try:
            ref = estimate_reference(spec)
        except ReferenceSolveError:
            ref = None
        tag, param, sol, tr, zstar, choice = _solve_one(cfg, spec, ref)
        if zstar is not None:
            tr.set_reference(zstar)
        rec = _solution_record(iid, tag, param, sol)
        if choice is not None:
            rec["metric"] = {"m": _vec(choice.m), "provenance": list(choice.provenance)}
        _write_json(out / f"{iid}.solution.json", rec)
        (out / f"{iid}.trace.csv").write_text(tr.to_csv())
        rows.append((iid, tag, param, sol.iterations, sol.residual, int(sol.converged)))
        if not sol.converged:
            code = EXIT_NONCONVERGED
    _write_csv(out / "report.csv",
               ["instance", "parametrization", "parameter", "iterations", "residual", "converged"], rows)
    return code


def cmd_oneshot(cfg: RunConfig, out: Path):
    specs = _load_specs(cfg)
    code = EXIT_OK
    rows = []
    for iid, spec in specs:
        try:
            ref = estimate_reference(spec, k_max=max(cfg.kmax, 100000))
        except ReferenceSolveError as exc:
            raise CliError(f"{iid}: {exc}", EXIT_NONCONVERGED) from None
        eps = 1e-8 if cfg.eps_floor is None else cfg.eps_floor
        choice = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=eps)
        sol = one_shot_solve(spec, choice)
        dev = float(np.linalg.norm(sol.x_star - ref.x_star))
        _write_json(out / f"{iid}.oneshot.json", {
            "reference": _solution_record(iid, "classical_scalar", "1.0", ref),
            "oneshot": _solution_record(iid, "equilibrate_operator", "optimal", sol),
            "deviation": dev,
            "metric": {"m": _vec(choice.m), "provenance": list(choice.provenance),
                       "selection_objective": float(choice.objective_value)},
        })
        rows.append((iid, "equilibrate_operator", 1, sol.residual, dev, int(sol.converged)))
        if not sol.converged:
            code = EXIT_NONCONVERGED
    _write_csv(out / "oneshot.csv",
               ["instance", "parametrization", "iterations", "residual", "deviation", "converged"], rows)
    return code


def compare_instance(spec, gammas=DEFAULT_GAMMA_GRID, tol=1e-8, kmax=10000, eps_floor=SOLVER_EPS_FLOOR):
    """Iteration counts for a classical grid, the identity metric and the optimal metric."""
    acfg = AdmmConfig(k_max=kmax, tol=tol, record_trace=False)
    rows = []
    for g in gammas:
        sol, _ = admm_classical(spec, g, cfg=acfg)
        rows.append(("classical_scalar", repr(float(g)), sol))
    sol, _ = admm_equilibrate(spec, DiagonalMetric(np.ones(spec.p)), cfg=acfg)
    rows.append(("equilibrate_identity", "1", sol))
    ref = estimate_reference(spec)
    choice = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=eps_floor)
    sol, _ = admm_equilibrate(spec, choice.to_metric(), cfg=acfg)
    rows.append(("equilibrate_optimal", "optimal", sol))
    return rows


def _iters(sol, kmax):
    return sol.iterations if sol.converged else kmax + 1


def cmd_compare(cfg: RunConfig, out: Path):
    specs = _load_specs(cfg)
    gammas = tuple(cfg.gamma) if cfg.gamma else DEFAULT_GAMMA_GRID
    eps = SOLVER_EPS_FLOOR if cfg.eps_floor is None else cfg.eps_floor
    table, summary = [], []
    all_dominant = True
    for iid, spec in specs:
        rows = compare_instance(spec, gammas, cfg.tol, cfg.kmax, eps)
        for tag, param, sol in rows:
            table.append((iid, tag, param, sol.iterations, sol.residual, int(sol.converged)))
        classical = [(g, _iters(s, cfg.kmax)) for t, g, s in rows if t == "classical_scalar"]
        best_g, best_it = min(classical, key=lambda gi: gi[1])
        opt = rows[-1][2]
        opt_it = _iters(opt, cfg.kmax)
        dominant = opt.converged and opt_it <= 2 and best_it > opt_it
        all_dominant &= dominant
        summary.append((iid, best_g, best_it, opt_it, int(dominant)))
    _write_csv(out / "compare.csv",
               ["instance", "parametrization", "parameter", "iterations", "residual", "converged"], table)
    _write_csv(out / "compare_summary.csv",
               ["instance", "best_classical_gamma", "best_classical_iterations",
                "optimal_iterations", "dominant"], summary)
    if cfg.require_dominance and not all_dominant:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path):
    rows = run_battery(cfg.seed)
    _write_csv(out / "verify.csv",
               ["check", "instance", "parametrization", "iterations", "residual",
                "deviation", "tolerance", "passed"],
               [(r.check, r.instance, r.tag, r.iterations, r.residual, r.deviation, r.tolerance,
                 int(r.passed)) for r in rows])
    failed = [r for r in rows if not r.passed]
    for r in failed:
        print(f"FAIL {r.check} {r.instance}: deviation {r.deviation:.3e} > {r.tolerance:.1e}",
              file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bench(cfg: RunConfig, out: Path):
    specs = _load_specs(cfg)
    rows, timing = [], []
    acfg = AdmmConfig(k_max=cfg.kmax, tol=cfg.tol, record_trace=False)
    eps = SOLVER_EPS_FLOOR if cfg.eps_floor is None else cfg.eps_floor
    code = EXIT_OK
    for iid, spec in specs:
        t0 = time.perf_counter()
        ref = estimate_reference(spec)
        t_ref = time.perf_counter() - t0
        choice = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=eps)
        jobs = [
            ("classical_scalar", lambda: admm_classical(spec, 1.0, cfg=acfg)[0]),
            ("equilibrate_identity",
             lambda: admm_equilibrate(spec, DiagonalMetric(np.ones(spec.p)), cfg=acfg)[0]),
        ]
        if spec.is_l1_composite():
            jobs += [
                ("equilibrate_optimal",
                 lambda: admm_equilibrate(spec, choice.to_metric(), cfg=acfg)[0]),
                ("oneshot", lambda: one_shot_solve(spec, choice)),
            ]
        runs = []
        for tag, fn in jobs:
            t0 = time.perf_counter()
            sol = fn()
            runs.append((tag, sol, time.perf_counter() - t0))
        rows.append((iid, "reference", ref.iterations, ref.residual, int(ref.converged)))
        timing.append((iid, "reference", t_ref))
        for tag, sol, dt in runs:
            rows.append((iid, tag, sol.iterations, sol.residual, int(sol.converged)))
            timing.append((iid, tag, dt))
            if not sol.converged:
                code = EXIT_NONCONVERGED
    _write_csv(out / "bench.csv", ["instance", "parametrization", "iterations", "residual", "converged"], rows)
    _write_csv(out / "timing.csv", ["instance", "parametrization", "seconds"], timing)
    return code


def cmd_generate(cfg: RunConfig, out: Path):
    try:
        specs = instances.generate(cfg.family, cfg.n, cfg.count, cfg.seed, cfg.p)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    for i, spec in enumerate(specs):
        problem_io.dump(spec, out / f"{cfg.family}_{i:03d}.json")
    return EXIT_OK


_DISPATCH = {
    "solve": cmd_solve,
    "oneshot": cmd_oneshot,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "generate": cmd_generate,
}


def run(cfg: RunConfig) -> int:
    """Execute one command and return its exit status."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _DISPATCH[cfg.command](cfg, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ReferenceSolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


def _gamma_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad gamma list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("gamma values must be positive")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="equilibrate", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="problem JSON file or a directory of them")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=_gamma_list,
                   help="classical step (solve) or comma-separated grid (compare)")
    p.add_argument("--metric", help="identity | optimal | file:PATH (E-ADMM); omit for classical")
    p.add_argument("--eps-floor", type=float, dest="eps_floor",
                   help="clamp for m_i -> 0 entries of the optimal metric")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--kmax", type=int, default=10000)
    p.add_argument("--family", default="lasso_dense", choices=instances.FAMILIES)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--p", type=int)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--require-dominance", action="store_true",
                   help="compare: exit 3 unless the optimal metric wins on every instance")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.metric is not None and not (
        args.metric in ("identity", "optimal") or args.metric.startswith("file:")
    ):
        print(f"error: unknown --metric {args.metric!r}", file=sys.stderr)
        return EXIT_INVALID
    if not args.tol > 0 or args.kmax < 1:
        print("error: --tol must be positive and --kmax at least 1", file=sys.stderr)
        return EXIT_INVALID
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
