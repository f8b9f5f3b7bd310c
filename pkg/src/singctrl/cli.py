"""Command-line front end.

::

    singctrl solve|sweep|convergence|compare --problem fishery|plant|sir
        [--case 2a|2b|2c] [--n N] [--tol TOL] [--rho R[,R]] [--backend polyhedral|prox-tv]
        [--config FILE] [--out DIR]

Exit status is 0 on success, 1 when a solve fails and 2 for configuration
errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    convergence_table,
    exact_control,
    run_experiment,
    rho_sweep,
    singular_region,
    switch_tolerance,
)
from .config import RunConfig, load_config
from .errors import ConfigError, SingCtrlError
from .ocp import Mesh
from .problems import fishery_exact, plant_classify, plant_exact, switching_values

__all__ = ["main", "build_parser", "fmt"]

DEFAULT_STEPS = (0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125)

log = logging.getLogger("singctrl")


class SolveFailed(SingCtrlError):
    """A solve ended without meeting its tolerance."""


def fmt(v) -> str:
    """17 significant digits; empty for missing values."""
    if v is None:
        return ""
    return f"{float(v):.17g}"


def _floats(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", choices=("fishery", "plant", "sir"))
    common.add_argument("--case", choices=("2a", "2b", "2c"), help="plant parameter set")
    common.add_argument("--n", type=int, help="number of mesh intervals")
    common.add_argument("--tol", type=float, help="stationarity tolerance")
    common.add_argument("--rho", type=_floats, help="penalty, one value or one per control")
    common.add_argument("--u0", type=_floats, help="constant initial control per channel")
    common.add_argument("--backend", choices=("polyhedral", "prox-tv"))
    common.add_argument("--max-iters", type=int, dest="max_iters")
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = argparse.ArgumentParser(prog="singctrl", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="one penalized solve")
    sw = sub.add_parser("sweep", parents=[common], help="one solve per penalty value")
    sw.add_argument("--rhos", type=_floats, required=True, help="comma-separated penalty values")
    cv = sub.add_parser("convergence", parents=[common], help="mesh refinement study")
    cv.add_argument("--h", type=_floats, dest="steps", help="comma-separated step sizes")
    sub.add_parser("compare", parents=[common], help="solve and overlay the analytic optimum")
    return p


def _config(args) -> RunConfig:
    return load_config(
        args.config, problem=args.problem, case=args.case, n=args.n, tol=args.tol,
        rho=tuple(args.rho) if args.rho else None, u0=tuple(args.u0) if args.u0 else None,
        backend=args.backend, max_iters=args.max_iters, out=args.out,
    )


def _setup_log(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "solver.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.propagate = False


def _log_solve(label, rep):
    log.info("%s: reason=%s objective=%s stationarity=%s gp_iters=%d face_iters=%d evals=%d",
             label, rep.reason, fmt(rep.objective), fmt(rep.stationarity),
             rep.iterations["gradient_projection"], rep.iterations["face"], rep.evaluations)
    for it, J, E, phase in rep.history:
        log.info("  iter %d %s J=%s E=%s", it, phase, fmt(J), fmt(E))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_json(path, obj):
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trajectory(path, problem, mesh, traj):
    """Columns ``t, u_*, x_*, lambda_*, phi_*``; the last row carries only ``t`` and ``x``."""
    phi = switching_values(problem, traj.x, traj.lam)
    m, n, N = problem.m, problem.n, mesh.N
    header = (["t"] + [f"u_{j + 1}" for j in range(m)] + [f"x_{i + 1}" for i in range(n)]
              + [f"lambda_{i + 1}" for i in range(n)] + [f"phi_{j + 1}" for j in range(m)])
    rows = []
    t = mesh.nodes
    for k in range(N + 1):
        if k < N:
            rows.append([t[k], *traj.u[:, k], *traj.x[:, k], *traj.lam[:, k], *phi[:, k]])
        else:
            rows.append([t[k], *([""] * m), *traj.x[:, k], *([""] * (n + m))])
    write_csv(path, header, rows)
    return phi


def _report_dict(cfg, report):
    d = report.to_dict()
    d["problem"] = cfg.problem
    d["case"] = cfg.case
    d["backend"] = cfg.backend
    d["tol"] = cfg.tol
    return d


def _solve_into(cfg, problem, mesh, weights, out: Path, plots: bool, label="solve"):
    report, traj, rep = run_experiment(problem, mesh, weights, cfg.solver_config(), cfg.backend, cfg.u0)
    _log_solve(label, rep)
    out.mkdir(parents=True, exist_ok=True)
    phi = write_trajectory(out / "trajectory.csv", problem, mesh, traj)
    write_json(out / "report.json", _report_dict(cfg, report))
    if plots:
        from .plotting import plot_trajectory

        plot_trajectory(out / "trajectory.png", mesh.nodes, traj.u, traj.x, phi,
                        problem.control_names, problem.state_names)
    return report, traj, rep


def cmd_solve(cfg: RunConfig, out: Path, plots=True) -> int:
    problem = cfg.build_problem()
    mesh = cfg.mesh(problem)
    log.info("config %s", json.dumps(cfg.to_dict(), sort_keys=True))
    report, _, rep = _solve_into(cfg, problem, mesh, cfg.weights(), out, plots)
    if not rep.converged:
        raise SolveFailed(f"solver stopped with {rep.reason} at stationarity {rep.stationarity:.3e}")
    return 0


def cmd_sweep(cfg: RunConfig, rhos, out: Path, plots=True) -> int:
    if not rhos:
        raise ConfigError("rhos", "empty penalty list")
    for r in rhos:
        if not 0.0 <= r < 1.0:
            raise ConfigError("rhos", f"each penalty must lie in [0, 1), got {r}")
    problem = cfg.build_problem()
    mesh = cfg.mesh(problem)
    log.info("config %s", json.dumps(cfg.to_dict(), sort_keys=True))
    chans = [j for j, r in enumerate(cfg.rho) if r > 0] or [0]
    results = rho_sweep(problem, mesh, rhos, cfg.solver_config(), cfg.backend, cfg.u0, channels=chans)
    header = ["rho", "l1_error", "linf_error", "switch", "singular_start", "singular_end",
              "objective", "objective_penalized", "total_variation", "oscillation_flag",
              "runtime", "reason"]
    rows, failed, controls = [], 0, []
    for r, (report, traj) in zip(rhos, results):
        sub = out / f"rho_{fmt(r)}"
        sub.mkdir(parents=True, exist_ok=True)
        write_json(sub / "report.json", _report_dict(cfg, report))
        if traj is not None:
            write_trajectory(sub / "trajectory.csv", problem, mesh, traj)
            log.info("rho %s: reason=%s", fmt(r), report.solver.get("reason"))
        else:
            log.error("rho %s failed: %s", fmt(r), report.error)
        ok = traj is not None and report.solver.get("reason") == "converged"
        failed += not ok
        region = report.singular_region[0] or (None, None)
        rows.append([r, report.l1_error, report.linf_error, report.first_upper[0], region[0], region[1],
                     report.objective_unpenalized, report.objective_penalized,
                     report.total_variation[0], str(report.oscillation_flag[0]).lower(),
                     report.solver.get("wall_time"), report.solver.get("reason", "error")])
        controls.append(None if traj is None else traj.u[0])
    write_csv(out / "sweep.csv", header, rows)
    if plots:
        from .plotting import plot_sweep

        plot_sweep(out / "sweep.png", mesh.nodes, controls, rhos)
    if failed:
        raise SolveFailed(f"{failed} of {len(rhos)} sweep solves failed")
    return 0


def cmd_convergence(cfg: RunConfig, steps, out: Path, plots=True) -> int:
    problem = cfg.build_problem()
    exact = exact_control(problem)
    if exact is None:
        raise ConfigError("problem", f"{cfg.problem} has no analytic oracle")
    steps = list(steps or DEFAULT_STEPS)
    meshes = []
    for h in steps:
        try:
            meshes.append(Mesh.from_step(problem.T, h))
        except SingCtrlError as exc:
            raise ConfigError("h", str(exc)) from None
    log.info("config %s", json.dumps(cfg.to_dict(), sort_keys=True))
    errs, failed = [], []
    for h, mesh in zip(steps, meshes):
        report, _, rep = run_experiment(problem, mesh, cfg.weights(), cfg.solver_config(), cfg.backend, cfg.u0)
        _log_solve(f"h={fmt(h)}", rep)
        errs.append(report.l1_error)
        if not rep.converged:
            failed.append(h)
    table = convergence_table(steps, errs)
    write_csv(out / "convergence.csv", ["h", "err_h", "ratio", "log2ratio", "outlier"],
              [[h, e, None if math.isnan(r) else r, None if math.isnan(lr) else lr, str(o).lower()]
               for (h, e, r, lr), o in zip(table.rows(), table.outliers)])
    if table.fit is not None:
        def fd(f):
            return None if f is None else {"slope": f.slope, "intercept": f.intercept, "r2": f.r2}

        write_json(out / "fit.json", {
            "with_outliers": fd(table.fit),
            "without_outliers": fd(table.fit_without_outliers),
            "outlier_h": [float(h) for h in table.h[table.outliers]],
        })
        if plots:
            from .plotting import plot_convergence

            plot_convergence(out / "convergence.png", table)
    if failed:
        raise SolveFailed(f"solves at h = {failed} did not converge")
    return 0


def _exact_switches(problem):
    if problem.name == "fishery":
        ex = fishery_exact(problem.params)
        return {"t_switch": ex.t_switch}, [ex.x]
    ex = plant_exact(problem.params)
    return {"t1": ex.t1, "t2": ex.t2}, [ex.x1, ex.x2]


def cmd_compare(cfg: RunConfig, out: Path, plots=True) -> int:
    problem = cfg.build_problem()
    exact = exact_control(problem)
    if exact is None:
        tag = plant_classify(problem.params) if problem.name == "plant" else problem.name
        raise ConfigError("problem", f"no analytic oracle for {tag}")
    mesh = cfg.mesh(problem)
    log.info("config %s", json.dumps(cfg.to_dict(), sort_keys=True))
    report, traj, rep = _solve_into(cfg, problem, mesh, cfg.weights(), out, plots=False, label="compare")
    t = mesh.left_nodes
    ue = np.asarray(exact(t), dtype=float)
    switches, x_exact = _exact_switches(problem)
    xe = [np.asarray(f(t), dtype=float) for f in x_exact]
    header = ["t", "u_num", "u_exact", "diff"]
    for i in range(problem.n):
        header += [f"x_{i + 1}_num", f"x_{i + 1}_exact"]
    rows = []
    for k in range(mesh.N):
        row = [t[k], traj.u[0, k], ue[k], traj.u[0, k] - ue[k]]
        for i in range(problem.n):
            row += [traj.x[i, k], xe[i][k]]
        rows.append(row)
    write_csv(out / "compare.csv", header, rows)
    lo, hi = problem.lower[0], problem.upper[0]
    region = singular_region(traj.u[0], mesh, (lo, hi), switch_tolerance(lo, hi))
    write_json(out / "errors.json", {
        "l1_error": report.l1_error,
        "linf_error": report.linf_error,
        "exact": switches,
        "detected": {"singular_start": region[0] if region else None,
                     "singular_end": region[1] if region else None,
                     "first_upper": report.first_upper[0]},
        "oscillation_flag": report.oscillation_flag[0],
        "objective": report.objective_unpenalized,
    })
    if plots:
        from .plotting import plot_compare

        plot_compare(out / "compare.png", mesh.nodes, traj.u[0], ue)
    if not rep.converged:
        raise SolveFailed(f"solver stopped with {rep.reason} at stationarity {rep.stationarity:.3e}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        out = Path(cfg.out)
        _setup_log(out)
        plots = not args.no_plots
        if args.command == "solve":
            return cmd_solve(cfg, out, plots)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.rhos, out, plots)
        if args.command == "convergence":
            return cmd_convergence(cfg, args.steps, out, plots)
        return cmd_compare(cfg, out, plots)
    except ConfigError as exc:
        print(f"singctrl: configuration error: {exc}", file=sys.stderr)
        return 2
    except SingCtrlError as exc:
        log.error("%s", exc)
        print(f"singctrl: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
