"""Command line entry point: curvmf {solve,verify,sweep,mesh} <config.toml>."""
from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import analysis, export
from .config import build_spec, build_surface, load_config
from .exceptions import (
    ConfigError,
    ConstructionError,
    CurvMFError,
    DomainError,
    InfeasibleSpecError,
    MeshError,
)
from .meanfield import compute_alpha_beta, project_mean_zero
from .minimize import minimize, project_symmetric
from .operators import assemble_operators, background_check

log = logging.getLogger("curvmf")

EXIT_OK, EXIT_INFEASIBLE, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 2, 3, 4


def _residuals(spec, u, v):
    gb = analysis.gauss_bonnet_residual(spec, v) if v is not None else float("nan")
    try:
        pde = analysis.pde_residual(spec, u)
    except (DomainError, ValueError):
        pde = float("nan")
    return {"gb": gb, "pde": pde}


def cmd_solve(cfg) -> int:
    spec = build_spec(cfg)
    scfg = cfg.solver_config()
    u0 = None
    amp = float(cfg.experiment.get("random_start", 0.0))
    if amp > 0:
        rng = np.random.default_rng(cfg.seed)
        u0 = amp * analysis.random_smooth_field(analysis.DistanceBank(spec.mesh), rng)
        if scfg.symmetric:
            u0 = project_symmetric(spec.orbits, u0)
    res = minimize(spec, scfg, u0=u0)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "experiment": cfg.experiment.get("name", cfg.kind),
        "spec_hash": cfg.spec_hash(spec),
        "chi": spec.chi,
        "alpha": res.alpha,
        "beta": res.beta,
        "C": res.C_star,
        "J": res.J_star,
        "C_star": res.C_star,
        "J_star": res.J_star,
        "residuals": _residuals(spec, res.u_star, res.v_star),
        "iterations": res.iterations,
        "termination": res.termination,
        "converged": res.converged,
        "sign_used": res.sign_used,
        "degenerate": res.degenerate,
        "seed": cfg.seed,
    }
    if "json" in cfg.formats:
        export.write_json(out / "report.json", report)
    if "csv" in cfg.formats:
        export.write_solution_csv(out / "solution.csv", spec, res.u_star, res.v_star)
        export.write_trace_csv(out / "trace.csv", res.trace)
    _write_mesh(cfg, spec.mesh, out)
    log.info("solve: %s after %d iterations, C=%.12g", res.termination, res.iterations, res.C_star)
    if not res.converged:
        print(f"not converged: termination={res.termination} after {res.iterations} iterations", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _write_mesh(cfg, mesh, out):
    if "off" not in cfg.formats:
        return
    if mesh.embedding is not None:
        export.write_off(out / "mesh.off", mesh)
    else:
        export.write_edge_lengths_csv(out / "mesh_edges.csv", mesh)
        export.write_faces_csv(out / "mesh_faces.csv", mesh)


def cmd_verify(cfg, solution_path) -> int:
    spec = build_spec(cfg)
    try:
        u, v = export.read_solution_csv(solution_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {solution_path}: {exc}") from None
    if len(u) != spec.vertex_count:
        raise ConfigError(f"solution has {len(u)} vertices, mesh has {spec.vertex_count}")
    if not np.all(np.isfinite(v)):
        v = None
    alpha, beta = compute_alpha_beta(spec, project_mean_zero(spec.ops, u))
    report = {
        "experiment": "verify",
        "spec_hash": cfg.spec_hash(spec),
        "chi": spec.chi,
        "alpha": alpha,
        "beta": beta,
        "residuals": _residuals(spec, project_mean_zero(spec.ops, u), v),
    }
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    export.write_json(out / "verify.json", report)
    print(f"gb={report['residuals']['gb']:.6e} pde={report['residuals']['pde']:.6e}")
    return EXIT_OK


def cmd_sweep(cfg) -> int:
    spec = build_spec(cfg)
    exp = cfg.experiment
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg.kind
    seed = cfg.seed
    summary = {"experiment": kind, "seed": seed, "spec_hash": cfg.spec_hash(spec)}
    if kind == "tm":
        n = int(exp.get("samples", 1000))
        fields = analysis.random_battery(spec, n, seed)
        rep = analysis.deficit_report("tm_random", spec.ops, fields, range(n), 1 / (16 * math.pi), seed)
        rep.to_csv(out / "tm_random.csv")
        summary.update(rep.summary())
    elif kind == "trace":
        n = int(exp.get("samples", 1000))
        eps = float(exp.get("eps", 0.1))
        fields = [project_mean_zero(spec.ops, f) for f in analysis.random_battery(spec, n, seed)]
        rep = analysis.trace_report("trace_random", spec, fields, range(n), eps, seed)
        rep.to_csv(out / "trace_random.csv")
        summary.update(rep.summary())
    elif kind == "sharpness":
        ns = exp.get("n_list", [2**k for k in range(1, 11)])
        seq = analysis.sharpness_sequence(
            spec, float(exp.get("D0", 0.8)), ns,
            construction=exp.get("construction", "first"), delta=exp.get("delta"),
        )
        seq.to_csv(out / "sharpness.csv")
        summary.update({"verdict": "increasing" if seq.strictly_increasing() else "not increasing",
                        "growth_factor": seq.growth_factor(), "samples": len(ns)})
    elif kind == "lambda_sweep":
        lams = exp.get("lambdas", [math.pi * x for x in (2, 4, 6, 8)])
        sweep = analysis.lambda_sweep(spec, lams, cfg.solver_config())
        sweep.to_csv(out / "lambda_sweep.csv")
        summary.update({"verdict": "nonincreasing" if sweep.nonincreasing() else "not monotone",
                        "samples": len(lams)})
    elif kind == "perturb":
        rep = analysis.perturbation_experiment(spec, exp.get("deltas", [0.0, 1e-3, 1e-2]),
                                               cfg.solver_config(), seed=seed)
        summary.update({"base_converged": rep.base_converged, "slope": rep.slope(),
                        "newton_slope": rep.slope("newton"),
                        "rows": [r.__dict__ for r in rep.rows]})
    else:
        raise ConfigError(f"sweep does not run experiment kind {kind!r}; use solve or verify")
    summary["family"] = summary.get("experiment", kind)
    summary["experiment"] = kind
    export.write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_mesh(cfg) -> int:
    mesh, orbits = build_surface(cfg)
    ops = assemble_operators(mesh)
    bg = background_check(mesh)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_mesh(cfg, mesh, out)
    export.write_json(out / "mesh.json", {
        "name": mesh.name, "vertices": mesh.vertex_count, "faces": mesh.face_count,
        "chi": mesh.euler_characteristic(), "area": ops.area, "boundary_length": ops.boundary_length,
        "loop_lengths": list(mesh.loop_lengths()), "max_edge_length": mesh.max_edge_length(),
        "gauss_bonnet_background_residual": bg.residual, "symmetry_order": orbits.order if orbits else None,
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvmf", description="Prescribed Gaussian and geodesic curvature via the mean-field energy.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "sweep", "mesh"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        if name == "verify":
            sp.add_argument("solution")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--refinement", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, refinement=args.refinement)
        if args.command == "solve":
            if cfg.kind != "solve":
                raise ConfigError(f"solve runs experiment kind 'solve', config has {cfg.kind!r} (use sweep)")
            return cmd_solve(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.solution)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_mesh(cfg)
    except InfeasibleSpecError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstructionError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CurvMFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
