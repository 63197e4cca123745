"""Run orchestration shared by the CLI and the verification suite."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fileio
from .config import RunConfig
from .driver import SolveResult, source_iteration
from .mesh import StructuredMesh
from .problems import ProblemSpec, exact_functional

logger = logging.getLogger(__name__)

REPORT_POINTS = ((0.1, 0.1), (0.5, 0.5), (0.9, 0.9))


def solve(config: RunConfig, callback=None) -> SolveResult:
    problem = config.build_problem()
    logger.info("solving %s on %dx%d", problem.name, config.nx, config.ny)
    return source_iteration(problem, config.nx, config.ny, config.solver_config(), callback)


def exact_functionals(problem: ProblemSpec) -> Optional[tuple[float, float, float]]:
    if not problem.has_exact:
        return None
    return tuple(exact_functional(f, problem.bounds) for f in problem.exact_moments)


def summarize(result: SolveResult) -> dict:
    mesh, problem = result.mesh, result.problem
    out = {
        "problem": problem.name,
        "kappa": problem.medium.kappa,
        "sigma_s": problem.medium.sigma_s,
        "a0": problem.phase.a0,
        "a1": problem.phase.a1,
        "nx": mesh.nx,
        "ny": mesh.ny,
        "converged": "yes" if result.converged else "no",
        "source_iterations": len(result.trace),
        "ordinates": sum(t.M for t in result.trace),
    }
    for k in range(3):
        out[f"F_psi{k}"] = result.functional(k)
    for x1, x2 in REPORT_POINTS:
        if mesh.a <= x1 <= mesh.b and mesh.c <= x2 <= mesh.d:
            out[f"psi0({x1},{x2})"] = mesh.point_eval(result.psi0, x1, x2)
    exact = exact_functionals(problem)
    if exact is not None:
        for k in range(3):
            out[f"F_psi{k}_exact"] = exact[k]
        for k, f in enumerate(problem.exact_moments):
            out[f"l2_error_psi{k}"] = mesh.l2_error(getattr(result, f"psi{k}"), f)
        for x1, x2 in REPORT_POINTS:
            if f"psi0({x1},{x2})" in out:
                out[f"psi0_exact({x1},{x2})"] = float(problem.exact_moments[0](x1, x2))
    return out


def write_artifacts(outdir, result: SolveResult, config: Optional[RunConfig] = None) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k in range(3):
        fileio.write_field_csv(outdir / f"psi{k}.csv", result.mesh, getattr(result, f"psi{k}"))
    fileio.write_trace_csv(outdir / "trace.csv", result.trace)
    summary = summarize(result)
    fileio.write_report(outdir / "report.txt", list(summary.items()))
    if config is not None:
        (outdir / "config.txt").write_text(config.dump())
    return summary


REFINE_HEADER = ("cells", "eps", "F_psi0", "psi0(0.1,0.1)", "psi0(0.5,0.5)", "psi0(0.9,0.9)")


def refine_row(summary: dict) -> list:
    return [
        f"{summary['nx']}x{summary['ny']}",
        summary.get("l2_error_psi0", float("nan")),
        summary["F_psi0"],
        summary.get("psi0(0.1,0.1)", float("nan")),
        summary.get("psi0(0.5,0.5)", float("nan")),
        summary.get("psi0(0.9,0.9)", float("nan")),
    ]


def refine_exact_row(problem: ProblemSpec) -> Optional[list]:
    exact = exact_functionals(problem)
    if exact is None:
        return None
    psi0 = problem.exact_moments[0]
    return ["exact", "-x-", exact[0]] + [float(psi0(x1, x2)) for x1, x2 in REPORT_POINTS]


SWEEP_HEADER = ("sigma_s", "eps", "F_psi0", "F_psi0_exact", "F_psi1", "F_psi1_exact", "F_psi2")


def sweep_row(summary: dict) -> list:
    return [
        summary["sigma_s"],
        summary.get("l2_error_psi0", float("nan")),
        summary["F_psi0"],
        summary.get("F_psi0_exact", float("nan")),
        summary["F_psi1"],
        summary.get("F_psi1_exact", float("nan")),
        summary["F_psi2"],
    ]


def write_table(outdir, stem: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fileio.write_csv(outdir / f"{stem}.csv", header, rows)
    (outdir / f"{stem}.txt").write_text(fileio.aligned_table(header, rows))


def linecut(mesh: StructuredMesh, field: np.ndarray, n: int = 201, exact=None) -> list[tuple]:
    """Sample ``field`` along the diagonal x1 = x2 (parameter t in [0, 1])."""
    t = np.linspace(0.0, 1.0, n)
    x1 = mesh.a + t * (mesh.b - mesh.a)
    x2 = mesh.c + t * (mesh.d - mesh.c)
    values = mesh.point_eval(field, x1, x2)
    if exact is None:
        return list(zip(t, values))
    return list(zip(t, values, np.broadcast_to(exact(x1, x2), t.shape)))
