"""Command-line front end.

Subcommands: ``run``, ``refine``, ``sweep``, ``linecut`` and ``directions``.
Exit status is 0 on success, 2 for configuration or usage errors and 3 when
the solver fails or does not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import fileio, runs
from .config import ConfigError, RunConfig
from .directions import direction_stream
from .driver import SourceIterationError
from .transport import LinearSolveError

logger = logging.getLogger("qrdom")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _add_config_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="flat key = value configuration file")
    group = p.add_argument_group("configuration overrides")
    for f in fields(RunConfig):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar="VALUE")


def _load_config(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}
    if args.config:
        if not Path(args.config).exists():
            raise ConfigError(f"config file {args.config} not found")
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_mapping(overrides)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_run(args) -> int:
    config = _load_config(args)
    outdir = Path(config.output_dir)
    try:
        result = runs.solve(config)
    except SourceIterationError as exc:
        logger.error("%s", exc)
        outdir.mkdir(parents=True, exist_ok=True)
        fileio.write_trace_csv(outdir / "trace.csv", exc.trace)
        return EXIT_SOLVER
    summary = runs.write_artifacts(outdir, result, config)
    print((outdir / "report.txt").read_text(), end="")
    logger.info("wrote %s (%d source iterations)", outdir, summary["source_iterations"])
    return EXIT_OK


def cmd_refine(args) -> int:
    config = _load_config(args)
    levels = [int(v) for v in _floats(args.levels)]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels must be a strictly increasing list of cell counts")
    outdir = Path(config.output_dir)
    rows = []
    for n in levels:
        case = config.replace(nx=n, ny=n)
        result = runs.solve(case)
        summary = runs.write_artifacts(outdir / f"mesh{n}", result, case)
        rows.append(runs.refine_row(summary))
    exact = runs.refine_exact_row(config.build_problem())
    if exact is not None:
        rows.append(exact)
    runs.write_table(outdir, "refine", runs.REFINE_HEADER, rows)
    print((outdir / "refine.txt").read_text(), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args)
    outdir = Path(config.output_dir)
    rows = []
    for sigma in _floats(args.sigma_s_list):
        case = config.replace(sigma_s=sigma)
        result = runs.solve(case)
        summary = runs.write_artifacts(outdir / f"sigma_s-{sigma:g}", result, case)
        rows.append(runs.sweep_row(summary))
    runs.write_table(outdir, "sweep", runs.SWEEP_HEADER, rows)
    print((outdir / "sweep.txt").read_text(), end="")
    return EXIT_OK


def cmd_linecut(args) -> int:
    mesh, values = fileio.read_field_csv(args.field)
    exact = None
    if args.config or args.problem:
        overrides = {"problem": args.problem} if args.problem else {}
        config = RunConfig.from_file(args.config, overrides) if args.config else RunConfig.from_mapping(overrides)
        problem = config.build_problem()
        if problem.has_exact:
            exact = problem.exact_moments[args.moment]
    rows = runs.linecut(mesh, values, args.points, exact)
    header = ("t", f"psi{args.moment}") + (("exact",) if exact is not None else ())
    out = args.output or str(Path(args.field).with_name(Path(args.field).stem + "_linecut.csv"))
    fileio.write_csv(out, header, rows)
    print(out)
    return EXIT_OK


def cmd_directions(args) -> int:
    rows = []
    for quad in direction_stream(args.start, args.count, reverse=not args.plain):
        for d in quad:
            rows.append((d.seq_index, d.quadrant, d.s1, d.s2, d.s3))
    header = ("i", "j", "s1", "s2", "s3")
    if args.output:
        fileio.write_csv(args.output, header, rows)
    else:
        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(fileio.fmt(v) for v in row) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrdom", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single solve; writes psi*.csv, trace.csv, report.txt")
    _add_config_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("refine", help="mesh-refinement study: error, F(psi0) and point values per mesh")
    _add_config_options(p)
    p.add_argument("--levels", default="16,32,64,128", help="comma-separated cells per axis")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("sweep", help="scattering-coefficient sweep: error and functionals per sigma_s")
    _add_config_options(p)
    p.add_argument("--sigma-s-list", default="0.1,0.9,2.5,5.0", help="comma-separated sigma_s values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("linecut", help="sample a field CSV along x1 = x2")
    p.add_argument("field", help="nodal field CSV written by 'run'")
    p.add_argument("-c", "--config", help="config whose problem supplies the exact column")
    p.add_argument("--problem", help="problem name supplying the exact column")
    p.add_argument("--moment", type=int, choices=(0, 1, 2), default=0)
    p.add_argument("-n", "--points", type=int, default=201)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_linecut)

    p = sub.add_parser("directions", help="dump quasi-random direction quadruples as CSV")
    p.add_argument("-n", "--count", type=int, default=16, help="number of sequence indices")
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--plain", action="store_true", help="plain Halton instead of reverse Halton")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_directions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(asctime)s %(name)s %(message)s"
    )
    try:
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        print(f"qrdom: error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"qrdom: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LinearSolveError, SourceIterationError) as exc:
        print(f"qrdom: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
