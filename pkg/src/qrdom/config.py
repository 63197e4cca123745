"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Example::

    # problem 2 with moderate scattering
    problem = problem2
    kappa = 0.1
    sigma_s = 0.9
    nx = 128
    ny = 128
    output_dir = runs/p2-0.9
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .driver import SolverConfig
from .problems import PROBLEMS, ProblemSpec, get_problem


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "problem1"
    kappa: Optional[float] = None
    sigma_s: Optional[float] = None
    a0: Optional[float] = None
    a1: Optional[float] = None
    nx: int = 32
    ny: int = 32
    tol_inner: float = 1e-5
    tol_outer: float = 1e-5
    batch_size: int = 50
    min_batches: int = 2
    max_batches: int = 400
    max_source_iterations: int = 200
    workers: int = 1
    linear_tol: float = 1e-12
    c1: float = 2.0
    sequence: str = "reverse"
    output_dir: str = "qrdom-out"

    def __post_init__(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; valid options: {', '.join(sorted(PROBLEMS))}")
        if self.sequence not in ("reverse", "plain"):
            raise ConfigError(f"sequence must be 'reverse' or 'plain', got {self.sequence!r}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("nx and ny must be at least 1")
        try:
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, known[key].type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        text = Path(path).read_text()
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        try:
            parser.read_string("[run]\n" + text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        values = dict(parser["run"])
        values.update(overrides or {})
        return cls.from_mapping(values)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def build_problem(self) -> ProblemSpec:
        overrides = {"kappa": self.kappa, "sigma_s": self.sigma_s, "a0": self.a0, "a1": self.a1}
        try:
            return get_problem(self.problem, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            tol_inner=self.tol_inner,
            tol_outer=self.tol_outer,
            batch_size=self.batch_size,
            min_batches=self.min_batches,
            max_batches=self.max_batches,
            max_source_iterations=self.max_source_iterations,
            workers=self.workers,
            linear_rtol=self.linear_tol,
            c1=self.c1,
            reverse_halton=self.sequence == "reverse",
        )

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _coerce(key: str, raw: Any, annotation) -> Any:
    if raw is None:
        return None
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    kind = str(annotation)
    try:
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            return None if raw.lower() in ("", "none") else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw
