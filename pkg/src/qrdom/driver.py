"""QRDOM source iteration.

Each source iteration ``l`` consumes a fresh, contiguous block of the
quasi-random sequence, solves the four reflected transport problems of every
index against the moments of iteration ``l - 1`` and averages the resulting
intensities into new moments.  Blocks are drawn in batches until the domain
mean of the radiation density stops changing; the outer loop applies the same
relative-change test between source iterations.

Moments are plain sample means over the 4*M directions of a block: the
directions are area-uniform on the upper hemisphere and the 2D problems are
even in s3, so the mean estimates (1/4pi) times the integral over the sphere.
The phase coefficients a0, a1 are applied once, when the moments are turned
back into a scattering source.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .directions import Direction, direction_stream
from .mesh import StructuredMesh, build_mesh
from .problems import ProblemSpec
from .transport import DEFAULT_C1, DEFAULT_RTOL, LinearSolveError, PhaseCoefficients, TransportAssembler

logger = logging.getLogger(__name__)


class SourceIterationError(RuntimeError):
    """Source iteration hit its iteration cap; carries the trace so far."""

    def __init__(self, message: str, trace: list, moments: "MomentSet"):
        super().__init__(message)
        self.trace = trace
        self.moments = moments


@dataclass
class SolverConfig:
    tol_inner: float = 1e-5
    tol_outer: float = 1e-5
    batch_size: int = 50
    min_batches: int = 2
    max_batches: int = 400
    max_source_iterations: int = 200
    workers: int = 1
    linear_rtol: float = DEFAULT_RTOL
    c1: float = DEFAULT_C1
    reverse_halton: bool = True

    def __post_init__(self) -> None:
        for name in ("tol_inner", "tol_outer", "linear_rtol", "c1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("batch_size", "min_batches", "max_batches", "max_source_iterations", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class MomentSet:
    """Running direction sums of I, s1*I and s2*I and their sample means."""

    sum0: np.ndarray
    sum1: np.ndarray
    sum2: np.ndarray
    n_dirs: int = 0

    @classmethod
    def zeros(cls, n_nodes: int) -> "MomentSet":
        return cls(np.zeros(n_nodes), np.zeros(n_nodes), np.zeros(n_nodes), 0)

    @classmethod
    def from_fields(cls, psi0, psi1, psi2) -> "MomentSet":
        """Finalised moments from known fields, counted as one direction."""
        return cls(np.array(psi0, dtype=float), np.array(psi1, dtype=float), np.array(psi2, dtype=float), 1)

    def _mean(self, total: np.ndarray) -> np.ndarray:
        return total / self.n_dirs if self.n_dirs else np.zeros_like(total)

    @property
    def psi0(self) -> np.ndarray:
        return self._mean(self.sum0)

    @property
    def psi1(self) -> np.ndarray:
        return self._mean(self.sum1)

    @property
    def psi2(self) -> np.ndarray:
        return self._mean(self.sum2)

    def accumulate(self, directions: Sequence[Direction], fields: Sequence[np.ndarray]) -> "MomentSet":
        """Add one quadruple of solutions; returns ``self``."""
        c0, c1, c2 = quadruple_contribution(directions, fields)
        self.sum0 = self.sum0 + c0
        self.sum1 = self.sum1 + c1
        self.sum2 = self.sum2 + c2
        self.n_dirs += len(directions)
        return self

    def add_batch(self, contributions: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]], n_dirs: int) -> None:
        """Fold per-index contributions in, reduced in their given order."""
        for k, total in enumerate(_transpose_tree_sum(contributions)):
            setattr(self, f"sum{k}", getattr(self, f"sum{k}") + total)
        self.n_dirs += n_dirs


def accumulate(m: MomentSet, directions, fields) -> MomentSet:
    return m.accumulate(directions, fields)


def quadruple_contribution(directions, fields):
    """Sums over one quadruple, in fixed j = 1..4 order."""
    c0 = fields[0].copy()
    c1 = directions[0].s1 * fields[0]
    c2 = directions[0].s2 * fields[0]
    for d, f in zip(directions[1:], fields[1:]):
        c0 = c0 + f
        c1 = c1 + d.s1 * f
        c2 = c2 + d.s2 * f
    return c0, c1, c2


def ordered_tree_sum(items: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise sum whose shape depends only on ``len(items)``."""
    items = list(items)
    if not items:
        raise ValueError("nothing to sum")
    while len(items) > 1:
        paired = [items[k] + items[k + 1] for k in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


def _transpose_tree_sum(contributions):
    return tuple(ordered_tree_sum([c[k] for c in contributions]) for k in range(3))


def scatter_source(m: MomentSet, d: Direction, phase: PhaseCoefficients) -> np.ndarray:
    """Nodal field a0*psi0 + a1*(s1*psi1 + s2*psi2) for direction ``d``."""
    out = phase.a0 * m.psi0
    if phase.a1:
        out = out + phase.a1 * (d.s1 * m.psi1 + d.s2 * m.psi2)
    return out


def target_functional(mesh: StructuredMesh, f) -> float:
    """Domain mean of a nodal field."""
    return mesh.integrate(f) / mesh.area


def relative_change(new: float, old: float) -> float:
    if abs(new) < 1e-14:
        return abs(new - old)
    return abs(new - old) / abs(new)


@dataclass
class IterationTrace:
    l: int
    m_prev: int
    m_curr: int
    M: int
    F_value: float
    rel_change: float
    batches: int = 0
    inner_change: float = float("nan")
    seconds: float = 0.0


@dataclass
class SolveResult:
    problem: ProblemSpec
    mesh: StructuredMesh
    moments: MomentSet
    trace: list[IterationTrace] = field(default_factory=list)
    converged: bool = True

    @property
    def psi0(self) -> np.ndarray:
        return self.moments.psi0

    @property
    def psi1(self) -> np.ndarray:
        return self.moments.psi1

    @property
    def psi2(self) -> np.ndarray:
        return self.moments.psi2

    def functional(self, k: int = 0) -> float:
        return target_functional(self.mesh, getattr(self.moments, f"psi{k}"))


class QRDOMSolver:
    """Source iteration driver for one problem on one mesh."""

    def __init__(self, problem: ProblemSpec, mesh: StructuredMesh, config: Optional[SolverConfig] = None):
        self.problem = problem
        self.mesh = mesh
        self.config = config or SolverConfig()
        self.assembler = TransportAssembler(mesh, problem.medium, self.config.c1)
        self._qx1 = self.assembler.quad.x1
        self._qx2 = self.assembler.quad.x2

    def direction_loads(self, directions, prev: MomentSet) -> list[np.ndarray]:
        p = self.problem
        sigma_s = p.medium.sigma_s
        loads = []
        for d in directions:
            nodal = sigma_s * scatter_source(prev, d, p.phase) if sigma_s and prev.n_dirs else None
            src = np.broadcast_to(p.source(self._qx1, self._qx2, d), self._qx1.shape)
            loads.append(
                self.assembler.load(d, pointwise=src, nodal=nodal, inflow=lambda x1, x2, d=d: p.inflow(x1, x2, d))
            )
        return loads

    def solve_index(self, directions, prev: MomentSet) -> list[np.ndarray]:
        loads = self.direction_loads(directions, prev)
        try:
            return self.assembler.solve_quadruple(directions, loads, rtol=self.config.linear_rtol)
        except LinearSolveError as exc:
            exc.args = (f"sequence index {directions[0].seq_index}: {exc.args[0]}",)
            raise

    def _solve_batch(self, start: int, count: int, prev: MomentSet, pool) -> list:
        quads = list(direction_stream(start, count, self.config.reverse_halton))

        def work(q):
            return quadruple_contribution(q, self.solve_index(q, prev))

        if pool is None:
            return [work(q) for q in quads]
        return list(pool.map(work, quads))

    def inner_iteration(self, prev: MomentSet, m_prev: int, pool=None) -> tuple[MomentSet, int, int, float]:
        """Accumulate batches from ``m_prev`` until F(psi0) settles.

        Returns the new moments, the next unused sequence index, the number
        of batches and the last batch-to-batch relative change.
        """
        cfg = self.config
        moments = MomentSet.zeros(self.mesh.n_nodes)
        f_prev = None
        change = float("nan")
        start = m_prev
        for batch in range(1, cfg.max_batches + 1):
            moments.add_batch(self._solve_batch(start, cfg.batch_size, prev, pool), 4 * cfg.batch_size)
            start += cfg.batch_size
            f_new = target_functional(self.mesh, moments.psi0)
            if f_prev is not None:
                change = relative_change(f_new, f_prev)
                if batch >= cfg.min_batches and change < cfg.tol_inner:
                    return moments, start, batch, change
            f_prev = f_new
        logger.warning("inner iteration stopped at max_batches=%d (change %.3e)", cfg.max_batches, change)
        return moments, start, cfg.max_batches, change

    def run(self, callback=None) -> SolveResult:
        cfg = self.config
        prev = MomentSet.zeros(self.mesh.n_nodes)
        f_old = 0.0
        m = 1
        trace: list[IterationTrace] = []
        pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
        try:
            for l in range(1, cfg.max_source_iterations + 1):
                t0 = time.perf_counter()
                moments, m_next, batches, inner = self.inner_iteration(prev, m, pool)
                f_new = target_functional(self.mesh, moments.psi0)
                rec = IterationTrace(
                    l, m, m_next, m_next - m, f_new, relative_change(f_new, f_old), batches, inner,
                    time.perf_counter() - t0,
                )
                trace.append(rec)
                logger.info(
                    "l=%d M=%d F(psi0)=%.9f change=%.3e (%.1fs)", l, rec.M, f_new, rec.rel_change, rec.seconds
                )
                if callback is not None:
                    callback(rec)
                prev, f_old, m = moments, f_new, m_next
                if rec.rel_change < cfg.tol_outer:
                    return SolveResult(self.problem, self.mesh, moments, trace, True)
        finally:
            if pool is not None:
                pool.shutdown()
        raise SourceIterationError(
            f"no convergence after {cfg.max_source_iterations} source iterations", trace, prev
        )


def source_iteration(
    problem: ProblemSpec, nx: int, ny: int, config: Optional[SolverConfig] = None, callback=None
) -> SolveResult:
    a, b, c, d = problem.bounds
    return QRDOMSolver(problem, build_mesh(a, b, c, d, nx, ny), config).run(callback)
