"""SUPG-stabilised Q1 discretisation of the single-direction transport problem.

For a fixed direction ``s`` the discrete problem is

    -(I, s.grad v) + (s.n I, v)_out + delta (s.grad I, s.grad v)
        + sigma_t (I, v + delta s.grad v)
    = (f, v + delta s.grad v) - (s.n I_in, v)_in

where only (s1, s2) enter the convection (the problems are invariant in x3)
and the inflow data is imposed weakly.  The bilinear form is affine in
(s1, s2, s1^2, s1 s2, s2^2), so the direction-independent element integrals
are assembled once onto a fixed sparsity pattern and each direction only
recombines their coefficient arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .directions import Direction
from .mesh import BoundaryEdge, StructuredMesh, _basis, gauss_unit, inflow_edges

logger = logging.getLogger(__name__)

DEFAULT_C1 = 2.0
DEFAULT_RTOL = 1e-12


class LinearSolveError(RuntimeError):
    """A direction solve missed the residual contract or hit a singular matrix."""

    def __init__(self, message: str, direction=None, residual: float = float("nan")):
        super().__init__(message)
        self.direction = direction
        self.residual = residual


@dataclass(frozen=True)
class Medium:
    kappa: float
    sigma_s: float

    def __post_init__(self) -> None:
        if self.kappa < 0 or self.sigma_s < 0:
            raise ValueError(f"coefficients must be nonnegative, got kappa={self.kappa}, sigma_s={self.sigma_s}")

    @property
    def sigma_t(self) -> float:
        return self.kappa + self.sigma_s


@dataclass(frozen=True)
class PhaseCoefficients:
    """Linear anisotropic phase function a0 + a1 * (s . s')."""

    a0: float = 1.0
    a1: float = 0.0

    def __post_init__(self) -> None:
        if self.a0 <= 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if self.a0 - abs(self.a1) < 0:
            raise ValueError(f"phase function would be negative: a0={self.a0}, a1={self.a1}")

    def __call__(self, cos_angle):
        return self.a0 + self.a1 * cos_angle


def supg_delta(h: float, sigma_t: float, c1: float = DEFAULT_C1) -> float:
    """Stabilisation parameter (c1^2 / h^2 + sigma_t)^(-1/2)."""
    if h <= 0 or c1 <= 0 or sigma_t < 0:
        raise ValueError(f"invalid SUPG inputs h={h}, sigma_t={sigma_t}, c1={c1}")
    return (c1 * c1 / (h * h) + sigma_t) ** -0.5


def _element_matrices(hx: float, hy: float) -> dict[str, np.ndarray]:
    g, w = gauss_unit(2)
    xi, eta = np.meshgrid(g, g, indexing="xy")
    wq = np.outer(w, w).ravel() * hx * hy
    phi, dxi, deta = _basis(xi.ravel(), eta.ravel())
    px, py = dxi / hx, deta / hy

    def form(test, trial):
        return np.einsum("q,iq,jq->ij", wq, test, trial)

    return {
        "mass": form(phi, phi),
        "cx": form(px, phi),
        "cy": form(py, phi),
        "kxx": form(px, px),
        "kxy": form(py, px) + form(px, py),
        "kyy": form(py, py),
    }


class TransportAssembler:
    """Direction-independent pieces of the SUPG transport discretisation.

    One instance serves every direction of a solve on a given mesh and
    medium; it is read-only after construction and safe to share between
    threads.
    """

    def __init__(self, mesh: StructuredMesh, medium: Medium, c1: float = DEFAULT_C1):
        self.mesh = mesh
        self.medium = medium
        self.c1 = c1
        self.delta = supg_delta(max(mesh.hx, mesh.hy), medium.sigma_t, c1)
        n = mesh.n_nodes

        cells = mesh.cells
        rows = np.repeat(cells, 4, axis=1).ravel()
        cols = np.tile(cells, (1, 4)).ravel()
        # column-major keys give CSC ordering directly (SuperLU wants CSC)
        keys, inverse = np.unique(cols * n + rows, return_inverse=True)
        self._keys = keys
        self.indices = (keys % n).astype(np.int32)
        self.indptr = np.searchsorted(keys // n, np.arange(n + 1)).astype(np.int32)
        nnz = keys.size

        self._data = {}
        for name, local in _element_matrices(mesh.hx, mesh.hy).items():
            weights = np.tile(local.ravel(), mesh.n_cells)
            self._data[name] = np.bincount(inverse, weights=weights, minlength=nnz)
        for edge in BoundaryEdge:
            self._data[edge] = self._edge_mass(edge)

        quad = mesh.quadrature(2)
        self.quad = quad
        self._test = quad.values.T.tocsr()
        self._test_dx = quad.dx.T.tocsr()
        self._test_dy = quad.dy.T.tocsr()
        self._edges = {edge: mesh.edge_quadrature(edge, 2) for edge in BoundaryEdge}
        self._mass = self._csc(self._data["mass"])
        self._cx = self._csc(self._data["cx"])
        self._cy = self._csc(self._data["cy"])
        mx, my = mesh.mirror_x1(), mesh.mirror_x2()
        self.mirrors = {1: None, 2: mx, 3: mx[my], 4: my}

        # the same pattern renumbered in nested-dissection order, for factorising
        self.order = mesh.nested_dissection
        rank = np.empty(n, dtype=np.int64)
        rank[self.order] = np.arange(n)
        old_rows, old_cols = self.indices.astype(np.int64), keys // n
        pkeys = rank[old_cols] * n + rank[old_rows]
        self._to_ordered = np.argsort(pkeys, kind="stable")
        pkeys = pkeys[self._to_ordered]
        self._ord_indices = (pkeys % n).astype(np.int32)
        self._ord_indptr = np.searchsorted(pkeys // n, np.arange(n + 1)).astype(np.int32)

    def _edge_mass(self, edge: BoundaryEdge) -> np.ndarray:
        x1, x2, w, values = self.mesh.edge_quadrature(edge, 2)
        ev = values.T @ sp.diags(w) @ values  # exact for the linear traces
        ev = ev.tocoo()
        n = self.mesh.n_nodes
        pos = np.searchsorted(self._keys, ev.col * n + ev.row)
        return np.bincount(pos, weights=ev.data, minlength=self._keys.size)

    def _csc(self, data: np.ndarray) -> sp.csc_matrix:
        n = self.mesh.n_nodes
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(n, n))

    def matrix(self, direction) -> sp.csc_matrix:
        return self._csc(self._matrix_data(direction))

    def _matrix_data(self, direction) -> np.ndarray:
        s1, s2 = direction.s1, direction.s2
        if s1 == 0.0 or s2 == 0.0:
            raise ValueError("grazing direction: s1 and s2 must be nonzero")
        st, dl = self.medium.sigma_t, self.delta
        d = self._data
        data = (st * dl - 1.0) * (s1 * d["cx"] + s2 * d["cy"])
        data += dl * (s1 * s1 * d["kxx"] + s1 * s2 * d["kxy"] + s2 * s2 * d["kyy"])
        data += st * d["mass"]
        for edge in BoundaryEdge:
            sn = s1 * edge.normal[0] + s2 * edge.normal[1]
            if sn > 0:
                data += sn * d[edge]
        return data

    def load(
        self,
        direction,
        pointwise: Optional[np.ndarray] = None,
        nodal: Optional[np.ndarray] = None,
        inflow: Optional[Callable] = None,
    ) -> np.ndarray:
        """Right-hand side vector for ``direction``.

        ``pointwise`` holds source values at the 2x2 quadrature points,
        ``nodal`` a source given as a nodal field, and ``inflow(x1, x2)`` the
        boundary intensity for this direction.
        """
        s1, s2 = direction.s1, direction.s2
        dl = self.delta
        b = np.zeros(self.mesh.n_nodes)
        if pointwise is not None:
            wf = self.quad.weights * pointwise
            b += self._test @ wf + dl * (s1 * (self._test_dx @ wf) + s2 * (self._test_dy @ wf))
        if nodal is not None:
            b += self._mass @ nodal + dl * (s1 * (self._cx @ nodal) + s2 * (self._cy @ nodal))
        if inflow is not None:
            for edge in sorted(inflow_edges(direction)):
                x1, x2, w, values = self._edges[edge]
                sn = s1 * edge.normal[0] + s2 * edge.normal[1]
                b -= sn * (values.T @ (w * np.broadcast_to(inflow(x1, x2), w.shape)))
        return b

    def factorize(self, direction) -> "OrderedLU":
        n = self.mesh.n_nodes
        data = self._matrix_data(direction)[self._to_ordered]
        a = sp.csc_matrix((data, self._ord_indices, self._ord_indptr), shape=(n, n))
        try:
            lu = spla.splu(a, permc_spec="NATURAL")
        except RuntimeError as exc:
            raise LinearSolveError(f"factorization failed for {direction}: {exc}", direction) from exc
        return OrderedLU(lu, self.order)

    def solve_quadruple(
        self,
        directions: Sequence,
        loads: Sequence[np.ndarray],
        rtol: float = DEFAULT_RTOL,
        verify: bool = True,
    ) -> list[np.ndarray]:
        """Solve the four reflected directions of one sequence index.

        On the uniform mesh the matrix of a reflected direction is the mirror
        permutation of the first-quadrant matrix, so a single factorisation
        serves all four solves.  With ``verify`` each solution's residual is
        recomputed against its own directly assembled matrix.
        """
        d0 = directions[0]
        lu = self.factorize(Direction(abs(d0.s1), abs(d0.s2), d0.s3, 1, d0.seq_index))
        out = []
        for d, b in zip(directions, loads):
            perm = self.mirrors[d.quadrant]
            if perm is None:
                x = lu.solve(b)
            else:
                x = lu.solve(b[perm])[perm]
            if verify:
                x = self._enforce_residual(lu, perm, d, b, x, rtol)
            out.append(x)
        return out

    def _enforce_residual(self, lu, perm, direction, b, x, rtol, max_refine: int = 3):
        a = self.matrix(direction)
        scale = np.linalg.norm(b)
        for _ in range(max_refine + 1):
            r = b - a @ x
            res = np.linalg.norm(r) / scale if scale > 0 else np.linalg.norm(r)
            if res <= rtol:
                return x
            logger.debug("refining direction %s, residual %.3e", direction, res)
            x = x + (lu.solve(r) if perm is None else lu.solve(r[perm])[perm])
        raise LinearSolveError(
            f"residual {res:.3e} exceeds {rtol:.1e} for direction index {direction.seq_index} "
            f"quadrant {direction.quadrant}",
            direction,
            res,
        )


class OrderedLU:
    """LU factors of a matrix renumbered by ``order``; solves in the original numbering."""

    def __init__(self, lu, order: np.ndarray):
        self.lu = lu
        self.order = order

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.empty_like(b)
        x[self.order] = self.lu.solve(b[self.order])
        return x


@dataclass
class DirectionSystem:
    matrix: sp.csc_matrix
    rhs: np.ndarray
    direction: object


def assemble_direction_system(
    mesh: StructuredMesh,
    direction,
    medium: Medium,
    rhs: Callable,
    inflow: Optional[Callable],
    c1: float = DEFAULT_C1,
    assembler: Optional[TransportAssembler] = None,
) -> DirectionSystem:
    """Assemble the SUPG system for one direction.

    ``rhs(x1, x2)`` is the directional source sigma_s Psi + kappa I_b and
    ``inflow(x1, x2)`` the boundary intensity, both for this direction.
    """
    if assembler is None:
        assembler = TransportAssembler(mesh, medium, c1)
    if inflow is None:
        raise ValueError("inflow data is required on the inflow edges")
    quad = assembler.quad
    f = np.broadcast_to(rhs(quad.x1, quad.x2), quad.weights.shape)
    b = assembler.load(direction, pointwise=f, inflow=inflow)
    return DirectionSystem(assembler.matrix(direction), b, direction)


def solve_direction(system: DirectionSystem, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Sparse LU solve with a relative residual check and iterative refinement."""
    a, b = system.matrix, system.rhs
    try:
        lu = spla.splu(sp.csc_matrix(a), permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise LinearSolveError(f"singular system for {system.direction}: {exc}", system.direction) from exc
    x = lu.solve(b)
    scale = np.linalg.norm(b)
    for _ in range(4):
        r = b - a @ x
        res = np.linalg.norm(r) / scale if scale > 0 else np.linalg.norm(r)
        if res <= rtol:
            return x
        x = x + lu.solve(r)
    raise LinearSolveError(f"residual {res:.3e} exceeds {rtol:.1e}", system.direction, res)
