"""Uniform rectangular Q1 mesh, quadrature and nodal-field utilities.

Nodes are numbered row-major with x1 running fastest: node (p, q) sits at
``(a + p*hx, c + q*hy)`` and has index ``q*(nx + 1) + p``.  Nodal fields are
plain 1-D numpy arrays of length ``n_nodes``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

PointFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
FieldLike = Union[np.ndarray, PointFunction]


class MeshMismatchError(ValueError):
    pass


class BoundaryEdge(enum.IntEnum):
    """Boundary edges Γ1..Γ4, counterclockwise from the bottom."""

    BOTTOM = 1
    RIGHT = 2
    TOP = 3
    LEFT = 4

    @property
    def normal(self) -> tuple[float, float]:
        return _NORMALS[self]


_NORMALS = {
    BoundaryEdge.BOTTOM: (0.0, -1.0),
    BoundaryEdge.RIGHT: (1.0, 0.0),
    BoundaryEdge.TOP: (0.0, 1.0),
    BoundaryEdge.LEFT: (-1.0, 0.0),
}


def gauss_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


# reference bilinear basis on [0,1]^2, local nodes counterclockwise
_LOCAL = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


def _basis(xi: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values and reference derivatives of the four Q1 shape functions.

    Returns arrays of shape (4, len(xi)).
    """
    px = np.where(_LOCAL[:, :1] == 1, xi, 1.0 - xi)
    py = np.where(_LOCAL[:, 1:] == 1, eta, 1.0 - eta)
    dpx = np.where(_LOCAL[:, :1] == 1, 1.0, -1.0) * np.ones_like(xi)
    dpy = np.where(_LOCAL[:, 1:] == 1, 1.0, -1.0) * np.ones_like(eta)
    return px * py, dpx * py, px * dpy


@dataclass(frozen=True)
class CellQuadrature:
    """Tensor Gauss rule replicated over all cells.

    ``values``, ``dx`` and ``dy`` are sparse (n_points x n_nodes) matrices
    holding basis values and physical derivatives at the quadrature points;
    ``weights`` already include the cell area.
    """

    x1: np.ndarray
    x2: np.ndarray
    weights: np.ndarray
    values: sp.csr_matrix
    dx: sp.csr_matrix
    dy: sp.csr_matrix


@dataclass(frozen=True)
class StructuredMesh:
    a: float
    b: float
    c: float
    d: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if not (self.a < self.b and self.c < self.d):
            raise ValueError(f"degenerate domain [{self.a},{self.b}]x[{self.c},{self.d}]")
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"cell counts must be positive integers, got {self.nx}x{self.ny}")

    @property
    def hx(self) -> float:
        return (self.b - self.a) / self.nx

    @property
    def hy(self) -> float:
        return (self.d - self.c) / self.ny

    @property
    def area(self) -> float:
        return (self.b - self.a) * (self.d - self.c)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def node_index(self, p, q):
        return q * (self.nx + 1) + p

    @cached_property
    def x1(self) -> np.ndarray:
        p = np.tile(np.arange(self.nx + 1), self.ny + 1)
        return self.a + p * self.hx

    @cached_property
    def x2(self) -> np.ndarray:
        q = np.repeat(np.arange(self.ny + 1), self.nx + 1)
        return self.c + q * self.hy

    @cached_property
    def cells(self) -> np.ndarray:
        """(n_cells, 4) connectivity, counterclockwise from the lower-left node."""
        p, q = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        p, q = p.ravel(), q.ravel()
        return np.stack(
            [
                self.node_index(p, q),
                self.node_index(p + 1, q),
                self.node_index(p + 1, q + 1),
                self.node_index(p, q + 1),
            ],
            axis=1,
        )

    def cell_origin(self) -> tuple[np.ndarray, np.ndarray]:
        first = self.cells[:, 0]
        return self.x1[first], self.x2[first]

    def edge_nodes(self, edge: BoundaryEdge) -> np.ndarray:
        """Nodes on ``edge`` ordered by increasing coordinate along it."""
        p = np.arange(self.nx + 1)
        q = np.arange(self.ny + 1)
        if edge == BoundaryEdge.BOTTOM:
            return self.node_index(p, 0)
        if edge == BoundaryEdge.TOP:
            return self.node_index(p, self.ny)
        if edge == BoundaryEdge.LEFT:
            return self.node_index(0, q)
        return self.node_index(self.nx, q)

    def mirror_x1(self) -> np.ndarray:
        """Node permutation for the reflection x1 -> a + b - x1."""
        p = np.tile(np.arange(self.nx + 1), self.ny + 1)
        q = np.repeat(np.arange(self.ny + 1), self.nx + 1)
        return self.node_index(self.nx - p, q)

    def mirror_x2(self) -> np.ndarray:
        """Node permutation for the reflection x2 -> c + d - x2."""
        p = np.tile(np.arange(self.nx + 1), self.ny + 1)
        q = np.repeat(np.arange(self.ny + 1), self.nx + 1)
        return self.node_index(p, self.ny - q)

    @cached_property
    def nested_dissection(self) -> np.ndarray:
        """Fill-reducing node order: recursive bisection, separators last."""
        order: list[np.ndarray] = []
        _dissect(self, 0, self.nx + 1, 0, self.ny + 1, order)
        return np.concatenate(order)

    def quadrature(self, order: int = 2) -> CellQuadrature:
        return _cell_quadrature(self, order)

    def edge_quadrature(self, edge: BoundaryEdge, order: int = 2):
        """Points, weights and a sparse (n_points x n_nodes) basis matrix on ``edge``."""
        return _edge_quadrature(self, edge, order)

    def check(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_nodes,):
            raise MeshMismatchError(
                f"field of shape {values.shape} does not match mesh with {self.n_nodes} nodes"
            )
        return values

    def interpolate(self, f: FieldLike) -> np.ndarray:
        """Nodal values of ``f`` (a callable of x1, x2, or already a nodal field)."""
        if callable(f):
            return self.check(np.broadcast_to(f(self.x1, self.x2), (self.n_nodes,)))
        return self.check(f)

    @cached_property
    def nodal_weights(self) -> np.ndarray:
        """Integrals of the nodal basis functions."""
        quad = self.quadrature(2)
        return quad.values.T @ quad.weights

    def integrate(self, f: FieldLike) -> float:
        """Integral of the bilinear interpolant of ``f`` over the domain."""
        return float(self.nodal_weights @ self.interpolate(f))

    def l2_error(self, f: FieldLike, g: FieldLike) -> float:
        """L2 norm of ``f - g`` using a 3x3 Gauss rule per cell.

        ``f`` is taken as a nodal field (callables are interpolated); a
        callable ``g`` is evaluated pointwise at the quadrature points.
        """
        quad = self.quadrature(3)
        fq = quad.values @ self.interpolate(f)
        if callable(g):
            gq = np.broadcast_to(g(quad.x1, quad.x2), fq.shape)
        else:
            gq = quad.values @ self.check(g)
        return float(np.sqrt(quad.weights @ (fq - gq) ** 2))

    def locate(self, x1, x2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell indices and local coordinates of points, lowest containing cell wins."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        tol = 1e-12 * max(self.b - self.a, self.d - self.c)
        outside = (x1 < self.a - tol) | (x1 > self.b + tol) | (x2 < self.c - tol) | (x2 > self.d + tol)
        if np.any(outside):
            bad = np.flatnonzero(outside)[0]
            raise ValueError(f"point ({x1[bad]}, {x2[bad]}) lies outside the domain")
        t1 = (x1 - self.a) / self.hx
        t2 = (x2 - self.c) / self.hy
        p = np.clip(np.ceil(t1).astype(int) - 1, 0, self.nx - 1)
        q = np.clip(np.ceil(t2).astype(int) - 1, 0, self.ny - 1)
        xi = np.clip(t1 - p, 0.0, 1.0)
        eta = np.clip(t2 - q, 0.0, 1.0)
        return q * self.nx + p, xi, eta

    def point_eval(self, f: np.ndarray, x1, x2):
        """Bilinear interpolation of the nodal field ``f`` at the given points."""
        f = self.check(f)
        scalar = np.ndim(x1) == 0 and np.ndim(x2) == 0
        cell, xi, eta = self.locate(x1, x2)
        phi, _, _ = _basis(xi, eta)
        out = np.einsum("kn,nk->n", phi, f[self.cells[cell]])
        return float(out[0]) if scalar else out


def _dissect(mesh: StructuredMesh, p0: int, p1: int, q0: int, q1: int, out: list, leaf: int = 4) -> None:
    if p1 <= p0 or q1 <= q0:
        return
    if (p1 - p0) * (q1 - q0) <= leaf:
        p, q = np.meshgrid(np.arange(p0, p1), np.arange(q0, q1), indexing="xy")
        out.append(mesh.node_index(p.ravel(), q.ravel()))
        return
    if p1 - p0 >= q1 - q0:
        mid = (p0 + p1) // 2
        _dissect(mesh, p0, mid, q0, q1, out, leaf)
        _dissect(mesh, mid + 1, p1, q0, q1, out, leaf)
        out.append(mesh.node_index(mid, np.arange(q0, q1)))
    else:
        mid = (q0 + q1) // 2
        _dissect(mesh, p0, p1, q0, mid, out, leaf)
        _dissect(mesh, p0, p1, mid + 1, q1, out, leaf)
        out.append(mesh.node_index(np.arange(p0, p1), mid))


def build_mesh(a: float, b: float, c: float, d: float, nx: int, ny: int) -> StructuredMesh:
    return StructuredMesh(float(a), float(b), float(c), float(d), int(nx), int(ny))


@lru_cache(maxsize=16)
def _cell_quadrature(mesh: StructuredMesh, order: int) -> CellQuadrature:
    g, w = gauss_unit(order)
    xi, eta = np.meshgrid(g, g, indexing="xy")
    wq = np.outer(w, w).ravel()
    xi, eta = xi.ravel(), eta.ravel()
    phi, dxi, deta = _basis(xi, eta)  # (4, nq)
    nq = xi.size
    ox, oy = mesh.cell_origin()
    qx1 = (ox[:, None] + mesh.hx * xi[None, :]).ravel()
    qx2 = (oy[:, None] + mesh.hy * eta[None, :]).ravel()
    weights = np.tile(wq * mesh.hx * mesh.hy, mesh.n_cells)
    rows = np.repeat(np.arange(mesh.n_cells * nq), 4)
    cols = np.repeat(mesh.cells, nq, axis=0).ravel()
    shape = (mesh.n_cells * nq, mesh.n_nodes)

    def build(local: np.ndarray) -> sp.csr_matrix:
        data = np.tile(local.T.ravel(), mesh.n_cells)
        return sp.csr_matrix((data, (rows, cols)), shape=shape)

    return CellQuadrature(
        qx1, qx2, weights, build(phi), build(dxi / mesh.hx), build(deta / mesh.hy)
    )


@lru_cache(maxsize=64)
def _edge_quadrature(mesh: StructuredMesh, edge: BoundaryEdge, order: int):
    g, w = gauss_unit(order)
    nodes = mesh.edge_nodes(edge)
    horizontal = edge in (BoundaryEdge.BOTTOM, BoundaryEdge.TOP)
    h = mesh.hx if horizontal else mesh.hy
    start = mesh.x1[nodes[:-1]] if horizontal else mesh.x2[nodes[:-1]]
    along = (start[:, None] + h * g[None, :]).ravel()
    fixed = np.full_like(along, mesh.x2[nodes[0]] if horizontal else mesh.x1[nodes[0]])
    x1, x2 = (along, fixed) if horizontal else (fixed, along)
    weights = np.tile(w * h, nodes.size - 1)
    nseg = nodes.size - 1
    rows = np.repeat(np.arange(nseg * order), 2)
    cols = np.stack([np.repeat(nodes[:-1], order), np.repeat(nodes[1:], order)], axis=1).ravel()
    data = np.stack([np.tile(1.0 - g, nseg), np.tile(g, nseg)], axis=1).ravel()
    values = sp.csr_matrix((data, (rows, cols)), shape=(nseg * order, mesh.n_nodes))
    return x1, x2, weights, values


def inflow_edges(direction) -> frozenset[BoundaryEdge]:
    """Edges on which ``direction`` points into the domain (s . n < 0)."""
    s1, s2 = direction.s1, direction.s2
    if s1 == 0.0 or s2 == 0.0:
        raise ValueError("grazing direction: inflow edges are undefined when s1 or s2 is zero")
    return frozenset(e for e in BoundaryEdge if s1 * e.normal[0] + s2 * e.normal[1] < 0)


def outflow_edges(direction) -> frozenset[BoundaryEdge]:
    return frozenset(BoundaryEdge) - inflow_edges(direction)
