import math

import numpy as np
import pytest
import scipy.sparse as sp

from qrdom.directions import Direction, quadruple
from qrdom.mesh import build_mesh
from qrdom.problems import problem2
from qrdom.transport import (
    LinearSolveError,
    Medium,
    PhaseCoefficients,
    TransportAssembler,
    assemble_direction_system,
    solve_direction,
    supg_delta,
)

UNIT = (0, 1, 0, 1)


def reference_system(mesh, s, medium, f, inflow, c1=2.0):
    """Dense element-loop assembly of the Green-form weak problem, 3x3 Gauss."""
    n = mesh.n_nodes
    A = np.zeros((n, n))
    rhs = np.zeros(n)
    st = medium.sigma_t
    delta = 1.0 / math.sqrt(c1**2 / max(mesh.hx, mesh.hy) ** 2 + st)
    g, w = np.polynomial.legendre.leggauss(3)
    g, w = 0.5 * (g + 1), 0.5 * w
    hx, hy = mesh.hx, mesh.hy
    for p in range(mesh.nx):
        for q in range(mesh.ny):
            nodes = [mesh.node_index(p, q), mesh.node_index(p + 1, q), mesh.node_index(p + 1, q + 1), mesh.node_index(p, q + 1)]
            x0, y0 = mesh.a + p * hx, mesh.c + q * hy
            for xi, wx in zip(g, w):
                for eta, wy in zip(g, w):
                    W = wx * wy * hx * hy
                    phi = [(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta]
                    gx = [-(1 - eta) / hx, (1 - eta) / hx, eta / hx, -eta / hx]
                    gy = [-(1 - xi) / hy, -xi / hy, xi / hy, (1 - xi) / hy]
                    sg = [s.s1 * a + s.s2 * b for a, b in zip(gx, gy)]
                    fv = f(x0 + hx * xi, y0 + hy * eta)
                    for a in range(4):
                        test = phi[a] + delta * sg[a]
                        rhs[nodes[a]] += W * fv * test
                        for b in range(4):
                            A[nodes[a], nodes[b]] += W * (-phi[b] * sg[a] + delta * sg[b] * sg[a] + st * phi[b] * test)
    edges = [
        ((0, -1), [(mesh.node_index(p, 0), mesh.node_index(p + 1, 0)) for p in range(mesh.nx)]),
        ((1, 0), [(mesh.node_index(mesh.nx, q), mesh.node_index(mesh.nx, q + 1)) for q in range(mesh.ny)]),
        ((0, 1), [(mesh.node_index(p, mesh.ny), mesh.node_index(p + 1, mesh.ny)) for p in range(mesh.nx)]),
        ((-1, 0), [(mesh.node_index(0, q), mesh.node_index(0, q + 1)) for q in range(mesh.ny)]),
    ]
    for normal, segments in edges:
        sn = s.s1 * normal[0] + s.s2 * normal[1]
        for n0, n1 in segments:
            xa, ya, xb, yb = mesh.x1[n0], mesh.x2[n0], mesh.x1[n1], mesh.x2[n1]
            length = math.hypot(xb - xa, yb - ya)
            for t, wt in zip(g, w):
                phi = (1 - t, t)
                x, y = xa + t * (xb - xa), ya + t * (yb - ya)
                for a, na in enumerate((n0, n1)):
                    if sn > 0:
                        for b, nb in enumerate((n0, n1)):
                            A[na, nb] += wt * length * sn * phi[a] * phi[b]
                    else:
                        rhs[na] -= wt * length * sn * inflow(x, y) * phi[a]
    return A, rhs


@pytest.mark.parametrize(
    "h, sigma_t, expected",
    [(1.0, 0.0, 0.5), (1 / 64, 1.1, 7.81223e-3), (0.1, 0.0, 0.05)],
)
def test_supg_delta(h, sigma_t, expected):
    assert supg_delta(h, sigma_t, 2.0) == pytest.approx(expected, rel=1e-5)


def test_supg_delta_monotone_and_bounded():
    hs = [1 / 8, 1 / 16, 1 / 32]
    assert supg_delta(hs[0], 1.0) > supg_delta(hs[1], 1.0) > supg_delta(hs[2], 1.0)
    assert supg_delta(0.1, 0.0) > supg_delta(0.1, 1.0) > supg_delta(0.1, 10.0)
    for h in hs:
        assert 0 < supg_delta(h, 0.5) < h / 2


def test_medium_and_phase_validation():
    assert Medium(1.0, 2.0).sigma_t == 3.0
    with pytest.raises(ValueError):
        Medium(-1.0, 0.0)
    with pytest.raises(ValueError):
        PhaseCoefficients(1.0, 1.5)
    assert PhaseCoefficients(1.0, 0.5)(1.0) == 1.5


@pytest.mark.parametrize("quadrant", [1, 2, 3, 4])
def test_matrix_and_load_match_reference_assembly(quadrant):
    mesh = build_mesh(0, 1.5, -0.5, 0.5, 4, 3)
    medium = Medium(0.7, 1.3)
    d = quadruple(3)[quadrant - 1]
    f = lambda x, y: np.cos(x) + x * y**2
    inflow = lambda x, y: 1 + np.sin(3 * x + y)
    A_ref, b_ref = reference_system(mesh, d, medium, f, inflow)
    system = assemble_direction_system(mesh, d, medium, rhs=f, inflow=inflow)
    assert np.allclose(system.matrix.toarray(), A_ref, atol=1e-14, rtol=1e-12)
    # the library integrates sources with 2x2 Gauss, the reference with 3x3
    assert np.allclose(system.rhs, b_ref, atol=2e-4)
    exact_f = lambda x, y: 2 + 3 * x - y + x * y
    exact_in = lambda x, y: 0.5 + x + 2 * y
    _, b_ref = reference_system(mesh, d, medium, exact_f, exact_in)
    system = assemble_direction_system(mesh, d, medium, rhs=exact_f, inflow=exact_in)
    assert np.allclose(system.rhs, b_ref, atol=1e-14)


def test_green_form_equals_weak_inflow_form():
    mesh = build_mesh(*UNIT, 5, 4)
    asm = TransportAssembler(mesh, Medium(1.0, 0.5))
    d = quadruple(7)[2]
    q = mesh.quadrature(2)
    W = sp.diags(q.weights)
    sgrad = d.s1 * q.dx + d.s2 * q.dy
    test = q.values + asm.delta * sgrad
    non_green = test.T @ W @ (sgrad + asm.medium.sigma_t * q.values)
    for edge in (e for e in asm._edges if d.s1 * e.normal[0] + d.s2 * e.normal[1] < 0):
        x1, x2, w, V = asm._edges[edge]
        non_green = non_green - (d.s1 * edge.normal[0] + d.s2 * edge.normal[1]) * (V.T @ sp.diags(w) @ V)
    assert np.allclose(asm.matrix(d).toarray(), non_green.toarray(), atol=1e-13)


@pytest.mark.parametrize("index", [1, 2, 9])
def test_constant_solution_reproduced(index):
    mesh = build_mesh(*UNIT, 16, 16)
    medium = Medium(1.0, 0.0)
    one = lambda x, y: np.ones_like(x)
    for d in quadruple(index):
        x = solve_direction(assemble_direction_system(mesh, d, medium, rhs=one, inflow=one))
        assert np.max(np.abs(x - 1.0)) <= 1e-10
    asm = TransportAssembler(mesh, medium)
    q = quadruple(index)
    loads = [asm.load(d, pointwise=np.ones(asm.quad.weights.size), inflow=one) for d in q]
    for x in asm.solve_quadruple(q, loads):
        assert np.max(np.abs(x - 1.0)) <= 1e-10


def test_zero_data_gives_zero():
    mesh = build_mesh(*UNIT, 8, 8)
    zero = lambda x, y: np.zeros_like(x)
    system = assemble_direction_system(mesh, quadruple(4)[1], Medium(0.3, 0.3), rhs=zero, inflow=zero)
    assert np.array_equal(solve_direction(system), np.zeros(mesh.n_nodes))


def test_residual_contract_recomputed_independently():
    mesh = build_mesh(*UNIT, 6, 5)
    medium = Medium(0.4, 2.0)
    f = lambda x, y: np.exp(x) * np.cos(2 * y)
    inflow = lambda x, y: 1 + x * y
    asm = TransportAssembler(mesh, medium)
    q = quadruple(11)
    loads = []
    for d in q:
        A_ref, b_ref = reference_system(mesh, d, medium, lambda x, y: 2 + x, inflow)
        loads.append((A_ref, b_ref))
    xs = asm.solve_quadruple(q, [b for _, b in loads])
    for (A_ref, b_ref), x in zip(loads, xs):
        assert np.linalg.norm(A_ref @ x - b_ref) / np.linalg.norm(b_ref) <= 1e-12
    system = assemble_direction_system(mesh, q[2], medium, rhs=f, inflow=inflow)
    x = solve_direction(system)
    A_ref, b_ref = reference_system(mesh, q[2], medium, f, inflow)
    assert np.linalg.norm(A_ref @ x - system.rhs) / np.linalg.norm(system.rhs) <= 1e-12


def test_mirror_similarity_on_4x4():
    mesh = build_mesh(*UNIT, 4, 4)
    asm = TransportAssembler(mesh, Medium(1.0, 1.0))
    q = quadruple(6)
    A1 = asm.matrix(q[0]).toarray()
    for d in q[1:]:
        perm = asm.mirrors[d.quadrant]
        assert np.allclose(asm.matrix(d).toarray(), A1[np.ix_(perm, perm)], atol=1e-15, rtol=1e-13)


def test_positivity_of_mean():
    mesh = build_mesh(*UNIT, 12, 12)
    rng = np.random.default_rng(4)
    asm = TransportAssembler(mesh, Medium(0.2, 0.8))
    for d in quadruple(2):
        src = rng.uniform(0, 1, asm.quad.weights.size)
        psi = rng.uniform(0, 1, mesh.n_nodes)
        b = asm.load(d, pointwise=src, nodal=psi, inflow=lambda x, y: rng.uniform(0, 1, x.shape))
        (x,) = asm.solve_quadruple([d], [b])
        assert mesh.integrate(x) / mesh.area >= -1e-10


def _problem2_direction_error(n, d):
    spec = problem2(0.1, 0.9)
    mesh = build_mesh(*UNIT, n, n)
    psi0, psi1, psi2 = spec.exact_moments
    ph, ss = spec.phase, spec.medium.sigma_s

    def rhs(x1, x2):
        scattered = ph.a0 * psi0(x1, x2) + ph.a1 * (d.s1 * psi1(x1, x2) + d.s2 * psi2(x1, x2))
        return ss * scattered + spec.source(x1, x2, d)

    system = assemble_direction_system(mesh, d, spec.medium, rhs=rhs, inflow=lambda x1, x2: spec.inflow(x1, x2, d))
    return mesh.l2_error(solve_direction(system), lambda x1, x2: spec.exact_intensity(x1, x2, d))


def test_problem2_direction_solve_converges_second_order():
    for d in quadruple(5):
        errs = [_problem2_direction_error(n, d) for n in (16, 32, 64)]
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert min(orders) >= 1.8, (d, errs)
        assert errs[-1] <= 1.0 * (1 / 64) ** 2  # C = O(1)


def test_weak_residual_of_exact_interpolant_is_second_order():
    spec = problem2(0.1, 0.9)
    d = quadruple(3)[0]
    res = []
    for n in (16, 32, 64):
        mesh = build_mesh(*UNIT, n, n)
        psi0, psi1, _ = spec.exact_moments
        rhs = lambda x1, x2: spec.medium.sigma_s * (psi0(x1, x2) + 0.5 * d.s1 * psi1(x1, x2)) + spec.source(x1, x2, d)
        system = assemble_direction_system(mesh, d, spec.medium, rhs=rhs, inflow=lambda x1, x2: spec.inflow(x1, x2, d))
        exact = mesh.interpolate(lambda x1, x2: spec.exact_intensity(x1, x2, d))
        interior = (mesh.x1 > 0) & (mesh.x1 < 1) & (mesh.x2 > 0) & (mesh.x2 < 1)
        r = (system.matrix @ exact - system.rhs)[interior] / (mesh.hx * mesh.hy)
        res.append(np.max(np.abs(r)))
    assert res[0] / res[1] > 3.5 and res[1] / res[2] > 3.5


def test_grazing_and_missing_inflow_rejected():
    mesh = build_mesh(*UNIT, 2, 2)
    one = lambda x, y: np.ones_like(x)
    with pytest.raises(ValueError):
        assemble_direction_system(mesh, Direction(0.0, 0.6, 0.8, 1), Medium(1, 0), rhs=one, inflow=one)
    with pytest.raises(ValueError):
        assemble_direction_system(mesh, quadruple(1)[0], Medium(1, 0), rhs=one, inflow=None)


def test_singular_system_reports_direction():
    system = assemble_direction_system(
        build_mesh(*UNIT, 2, 2), quadruple(1)[0], Medium(1, 0), rhs=lambda x, y: x, inflow=lambda x, y: x
    )
    system.matrix = sp.csc_matrix(system.matrix.shape)
    with pytest.raises(LinearSolveError) as info:
        solve_direction(system)
    assert info.value.direction.seq_index == 1
