"""Incident fields, source sums, and interior/exterior field evaluation."""

import numpy as np
import pytest
from scipy.special import hankel1

from cloakforge.bem2d import (
    Medium,
    adjoint_incident,
    assemble_system,
    circle_mesh,
    eval_field,
    field_operator,
    incident_plane,
    incident_rhs,
    mie_reference,
    near_boundary_flags,
    plane_wave,
    solve_boundary,
    vacuum,
)
from cloakforge.bem2d.mesh import DIELECTRIC, PEC


def test_incident_plane_values_and_gradient():
    k = 1.7
    d = np.array([0.6, 0.8])
    rng = np.random.default_rng(61)
    x = rng.normal(size=(20, 2)) * 3.0
    u, g = incident_plane(x, d, k)
    np.testing.assert_allclose(u, np.exp(1j * k * (x @ d)), rtol=1e-14)
    h = 1e-6
    for ax in range(2):
        e = np.zeros(2)
        e[ax] = h
        fd = (incident_plane(x + e, d, k)[0] - incident_plane(x - e, d, k)[0]) / (2 * h)
        np.testing.assert_allclose(g[:, ax], fd, atol=1e-7)


def test_plane_wave_requires_unit_direction():
    with pytest.raises(ValueError, match="unit"):
        plane_wave(1.0, (1.0, 1.0))
    with pytest.raises(ValueError, match="unit"):
        incident_plane(np.zeros((1, 2)), (0.5, 0.0), 1.0)


def test_adjoint_incident_matches_direct_sum():
    rng = np.random.default_rng(67)
    k = 0.9
    obs = rng.uniform(-1, 1, size=(30, 2))
    targets = rng.uniform(4, 6, size=(25, 2))
    w = rng.normal(size=30) + 1j * rng.normal(size=30)
    ref = np.zeros(25, dtype=complex)
    for key, wm in zip(obs, w):
        r = np.linalg.norm(targets - key, axis=1)
        ref += 0.25j * hankel1(0, k * r) * wm
    vals = adjoint_incident(targets, obs, w, k)
    np.testing.assert_allclose(vals, ref, rtol=1e-12)
    # compressed backend on the well-separated sets
    vals_aca = adjoint_incident(targets, obs, w, k, backend="aca", tol=1e-8)
    np.testing.assert_allclose(vals_aca, ref, rtol=1e-6)


def test_adjoint_incident_gradient_matches_finite_differences():
    rng = np.random.default_rng(71)
    k = 1.1
    obs = rng.uniform(-1, 1, size=(10, 2))
    w = rng.normal(size=10) + 1j * rng.normal(size=10)
    x0 = np.array([[3.0, 2.0]])
    _, g = adjoint_incident(x0, obs, w, k, grad=True)
    h = 1e-6
    for ax in range(2):
        e = np.zeros(2)
        e[ax] = h
        fd = (adjoint_incident(x0 + e, obs, w, k)[0]
              - adjoint_incident(x0 - e, obs, w, k)[0]) / (2 * h)
        assert abs(g[0, ax] - fd) < 1e-7


def test_adjoint_incident_input_validation():
    obs = np.zeros((3, 2))
    with pytest.raises(ValueError, match="one weight"):
        adjoint_incident(np.ones((2, 2)), obs, np.ones(2), 1.0)
    with pytest.raises(ValueError, match="singular"):
        adjoint_incident(obs[:1], obs, np.ones(3), 1.0)
    with pytest.raises(ValueError, match="unknown backend"):
        adjoint_incident(np.ones((2, 2)), obs, np.ones(3), 1.0, backend="fmm")
    with pytest.raises(ValueError, match="dense"):
        adjoint_incident(np.ones((2, 2)), obs, np.ones(3), 1.0,
                         backend="aca", grad=True)


def test_near_boundary_flags_by_distance():
    mesh = circle_mesh(48, 1.0)
    h = mesh.lengths[0]
    pts = np.array([
        [1.0 + 0.25 * h, 0.0],   # quarter element away: near
        [1.0 + 0.75 * h, 0.0],   # beyond half an element: clear
        [0.0, 0.0],              # deep interior: clear
    ])
    flags = near_boundary_flags(mesh, pts)
    assert flags.tolist() == [True, False, False]


@pytest.fixture(scope="module")
def solved_pec():
    m1 = vacuum(2.0)
    mesh = circle_mesh(96, 1.0, (0.0, 0.0), tag=PEC)
    system = assemble_system(mesh, m1, backend="dense")
    inc = plane_wave(m1.k, (1.0, 0.0))
    sol = solve_boundary(system, incident_rhs(system, inc))
    return mesh, m1, inc, sol


def test_field_gradient_matches_finite_differences(solved_pec):
    mesh, m1, inc, sol = solved_pec
    pts = np.array([[1.8, 0.3], [-1.5, 1.1]])
    f = eval_field(sol, mesh, m1, pts, which="both", domain="omega1",
                   incident=inc)
    h = 1e-5
    for ax in range(2):
        e = np.zeros(2)
        e[ax] = h
        up = eval_field(sol, mesh, m1, pts + e, domain="omega1", incident=inc)
        dn = eval_field(sol, mesh, m1, pts - e, domain="omega1", incident=inc)
        fd = (up.values - dn.values) / (2 * h)
        np.testing.assert_allclose(f.gradients[:, ax], fd, atol=1e-8)


def test_hmatrix_field_backend_matches_dense(solved_pec):
    mesh, m1, inc, sol = solved_pec
    th = np.linspace(0.0, 2.0 * np.pi, 41)[:-1]
    ring = np.c_[2.0 * np.cos(th), 2.0 * np.sin(th)]
    dense = eval_field(sol, mesh, m1, ring, domain="omega1", incident=inc)
    op = field_operator(mesh, m1, ring, domain="omega1", n_min=16, tol=1e-7)
    fast = eval_field(sol, mesh, m1, ring, domain="omega1", incident=inc,
                      backend="hmatrix", operator=op)
    rel = np.linalg.norm(fast.values - dense.values) / np.linalg.norm(dense.values)
    assert rel < 1e-6
    # one operator serves any solution vector on the mesh
    other = eval_field(sol, mesh, m1, ring, domain="omega1",
                       backend="hmatrix", operator=op)
    np.testing.assert_allclose(other.values, fast.values - inc(ring)[0],
                               rtol=0, atol=1e-12)


def test_interior_field_matches_series():
    m1 = vacuum(2.0)
    m2 = Medium(eps=2.5, mu=1.2, omega=2.0)
    mesh = circle_mesh(128, 1.0, (0.0, 0.0), tag=DIELECTRIC)
    system = assemble_system(mesh, (m1, m2), backend="dense")
    inc = plane_wave(m1.k, (1.0, 0.0))
    sol = solve_boundary(system, incident_rhs(system, inc))
    rng = np.random.default_rng(73)
    pts = rng.uniform(-0.55, 0.55, size=(20, 2))
    f = eval_field(sol, mesh, (m1, m2), pts, domain="omega2")
    ref = mie_reference("dielectric", 1.0, (m1, m2), pts)
    assert np.linalg.norm(f.values - ref) / np.linalg.norm(ref) < 1e-3
    # the near flag marks nothing this deep inside
    assert not f.near.any()


def test_eval_field_input_validation(solved_pec):
    mesh, m1, inc, sol = solved_pec
    pts = np.array([[2.0, 0.0]])
    with pytest.raises(ValueError, match="unknown which"):
        eval_field(sol, mesh, m1, pts, which="curl")
    with pytest.raises(ValueError, match="unknown domain"):
        eval_field(sol, mesh, m1, pts, domain="omega3")
    with pytest.raises(ValueError, match="unknown backend"):
        eval_field(sol, mesh, m1, pts, backend="fmm")
    with pytest.raises(ValueError, match="interface"):
        eval_field(sol, mesh, m1, pts, domain="omega2")
    with pytest.raises(ValueError, match="dense"):
        eval_field(sol, mesh, m1, pts, which="gradient", backend="hmatrix")
