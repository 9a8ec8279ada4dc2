"""Discretization: basis, projection, operator, limiter, time stepping."""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from relaxdg import chem, dg
from relaxdg.errors import PhysicsError
from relaxdg.model_problems import toy_relaxation_hierarchy

from test_chem import U_IN


def test_basis_orthonormality():
    x, w = leggauss(6)
    phi = dg.basis_values(x)
    gram = np.einsum("iq,jq,q->ij", phi, phi, w)
    np.testing.assert_allclose(gram, 2.0 * np.eye(3), atol=1e-14)


def test_basis_derivative_consistency():
    xi = np.linspace(-1.0, 1.0, 7)
    h = 1e-6
    fd = (dg.basis_values(xi + h) - dg.basis_values(xi - h)) / (2 * h)
    np.testing.assert_allclose(dg.basis_derivatives(xi), fd, rtol=1e-8, atol=1e-8)


def test_projection_exact_for_quadratics():
    mesh = dg.Mesh1D(0.0, 2.0, 5)

    def fn(x):
        return np.stack([1.0 + 2 * x - 0.5 * x * x, 3.0 * x * x], axis=-1)

    coeff = dg.project_function(fn, mesh)
    xi = np.linspace(-1.0, 1.0, 9)
    vals = dg.eval_at(coeff, dg.basis_values(xi))
    x = mesh.points(xi)
    np.testing.assert_allclose(vals, fn(x.ravel()).reshape(vals.shape),
                               rtol=1e-13, atol=1e-13)


def test_mesh_validation():
    with pytest.raises(ValueError):
        dg.Mesh1D(1.0, 0.0, 4)
    with pytest.raises(ValueError):
        dg.Mesh1D(0.0, 1.0, 1)
    with pytest.raises(NotImplementedError):
        dg.Mesh1D(0.0, 1.0, 4, periodic=False)


def test_traces_match_endpoint_evaluation(rng):
    coeff = rng.normal(size=(6, 3, 2))
    left, right = dg.cell_traces(coeff)
    np.testing.assert_allclose(left, dg.eval_at(coeff, dg.basis_values(
        np.array([-1.0])))[:, 0, :], rtol=1e-14)
    np.testing.assert_allclose(right, dg.eval_at(coeff, dg.basis_values(
        np.array([1.0])))[:, 0, :], rtol=1e-14)


def test_constant_field_zero_rate(toy):
    mesh = dg.Mesh1D(0.0, 1.0, 12)
    coeff = np.zeros((12, 3, 2))
    coeff[:, 0, :] = [2.0, 2.0]  # on the manifold so the source vanishes too
    st = dg.state_from_complex(np.ones(12, dtype=np.int8), coeff, toy)
    rc, rs, _ = dg.spatial_operator(st, mesh, toy)
    assert np.abs(rc).max() < 1e-13


def test_mixed_equilibrium_steady_state_toy(toy, rng):
    n = 24
    mesh = dg.Mesh1D(0.0, 1.0, n)
    theta = (rng.uniform(size=n) < 0.5).astype(np.int8)
    cc = np.zeros((n, 3, 2))
    cc[:, 0, :] = [1.7, 1.7]
    cs = np.zeros((n, 3, 1))
    cs[:, 0, 0] = 3.4
    st = dg.MixedDGState(theta, cc, cs)
    rc, rs, _ = dg.spatial_operator(st, mesh, toy)
    assert np.abs(rc[st.complex_mask]).max() == 0.0
    assert np.abs(rs[st.simple_mask]).max() == 0.0


def test_mixed_equilibrium_steady_state_o2(o2, rng):
    # constant equilibrium data straddling several model interfaces
    n = 16
    mesh = dg.Mesh1D(0.0, 1.0, n)
    theta = np.array([1, 1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 1],
                     dtype=np.int8)
    cc = np.zeros((n, 3, 5))
    cc[:, 0, :] = U_IN
    cs = np.zeros((n, 3, 4))
    cs[:, 0, :] = o2.project(U_IN)
    st = dg.MixedDGState(theta, cc, cs)
    rc, rs, _ = dg.spatial_operator(st, mesh, o2)
    # Zero only up to round-off at the flux scale: the pressure (~2e6 Pa)
    # dwarfs every conserved component, so the cancellation volume-minus-
    # surface leaves a few ulps of p/h behind.
    scale = np.abs(o2.flux(U_IN[None, :])).max() / mesh.h
    eps = np.finfo(np.float64).eps
    assert np.abs(rc[st.complex_mask]).max() < 64.0 * eps * scale
    assert np.abs(rs[st.simple_mask]).max() < 64.0 * eps * scale


def exact_rate_fields():
    a, b = 1.0, 0.5

    def state(x):
        u1 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
        u2 = 2.0 + 0.2 * np.cos(2 * np.pi * x)
        return np.stack([u1, u2], axis=-1)

    def rate(x):
        u1 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
        u2 = 2.0 + 0.2 * np.cos(2 * np.pi * x)
        du1 = 0.3 * 2 * np.pi * np.cos(2 * np.pi * x)
        du2 = -0.2 * 2 * np.pi * np.sin(2 * np.pi * x)
        dF1 = a * du2 + b * u1 * du1
        dF2 = a * du1 + b * u2 * du2
        r = 2.5
        return np.stack([-dF1 + r * (u2 - u1), -dF2 + r * (u1 - u2)], axis=-1)

    return state, rate


def test_operator_mean_rate_third_order(toy):
    state, rate = exact_rate_fields()
    errs = []
    for n in (20, 40, 80, 160):
        mesh = dg.Mesh1D(0.0, 1.0, n)
        coeff = dg.project_function(state, mesh)
        st = dg.state_from_complex(np.ones(n, dtype=np.int8), coeff, toy)
        rc, _, _ = dg.spatial_operator(st, mesh, toy)
        ref = dg.project_function(rate, mesh)
        errs.append(np.sqrt(np.sum((rc[:, 0, :] - ref[:, 0, :]) ** 2) * mesh.h))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() > 2.8


def linear_toy_exact(x, t):
    wp = 4.0 + 0.5 * np.sin(2 * np.pi * (x - t))
    wm = 0.3 * np.cos(2 * np.pi * (x + t)) * np.exp(-2.0 * t)
    return np.stack([0.5 * (wp + wm), 0.5 * (wp - wm)], axis=-1)


def evolve_complex(hier, n, T, limiter=False):
    mesh = dg.Mesh1D(0.0, 1.0, n)
    coeff = dg.project_function(lambda x: linear_toy_exact(x, 0.0), mesh)
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), coeff, hier)
    m = int(np.ceil(T / dg.stable_timestep(st, mesh, hier)))
    dt = T / m
    for _ in range(m):
        st, _ = dg.rk3_step(st, mesh, hier, dt, limiter=limiter)
    return st, mesh


def test_solution_third_order_with_relaxation():
    # advection-relaxation system with a closed-form solution through the
    # characteristic variables
    hier = toy_relaxation_hierarchy(advection=1.0, quad=0.0, rate=1.0)
    T = 0.4
    errs = []
    for n in (20, 40, 80):
        st, mesh = evolve_complex(hier, n, T)
        xq = mesh.points(dg.GAUSS_X)
        uh = dg.eval_at(st.coeff_c, dg.PHI)
        ue = linear_toy_exact(xq, T).reshape(uh.shape)
        errs.append(np.sqrt(0.5 * mesh.h * np.sum(
            dg.GAUSS_W[None, :, None] * (uh - ue) ** 2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() > 2.8


def test_rk3_taylor_and_identity():
    lam = -0.7
    y0 = np.array([1.3])
    dt = 0.05
    y1 = dg.ssp_rk3(y0, dt, lambda y: lam * y)
    z = lam * dt
    assert y1[0] == pytest.approx(y0[0] * (1 + z + z * z / 2 + z ** 3 / 6),
                                  rel=1e-14)
    rest = dg.ssp_rk3(y0, dt, lambda y: 0.0 * y)
    np.testing.assert_array_equal(rest, y0)
    # tuple states pass through the same combinator
    ya, yb = dg.ssp_rk3((y0, 2 * y0), dt, lambda y: (lam * y[0], lam * y[1]))
    assert ya[0] == pytest.approx(y1[0], rel=1e-14)
    assert yb[0] == pytest.approx(2 * y1[0], rel=1e-14)


def test_projected_moment_conservation_mixed(toy, rng):
    n = 48
    mesh = dg.Mesh1D(0.0, 1.0, n)
    theta = (rng.uniform(size=n) < 0.6).astype(np.int8)

    def bumpy(x):
        u1 = 2.0 + 0.5 * np.sin(2 * np.pi * x) + 0.3 * (x > 0.5)
        u2 = 2.2 + 0.4 * np.cos(4 * np.pi * x)
        return np.stack([u1, u2], axis=-1)

    coeff_c = dg.project_function(bumpy, mesh)
    coeff_s = np.einsum("njk,mk->njm", coeff_c, toy.projection)
    st = dg.MixedDGState(theta, coeff_c, coeff_s)
    p0 = st.projected_means(toy).sum(axis=0) * mesh.h
    dt = dg.stable_timestep(st, mesh, toy)
    for _ in range(60):
        st, _ = dg.rk3_step(st, mesh, toy, dt, limiter=True)
    p1 = st.projected_means(toy).sum(axis=0) * mesh.h
    np.testing.assert_allclose(p1, p0, rtol=1e-12)


def test_limiter_three_cell_formula(toy):
    mesh3 = dg.Mesh1D(0.0, 3.0, 3)
    cc = np.zeros((3, 3, 2))
    cc[:, 0, 0] = [1.0, 2.0, 2.5]
    cc[1, 1, 0] = 1.0
    cc[1, 2, 0] = 0.3
    cc[:, 0, 1] = 1.0
    st = dg.state_from_complex(np.ones(3, dtype=np.int8), cc, toy)
    lim = dg.minmod_limit(st, mesh3, toy)
    assert lim.coeff_c[1, 1, 0] == pytest.approx(0.5 / np.sqrt(3.0), rel=1e-14)
    assert lim.coeff_c[1, 2, 0] == 0.0
    assert lim.coeff_c[1, 0, 0] == 2.0
    # the untouched component keeps its (zero) slope and curvature
    assert lim.coeff_c[1, 1, 1] == 0.0


def test_limiter_keeps_smooth_linear_data(toy):
    # globally linear profiles have equal slopes and mean differences
    n = 8
    mesh = dg.Mesh1D(0.0, 1.0, n)
    cc = np.zeros((n, 3, 2))
    cc[:, 0, 0] = np.arange(n, dtype=float)
    cc[:, 1, 0] = (1.0 / np.sqrt(3.0)) * 0.5
    cc[:, 0, 1] = 5.0
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), cc, toy)
    lim = dg.minmod_limit(st, mesh, toy)
    inner = slice(1, n - 1)  # wrap cells see the periodic jump
    np.testing.assert_array_equal(lim.coeff_c[inner], cc[inner])


def test_limiter_mean_preservation_and_idempotence(toy, rng):
    n = 32
    mesh = dg.Mesh1D(0.0, 1.0, n)
    theta = (rng.uniform(size=n) < 0.5).astype(np.int8)
    cc = rng.normal(size=(n, 3, 2)) + np.array([3.0, 3.0])[None, None, :] * \
        (np.arange(3) == 0)[None, :, None]
    cs = np.einsum("njk,mk->njm", cc, toy.projection)
    st = dg.MixedDGState(theta, cc, cs)
    lim = dg.minmod_limit(st, mesh, toy)
    np.testing.assert_array_equal(lim.coeff_c[:, 0, :], cc[:, 0, :])
    np.testing.assert_array_equal(lim.coeff_s[:, 0, :], cs[:, 0, :])
    lim2 = dg.minmod_limit(lim, mesh, toy)
    np.testing.assert_array_equal(lim2.coeff_c, lim.coeff_c)
    np.testing.assert_array_equal(lim2.coeff_s, lim.coeff_s)


def test_tvb_threshold_bypasses_small_slopes(toy):
    n = 8
    mesh = dg.Mesh1D(0.0, 1.0, n)
    cc = np.zeros((n, 3, 2))
    cc[:, 0, :] = 2.0
    cc[3, 1, :] = 1e-4  # tiny wiggle at an extremum
    cc[3, 2, :] = 5e-5
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), cc, toy)
    strict = dg.minmod_limit(st, mesh, toy, tvb_m=0.0)
    assert strict.coeff_c[3, 1, 0] == 0.0
    relaxed = dg.minmod_limit(st, mesh, toy, tvb_m=100.0)
    np.testing.assert_array_equal(relaxed.coeff_c, cc)


def test_inadmissible_cell_flattened_then_fatal(o2):
    n = 4
    mesh = dg.Mesh1D(0.0, 1.0, n)
    cc = np.zeros((n, 3, 5))
    cc[:, 0, :] = U_IN
    # slope so large the quadrature states go unphysical, mean still fine
    cc[2, 1, :] = 40.0 * U_IN
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), cc, o2)
    rc, rs, info = dg.spatial_operator(st, mesh, o2)
    assert info["flattened_cells"] == [2]
    assert np.isfinite(rc).all()
    # an unphysical mean cannot be rescued
    cc[1, 0, :] = -U_IN
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), cc, o2)
    with pytest.raises(PhysicsError) as err:
        dg.spatial_operator(st, mesh, o2)
    assert 1 in err.value.cells


def test_stable_timestep_source_cap():
    mesh = dg.Mesh1D(0.0, 1.0, 10)
    gentle = toy_relaxation_hierarchy(advection=1.0, quad=0.0, rate=1e-3)
    stiff = toy_relaxation_hierarchy(advection=1.0, quad=0.0, rate=1e6)
    coeff = np.zeros((10, 3, 2))
    coeff[:, 0, :] = 2.0
    st = dg.state_from_complex(np.ones(10, dtype=np.int8), coeff, gentle)
    dt_adv = dg.stable_timestep(st, mesh, gentle)
    assert dt_adv == pytest.approx(0.1 * mesh.h / (1.1 * 1.0), rel=1e-12)
    st = dg.state_from_complex(np.ones(10, dtype=np.int8), coeff, stiff)
    dt_stiff = dg.stable_timestep(st, mesh, stiff)
    # source jacobian norm is 2*rate, cap is 0.5 / (2e6)
    assert dt_stiff == pytest.approx(0.25e-6, rel=1e-12)


def test_o2_two_cell_coupling_conservation(o2):
    # periodic complex/simple pair exchanging through both interfaces
    mesh = dg.Mesh1D(0.0, 0.01, 2)
    theta = np.array([1, 0], dtype=np.int8)
    cc = np.zeros((2, 3, 5))
    cc[:, 0, :] = U_IN
    cc[0, 1, :] = 0.01 * U_IN  # small gradient drives an exchange
    cs = np.zeros((2, 3, 4))
    cs[:, 0, :] = o2.project(U_IN)
    st = dg.MixedDGState(theta, cc, cs)
    p0 = st.projected_means(o2).sum(axis=0) * mesh.h
    dt = dg.stable_timestep(st, mesh, o2)
    for _ in range(20):
        st, _ = dg.rk3_step(st, mesh, o2, dt, limiter=False)
    means = st.projected_means(o2)
    p1 = means.sum(axis=0) * mesh.h
    # Signed moments (momentum, offset-calorics energy) can be orders of
    # magnitude below the summands they cancel from, so measure the drift
    # against the moment's own mass rather than its signed value.
    scale = np.abs(means).sum(axis=0) * mesh.h + np.abs(p0)
    assert (np.abs(p1 - p0) <= 1e-13 * scale).all()
