"""Tests for the model-adaptation indicators and switch rule."""

import numpy as np
import pytest

from relaxdg import adapt, chem, dg, reconstruct
from relaxdg.errors import ConfigError
from relaxdg.model_problems import toy_relaxation_hierarchy

from test_chem import U_IN

CFG = adapt.AdaptConfig(tau_r=0.16, tau_kappa=0.0016, f_eps=0.25,
                        eps_over_nu=1.0)


@pytest.fixture(scope="module")
def skew():
    return toy_relaxation_hierarchy(advection=1.0, quad=0.8, rate=2.0,
                                    quad2=0.1)


def _bump(x):
    um = 1.0 + 0.05 * np.sin(2 * np.pi * x) + 0.8 * np.exp(
        -200 * (x - 0.5) ** 2)
    return np.stack([0.5 * um, 0.5 * um], axis=-1)


def _frozen_slab(mesh, hier, theta, coeff_c, coeff_s, dt=1e-3):
    """Slab with identical end states and zero rates."""
    n = mesh.n_cells
    return reconstruct.build_slab(
        mesh, hier, theta, coeff_c, coeff_s, coeff_c, coeff_s,
        np.zeros((n, 3, hier.dim_complex)),
        np.zeros((n, 3, hier.dim_simple)), 0.0, dt)


def test_config_validation():
    with pytest.raises(ConfigError):
        adapt.AdaptConfig(tau_r=0.0, tau_kappa=1.0)
    with pytest.raises(ConfigError):
        adapt.AdaptConfig(tau_r=1.0, tau_kappa=-1.0)
    with pytest.raises(ConfigError):
        adapt.AdaptConfig(tau_r=1.0, tau_kappa=1.0, f_eps=1.0)
    with pytest.raises(ConfigError):
        adapt.AdaptConfig(tau_r=1.0, tau_kappa=1.0, eps_over_nu=0.0)
    with pytest.raises(ConfigError):
        adapt.AdaptConfig(tau_r=1.0, tau_kappa=1.0, min_patch=0)


def test_patch_rules():
    i8 = np.int8
    np.testing.assert_array_equal(
        adapt.patch_postprocess(np.array([1, 0, 1], dtype=i8)), [1, 1, 1])
    np.testing.assert_array_equal(
        adapt.patch_postprocess(np.array([1, 0, 0, 1], dtype=i8)),
        [1, 0, 0, 1])
    # wrap-around run of length 2 is one run, long enough
    np.testing.assert_array_equal(
        adapt.patch_postprocess(np.array([0, 1, 1, 0], dtype=i8)),
        [0, 1, 1, 0])
    np.testing.assert_array_equal(
        adapt.patch_postprocess(np.array([0, 1, 1, 1], dtype=i8)),
        [1, 1, 1, 1])
    all_simple = np.zeros(5, dtype=i8)
    np.testing.assert_array_equal(adapt.patch_postprocess(all_simple),
                                  all_simple)
    np.testing.assert_array_equal(
        adapt.patch_postprocess(np.array([1, 0, 0, 1, 0, 0], dtype=i8),
                                min_patch=3), [1, 1, 1, 1, 1, 1])


def test_zero_runs_wrap():
    runs = adapt._zero_runs(np.array([0, 0, 1, 0], dtype=np.int8))
    assert sorted(runs) == [(3, 3)]
    assert adapt._zero_runs(np.zeros(4, dtype=np.int8)) == [(0, 4)]
    assert adapt._zero_runs(np.ones(4, dtype=np.int8)) == []


def test_algorithm1_branches():
    theta = np.array([1, 0, 1], dtype=np.int8)
    ms = np.array([np.nan, 0.2, np.nan])
    mc = np.array([0.03, np.nan, 0.05])
    kappa = np.array([0.001, np.nan, 0.001])
    out = adapt.algorithm1_update(theta, ms, mc, kappa, CFG)
    np.testing.assert_array_equal(out, [0, 1, 1])

    # kappa blocks coarsening even with a small residual indicator
    out = adapt.algorithm1_update(
        np.array([1], dtype=np.int8), np.array([np.nan]), np.array([0.01]),
        np.array([0.01]), CFG)
    np.testing.assert_array_equal(out, [1])
    # non-finite entries behave as +inf
    out = adapt.algorithm1_update(
        np.array([1, 0], dtype=np.int8), np.array([np.nan, np.nan]),
        np.array([np.inf, np.nan]), np.array([0.0, np.nan]), CFG)
    np.testing.assert_array_equal(out, [1, 1])


def test_algorithm1_hysteresis_and_idempotence():
    # a freshly coarsened cell cannot re-refine until the indicator climbs
    # past tau_r, not merely past the coarsening threshold f_eps*tau_r
    theta = np.array([1], dtype=np.int8)
    coarsened = adapt.algorithm1_update(theta, np.array([np.nan]),
                                        np.array([0.03]), np.array([0.001]),
                                        CFG)
    np.testing.assert_array_equal(coarsened, [0])
    stays = adapt.algorithm1_update(coarsened, np.array([0.1]),
                                    np.array([np.nan]), np.array([np.nan]),
                                    CFG)
    np.testing.assert_array_equal(stays, [0])

    theta = np.array([1, 0, 1, 0], dtype=np.int8)
    ms = np.array([np.nan, 0.1, np.nan, 0.1])
    mc = np.array([0.05, np.nan, 0.8, np.nan])
    kappa = np.array([0.01, np.nan, 0.001, np.nan])
    once = adapt.algorithm1_update(theta, ms, mc, kappa, CFG)
    np.testing.assert_array_equal(once, theta)
    twice = adapt.algorithm1_update(once, ms, mc, kappa, CFG)
    np.testing.assert_array_equal(twice, once)


def test_convert_projection_and_moments(skew, rng):
    mesh = dg.Mesh1D(0.0, 1.0, 8)
    n = mesh.n_cells
    coeff_c = dg.project_function(_bump, mesh)
    coeff_c += 0.02 * rng.normal(size=coeff_c.shape)
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=coeff_c, coeff_s=np.zeros((n, 3, 1)))
    new = np.array([1, 1, 0, 0, 1, 1, 0, 0], dtype=np.int8)
    out, applied, failed = adapt.convert_models(state, new, skew)
    assert failed == []
    np.testing.assert_array_equal(applied, new)
    # modal projection equals nodal projection (linearity)
    nodal = dg.eval_at(coeff_c[2:4], dg.PHI) @ skew.projection.T
    np.testing.assert_allclose(dg.eval_at(out.coeff_s[2:4], dg.PHI), nodal,
                               rtol=1e-13, atol=1e-15)
    # P-moments of the global field unchanged
    before = coeff_c[:, 0] @ skew.projection.T
    after = out.coeff_c[:, 0] @ skew.projection.T + out.coeff_s[:, 0]
    np.testing.assert_allclose(after, before, rtol=1e-13)


def test_convert_roundtrip_on_manifold(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 6)
    n = mesh.n_cells
    coeff_s = dg.project_function(
        lambda x: (1.0 + 0.4 * np.sin(2 * np.pi * x))[..., None], mesh)
    state = dg.MixedDGState(theta=np.zeros(n, dtype=np.int8),
                            coeff_c=np.zeros((n, 3, 2)), coeff_s=coeff_s)
    up, _, f1 = adapt.convert_models(state, np.ones(n, dtype=np.int8), skew)
    down, _, f2 = adapt.convert_models(up, np.zeros(n, dtype=np.int8), skew)
    assert f1 == [] and f2 == []
    np.testing.assert_allclose(down.coeff_s, coeff_s, rtol=1e-12, atol=1e-15)


def test_convert_lift_failure_reverts(o2):
    n = 6
    u0 = chem.project(U_IN[None, :])[0]
    coeff_s = np.zeros((n, 3, 4))
    coeff_s[:, 0] = u0
    coeff_s[2, 0, 3] = -1.0e7  # negative temperature, lift must fail
    state = dg.MixedDGState(theta=np.zeros(n, dtype=np.int8),
                            coeff_c=np.zeros((n, 3, 5)), coeff_s=coeff_s)
    out, applied, failed = adapt.convert_models(
        state, np.ones(n, dtype=np.int8), o2)
    assert failed == [2]
    assert applied[2] == 0
    assert applied.sum() == n - 1
    # the failed cell's data is untouched
    np.testing.assert_array_equal(out.coeff_s[2], coeff_s[2])


def test_indicator_ms_zero_for_symmetric_toy(toy):
    mesh = dg.Mesh1D(0.0, 1.0, 8)
    n = mesh.n_cells
    coeff_s = dg.project_function(
        lambda x: (1.0 + 0.3 * np.sin(2 * np.pi * x))[..., None], mesh)
    slab = _frozen_slab(mesh, toy, np.zeros(n, dtype=np.int8),
                        np.zeros((n, 3, 2)), coeff_s)
    cells, ms = adapt.indicator_Ms(slab, CFG)
    assert cells.size == n
    np.testing.assert_array_equal(ms, 0.0)


def test_indicator_quadrature_closed_form(toy):
    # constant weighted integrand c gives indicator sqrt(eps/nu)*c, and
    # doubling the residual doubles the indicator
    mesh = dg.Mesh1D(0.0, 1.0, 4)
    n = mesh.n_cells
    coeff_s = np.full((n, 3, 1), 0.0)
    coeff_s[:, 0, 0] = 2.0
    slab = _frozen_slab(mesh, toy, np.zeros(n, dtype=np.int8),
                        np.zeros((n, 3, 2)), coeff_s)
    out = reconstruct.residual_simple(slab)
    vec = np.array([0.3, -0.4])
    out["R_eps"] = np.broadcast_to(vec, out["R_eps"].shape).copy()
    cfg = adapt.AdaptConfig(tau_r=1.0, tau_kappa=1.0, eps_over_nu=0.7)
    _, ms = adapt.indicator_Ms(slab, cfg, residuals=out)
    np.testing.assert_allclose(ms, np.sqrt(0.7) * 0.5, rtol=1e-13)

    out2 = dict(out)
    out2["R_eps"] = 2.0 * out["R_eps"]
    _, ms2 = adapt.indicator_Ms(slab, cfg, residuals=out2)
    np.testing.assert_allclose(ms2, 2.0 * ms, rtol=1e-13)


def test_coarsening_residual_identities(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 10)
    n = mesh.n_cells
    coeff_c = dg.project_function(_bump, mesh)
    slab = _frozen_slab(mesh, skew, np.ones(n, dtype=np.int8), coeff_c,
                        np.zeros((n, 3, 1)))
    cells, lifted, resid, ok = adapt.coarsening_residual(slab)
    assert ok.all()
    assert np.abs(resid).max() > 0.0
    proj = np.einsum("cplij,cplj->cpli", np.broadcast_to(
        skew.projection, resid.shape[:3] + skew.projection.shape), resid)
    assert np.abs(proj).max() <= 1e-12

    # spatially constant projected data has zero coarsening residual
    flat_c = np.zeros((n, 3, 2))
    flat_c[:, 0] = [0.8, 0.6]
    slab2 = _frozen_slab(mesh, skew, np.ones(n, dtype=np.int8), flat_c,
                         np.zeros((n, 3, 1)))
    _, _, resid2, ok2 = adapt.coarsening_residual(slab2)
    assert ok2.all()
    np.testing.assert_array_equal(resid2, 0.0)


def test_coarsening_matches_simple_indicator_on_matched_inputs(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 16)
    n = mesh.n_cells
    coeff_c = dg.project_function(_bump, mesh)
    coeff_s = coeff_c @ skew.projection.T
    slab_c = _frozen_slab(mesh, skew, np.ones(n, dtype=np.int8), coeff_c,
                          np.zeros((n, 3, 1)))
    slab_s = _frozen_slab(mesh, skew, np.zeros(n, dtype=np.int8),
                          np.zeros((n, 3, 2)), coeff_s)
    _, mc, ok = adapt.indicator_Mc(slab_c, CFG)
    _, ms = adapt.indicator_Ms(slab_s, CFG)
    assert ok.all()
    np.testing.assert_allclose(mc, ms, rtol=1e-12, atol=1e-15)


def test_coarsening_distance_toy_exact(toy):
    mesh = dg.Mesh1D(0.0, 1.0, 6)
    n = mesh.n_cells
    dt = 0.01
    coeff_c = dg.project_function(_bump, mesh)
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=coeff_c, coeff_s=np.zeros((n, 3, 1)))
    cells, kappa = adapt.coarsening_distance(state, toy, dt)
    np.testing.assert_array_equal(kappa, 0.0)

    # kernel-direction perturbation of size delta: the distance is exactly
    # proportional to delta for the quadratic entropy
    deltas = np.array([1e-4, 1e-3, 1e-2])
    vals = []
    for d in deltas:
        pert = state.copy()
        pert.coeff_c[:, 0] += d * np.array([1.0, -1.0])
        vals.append(adapt.coarsening_distance(pert, toy, dt)[1].max())
    vals = np.array(vals)
    slopes = np.diff(np.log(vals)) / np.diff(np.log(deltas))
    np.testing.assert_allclose(slopes, 1.0, rtol=1e-8)
    np.testing.assert_allclose(vals[2], np.sqrt(1e-4 / dt), rtol=1e-8)


def test_coarsening_distance_o2(o2):
    n, dt = 4, 1e-7
    coeff_c = np.zeros((n, 3, 5))
    coeff_c[:, 0] = U_IN
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=coeff_c, coeff_s=np.zeros((n, 3, 4)))
    _, kappa = adapt.coarsening_distance(state, o2, dt)
    assert kappa.max() < 0.0016  # equilibrium plateau is coarsenable

    # off-equilibrium state at the same conserved projection
    pert = state.copy()
    pert.coeff_c = coeff_c.copy()
    pert.coeff_c[:, 0, 0] += 1e-3
    pert.coeff_c[:, 0, 1] -= 1e-3
    _, kappa2 = adapt.coarsening_distance(pert, o2, dt)
    assert kappa2.min() > 0.0016


def test_coarsening_distance_lift_failure(o2):
    n, dt = 4, 1e-7
    coeff_c = np.zeros((n, 3, 5))
    coeff_c[:, 0] = U_IN
    coeff_c[1, 0, 1] = -2e-2  # projected oxygen density becomes negative
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=coeff_c, coeff_s=np.zeros((n, 3, 4)))
    cells, kappa = adapt.coarsening_distance(state, o2, dt)
    assert np.isinf(kappa[1])
    assert np.isfinite(kappa[[0, 2, 3]]).all()


def test_adapt_step_full_cycle(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 16)
    n = mesh.n_cells
    coeff_c = dg.project_function(_bump, mesh)
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=coeff_c, coeff_s=np.zeros((n, 3, 1)))
    mmap = adapt.ModelMap.initial(n)
    cfg = adapt.AdaptConfig(tau_r=1.0, tau_kappa=1.0, f_eps=0.25,
                            eps_over_nu=1.0)
    dt = 0.02 * mesh.h
    old = state.copy()
    state, _ = dg.rk3_step(state, mesh, skew, dt, limiter=False)
    rate = dg.spatial_operator(state, mesh, skew)[:2]
    slab = reconstruct.slab_from_state(mesh, skew, old, state, rate, 0.0, dt)
    advanced = state.copy()
    state, mmap, info = adapt.adapt_step(state, mmap, slab, cfg)

    assert info["coarsened"].size > 0
    assert mmap.patch_ok(cfg.min_patch)
    assert (mmap.theta[6:10] == 1).all()  # the bump stays complex
    assert (mmap.switches == (mmap.theta == 0)).all()
    assert np.array_equal(state.theta, mmap.theta)
    # coarsened cells now carry simple data with the projected means
    co = info["coarsened"]
    np.testing.assert_allclose(
        state.coeff_s[co, 0],
        advanced.coeff_c[co, 0] @ skew.projection.T, rtol=1e-12)

    # an aggressive refinement tolerance flips every simple cell back
    old = state.copy()
    state, _ = dg.rk3_step(state, mesh, skew, dt, limiter=False)
    rate = dg.spatial_operator(state, mesh, skew)[:2]
    slab = reconstruct.slab_from_state(mesh, skew, old, state, rate, dt, dt)
    cfg2 = adapt.AdaptConfig(tau_r=1e-12, tau_kappa=1e-12, f_eps=0.25)
    state, mmap2, info2 = adapt.adapt_step(state, mmap, slab, cfg2)
    assert (mmap2.theta == 1).all()
    np.testing.assert_array_equal(info2["refined"], co)
    assert (mmap2.switches[co] == 2).all()
    assert info2["refine_failed"] == []


def test_adapt_step_rejects_mismatched_map(toy):
    n = 4
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=np.zeros((n, 3, 2)),
                            coeff_s=np.zeros((n, 3, 1)))
    mmap = adapt.ModelMap.initial(n)
    mmap.theta = np.zeros(n, dtype=np.int8)
    slab = _frozen_slab(dg.Mesh1D(0.0, 1.0, n), toy, state.theta,
                        state.coeff_c, state.coeff_s)
    with pytest.raises(ValueError):
        adapt.adapt_step(state, mmap, slab, CFG)
