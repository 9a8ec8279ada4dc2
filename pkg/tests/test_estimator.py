"""Tests for the slab records and the assembled global error bound."""

import dataclasses

import numpy as np
import pytest

from relaxdg import adapt, dg, estimator, hierarchy, reconstruct
from relaxdg.errors import ReportError
from relaxdg.model_problems import toy_relaxation_hierarchy

from test_chem import U_IN


@pytest.fixture(scope="module")
def skew():
    return toy_relaxation_hierarchy(advection=1.0, quad=0.8, rate=2.0,
                                    quad2=0.1)


def _bump(x):
    um = 1.0 + 0.05 * np.sin(2 * np.pi * x) + 0.8 * np.exp(
        -200 * (x - 0.5) ** 2)
    return np.stack([0.5 * um, 0.5 * um], axis=-1)


def _advance(state, mesh, hier, dt, t0):
    old = state.copy()
    new, _ = dg.rk3_step(state, mesh, hier, dt, limiter=False)
    rate = dg.spatial_operator(new, mesh, hier)[:2]
    slab = reconstruct.slab_from_state(mesh, hier, old, new, rate, t0, dt)
    return new, slab


def _zero_record(index, t0, dt):
    return estimator.SlabRecord(index, t0, dt, *([0.0] * 9))


def _toy_constants():
    return hierarchy.HessianConstants(1.0, 1.0, 0.8, 0.0)


def test_exact_solution_gives_vanishing_bound():
    a = 0.8
    toy0 = toy_relaxation_hierarchy(advection=a, quad=0.0, rate=0.0)
    mesh = dg.Mesh1D(0.0, 1.0, 5)
    n, h = mesh.n_cells, mesh.h
    dt = 0.01
    C, L = 1.7, 0.4
    centers = mesh.centers()

    def modal(t):
        B = np.zeros((n, 4, 2))
        val = 0.5 * (C + L * (centers - a * t))
        B[:, 0, 0] = B[:, 0, 1] = val
        B[:, 1, 0] = B[:, 1, 1] = 0.5 * L * (h / 2.0) / np.sqrt(3.0)
        return B

    Bdot = np.zeros((n, 4, 2))
    Bdot[:, 0, :] = -0.5 * L * a
    slab = reconstruct.SlabReconstruction(
        mesh=mesh, hier=toy0, theta=np.ones(n, dtype=np.int8), t0=0.0,
        dt=dt, herm_c=reconstruct._hermite(modal(0.0), modal(dt), Bdot, dt),
        herm_s=(np.zeros((n, 4, 1)),) * 3)
    rec = estimator.slab_record(slab, 1.0, index=0)
    assert rec.d_c < 1e-26
    assert rec.d_s == 0.0 and rec.ms_term == 0.0
    assert rec.gamma_mismatch == 0.0
    rep = estimator.assemble_bound([rec], 0.0, _toy_constants(), nu=1.0,
                                   proj_norm_sq=2.0)
    assert rep.rhs[0] < 1e-24

    # exactly zero ingredients give an exactly zero bound
    rep0 = estimator.assemble_bound([_zero_record(0, 0.0, dt)], 0.0,
                                    _toy_constants(), 1.0, 2.0)
    assert rep0.rhs[0] == 0.0


def test_residual_scaling_quadruples_integral_terms(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 12)
    n = mesh.n_cells
    coeff_s = dg.project_function(
        lambda x: (1.0 + 0.3 * np.sin(2 * np.pi * x))[..., None], mesh)
    state = dg.MixedDGState(theta=np.zeros(n, dtype=np.int8),
                            coeff_c=np.zeros((n, 3, 2)), coeff_s=coeff_s)
    _, slab = _advance(state, mesh, skew, 0.001, 0.0)
    out = reconstruct.residual_simple(slab)
    rec = estimator.slab_record(slab, 1.3, 0, residuals_s=out)
    out2 = dict(out)
    for key in ("r_s", "R_s", "R_delta", "R_eps"):
        out2[key] = 2.0 * out[key]
    rec2 = estimator.slab_record(slab, 1.3, 0, residuals_s=out2)
    assert rec2.d_s == 4.0 * rec.d_s
    assert rec2.ms_term == 4.0 * rec.ms_term
    assert rec.d_s > 0.0 and rec.ms_term > 0.0
    # solution-dependent pieces are untouched; the equilibrium growth
    # constant tracks the modeling residual linearly
    assert rec2.sup_dxm == rec.sup_dxm
    assert rec2.sup_r_eps == 2.0 * rec.sup_r_eps
    assert rec2.d_c == rec.d_c == 0.0


def test_assemble_rejects_missing_and_inconsistent_records():
    r = [_zero_record(0, 0.0, 0.1), _zero_record(1, 0.1, 0.1),
         _zero_record(2, 0.2, 0.1)]
    consts = _toy_constants()
    with pytest.raises(ReportError, match=r"missing stored slabs: \[1\]"):
        estimator.assemble_bound([r[0], r[2]], 0.0, consts, 1.0, 2.0)
    with pytest.raises(ReportError, match="duplicate"):
        estimator.assemble_bound([r[0], r[0], r[1]], 0.0, consts, 1.0, 2.0)
    bad = [_zero_record(0, 0.0, 0.1), _zero_record(1, 0.15, 0.1)]
    with pytest.raises(ReportError, match="does not continue"):
        estimator.assemble_bound(bad, 0.0, consts, 1.0, 2.0)
    with pytest.raises(ReportError, match="before requested"):
        estimator.assemble_bound(r, 0.0, consts, 1.0, 2.0, t=0.5)
    rep = estimator.assemble_bound(r, 0.0, consts, 1.0, 2.0, t=0.2)
    assert rep.times.size == 2


def test_bound_monotone_and_nonnegative(skew, rng):
    mesh = dg.Mesh1D(0.0, 1.0, 16)
    n = mesh.n_cells
    theta = np.ones(n, dtype=np.int8)
    theta[:5] = 0
    coeff_c = dg.project_function(_bump, mesh)
    coeff_c += 0.01 * rng.normal(size=coeff_c.shape)
    state = dg.MixedDGState(theta=theta, coeff_c=coeff_c,
                            coeff_s=coeff_c @ skew.projection.T)
    dt = 0.02 * mesh.h
    records = []
    t = 0.0
    for k in range(6):
        state, slab = _advance(state, mesh, skew, dt, t)
        records.append(estimator.slab_record(slab, 1.0, index=k))
        t += dt
    I0 = 3e-9
    rep = estimator.assemble_bound(records, I0, _toy_constants(), 1.0, 2.0)
    assert rep.times.size == 6
    for arr in (rep.d_c, rep.d_s, rep.ms_term, rep.rhs):
        assert (arr >= 0.0).all()
        assert (np.diff(arr) >= 0.0).all()
    assert (np.diff(rep.g_c) >= 0.0).all()
    assert (np.diff(rep.g_s) >= 0.0).all()
    assert (rep.gamma_mismatch > 0.0).all()
    assert np.isfinite(rep.log_rhs).all()


def test_initial_term_zero_for_exactly_represented_data(toy):
    mesh = dg.Mesh1D(0.0, 1.0, 7)
    n, h = mesh.n_cells, mesh.h
    centers = mesh.centers()

    def exact(x):
        val = 1.0 + 0.2 * (x - 0.5) ** 2
        return np.stack([0.6 * val, 0.4 * val], axis=-1)

    # exact quadratic data written directly in modal form
    coeff_c = np.zeros((n, 3, 2))
    for i in range(n):
        xc = centers[i]
        a0 = 1.0 + 0.2 * (xc - 0.5) ** 2 + 0.2 * (h / 2.0) ** 2 / 3.0
        a1 = 0.4 * (xc - 0.5) * (h / 2.0) / np.sqrt(3.0)
        a2 = 0.2 * (h / 2.0) ** 2 * 2.0 / (3.0 * np.sqrt(5.0))
        coeff_c[i, :, 0] = 0.6 * np.array([a0, a1, a2])
        coeff_c[i, :, 1] = 0.4 * np.array([a0, a1, a2])
    state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=coeff_c, coeff_s=np.zeros((n, 3, 1)))
    # representable data agrees to round-off; the convexity-gap formula
    # itself has an absolute floor near machine precision
    assert estimator.initial_term(state, mesh, toy, exact) < 1e-15

    # bitwise-identical fields give an exact zero
    const = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                            coeff_c=np.zeros((n, 3, 2)),
                            coeff_s=np.zeros((n, 3, 1)))
    const.coeff_c[:, 0] = [0.7, 0.3]
    assert estimator.initial_term(
        const, mesh, toy,
        lambda x: np.tile([0.7, 0.3], (x.size, 1))) == 0.0

    # an L2 projection of non-polynomial data leaves a small positive gap
    fn = lambda x: np.stack([0.5 + 0.1 * np.sin(2 * np.pi * x),
                             0.5 + 0.1 * np.sin(2 * np.pi * x)], axis=-1)
    proj = dg.project_function(fn, mesh)
    state2 = dg.MixedDGState(theta=np.ones(n, dtype=np.int8), coeff_c=proj,
                             coeff_s=np.zeros((n, 3, 1)))
    val = estimator.initial_term(state2, mesh, toy, fn)
    assert 0.0 < val < 1e-8

    # equilibrium cells enter through the lift
    stateq = dg.MixedDGState(theta=np.zeros(n, dtype=np.int8),
                             coeff_c=np.zeros((n, 3, 2)),
                             coeff_s=proj @ toy.projection.T)
    val_s = estimator.initial_term(stateq, mesh, toy, fn)
    assert 0.0 <= val_s < 1e-8


def test_initial_term_lift_failure(o2):
    mesh = dg.Mesh1D(0.0, 1.0, 4)
    n = mesh.n_cells
    coeff_s = np.zeros((n, 3, 4))
    coeff_s[:, 0] = U_IN @ o2.projection.T
    coeff_s[1, 0, 3] = -1e7
    state = dg.MixedDGState(theta=np.zeros(n, dtype=np.int8),
                            coeff_c=np.zeros((n, 3, 5)), coeff_s=coeff_s)
    with pytest.raises(ReportError, match="initial lift failed"):
        estimator.initial_term(state, mesh, o2,
                               lambda x: np.tile(U_IN, (x.size, 1)))


def test_record_roundtrip_and_schema(tmp_path):
    recs = [estimator.SlabRecord(0, 0.0, 0.1, 1e-17, 0.3, np.pi, 7e8,
                                 2.5e-13, 4.0, 0.1, 0.2, 0.3),
            estimator.SlabRecord(1, 0.1, 0.1, *([1.0 / 3.0] * 9))]
    path = tmp_path / "records.csv"
    estimator.save_records(recs, str(path))
    back = estimator.load_records(str(path))
    for a, b in zip(recs, back):
        for f in dataclasses.fields(a):
            assert getattr(a, f.name) == getattr(b, f.name)
    bad = tmp_path / "bad.csv"
    bad.write_text("# schema=other_v9\nindex\n")
    with pytest.raises(ReportError, match="unrecognized"):
        estimator.load_records(str(bad))


def test_bound_report_csv(tmp_path):
    recs = [_zero_record(0, 0.0, 0.1), _zero_record(1, 0.1, 0.1)]
    recs[0].d_c = 2.0
    recs[1].d_c = 1.0
    rep = estimator.assemble_bound(recs, 0.5, _toy_constants(), 2.5, 2.0)
    path = tmp_path / "bound.csv"
    rep.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema=bound_report_v1"
    assert lines[2].split(",") == ["t", "D_c", "D_s", "Ms_term", "G_c",
                                   "G_s", "rhs", "log_rhs",
                                   "gamma_mismatch"]
    row = lines[3].split(",")
    assert float(row[0]) == rep.times[0]
    assert float(row[6]) == rep.rhs[0]
    assert "squared-error bound" in rep.summary()


def test_interface_mismatch_well_balanced(o2):
    # constant equilibrium data across a model interface: both sides agree
    # to round-off, so the flagged mismatch is negligible
    n = 6
    mesh = dg.Mesh1D(0.0, 1.0, n)
    theta = np.ones(n, dtype=np.int8)
    theta[2:4] = 0
    coeff_c = np.zeros((n, 3, 5))
    coeff_c[:, 0] = U_IN
    coeff_s = np.zeros((n, 3, 4))
    coeff_s[:, 0] = U_IN @ o2.projection.T
    state = dg.MixedDGState(theta=theta, coeff_c=coeff_c, coeff_s=coeff_s)
    dt = 1e-7
    old = state.copy()
    new, _ = dg.rk3_step(state, mesh, o2, dt)
    rate = dg.spatial_operator(new, mesh, o2)[:2]
    slab = reconstruct.slab_from_state(mesh, o2, old, new, rate, 0.0, dt)
    rec = estimator.slab_record(slab, 1.0, 0)
    assert rec.gamma_mismatch <= 1e-10 * float(np.abs(U_IN).max())


def test_eval_lifted_at_matches_direct_evaluation(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 8)
    n = mesh.n_cells
    theta = np.ones(n, dtype=np.int8)
    theta[4:7] = 0
    coeff_c = dg.project_function(_bump, mesh)
    state = dg.MixedDGState(theta=theta, coeff_c=coeff_c,
                            coeff_s=coeff_c @ skew.projection.T)
    x = (mesh.centers()[:, None] + 0.5 * mesh.h * dg.GAUSS_X[None, :]) \
        .ravel()
    out = estimator.eval_lifted_at(state, mesh, skew, x)
    direct_c = dg.eval_at(coeff_c, dg.PHI).reshape(-1, 2)
    lift_s = skew.lift(
        dg.eval_at(state.coeff_s, dg.PHI).reshape(-1, 1))
    expected = np.where(np.repeat(theta == 1, 3)[:, None], direct_c, lift_s)
    np.testing.assert_allclose(out, expected, rtol=1e-13, atol=1e-15)
    # periodic wrap
    shifted = estimator.eval_lifted_at(state, mesh, skew, x + 3.0)
    np.testing.assert_allclose(shifted, out, rtol=1e-12, atol=1e-14)


def test_error_splitting_self_and_refined(skew):
    mesh = dg.Mesh1D(0.0, 1.0, 10)
    mesh4 = dg.Mesh1D(0.0, 1.0, 40)
    n = mesh.n_cells
    smooth = lambda x: np.stack([0.6 + 0.1 * np.sin(2 * np.pi * x),
                                 0.6 + 0.1 * np.sin(2 * np.pi * x)],
                                axis=-1)
    sa = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                         coeff_c=dg.project_function(smooth, mesh),
                         coeff_s=np.zeros((n, 3, 1)))
    sb = dg.MixedDGState(theta=np.ones(40, dtype=np.int8),
                         coeff_c=dg.project_function(smooth, mesh4),
                         coeff_s=np.zeros((40, 3, 1)))
    rows = estimator.error_splitting_report([(0.0, sa)], mesh, [(0.0, sa)],
                                            mesh, skew)
    assert rows[0]["gap"] == 0.0 and not rows[0]["interpolated"]
    rows4 = estimator.error_splitting_report([(0.0, sa)], mesh,
                                             [(0.0, sb)], mesh4, skew)
    assert rows4[0]["interpolated"]
    assert 0.0 < rows4[0]["gap"] < 1e-4
    with pytest.raises(ReportError, match="snapshot times differ"):
        estimator.error_splitting_report([(0.0, sa)], mesh, [(0.1, sa)],
                                         mesh, skew)


def test_reliability_smooth_problem(skew):
    # complex-everywhere run against a 4x refined reference: the assembled
    # bound dominates the measured squared error at every snapshot
    T = 0.05
    smooth = lambda x: np.stack([0.55 + 0.15 * np.sin(2 * np.pi * x),
                                 0.45 + 0.15 * np.sin(2 * np.pi * x)],
                                axis=-1)

    def run(ne, n_slabs, collect):
        mesh = dg.Mesh1D(0.0, 1.0, ne)
        n = mesh.n_cells
        state = dg.MixedDGState(theta=np.ones(n, dtype=np.int8),
                                coeff_c=dg.project_function(smooth, mesh),
                                coeff_s=np.zeros((n, 3, 1)))
        dt = T / n_slabs
        records, snaps = [], [(0.0, state.copy())]
        t = 0.0
        for k in range(n_slabs):
            state, slab = _advance(state, mesh, skew, dt, t)
            t = (k + 1) * dt
            if collect:
                records.append(estimator.slab_record(slab, 1.0, index=k))
            snaps.append((t, state.copy()))
        return mesh, records, snaps

    mesh, records, snaps = run(20, 40, collect=True)
    mesh_ref, _, snaps_ref = run(80, 160, collect=False)
    sub = list(range(0, 41, 8))
    rows = estimator.error_splitting_report(
        [snaps[i] for i in sub], mesh,
        [snaps_ref[4 * i] for i in sub], mesh_ref, skew)

    box = hierarchy.ConvexStateSet.from_states(
        np.vstack([dg.eval_at(s.coeff_c, dg.PHI).reshape(-1, 2)
                   for _, s in snaps]), inflate=1.5)
    consts = hierarchy.compute_hessian_constants(skew, box,
                                                 points_per_axis=17)
    I0 = estimator.initial_term(snaps[0][1], mesh, skew, smooth)
    rep = estimator.assemble_bound(records, I0, consts, nu=1.0,
                                   proj_norm_sq=2.0)
    assert np.isfinite(rep.rhs).all()
    for row in rows[1:]:
        k = int(np.argmin(np.abs(rep.times - row["t"])))
        assert abs(rep.times[k] - row["t"]) < 1e-12
        assert rep.rhs[k] >= row["gap"] ** 2
