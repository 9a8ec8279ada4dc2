"""Global a posteriori error bound assembled from stored slab data.

Each completed time slab is condensed into a small record: the weighted
space-time residual integrals of both models, the sup-norms entering the
growth constants, and the model-interface mismatch.  After the run these
records combine with the initial-data term and the box curvature
constants into a Gronwall-type bound on the squared L2 error, reported
per snapshot.  Assembly is offline; the time loop only stores records.
"""

import csv
from dataclasses import dataclass, fields

import numpy as np

from . import dg, reconstruct
from .adapt import _weighted_indicator_sq
from .errors import ReportError
from .hierarchy import relative_entropy

# documented inflation of point-set maxima standing in for sup-norms
SUP_FACTOR = 1.05

RECORD_SCHEMA = "slab_records_v1"
BOUND_SCHEMA = "bound_report_v1"


@dataclass
class SlabRecord:
    """Bound ingredients of one time slab.

    The d_* fields are space-time integrals over the slab (already scaled
    by the cell measure); the sup_* fields are raw quadrature-point
    maxima, inflated only at assembly time.
    """

    index: int
    t0: float
    dt: float
    d_c: float
    d_s: float
    ms_term: float
    sup_dxu_c: float
    sup_source: float
    sup_source_jac: float
    sup_dxm: float
    sup_r_eps: float
    gamma_mismatch: float


def _sup_rows(arr):
    """Max euclidean row norm of a (n, K) array, 0 when empty."""
    if arr.size == 0:
        return 0.0
    return float(np.sqrt((arr * arr).sum(axis=-1)).max())


def _interface_mismatch(slab):
    """Largest |U - lifted u| over model-interface faces of the slab.

    The continuous theory assumes the two representations agree exactly
    on the interface; the discrete coupling only enforces this weakly, so
    the magnitude is reported without an asserted bound.  A failed lift
    on the simple side reports +inf.
    """
    theta = slab.theta
    n = theta.shape[0]
    left = (np.arange(n) - 1) % n
    cL = theta[left] == 1
    cR = theta == 1
    faces = np.flatnonzero(cL != cR)
    if faces.size == 0:
        return 0.0
    worst = 0.0
    tau = reconstruct.TIME_TAU
    for f in faces:
        lc, rc = int(left[f]), int(f)
        if cL[f]:
            uc = slab.eval_complex(np.array([1.0]), tau, "value", [lc])
            us = slab.eval_simple(np.array([-1.0]), tau, "value", [rc])
        else:
            uc = slab.eval_complex(np.array([-1.0]), tau, "value", [rc])
            us = slab.eval_simple(np.array([1.0]), tau, "value", [lc])
        lifted, ok = slab.hier.maxwellian(us.reshape(-1, slab.hier.dim_simple))
        if not np.all(ok):
            return float("inf")
        diff = uc.reshape(-1, slab.hier.dim_complex) - lifted
        worst = max(worst, _sup_rows(diff))
    return worst


def slab_record(slab, eps_over_nu, index=0, residuals_c=None,
                residuals_s=None):
    """Condense one slab reconstruction into its bound record.

    Args:
        slab: SlabReconstruction covering [t0, t0 + dt].
        eps_over_nu: stiffness-to-coercivity prefactor of the modeling
            term, matching the adaptation indicators.
        index: slab sequence number within the run.
        residuals_c: optional (cells, U, resid) triple from
            residual_complex, reused when the caller already computed it.
        residuals_s: optional dict from residual_simple.
    """
    hier = slab.hier
    h, dt = slab.mesh.h, slab.dt
    if residuals_c is None:
        residuals_c = reconstruct.residual_complex(slab)
    cells_c, U, resid_c = residuals_c
    d_c = 0.0
    sup_dxu = sup_src = sup_jac = 0.0
    if cells_c.size:
        d_c = 0.5 * h * dt * float(
            _weighted_indicator_sq(hier, U, resid_c).sum())
        ux = slab.eval_complex(dg.GAUSS_X, reconstruct.TIME_TAU, "dx",
                               cells_c)
        sup_dxu = _sup_rows(ux.reshape(-1, hier.dim_complex))
        flat = U.reshape(-1, hier.dim_complex)
        sup_src = _sup_rows(hier.source(flat) / hier.epsilon)
        J = hier.source_jacobian(flat) / hier.epsilon
        sup_jac = float(np.linalg.svd(J, compute_uv=False)[:, 0].max())

    if residuals_s is None:
        residuals_s = reconstruct.residual_simple(slab)
    out = residuals_s
    d_s = ms = 0.0
    sup_dxm = sup_reps = 0.0
    if out["cells"].size:
        d_s = 0.5 * h * dt * float(
            _weighted_indicator_sq(hier, out["lifted"], out["R_delta"]).sum())
        ms = eps_over_nu * h * dt * float(
            _weighted_indicator_sq(hier, out["lifted"], out["R_eps"]).sum())
        ux = slab.eval_simple(dg.GAUSS_X, reconstruct.TIME_TAU, "dx",
                              out["cells"])
        flat_u = out["u"].reshape(-1, hier.dim_simple)
        dM = hier.maxwellian_jacobian(flat_u)
        dxm = np.einsum("nij,nj->ni", dM, ux.reshape(-1, hier.dim_simple))
        sup_dxm = _sup_rows(dxm)
        sup_reps = _sup_rows(out["R_eps"].reshape(-1, hier.dim_complex))

    return SlabRecord(
        index=int(index), t0=float(slab.t0), dt=float(dt), d_c=d_c, d_s=d_s,
        ms_term=ms, sup_dxu_c=sup_dxu, sup_source=sup_src,
        sup_source_jac=sup_jac, sup_dxm=sup_dxm, sup_r_eps=sup_reps,
        gamma_mismatch=_interface_mismatch(slab))


def initial_term(state, mesh, hier, exact_fn):
    """Initial relative entropy of the exact data against the DG field.

    Args:
        state: MixedDGState at t = 0.
        mesh: Mesh1D.
        hier: ModelHierarchy.
        exact_fn: maps positions (k,) to exact full states (k, M).

    Returns:
        Integral over the domain of the relative entropy between the
        exact initial data and the (lifted) initial DG polynomial.

    Raises:
        ReportError: if the entropy comparison is undefined anywhere.
    """
    x = mesh.centers()[:, None] + 0.5 * mesh.h * dg.GAUSS_X[None, :]
    U0 = np.asarray(exact_fn(x.ravel()), dtype=np.float64)
    V = np.empty((mesh.n_cells, dg.GAUSS_X.size, hier.dim_complex))
    cmask = state.theta == 1
    if cmask.any():
        V[cmask] = dg.eval_at(state.coeff_c[cmask], dg.PHI)
    if (~cmask).any():
        us = dg.eval_at(state.coeff_s[~cmask], dg.PHI)
        lifted, ok = hier.maxwellian(us.reshape(-1, hier.dim_simple))
        if not np.all(ok):
            raise ReportError("initial lift failed on equilibrium cells")
        V[~cmask] = lifted.reshape(us.shape[:2] + (hier.dim_complex,))
    ent = relative_entropy(hier, U0, V.reshape(-1, hier.dim_complex),
                           check=False)
    if not np.isfinite(ent).all():
        raise ReportError("initial relative entropy is not finite")
    ent = ent.reshape(mesh.n_cells, -1)
    return 0.5 * mesh.h * float((ent @ dg.GAUSS_W).sum())


@dataclass
class BoundReport:
    """Per-snapshot terms and right-hand side of the global error bound.

    rhs bounds the squared L2 error of the (lifted) reconstruction; when
    the exponential factor overflows, rhs is +inf and log_rhs remains
    informative.
    """

    times: np.ndarray
    initial: float
    d_c: np.ndarray
    d_s: np.ndarray
    ms_term: np.ndarray
    g_c: np.ndarray
    g_s: np.ndarray
    rhs: np.ndarray
    log_rhs: np.ndarray
    gamma_mismatch: np.ndarray
    constants: object
    nu: float
    sup_factor: float = SUP_FACTOR

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# schema=%s\n" % BOUND_SCHEMA)
            c = self.constants
            fh.write("# c_h_lower=%.17g c_h_upper=%.17g c_f=%.17g "
                     "c_m=%.17g nu=%.17g sup_factor=%.17g initial=%.17g\n"
                     % (c.c_h_lower, c.c_h_upper, c.c_f, c.c_m, self.nu,
                        self.sup_factor, self.initial))
            w = csv.writer(fh)
            w.writerow(["t", "D_c", "D_s", "Ms_term", "G_c", "G_s",
                        "rhs", "log_rhs", "gamma_mismatch"])
            for i in range(self.times.size):
                w.writerow(["%.17g" % v for v in (
                    self.times[i], self.d_c[i], self.d_s[i],
                    self.ms_term[i], self.g_c[i], self.g_s[i], self.rhs[i],
                    self.log_rhs[i], self.gamma_mismatch[i])])

    def summary(self):
        last = self.times.size - 1
        lines = [
            "error bound report (%d snapshots, t in [%.6g, %.6g])"
            % (self.times.size, self.times[0], self.times[last]),
            "  initial term      I = %.6g" % self.initial,
            "  final D_c           = %.6g" % self.d_c[last],
            "  final D_s           = %.6g" % self.d_s[last],
            "  final modeling term = %.6g" % self.ms_term[last],
            "  growth constants: G_c = %.6g, G_s = %.6g"
            % (self.g_c[last], self.g_s[last]),
            "  squared-error bound at final time: %.6g (log: %.6g)"
            % (self.rhs[last], self.log_rhs[last]),
            "  worst interface mismatch |U - M(u)| on coupling faces: %.6g"
            % self.gamma_mismatch.max(),
            "  curvature constants: c_h in [%.6g, %.6g], c_f = %.6g, "
            "c_m = %.6g, nu = %.6g"
            % (self.constants.c_h_lower, self.constants.c_h_upper,
               self.constants.c_f, self.constants.c_m, self.nu),
        ]
        return "\n".join(lines)


def _check_records(records, t=None):
    if not records:
        raise ReportError("no slab records stored")
    recs = sorted(records, key=lambda r: r.index)
    idx = [r.index for r in recs]
    if len(set(idx)) != len(idx):
        dup = sorted({i for i in idx if idx.count(i) > 1})
        raise ReportError("duplicate slab records: %s" % dup)
    missing = sorted(set(range(idx[-1] + 1)) - set(idx))
    if missing:
        raise ReportError("missing stored slabs: %s" % missing)
    for prev, cur in zip(recs, recs[1:]):
        gap = abs(cur.t0 - (prev.t0 + prev.dt))
        if gap > 1e-9 * max(prev.dt, cur.dt):
            raise ReportError(
                "slab %d does not continue slab %d (gap %.3e)"
                % (cur.index, prev.index, gap))
    if t is not None:
        end = recs[-1].t0 + recs[-1].dt
        if t > end * (1.0 + 1e-12) + 1e-300:
            raise ReportError(
                "records end at t = %.12g, before requested t = %.12g"
                % (end, t))
        recs = [r for r in recs if r.t0 + r.dt <= t * (1.0 + 1e-12)]
        if not recs:
            raise ReportError("no complete slab before t = %.12g" % t)
    return recs


def assemble_bound(records, initial, constants, nu, proj_norm_sq, t=None):
    """Combine slab records into the per-snapshot error bound.

    Args:
        records: iterable of SlabRecord covering [0, t] without gaps.
        initial: initial relative-entropy term, from initial_term.
        constants: HessianConstants of the state box of the run.
        nu: source coercivity constant used (reported, already folded
            into the records' modeling term).
        proj_norm_sq: squared spectral norm of the projection matrix,
            entering the growth constant of the equilibrium region.
        t: optional final time; defaults to the last stored slab end.

    Returns:
        BoundReport with one row per slab end time.

    Raises:
        ReportError: on missing or non-contiguous slabs.
    """
    recs = _check_records(records, t)
    times = np.array([r.t0 + r.dt for r in recs])
    d_c = np.cumsum([r.d_c for r in recs])
    d_s = np.cumsum([r.d_s for r in recs])
    ms = np.cumsum([r.ms_term for r in recs])
    c = constants
    f = SUP_FACTOR
    g_c = 0.5 + np.maximum.accumulate(
        c.c_f * c.c_h_upper * f * np.array([r.sup_dxu_c for r in recs])
        + c.c_h_upper * f * np.array(
            [r.sup_source + r.sup_source_jac for r in recs]))
    g_s = 0.5 + np.maximum.accumulate(
        c.c_f * c.c_h_upper * f * np.array([r.sup_dxm for r in recs])
        + c.c_h_upper * c.c_m * proj_norm_sq * f
        * np.array([r.sup_r_eps for r in recs]))
    base = (initial + d_c + d_s + ms) / c.c_h_lower
    expo = np.maximum(g_c, g_s) * times / c.c_h_lower
    with np.errstate(over="ignore", divide="ignore"):
        rhs = base * np.exp(expo)
        log_rhs = np.log(base) + expo
    gamma = np.array([r.gamma_mismatch for r in recs])
    return BoundReport(times=times, initial=float(initial), d_c=d_c,
                       d_s=d_s, ms_term=ms, g_c=g_c, g_s=g_s, rhs=rhs,
                       log_rhs=log_rhs, gamma_mismatch=gamma,
                       constants=constants, nu=float(nu))


def save_records(records, path):
    """Write slab records as CSV, one row per slab, full precision."""
    names = [f.name for f in fields(SlabRecord)]
    with open(path, "w", newline="") as fh:
        fh.write("# schema=%s\n" % RECORD_SCHEMA)
        w = csv.writer(fh)
        w.writerow(names)
        for r in sorted(records, key=lambda r: r.index):
            w.writerow(["%d" % r.index] + [
                "%.17g" % getattr(r, n) for n in names[1:]])


def load_records(path):
    """Read slab records written by save_records.

    Raises:
        ReportError: on a wrong schema line or malformed rows.
    """
    names = [f.name for f in fields(SlabRecord)]
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != "# schema=%s" % RECORD_SCHEMA:
            raise ReportError("unrecognized slab record file: %r" % first)
        rows = list(csv.reader(fh))
    if not rows or rows[0] != names:
        raise ReportError("slab record header mismatch in %s" % path)
    out = []
    for row in rows[1:]:
        if len(row) != len(names):
            raise ReportError("malformed slab record row: %r" % row)
        out.append(SlabRecord(int(row[0]),
                              *[float(v) for v in row[1:]]))
    return out


def eval_lifted_at(state, mesh, hier, x):
    """Lifted conserved field of a DG state at arbitrary positions.

    Positions are taken modulo the periodic domain.  Returns (k, M).

    Raises:
        ReportError: if an equilibrium cell fails to lift.
    """
    x = np.asarray(x, dtype=np.float64)
    span = mesh.b - mesh.a
    xr = np.mod(x - mesh.a, span)
    cell = np.clip((xr / mesh.h).astype(np.intp), 0, mesh.n_cells - 1)
    xi = 2.0 * (xr - (cell + 0.5) * mesh.h) / mesh.h
    phi = reconstruct.basis3_values(np.clip(xi, -1.0, 1.0))[:3]
    out = np.empty((x.size, hier.dim_complex))
    cmask = state.theta[cell] == 1
    if cmask.any():
        out[cmask] = np.einsum(
            "njk,jn->nk", state.coeff_c[cell[cmask]], phi[:, cmask])
    if (~cmask).any():
        us = np.einsum(
            "njk,jn->nk", state.coeff_s[cell[~cmask]], phi[:, ~cmask])
        lifted, ok = hier.maxwellian(us)
        if not np.all(ok):
            raise ReportError("equilibrium lift failed in reference "
                              "evaluation")
        out[~cmask] = lifted
    return out


def error_splitting_report(states_a, mesh_a, states_b, mesh_b, hier,
                           bound=None):
    """Computable error pieces of run A against reference run B.

    For every common snapshot the lifted fields are compared in L2 on
    run A's quadrature points, split into the part carried by A's
    complex cells and the part carried by its equilibrium cells.  When a
    bound report is supplied its rhs at the matching time is attached
    and combined with the computable gap by the triangle inequality.

    Args:
        states_a: list of (t, MixedDGState) snapshots of run A.
        mesh_a: Mesh1D of run A.
        states_b: reference snapshots, same times.
        mesh_b: Mesh1D of run B; a differing mesh is evaluated at A's
            points and flagged.
        hier: shared ModelHierarchy.
        bound: optional BoundReport of run A.

    Returns:
        List of row dicts with keys t, gap_complex, gap_simple, gap,
        bound_rhs, combined, interpolated.

    Raises:
        ReportError: if the snapshot times differ.
    """
    ta = [t for t, _ in states_a]
    tb = [t for t, _ in states_b]
    if len(ta) != len(tb) or any(
            abs(p - q) > 1e-9 * (1.0 + abs(p)) for p, q in zip(ta, tb)):
        raise ReportError("snapshot times differ: %s vs %s" % (ta, tb))
    interpolated = not (mesh_a.n_cells == mesh_b.n_cells
                        and mesh_a.a == mesh_b.a and mesh_a.b == mesh_b.b)
    x = (mesh_a.centers()[:, None]
         + 0.5 * mesh_a.h * dg.GAUSS_X[None, :]).ravel()
    rows = []
    for (t, sa), (_, sb) in zip(states_a, states_b):
        fa = eval_lifted_at(sa, mesh_a, hier, x)
        fb = eval_lifted_at(sb, mesh_b, hier, x)
        sq = ((fa - fb) ** 2).sum(axis=-1).reshape(mesh_a.n_cells, -1)
        cellsq = 0.5 * mesh_a.h * (sq @ dg.GAUSS_W)
        gap_c = float(np.sqrt(cellsq[sa.theta == 1].sum()))
        gap_s = float(np.sqrt(cellsq[sa.theta == 0].sum()))
        gap = float(np.sqrt(cellsq.sum()))
        row = {"t": t, "gap_complex": gap_c, "gap_simple": gap_s,
               "gap": gap, "bound_rhs": np.nan, "combined": np.nan,
               "interpolated": interpolated}
        if bound is not None:
            k = int(np.argmin(np.abs(bound.times - t)))
            if abs(bound.times[k] - t) <= 1e-9 * (1.0 + abs(t)):
                row["bound_rhs"] = float(bound.rhs[k])
                row["combined"] = gap + float(np.sqrt(bound.rhs[k]))
        rows.append(row)
    return rows
