"""Modal discontinuous Galerkin discretization on a periodic interval.

Cells carry degree-2 Legendre expansions (third order in space) and a
per-cell model tag: tag 1 evolves the full reacting system, tag 0 evolves
the projected equilibrium system.  Interfaces between unlike cells use a
single shared numerical flux computed in the full state space after
lifting the equilibrium trace, so the projected moments telescope exactly.
Time integration is the three-stage strong-stability-preserving
Runge-Kutta scheme with an optional minmod limiter after every stage.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import PhysicsError

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

GAUSS_X, GAUSS_W = leggauss(3)


def basis_values(xi):
    """Orthonormal-modal Legendre basis (scaled so the cell mass matrix is h*I).

    Args:
        xi: reference coordinates in [-1, 1], any shape.

    Returns:
        Array of shape (3,) + xi.shape with rows 1, sqrt(3)*xi,
        sqrt(5)*(3*xi^2 - 1)/2.
    """
    xi = np.asarray(xi, dtype=np.float64)
    return np.stack([
        np.ones_like(xi),
        SQRT3 * xi,
        SQRT5 * 0.5 * (3.0 * xi * xi - 1.0),
    ])


def basis_derivatives(xi):
    """Reference-coordinate derivatives of basis_values."""
    xi = np.asarray(xi, dtype=np.float64)
    return np.stack([
        np.zeros_like(xi),
        SQRT3 * np.ones_like(xi),
        3.0 * SQRT5 * xi,
    ])


PHI = basis_values(GAUSS_X)
DPHI = basis_derivatives(GAUSS_X)
PHI_LEFT = basis_values(-1.0)
PHI_RIGHT = basis_values(1.0)


@dataclass(frozen=True)
class Mesh1D:
    """Uniform periodic mesh of the interval [a, b]."""

    a: float
    b: float
    n_cells: int
    periodic: bool = True

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("mesh interval is empty")
        if self.n_cells < 2:
            raise ValueError("need at least two cells")
        if not self.periodic:
            raise NotImplementedError("only periodic meshes are supported")

    @property
    def h(self):
        return (self.b - self.a) / self.n_cells

    def centers(self):
        return self.a + (np.arange(self.n_cells) + 0.5) * self.h

    def faces(self):
        """Positions of the n_cells left faces (face i bounds cell i on the left)."""
        return self.a + np.arange(self.n_cells) * self.h

    def points(self, xi):
        """Physical positions of reference points xi in every cell, shape (n, len(xi))."""
        xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        return self.centers()[:, None] + 0.5 * self.h * xi[None, :]


def project_function(fn, mesh, points=5):
    """L2-project a pointwise state function onto the modal basis.

    Uses a Gauss rule with more nodes than the runtime tables so the
    projection error never dominates a convergence study.

    Args:
        fn: maps positions (k,) to states (k, ncomp).
        mesh: Mesh1D.
        points: quadrature nodes per cell.

    Returns:
        Coefficient array of shape (n_cells, 3, ncomp).
    """
    xq, wq = leggauss(points)
    phi = basis_values(xq)
    x = mesh.points(xq)
    vals = np.asarray(fn(x.ravel()), dtype=np.float64)
    vals = vals.reshape(mesh.n_cells, len(xq), -1)
    return 0.5 * np.einsum("npk,p,jp->njk", vals, wq, phi)


def eval_at(coeff, basis):
    """Evaluate expansions at reference points: (n,3,K) x (3,q) -> (n,q,K)."""
    return np.einsum("njk,jq->nqk", coeff, basis)


def cell_traces(coeff):
    """Left and right face traces of every cell, each (n, K)."""
    left = np.einsum("njk,j->nk", coeff, PHI_LEFT)
    right = np.einsum("njk,j->nk", coeff, PHI_RIGHT)
    return left, right


@dataclass
class MixedDGState:
    """Per-cell modal coefficients for both models plus the model tag.

    Only the rows selected by theta are meaningful in each coefficient
    array; the inactive rows are ignored by every operation and are kept
    solely so array shapes stay fixed while cells switch models.
    """

    theta: np.ndarray
    coeff_c: np.ndarray
    coeff_s: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.int8)
        self.coeff_c = np.asarray(self.coeff_c, dtype=np.float64)
        self.coeff_s = np.asarray(self.coeff_s, dtype=np.float64)
        n = self.theta.shape[0]
        if self.coeff_c.shape[:2] != (n, 3) or self.coeff_s.shape[:2] != (n, 3):
            raise ValueError("coefficient arrays must be (n_cells, 3, dim)")

    @property
    def n_cells(self):
        return self.theta.shape[0]

    @property
    def complex_mask(self):
        return self.theta == 1

    @property
    def simple_mask(self):
        return self.theta == 0

    def copy(self):
        return MixedDGState(self.theta.copy(), self.coeff_c.copy(), self.coeff_s.copy())

    def lifted_means(self, hier):
        """Cell means in the full state space, lifting equilibrium cells.

        Returns:
            (means, ok): (n, M) array and a boolean mask; rows with a
            failed lift are NaN and flagged False.
        """
        n = self.n_cells
        means = np.full((n, hier.dim_complex), np.nan)
        ok = np.ones(n, dtype=bool)
        cmask = self.complex_mask
        means[cmask] = self.coeff_c[cmask, 0, :]
        idx = np.flatnonzero(~cmask)
        if idx.size:
            lifted, good = hier.maxwellian(self.coeff_s[idx, 0, :])
            means[idx] = np.where(good[:, None], lifted, np.nan)
            ok[idx] = good
        return means, ok

    def projected_means(self, hier):
        """Cell means in the reduced state space (exact for both models)."""
        means = self.coeff_s[:, 0, :].copy()
        cmask = self.complex_mask
        means[cmask] = self.coeff_c[cmask, 0, :] @ hier.projection.T
        return means


def state_from_complex(theta, coeff_c, hier):
    """Wrap complex coefficients into a mixed state with empty simple slots."""
    theta = np.asarray(theta, dtype=np.int8)
    coeff_s = np.zeros((theta.shape[0], 3, hier.dim_simple))
    return MixedDGState(theta, np.asarray(coeff_c, dtype=np.float64), coeff_s)


def state_from_simple(theta, coeff_s, hier):
    theta = np.asarray(theta, dtype=np.int8)
    coeff_c = np.zeros((theta.shape[0], 3, hier.dim_complex))
    return MixedDGState(theta, coeff_c, np.asarray(coeff_s, dtype=np.float64))


class _Inadmissible(Exception):
    """Internal: quadrature or trace states left the solver domain."""

    def __init__(self, cells):
        super().__init__("inadmissible cells")
        self.cells = sorted(set(int(c) for c in cells))


def _flatten_cells(coeff, cells):
    out = coeff.copy()
    out[cells, 1:, :] = 0.0
    return out


def llf_flux(f_left, f_right, u_left, u_right, lam):
    """Local Lax-Friedrichs flux; lam broadcasts over the face axis."""
    return 0.5 * (f_left + f_right) - 0.5 * lam[..., None] * (u_right - u_left)


def spatial_operator(state, mesh, hier, retry=True):
    """Semi-discrete rate of change for both models at once.

    Volume terms use the shared 3-point Gauss rule, interfaces use the
    local Lax-Friedrichs flux with the larger of the two frozen wave
    speeds.  Equilibrium cells are lifted pointwise before any flux or
    speed evaluation; across unlike interfaces the lifted trace enters a
    full-space flux whose projection feeds the equilibrium side.

    Cells whose quadrature or trace states leave the solver's admissible
    set are flattened to their means once and the evaluation retried;
    a repeat failure raises PhysicsError naming the cells.

    Args:
        state: MixedDGState.
        mesh: Mesh1D.
        hier: ModelHierarchy.
        retry: allow the one-shot mean-flattening retry.

    Returns:
        (rate_c, rate_s, info): coefficient rates, zero in inactive rows,
        and a dict with "max_face_speed" and "flattened_cells".
    """
    try:
        rate_c, rate_s, info = _operator_once(state.theta, state.coeff_c,
                                              state.coeff_s, mesh, hier)
        info["flattened_cells"] = []
        return rate_c, rate_s, info
    except _Inadmissible as exc:
        if not retry:
            raise PhysicsError(
                "inadmissible states in cells %s" % exc.cells, cells=exc.cells)
        cells = exc.cells
    coeff_c = _flatten_cells(state.coeff_c, cells)
    coeff_s = _flatten_cells(state.coeff_s, cells)
    try:
        rate_c, rate_s, info = _operator_once(state.theta, coeff_c, coeff_s,
                                              mesh, hier)
    except _Inadmissible as exc2:
        raise PhysicsError(
            "inadmissible cell means in cells %s" % exc2.cells, cells=exc2.cells)
    info["flattened_cells"] = cells
    return rate_c, rate_s, info


def _operator_once(theta, coeff_c, coeff_s, mesh, hier):
    n = mesh.n_cells
    h = mesh.h
    mdim = hier.dim_complex
    sdim = hier.dim_simple
    proj = hier.projection
    cmask = theta == 1
    idx_c = np.flatnonzero(cmask)
    idx_s = np.flatnonzero(~cmask)
    bad = []

    rate_c = np.zeros((n, 3, mdim))
    rate_s = np.zeros((n, 3, sdim))

    # Per-cell trace data in the full state space, valid for every cell.
    trace5_l = np.zeros((n, mdim))
    trace5_r = np.zeros((n, mdim))
    speed_l = np.zeros(n)
    speed_r = np.zeros(n)

    w_dphi = DPHI * GAUSS_W[None, :]
    w_phi = PHI * GAUSS_W[None, :]

    if idx_c.size:
        uq = eval_at(coeff_c[idx_c], PHI)
        uq_flat = uq.reshape(-1, mdim)
        ok = np.isfinite(uq_flat).all(axis=1)
        ok[ok] = hier.solver_admissible(uq_flat[ok])
        if not ok.all():
            bad.extend(idx_c[np.flatnonzero(~ok.reshape(idx_c.size, -1).all(axis=1))])
        else:
            fq = hier.flux(uq_flat).reshape(uq.shape)
            sq = hier.source(uq_flat).reshape(uq.shape) / hier.epsilon
            rate_c[idx_c] = (np.einsum("cqk,jq->cjk", fq, w_dphi) / h
                             + 0.5 * np.einsum("cqk,jq->cjk", sq, w_phi))

            tl, tr = cell_traces(coeff_c[idx_c])
            both = np.concatenate([tl, tr])
            okt = np.isfinite(both).all(axis=1)
            okt[okt] = hier.solver_admissible(both[okt])
            if not okt.all():
                badt = ~(okt[:idx_c.size] & okt[idx_c.size:])
                bad.extend(idx_c[badt])
            else:
                trace5_l[idx_c] = tl
                trace5_r[idx_c] = tr
                speed_l[idx_c] = hier.wave_speed(tl)
                speed_r[idx_c] = hier.wave_speed(tr)

    trace4_l = np.zeros((n, sdim))
    trace4_r = np.zeros((n, sdim))
    g4_l = np.zeros((n, sdim))
    g4_r = np.zeros((n, sdim))
    if idx_s.size:
        uq = eval_at(coeff_s[idx_s], PHI)
        uq_flat = uq.reshape(-1, sdim)
        lifted, ok = hier.maxwellian(uq_flat)
        ok &= np.isfinite(lifted).all(axis=1)
        if not ok.all():
            bad.extend(idx_s[np.flatnonzero(~ok.reshape(idx_s.size, -1).all(axis=1))])
        else:
            gq = (hier.flux(lifted) @ proj.T).reshape(idx_s.size, -1, sdim)
            rate_s[idx_s] = np.einsum("cqk,jq->cjk", gq, w_dphi) / h

            tl, tr = cell_traces(coeff_s[idx_s])
            both = np.concatenate([tl, tr])
            lifted_t, okt = hier.maxwellian(both)
            okt &= np.isfinite(lifted_t).all(axis=1)
            if not okt.all():
                badt = ~(okt[:idx_s.size] & okt[idx_s.size:])
                bad.extend(idx_s[badt])
            else:
                trace4_l[idx_s] = tl
                trace4_r[idx_s] = tr
                trace5_l[idx_s] = lifted_t[:idx_s.size]
                trace5_r[idx_s] = lifted_t[idx_s.size:]
                fl = hier.flux(lifted_t)
                g4_l[idx_s] = fl[:idx_s.size] @ proj.T
                g4_r[idx_s] = fl[idx_s.size:] @ proj.T
                speed_l[idx_s] = hier.wave_speed(lifted_t[:idx_s.size])
                speed_r[idx_s] = hier.wave_speed(lifted_t[idx_s.size:])

    if bad:
        raise _Inadmissible(bad)

    # Face i sits between cell i-1 (left) and cell i (right), periodically.
    right = np.arange(n)
    left = (right - 1) % n
    lam = np.maximum(speed_r[left], speed_l[right])

    flux5_left_side = hier.flux(trace5_r[left])
    flux5_right_side = hier.flux(trace5_l[right])
    f5 = llf_flux(flux5_left_side, flux5_right_side,
                  trace5_r[left], trace5_l[right], lam)

    # Equilibrium sides: project the shared flux at unlike faces, use the
    # reduced-variable jump at like faces so conservation is exact in the
    # reduced variables themselves.
    f4 = f5 @ proj.T
    ss_face = (theta[left] == 0) & (theta[right] == 0)
    if ss_face.any():
        f4_ss = llf_flux(g4_r[left], g4_l[right],
                         trace4_r[left], trace4_l[right], lam)
        f4 = np.where(ss_face[:, None], f4_ss, f4)

    nxt = (right + 1) % n
    surf_c = (f5[nxt][:, None, :] * PHI_RIGHT[None, :, None]
              - f5[right][:, None, :] * PHI_LEFT[None, :, None]) / h
    surf_s = (f4[nxt][:, None, :] * PHI_RIGHT[None, :, None]
              - f4[right][:, None, :] * PHI_LEFT[None, :, None]) / h
    rate_c[idx_c] -= surf_c[idx_c]
    rate_s[idx_s] -= surf_s[idx_s]

    info = {"max_face_speed": float(lam.max()) if n else 0.0}
    return rate_c, rate_s, info


def _minmod3(a, b, c):
    """Componentwise minmod; returns a bitwise-unchanged where a is selected.

    Any NaN argument fails the sign agreement and yields zero, which
    flattens the cell; that is the wanted fallback when a neighbor mean
    cannot be expressed in this cell's variables.
    """
    sa = np.sign(a)
    agree = (sa == np.sign(b)) & (sa == np.sign(c))
    mag = np.minimum(np.abs(a), np.minimum(np.abs(b), np.abs(c)))
    picked_a = np.abs(a) <= mag
    return np.where(agree, np.where(picked_a, a, sa * mag), 0.0)


def minmod_limit(state, mesh, hier, tvb_m=0.0):
    """Slope limiter comparing the linear mode against neighbor mean jumps.

    Works componentwise in each cell's own variables; a neighbor of the
    other model contributes its mean lifted or projected as needed.  The
    quadratic coefficient is zeroed wherever the linear one changed, cell
    means are never touched, and cells whose linear excursion is below
    tvb_m * h^2 are left alone.

    Returns:
        A new MixedDGState; the input is not modified.
    """
    n = state.n_cells
    h = mesh.h
    theta = state.theta
    cmask = state.complex_mask
    coeff_c = state.coeff_c.copy()
    coeff_s = state.coeff_s.copy()

    mean5, _ = state.lifted_means(hier)
    mean4 = state.projected_means(hier)

    prev = (np.arange(n) - 1) % n
    nxt = (np.arange(n) + 1) % n
    threshold = tvb_m * h * h

    for mask, coeff, mean in ((cmask, coeff_c, mean5), (~cmask, coeff_s, mean4)):
        idx = np.flatnonzero(mask)
        if not idx.size:
            continue
        s = SQRT3 * coeff[idx, 1, :]
        dp = mean[nxt[idx]] - mean[idx]
        dm = mean[idx] - mean[prev[idx]]
        limited = _minmod3(s, dp, dm)
        keep = np.abs(s) <= threshold
        limited = np.where(keep, s, limited)
        changed = limited != s
        coeff[idx, 1, :] = np.where(changed, limited / SQRT3, coeff[idx, 1, :])
        coeff[idx, 2, :] = np.where(changed, 0.0, coeff[idx, 2, :])

    return MixedDGState(theta.copy(), coeff_c, coeff_s)


def ssp_rk3(y, dt, rate, post_stage=None):
    """One step of the three-stage strong-stability-preserving scheme.

    Operates on a single array or a tuple of arrays.  post_stage, when
    given, is applied to the state after every stage (limiting).
    """
    def lincomb(aa, u, bb, v):
        if isinstance(u, tuple):
            return tuple(aa * ui + bb * vi for ui, vi in zip(u, v))
        return aa * u + bb * v

    def post(u):
        return u if post_stage is None else post_stage(u)

    s1 = post(lincomb(1.0, y, dt, rate(y)))
    s2 = post(lincomb(0.75, y, 0.25, lincomb(1.0, s1, dt, rate(s1))))
    return post(lincomb(1.0 / 3.0, y, 2.0 / 3.0, lincomb(1.0, s2, dt, rate(s2))))


def rk3_step(state, mesh, hier, dt, tvb_m=0.0, limiter=True):
    """Advance a mixed state by one time step; model tags stay fixed.

    Returns:
        (new_state, info) with info carrying the largest face speed seen
        across the three stages and any cells flattened by the retry path.
    """
    theta = state.theta
    seen = {"max_face_speed": 0.0, "flattened_cells": set()}

    def rate(y):
        st = MixedDGState(theta, y[0], y[1])
        rc, rs, info = spatial_operator(st, mesh, hier)
        seen["max_face_speed"] = max(seen["max_face_speed"], info["max_face_speed"])
        seen["flattened_cells"].update(info["flattened_cells"])
        return rc, rs

    def post(y):
        if not limiter:
            return y
        st = minmod_limit(MixedDGState(theta, y[0], y[1]), mesh, hier, tvb_m)
        return st.coeff_c, st.coeff_s

    yc, ys = ssp_rk3((state.coeff_c, state.coeff_s), dt, rate, post)
    info = {"max_face_speed": seen["max_face_speed"],
            "flattened_cells": sorted(seen["flattened_cells"])}
    return MixedDGState(theta.copy(), yc, ys), info


def stable_timestep(state, mesh, hier, cfl=0.1, inflation=1.1, source_sigma=0.5):
    """Fixed time step from the current state.

    Advective part: cfl * h over the largest frozen wave speed at the
    quadrature points and traces, inflated by the given factor.  Reacting
    cells additionally cap the step at source_sigma over the spectral
    norm of the scaled source Jacobian.
    """
    lam = 0.0
    jmax = 0.0
    cmask = state.complex_mask
    idx_c = np.flatnonzero(cmask)
    idx_s = np.flatnonzero(~cmask)
    if idx_c.size:
        pts = eval_at(state.coeff_c[idx_c], PHI).reshape(-1, hier.dim_complex)
        tl, tr = cell_traces(state.coeff_c[idx_c])
        states = np.concatenate([pts, tl, tr])
        lam = max(lam, float(hier.wave_speed(states).max()))
        jac = hier.source_jacobian(states) / hier.epsilon
        sing = np.linalg.svd(jac, compute_uv=False)
        jmax = max(jmax, float(sing.max()))
    if idx_s.size:
        pts = eval_at(state.coeff_s[idx_s], PHI).reshape(-1, hier.dim_simple)
        tl, tr = cell_traces(state.coeff_s[idx_s])
        lifted, ok = hier.maxwellian(np.concatenate([pts, tl, tr]))
        if not ok.all():
            raise PhysicsError("equilibrium lift failed while sizing the time step")
        lam = max(lam, float(hier.wave_speed(lifted).max()))
    if lam <= 0.0:
        raise PhysicsError("nonpositive wave speed; cannot size the time step")
    dt = cfl * mesh.h / (inflation * lam)
    if jmax > 0.0:
        dt = min(dt, source_sigma / jmax)
    return dt
