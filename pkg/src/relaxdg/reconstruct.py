"""Space-time reconstruction of the discrete solution and its residuals.

Each time slab gets, per cell, a polynomial of degree 3 in space and
degree 2 in time.  The spatial part matches the cell's first two DG
moments and interpolates shared face values (the arithmetic mean of the
two traces), making the reconstruction continuous within each model
subdomain.  The temporal part is the quadratic matching both slab-end
values and the discrete rate at the new time level.  Residuals of both
systems are evaluated at tensor Gauss points and split into a projected
part and an off-manifold part whose projection vanishes.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import dg
from .errors import PhysicsError

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)
SQRT7 = math.sqrt(7.0)

# tensor rule per cell-slab: 3 Gauss points in space, 2 in scaled time
TIME_X, TIME_W = leggauss(2)
TIME_TAU = 0.5 * (TIME_X + 1.0)


def basis3_values(xi):
    """First four orthonormal-modal Legendre functions."""
    xi = np.asarray(xi, dtype=np.float64)
    return np.stack([
        np.ones_like(xi),
        SQRT3 * xi,
        SQRT5 * 0.5 * (3.0 * xi * xi - 1.0),
        SQRT7 * 0.5 * (5.0 * xi ** 3 - 3.0 * xi),
    ])


def basis3_derivatives(xi):
    xi = np.asarray(xi, dtype=np.float64)
    return np.stack([
        np.zeros_like(xi),
        SQRT3 * np.ones_like(xi),
        3.0 * SQRT5 * xi,
        SQRT7 * 0.5 * (15.0 * xi * xi - 3.0),
    ])


def reconstruct_space(coeff, w_left, w_right):
    """Degree-3 cell polynomials from DG moments and prescribed face values.

    The result keeps the cell mean and linear moment of the input and takes
    the values w_left, w_right at the cell's faces; with both neighbors
    prescribing the same shared face value the union is continuous.

    Args:
        coeff: (n, 3, K) modal DG coefficients.
        w_left, w_right: (n, K) face values.

    Returns:
        (n, 4, K) modal coefficients in the degree-3 basis.
    """
    n, _, k = coeff.shape
    out = np.empty((n, 4, k))
    out[:, 0] = coeff[:, 0]
    out[:, 1] = coeff[:, 1]
    out[:, 2] = ((w_right + w_left) - 2.0 * coeff[:, 0]) / (2.0 * SQRT5)
    out[:, 3] = ((w_right - w_left) - 2.0 * SQRT3 * coeff[:, 1]) / (2.0 * SQRT7)
    return out


def _face_arrays(theta, coeff_c, coeff_s, hier, rate_c=None, rate_s=None):
    """Shared face values for both subdomains, one entry per face.

    Face i sits between cells i-1 and i.  Like-model faces average the two
    traces.  At a model interface the neighbor trace is carried over (lift
    into the full space, projection into the reduced one) before averaging.
    When rate arrays are given, the same construction is applied to them,
    with the lift linearized through its Jacobian.

    Returns:
        (wc, ws) or (wc, ws, wc_dot, ws_dot); wc rows are meaningful for
        faces touching a complex cell, ws rows for faces touching a simple
        cell.
    """
    n = theta.shape[0]
    proj = hier.projection
    with_rates = rate_c is not None

    tl_c, tr_c = dg.cell_traces(coeff_c)
    tl_s, tr_s = dg.cell_traces(coeff_s)

    idx_s = np.flatnonzero(theta == 0)
    lift_l = np.zeros((n, hier.dim_complex))
    lift_r = np.zeros((n, hier.dim_complex))
    jac_l = jac_r = None
    if idx_s.size:
        both = np.concatenate([tl_s[idx_s], tr_s[idx_s]])
        lifted, ok = hier.maxwellian(both)
        if not ok.all():
            bad = idx_s[np.flatnonzero(~(ok[:idx_s.size] & ok[idx_s.size:]))]
            raise PhysicsError(
                "equilibrium lift failed at faces of cells %s" % list(bad),
                cells=bad)
        lift_l[idx_s] = lifted[:idx_s.size]
        lift_r[idx_s] = lifted[idx_s.size:]
        if with_rates:
            jac = hier.maxwellian_jacobian(both)
            jac_l = np.zeros((n, hier.dim_complex, hier.dim_simple))
            jac_r = np.zeros_like(jac_l)
            jac_l[idx_s] = jac[:idx_s.size]
            jac_r[idx_s] = jac[idx_s.size:]

    right = np.arange(n)
    left = (right - 1) % n
    cL = theta[left] == 1
    cR = theta[right] == 1

    # complex-representation side values at every face
    val_L5 = np.where(cL[:, None], tr_c[left], lift_r[left])
    val_R5 = np.where(cR[:, None], tl_c[right], lift_l[right])
    wc = 0.5 * (val_L5 + val_R5)
    # reduced-representation side values
    val_L4 = np.where(cL[:, None], tr_c[left] @ proj.T, tr_s[left])
    val_R4 = np.where(cR[:, None], tl_c[right] @ proj.T, tl_s[right])
    ws = 0.5 * (val_L4 + val_R4)
    if not with_rates:
        return wc, ws

    rl_c, rr_c = dg.cell_traces(rate_c)
    rl_s, rr_s = dg.cell_traces(rate_s)
    lrate_l = np.zeros((n, hier.dim_complex))
    lrate_r = np.zeros((n, hier.dim_complex))
    if idx_s.size:
        lrate_l[idx_s] = np.einsum("nij,nj->ni", jac_l[idx_s], rl_s[idx_s])
        lrate_r[idx_s] = np.einsum("nij,nj->ni", jac_r[idx_s], rr_s[idx_s])
    dval_L5 = np.where(cL[:, None], rr_c[left], lrate_r[left])
    dval_R5 = np.where(cR[:, None], rl_c[right], lrate_l[right])
    wc_dot = 0.5 * (dval_L5 + dval_R5)
    dval_L4 = np.where(cL[:, None], rr_c[left] @ proj.T, rr_s[left])
    dval_R4 = np.where(cR[:, None], rl_c[right] @ proj.T, rl_s[right])
    ws_dot = 0.5 * (dval_L4 + dval_R4)
    return wc, ws, wc_dot, ws_dot


def _hermite(B0, B1, Bdot, dt):
    """Quadratic-in-tau coefficients from end values and the end rate."""
    diff = B1 - B0
    beta = 2.0 * diff - dt * Bdot
    gamma = dt * Bdot - diff
    return B0, beta, gamma


@dataclass
class SlabReconstruction:
    """Per-cell space-time polynomials for one time slab.

    Attributes:
        mesh, hier: discretization context.
        theta: model tags the slab was built under.
        t0, dt: slab start time and width.
        herm_c, herm_s: (B0, beta, gamma) triples of (n, 4, dim) arrays;
            the polynomial in scaled time tau is B0 + beta tau + gamma tau^2.
        herm_cp: reduced-representation reconstruction of the projected
            complex data, used by the model-coarsening residual; rows are
            meaningful on complex cells only.
    """

    mesh: object
    hier: object
    theta: np.ndarray
    t0: float
    dt: float
    herm_c: tuple
    herm_s: tuple
    herm_cp: tuple = None

    def _coeff_at(self, herm, tau):
        B0, beta, gamma = herm
        tau = np.asarray(tau, dtype=np.float64)
        return (B0[..., None] + beta[..., None] * tau
                + gamma[..., None] * tau * tau)

    def _rate_at(self, herm, tau):
        _, beta, gamma = herm
        tau = np.asarray(tau, dtype=np.float64)
        return (beta[..., None] + 2.0 * gamma[..., None] * tau) / self.dt

    def _eval(self, herm, xi, tau, deriv, cells):
        coeff = self._coeff_at(herm, tau) if deriv != "dt" else \
            self._rate_at(herm, tau)
        if cells is not None:
            coeff = coeff[cells]
        if deriv == "dx":
            basis = basis3_derivatives(xi) * (2.0 / self.mesh.h)
        else:
            basis = basis3_values(xi)
        return np.einsum("njkl,jp->nplk", coeff, basis)

    def eval_complex(self, xi, tau, deriv="value", cells=None):
        """Evaluate the full-system reconstruction.

        Args:
            xi: reference space points (p,).
            tau: scaled time points in [0, 1] (l,).
            deriv: "value", "dx" or "dt".
            cells: optional cell indices (default: all cells).

        Returns:
            Array (n_sel, p, l, M).
        """
        return self._eval(self.herm_c, xi, tau, deriv, cells)

    def eval_simple(self, xi, tau, deriv="value", cells=None):
        return self._eval(self.herm_s, xi, tau, deriv, cells)

    def eval_projected(self, xi, tau, deriv="value", cells=None):
        """Evaluate the reduced reconstruction of the projected complex data."""
        return self._eval(self.herm_cp, xi, tau, deriv, cells)


def build_slab(mesh, hier, theta, coeff_c_old, coeff_s_old, coeff_c_new,
               coeff_s_new, rate_c_new, rate_s_new, t0, dt):
    """Assemble the space-time reconstruction for one slab.

    The model map must be the one the slab was advanced under; both
    coefficient sets are interpreted in that map's representations.
    """
    w0 = _face_arrays(theta, coeff_c_old, coeff_s_old, hier)
    w1 = _face_arrays(theta, coeff_c_new, coeff_s_new, hier,
                      rate_c=rate_c_new, rate_s=rate_s_new)
    wc0, ws0 = w0
    wc1, ws1, wc1_dot, ws1_dot = w1

    nxt = (np.arange(theta.shape[0]) + 1) % theta.shape[0]
    B0_c = reconstruct_space(coeff_c_old, wc0, wc0[nxt])
    B1_c = reconstruct_space(coeff_c_new, wc1, wc1[nxt])
    Bd_c = reconstruct_space(rate_c_new, wc1_dot, wc1_dot[nxt])
    B0_s = reconstruct_space(coeff_s_old, ws0, ws0[nxt])
    B1_s = reconstruct_space(coeff_s_new, ws1, ws1[nxt])
    Bd_s = reconstruct_space(rate_s_new, ws1_dot, ws1_dot[nxt])
    # projected complex data, reconstructed in the reduced representation;
    # the reduced face arrays are valid at every face
    pT = hier.projection.T
    B0_p = reconstruct_space(coeff_c_old @ pT, ws0, ws0[nxt])
    B1_p = reconstruct_space(coeff_c_new @ pT, ws1, ws1[nxt])
    Bd_p = reconstruct_space(rate_c_new @ pT, ws1_dot, ws1_dot[nxt])

    return SlabReconstruction(
        mesh=mesh, hier=hier, theta=np.asarray(theta, dtype=np.int8),
        t0=float(t0), dt=float(dt),
        herm_c=_hermite(B0_c, B1_c, Bd_c, dt),
        herm_s=_hermite(B0_s, B1_s, Bd_s, dt),
        herm_cp=_hermite(B0_p, B1_p, Bd_p, dt))


def slab_from_state(mesh, hier, state_old, state_new, rate_new, t0, dt):
    """Convenience wrapper taking MixedDGState objects and a rate pair."""
    if not np.array_equal(state_old.theta, state_new.theta):
        raise ValueError("slab endpoints carry different model maps")
    return build_slab(mesh, hier, state_old.theta,
                      state_old.coeff_c, state_old.coeff_s,
                      state_new.coeff_c, state_new.coeff_s,
                      rate_new[0], rate_new[1], t0, dt)


def residual_complex(slab, cells=None):
    """Full-system residual dtU + dxF(U) - R(U)/eps at the tensor points.

    Returns:
        (cells, U, resid): evaluated cell indices, reconstruction values and
        residual, both (n_sel, 3, 2, M).

    Raises:
        PhysicsError: if any reconstruction value leaves the solver domain.
    """
    hier = slab.hier
    if cells is None:
        cells = np.flatnonzero(slab.theta == 1)
    cells = np.asarray(cells, dtype=np.intp)
    if cells.size == 0:
        z = np.zeros((0, 3, 2, hier.dim_complex))
        return cells, z, z
    U = slab.eval_complex(dg.GAUSS_X, TIME_TAU, "value", cells)
    Ut = slab.eval_complex(dg.GAUSS_X, TIME_TAU, "dt", cells)
    Ux = slab.eval_complex(dg.GAUSS_X, TIME_TAU, "dx", cells)
    flat = U.reshape(-1, hier.dim_complex)
    ok = hier.solver_admissible(flat)
    if not ok.all():
        bad = cells[np.flatnonzero(~ok.reshape(cells.size, -1).all(axis=1))]
        raise PhysicsError(
            "reconstruction left the solver domain in cells %s" % list(bad),
            cells=bad)
    dF = hier.flux_jacobian(flat).reshape(U.shape + (hier.dim_complex,))
    src = hier.source(flat).reshape(U.shape) / hier.epsilon
    resid = Ut + np.einsum("cplij,cplj->cpli", dF, Ux) - src
    return cells, U, resid


def residual_simple(slab, cells=None):
    """Reduced-system residual and its two-part splitting.

    The splitting r_eps is built so its projection cancels structurally
    (P grad-Maxwellian = identity) and r_delta + r_eps reproduces the full
    lifted residual bitwise.

    Returns:
        Dict with "cells", "u", "lifted" and the residual arrays "r_s"
        (n,3,2,m), "R_s", "R_delta", "R_eps" (n,3,2,M).

    Raises:
        PhysicsError: if the lift fails anywhere.
    """
    hier = slab.hier
    if cells is None:
        cells = np.flatnonzero(slab.theta == 0)
    cells = np.asarray(cells, dtype=np.intp)
    m, M = hier.dim_simple, hier.dim_complex
    if cells.size == 0:
        zm = np.zeros((0, 3, 2, m))
        zM = np.zeros((0, 3, 2, M))
        return {"cells": cells, "u": zm, "lifted": zM, "r_s": zm,
                "R_s": zM, "R_delta": zM, "R_eps": zM}
    u = slab.eval_simple(dg.GAUSS_X, TIME_TAU, "value", cells)
    ut = slab.eval_simple(dg.GAUSS_X, TIME_TAU, "dt", cells)
    ux = slab.eval_simple(dg.GAUSS_X, TIME_TAU, "dx", cells)
    flat = u.reshape(-1, m)
    lifted, ok = hier.maxwellian(flat)
    if not ok.all():
        bad = cells[np.flatnonzero(~ok.reshape(cells.size, -1).all(axis=1))]
        raise PhysicsError(
            "equilibrium lift failed on the reconstruction in cells %s"
            % list(bad), cells=bad)
    dM = hier.maxwellian_jacobian(flat)
    dF = hier.flux_jacobian(lifted)
    shape = u.shape[:3]
    dM = dM.reshape(shape + (M, m))
    dF = dF.reshape(shape + (M, M))
    lifted = lifted.reshape(shape + (M,))

    # y = dF(M(u)) dM(u) du/dx, the spatial part of the lifted residual
    y = np.einsum("cplij,cpljk,cplk->cpli", dF, dM, ux)
    r_s = ut + y @ hier.projection.T
    R_delta = np.einsum("cplij,cplj->cpli", dM, r_s)
    R_eps = y - np.einsum("cplij,cplj->cpli", dM, y @ hier.projection.T)
    R_s = R_delta + R_eps
    return {"cells": cells, "u": u, "lifted": lifted, "r_s": r_s,
            "R_s": R_s, "R_delta": R_delta, "R_eps": R_eps}
