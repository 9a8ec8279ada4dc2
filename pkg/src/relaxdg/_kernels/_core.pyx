# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled chemistry kernels.

Scalar per-point transcription of ``reference.py``; that module defines
the semantics, including every bracketing and convergence rule of the
equilibrium lift.  The payoff over the vectorized fallback is that each
Newton lane here exits as soon as it converges instead of riding along
with the slowest lane of the batch.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, exp, fabs, isfinite, log, nextafter, sqrt

cnp.import_array()

# Packed thermo-parameter layout (see ThermoTable.packed).
cdef enum:
    P_M = 0
    P_CV = 3
    P_E0 = 6
    P_SR = 9
    P_RHOR = 12
    P_RGAS = 15
    P_TREF = 16
    P_CRATE = 17
    P_ERATE = 18
    P_LNRHOR = 19
    P_A0 = 22
    P_A1 = 23
    P_A2 = 24

cdef double NU0 = -1.0
cdef double NU1 = 2.0


cdef inline double _spacing(double x) nogil:
    return nextafter(x, INFINITY) - x


cdef inline double _lnK(double T, const double* tb) nogil:
    cdef double Tref = tb[P_TREF]
    cdef double G0 = tb[P_A0] + tb[P_A1] * (T - Tref) + tb[P_A2] * T \
        - tb[P_A1] * T * log(T / Tref)
    return -G0 / (tb[P_RGAS] * T)


cdef inline double _dlnK(double T, const double* tb) nogil:
    cdef double Tref = tb[P_TREF]
    cdef double lnTT = log(T / Tref)
    cdef double G0 = tb[P_A0] + tb[P_A1] * (T - Tref) + tb[P_A2] * T \
        - tb[P_A1] * T * lnTT
    cdef double dG0 = tb[P_A2] - tb[P_A1] * lnTT
    return (G0 - T * dG0) / (tb[P_RGAS] * T * T)


cdef inline void _prim(const double* U, const double* tb,
                       double* v, double* T, double* p) nogil:
    cdef double rho = U[0] + U[1] + U[2]
    v[0] = U[3] / rho
    cdef double e_int = U[4] - 0.5 * U[3] * v[0]
    cdef double num = e_int - (U[0] * tb[P_E0] + U[1] * tb[P_E0 + 1]
                               + U[2] * tb[P_E0 + 2])
    cdef double den = U[0] * tb[P_CV] + U[1] * tb[P_CV + 1] \
        + U[2] * tb[P_CV + 2]
    T[0] = tb[P_TREF] + num / den
    cdef double conc = U[0] / tb[P_M] + U[1] / tb[P_M + 1] \
        + U[2] / tb[P_M + 2]
    p[0] = tb[P_RGAS] * T[0] * conc


cdef inline void _species_entropy(const double* U, double T,
                                  const double* tb, double* s) nogil:
    cdef double lnT = log(T / tb[P_TREF])
    cdef Py_ssize_t k
    for k in range(3):
        s[k] = tb[P_SR + k] + tb[P_CV + k] * lnT \
            - tb[P_RGAS] / tb[P_M + k] * (log(U[k]) - tb[P_LNRHOR + k])


def _coerce(U):
    U = np.ascontiguousarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError("kernel input must be a 2-d state array")
    return U


def primitive(U, tab):
    """Velocity, temperature and pressure from conserved states (n, 5)."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    v_arr = np.empty(n)
    T_arr = np.empty(n)
    p_arr = np.empty(n)
    cdef double[::1] v = v_arr, T = T_arr, p = p_arr
    with nogil:
        for i in range(n):
            _prim(&Um[i, 0], &tb[0], &v[i], &T[i], &p[i])
    return v_arr, T_arr, p_arr


def flux(U, tab):
    """Advective flux of the complex system, (n, 5)."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    F_arr = np.empty((n, 5))
    cdef double[:, ::1] F = F_arr
    cdef double v, T, p
    with nogil:
        for i in range(n):
            _prim(&Um[i, 0], &tb[0], &v, &T, &p)
            F[i, 0] = Um[i, 0] * v
            F[i, 1] = Um[i, 1] * v
            F[i, 2] = Um[i, 2] * v
            F[i, 3] = Um[i, 3] * v + p
            F[i, 4] = (Um[i, 4] + p) * v
    return F_arr


def wave_speed(U, tab):
    """|v| + frozen sound speed, (n,)."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double v, T, p, rho, cv_mix, gamma
    with nogil:
        for i in range(n):
            rho = Um[i, 0] + Um[i, 1] + Um[i, 2]
            _prim(&Um[i, 0], &tb[0], &v, &T, &p)
            cv_mix = (Um[i, 0] * tb[P_CV] + Um[i, 1] * tb[P_CV + 1]
                      + Um[i, 2] * tb[P_CV + 2]) / rho
            gamma = 1.0 + p / (rho * T * cv_mix)
            out[i] = fabs(v) + sqrt(gamma * p / rho)
    return out_arr


def log_equilibrium_ratio(T, tab):
    """log K(T) on the equilibrium manifold, K = rho_atom^2 / rho_mol."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    cdef double[::1] Tm = T.ravel()
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Tm.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _lnK(Tm[i], &tb[0])
    return out_arr.reshape(T.shape)


def dlog_equilibrium_ratio_dT(T, tab):
    """Temperature derivative of log K(T)."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    cdef double[::1] Tm = T.ravel()
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Tm.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _dlnK(Tm[i], &tb[0])
    return out_arr.reshape(T.shape)


def forward_rate(T, tab):
    """Arrhenius-type forward rate constant k_f(T)."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    cdef double[::1] Tm = T.ravel()
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Tm.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = tb[P_CRATE] * exp(-tb[P_ERATE] / Tm[i]) \
                / (Tm[i] * Tm[i])
    return out_arr.reshape(T.shape)


cdef inline double _rate_one(const double* U, const double* tb) nogil:
    cdef double v, T, p
    _prim(U, tb, &v, &T, &p)
    cdef double conc = U[0] / tb[P_M] + U[1] / tb[P_M + 1] \
        + U[2] / tb[P_M + 2]
    cdef double x_inert = U[2] / tb[P_M + 2] / conc
    cdef double K = exp(_lnK(T, tb))
    cdef double w = U[0] - U[1] * U[1] / K
    cdef double kf = tb[P_CRATE] * exp(-tb[P_ERATE] / T) / (T * T)
    return kf * x_inert * w / (tb[P_M] * conc)


def reaction_rate(U, tab):
    """Molar reaction rate (n,); positive when dissociation runs forward."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _rate_one(&Um[i, 0], &tb[0])
    return out_arr


def source(U, tab):
    """Reactive source term of the complex system, (n, 5)."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    S_arr = np.zeros((n, 5))
    cdef double[:, ::1] S = S_arr
    cdef double r
    with nogil:
        for i in range(n):
            r = _rate_one(&Um[i, 0], &tb[0])
            S[i, 0] = NU0 * tb[P_M] * r
            S[i, 1] = NU1 * tb[P_M + 1] * r
    return S_arr


def entropy(U, tab):
    """Mathematical entropy H = -rho s, (n,).  NaN if a density is <= 0."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double v, T, p
    cdef double s[3]
    with nogil:
        for i in range(n):
            _prim(&Um[i, 0], &tb[0], &v, &T, &p)
            _species_entropy(&Um[i, 0], T, &tb[0], s)
            out[i] = -(Um[i, 0] * s[0] + Um[i, 1] * s[1] + Um[i, 2] * s[2])
    return out_arr


def entropy_flux(U, tab):
    """Entropy flux Q = -rho s v, (n,)."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double v, T, p
    cdef double s[3]
    with nogil:
        for i in range(n):
            _prim(&Um[i, 0], &tb[0], &v, &T, &p)
            _species_entropy(&Um[i, 0], T, &tb[0], s)
            out[i] = -(Um[i, 0] * s[0] + Um[i, 1] * s[1]
                       + Um[i, 2] * s[2]) * v
    return out_arr


def entropy_grad(U, tab):
    """Gradient of H w.r.t. conserved variables, (n, 5)."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i, k
    W_arr = np.empty((n, 5))
    cdef double[:, ::1] W = W_arr
    cdef double v, T, p, half_v2, e_k, g_k
    cdef double s[3]
    with nogil:
        for i in range(n):
            _prim(&Um[i, 0], &tb[0], &v, &T, &p)
            _species_entropy(&Um[i, 0], T, &tb[0], s)
            half_v2 = 0.5 * v * v
            for k in range(3):
                e_k = tb[P_E0 + k] + tb[P_CV + k] * (T - tb[P_TREF])
                g_k = e_k + tb[P_RGAS] / tb[P_M + k] * T - T * s[k]
                W[i, k] = (g_k - half_v2) / T
            W[i, 3] = v / T
            W[i, 4] = -1.0 / T
    return W_arr


def affinity(U, tab):
    """Reaction affinity sum_k nu_k m_k g_k, (n,).  Zero on the manifold."""
    U = _coerce(U)
    cdef double[:, ::1] Um = U
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = Um.shape[0], i
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double v, T, p, lnratio
    with nogil:
        for i in range(n):
            _prim(&Um[i, 0], &tb[0], &v, &T, &p)
            lnratio = 2.0 * log(Um[i, 1]) - log(Um[i, 0])
            out[i] = tb[P_RGAS] * T * (lnratio - _lnK(T, &tb[0]))
    return out_arr


cdef inline double _psi(double x, double u1, double n0, double n1,
                        double d0, double d1, const double* tb,
                        double* dpsi, double* Tout) nogil:
    """Log-affinity residual and slope at atom density x.

    Mirrors the reference: a nonpositive temperature yields psi = NaN
    while the slope is still evaluated at the T = 1 placeholder.
    """
    cdef double Tref = tb[P_TREF]
    cdef double den = d0 + d1 * x
    cdef double T = Tref + (n0 + n1 * x) / den
    cdef double Ts = T if T > 0.0 else 1.0
    cdef double psi = 2.0 * log(x) - log(u1 - x) - _lnK(Ts, tb)
    cdef double dT = (n1 - (Ts - Tref) * d1) / den
    dpsi[0] = 2.0 / x + 1.0 / (u1 - x) - _dlnK(Ts, tb) * dT
    Tout[0] = T
    if not T > 0.0:
        psi = NAN
    return psi


cdef int _lift_one(double u1, double u2, double mom, double Et,
                   const double* tb, double tol, int max_iter,
                   double* xout) nogil:
    """Solve the scalar equilibrium equation for one reduced state.

    Returns 1 and the atom density on success, 0 on failure.
    """
    cdef double rho = u1 + u2
    if not (u1 > 0.0 and u2 >= 0.0 and rho > 0.0):
        return 0
    if not (isfinite(u1) and isfinite(u2) and isfinite(mom)
            and isfinite(Et)):
        return 0

    cdef double Tref = tb[P_TREF]
    cdef double e_int = Et - 0.5 * mom * mom / rho
    cdef double n0 = e_int - u1 * tb[P_E0] - u2 * tb[P_E0 + 2]
    cdef double n1 = tb[P_E0] - tb[P_E0 + 1]
    cdef double d0 = u1 * tb[P_CV] + u2 * tb[P_CV + 2]
    cdef double d1 = tb[P_CV + 1] - tb[P_CV]

    cdef double tiny = 1e-14
    cdef double lo = u1 * tiny
    cdef double hi = u1 * (1.0 - tiny)

    # Restrict the bracket to where T(x) > 0: q0 + q1 x > 0.
    cdef double q0 = Tref * d0 + n0
    cdef double q1 = Tref * d1 + n1
    cdef double x_zero = -q0 / (q1 if q1 != 0.0 else 1.0)
    cdef double margin = 1e-12 * (u1 if u1 > 1.0 else 1.0)
    cdef bint grow = q1 > 0.0
    cdef bint need = (q0 + q1 * lo <= 0.0) or (q0 + q1 * hi <= 0.0)
    if need and grow and x_zero + margin > lo:
        lo = x_zero + margin
    if need and not grow and x_zero - margin < hi:
        hi = x_zero - margin
    if not lo < hi:
        return 0
    cdef double mid = 0.5 * (lo + hi)
    cdef double Tm = Tref + (n0 + n1 * mid) / (d0 + d1 * mid)
    if not Tm > 0.0:
        return 0

    cdef double dpsi, Tx
    cdef double psi_lo = _psi(lo, u1, n0, n1, d0, d1, tb, &dpsi, &Tx)
    cdef double psi_hi = _psi(hi, u1, n0, n1, d0, d1, tb, &dpsi, &Tx)

    # Near-total dissociation or recombination puts the root inside the
    # default clamp sliver; widen toward the representable limits.
    cdef double cap
    if not psi_hi > 0.0:
        cap = nextafter(u1, 0.0)
        if (not grow) and x_zero < u1 and x_zero - margin < cap:
            cap = x_zero - margin
        if cap > hi:
            hi = cap
            psi_hi = _psi(hi, u1, n0, n1, d0, d1, tb, &dpsi, &Tx)
    if not psi_lo < 0.0:
        cap = u1 * 1e-250
        if grow and x_zero > 0.0 and x_zero + margin > cap:
            cap = x_zero + margin
        if cap < lo:
            lo = cap
            psi_lo = _psi(lo, u1, n0, n1, d0, d1, tb, &dpsi, &Tx)

    cdef bint pinned = isfinite(psi_lo) and isfinite(psi_hi) \
        and psi_lo < 0.0 and not psi_hi > 0.0 \
        and u1 - hi <= 8.0 * _spacing(u1)
    if pinned:
        xout[0] = hi
        Tx = Tref + (n0 + n1 * hi) / (d0 + d1 * hi)
        return isfinite(hi) and Tx > 0.0
    if not (isfinite(psi_lo) and isfinite(psi_hi)
            and psi_lo < 0.0 and psi_hi > 0.0):
        return 0

    # Warm start from the mass-action quadratic at the bracket-midpoint T,
    # in the cancellation-free conjugate form.
    mid = 0.5 * (lo + hi)
    Tm = Tref + (n0 + n1 * mid) / (d0 + d1 * mid)
    if not Tm > 1e-8:
        Tm = 1e-8
    cdef double lnK0 = _lnK(Tm, tb)
    cdef double x, c
    if lnK0 > log(u1) + 36.0:
        c = u1 * exp(-lnK0)
        if c < 1e-15:
            c = 1e-15
        if c > 0.5:
            c = 0.5
        x = u1 * (1.0 - c)
    else:
        x = 2.0 * u1 / (1.0 + sqrt(1.0 + 4.0 * u1 / exp(lnK0)))
    if x < lo:
        x = lo
    if x > hi:
        x = hi

    cdef double psi, raw, xn
    cdef bint polished = False, step_ok, bad, done
    cdef int it
    cdef bint converged = False
    for it in range(max_iter):
        psi = _psi(x, u1, n0, n1, d0, d1, tb, &dpsi, &Tx)
        if psi > 0.0:
            hi = x
        elif isfinite(psi):
            lo = x
        step_ok = isfinite(psi) and isfinite(dpsi) and dpsi != 0.0
        raw = x - psi / dpsi if step_ok else 0.5 * (lo + hi)
        bad = (not isfinite(raw)) or raw <= lo or raw >= hi
        xn = 0.5 * (lo + hi) if bad else raw
        # A Newton update below a few ulps of x means x already is the
        # best representable root; exit before the bracket check can
        # bounce the iterate back to the midpoint.
        if step_ok and isfinite(psi) \
                and fabs(raw - x) <= 4.0 * _spacing(fabs(x)):
            converged = True
            break
        done = isfinite(psi) and (fabs(psi) < tol
                                  or hi - lo <= 4.0 * _spacing(hi))
        if done and polished:
            converged = True
            break
        if done:
            polished = True
        x = xn
    if not converged:
        # Bisection fallback for a lane the Newton loop did not converge.
        for it in range(200):
            psi = _psi(x, u1, n0, n1, d0, d1, tb, &dpsi, &Tx)
            if psi > 0.0:
                hi = x
            else:
                lo = x
            if hi - lo <= 2.0 * _spacing(hi):
                break
            x = 0.5 * (lo + hi)

    Tx = Tref + (n0 + n1 * x) / (d0 + d1 * x)
    if not (isfinite(x) and Tx > 0.0):
        return 0
    xout[0] = x
    return 1


def maxwellian(u, tab, double tol=1e-13, int max_iter=50):
    """Equilibrium lift of reduced states u (n, 4) -> (U (n, 5), ok (n,)).

    Same contract as the reference implementation: failed lanes get NaN
    states and ok=False instead of raising.
    """
    u = _coerce(u)
    cdef double[:, ::1] um = u
    cdef double[::1] tb = np.ascontiguousarray(tab, dtype=np.float64)
    cdef Py_ssize_t n = um.shape[0], i
    U_arr = np.empty((n, 5))
    ok_arr = np.empty(n, dtype=np.bool_)
    cdef double[:, ::1] Um = U_arr
    cdef cnp.uint8_t[::1] okm = ok_arr.view(np.uint8)
    cdef double x
    cdef int good
    with nogil:
        for i in range(n):
            good = _lift_one(um[i, 0], um[i, 1], um[i, 2], um[i, 3],
                             &tb[0], tol, max_iter, &x)
            okm[i] = 1 if good else 0
            if good:
                Um[i, 0] = um[i, 0] - x
                Um[i, 1] = x
                Um[i, 2] = um[i, 1]
                Um[i, 3] = um[i, 2]
                Um[i, 4] = um[i, 3]
            else:
                Um[i, 0] = Um[i, 1] = Um[i, 2] = Um[i, 3] = Um[i, 4] = NAN
    return U_arr, ok_arr
