"""Vectorized numpy implementation of the hot chemistry kernels.

These functions are the reference semantics for the compiled backend in
``_core.pyx``; both operate on C-contiguous 2D float64 arrays of states
(one row per point) plus a packed parameter vector produced by
``relaxdg.chem.ThermoTable.packed``.

State layout (complex system, 5 components):
    [rho_mol, rho_atom, rho_inert, momentum, total_energy]
where ``rho_mol`` is the dissociating molecule (O2), ``rho_atom`` the atom
(O) and ``rho_inert`` the catalyst (N2).  Reduced states (4 components) are
    [rho_mol + rho_atom, rho_inert, momentum, total_energy].

The packed parameter layout is defined by the ``P_*`` index constants below.
"""

import numpy as np

# Packed thermo-parameter layout (see ThermoTable.packed).
P_M = 0        # 3 molar masses [kg/mol]
P_CV = 3       # 3 specific heats at constant volume [J/(kg K)]
P_E0 = 6       # 3 reference internal energies [J/kg]
P_SR = 9       # 3 reference entropies, specific [J/(kg K)]
P_RHOR = 12    # 3 reference densities [kg/m^3]
P_RGAS = 15    # molar gas constant [J/(mol K)]
P_TREF = 16    # reference temperature [K]
P_CRATE = 17   # forward-rate prefactor
P_ERATE = 18   # forward-rate activation temperature [K]
P_LNRHOR = 19  # 3 precomputed log(rho_ref)
P_A0 = 22      # affinity polynomial: sum_k nu_k m_k e0_k
P_A1 = 23      # affinity polynomial: sum_k nu_k m_k cv_k
P_A2 = 24      # affinity polynomial: sum_k nu_k (R - m_k sR_k - R ln rhoR_k)
NPACK = 25

# Stoichiometry of mol + inert <-> 2 atom + inert, fixed by the state layout.
NU = (-1.0, 2.0, 0.0)


def primitive(U, tab):
    """Velocity, temperature and pressure from conserved states (n, 5)."""
    rho = U[:, 0] + U[:, 1] + U[:, 2]
    v = U[:, 3] / rho
    e_int = U[:, 4] - 0.5 * U[:, 3] * v
    num = e_int - (U[:, 0] * tab[P_E0] + U[:, 1] * tab[P_E0 + 1] + U[:, 2] * tab[P_E0 + 2])
    den = U[:, 0] * tab[P_CV] + U[:, 1] * tab[P_CV + 1] + U[:, 2] * tab[P_CV + 2]
    T = tab[P_TREF] + num / den
    conc = U[:, 0] / tab[P_M] + U[:, 1] / tab[P_M + 1] + U[:, 2] / tab[P_M + 2]
    p = tab[P_RGAS] * T * conc
    return v, T, p


def flux(U, tab):
    """Advective flux of the complex system, (n, 5)."""
    v, T, p = primitive(U, tab)
    F = np.empty_like(U)
    F[:, 0] = U[:, 0] * v
    F[:, 1] = U[:, 1] * v
    F[:, 2] = U[:, 2] * v
    F[:, 3] = U[:, 3] * v + p
    F[:, 4] = (U[:, 4] + p) * v
    return F


def wave_speed(U, tab):
    """|v| + frozen sound speed, (n,)."""
    rho = U[:, 0] + U[:, 1] + U[:, 2]
    v, T, p = primitive(U, tab)
    cv_mix = (U[:, 0] * tab[P_CV] + U[:, 1] * tab[P_CV + 1] + U[:, 2] * tab[P_CV + 2]) / rho
    gamma = 1.0 + p / (rho * T * cv_mix)
    return np.abs(v) + np.sqrt(gamma * p / rho)


def log_equilibrium_ratio(T, tab):
    """log K(T) where K = rho_atom^2 / rho_mol on the equilibrium manifold.

    K(T) = exp(-G0(T) / (R T)) with G0 the composition-independent part of
    the reaction affinity sum_k nu_k m_k g_k.
    """
    Tref = tab[P_TREF]
    G0 = tab[P_A0] + tab[P_A1] * (T - Tref) + tab[P_A2] * T - tab[P_A1] * T * np.log(T / Tref)
    return -G0 / (tab[P_RGAS] * T)


def dlog_equilibrium_ratio_dT(T, tab):
    """Temperature derivative of log K(T)."""
    Tref = tab[P_TREF]
    lnTT = np.log(T / Tref)
    G0 = tab[P_A0] + tab[P_A1] * (T - Tref) + tab[P_A2] * T - tab[P_A1] * T * lnTT
    dG0 = tab[P_A2] - tab[P_A1] * lnTT
    return (G0 - T * dG0) / (tab[P_RGAS] * T * T)


def forward_rate(T, tab):
    """Arrhenius-type forward rate constant k_f(T)."""
    return tab[P_CRATE] * T ** -2.0 * np.exp(-tab[P_ERATE] / T)


def reaction_rate(U, tab):
    """Molar reaction rate (n,); positive when dissociation runs forward."""
    v, T, p = primitive(U, tab)
    conc = U[:, 0] / tab[P_M] + U[:, 1] / tab[P_M + 1] + U[:, 2] / tab[P_M + 2]
    x_inert = U[:, 2] / tab[P_M + 2] / conc
    K = np.exp(log_equilibrium_ratio(T, tab))
    w = U[:, 0] - U[:, 1] * U[:, 1] / K
    return forward_rate(T, tab) * x_inert * w / (tab[P_M] * conc)


def source(U, tab):
    """Reactive source term of the complex system, (n, 5)."""
    r = reaction_rate(U, tab)
    S = np.zeros_like(U)
    S[:, 0] = NU[0] * tab[P_M] * r
    S[:, 1] = NU[1] * tab[P_M + 1] * r
    return S


def _species_entropy(U, T, tab):
    with np.errstate(invalid="ignore", divide="ignore"):
        lnT = np.log(T / tab[P_TREF])
        s = np.empty_like(U[:, :3])
        for k in range(3):
            s[:, k] = (
                tab[P_SR + k]
                + tab[P_CV + k] * lnT
                - tab[P_RGAS] / tab[P_M + k] * (np.log(U[:, k]) - tab[P_LNRHOR + k])
            )
    return s


def entropy(U, tab):
    """Mathematical entropy H = -rho s, (n,).  NaN if a density is <= 0."""
    v, T, p = primitive(U, tab)
    s = _species_entropy(U, T, tab)
    return -(U[:, 0] * s[:, 0] + U[:, 1] * s[:, 1] + U[:, 2] * s[:, 2])


def entropy_flux(U, tab):
    """Entropy flux Q = -rho s v, (n,)."""
    v, T, p = primitive(U, tab)
    s = _species_entropy(U, T, tab)
    return -(U[:, 0] * s[:, 0] + U[:, 1] * s[:, 1] + U[:, 2] * s[:, 2]) * v


def entropy_grad(U, tab):
    """Gradient of H w.r.t. conserved variables, (n, 5).

    Rows are ((g_k - v^2/2)/T, v/T, -1/T) with g_k the specific Gibbs energy
    of species k at its partial density.
    """
    v, T, p = primitive(U, tab)
    s = _species_entropy(U, T, tab)
    W = np.empty_like(U)
    half_v2 = 0.5 * v * v
    for k in range(3):
        e_k = tab[P_E0 + k] + tab[P_CV + k] * (T - tab[P_TREF])
        g_k = e_k + tab[P_RGAS] / tab[P_M + k] * T - T * s[:, k]
        W[:, k] = (g_k - half_v2) / T
    W[:, 3] = v / T
    W[:, 4] = -1.0 / T
    return W


def affinity(U, tab):
    """Reaction affinity sum_k nu_k m_k g_k, (n,).  Zero on the manifold."""
    v, T, p = primitive(U, tab)
    with np.errstate(invalid="ignore", divide="ignore"):
        lnratio = 2.0 * np.log(U[:, 1]) - np.log(U[:, 0])
    return tab[P_RGAS] * T * (lnratio - log_equilibrium_ratio(T, tab))


def maxwellian(u, tab, tol=1e-13, max_iter=50):
    """Equilibrium lift of reduced states u (n, 4) -> (U (n, 5), ok (n,)).

    Solves the scalar log-affinity equation for the atom density; the
    temperature unknown is eliminated exactly through the caloric closure
    (linear in T).  Safeguarded Newton within the bracket (0, u1), followed
    by plain bisection for lanes that have not converged after ``max_iter``
    iterations.  Failed lanes get NaN states and ok=False instead of
    raising; callers decide the error policy.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[0]
    u1, u2, mom, Et = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    rho = u1 + u2
    ok = (u1 > 0.0) & (u2 >= 0.0) & (rho > 0.0) & np.isfinite(u).all(axis=1)

    safe_rho = np.where(rho > 0.0, rho, 1.0)
    e_int = Et - 0.5 * mom * mom / safe_rho
    # T(x) = Tref + (n0 + n1 x) / (d0 + d1 x) for atom density x.
    n0 = e_int - u1 * tab[P_E0] - u2 * tab[P_E0 + 2]
    n1 = tab[P_E0] - tab[P_E0 + 1]
    d0 = u1 * tab[P_CV] + u2 * tab[P_CV + 2]
    d1 = tab[P_CV + 1] - tab[P_CV]
    Tref = tab[P_TREF]

    def temperature(x):
        return Tref + (n0 + n1 * x) / (d0 + d1 * x)

    def psi_and_slope(x):
        den = d0 + d1 * x
        T = Tref + (n0 + n1 * x) / den
        bad = ~(T > 0.0)
        Ts = np.where(bad, 1.0, T)
        psi = 2.0 * np.log(x) - np.log(u1 - x) - log_equilibrium_ratio(Ts, tab)
        dT = (n1 - (Ts - Tref) * d1) / den
        dpsi = 2.0 / x + 1.0 / (u1 - x) - dlog_equilibrium_ratio_dT(Ts, tab) * dT
        psi = np.where(bad, np.nan, psi)
        return psi, dpsi, T

    tiny = 1e-14
    lo = np.where(ok, u1 * tiny, 0.25)
    hi = np.where(ok, u1 * (1.0 - tiny), 0.75)

    # Restrict the bracket to where T(x) > 0: q0 + q1 x > 0.
    q0 = Tref * d0 + n0
    q1 = Tref * d1 + n1
    with np.errstate(invalid="ignore", divide="ignore"):
        x_zero = -q0 / np.where(q1 != 0.0, q1, 1.0)
    margin = 1e-12 * np.maximum(u1, 1.0)
    grow = q1 > 0.0
    need = (q0 + q1 * lo <= 0.0) | (q0 + q1 * hi <= 0.0)
    lo = np.where(need & grow, np.maximum(lo, x_zero + margin), lo)
    hi = np.where(need & ~grow, np.minimum(hi, x_zero - margin), hi)
    ok &= lo < hi
    ok &= temperature(np.clip(0.5 * (lo + hi), lo, hi)) > 0.0

    lo_s = np.where(ok, lo, 0.25)
    hi_s = np.where(ok, hi, 0.75)
    u1_s = np.where(ok, u1, 1.0)

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        psi_lo, _, _ = psi_and_slope(np.where(ok, lo_s, 0.25))
        psi_hi, _, _ = psi_and_slope(np.where(ok, hi_s, 0.75))

    # Near-total dissociation or recombination puts the root inside the
    # default clamp sliver; widen toward the representable limits (keeping
    # any binding T > 0 restriction) and re-check the sign change.
    widen_hi = ok & ~(psi_hi > 0.0)
    widen_lo = ok & ~(psi_lo < 0.0)
    if widen_hi.any():
        hi_cap = np.nextafter(u1_s, 0.0)
        t_bound = ~grow & (x_zero < u1_s)
        hi_cap = np.where(t_bound, np.minimum(hi_cap, x_zero - margin), hi_cap)
        hi_s = np.where(widen_hi, np.maximum(hi_s, hi_cap), hi_s)
    if widen_lo.any():
        lo_cap = u1_s * 1e-250
        t_bound = grow & (x_zero > 0.0)
        lo_cap = np.where(t_bound, np.maximum(lo_cap, x_zero + margin), lo_cap)
        lo_s = np.where(widen_lo, np.minimum(lo_s, lo_cap), lo_s)
    if widen_hi.any() or widen_lo.any():
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            psi_lo, _, _ = psi_and_slope(np.where(ok, lo_s, 0.25))
            psi_hi, _, _ = psi_and_slope(np.where(ok, hi_s, 0.75))
    # When the equilibrium molecular density is below one ulp of the
    # reduced oxygen density, no representable atom density produces a
    # sign change; the widened upper cap is then the closest double to
    # the root and is accepted as the solution.
    pinned = ok & np.isfinite(psi_lo) & np.isfinite(psi_hi) & \
        (psi_lo < 0.0) & ~(psi_hi > 0.0) & \
        (u1_s - hi_s <= 8.0 * np.spacing(u1_s))
    ok &= pinned | (np.isfinite(psi_lo) & np.isfinite(psi_hi) &
                    (psi_lo < 0.0) & (psi_hi > 0.0))

    # Warm start from the mass-action quadratic at the bracket-midpoint T,
    # in the conjugate form 2 u1 / (1 + sqrt(1 + 4 u1 / K)): the textbook
    # root formula cancels catastrophically for K >> u1 and would strand
    # the Newton iteration a bisection-width away from the root.
    lnK0 = log_equilibrium_ratio(np.maximum(temperature(0.5 * (lo_s + hi_s)), 1e-8), tab)
    big = lnK0 > np.log(u1_s) + 36.0
    K0 = np.exp(np.where(big, 0.0, lnK0))
    x = np.where(
        big,
        u1_s * (1.0 - np.clip(u1_s * np.exp(-np.where(big, lnK0, 0.0)), 1e-15, 0.5)),
        2.0 * u1_s / (1.0 + np.sqrt(1.0 + 4.0 * u1_s / K0)),
    )
    x = np.clip(x, lo_s, hi_s)
    x = np.where(pinned, hi_s, x)
    x = np.where(ok, x, 0.5)

    active = ok & ~pinned
    polish = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            psi, dpsi, _ = psi_and_slope(x)
        shrink_hi = active & (psi > 0.0)
        shrink_lo = active & (psi <= 0.0) & np.isfinite(psi)
        hi_s = np.where(shrink_hi, x, hi_s)
        lo_s = np.where(shrink_lo, x, lo_s)
        step_ok = np.isfinite(psi) & np.isfinite(dpsi) & (dpsi != 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            raw = np.where(step_ok, x - psi / dpsi, 0.5 * (lo_s + hi_s))
        bad = ~np.isfinite(raw) | (raw <= lo_s) | (raw >= hi_s)
        xn = np.where(bad, 0.5 * (lo_s + hi_s), raw)
        # A Newton update below a few ulps of x means x already is the
        # best representable root (the residual slope blows up like
        # 1/rho_mol near full dissociation, so |psi| < tol can be
        # unreachable in double precision); retire such lanes at once,
        # before the bracket check can bounce them to the midpoint.
        stalled = active & step_ok & np.isfinite(psi) & \
            (np.abs(raw - x) <= 4.0 * np.spacing(np.abs(x)))
        resolved = (hi_s - lo_s) <= 4.0 * np.spacing(hi_s)
        done = active & np.isfinite(psi) & \
            ((np.abs(psi) < tol) | resolved) & ~stalled
        # One extra Newton polish after hitting the tolerance.
        newly = done & ~polish
        polish |= done
        active &= ~((done & ~newly) | stalled)
        x = np.where(active, xn, x)
    else:
        # Bisection fallback for lanes the Newton loop did not converge.
        stubborn = active.copy()
        for _ in range(200):
            if not stubborn.any():
                break
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                psi, _, _ = psi_and_slope(x)
            hi_s = np.where(stubborn & (psi > 0.0), x, hi_s)
            lo_s = np.where(stubborn & ~(psi > 0.0), x, lo_s)
            stubborn &= (hi_s - lo_s) > 2.0 * np.spacing(hi_s)
            x = np.where(stubborn, 0.5 * (lo_s + hi_s), x)

    T = temperature(np.where(ok, x, 0.5))
    ok &= np.isfinite(x) & (T > 0.0)
    U = np.empty((n, 5))
    U[:, 0] = u1 - x
    U[:, 1] = x
    U[:, 2] = u2
    U[:, 3] = mom
    U[:, 4] = Et
    U[~ok] = np.nan
    return U, ok
