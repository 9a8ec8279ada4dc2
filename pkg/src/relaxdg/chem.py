"""Dissociating-oxygen mixture with inert catalyst: closures and derivatives.

Implements the complex balance-law system

    d_t U + d_x F(U) = (1/eps) R(U),   U = (rho_O2, rho_O, rho_N2, rho v, rho E)

for the reaction O2 + N2 <-> 2 O + N2, together with everything the
model-adaptation machinery needs: the projection onto the reduced variables,
the equilibrium (Maxwellian) lift, the entropy pair and its derivatives, and
analytic Jacobians/Hessians of flux, source and entropy.

Units are SI throughout.  The caloric closure is e_k(T) = e0_k + cv_k (T -
T_ref), which makes temperature an explicit (linear) function of the
conserved state.  The equilibrium constant is derived from the specific
Gibbs energies implied by the entropy closure, so the second law
(grad H . R <= 0) holds identically; see ``reaction_rate``.

Hot per-point evaluations are delegated to :mod:`relaxdg._kernels`, which
selects a compiled core when available and a numpy fallback otherwise.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._kernels.reference import (
    NPACK,
    P_A0,
    P_A1,
    P_A2,
    P_CRATE,
    P_CV,
    P_E0,
    P_ERATE,
    P_LNRHOR,
    P_M,
    P_RGAS,
    P_RHOR,
    P_SR,
    P_TREF,
)

SPECIES = ("O2", "O", "N2")
NU_STOICH = np.array([-1.0, 2.0, 0.0])
CV_FACTORS = (2.5, 1.5, 2.5)

#: Projection of complex states onto reduced states: total oxygen mass,
#: catalyst mass, momentum, total energy.
PROJECTION = np.array(
    [
        [1.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ]
)

_TABLE_DEFAULTS = {
    "m": (0.032, 0.016, 0.028),
    "e0": (249200.0, 0.0, 0.0),
    "s_ref_molar": (205.15, 161.1, 191.61),
    "rho_ref": (1145.0, 1141.0, 1308.0),
    "alpha": (1.0, 0.0, 1.0),
    "beta": (0.0, 2.0, 1.0),
}


class ChemistryError(ValueError):
    """Inadmissible thermodynamic state or failed equilibrium solve."""


@dataclass
class ThermoTable:
    """Species data and rate-law constants for the O2/O/N2 mixture.

    Attributes:
        m: molar masses [kg/mol].
        cv: specific heats at constant volume [J/(kg K)].
        e0: reference specific internal energies at T_ref [J/kg].
        s_ref_molar: reference molar entropies [J/(mol K)]; converted to
            specific entropies (divide by m) wherever s_k is evaluated.
        rho_ref: reference densities [kg/m^3].
        alpha, beta: reactant/product stoichiometric coefficients.
        gas_constant: molar gas constant R [J/(mol K)].
        T_ref: reference temperature [K].
        p_ref: reference pressure [Pa] (recorded, not used by the closures).
        rate_prefactor, rate_activation_temp: forward rate k_f(T) =
            prefactor * T^-2 * exp(-activation/T).
    """

    m: tuple = _TABLE_DEFAULTS["m"]
    cv: tuple = ()
    e0: tuple = _TABLE_DEFAULTS["e0"]
    s_ref_molar: tuple = _TABLE_DEFAULTS["s_ref_molar"]
    rho_ref: tuple = _TABLE_DEFAULTS["rho_ref"]
    alpha: tuple = _TABLE_DEFAULTS["alpha"]
    beta: tuple = _TABLE_DEFAULTS["beta"]
    gas_constant: float = 8.314
    T_ref: float = 2000.0
    p_ref: float = 1.01325e5
    rate_prefactor: float = 2.9e13
    rate_activation_temp: float = 597.5
    literal_cv_table: bool = False
    _packed: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.cv:
            # Default normalization uses each species' own molar mass; the
            # literal variant divides every factor by m(O2) as printed.
            ref_mass = [self.m[0]] * 3 if self.literal_cv_table else list(self.m)
            self.cv = tuple(
                f * self.gas_constant / mk for f, mk in zip(CV_FACTORS, ref_mass)
            )
        for name in ("m", "cv", "rho_ref"):
            if any(x <= 0.0 for x in getattr(self, name)):
                raise ChemistryError(f"ThermoTable.{name} must be positive")
        if self.T_ref <= 0.0 or self.gas_constant <= 0.0:
            raise ChemistryError("T_ref and gas_constant must be positive")
        nu = [b - a for a, b in zip(self.alpha, self.beta)]
        mass_defect = sum(n * mk for n, mk in zip(nu, self.m))
        if abs(mass_defect) > 1e-12 * max(self.m):
            raise ChemistryError(f"reaction does not conserve mass: {mass_defect}")
        self._packed = self._pack()

    @property
    def nu(self):
        return tuple(b - a for a, b in zip(self.alpha, self.beta))

    @property
    def packed(self) -> np.ndarray:
        """Flat float64 parameter vector consumed by the kernels."""
        return self._packed

    def _pack(self) -> np.ndarray:
        tab = np.zeros(NPACK)
        R = self.gas_constant
        tab[P_M : P_M + 3] = self.m
        tab[P_CV : P_CV + 3] = self.cv
        tab[P_E0 : P_E0 + 3] = self.e0
        tab[P_SR : P_SR + 3] = [s / mk for s, mk in zip(self.s_ref_molar, self.m)]
        tab[P_RHOR : P_RHOR + 3] = self.rho_ref
        tab[P_RGAS] = R
        tab[P_TREF] = self.T_ref
        tab[P_CRATE] = self.rate_prefactor
        tab[P_ERATE] = self.rate_activation_temp
        tab[P_LNRHOR : P_LNRHOR + 3] = [math.log(r) for r in self.rho_ref]
        nu = self.nu
        tab[P_A0] = sum(n * mk * e for n, mk, e in zip(nu, self.m, self.e0))
        tab[P_A1] = sum(n * mk * c for n, mk, c in zip(nu, self.m, self.cv))
        tab[P_A2] = sum(
            n * (R - s - R * math.log(r))
            for n, s, r in zip(nu, self.s_ref_molar, self.rho_ref)
        )
        return tab

    @classmethod
    def from_file(cls, path) -> "ThermoTable":
        """Load a table from an INI-style file; see README for the schema."""
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        read = cp.read(path)
        if not read:
            raise ChemistryError(f"cannot read thermo table {path!r}")
        species_keys = {"m", "cv", "e0", "s_ref_molar", "rho_ref", "alpha", "beta"}
        per_species = {k: [None] * 3 for k in species_keys}
        kwargs = {}
        for section in cp.sections():
            if section.startswith("species."):
                name = section.split(".", 1)[1]
                if name not in SPECIES:
                    raise ChemistryError(f"unknown species section {section!r}")
                idx = SPECIES.index(name)
                for key, val in cp[section].items():
                    if key not in species_keys:
                        raise ChemistryError(f"unknown key {key!r} in {section!r}")
                    per_species[key][idx] = float(val)
            elif section == "reaction":
                known = {
                    "prefactor": "rate_prefactor",
                    "activation_temperature": "rate_activation_temp",
                }
                for key, val in cp[section].items():
                    if key not in known:
                        raise ChemistryError(f"unknown key {key!r} in [reaction]")
                    kwargs[known[key]] = float(val)
            elif section == "constants":
                known = {"gas_constant": "gas_constant", "t_ref": "T_ref", "p_ref": "p_ref"}
                for key, val in cp[section].items():
                    if key not in known:
                        raise ChemistryError(f"unknown key {key!r} in [constants]")
                    kwargs[known[key]] = float(val)
            else:
                raise ChemistryError(f"unknown section {section!r} in thermo table")
        for key, vals in per_species.items():
            if any(v is None for v in vals):
                missing = [SPECIES[i] for i, v in enumerate(vals) if v is None]
                raise ChemistryError(f"table key {key!r} missing for species {missing}")
            kwargs[key] = tuple(vals)
        return cls(**kwargs)


@dataclass
class PrimitiveState:
    """Primitive mirror of a batch of conserved states."""

    rho: np.ndarray  # (..., 3) partial densities
    v: np.ndarray
    T: np.ndarray
    p: np.ndarray

    @property
    def total_density(self):
        return self.rho.sum(axis=-1)


def _as2d(U, ncomp):
    U = np.asarray(U, dtype=np.float64)
    squeeze = U.ndim == 1
    V = np.ascontiguousarray(U.reshape(-1, ncomp))
    return V, squeeze, U.shape[:-1]


def conservative_to_primitive(U, tab, check=False) -> PrimitiveState:
    """Primitive variables from conserved ones; vectorized over leading axes.

    With check=True raises ChemistryError when the state is outside the
    solver-admissible set (positive total density, heat capacity,
    temperature, pressure).  Species densities may be individually
    non-positive; only entropy evaluations need them positive.
    """
    V, squeeze, lead = _as2d(U, 5)
    v, T, p = K.primitive(V, tab)
    if check:
        rho = V[:, :3].sum(axis=1)
        bad = ~((rho > 0.0) & (T > 0.0) & (p > 0.0) & np.isfinite(T))
        if bad.any():
            i = int(np.argmax(bad))
            raise ChemistryError(
                f"inadmissible state at index {i}: U={V[i]}, T={T[i]}, p={p[i]}"
            )
    shape = lead if not squeeze else ()
    return PrimitiveState(
        rho=V[:, :3].reshape(*lead, 3) if not squeeze else V[0, :3],
        v=v.reshape(shape),
        T=T.reshape(shape),
        p=p.reshape(shape),
    )


def primitive_to_conservative(rho, v, T, tab):
    """Conserved state from partial densities (..., 3), velocity, temperature."""
    rho = np.asarray(rho, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    cv = np.asarray(tab[P_CV : P_CV + 3])
    e0 = np.asarray(tab[P_E0 : P_E0 + 3])
    e = e0 + cv * (T[..., None] - tab[P_TREF])
    total = rho.sum(axis=-1)
    U = np.empty(rho.shape[:-1] + (5,))
    U[..., :3] = rho
    U[..., 3] = total * v
    U[..., 4] = (rho * e).sum(axis=-1) + 0.5 * total * v * v
    return U


def flux_F(U, tab):
    V, squeeze, lead = _as2d(U, 5)
    F = K.flux(V, tab)
    return F[0] if squeeze else F.reshape(*lead, 5)


def source_R(U, tab):
    V, squeeze, lead = _as2d(U, 5)
    S = K.source(V, tab)
    return S[0] if squeeze else S.reshape(*lead, 5)


def reaction_rate(U, tab):
    V, squeeze, lead = _as2d(U, 5)
    r = K.reaction_rate(V, tab)
    return r[0] if squeeze else r.reshape(lead)


def max_wave_speed(U, tab):
    """|v| + frozen sound speed of the mixture."""
    V, squeeze, lead = _as2d(U, 5)
    lam = K.wave_speed(V, tab)
    return lam[0] if squeeze else lam.reshape(lead)


def entropy_pair(U, tab):
    """(H, Q) = (-rho s, -rho s v); NaN where a species density is <= 0."""
    V, squeeze, lead = _as2d(U, 5)
    H = K.entropy(V, tab)
    Q = K.entropy_flux(V, tab)
    if squeeze:
        return H[0], Q[0]
    return H.reshape(lead), Q.reshape(lead)


def entropy_grad(U, tab):
    V, squeeze, lead = _as2d(U, 5)
    W = K.entropy_grad(V, tab)
    return W[0] if squeeze else W.reshape(*lead, 5)


def affinity(U, tab):
    """Reaction affinity sum_k nu_k m_k g_k; zero exactly at equilibrium."""
    V, squeeze, lead = _as2d(U, 5)
    A = K.affinity(V, tab)
    return A[0] if squeeze else A.reshape(lead)


def rate_constants(T, prim: PrimitiveState, tab):
    """Forward and equilibrium constants (k_f, k_eq) of the mass-action law.

    k_eq is the mole-fraction equilibrium constant: the source vanishes
    exactly where x_O^2 = k_eq x_O2.  It equals K_c(T)/c where K_c is the
    concentration-based constant derived from the reaction affinity and c
    the local total molar concentration, hence it is composition-dependent
    (equivalently: the Gibbs energies are evaluated at the mixture's total
    pressure).
    """
    T = np.asarray(T, dtype=np.float64)
    kf = K.forward_rate(T, tab)
    lnK = K.log_equilibrium_ratio(T, tab)
    c = (np.asarray(prim.rho) / np.asarray(tab[P_M : P_M + 3])).sum(axis=-1)
    m = tab
    K_c = np.exp(lnK) * m[P_M] / (m[P_M + 1] * m[P_M + 1])
    return kf, K_c / c


def project(U):
    """Apply the reduction projection to states or coefficient arrays (..., 5)."""
    U = np.asarray(U)
    return U @ PROJECTION.T


def maxwellian_batch(u, tab, tol=1e-13, max_iter=50):
    """Equilibrium lift of reduced states; returns (U, ok) without raising."""
    V, squeeze, lead = _as2d(u, 4)
    U, ok = K.maxwellian(V, tab, tol, max_iter)
    if squeeze:
        return U[0], bool(ok[0])
    return U.reshape(*lead, 5), ok.reshape(lead)


def maxwellian(u, tab, tol=1e-13, max_iter=50):
    """Equilibrium lift; raises ChemistryError if any lane fails."""
    U, ok = maxwellian_batch(u, tab, tol, max_iter)
    ok_arr = np.atleast_1d(ok)
    if not ok_arr.all():
        idx = int(np.argmax(~ok_arr))
        bad = np.asarray(u).reshape(-1, 4)[idx]
        raise ChemistryError(f"equilibrium lift failed for u={bad}")
    return U


def equilibrium_from_Tpv(tab, T, p, v, rho_atom):
    """Equilibrium state with prescribed temperature, pressure, velocity and
    atomic-oxygen density.  The molecular density follows from the
    equilibrium ratio, the catalyst density from the ideal-gas law.
    """
    if T <= 0.0 or p <= 0.0 or rho_atom <= 0.0:
        raise ChemistryError("equilibrium_from_Tpv needs positive T, p, rho_atom")
    lnK = float(K.log_equilibrium_ratio(np.array([T]), tab)[0])
    rho_mol = rho_atom * rho_atom * math.exp(-lnK)
    c_total = p / (tab[P_RGAS] * T)
    c_inert = c_total - rho_mol / tab[P_M] - rho_atom / tab[P_M + 1]
    if c_inert <= 0.0:
        raise ChemistryError(
            f"no admissible catalyst density for T={T}, p={p}, rho_atom={rho_atom}"
        )
    rho = np.array([rho_mol, rho_atom, c_inert * tab[P_M + 2]])
    return primitive_to_conservative(rho, np.float64(v), np.float64(T), tab)


def solver_admissible(U, tab):
    """Mask of states usable by the flux/source path (no entropy logs)."""
    V, squeeze, lead = _as2d(U, 5)
    rho = V[:, :3].sum(axis=1)
    heat = V[:, 0] * tab[P_CV] + V[:, 1] * tab[P_CV + 1] + V[:, 2] * tab[P_CV + 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        v, T, p = K.primitive(V, tab)
    m = (rho > 0.0) & (heat > 0.0) & (T > 0.0) & (p > 0.0) & np.isfinite(T) & np.isfinite(p)
    return bool(m[0]) if squeeze else m.reshape(lead)


# ---------------------------------------------------------------------------
# Analytic derivatives.  These are cold-path (estimation, reconstruction,
# indicators) and stay in numpy in both backends.
# ---------------------------------------------------------------------------


def _prim_pieces(V, tab):
    rho = V[:, :3].sum(axis=1)
    v = V[:, 3] / rho
    cv = np.asarray(tab[P_CV : P_CV + 3])
    e0 = np.asarray(tab[P_E0 : P_E0 + 3])
    m = np.asarray(tab[P_M : P_M + 3])
    Cv = V[:, :3] @ cv
    Cm = V[:, :3] @ (1.0 / m)
    e_int = V[:, 4] - 0.5 * V[:, 3] * v
    T = tab[P_TREF] + (e_int - V[:, :3] @ e0) / Cv
    p = tab[P_RGAS] * T * Cm
    return rho, v, T, p, Cv, Cm, cv, e0, m


def _first_derivs(V, tab):
    """d(T)/dU and d(v)/dU for a batch, plus shared primitive pieces."""
    rho, v, T, p, Cv, Cm, cv, e0, m = _prim_pieces(V, tab)
    n = V.shape[0]
    e_k = e0[None, :] + cv[None, :] * (T[:, None] - tab[P_TREF])
    ehat = e_k - 0.5 * (v * v)[:, None]
    Tx = np.empty((n, 5))
    Tx[:, :3] = -ehat / Cv[:, None]
    Tx[:, 3] = -v / Cv
    Tx[:, 4] = 1.0 / Cv
    vx = np.zeros((n, 5))
    vx[:, :3] = (-v / rho)[:, None]
    vx[:, 3] = 1.0 / rho
    return rho, v, T, p, Cv, Cm, cv, e0, m, e_k, ehat, Tx, vx


def flux_jacobian(U, tab):
    """Jacobian of the complex flux, (..., 5, 5)."""
    V, squeeze, lead = _as2d(U, 5)
    rho, v, T, p, Cv, Cm, cv, e0, m, e_k, ehat, Tx, vx = _first_derivs(V, tab)
    n = V.shape[0]
    cmx = np.zeros((n, 5))
    cmx[:, :3] = 1.0 / m[None, :]
    px = tab[P_RGAS] * (Tx * Cm[:, None] + T[:, None] * cmx)
    J = np.zeros((n, 5, 5))
    for k in range(3):
        J[:, k, :] = V[:, k, None] * vx
        J[:, k, k] += v
    J[:, 3, :] = V[:, 3, None] * vx + px
    J[:, 3, 3] += v
    J[:, 4, :] = px * v[:, None] + (p + V[:, 4])[:, None] * vx
    J[:, 4, 4] += v
    return J[0] if squeeze else J.reshape(*lead, 5, 5)


def flux_hessians(U, tab):
    """Second derivatives of each flux component, (..., 5, 5, 5)."""
    V, squeeze, lead = _as2d(U, 5)
    rho, v, T, p, Cv, Cm, cv, e0, m, e_k, ehat, Tx, vx = _first_derivs(V, tab)
    n = V.shape[0]
    cmx = np.zeros((n, 5))
    cmx[:, :3] = 1.0 / m[None, :]
    cvx = np.zeros((n, 5))
    cvx[:, :3] = cv[None, :]
    px = tab[P_RGAS] * (Tx * Cm[:, None] + T[:, None] * cmx)

    vxx = np.zeros((n, 5, 5))
    two_v_r2 = 2.0 * v / (rho * rho)
    vxx[:, :3, :3] = two_v_r2[:, None, None]
    vxx[:, :3, 3] = (-1.0 / (rho * rho))[:, None]
    vxx[:, 3, :3] = (-1.0 / (rho * rho))[:, None]

    # N, dN such that T_a = -N_a / Cv.
    N = np.empty((n, 5))
    N[:, :3] = ehat
    N[:, 3] = v
    N[:, 4] = -1.0
    dN = np.zeros((n, 5, 5))
    dN[:, :3, :] = cv[None, :, None] * Tx[:, None, :] - (v[:, None] * vx)[:, None, :]
    dN[:, 3, :] = vx
    Txx = -dN / Cv[:, None, None] + N[:, :, None] * cvx[:, None, :] / (Cv * Cv)[:, None, None]
    pxx = tab[P_RGAS] * (
        Txx * Cm[:, None, None]
        + Tx[:, :, None] * cmx[:, None, :]
        + Tx[:, None, :] * cmx[:, :, None]
    )

    Hs = np.zeros((n, 5, 5, 5))
    for k in range(3):
        Hs[:, k] = V[:, k, None, None] * vxx
        Hs[:, k, k, :] += vx
        Hs[:, k, :, k] += vx
    Hs[:, 3] = V[:, 3, None, None] * vxx + pxx
    Hs[:, 3, 3, :] += vx
    Hs[:, 3, :, 3] += vx
    pxE = px.copy()
    pxE[:, 4] += 1.0
    Hs[:, 4] = (
        pxx * v[:, None, None]
        + pxE[:, :, None] * vx[:, None, :]
        + pxE[:, None, :] * vx[:, :, None]
        + (p + V[:, 4])[:, None, None] * vxx
    )
    return Hs[0] if squeeze else Hs.reshape(*lead, 5, 5, 5)


def entropy_hessian(U, tab):
    """Hessian of H = -rho s, (..., 5, 5).  Symmetric positive definite on
    admissible states with positive species densities."""
    V, squeeze, lead = _as2d(U, 5)
    rho, v, T, p, Cv, Cm, cv, e0, m, e_k, ehat, Tx, vx = _first_derivs(V, tab)
    n = V.shape[0]
    R = tab[P_RGAS]
    theta = 1.0 / T
    with np.errstate(invalid="ignore", divide="ignore"):
        lnT = np.log(T / tab[P_TREF])
        s = (
            np.asarray(tab[P_SR : P_SR + 3])[None, :]
            + cv[None, :] * lnT[:, None]
            - (R / m)[None, :]
            * (np.log(V[:, :3]) - np.asarray(tab[P_LNRHOR : P_LNRHOR + 3])[None, :])
        )
    g = e_k + (R / m)[None, :] * T[:, None] - T[:, None] * s
    Hm = np.empty((n, 5, 5))
    vvx = v[:, None] * vx
    th2Tx = (theta * theta)[:, None] * Tx
    for k in range(3):
        Dg = ((R / m[k]) - s[:, k])[:, None] * Tx
        Dg[:, k] += R / m[k] * T / V[:, k]
        Hm[:, k, :] = theta[:, None] * (Dg - vvx) - (g[:, k] - 0.5 * v * v)[:, None] * th2Tx
    Hm[:, 3, :] = theta[:, None] * vx - v[:, None] * th2Tx
    Hm[:, 4, :] = th2Tx
    return Hm[0] if squeeze else Hm.reshape(*lead, 5, 5)


def source_jacobian(U, tab):
    """Jacobian of the reactive source, (..., 5, 5).  Rank one."""
    V, squeeze, lead = _as2d(U, 5)
    rho, v, T, p, Cv, Cm, cv, e0, m, e_k, ehat, Tx, vx = _first_derivs(V, tab)
    n = V.shape[0]
    cmx = np.zeros((n, 5))
    cmx[:, :3] = 1.0 / m[None, :]
    kf = K.forward_rate(T, tab)
    lnK = K.log_equilibrium_ratio(T, tab)
    dlnK = K.dlog_equilibrium_ratio_dT(T, tab)
    Kr = np.exp(lnK)
    phi = kf * V[:, 2] / (m[2] * m[0] * Cm * Cm)
    w = V[:, 0] - V[:, 1] * V[:, 1] / Kr
    dkf_over_kf = tab[P_ERATE] / (T * T) - 2.0 / T
    dphi = phi[:, None] * (dkf_over_kf[:, None] * Tx - 2.0 * cmx / Cm[:, None])
    dphi[:, 2] += kf / (m[2] * m[0] * Cm * Cm)
    dw = (V[:, 1] * V[:, 1] / Kr)[:, None] * dlnK[:, None] * Tx
    dw[:, 0] += 1.0
    dw[:, 1] += -2.0 * V[:, 1] / Kr
    drate = dphi * w[:, None] + phi[:, None] * dw
    J = np.zeros((n, 5, 5))
    J[:, 0, :] = NU_STOICH[0] * m[0] * drate
    J[:, 1, :] = NU_STOICH[1] * m[1] * drate
    return J[0] if squeeze else J.reshape(*lead, 5, 5)


def maxwellian_jacobian(u, tab, lifted=None):
    """Jacobian of the equilibrium lift, (..., 5, 4), by implicit
    differentiation of the scalar log-affinity equation.

    The projection rows are exact by construction: P @ dM = I up to one
    rounding in the first row.
    """
    V, squeeze, lead = _as2d(u, 4)
    if lifted is None:
        lifted = maxwellian(V, tab)
    Ulift = np.ascontiguousarray(np.asarray(lifted).reshape(-1, 5))
    n = V.shape[0]
    x = Ulift[:, 1]
    u1 = V[:, 0]
    rho = V[:, 0] + V[:, 1]
    v = V[:, 2] / rho
    _, T, _ = K.primitive(Ulift, tab)
    cv = np.asarray(tab[P_CV : P_CV + 3])
    e0 = np.asarray(tab[P_E0 : P_E0 + 3])
    den = Ulift[:, :3] @ cv
    dlnK = K.dlog_equilibrium_ratio_dT(T, tab)
    n1 = e0[0] - e0[1]
    d1 = cv[1] - cv[0]
    Tsh = T - tab[P_TREF]
    T_x = (n1 - Tsh * d1) / den
    psi_x = 2.0 / x + 1.0 / (u1 - x) - dlnK * T_x
    dnum = np.empty((n, 4))
    half_v2 = 0.5 * v * v
    dnum[:, 0] = half_v2 - e0[0]
    dnum[:, 1] = half_v2 - e0[2]
    dnum[:, 2] = -v
    dnum[:, 3] = 1.0
    dden = np.zeros((n, 4))
    dden[:, 0] = cv[0]
    dden[:, 1] = cv[2]
    T_u = (dnum - Tsh[:, None] * dden) / den[:, None]
    psi_u = -dlnK[:, None] * T_u
    psi_u[:, 0] -= 1.0 / (u1 - x)
    a = -psi_u / psi_x[:, None]
    dM = np.zeros((n, 5, 4))
    dM[:, 0, :] = -a
    dM[:, 0, 0] += 1.0
    dM[:, 1, :] = a
    dM[:, 2, 1] = 1.0
    dM[:, 3, 2] = 1.0
    dM[:, 4, 3] = 1.0
    return dM[0] if squeeze else dM.reshape(*lead, 5, 4)


def induced_entropy_hessian(u, tab, lifted=None, lift_jac=None):
    """Hessian of the induced entropy eta(u) = H(M(u)), (..., 4, 4).

    Uses the constrained-minimization structure of the equilibrium lift:
    grad eta picks the reduced components of grad H at the lift, so the
    Hessian is (rows of Hess H) @ dM.  Symmetrized to kill solve roundoff.
    """
    V, squeeze, lead = _as2d(u, 4)
    if lifted is None:
        lifted = maxwellian(V, tab)
    Ulift = np.asarray(lifted).reshape(-1, 5)
    if lift_jac is None:
        lift_jac = maxwellian_jacobian(V, tab, lifted=Ulift)
    dM = np.asarray(lift_jac).reshape(-1, 5, 4)
    H2 = entropy_hessian(Ulift, tab).reshape(-1, 5, 5)
    rows = H2[:, [1, 2, 3, 4], :]
    N2 = np.einsum("nij,njk->nik", rows, dM)
    N2 = 0.5 * (N2 + np.swapaxes(N2, 1, 2))
    return N2[0] if squeeze else N2.reshape(*lead, 4, 4)


def induced_entropy_pair(u, tab, lifted=None):
    """(eta, q) = (H, Q) evaluated at the equilibrium lift."""
    V, squeeze, lead = _as2d(u, 4)
    if lifted is None:
        lifted = maxwellian(V, tab)
    Ulift = np.ascontiguousarray(np.asarray(lifted).reshape(-1, 5))
    H = K.entropy(Ulift, tab)
    Q = K.entropy_flux(Ulift, tab)
    if squeeze:
        return H[0], Q[0]
    return H.reshape(lead), Q.reshape(lead)


def simple_flux(u, tab, lifted=None):
    """Reduced flux g(u) = P F(M(u))."""
    V, squeeze, lead = _as2d(u, 4)
    if lifted is None:
        lifted = maxwellian(V, tab)
    Ulift = np.ascontiguousarray(np.asarray(lifted).reshape(-1, 5))
    G = K.flux(Ulift, tab) @ PROJECTION.T
    return G[0] if squeeze else G.reshape(*lead, 4)


def simple_wave_speed(u, tab, lifted=None):
    """|v| + frozen sound speed at the equilibrium lift."""
    V, squeeze, lead = _as2d(u, 4)
    if lifted is None:
        lifted = maxwellian(V, tab)
    Ulift = np.ascontiguousarray(np.asarray(lifted).reshape(-1, 5))
    lam = K.wave_speed(Ulift, tab)
    return lam[0] if squeeze else lam.reshape(lead)


def build_hierarchy(tab=None):
    """Package the mixture closures as a two-level model hierarchy.

    The complex level is the reacting five-component system; the simple
    level is the four-component equilibrium conservation law obtained by
    summing the oxygen species.  Analytic derivative evaluators are wired
    in for everything that feeds the error indicators; the two third-order
    tensors used only for box-constant estimation fall back to central
    differences of the analytic second derivatives.

    Args:
        tab: ThermoTable or its packed array; defaults to the compiled-in
            constants.

    Returns:
        hierarchy.ModelHierarchy instance named "oxygen-dissociation".
    """
    from .hierarchy import ModelHierarchy

    if tab is None:
        tab = ThermoTable()
    packed = tab.packed if isinstance(tab, ThermoTable) else np.asarray(tab, dtype=np.float64)

    def admissible(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        positive = (U[:, :3] > 0.0).all(axis=1)
        return positive & solver_admissible(U, packed)

    return ModelHierarchy(
        name="oxygen-dissociation",
        dim_complex=5,
        dim_simple=4,
        projection=PROJECTION,
        epsilon=1.0,
        flux=lambda U: flux_F(U, packed),
        source=lambda U: source_R(U, packed),
        entropy=lambda U: entropy_pair(U, packed)[0],
        entropy_flux=lambda U: entropy_pair(U, packed)[1],
        wave_speed=lambda U: max_wave_speed(U, packed),
        maxwellian=lambda u: maxwellian_batch(u, packed),
        admissible=admissible,
        # Flux and source stay finite for slightly negative trace species,
        # so the scheme only insists on positive mixture quantities.
        solver_admissible=lambda U: solver_admissible(U, packed),
        entropy_grad=lambda U: entropy_grad(U, packed),
        entropy_hessian=lambda U: entropy_hessian(U, packed),
        flux_jacobian=lambda U: flux_jacobian(U, packed),
        flux_hessians=lambda U: flux_hessians(U, packed),
        source_jacobian=lambda U: source_jacobian(U, packed),
        maxwellian_jacobian=lambda u: maxwellian_jacobian(u, packed),
        induced_entropy_hessian=lambda u: induced_entropy_hessian(u, packed),
        simple_flux=lambda u: simple_flux(u, packed),
        simple_wave_speed=lambda u: simple_wave_speed(u, packed),
    )
