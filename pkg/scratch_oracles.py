"""Development oracle checks for the chemistry closures (not shipped)."""

import numpy as np

from relaxdg import chem
from relaxdg.chem import ThermoTable

np.set_printoptions(precision=6)
tab = ThermoTable().packed
rng = np.random.default_rng(42)

# Shock-tube-like anchor states.
U_in = chem.equilibrium_from_Tpv(tab, 2000.0, 2.0e6, 0.0, 0.01)
U_out = chem.equilibrium_from_Tpv(tab, 2000.0, 1.0e6, 0.0, 0.005)
print("U_in ", repr(U_in))
print("U_out", repr(U_out))
prim = chem.conservative_to_primitive(U_in, tab)
print("prim T,p,v:", prim.T, prim.p, prim.v, "rho:", prim.rho)
print("|R(U_in)|:", np.abs(chem.source_R(U_in, tab)).max())
print("affinity(U_in):", chem.affinity(U_in, tab))
print("wave speed in/out:", chem.max_wave_speed(U_in, tab), chem.max_wave_speed(U_out, tab))

# Random off-equilibrium sample box around the anchors (solver regime: trace O2).
def sample_states(n):
    base = np.array([U_in, U_out])
    lo = base.min(axis=0)
    hi = base.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) + 0.1 * np.abs(mid) + np.array([1e-14, 1e-3, 0.1, 1e3, 1e4])
    lo2, hi2 = mid - 1.5 * half, mid + 1.5 * half
    lo2[:3] = np.maximum(lo2[:3], np.array([1e-15, 1e-4, 0.05]))
    return lo2 + (hi2 - lo2) * rng.random((n, 5))

# Generic well-scaled states: every component O(1)-balanced, FD-friendly.
def nice_states(n):
    rho = 10.0 ** rng.uniform(-1.3, 0.3, size=(n, 3))
    v = rng.uniform(-500.0, 500.0, size=n)
    T = rng.uniform(500.0, 3500.0, size=n)
    return chem.primitive_to_conservative(rho, v, T, tab)

US = sample_states(400)
US = US[chem.solver_admissible(US, tab)]
print("admissible sampled:", US.shape)
UN = nice_states(60)
assert chem.solver_admissible(UN, tab).all()

# 1) Maxwellian structure on the solver-regime box.
u = chem.project(US)
M, okm = chem.maxwellian_batch(u, tab)
print("maxwellian ok:", okm.all())
print("max |P M - u|:", np.abs(chem.project(M) - u).max())
print("max |R(M)| (vs off-eq scale):",
      np.abs(chem.source_R(M, tab)).max(), np.abs(chem.source_R(US, tab)).max())
aff = np.abs(chem.affinity(M, tab))
print("affinity(M): median", np.median(aff), "p99", np.quantile(aff, 0.99), "max", aff.max())

# and on the nice states
un = chem.project(UN)
Mn, okn = chem.maxwellian_batch(un, tab)
print("maxwellian ok (nice):", okn.all(),
      " |P M - u|:", np.abs(chem.project(Mn) - un).max(),
      " |affinity|:", np.abs(chem.affinity(Mn, tab)).max())

# FD helpers with per-component steps (no cross-component floor).
def fd_grad(f, U, rel=1e-7):
    U = np.asarray(U, dtype=float)
    g = np.zeros_like(U)
    for i in range(U.size):
        h = rel * abs(U[i]) if U[i] != 0.0 else rel
        Up, Um = U.copy(), U.copy()
        Up[i] += h
        Um[i] -= h
        g[i] = (f(Up) - f(Um)) / (Up[i] - Um[i])
    return g

def fd_jac(f, U, rel=1e-7):
    U = np.asarray(U, dtype=float)
    f0 = np.atleast_1d(f(U))
    J = np.zeros((f0.size, U.size))
    for i in range(U.size):
        h = rel * abs(U[i]) if U[i] != 0.0 else rel
        Up, Um = U.copy(), U.copy()
        Up[i] += h
        Um[i] -= h
        J[:, i] = (np.atleast_1d(f(Up)) - np.atleast_1d(f(Um))) / (Up[i] - Um[i])
    return J

relerr = lambda A, B: np.abs(A - B).max() / max(np.abs(B).max(), 1e-300)

# 2) Entropy compatibility grad Q = grad H . dF on nice states, both signs.
def compat_residual(U, sign):
    H = lambda X: chem.entropy_pair(X[None, :], tab)[0][0]
    Q = lambda X: sign * chem.entropy_pair(X[None, :], tab)[1][0]
    gQ = fd_grad(Q, U)
    gH = fd_grad(H, U)
    J = chem.flux_jacobian(U[None, :], tab)[0]
    return np.abs(gQ - gH @ J).max() / max(np.abs(gQ).max(), 1e-300)

errs_neg_sign = [compat_residual(UN[i], +1.0) for i in range(8)]
errs_pos_sign = [compat_residual(UN[i], -1.0) for i in range(8)]
print("compat rel err with Q=-rho s v:", max(errs_neg_sign))
print("compat rel err with Q=+rho s v:", min(errs_pos_sign))

# also: analytic entropy_grad vs FD of entropy
gH_err = max(
    relerr(chem.entropy_grad(UN[i][None, :], tab)[0],
           fd_grad(lambda X: chem.entropy_pair(X[None, :], tab)[0][0], UN[i]))
    for i in range(8)
)
print("entropy grad vs FD:", gH_err)

# 3) Second law on both families.
for name, X in (("box", US), ("nice", UN)):
    W = chem.entropy_grad(X, tab)
    R = chem.source_R(X, tab)
    prod = np.einsum("ni,ni->n", W, R)
    print(f"max grad H . R ({name}):", prod.max())

# 4) Analytic vs FD derivatives on nice states.
errs = {"fluxjac": 0.0, "srcjac": 0.0, "enthess": 0.0, "fluxhess": 0.0}
for i in range(8):
    U0 = UN[i]
    errs["fluxjac"] = max(errs["fluxjac"], relerr(
        chem.flux_jacobian(U0[None, :], tab)[0],
        fd_jac(lambda X: chem.flux_F(X[None, :], tab)[0], U0)))
    errs["srcjac"] = max(errs["srcjac"], relerr(
        chem.source_jacobian(U0[None, :], tab)[0],
        fd_jac(lambda X: chem.source_R(X[None, :], tab)[0], U0)))
    errs["enthess"] = max(errs["enthess"], relerr(
        chem.entropy_hessian(U0[None, :], tab)[0],
        fd_jac(lambda X: chem.entropy_grad(X[None, :], tab)[0], U0)))
    FH = chem.flux_hessians(U0[None, :], tab)[0]
    FH_fd = np.zeros_like(FH)
    for c in range(5):
        FH_fd[c] = fd_jac(lambda X: chem.flux_jacobian(X[None, :], tab)[0][c], U0)
    errs["fluxhess"] = max(errs["fluxhess"], relerr(FH, FH_fd))
for k, v in errs.items():
    print(f"{k} err:", v)

H2 = chem.entropy_hessian(UN, tab)
print("entropy hess symmetric:", np.abs(H2 - np.swapaxes(H2, 1, 2)).max() / np.abs(H2).max())
print("entropy hess SPD:", np.linalg.eigvalsh(H2).min() > 0, "min eig:", np.linalg.eigvalsh(H2).min())
H2b = chem.entropy_hessian(US, tab)
print("entropy hess SPD (box):", np.linalg.eigvalsh(H2b).min() > 0,
      "min eig:", np.linalg.eigvalsh(H2b).min())

# 5) Maxwellian jacobian and induced entropy on nice states.
jac_err = 0.0
pdm_err = 0.0
schur_err = 0.0
fd2_err = 0.0
for i in range(8):
    u0 = chem.project(UN[i][None, :])[0]
    dM = chem.maxwellian_jacobian(u0[None, :], tab)[0]
    dM_fd = fd_jac(lambda x: chem.maxwellian(x[None, :], tab)[0], u0, rel=3e-7)
    jac_err = max(jac_err, relerr(dM, dM_fd))
    pdm_err = max(pdm_err, np.abs(chem.PROJECTION @ dM - np.eye(4)).max())
    Mlift = chem.maxwellian(u0[None, :], tab)[0]
    H2l = chem.entropy_hessian(Mlift, tab)
    alt = np.linalg.inv(chem.PROJECTION @ np.linalg.inv(H2l) @ chem.PROJECTION.T)
    N2 = chem.induced_entropy_hessian(u0, tab)
    schur_err = max(schur_err, relerr(N2, alt))

    def eta_grad(x):
        lifted, lok = chem.maxwellian_batch(x[None, :], tab)
        assert lok.all()
        W = chem.entropy_grad(lifted, tab)[0]
        dMx = chem.maxwellian_jacobian(x[None, :], tab)[0]
        return W @ dMx

    N2fd = fd_jac(eta_grad, u0, rel=1e-7)
    fd2_err = max(fd2_err, relerr(N2, 0.5 * (N2fd + N2fd.T)))
print("maxwellian jac err:", jac_err)
print("P dM - I:", pdm_err)
print("induced hess vs schur-complement:", schur_err)
print("induced hess vs FD:", fd2_err)

# 6) wave speed vs spectral radius of flux jacobian
for name, X in (("box", US), ("nice", UN)):
    lam = chem.max_wave_speed(X, tab)
    spec = np.abs(np.linalg.eigvals(chem.flux_jacobian(X, tab))).max(axis=1)
    print(f"wave speed / spectral radius ({name}):", (lam / spec).min(), (lam / spec).max())

# 7) frozen rate values
from relaxdg import _kernels as Kk
T0 = np.array([2000.0])
print("k_f(2000) =", repr(Kk.forward_rate(T0, tab)[0]))
print("lnK(2000) =", repr(Kk.log_equilibrium_ratio(T0, tab)[0]))
print("lnK(2500) =", repr(Kk.log_equilibrium_ratio(np.array([2500.0]), tab)[0]))
kf, keq = chem.rate_constants(np.array([prim.T]), prim, tab)
print("k_eq at inner state:", repr(float(keq[0])))

# 8) relative scales
print("rho_O2 inner/outer:", U_in[0], U_out[0])
print("wave speed anchors:", repr(chem.max_wave_speed(np.array([U_in, U_out]), tab)))
