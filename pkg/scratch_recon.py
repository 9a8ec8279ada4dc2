"""Scratch checks for reconstruct.py before freezing tests."""
import numpy as np
from numpy.polynomial.legendre import leggauss

from relaxdg import chem, dg, reconstruct
from relaxdg.model_problems import toy_relaxation_hierarchy

rng = np.random.default_rng(7)
toy = toy_relaxation_hierarchy(advection=1.0, quad=0.5, rate=2.5, epsilon=1.0)

# --- 1. continuous piecewise-quadratic data reproduced exactly -------------
mesh = dg.Mesh1D(0.0, 1.0, 8)
n = mesh.n_cells
# continuous piecewise quadratic: face nodes v_i, midpoints m_i
v = rng.normal(size=(n, 2))
mid = rng.normal(size=(n, 2))
vr = np.roll(v, -1, axis=0)
# quadratic through (-1,v), (0,mid), (1,vr): u = a + b xi + c xi^2
a = mid
b = 0.5 * (vr - v)
c = 0.5 * (vr + v) - mid
# modal: c0 = a + c/3... u = c0 phi0 + c1 phi1 + c2 phi2
# phi1 = sqrt3 xi, phi2 = sqrt5 (3xi^2-1)/2
c0 = a + c / 3.0
c1 = b / np.sqrt(3.0)
c2 = 2.0 * c / (3.0 * np.sqrt(5.0))
coeff = np.stack([c0, c1, c2], axis=1)
theta = np.ones(n, dtype=np.int8)
# treat as complex field with M=2 (toy)
wc, ws = reconstruct._face_arrays(theta, coeff, np.zeros((n, 3, 1)), toy)
nxt = (np.arange(n) + 1) % n
B = reconstruct.reconstruct_space(coeff, wc, wc[nxt])
print("b3 max:", np.abs(B[:, 3]).max(), "b2 vs c2:", np.abs(B[:, 2] - c2).max())

# evaluate at random xi: should match the quadratic exactly
xi = rng.uniform(-1, 1, 7)
phi = reconstruct.basis3_values(xi)
vals = np.einsum("njk,jp->npk", B, phi)
exact = a[:, None, :] + b[:, None, :] * xi[None, :, None] + c[:, None, :] * xi[None, :, None] ** 2
print("recon reproduces continuous quadratic:", np.abs(vals - exact).max())

# --- 2. continuity + mean preservation on random data ----------------------
coeff_r = rng.normal(size=(n, 3, 2))
wc, _ = reconstruct._face_arrays(theta, coeff_r, np.zeros((n, 3, 1)), toy)
Br = reconstruct.reconstruct_space(coeff_r, wc, wc[nxt])
phiL = reconstruct.basis3_values(np.array([-1.0]))[:, 0]
phiR = reconstruct.basis3_values(np.array([1.0]))[:, 0]
valL = np.einsum("njk,j->nk", Br, phiL)
valR = np.einsum("njk,j->nk", Br, phiR)
print("continuity:", np.abs(valR - valL[nxt]).max())
print("mean kept:", np.abs(Br[:, 0] - coeff_r[:, 0]).max(),
      "slope kept:", np.abs(Br[:, 1] - coeff_r[:, 1]).max())

# --- 3. time reconstruction: exact for quadratic-in-t coefficients ---------
dt = 0.37
B0 = rng.normal(size=(n, 4, 2))
Bq = rng.normal(size=(n, 4, 2))
Bl = rng.normal(size=(n, 4, 2))
B1 = B0 + Bl * dt + Bq * dt * dt
Bdot1 = Bl + 2.0 * Bq * dt
h0, hb, hg = reconstruct._hermite(B0, B1, Bdot1 * dt, 1.0)  # scale manually
# check against direct: q(tau) with tau in [0,1], t = tau*dt
herm = reconstruct._hermite(B0, B1, Bdot1, dt)
tau = np.array([0.0, 0.3, 0.77, 1.0])
slab = reconstruct.SlabReconstruction(mesh=mesh, hier=toy, theta=theta,
                                      t0=0.0, dt=dt, herm_c=herm, herm_s=herm)
got = slab._coeff_at(herm, tau)
want = (B0[..., None] + Bl[..., None] * (tau * dt)
        + Bq[..., None] * (tau * dt) ** 2)
print("time quad exact:", np.abs(got - want).max())
gdot = slab._rate_at(herm, tau)
wdot = Bl[..., None] + 2.0 * Bq[..., None] * (tau * dt)
print("time rate exact:", np.abs(gdot - wdot).max())

# --- 4. mixed equilibrium: zero residuals ----------------------------------
tab = chem.ThermoTable()
o2 = chem.build_hierarchy(tab)
U_IN = np.array([1.137537613903747e-13, 1e-2, 3.3503133269183514, 0.0,
                 2.8347437338481373e-08])
mesh5 = dg.Mesh1D(0.0, 1.0, 10)
theta5 = np.array([1, 1, 0, 0, 1, 0, 1, 1, 0, 0], dtype=np.int8)
n5 = mesh5.n_cells
coeff_c = np.zeros((n5, 3, 5))
coeff_c[:, 0, :] = U_IN
coeff_s = np.zeros((n5, 3, 4))
coeff_s[:, 0, :] = chem.project(U_IN[None, :])[0]
state = dg.MixedDGState(theta=theta5, coeff_c=coeff_c, coeff_s=coeff_s)
rate_c, rate_s, _ = dg.spatial_operator(state, mesh5, o2)
dt5 = 1e-7
slab5 = reconstruct.build_slab(mesh5, o2, theta5, coeff_c, coeff_s,
                               coeff_c, coeff_s, rate_c, rate_s, 0.0, dt5)
cells_c, Uq, Rc = reconstruct.residual_complex(slab5)
out = reconstruct.residual_simple(slab5)
print("complex resid (equilibrium):", np.abs(Rc).max())
print("simple resid r_s:", np.abs(out["r_s"]).max(),
      "R_s:", np.abs(out["R_s"]).max())
print("split bitwise:", np.array_equal(out["R_delta"] + out["R_eps"], out["R_s"]))
print("P R_eps:", np.abs(out["R_eps"] @ o2.projection.T).max())
print("P R_s - r_s:", np.abs(out["R_s"] @ o2.projection.T - out["r_s"]).max())

# --- 5. toy: residual of an advanced smooth state is O(h^3)-ish ------------
def run_toy(ne, steps=4):
    msh = dg.Mesh1D(0.0, 1.0, ne)
    th = np.ones(ne, dtype=np.int8)

    def init(x):
        um = 1.0 + 0.3 * np.sin(2 * np.pi * x)
        return np.stack([0.5 * um, 0.5 * um], axis=-1)

    cc = dg.project_function(init, msh)
    cs = np.zeros((ne, 3, 1))
    st = dg.MixedDGState(theta=th, coeff_c=cc, coeff_s=cs)
    dt = msh.h * 0.05
    recs = []
    t = 0.0
    for _ in range(steps):
        old = st.copy()
        st, _ = dg.rk3_step(st, msh, toy, dt, limiter=False)
        rc, rs, _ = dg.spatial_operator(st, msh, toy)
        recs.append(reconstruct.build_slab(msh, toy, th, old.coeff_c,
                                           old.coeff_s, st.coeff_c,
                                           st.coeff_s, rc, rs, t, dt))
        t += dt
    slab = recs[-1]
    _, _, res = reconstruct.residual_complex(slab)
    # L2 norm over the slab
    wq = dg.GAUSS_W
    wl = reconstruct.TIME_W
    val = np.einsum("cplk,p,l->", res ** 2, wq, wl) * 0.25 * msh.h * dt
    return np.sqrt(val / dt)

e1, e2, e3 = run_toy(20), run_toy(40), run_toy(80)
print("toy complex residual L2:", e1, e2, e3,
      "orders", np.log2(e1 / e2), np.log2(e2 / e3))

# --- 6. simple-only residual convergence -----------------------------------
def run_toy_simple(ne, steps=4):
    msh = dg.Mesh1D(0.0, 1.0, ne)
    th = np.zeros(ne, dtype=np.int8)

    def init(x):
        return (1.0 + 0.3 * np.sin(2 * np.pi * x))[..., None]

    cs = dg.project_function(init, msh)
    cc = np.zeros((ne, 3, 2))
    st = dg.MixedDGState(theta=th, coeff_c=cc, coeff_s=cs)
    dt = msh.h * 0.05
    t = 0.0
    for _ in range(steps):
        old = st.copy()
        st, _ = dg.rk3_step(st, msh, toy, dt, limiter=False)
        rc, rs, _ = dg.spatial_operator(st, msh, toy)
        slab = reconstruct.build_slab(msh, toy, th, old.coeff_c, old.coeff_s,
                                      st.coeff_c, st.coeff_s, rc, rs, t, dt)
        t += dt
    out = reconstruct.residual_simple(slab)
    wq = dg.GAUSS_W
    wl = reconstruct.TIME_W
    val = np.einsum("cplk,p,l->", out["r_s"] ** 2, wq, wl) * 0.25 * msh.h * dt
    eps = np.einsum("cplk,p,l->", out["R_eps"] ** 2, wq, wl) * 0.25 * msh.h * dt
    return np.sqrt(val / dt), np.sqrt(eps / dt)

(a1, p1), (a2, p2), (a3, p3) = (run_toy_simple(20), run_toy_simple(40),
                                run_toy_simple(80))
print("toy simple r_s L2:", a1, a2, a3, "orders", np.log2(a1 / a2),
      np.log2(a2 / a3))
print("toy R_eps L2:", p1, p2, p3)
