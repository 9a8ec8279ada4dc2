import numpy as np

from relaxdg import dg
from relaxdg.model_problems import toy_relaxation_hierarchy

rng = np.random.default_rng(7)

# 1. spatial operator accuracy on smooth complex-only data (toy).
hier = toy_relaxation_hierarchy(advection=1.0, quad=0.5, rate=1.0, epsilon=1.0)
a, b, quad = 1.0, 0.5, None


def exact_state(x):
    u1 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
    u2 = 2.0 + 0.2 * np.cos(2 * np.pi * x)
    return np.stack([u1, u2], axis=-1)


def exact_rate(x):
    u1 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
    u2 = 2.0 + 0.2 * np.cos(2 * np.pi * x)
    du1 = 0.3 * 2 * np.pi * np.cos(2 * np.pi * x)
    du2 = -0.2 * 2 * np.pi * np.sin(2 * np.pi * x)
    # F = (a u2 + b u1^2/2, a u1 + b u2^2/2), R = rate*(u2-u1, u1-u2)
    dF1 = a * du2 + 0.5 * u1 * du1
    dF2 = a * du1 + 0.5 * u2 * du2
    return np.stack([-dF1 + (u2 - u1), -dF2 + (u1 - u2)], axis=-1)


errs = []
for n in (20, 40, 80, 160):
    mesh = dg.Mesh1D(0.0, 1.0, n)
    coeff = dg.project_function(exact_state, mesh)
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), coeff, hier)
    rc, rs, info = dg.spatial_operator(st, mesh, hier)
    # compare cell means of the rate against exact rate means
    ref = dg.project_function(exact_rate, mesh)
    err = np.sqrt(np.sum((rc - ref) ** 2) * mesh.h)
    errs.append(err)
errs = np.array(errs)
print("operator errors:", errs)
print("operator orders:", np.log2(errs[:-1] / errs[1:]))

# 2. ssp_rk3 on u' = lam*u reproduces the cubic Taylor polynomial.
lam = -0.7
y0 = np.array([1.3])
dt = 0.05
y1 = dg.ssp_rk3(y0, dt, lambda y: lam * y)
z = lam * dt
taylor = y0 * (1 + z + z * z / 2 + z ** 3 / 6)
print("rk3 vs taylor:", abs(y1 - taylor)[0], "(should be ~0)")
# order check against exp
steps_err = []
for m in (10, 20, 40):
    h = 1.0 / m
    y = y0.copy()
    for _ in range(m):
        y = dg.ssp_rk3(y, h, lambda y: lam * y)
    steps_err.append(abs(y[0] - y0[0] * np.exp(lam)))
steps_err = np.array(steps_err)
print("rk3 ode orders:", np.log2(steps_err[:-1] / steps_err[1:]))

# 3. conservation of projected moments with mixed tags and limiter.
n = 64
mesh = dg.Mesh1D(0.0, 1.0, n)
theta = (rng.uniform(size=n) < 0.6).astype(np.int8)


def bumpy(x):
    u1 = 2.0 + 0.5 * np.sin(2 * np.pi * x) + 0.3 * (x > 0.5)
    u2 = 2.2 + 0.4 * np.cos(4 * np.pi * x)
    return np.stack([u1, u2], axis=-1)


coeff_c = dg.project_function(bumpy, mesh)
coeff_s = np.einsum("njk,mk->njm", coeff_c, hier.projection)
st = dg.MixedDGState(theta, coeff_c, coeff_s)
p0 = st.projected_means(hier).sum(axis=0) * mesh.h
dt = dg.stable_timestep(st, mesh, hier)
print("dt:", dt)
for _ in range(50):
    st, info = dg.rk3_step(st, mesh, hier, dt, limiter=True)
p1 = st.projected_means(hier).sum(axis=0) * mesh.h
print("projected moment drift:", np.abs(p1 - p0))
print("flattened:", info["flattened_cells"])

# 4. well-balancedness: constant equilibrium across model boundaries.
const = np.array([1.7, 1.7])
cc = np.zeros((n, 3, 2))
cc[:, 0, :] = const
cs = np.zeros((n, 3, 1))
cs[:, 0, 0] = const.sum()
st = dg.MixedDGState(theta, cc, cs)
rc, rs, _ = dg.spatial_operator(st, mesh, hier)
print("steady complex rate:", np.abs(rc[st.complex_mask]).max())
print("steady simple rate:", np.abs(rs[st.simple_mask]).max())
st2, _ = dg.rk3_step(st, mesh, hier, dt)
print("steady step drift c:", np.abs(st2.coeff_c - cc)[st.complex_mask].max())
print("steady step drift s:", np.abs(st2.coeff_s - cs)[st.simple_mask].max())

# 5. limiter hand check on a 3-cell pattern.
mesh3 = dg.Mesh1D(0.0, 3.0, 3)
cc = np.zeros((3, 3, 2))
cc[:, 0, 0] = [1.0, 2.0, 2.5]       # means
cc[1, 1, 0] = 1.0                   # steep slope in middle cell
cc[1, 2, 0] = 0.3
cc[:, 0, 1] = 1.0
st3 = dg.state_from_complex(np.ones(3, dtype=np.int8), cc, hier)
lim = dg.minmod_limit(st3, mesh3, hier)
s = np.sqrt(3.0) * 1.0
want = min(s, 2.5 - 2.0, 2.0 - 1.0) / np.sqrt(3.0)
print("limited slope:", lim.coeff_c[1, 1, 0], "want:", want)
print("limited quad zeroed:", lim.coeff_c[1, 2, 0])
print("mean preserved:", lim.coeff_c[1, 0, 0] == 2.0)
lim2 = dg.minmod_limit(lim, mesh3, hier)
print("idempotent:", np.array_equal(lim2.coeff_c, lim.coeff_c))
