import numpy as np

from relaxdg import dg
from relaxdg.model_problems import toy_relaxation_hierarchy

# A. means-only rate convergence (expect order 3)
hier = toy_relaxation_hierarchy(advection=1.0, quad=0.5, rate=1.0, epsilon=1.0)
a, b = 1.0, 0.5


def exact_state(x):
    u1 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
    u2 = 2.0 + 0.2 * np.cos(2 * np.pi * x)
    return np.stack([u1, u2], axis=-1)


def exact_rate(x):
    u1 = 2.0 + 0.3 * np.sin(2 * np.pi * x)
    u2 = 2.0 + 0.2 * np.cos(2 * np.pi * x)
    du1 = 0.3 * 2 * np.pi * np.cos(2 * np.pi * x)
    du2 = -0.2 * 2 * np.pi * np.sin(2 * np.pi * x)
    dF1 = a * du2 + b * u1 * du1
    dF2 = a * du1 + b * u2 * du2
    return np.stack([-dF1 + (u2 - u1), -dF2 + (u1 - u2)], axis=-1)


errs = []
for n in (20, 40, 80, 160):
    mesh = dg.Mesh1D(0.0, 1.0, n)
    coeff = dg.project_function(exact_state, mesh)
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), coeff, hier)
    rc, rs, info = dg.spatial_operator(st, mesh, hier)
    ref = dg.project_function(exact_rate, mesh)
    err = np.sqrt(np.sum((rc[:, 0, :] - ref[:, 0, :]) ** 2) * mesh.h)
    errs.append(err)
errs = np.array(errs)
print("mean-rate errors:", errs)
print("mean-rate orders:", np.log2(errs[:-1] / errs[1:]))

# B. evolved-solution convergence, linear toy with relaxation (exact solution).
lin = toy_relaxation_hierarchy(advection=1.0, quad=0.0, rate=1.0, epsilon=1.0)


def exact_sol(x, t):
    # characteristics w+ = u1+u2 advects right, w- = u1-u2 advects left and decays
    wp0 = lambda y: 4.0 + 0.5 * np.sin(2 * np.pi * y)
    wm0 = lambda y: 0.3 * np.cos(2 * np.pi * y)
    wp = wp0(x - t)
    wm = wm0(x + t) * np.exp(-2.0 * t)
    u1 = 0.5 * (wp + wm)
    u2 = 0.5 * (wp - wm)
    return np.stack([u1, u2], axis=-1)


T = 0.4
errs = []
for n in (20, 40, 80, 160):
    mesh = dg.Mesh1D(0.0, 1.0, n)
    coeff = dg.project_function(lambda x: exact_sol(x, 0.0), mesh)
    st = dg.state_from_complex(np.ones(n, dtype=np.int8), coeff, lin)
    dt0 = dg.stable_timestep(st, mesh, lin)
    m = int(np.ceil(T / dt0))
    dt = T / m
    for _ in range(m):
        st, _ = dg.rk3_step(st, mesh, lin, dt, limiter=False)
    # L2 error via 3-point quadrature
    xq = mesh.points(dg.GAUSS_X)
    uh = dg.eval_at(st.coeff_c, dg.PHI)
    ue = exact_sol(xq[..., None][:, :, 0], T)
    err = np.sqrt(0.5 * mesh.h * np.sum(dg.GAUSS_W[None, :, None] * (uh - ue) ** 2))
    errs.append(err)
errs = np.array(errs)
print("solution errors:", errs)
print("solution orders:", np.log2(errs[:-1] / errs[1:]))

# C. simple-only linear advection (exact translate)
errs = []
for n in (20, 40, 80, 160):
    mesh = dg.Mesh1D(0.0, 1.0, n)
    f0 = lambda x: (3.0 + 0.4 * np.sin(2 * np.pi * x))[:, None]
    coeff = dg.project_function(f0, mesh)
    st = dg.state_from_simple(np.zeros(n, dtype=np.int8), coeff, lin)
    dt0 = dg.stable_timestep(st, mesh, lin)
    m = int(np.ceil(T / dt0))
    dt = T / m
    for _ in range(m):
        st, _ = dg.rk3_step(st, mesh, lin, dt, limiter=False)
    xq = mesh.points(dg.GAUSS_X)
    uh = dg.eval_at(st.coeff_s, dg.PHI)
    ue = f0((xq - T).ravel() % 1.0).reshape(n, 3, 1)
    err = np.sqrt(0.5 * mesh.h * np.sum(dg.GAUSS_W[None, :, None] * (uh - ue) ** 2))
    errs.append(err)
errs = np.array(errs)
print("simple solution errors:", errs)
print("simple solution orders:", np.log2(errs[:-1] / errs[1:]))
