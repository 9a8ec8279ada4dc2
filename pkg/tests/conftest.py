"""Shared fixtures: thermodynamic table, hierarchies, sample-state factories."""

import numpy as np
import pytest

from relaxdg import chem
from relaxdg.model_problems import toy_relaxation_hierarchy


@pytest.fixture(scope="session")
def tab():
    return chem.ThermoTable()


@pytest.fixture(scope="session")
def packed(tab):
    return tab.packed


@pytest.fixture(scope="session")
def o2():
    return chem.build_hierarchy()


@pytest.fixture()
def toy():
    return toy_relaxation_hierarchy(advection=1.0, quad=0.5, rate=2.5, epsilon=1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def balanced_states(packed, rng, n):
    """Mixture states with comparable component magnitudes.

    Derivative checks difference every component; wildly separated scales
    (trace species at 1e-13) would drown the finite-difference signal, so
    these draw all densities from a narrow log-uniform band.
    """
    rho = 10.0 ** rng.uniform(-1.3, 0.3, size=(n, 3))
    v = rng.uniform(-500.0, 500.0, size=n)
    T = rng.uniform(500.0, 3500.0, size=n)
    out = np.empty((n, 5))
    for i in range(n):
        out[i] = chem.primitive_to_conservative(rho[i], v[i], T[i], packed)
    return out


def shock_box_states(packed, rng, n):
    """States spanning the regimes the shock-tube run visits."""
    rho_o2 = 10.0 ** rng.uniform(-14.0, -9.0, size=n)
    rho_o = 10.0 ** rng.uniform(-3.0, -1.5, size=n)
    rho_n2 = 10.0 ** rng.uniform(-0.5, 0.8, size=n)
    v = rng.uniform(-400.0, 400.0, size=n)
    T = rng.uniform(1200.0, 3200.0, size=n)
    out = np.empty((n, 5))
    for i in range(n):
        out[i] = chem.primitive_to_conservative(
            np.array([rho_o2[i], rho_o[i], rho_n2[i]]), v[i], T[i], packed)
    return out


def fd_grad(fn, U, rel=1e-6):
    """Central difference of a scalar or vector fn, one state at a time.

    Steps are proportional to each component's own magnitude so trace
    species do not get pushed negative.
    """
    U = np.asarray(U, dtype=np.float64)
    f0 = np.asarray(fn(U))
    out = np.empty(f0.shape + (U.shape[-1],))
    for j in range(U.shape[-1]):
        h = rel * abs(U[j]) if U[j] != 0.0 else rel
        Up, Um = U.copy(), U.copy()
        Up[j] += h
        Um[j] -= h
        out[..., j] = (np.asarray(fn(Up)) - np.asarray(fn(Um))) / (Up[j] - Um[j])
    return out
