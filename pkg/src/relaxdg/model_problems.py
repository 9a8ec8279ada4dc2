"""Small analytically tractable hierarchy instances for verification.

The oxygen mixture exercises the production path, but its curvature
constants span fifteen orders of magnitude, which makes it a poor vehicle
for testing the error machinery itself.  The two-component relaxation
system below has every derivative, its coercivity constant, and all box
constants in closed form, so solver convergence, estimator reliability,
and coercivity estimation can be checked against exact values.
"""

from __future__ import annotations

import numpy as np

from .hierarchy import ModelHierarchy


def toy_relaxation_hierarchy(advection=1.0, quad=0.5, rate=1.0, epsilon=1.0,
                             quad2=None):
    """Two-component relaxation system with quadratic entropy.

    The complex system couples two scalars through a flux that is the
    gradient of a cubic potential and relaxes them toward their common
    mean:

        F(U) = (advection*u2 + quad*u1^2/2, advection*u1 + quad2*u2^2/2),
        R(U) = rate*(u2 - u1, u1 - u2),
        H(U) = |U|^2/2,
        Q(U) = quad*u1^3/3 + quad2*u2^3/3 + advection*u1*u2.

    The projection sums the components, the equilibrium lift splits the sum
    evenly, and the induced conservation law is a Burgers-type equation
    with flux advection*u + (quad+quad2)*u^2/8.

    With quad2 = quad (the default) the flux of a lifted state is tangent
    to the equilibrium manifold, so the off-manifold residual vanishes
    identically; pass quad2 != quad to exercise nonzero modeling error.

    Closed-form reference values used by tests:
      * coercivity constant on any box: 2*rate,
      * entropy Hessian bounds: 1 and 1,
      * flux curvature bound: max(|quad|, |quad2|),
      * lift curvature bound: 0 (the lift is linear).

    Args:
        advection: linear cross-coupling speed.
        quad: quadratic flux coefficient of the first component.
        rate: relaxation rate toward the equal-component manifold.
        epsilon: stiffness scale of the source.
        quad2: quadratic flux coefficient of the second component
            (defaults to quad, the symmetric case).

    Returns:
        ModelHierarchy with every derivative evaluator analytic.
    """
    a = float(advection)
    b = float(quad)
    b2 = b if quad2 is None else float(quad2)
    r = float(rate)

    def flux(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        out = np.empty_like(U)
        out[:, 0] = a * U[:, 1] + 0.5 * b * U[:, 0] ** 2
        out[:, 1] = a * U[:, 0] + 0.5 * b2 * U[:, 1] ** 2
        return out

    def source(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        d = U[:, 1] - U[:, 0]
        return np.stack([r * d, -r * d], axis=1)

    def entropy(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        return 0.5 * (U ** 2).sum(axis=1)

    def entropy_flux(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        return ((b / 3.0) * U[:, 0] ** 3 + (b2 / 3.0) * U[:, 1] ** 3
                + a * U[:, 0] * U[:, 1])

    def wave_speed(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        center = 0.5 * (b * U[:, 0] + b2 * U[:, 1])
        radius = np.sqrt(0.25 * (b * U[:, 0] - b2 * U[:, 1]) ** 2 + a * a)
        return np.abs(center) + radius

    def maxwellian(u):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        half = 0.5 * u[:, 0]
        U = np.stack([half, half], axis=1)
        return U, np.isfinite(u[:, 0])

    def entropy_grad(U):
        return np.atleast_2d(np.asarray(U, dtype=np.float64)).copy()

    def entropy_hessian(U):
        n = np.atleast_2d(np.asarray(U, dtype=np.float64)).shape[0]
        return np.broadcast_to(np.eye(2), (n, 2, 2)).copy()

    def flux_jacobian(U):
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        n = U.shape[0]
        J = np.empty((n, 2, 2))
        J[:, 0, 0] = b * U[:, 0]
        J[:, 0, 1] = a
        J[:, 1, 0] = a
        J[:, 1, 1] = b2 * U[:, 1]
        return J

    def flux_hessians(U):
        n = np.atleast_2d(np.asarray(U, dtype=np.float64)).shape[0]
        FH = np.zeros((n, 2, 2, 2))
        FH[:, 0, 0, 0] = b
        FH[:, 1, 1, 1] = b2
        return FH

    def source_jacobian(U):
        n = np.atleast_2d(np.asarray(U, dtype=np.float64)).shape[0]
        J = np.empty((n, 2, 2))
        J[:, 0, 0] = -r
        J[:, 0, 1] = r
        J[:, 1, 0] = r
        J[:, 1, 1] = -r
        return J

    def maxwellian_jacobian(u):
        n = np.atleast_2d(np.asarray(u, dtype=np.float64)).shape[0]
        return np.full((n, 2, 1), 0.5)

    def maxwellian_component_hessians(u):
        n = np.atleast_2d(np.asarray(u, dtype=np.float64)).shape[0]
        return np.zeros((n, 2, 1, 1))

    def entropy_grad_component_hessians(U):
        n = np.atleast_2d(np.asarray(U, dtype=np.float64)).shape[0]
        return np.zeros((n, 2, 2, 2))

    def induced_entropy_hessian(u):
        n = np.atleast_2d(np.asarray(u, dtype=np.float64)).shape[0]
        return np.full((n, 1, 1), 0.5)

    def simple_flux(u):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        return a * u + 0.125 * (b + b2) * u ** 2

    def simple_wave_speed(u):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        return np.abs(a + 0.25 * (b + b2) * u[:, 0])

    return ModelHierarchy(
        name="toy-relaxation",
        dim_complex=2,
        dim_simple=1,
        projection=np.array([[1.0, 1.0]]),
        epsilon=epsilon,
        flux=flux,
        source=source,
        entropy=entropy,
        entropy_flux=entropy_flux,
        wave_speed=wave_speed,
        maxwellian=maxwellian,
        entropy_grad=entropy_grad,
        entropy_hessian=entropy_hessian,
        flux_jacobian=flux_jacobian,
        flux_hessians=flux_hessians,
        source_jacobian=source_jacobian,
        maxwellian_jacobian=maxwellian_jacobian,
        maxwellian_component_hessians=maxwellian_component_hessians,
        entropy_grad_component_hessians=entropy_grad_component_hessians,
        induced_entropy_hessian=induced_entropy_hessian,
        simple_flux=simple_flux,
        simple_wave_speed=simple_wave_speed,
    )
