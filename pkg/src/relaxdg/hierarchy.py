"""Two-level model hierarchy: balance law plus equilibrium conservation law.

A hierarchy couples a "complex" balance law

    d_t U + d_x F(U) = (1/epsilon) R(U),   U in R^M,

carrying a strictly convex entropy pair (H, Q), with the "simple"
conservation law obtained by projecting onto the source's conserved
quantities u = P U in R^m and closing with the equilibrium lift M(u)
(P M(u) = u, R(M(u)) = 0):

    d_t u + d_x g(u) = 0,   g(u) = P F(M(u)).

This module is deliberately generic: the oxygen mixture and the small
verification systems plug in as instances.  It provides the relative
entropy machinery used everywhere else (error measures, dissipation,
coercivity of the source near the manifold) and the box constants that
enter the global error bound.

Derivative evaluators are optional; missing ones are filled with central
finite differences built on whatever analytic pieces are available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class HierarchyError(ValueError):
    """A hierarchy evaluation left its domain of definition."""


def _as_batch(X, dim):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise HierarchyError(f"expected states of dimension {dim}, got shape {X.shape}")
    return np.ascontiguousarray(X)


def _require_finite(name, values, states):
    values = np.asarray(values)
    bad = ~np.isfinite(values).reshape(values.shape[0], -1).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise HierarchyError(
            f"{name} is non-finite at sample {i}; state = {np.asarray(states)[i]!r}"
        )


def fd_jacobian(fn, X, rel=1e-6, floor=1e-8):
    """Central-difference Jacobian of a batched map.

    Args:
        fn: callable mapping (n, d) states to (n, ...) values.
        X: (n, d) evaluation states.
        rel: relative step size.
        floor: absolute step floor per component.

    Returns:
        Array of shape fn(X).shape + (d,) with derivatives in the last axis.
    """
    X = np.asarray(X, dtype=np.float64)
    base = np.asarray(fn(X), dtype=np.float64)
    n, d = X.shape
    out = np.empty(base.shape + (d,))
    for j in range(d):
        h = rel * np.maximum(np.abs(X[:, j]), floor)
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, j] += h
        Xm[:, j] -= h
        span = (Xp[:, j] - Xm[:, j]).reshape((n,) + (1,) * (base.ndim - 1))
        out[..., j] = (np.asarray(fn(Xp), dtype=np.float64)
                       - np.asarray(fn(Xm), dtype=np.float64)) / span
    return out


@dataclass
class ModelHierarchy:
    """Bundle of callables defining one complex/simple model pair.

    All state-valued callables are batched: they take (n, dim) arrays and
    return arrays with a leading sample axis.  ``maxwellian`` returns a
    ``(states, ok)`` pair instead of raising, so vectorized callers can
    apply their own failure policy; :meth:`lift` is the raising wrapper.

    Required fields cover everything the solver needs (fluxes, source,
    entropy pair, wave speeds, the projection and the lift).  The optional
    derivative fields, when left ``None``, are filled with finite-difference
    fallbacks in ``__post_init__``; analytic implementations are preferred
    wherever indicator smoothness matters.

    Attributes:
        name: short label used in logs and reports.
        dim_complex: M, state dimension of the balance law.
        dim_simple: m, state dimension of the projected system.
        projection: (m, M) constant matrix annihilating the source.
        epsilon: stiffness scale multiplying the source as (1/epsilon) R.
        flux, source, entropy, entropy_flux, wave_speed: complex-system
            callables on (n, M) states.
        maxwellian: equilibrium lift, (n, m) -> ((n, M), (n,) bool).
        admissible: mask of states the complex callables accept.
    """

    name: str
    dim_complex: int
    dim_simple: int
    projection: np.ndarray
    flux: Callable
    source: Callable
    entropy: Callable
    entropy_flux: Callable
    wave_speed: Callable
    maxwellian: Callable
    epsilon: float = 1.0
    admissible: Callable = None
    solver_admissible: Callable = None
    entropy_grad: Callable = None
    entropy_hessian: Callable = None
    flux_jacobian: Callable = None
    flux_hessians: Callable = None
    source_jacobian: Callable = None
    maxwellian_jacobian: Callable = None
    induced_entropy_hessian: Callable = None
    simple_flux: Callable = None
    simple_wave_speed: Callable = None
    entropy_grad_component_hessians: Callable = None
    maxwellian_component_hessians: Callable = None
    fd_rel: float = 1e-6
    fd_floor: float = 1e-8

    def __post_init__(self):
        self.projection = np.ascontiguousarray(np.asarray(self.projection, dtype=np.float64))
        m, M = self.projection.shape
        if (m, M) != (self.dim_simple, self.dim_complex):
            raise HierarchyError(
                f"projection shape {self.projection.shape} does not match "
                f"(m, M) = ({self.dim_simple}, {self.dim_complex})"
            )
        if np.linalg.matrix_rank(self.projection) != m:
            raise HierarchyError("projection matrix is rank deficient")
        if not self.epsilon > 0.0:
            raise HierarchyError("epsilon must be positive")

        fd = lambda fn: (lambda X: fd_jacobian(fn, _as_batch(X, self.dim_complex),
                                               self.fd_rel, self.fd_floor))
        if self.admissible is None:
            self.admissible = lambda U: np.ones(_as_batch(U, self.dim_complex).shape[0], dtype=bool)
        if self.solver_admissible is None:
            # Default: flux and source evaluation share the entropy domain.
            self.solver_admissible = self.admissible
        if self.entropy_grad is None:
            self.entropy_grad = fd(self.entropy)
        if self.entropy_hessian is None:
            self.entropy_hessian = fd(self.entropy_grad)
        if self.flux_jacobian is None:
            self.flux_jacobian = fd(self.flux)
        if self.flux_hessians is None:
            self.flux_hessians = fd(self.flux_jacobian)
        if self.source_jacobian is None:
            self.source_jacobian = fd(self.source)
        if self.entropy_grad_component_hessians is None:
            self.entropy_grad_component_hessians = fd(self.entropy_hessian)
        if self.maxwellian_jacobian is None:
            self.maxwellian_jacobian = lambda u: fd_jacobian(
                self.lift, _as_batch(u, self.dim_simple), self.fd_rel, self.fd_floor)
        if self.maxwellian_component_hessians is None:
            self.maxwellian_component_hessians = lambda u: fd_jacobian(
                self.maxwellian_jacobian, _as_batch(u, self.dim_simple),
                self.fd_rel, self.fd_floor)
        if self.simple_flux is None:
            self.simple_flux = lambda u: self.flux(self.lift(u)) @ self.projection.T
        if self.induced_entropy_hessian is None:
            self.induced_entropy_hessian = self._induced_hessian_from_lift
        if self.simple_wave_speed is None:
            self.simple_wave_speed = self._simple_speed_from_jacobian

    def project(self, U):
        """P-moments of complex states: (n, M) -> (n, m)."""
        return _as_batch(U, self.dim_complex) @ self.projection.T

    def lift(self, u):
        """Equilibrium lift that raises on failure.

        Raises:
            HierarchyError: if the Maxwellian solve fails for any sample.
        """
        u = _as_batch(u, self.dim_simple)
        U, ok = self.maxwellian(u)
        if not np.all(ok):
            i = int(np.argmax(~np.asarray(ok)))
            raise HierarchyError(f"Maxwellian lift failed at sample {i}; u = {u[i]!r}")
        return U

    def induced_entropy(self, u):
        """Entropy pair of the simple system: (eta, q) = (H, Q) at the lift."""
        U = self.lift(u)
        return self.entropy(U), self.entropy_flux(U)

    def _induced_hessian_from_lift(self, u):
        # hess eta = dM^T hessH(M) dM; the dM^T hessH dM form is exact because
        # grad H(M(u)) lies in the row space of P and P M(u) = u identically.
        u = _as_batch(u, self.dim_simple)
        U = self.lift(u)
        H2 = self.entropy_hessian(U)
        dM = self.maxwellian_jacobian(u)
        N = np.einsum("nip,nij,njq->npq", dM, H2, dM)
        return 0.5 * (N + np.swapaxes(N, 1, 2))

    def _simple_speed_from_jacobian(self, u):
        u = _as_batch(u, self.dim_simple)
        J = fd_jacobian(self.simple_flux, u, self.fd_rel, self.fd_floor)
        return np.abs(np.linalg.eigvals(J)).max(axis=1)


def relative_entropy(hier, U, V, check=True):
    """Convexity gap H(U) - H(V) - grad H(V).(U - V), batched.

    Nonnegative for strictly convex H, zero only at U = V.  This is the
    error measure the whole adaptation strategy is built on.

    Raises:
        HierarchyError: if ``check`` and any sample evaluates non-finite.
    """
    U = _as_batch(U, hier.dim_complex)
    V = _as_batch(V, hier.dim_complex)
    out = hier.entropy(U) - hier.entropy(V) - np.einsum(
        "ni,ni->n", hier.entropy_grad(V), U - V)
    if check:
        _require_finite("relative_entropy", out[:, None], np.stack([U, V], axis=1))
    return out


def relative_entropy_flux(hier, U, V, check=True):
    """Relative entropy flux Q(U) - Q(V) - grad H(V).(F(U) - F(V))."""
    U = _as_batch(U, hier.dim_complex)
    V = _as_batch(V, hier.dim_complex)
    out = hier.entropy_flux(U) - hier.entropy_flux(V) - np.einsum(
        "ni,ni->n", hier.entropy_grad(V), hier.flux(U) - hier.flux(V))
    if check:
        _require_finite("relative_entropy_flux", out[:, None], np.stack([U, V], axis=1))
    return out


def relative_dissipation(hier, U, V, check=True):
    """Source-induced decay -(grad H(U) - grad H(V)).(R(U) - R(V))."""
    U = _as_batch(U, hier.dim_complex)
    V = _as_batch(V, hier.dim_complex)
    out = -np.einsum(
        "ni,ni->n",
        hier.entropy_grad(U) - hier.entropy_grad(V),
        hier.source(U) - hier.source(V),
    )
    if check:
        _require_finite("relative_dissipation", out[:, None], np.stack([U, V], axis=1))
    return out


@dataclass
class ConvexStateSet:
    """Axis-aligned box of admissible complex states.

    The global error bound holds on a convex set containing every state a
    run produces; a box is the simplest certified choice.  Bounds are
    per-component and finite.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64).copy()
        self.upper = np.asarray(self.upper, dtype=np.float64).copy()
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise HierarchyError("bounds must be matching 1-d arrays")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise HierarchyError("bounds must be finite")
        if not (self.lower < self.upper).all():
            bad = int(np.argmax(~(self.lower < self.upper)))
            raise HierarchyError(f"degenerate bounds in component {bad}")

    @classmethod
    def from_states(cls, states, inflate=1.5, lower_floor=None):
        """Bounding box of given states, inflated about the midpoint.

        Args:
            states: (n, M) array whose componentwise range seeds the box.
            inflate: half-width multiplier (1.0 keeps the tight box).
            lower_floor: optional per-component lower clamps, used to keep
                densities positive after inflation.
        """
        states = np.asarray(states, dtype=np.float64)
        lo = states.min(axis=0)
        hi = states.max(axis=0)
        mid = 0.5 * (lo + hi)
        # degenerate axes (constant data) get a width from the midpoint scale
        half = np.maximum(0.5 * (hi - lo), 0.05 * np.abs(mid) + 1e-12)
        lower = mid - inflate * half
        upper = mid + inflate * half
        if lower_floor is not None:
            lower = np.maximum(lower, np.asarray(lower_floor, dtype=np.float64))
            upper = np.maximum(upper, lower + 1e-12 * (1.0 + np.abs(lower)))
        return cls(lower, upper)

    @property
    def dim(self):
        return self.lower.size

    def contains(self, states):
        states = np.asarray(states, dtype=np.float64)
        return ((states >= self.lower) & (states <= self.upper)).all(axis=-1)

    def sample_grid(self, points_per_axis=9):
        """Deterministic tensor grid, (points_per_axis**dim, dim)."""
        axes = [np.linspace(self.lower[i], self.upper[i], points_per_axis)
                for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def sample_random(self, n, rng):
        span = self.upper - self.lower
        return self.lower + span * rng.random((n, self.dim))


@dataclass
class HessianConstants:
    """Box-wide curvature bounds entering the global error estimate.

    c_h_lower / c_h_upper bracket the entropy Hessian's Rayleigh quotient;
    c_h_upper additionally dominates the third-derivative functional of H.
    c_f bounds the flux curvature and c_m the lift curvature.
    """

    c_h_lower: float
    c_h_upper: float
    c_f: float
    c_m: float

    def __post_init__(self):
        if not (0.0 < self.c_h_lower <= self.c_h_upper):
            raise HierarchyError(
                f"need 0 < c_h_lower <= c_h_upper, got ({self.c_h_lower}, {self.c_h_upper})"
            )
        if self.c_f < 0.0 or self.c_m < 0.0:
            raise HierarchyError("curvature bounds must be nonnegative")


def _unit_directions(dim, count, seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((count, dim))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def _curvature_functional(tensors, V):
    # tensors: (n, K, d, d); V: (c, d); returns max over samples/directions of
    # the l2 norm over K of V^T tensors_k V (unit V).
    quad = np.einsum("nkij,ci,cj->nkc", tensors, V, V)
    return float(np.sqrt((quad ** 2).sum(axis=1)).max()) if quad.size else 0.0


def compute_hessian_constants(hier, box, points_per_axis=9, directions=64, seed=2024):
    """Estimate curvature constants over a state box.

    Deterministic tensor-grid sampling with a fixed-seed set of unit
    directions keeps the result reproducible; doubling the resolution is the
    documented stability check.  Grid points the hierarchy rejects
    (inadmissible or failed lift) are skipped.

    Raises:
        HierarchyError: if the sampled entropy Hessian is not positive
            definite (the entropy is not convex on the box) or no grid
            point survives the admissibility filters.
    """
    grid = box.sample_grid(points_per_axis)
    grid = grid[hier.admissible(grid)]
    if grid.shape[0] == 0:
        raise HierarchyError("no admissible grid samples in the state box")

    H2 = hier.entropy_hessian(grid)
    finite = np.isfinite(H2).all(axis=(1, 2))
    grid, H2 = grid[finite], H2[finite]
    if grid.shape[0] == 0:
        raise HierarchyError("entropy Hessian non-finite on the whole box")
    eigs = np.linalg.eigvalsh(0.5 * (H2 + np.swapaxes(H2, 1, 2)))
    c_h_lower = float(eigs[:, 0].min())
    c_h_upper = float(eigs[:, -1].max())
    if c_h_lower <= 0.0:
        i = int(np.argmin(eigs[:, 0]))
        raise HierarchyError(
            f"entropy not convex on the box: min eigenvalue {eigs[i, 0]:.3e} "
            f"at state {grid[i]!r}"
        )

    V = _unit_directions(hier.dim_complex, directions, seed)
    c_f = _curvature_functional(hier.flux_hessians(grid), V)
    c_h_upper = max(c_h_upper,
                    _curvature_functional(hier.entropy_grad_component_hessians(grid), V))

    u = hier.project(grid)
    lifted, ok = hier.maxwellian(u)
    u_ok = u[np.asarray(ok, dtype=bool)]
    if u_ok.shape[0]:
        MH = hier.maxwellian_component_hessians(u_ok)
        PV = V @ hier.projection.T
        quad = np.einsum("nkij,ci,cj->nkc", MH, PV, PV)
        c_m = float(np.sqrt((quad ** 2).sum(axis=1)).max())
    else:
        c_m = 0.0
    return HessianConstants(c_h_lower, c_h_upper, c_f, max(c_m, 0.0))


def _resolved_deviation(U, lifted, ulps):
    """Samples whose manifold deviation exceeds subtraction roundoff.

    A deviation component is meaningful once it clears a few ulps of the
    operands that produced it.  Comparing against the full state magnitude
    instead would discard trace-species regimes where the deviation is tiny
    in absolute terms yet perfectly resolved in its own components.
    """
    d = np.abs(U - lifted)
    floor = ulps * np.spacing(np.abs(U) + np.abs(lifted))
    return (d > floor).any(axis=1)


def estimate_coercivity_nu(hier, box, samples=4096, seed=0, manifold_ulps=64.0):
    """Smallest sampled ratio of dissipation to squared manifold distance.

    Near the equilibrium manifold the source dissipates relative entropy at
    least proportionally to |U - M(P U)|^2; the proportionality constant nu
    feeds the modeling-error indicators.  The estimate is the minimum of
    the ratio over admissible random samples with the lift computable and a
    resolved distance.

    Raises:
        HierarchyError: if no usable off-manifold sample exists, or the
            minimal ratio is nonpositive (coercivity fails on the box; the
            witness state is reported).
    """
    if samples < 1:
        raise HierarchyError("need at least one sample")
    rng = np.random.default_rng(seed)
    U = box.sample_random(samples, rng)
    U = U[hier.admissible(U)]
    if U.shape[0] == 0:
        raise HierarchyError("no admissible samples in the state box")
    lifted, ok = hier.maxwellian(hier.project(U))
    ok = np.asarray(ok, dtype=bool)
    U, lifted = U[ok], lifted[ok]
    dist2 = ((U - lifted) ** 2).sum(axis=1)
    off = _resolved_deviation(U, lifted, manifold_ulps)
    if not off.any():
        raise HierarchyError(
            "all usable samples lie on the equilibrium manifold; "
            "coercivity needs off-manifold states"
        )
    U, lifted, dist2 = U[off], lifted[off], dist2[off]
    diss = relative_dissipation(hier, U, lifted, check=False)
    good = np.isfinite(diss)
    U, dist2, diss = U[good], dist2[good], diss[good]
    if U.shape[0] == 0:
        raise HierarchyError("dissipation non-finite on all off-manifold samples")
    ratio = diss / dist2
    i = int(np.argmin(ratio))
    nu = float(ratio[i])
    if nu <= 0.0:
        raise HierarchyError(
            f"coercivity violated on the box: dissipation/distance^2 = {nu:.3e} "
            f"at state {U[i]!r}"
        )
    return nu


def check_coercivity(hier, box, nu, samples=4096, seed=1, manifold_ulps=64.0):
    """Fresh-sample audit of a previously estimated nu.

    Returns:
        List of violation records (sample state, observed ratio); empty when
        the estimate holds on the new sample set.
    """
    rng = np.random.default_rng(seed)
    U = box.sample_random(samples, rng)
    U = U[hier.admissible(U)]
    lifted, ok = hier.maxwellian(hier.project(U))
    ok = np.asarray(ok, dtype=bool)
    U, lifted = U[ok], lifted[ok]
    dist2 = ((U - lifted) ** 2).sum(axis=1)
    off = _resolved_deviation(U, lifted, manifold_ulps)
    U, lifted, dist2 = U[off], lifted[off], dist2[off]
    if U.shape[0] == 0:
        return []
    diss = relative_dissipation(hier, U, lifted, check=False)
    bad = np.isfinite(diss) & (diss < nu * dist2)
    return [
        {"state": U[i].copy(), "ratio": float(diss[i] / dist2[i])}
        for i in np.flatnonzero(bad)
    ]


def validate_hierarchy(hier, states, simple_states=None, fd_rel=1e-6, fd_floor=1e-8):
    """Structure and compatibility audit on given sample states.

    Checks the algebraic identities every hierarchy must satisfy (projected
    source vanishes, the lift is a section of P, the source vanishes on the
    manifold), the entropy/flux compatibility of both systems by central
    differences, and the sign of the entropy production.

    Returns:
        Dict of named scalar residuals; callers assert their own tolerances.
    """
    U = _as_batch(states, hier.dim_complex)
    report = {}

    R = hier.source(U)
    report["projected_source"] = float(np.abs(R @ hier.projection.T).max())

    u = hier.project(U) if simple_states is None else _as_batch(simple_states, hier.dim_simple)
    lifted, ok = hier.maxwellian(u)
    ok = np.asarray(ok, dtype=bool)
    report["lift_failures"] = int((~ok).sum())
    if ok.any():
        report["lift_section"] = float(
            np.abs(hier.project(lifted[ok]) - u[ok]).max())
        report["source_on_manifold"] = float(np.abs(hier.source(lifted[ok])).max())
        # idempotence: lifting the projection of a lifted state returns it
        again, ok2 = hier.maxwellian(hier.project(lifted[ok]))
        ok2 = np.asarray(ok2, dtype=bool)
        scale = 1.0 + np.abs(lifted[ok][ok2]).max() if ok2.any() else 1.0
        report["lift_idempotence"] = float(
            np.abs(again[ok2] - lifted[ok][ok2]).max() / scale) if ok2.any() else np.nan

    gQ = fd_jacobian(hier.entropy_flux, U, fd_rel, fd_floor)
    gH = fd_jacobian(hier.entropy, U, fd_rel, fd_floor)
    JF = hier.flux_jacobian(U)
    resid = gQ - np.einsum("ni,nij->nj", gH, JF)
    report["compat_complex"] = float(
        np.abs(resid).max() / max(np.abs(gQ).max(), 1e-300))

    if ok.any():
        uo = u[ok]
        eta = lambda x: hier.induced_entropy(x)[0]
        qfn = lambda x: hier.induced_entropy(x)[1]
        gq = fd_jacobian(qfn, uo, fd_rel, fd_floor)
        ge = fd_jacobian(eta, uo, fd_rel, fd_floor)
        Jg = fd_jacobian(hier.simple_flux, uo, fd_rel, fd_floor)
        resid_s = gq - np.einsum("ni,nij->nj", ge, Jg)
        report["compat_simple"] = float(
            np.abs(resid_s).max() / max(np.abs(gq).max(), 1e-300))

    prod = np.einsum("ni,ni->n", hier.entropy_grad(U), R) / hier.epsilon
    report["entropy_production_max"] = float(prod.max())

    zero = relative_entropy(hier, U, U, check=False)
    zf = relative_entropy_flux(hier, U, U, check=False)
    zd = relative_dissipation(hier, U, U, check=False)
    report["identity_relative_entropy"] = float(np.abs(zero).max())
    report["identity_relative_flux"] = float(np.abs(zf).max())
    report["identity_relative_dissipation"] = float(np.abs(zd).max())
    return report
