"""Model adaptation: weighted residual indicators and the switch rule.

Each cell carries a tag selecting the full relaxation system or the
equilibrium conservation law.  After every step the off-manifold residual
of simple cells and the coarsening residual and equilibrium distance of
complex cells are turned into scalar indicators, and a three-branch rule
switches models, subject to a minimum patch width for simple regions.
Conversions are exact projections one way and quadrature lifts the other.
"""

from dataclasses import dataclass

import numpy as np

from . import dg, reconstruct
from .errors import ConfigError, PhysicsError
from .hierarchy import relative_entropy


@dataclass
class AdaptConfig:
    """Tolerances and constants of the adaptation rule.

    Attributes:
        tau_r: residual indicator tolerance.
        tau_kappa: equilibrium-distance tolerance for coarsening.
        f_eps: safety factor in (0, 1) applied to tau_r for coarsening.
        eps_over_nu: stiffness-to-coercivity prefactor of the indicators.
        min_patch: minimum length of a run of simple cells.
    """

    tau_r: float
    tau_kappa: float
    f_eps: float = 0.25
    eps_over_nu: float = 1.0
    min_patch: int = 2

    def __post_init__(self):
        if not (self.tau_r > 0.0 and self.tau_kappa > 0.0):
            raise ConfigError("indicator tolerances must be positive")
        if not 0.0 < self.f_eps < 1.0:
            raise ConfigError("safety factor must lie in (0, 1)")
        if not self.eps_over_nu > 0.0:
            raise ConfigError("eps_over_nu must be positive")
        if int(self.min_patch) < 1:
            raise ConfigError("min_patch must be at least 1")
        self.min_patch = int(self.min_patch)


@dataclass
class ModelMap:
    """Per-cell model tags with indicator bookkeeping.

    Attributes:
        theta: 1 for complex cells, 0 for simple cells.
        indicator: latest refinement indicator (simple cells) or
            coarsening indicator (complex cells).
        kappa: latest equilibrium distance; meaningful on complex cells.
        switches: number of model changes per cell, monotone.
    """

    theta: np.ndarray
    indicator: np.ndarray
    kappa: np.ndarray
    switches: np.ndarray

    @classmethod
    def initial(cls, n_cells):
        """All-complex map, the state of the first time step."""
        return cls(theta=np.ones(n_cells, dtype=np.int8),
                   indicator=np.zeros(n_cells),
                   kappa=np.zeros(n_cells),
                   switches=np.zeros(n_cells, dtype=np.int64))

    def patch_ok(self, min_patch=2):
        """Whether every maximal run of simple cells has enough cells."""
        return all(length >= min_patch
                   for _, length in _zero_runs(self.theta))


def _zero_runs(theta):
    """Maximal runs of zeros as (start, length), wrap-aware."""
    theta = np.asarray(theta)
    n = theta.shape[0]
    ones = np.flatnonzero(theta == 1)
    if ones.size == 0:
        return [(0, n)] if n else []
    # rotate so the array starts with a complex cell; runs then never wrap
    k = ones[0]
    rolled = np.roll(theta, -k)
    runs = []
    start = None
    for i, v in enumerate(rolled):
        if v == 0 and start is None:
            start = i
        elif v == 1 and start is not None:
            runs.append(((start + k) % n, i - start))
            start = None
    if start is not None:
        runs.append(((start + k) % n, n - start))
    return runs


def patch_postprocess(theta, min_patch=2):
    """Revert runs of simple cells shorter than min_patch to complex."""
    out = np.asarray(theta).copy()
    n = out.shape[0]
    for start, length in _zero_runs(out):
        if length < min_patch:
            idx = (start + np.arange(length)) % n
            out[idx] = 1
    return out


def algorithm1_update(theta, ms, mc, kappa, cfg):
    """One sweep of the three-branch switch rule.

    Complex cells coarsen when both the coarsening indicator and the
    equilibrium distance clear their tolerances; simple cells refine when
    the off-manifold indicator exceeds tau_r; all other cells keep their
    model.  Non-finite indicator entries behave as +inf, so they never
    permit coarsening and always force refinement.

    Args:
        theta: current model tags.
        ms, mc, kappa: per-cell indicator arrays (entries are read only
            where the respective branch applies).
        cfg: AdaptConfig.

    Returns:
        Proposed tag array, before patch postprocessing.
    """
    theta = np.asarray(theta)
    ms = _sanitize(ms)
    mc = _sanitize(mc)
    kappa = _sanitize(kappa)
    coarsen = (theta == 1) & (mc < cfg.f_eps * cfg.tau_r) \
        & (kappa < cfg.tau_kappa)
    refine = (theta == 0) & (ms > cfg.tau_r)
    out = theta.copy()
    out[coarsen] = 0
    out[refine] = 1
    return out


def _sanitize(values):
    values = np.asarray(values, dtype=np.float64).copy()
    values[~np.isfinite(values)] = np.inf
    return values


def _weighted_indicator_sq(hier, weight_states, resid):
    """(1/dx dt) integral of |entropy-Hessian-weighted residual|^2.

    The cell-slab measure cancels against the normalization, leaving the
    plain tensor-Gauss average. Shapes: (cells, 3, 2, M) in, (cells,) out.
    """
    flat = weight_states.reshape(-1, weight_states.shape[-1])
    W = hier.entropy_hessian(flat).reshape(weight_states.shape + (-1,))
    wr = np.einsum("cplij,cplj->cpli", W, resid)
    sq = (wr * wr).sum(axis=-1)
    return 0.25 * np.einsum("cpl,p,l->c", sq, dg.GAUSS_W, reconstruct.TIME_W)


def indicator_Ms(slab, cfg, residuals=None):
    """Refinement indicator of simple cells.

    Args:
        slab: SlabReconstruction for the finished step.
        cfg: AdaptConfig supplying eps_over_nu.
        residuals: optional output of residual_simple(slab) to reuse.

    Returns:
        (cells, values): simple-cell indices and their indicators.
    """
    out = residuals if residuals is not None else \
        reconstruct.residual_simple(slab)
    cells = out["cells"]
    if cells.size == 0:
        return cells, np.zeros(0)
    val = _weighted_indicator_sq(slab.hier, out["lifted"], out["R_eps"])
    return cells, np.sqrt(cfg.eps_over_nu * np.maximum(val, 0.0))


def coarsening_residual(slab, cells=None):
    """Off-manifold residual of the projected complex solution.

    Returns:
        (cells, lifted, resid, ok): evaluated cells, lifted states and the
        residual at tensor points, and a per-cell mask that is False where
        the lift failed (those cells are non-coarsenable, not fatal).
    """
    hier = slab.hier
    if cells is None:
        cells = np.flatnonzero(slab.theta == 1)
    cells = np.asarray(cells, dtype=np.intp)
    M, m = hier.dim_complex, hier.dim_simple
    if cells.size == 0:
        z = np.zeros((0, 3, 2, M))
        return cells, z, z, np.ones(0, dtype=bool)
    u = slab.eval_projected(dg.GAUSS_X, reconstruct.TIME_TAU, "value", cells)
    ux = slab.eval_projected(dg.GAUSS_X, reconstruct.TIME_TAU, "dx", cells)
    flat = u.reshape(-1, m)
    lifted, ok_pts = hier.maxwellian(flat)
    ok = ok_pts.reshape(cells.size, -1).all(axis=1)
    ok &= np.isfinite(lifted.reshape(cells.size, -1)).all(axis=1)
    lifted = np.where(ok_pts[:, None], lifted, 1.0)  # placeholder rows
    shape = u.shape[:3]
    dM = hier.maxwellian_jacobian(flat).reshape(shape + (M, m))
    dF = hier.flux_jacobian(lifted).reshape(shape + (M, M))
    lifted = lifted.reshape(shape + (M,))
    y = np.einsum("cplij,cpljk,cplk->cpli", dF, dM, ux)
    resid = y - np.einsum("cplij,cplj->cpli", dM, y @ hier.projection.T)
    return cells, lifted, resid, ok


def indicator_Mc(slab, cfg, cells=None):
    """Coarsening indicator of complex cells; +inf where the lift failed."""
    cells, lifted, resid, ok = coarsening_residual(slab, cells)
    if cells.size == 0:
        return cells, np.zeros(0), ok
    val = _weighted_indicator_sq(slab.hier, lifted, resid)
    mc = np.sqrt(cfg.eps_over_nu * np.maximum(val, 0.0))
    mc[~ok] = np.inf
    return cells, mc, ok


def coarsening_distance(state, hier, dt, cells=None):
    """Equilibrium distance of complex cells from the end-of-step solution.

    Computes the square root of the cell average of the relative entropy
    between the DG polynomial and the lift of its projection, scaled by
    1/(2 dt). Lift failures and non-finite entropies give +inf.

    Returns:
        (cells, values).
    """
    if cells is None:
        cells = np.flatnonzero(state.theta == 1)
    cells = np.asarray(cells, dtype=np.intp)
    if cells.size == 0:
        return cells, np.zeros(0)
    U = dg.eval_at(state.coeff_c[cells], dg.PHI)
    flat = U.reshape(-1, hier.dim_complex)
    lifted, ok = hier.maxwellian(flat @ hier.projection.T)
    ent = np.full(flat.shape[0], np.inf)
    if ok.any():
        ent[ok] = relative_entropy(hier, flat[ok], lifted[ok], check=False)
    ent = ent.reshape(cells.size, -1)
    val = np.einsum("cq,q->c", ent, dg.GAUSS_W) / (2.0 * dt)
    val = np.where(np.isfinite(val), np.maximum(val, 0.0), np.inf)
    return cells, np.sqrt(val)


def convert_models(state, new_theta, hier):
    """Re-represent cells whose model tag changed.

    Complex to simple applies the projection to the modal coefficients,
    which is exact. Simple to complex lifts the DG polynomial at the
    quadrature points and projects back; a lift failure aborts the change
    of that cell only.

    Args:
        state: MixedDGState before conversion (not modified).
        new_theta: proposed tags.
        hier: model hierarchy.

    Returns:
        (converted state, applied tags, list of cells whose refinement
        failed and was reverted).
    """
    old = state.theta
    new_theta = np.asarray(new_theta, dtype=np.int8)
    out = state.copy()
    failed = []

    to_simple = np.flatnonzero((old == 1) & (new_theta == 0))
    if to_simple.size:
        out.coeff_s[to_simple] = state.coeff_c[to_simple] @ hier.projection.T
        out.coeff_c[to_simple] = 0.0

    to_complex = np.flatnonzero((old == 0) & (new_theta == 1))
    if to_complex.size:
        u = dg.eval_at(state.coeff_s[to_complex], dg.PHI)
        lifted, ok_pts = hier.maxwellian(u.reshape(-1, hier.dim_simple))
        lifted = lifted.reshape(u.shape[:2] + (hier.dim_complex,))
        ok = ok_pts.reshape(to_complex.size, -1).all(axis=1)
        ok &= np.isfinite(lifted.reshape(to_complex.size, -1)).all(axis=1)
        good = to_complex[ok]
        if good.size:
            coeff = 0.5 * np.einsum("cqk,q,jq->cjk", lifted[ok],
                                    dg.GAUSS_W, dg.PHI)
            out.coeff_c[good] = coeff
            out.coeff_s[good] = 0.0
        failed = sorted(int(c) for c in to_complex[~ok])

    applied = new_theta.copy()
    if failed:
        applied[failed] = 0
    out.theta = applied
    return out, applied, failed


def adapt_step(state, mmap, slab, cfg, residuals_s=None):
    """Evaluate indicators, update the model map, and convert cells.

    Args:
        state: end-of-step MixedDGState (its tags must match mmap.theta).
        mmap: ModelMap carrying tags and counters.
        slab: SlabReconstruction of the step just completed.
        cfg: AdaptConfig.
        residuals_s: optional output of residual_simple(slab), reused by
            callers that already evaluated it for bound collection.

    Returns:
        (new state, new ModelMap, info dict with per-cell indicator
        arrays and the lists of switched cells).

    Raises:
        PhysicsError: if repeated lift failures leave no tag assignment
            that honors the patch rule.
    """
    if not np.array_equal(state.theta, mmap.theta):
        raise ValueError("state and model map disagree on cell tags")
    n = state.n_cells
    ms = np.full(n, np.nan)
    mc = np.full(n, np.nan)
    kap = np.full(n, np.nan)

    s_cells, s_vals = indicator_Ms(slab, cfg, residuals=residuals_s)
    ms[s_cells] = s_vals
    c_cells, c_vals, c_ok = indicator_Mc(slab, cfg)
    mc[c_cells] = c_vals
    k_cells, k_vals = coarsening_distance(state, slab.hier, slab.dt)
    kap[k_cells] = k_vals

    raw = algorithm1_update(mmap.theta, ms, mc, kap, cfg)
    proposed = patch_postprocess(raw, cfg.min_patch)

    all_failed = []
    for _ in range(2):
        new_state, applied, failed = convert_models(state, proposed, slab.hier)
        if not failed:
            break
        # a failed refinement keeps its cell simple; restore the patch rule
        # by keeping that cell's entire previous simple run simple
        all_failed.extend(failed)
        for cell in failed:
            for start, length in _zero_runs(mmap.theta):
                span = (start + np.arange(length)) % n
                if cell in span:
                    proposed[span] = 0
                    break
    else:
        new_state, applied, failed = convert_models(state, proposed, slab.hier)
        if failed:
            raise PhysicsError(
                "lift failures prevent a tag assignment honoring the patch "
                "rule in cells %s" % failed, cells=failed)

    switched = applied != mmap.theta
    # indicators were computed under the tags the slab was advanced with
    new_map = ModelMap(theta=applied,
                       indicator=np.where(mmap.theta == 1, mc, ms),
                       kappa=np.where(mmap.theta == 1, kap, np.nan),
                       switches=mmap.switches + switched)
    info = {
        "ms": ms, "mc": mc, "kappa": kap,
        "coarsened": np.flatnonzero((mmap.theta == 1) & (applied == 0)),
        "refined": np.flatnonzero((mmap.theta == 0) & (applied == 1)),
        "refine_failed": sorted(set(all_failed)),
        "noncoarsenable": c_cells[~c_ok],
    }
    return new_state, new_map, info
