"""Experiment driver: initial data, the adaptive time loop, run results.

The loop is model-agnostic: it advances a mixed DG state with SSP-RK3,
reconstructs every completed slab, evaluates the adaptation indicators,
and applies the switch rule.  The reacting-mixture instantiation on top
of a run configuration lives in :func:`run`; tests drive :func:`run_loop`
directly with toy hierarchies.
"""

from dataclasses import dataclass, field

import numpy as np

from . import adapt, chem, dg, estimator, output, reconstruct
from .adapt import AdaptConfig
from .errors import ConfigError, PhysicsError
from .hierarchy import ConvexStateSet, HierarchyError, estimate_coercivity_nu


@dataclass
class RunResult:
    """Everything a finished (or aborted) run hands to the io layer."""

    mesh: object
    mode: str
    n_steps: int = 0
    snapshots: list = field(default_factory=list)
    states: list = field(default_factory=list)
    records: list = None
    theta_log: list = field(default_factory=list)
    switch_counts: np.ndarray = None
    residual_dumps: list = field(default_factory=list)
    refine_failures: list = field(default_factory=list)
    max_speed: float = 0.0
    eps_over_nu: float = 1.0
    initial_entropy: float = None
    box: ConvexStateSet = None
    completed: bool = False


def _max_speed(state, mesh, hier):
    speeds = [0.0]
    cmask = state.theta == 1
    if cmask.any():
        flat = dg.eval_at(state.coeff_c[cmask], dg.PHI).reshape(
            -1, hier.dim_complex)
        speeds.append(float(hier.wave_speed(flat).max()))
    if (~cmask).any():
        flat = dg.eval_at(state.coeff_s[~cmask], dg.PHI).reshape(
            -1, hier.dim_simple)
        speeds.append(float(hier.simple_wave_speed(flat).max()))
    top = max(speeds)
    if not np.isfinite(top):
        raise PhysicsError("wave speed evaluation failed")
    return top


def _snapshot_indicators(mode, mmap, state, slab, cfg, dt):
    """Indicator and distance columns for one snapshot."""
    n = state.n_cells
    ind = np.full(n, np.nan)
    kap = np.full(n, np.nan)
    if mode == "adaptive":
        return mmap.indicator.copy(), mmap.kappa.copy()
    if mode == "complex-only":
        cells, mc, _ = adapt.indicator_Mc(slab, cfg)
        ind[cells] = mc
        kcells, kv = adapt.coarsening_distance(state, slab.hier, dt)
        kap[kcells] = kv
    else:
        cells, ms = adapt.indicator_Ms(slab, cfg)
        ind[cells] = ms
    return ind, kap


def _make_snapshot(state, mesh, hier, t, ind, kap, names, units):
    means, ok = state.lifted_means(hier)
    src = np.full(mesh.n_cells, np.nan)
    if ok.any():
        r = hier.source(means[ok]) / hier.epsilon
        src[ok] = np.sqrt((r * r).sum(axis=-1))
    return output.Snapshot(
        t=t, x=mesh.centers(), means=means, theta=state.theta.copy(),
        indicator=ind, kappa=kap, source_norm=src,
        component_names=names, component_units=units)


def _residual_norms(slab, res_c, res_s, n):
    h, dt = slab.mesh.h, slab.dt
    w = 0.25 * h * dt
    fields = {}
    for key, cells, arr in (
            ("resid_complex", res_c[0], res_c[2]),
            ("resid_simple", res_s["cells"], res_s["R_s"]),
            ("resid_drift", res_s["cells"], res_s["R_delta"]),
            ("resid_model", res_s["cells"], res_s["R_eps"])):
        col = np.full(n, np.nan)
        if cells.size:
            sq = (arr * arr).sum(axis=-1)
            col[cells] = np.sqrt(w * np.einsum(
                "cpl,p,l->c", sq, dg.GAUSS_W, reconstruct.TIME_W))
        fields[key] = col
    return fields


def run_loop(mesh, hier, state0, t_final, cfl, snapshot_times,
             mode="adaptive", adapt_cfg=None, limiter=True, tvb_m=0.0,
             collect_bound=False, exact_init=None, collect_states=False,
             dump_residuals=False, component_names=None,
             component_units=None, max_steps=10_000_000):
    """Advance a run to its final time, adapting the model map per step.

    Args:
        mesh: Mesh1D.
        hier: ModelHierarchy.
        state0: initial MixedDGState (all-complex tags for adaptive runs;
            the first adaptation happens after the first step).
        t_final: end time.
        cfl: time step factor, dt = cfl * h / max wave speed.
        snapshot_times: iterable of output times within [0, t_final].
        mode: "adaptive", "complex-only" or "simple-only".
        adapt_cfg: AdaptConfig; required for adaptive runs.
        limiter: apply the slope limiter inside each stage.
        tvb_m: limiter threshold constant.
        collect_bound: store per-slab bound records, the state box, and
            (when exact_init is given) the initial entropy term.
        exact_init: exact initial data function for the bound's I term.
        collect_states: keep full modal states at snapshot times.
        dump_residuals: keep per-cell residual norms at snapshot times.
        component_names: CSV column names of the conserved components.
        component_units: matching unit strings, or None.

    Returns:
        RunResult.

    Raises:
        PhysicsError: when the solution leaves the admissible set; the
            exception carries step/time context and the partial result.
        ConfigError: on an invalid mode or missing adapt_cfg.
    """
    if mode not in ("adaptive", "complex-only", "simple-only"):
        raise ConfigError("unknown run mode %r" % mode)
    if mode == "adaptive" and adapt_cfg is None:
        raise ConfigError("adaptive runs need an AdaptConfig")
    cfg = adapt_cfg if adapt_cfg is not None else AdaptConfig(
        tau_r=1.0, tau_kappa=1.0)
    n = mesh.n_cells
    if component_names is None:
        component_names = tuple("u%d" % k for k in range(hier.dim_complex))

    state = state0.copy()
    mmap = adapt.ModelMap.initial(n)
    if mode == "simple-only":
        state, applied, failed = adapt.convert_models(
            state, np.zeros(n, dtype=np.int8), hier)
        if failed:
            raise PhysicsError(
                "initial data is not liftable in cells %s" % failed,
                cells=failed, time=0.0, step=0)
        mmap.theta = applied

    result = RunResult(mesh=mesh, mode=mode,
                       records=[] if collect_bound else None,
                       eps_over_nu=cfg.eps_over_nu)
    result.theta_log.append((0.0, mmap.theta.copy()))
    if collect_bound and exact_init is not None:
        result.initial_entropy = estimator.initial_term(
            state, mesh, hier, exact_init)
    box_lo = box_hi = None

    pending = sorted(t for t in snapshot_times
                     if -1e-12 <= t <= t_final * (1.0 + 1e-12))
    tol = 1e-9 * max(t_final, 1e-300)

    def take_snapshot(t, slab, dt, res_c, res_s):
        ind, kap = _snapshot_indicators(mode, mmap, state, slab, cfg, dt)
        result.snapshots.append(_make_snapshot(
            state, mesh, hier, t, ind, kap, component_names,
            component_units))
        if collect_states:
            result.states.append((t, state.copy()))
        if dump_residuals:
            if res_c is None:
                res_c = reconstruct.residual_complex(slab)
            if res_s is None:
                res_s = reconstruct.residual_simple(slab)
            result.residual_dumps.append(
                (t, _residual_norms(slab, res_c, res_s, n)))

    if pending and pending[0] <= tol:
        while pending and pending[0] <= tol:
            pending.pop(0)
        ind = np.full(n, np.nan)
        result.snapshots.append(_make_snapshot(
            state, mesh, hier, 0.0, ind, ind.copy(), component_names,
            component_units))
        if collect_states:
            result.states.append((0.0, state.copy()))

    t, step = 0.0, 0
    try:
        while t < t_final * (1.0 - 1e-12):
            if step >= max_steps:
                raise PhysicsError("step budget exhausted at t = %.6g" % t)
            speed = _max_speed(state, mesh, hier)
            result.max_speed = max(result.max_speed, speed)
            dt_cfl = cfl * mesh.h / speed if speed > 0.0 else t_final - t
            target = pending[0] if pending else t_final
            rem = target - t
            if rem <= dt_cfl * (1.0 + 1e-9):
                dt = rem
            elif rem < 2.0 * dt_cfl:
                dt = 0.5 * rem
            else:
                dt = dt_cfl

            old = state
            state, _ = dg.rk3_step(state, mesh, hier, dt, tvb_m, limiter)
            rate = dg.spatial_operator(state, mesh, hier)[:2]
            slab = reconstruct.slab_from_state(
                mesh, hier, old, state, rate, t, dt)

            res_c = res_s = None
            if collect_bound:
                res_c = reconstruct.residual_complex(slab)
                res_s = reconstruct.residual_simple(slab)
                result.records.append(estimator.slab_record(
                    slab, cfg.eps_over_nu, index=step,
                    residuals_c=res_c, residuals_s=res_s))
                pts = [res_c[1].reshape(-1, hier.dim_complex)] if \
                    res_c[0].size else []
                if res_s["cells"].size:
                    pts.append(res_s["lifted"].reshape(
                        -1, hier.dim_complex))
                if pts:
                    flat = np.vstack(pts)
                    lo, hi = flat.min(axis=0), flat.max(axis=0)
                    box_lo = lo if box_lo is None else np.minimum(
                        box_lo, lo)
                    box_hi = hi if box_hi is None else np.maximum(
                        box_hi, hi)

            t_new = t + dt
            if abs(t_new - target) <= tol:
                t_new = target
            t = t_new
            step += 1

            if mode == "adaptive":
                state, mmap, ainfo = adapt.adapt_step(
                    state, mmap, slab, cfg, residuals_s=res_s)
                if ainfo["refine_failed"]:
                    result.refine_failures.append(
                        (t, ainfo["refine_failed"]))
                if not np.array_equal(mmap.theta, result.theta_log[-1][1]):
                    result.theta_log.append((t, mmap.theta.copy()))

            while pending and t >= pending[0] - tol:
                pending.pop(0)
                take_snapshot(t, slab, dt, res_c, res_s)
    except PhysicsError as exc:
        exc.time = t if exc.time is None else exc.time
        exc.step = step if exc.step is None else exc.step
        result.n_steps = step
        result.switch_counts = mmap.switches.copy()
        exc.partial = result
        raise

    result.n_steps = step
    result.switch_counts = mmap.switches.copy()
    result.completed = True
    if collect_bound and box_lo is not None:
        width = np.maximum(box_hi - box_lo,
                           0.05 * np.abs(box_hi) + 1e-12)
        result.box = ConvexStateSet(box_lo - 0.025 * width,
                                    box_hi + 0.025 * width)
    return result


def make_init_fn(init, tab):
    """Pointwise initial-data function for the reacting-mixture cases.

    Returns a callable mapping positions (k,) to states (k, 5).

    Raises:
        ConfigError: if an equilibrium construction fails.
    """
    p = dict(init.params)

    def equil(T, pres, v, rho_o):
        try:
            return chem.equilibrium_from_Tpv(tab.packed, T, pres, v, rho_o)
        except chem.ChemistryError as exc:
            raise ConfigError("initial data: %s" % exc)

    if init.case == "shock_tube":
        d = dict(p)
        base = {"temperature": 2000.0, "velocity": 0.0, "p_inner": 2.0e6,
                "rho_o_inner": 0.01, "p_outer": 1.0e6,
                "rho_o_outer": 0.005, "x_lo": 0.25, "x_hi": 0.75}
        base.update(d)
        U_in = equil(base["temperature"], base["p_inner"],
                     base["velocity"], base["rho_o_inner"])
        U_out = equil(base["temperature"], base["p_outer"],
                      base["velocity"], base["rho_o_outer"])

        def fn(x):
            x = np.asarray(x)
            inner = (x > base["x_lo"]) & (x < base["x_hi"])
            return np.where(inner[..., None], U_in, U_out)

        return fn

    if init.case == "constant_equilibrium":
        U0 = equil(p.get("temperature", 2000.0), p.get("pressure", 1.0e6),
                   p.get("velocity", 0.0), p.get("rho_o", 0.005))
        return lambda x: np.tile(U0, (np.asarray(x).size, 1))

    if init.case == "smooth_equilibrium":
        T = p.get("temperature", 2000.0)
        pres = p.get("pressure", 1.0e6)
        v = p.get("velocity", 0.0)
        rho_o = p.get("rho_o", 0.005)
        amp = p.get("amplitude", 0.2)
        wav = p.get("wavenumber", 1.0)
        if not -1.0 < amp < 1.0:
            raise ConfigError("smooth_equilibrium amplitude must lie in "
                              "(-1, 1)")

        def fn(x):
            x = np.asarray(x, dtype=np.float64).ravel()
            out = np.empty((x.size, 5))
            for i, xi in enumerate(x):
                mod = 1.0 + amp * np.sin(2.0 * np.pi * wav * xi)
                out[i] = equil(T, pres, v, rho_o * mod)
            return out

        return fn

    raise ConfigError("unknown init case %r" % init.case)


def resolve_eps_over_nu(cfg, hier, init_fn, mesh):
    """Effective indicator prefactor, resolving the 'auto' spec.

    Auto estimates the source coercivity on an inflated box around the
    initial data; an explicit number is used as given.
    """
    if cfg.eps_over_nu_spec != "auto":
        return cfg.adapt.eps_over_nu
    x = mesh.centers()[:, None] + 0.5 * mesh.h * dg.GAUSS_X[None, :]
    states = np.asarray(init_fn(x.ravel()))
    floor = np.full(hier.dim_complex, -np.inf)
    floor[:3] = 1e-16  # densities stay positive under inflation
    box = ConvexStateSet.from_states(states, inflate=2.0,
                                     lower_floor=floor)
    try:
        nu = estimate_coercivity_nu(hier, box)
    except HierarchyError as exc:
        raise ConfigError("eps_over_nu=auto failed: %s" % exc)
    return hier.epsilon / nu


def run(cfg, tab=None):
    """Execute a configured reacting-mixture run.

    Args:
        cfg: RunConfig.
        tab: optional pre-built ThermoTable (defaults to cfg.make_table()).

    Returns:
        (RunResult, tab, hier).
    """
    tab = tab if tab is not None else cfg.make_table()
    hier = chem.build_hierarchy(tab)
    mesh = dg.Mesh1D(cfg.mesh_a, cfg.mesh_b, cfg.n_cells)
    init_fn = make_init_fn(cfg.init, tab)
    eon = resolve_eps_over_nu(cfg, hier, init_fn, mesh)
    adapt_cfg = AdaptConfig(
        tau_r=cfg.adapt.tau_r, tau_kappa=cfg.adapt.tau_kappa,
        f_eps=cfg.adapt.f_eps, eps_over_nu=eon,
        min_patch=cfg.adapt.min_patch)
    coeff_c = dg.project_function(init_fn, mesh)
    state0 = dg.MixedDGState(
        theta=np.ones(mesh.n_cells, dtype=np.int8), coeff_c=coeff_c,
        coeff_s=np.zeros((mesh.n_cells, 3, hier.dim_simple)))
    result = run_loop(
        mesh, hier, state0, cfg.t_final, cfg.cfl, cfg.snapshots,
        mode=cfg.mode, adapt_cfg=adapt_cfg, limiter=cfg.limiter,
        tvb_m=cfg.tvb_m, collect_bound=cfg.bound, exact_init=init_fn,
        collect_states=cfg.state_snapshots,
        dump_residuals=cfg.dump_residuals,
        component_names=output.O2_COMPONENTS,
        component_units=output.O2_UNITS)
    return result, tab, hier
