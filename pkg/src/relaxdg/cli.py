"""Command line entry points.

Subcommands:
    run        execute a configured run and write its outputs
    compare    norm differences between two stored runs
    bound      assemble the a posteriori error bound of a stored run
    constants  print the curvature constants for a configuration

Exit codes: 0 on success, 2 on configuration or input errors, 3 when the
solver leaves the admissible set.
"""

import argparse
import configparser
import glob
import os
import sys
import time

import numpy as np

from . import chem, dg, driver, estimator, output
from .config import MODES, load_config
from .errors import ConfigError, PhysicsError, ReportError
from .hierarchy import (ConvexStateSet, HessianConstants, HierarchyError,
                        compute_hessian_constants, estimate_coercivity_nu)

THETA_SCHEMA = "theta_log_v1"
INPUTS_SECTION = "bound-inputs"


def _write_theta_log(path, x, entries):
    with open(path, "w") as f:
        f.write("# schema=%s\n" % THETA_SCHEMA)
        f.write(",".join(["t"] + ["c%d" % i for i in range(x.size)]) + "\n")
        for t, theta in entries:
            f.write(",".join(["%.17g" % t] + ["%d" % v for v in theta]))
            f.write("\n")


def _initial_box(cfg, tab, hier, mesh, inflate=2.0):
    init_fn = driver.make_init_fn(cfg.init, tab)
    x = mesh.points(dg.GAUSS_X)
    states = np.asarray(init_fn(x.ravel()))
    floor = np.full(hier.dim_complex, -np.inf)
    floor[:3] = 1e-16
    return ConvexStateSet.from_states(states, inflate=inflate,
                                      lower_floor=floor)


def _bound_outputs(result, out_dir, hier):
    """Store records plus everything assemble_bound needs later."""
    estimator.save_records(result.records,
                           os.path.join(out_dir, "records.csv"))
    box = result.box
    if box is None:
        box = _default_box(result, hier)
    constants = compute_hessian_constants(hier, box)
    nu = estimate_coercivity_nu(hier, box)
    proj = float(np.linalg.norm(hier.projection, 2) ** 2)
    ini = configparser.ConfigParser()
    ini[INPUTS_SECTION] = {
        "initial": "%.17g" % (result.initial_entropy or 0.0),
        "nu": "%.17g" % nu,
        "proj_norm_sq": "%.17g" % proj,
        "c_h_lower": "%.17g" % constants.c_h_lower,
        "c_h_upper": "%.17g" % constants.c_h_upper,
        "c_f": "%.17g" % constants.c_f,
        "c_m": "%.17g" % constants.c_m,
    }
    with open(os.path.join(out_dir, "bound_inputs.ini"), "w") as f:
        ini.write(f)
    report = estimator.assemble_bound(
        result.records, result.initial_entropy or 0.0, constants, nu, proj)
    report.to_csv(os.path.join(out_dir, "bound.csv"))
    return report


def _default_box(result, hier):
    means = [s.means[np.isfinite(s.means).all(axis=1)]
             for s in result.snapshots]
    states = np.vstack([m for m in means if m.size])
    floor = np.full(hier.dim_complex, -np.inf)
    floor[:3] = 1e-16
    return ConvexStateSet.from_states(states, inflate=1.5,
                                      lower_floor=floor)


def _flush_run(result, out_dir, cfg, tab, elapsed, failure=None):
    os.makedirs(out_dir, exist_ok=True)
    for i, snap in enumerate(result.snapshots):
        base = os.path.join(out_dir, "snapshot_%04d" % i)
        output.write_snapshot(snap, base + ".csv")
        if cfg.plots:
            output.emit_plot(snap, base + ".png", tab=tab)
    x = result.mesh.centers()
    _write_theta_log(os.path.join(out_dir, "theta_log.csv"), x,
                     result.theta_log)
    if result.switch_counts is not None:
        output.write_cell_fields(
            os.path.join(out_dir, "switch_counts.csv"),
            result.theta_log[-1][0], x,
            {"switches": result.switch_counts.astype(np.float64)})
    for i, (t, fields) in enumerate(result.residual_dumps):
        output.write_cell_fields(
            os.path.join(out_dir, "residuals_%04d.csv" % i), t, x, fields)
    lines = [
        "mode: %s" % result.mode,
        "cells: %d" % result.mesh.n_cells,
        "steps: %d" % result.n_steps,
        "snapshots written: %d" % len(result.snapshots),
        "max wave speed: %.6g" % result.max_speed,
        "total model switches: %d" % int(result.switch_counts.sum())
        if result.switch_counts is not None else "total model switches: 0",
        "wall time: %.3f s" % elapsed,
        "completed: %s" % ("yes" if result.completed else "no"),
    ]
    if failure is not None:
        lines.append("aborted: %s" % failure)
    with open(os.path.join(out_dir, "summary.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return lines


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.mode is not None:
        if args.mode not in MODES:
            raise ConfigError("unknown mode %r" % args.mode)
        cfg = _replace(cfg, mode=args.mode)
    if args.snapshots is not None:
        try:
            times = tuple(sorted({float(s) for s in
                                  args.snapshots.split(",") if s.strip()}))
        except ValueError:
            raise ConfigError("snapshots must be a comma separated list "
                              "of times")
        if times and (times[0] < 0.0 or times[-1] > cfg.t_final):
            raise ConfigError("snapshot times must lie in [0, t_final]")
        if cfg.t_final not in times:
            times = times + (cfg.t_final,)
        cfg = _replace(cfg, snapshots=times)

    tab = cfg.make_table()
    start = time.perf_counter()
    try:
        result, tab, hier = driver.run(cfg, tab=tab)
    except PhysicsError as exc:
        elapsed = time.perf_counter() - start
        if exc.partial is not None:
            _flush_run(exc.partial, args.out, cfg, tab, elapsed,
                       failure=str(exc))
        print("physics failure: %s" % exc, file=sys.stderr)
        return 3
    elapsed = time.perf_counter() - start
    lines = _flush_run(result, args.out, cfg, tab, elapsed)
    if cfg.bound and result.records:
        report = _bound_outputs(result, args.out, hier)
        lines.append("bound at final time: %.6g" % report.rhs[-1])
    print("\n".join(lines))
    return 0


def _replace(cfg, **kw):
    import dataclasses
    return dataclasses.replace(cfg, **kw)


def _load_snapshots(run_dir):
    paths = sorted(glob.glob(os.path.join(run_dir, "snapshot_*.csv")))
    if not paths:
        raise ReportError("no snapshot files in %s" % run_dir)
    return [output.read_snapshot(p) for p in paths]


def _cmd_compare(args):
    snaps_a = _load_snapshots(args.run_a)
    snaps_b = _load_snapshots(args.run_b)
    rows = output.compare_runs(snaps_a, snaps_b)
    header = "%14s %12s %12s %12s %12s" % (
        "t", "L1", "L2", "Linf", "L1_rel")
    print(header)
    for r in rows:
        print("%14.6g %12.4e %12.4e %12.4e %12.4e" % (
            r["t"], r["l1"], r["l2"], r["linf"], r["l1_rel"]))
    if args.out:
        output.write_comparison(rows, args.out)
    return 0


def _cmd_bound(args):
    records = estimator.load_records(
        os.path.join(args.run, "records.csv"))
    ini_path = os.path.join(args.run, "bound_inputs.ini")
    ini = configparser.ConfigParser()
    if not ini.read(ini_path):
        raise ReportError("missing %s" % ini_path)
    try:
        sec = ini[INPUTS_SECTION]
        constants = HessianConstants(
            c_h_lower=float(sec["c_h_lower"]),
            c_h_upper=float(sec["c_h_upper"]),
            c_f=float(sec["c_f"]), c_m=float(sec["c_m"]))
        initial = float(sec["initial"])
        nu = float(sec["nu"])
        proj = float(sec["proj_norm_sq"])
    except (KeyError, ValueError) as exc:
        raise ReportError("unreadable bound inputs: %s" % exc)
    report = estimator.assemble_bound(records, initial, constants, nu,
                                      proj, t=args.t)
    out = args.out or os.path.join(args.run, "bound.csv")
    report.to_csv(out)
    print(report.summary())
    return 0


def _cmd_constants(args):
    cfg = load_config(args.config)
    tab = cfg.make_table()
    hier = chem.build_hierarchy(tab)
    mesh = dg.Mesh1D(cfg.mesh_a, cfg.mesh_b, cfg.n_cells)
    try:
        box = _initial_box(cfg, tab, hier, mesh)
        constants = compute_hessian_constants(hier, box)
        nu = estimate_coercivity_nu(hier, box)
    except HierarchyError as exc:
        raise ConfigError("constant estimation failed: %s" % exc)
    proj = float(np.linalg.norm(hier.projection, 2) ** 2)
    print("box (inflated around the initial data):")
    for k in range(hier.dim_complex):
        print("  component %d: [%.6g, %.6g]" % (k, box.lower[k],
                                                box.upper[k]))
    print("c_h_lower  = %.6g" % constants.c_h_lower)
    print("c_h_upper  = %.6g" % constants.c_h_upper)
    print("c_f        = %.6g" % constants.c_f)
    print("c_m        = %.6g" % constants.c_m)
    print("nu         = %.6g" % nu)
    print("eps/nu     = %.6g" % (hier.epsilon / nu))
    print("|P|^2      = %.6g" % proj)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="relaxdg",
        description="Model-adaptive RKDG solver for reacting mixtures")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute a configured run")
    pr.add_argument("--config", required=True, help="INI configuration")
    pr.add_argument("--out", required=True, help="output directory")
    pr.add_argument("--mode", default=None,
                    help="override the configured mode (%s)" %
                    "/".join(MODES))
    pr.add_argument("--snapshots", default=None,
                    help="override snapshot times, comma separated")
    pr.set_defaults(fn=_cmd_run)

    pc = sub.add_parser("compare", help="norm differences of two runs")
    pc.add_argument("--run-a", required=True, help="first run directory")
    pc.add_argument("--run-b", required=True, help="second run directory")
    pc.add_argument("--out", default=None, help="comparison CSV path")
    pc.set_defaults(fn=_cmd_compare)

    pb = sub.add_parser("bound", help="assemble the error bound")
    pb.add_argument("--run", required=True, help="run directory")
    pb.add_argument("--t", type=float, default=None,
                    help="assemble up to this time only")
    pb.add_argument("--out", default=None, help="bound CSV path")
    pb.set_defaults(fn=_cmd_bound)

    pk = sub.add_parser("constants",
                        help="curvature constants for a configuration")
    pk.add_argument("--config", required=True, help="INI configuration")
    pk.set_defaults(fn=_cmd_constants)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ReportError, chem.ChemistryError,
            OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except PhysicsError as exc:
        print("physics failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
