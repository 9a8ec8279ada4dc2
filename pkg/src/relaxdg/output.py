"""Snapshot records, CSV round-trip, static plots, and run comparison.

Snapshots store cell means of the lifted conserved field together with
the model map and the per-cell indicator values, so every row of the CSV
is meaningful regardless of which model produced it.  Files carry a
schema marker and full-precision values; re-reading reproduces the
in-memory arrays exactly.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import chem
from .errors import ReportError

SNAPSHOT_SCHEMA = "snapshot_v1"
O2_COMPONENTS = ("rho_o2", "rho_o", "rho_n2", "momentum", "energy")
O2_UNITS = ("kg/m^3", "kg/m^3", "kg/m^3", "kg/(m^2 s)", "J/m^3")


@dataclass
class Snapshot:
    """Cell-mean view of the solution at one output time."""

    t: float
    x: np.ndarray
    means: np.ndarray
    theta: np.ndarray
    indicator: np.ndarray
    kappa: np.ndarray
    source_norm: np.ndarray
    component_names: tuple = O2_COMPONENTS
    component_units: tuple = None

    def header(self):
        return (["x"] + list(self.component_names)
                + ["theta", "indicator", "kappa", "source_norm"])


def write_snapshot(snap, path):
    """Write one snapshot as CSV with a schema line and named columns."""
    try:
        with open(path, "w", newline="") as fh:
            fh.write("# schema=%s\n" % SNAPSHOT_SCHEMA)
            fh.write("# t=%.17g\n" % snap.t)
            if snap.component_units:
                fh.write("# units: x m; %s; theta 1; indicator 1; "
                         "kappa 1; source_norm 1/s\n"
                         % "; ".join("%s %s" % nu for nu in
                                     zip(snap.component_names,
                                         snap.component_units)))
            w = csv.writer(fh)
            w.writerow(snap.header())
            for i in range(snap.x.size):
                row = ["%.17g" % snap.x[i]]
                row += ["%.17g" % v for v in snap.means[i]]
                row += ["%d" % snap.theta[i],
                        "%.17g" % snap.indicator[i],
                        "%.17g" % snap.kappa[i],
                        "%.17g" % snap.source_norm[i]]
                w.writerow(row)
    except OSError as exc:
        raise ReportError("cannot write snapshot %s: %s" % (path, exc))


def read_snapshot(path):
    """Read a snapshot CSV written by write_snapshot.

    Raises:
        ReportError: on schema mismatch or malformed content.
    """
    try:
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ReportError("cannot read snapshot %s: %s" % (path, exc))
    if not lines or lines[0] != "# schema=%s" % SNAPSHOT_SCHEMA:
        raise ReportError("unrecognized snapshot file %s" % path)
    if not lines[1].startswith("# t="):
        raise ReportError("snapshot %s lacks its time marker" % path)
    t = float(lines[1][4:])
    body = [ln for ln in lines[2:] if not ln.startswith("#")]
    rows = list(csv.reader(body))
    head = rows[0]
    ncomp = len(head) - 5
    if ncomp < 1 or head[0] != "x" or head[-4:] != [
            "theta", "indicator", "kappa", "source_norm"]:
        raise ReportError("snapshot %s has an unexpected header" % path)
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return Snapshot(
        t=t, x=data[:, 0], means=data[:, 1:1 + ncomp],
        theta=data[:, 1 + ncomp].astype(np.int8),
        indicator=data[:, 2 + ncomp], kappa=data[:, 3 + ncomp],
        source_norm=data[:, 4 + ncomp],
        component_names=tuple(head[1:1 + ncomp]))


def simple_region_bands(x, theta):
    """Contiguous equilibrium-model intervals as (x_lo, x_hi) pairs.

    Cell i covers [x_i - h/2, x_i + h/2); a region wrapping around the
    periodic boundary appears as two bands, matching how it is drawn.
    """
    x = np.asarray(x)
    theta = np.asarray(theta)
    if x.size < 2:
        return [] if theta.size == 0 or theta[0] == 1 else \
            [(float(x[0]), float(x[0]))]
    h = float(x[1] - x[0])
    bands = []
    start = None
    for i in range(x.size):
        if theta[i] == 0 and start is None:
            start = x[i] - 0.5 * h
        elif theta[i] == 1 and start is not None:
            bands.append((float(start), float(x[i - 1] + 0.5 * h)))
            start = None
    if start is not None:
        bands.append((float(start), float(x[-1] + 0.5 * h)))
    return bands


def emit_plot(snap, path, tab=None):
    """Render a snapshot as a static vector plot.

    Panels: conserved means (densities on a log axis when they span
    orders of magnitude), optional pressure/velocity when a thermodynamic
    table is supplied, and the indicator curves.  Equilibrium-model
    regions appear as gray bands in every panel.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    has_prim = tab is not None and snap.means.shape[1] == 5
    n_ax = 3 if has_prim else 2
    fig, axes = plt.subplots(n_ax, 1, sharex=True,
                             figsize=(8.0, 2.6 * n_ax))
    bands = simple_region_bands(snap.x, snap.theta)
    for ax in axes:
        for lo, hi in bands:
            ax.axvspan(lo, hi, color="0.85", zorder=0)

    ax0 = axes[0]
    dens = snap.means[:, :3] if has_prim else snap.means
    names = snap.component_names[:dens.shape[1]]
    positive = (dens > 0).all()
    span = dens.max() / max(dens[dens > 0].min(), 1e-300) if positive \
        else 1.0
    for k, name in enumerate(names):
        ax0.plot(snap.x, dens[:, k], label=name)
    if positive and span > 1e3:
        ax0.set_yscale("log")
    ax0.legend(loc="best", fontsize=8)
    ax0.set_ylabel("cell means")

    if has_prim:
        prim = chem.conservative_to_primitive(snap.means, tab.packed)
        ax1 = axes[1]
        ax1.plot(snap.x, prim.p, color="tab:red", label="pressure")
        ax1.set_ylabel("pressure [Pa]")
        ax1b = ax1.twinx()
        ax1b.plot(snap.x, prim.v, color="tab:blue", label="velocity")
        ax1b.set_ylabel("velocity [m/s]")
        ax1.legend(loc="upper left", fontsize=8)
        ax1b.legend(loc="upper right", fontsize=8)

    axl = axes[-1]
    shown = np.where(np.isfinite(snap.indicator), snap.indicator, np.nan)
    kap = np.where(np.isfinite(snap.kappa), snap.kappa, np.nan)
    with np.errstate(invalid="ignore"):
        axl.semilogy(snap.x, shown, label="model indicator", drawstyle="steps-mid")
        if np.isfinite(kap).any():
            axl.semilogy(snap.x, kap, label="equilibrium distance",
                         drawstyle="steps-mid")
    axl.set_ylabel("indicators")
    axl.set_xlabel("x [m]")
    axl.legend(loc="best", fontsize=8)
    fig.suptitle("t = %.6g s (gray: equilibrium model)" % snap.t)
    fig.tight_layout()
    try:
        fig.savefig(path)
    except OSError as exc:
        raise ReportError("cannot write plot %s: %s" % (path, exc))
    finally:
        plt.close(fig)


def write_cell_fields(path, t, x, fields):
    """Flag-gated dump of named per-cell arrays (residual norms etc.)."""
    names = list(fields)
    with open(path, "w", newline="") as fh:
        fh.write("# schema=cellfields_v1\n")
        fh.write("# t=%.17g\n" % t)
        w = csv.writer(fh)
        w.writerow(["x"] + names)
        for i in range(len(x)):
            w.writerow(["%.17g" % x[i]] +
                       ["%.17g" % fields[n][i] for n in names])


def compare_runs(snaps_a, snaps_b):
    """Normed differences of two snapshot sequences, time by time.

    All reported numbers are symmetric in the two runs; the relative
    columns divide by the mean of the two field norms.

    Raises:
        ReportError: if the snapshot times or meshes differ.
    """
    ta = [s.t for s in snaps_a]
    tb = [s.t for s in snaps_b]
    if len(ta) != len(tb) or any(
            abs(p - q) > 1e-9 * (1.0 + abs(p)) for p, q in zip(ta, tb)):
        raise ReportError("snapshot times differ: %s vs %s" % (ta, tb))
    rows = []
    for sa, sb in zip(snaps_a, snaps_b):
        if sa.x.size != sb.x.size or not np.allclose(
                sa.x, sb.x, rtol=1e-12, atol=1e-300):
            raise ReportError("meshes differ at t = %.12g" % sa.t)
        h = float(sa.x[1] - sa.x[0]) if sa.x.size > 1 else 1.0
        diff = sa.means - sb.means
        l1 = h * float(np.abs(diff).sum())
        l2 = float(np.sqrt(h * (diff * diff).sum()))
        linf = float(np.abs(diff).max())
        ref1 = 0.5 * h * float(np.abs(sa.means).sum()
                               + np.abs(sb.means).sum())
        ref2 = 0.5 * (float(np.sqrt(h * (sa.means ** 2).sum()))
                      + float(np.sqrt(h * (sb.means ** 2).sum())))
        refi = 0.5 * float(np.abs(sa.means).max() + np.abs(sb.means).max())
        rows.append({
            "t": sa.t, "l1": l1, "l2": l2, "linf": linf,
            "l1_rel": l1 / ref1 if ref1 > 0 else 0.0,
            "l2_rel": l2 / ref2 if ref2 > 0 else 0.0,
            "linf_rel": linf / refi if refi > 0 else 0.0,
        })
    return rows


def write_comparison(rows, path):
    keys = ["t", "l1", "l2", "linf", "l1_rel", "l2_rel", "linf_rel"]
    with open(path, "w", newline="") as fh:
        fh.write("# schema=comparison_v1\n")
        w = csv.writer(fh)
        w.writerow(keys)
        for row in rows:
            w.writerow(["%.17g" % row[k] for k in keys])
