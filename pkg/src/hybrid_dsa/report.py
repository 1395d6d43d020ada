"""CSV tables and SVG line charts for the command-line reports.

Figures are written with a fixed SVG hash salt and no date stamp so that
reruns produce identical files.
"""

from __future__ import annotations

import csv
import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .power.security import avg_bus_phase, coi_angle  # noqa: E402

_STYLE = {
    "svg.hashsalt": "hybrid-dsa",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.0,
}


def fmt(v):
    """Shortest exact decimal for a float; locale independent."""
    return repr(float(v))


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def state_columns(case):
    gens = [g.id for g in case.generators]
    buses = [b.id for b in case.buses]
    return (
        [f"delta_{g}" for g in gens]
        + [f"omega_{g}" for g in gens]
        + [f"theta_{b}" for b in buses]
        + [f"v_{b}" for b in buses]
        + [f"delta_rel_{g}" for g in gens]
        + [f"theta_rel_{b}" for b in buses]
    )


def derived(case, X):
    """Rotor angles relative to the centre of inertia and bus phases relative
    to their average, one row per state."""
    ng = len(case.generators)
    nb = len(case.buses)
    H = np.array([g.H for g in case.generators])
    delta = X[:, :ng]
    theta = X[:, 2 * ng:2 * ng + nb]
    d_rel = delta - coi_angle(delta, H)[:, None]
    th_rel = theta - avg_bus_phase(theta)[:, None]
    return np.hstack([d_rel, th_rel])


def timeseries_rows(case, times, X):
    full = np.hstack([X, derived(case, X)])
    for t, row in zip(times, full):
        yield [float(t)] + [float(v) for v in row]


def line_chart(path, t, series, labels, ylabel, title, max_legend=12):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for k in range(series.shape[1]):
            ax.plot(t, series[:, k], label=labels[k] if k < max_legend else None)
        ax.set_xlabel("t [s]")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        if 0 < len(labels) <= max_legend:
            ax.legend(fontsize=7, ncol=2, loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def state_charts(out, prefix, case, times, X, title):
    """omega, relative rotor angle and bus-voltage charts; returns the paths."""
    ng = len(case.generators)
    nb = len(case.buses)
    gens = [str(g.id) for g in case.generators]
    buses = [str(b.id) for b in case.buses]
    rel = derived(case, X)
    paths = []
    if ng:
        p = out / f"{prefix}omega.svg"
        line_chart(p, times, X[:, ng:2 * ng], [f"G{g}" for g in gens], "omega [pu]", title)
        paths.append(p)
        p = out / f"{prefix}delta_rel.svg"
        line_chart(p, times, rel[:, :ng], [f"G{g}" for g in gens], "delta - delta_coi [rad]", title)
        paths.append(p)
    p = out / f"{prefix}voltage.svg"
    line_chart(p, times, X[:, 2 * ng + nb:], [f"bus {b}" for b in buses], "v [pu]", title)
    paths.append(p)
    return paths


def bench_chart(path, ks, totals, step4):
    ks = np.asarray(ks, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.plot(ks, totals, "o-", label="total")
        ax.plot(ks, step4, "s--", label="expansion (step 4)")
        if len(ks) >= 2:
            a, b = np.polyfit(ks, totals, 1)
            ax.plot(ks, a * ks + b, ":", color="gray", label="linear fit")
        ax.set_xlabel("K")
        ax.set_ylabel("wall clock [s]")
        ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
