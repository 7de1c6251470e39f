"""CSV and SVG serialization of traces, events and frontier tables.

CSV files use LF line endings, ``.`` as decimal separator and 17
significant digits, so every float64 survives a write/read round trip
unchanged.  Nothing time-dependent is written, so identical runs give
byte-identical files.
"""

from __future__ import annotations

import csv
import math

import numpy as np

__all__ = [
    "trace_columns",
    "write_trace_csv",
    "read_trace_csv",
    "write_events_csv",
    "read_events_csv",
    "write_frontier_csv",
    "write_trace_svg",
]


def _f(x):
    return "%.17g" % float(x)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def trace_columns(m):
    return ["t", "state_norm"] + [f"u_{i + 1}" for i in range(m)] + ["is_event"]


def write_trace_csv(trace, path):
    m = trace.inputs.shape[1]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(trace_columns(m))
        for t, n, u, e in zip(trace.sample_times, trace.state_norms, trace.inputs, trace.is_event):
            w.writerow([_f(t), _f(n), *(_f(v) for v in u), int(bool(e))])


def read_trace_csv(path):
    """Return ``(t, state_norm, inputs, is_event)`` arrays from a trace CSV."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    m = len(header) - 3
    if header != trace_columns(m):
        raise ValueError(f"unexpected trace columns {header}")
    data = np.array([[float(v) for v in row[:-1]] for row in rows]).reshape(-1, m + 2)
    ev = np.array([row[-1] == "1" for row in rows], dtype=bool)
    return data[:, 0], data[:, 1], data[:, 2:], ev


def write_events_csv(trace, path):
    """One row per transmission; ``inter_event_time`` is ``nan`` for ``k = 0``."""
    times = trace.event_times
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["k", "t_k", "inter_event_time"])
        for k, t in enumerate(times):
            gap = times[k] - times[k - 1] if k else math.nan
            w.writerow([k, _f(t), _f(gap)])


def read_events_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["k", "t_k", "inter_event_time"]:
            raise ValueError(f"unexpected events columns {header}")
        rows = list(r)
    k = np.array([int(row[0]) for row in rows], dtype=int)
    t = np.array([float(row[1]) for row in rows])
    gap = np.array([float(row[2]) for row in rows])
    return k, t, gap


def write_frontier_csv(table, path):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([table.abscissa_name, table.bound_name, "bracket_lo", "bracket_hi", "feasible"])
        for row in table.rows:
            w.writerow([_f(row.abscissa), _f(row.bound), _f(row.bracket_lo), _f(row.bracket_hi),
                        int(row.feasible)])


def write_trace_svg(trace, path, title=None):
    """State norm, input staircase and inter-event stem plot as one static SVG."""
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "triggerkit", "svg.fonttype": "path"}):
        fig, axes = plt.subplots(3, 1, figsize=(7, 8), constrained_layout=True)
        ax = axes[0]
        ax.semilogy(trace.sample_times, np.maximum(trace.state_norms, 1e-300), lw=1)
        ax.set_ylabel("||x(t)||")
        if title:
            ax.set_title(title)
        ax = axes[1]
        for i in range(trace.inputs.shape[1]):
            ax.step(trace.sample_times, trace.inputs[:, i], where="post", lw=1, label=f"u_{i + 1}")
        ax.set_ylabel("u(t)")
        ax = axes[2]
        te = trace.event_times
        if te.size > 1:
            ax.stem(te[1:], np.diff(te), basefmt=" ")
        ax.set_ylabel("t_k - t_{k-1}")
        ax.set_xlabel("t")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
