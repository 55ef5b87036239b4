#!/usr/bin/env python3
"""Render coupled-simulation CSV outputs as publication-style figures.

Standalone figure tool: it consumes only the published CSV schemas written by
the simulation CLI (``tails.csv``, ``ratefit.csv``, ``paths.csv``) and never
imports the simulation package.  Three figure kinds:

* ``tails``        -- one tail curve per t-value on log-log axes, colored by a
                      monotone colormap in t.
* ``ratefit``      -- fitted rate lines on log-log axes with evaluation points
                      and a dashed theoretical-slope reference annotated "p/α".
* ``trajectories`` -- per-replicate panels overlaying the two coupled paths
                      (leg 1 solid, leg 2 dashed, one color per coordinate).

Rendering is a pure function of the CSV bytes and the style constants below:
repeated invocations produce byte-identical PNGs on a pinned renderer.  All
input validation failures exit with status 1 and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
from matplotlib import colormaps  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402

# Published CSV schemas, byte-for-byte.  Deliberately duplicated from the
# simulation package: the CSV header is the interface, not the code.
SCHEMAS = {
    "tails": ["run_id", "t", "r", "prob", "n", "aborted"],
    "ratefit": ["run_id", "statistic", "slope", "stderr", "intercept"],
    "trajectories": ["run_id", "t", "replicate", "leg", "time", "coord", "value"],
}

# Style constants.  Fixed so that output depends on nothing but the inputs.
DPI = 110
CMAP = "viridis"
FIGSIZE = {"tails": (6.4, 4.8), "ratefit": (6.4, 4.8)}
PANEL_SIZE = (3.2, 2.4)  # per-panel size for trajectory grids
ALPHA_RANGE = (0.55, 0.95)  # curve alpha blended by t-rank
REFERENCE_EXPONENT = 10.0 / 7.0  # default theoretical slope for ratefit
REFERENCE_LABEL = "p/α"


class InputError(Exception):
    """A CSV failed validation; message is the one-liner for stderr."""


def read_rows(path, kind):
    """Read one CSV, validating the header byte-for-byte against the schema.

    Returns the data rows as a list of dicts keyed by column name, with the
    numeric columns converted to float/int.  Raises InputError naming the
    first offending header token on any mismatch.
    """
    expected = SCHEMAS[kind]
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"{path}: cannot open: {exc.strerror}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(
                f"{path}: header column 1: expected {expected[0]!r}, "
                "got end of file"
            ) from None
        for i, want in enumerate(expected):
            if i >= len(header):
                raise InputError(
                    f"{path}: header column {i + 1}: expected {want!r}, "
                    "got end of header"
                )
            if header[i] != want:
                raise InputError(
                    f"{path}: header column {i + 1}: expected {want!r}, "
                    f"got {header[i]!r}"
                )
        if len(header) > len(expected):
            raise InputError(
                f"{path}: header column {len(expected) + 1}: expected end "
                f"of header, got {header[len(expected)]!r}"
            )
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(expected):
                raise InputError(
                    f"{path}: line {lineno}: expected {len(expected)} "
                    f"fields, got {len(fields)}"
                )
            try:
                rows.append(_convert(kind, dict(zip(expected, fields))))
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
        return rows


def _convert(kind, row):
    if kind == "tails":
        row["t"] = float(row["t"])
        row["r"] = float(row["r"])
        row["prob"] = float(row["prob"])
        row["n"] = int(row["n"])
        row["aborted"] = int(row["aborted"])
    elif kind == "ratefit":
        row["slope"] = float(row["slope"])
        row["stderr"] = float(row["stderr"])
        row["intercept"] = float(row["intercept"])
    else:
        row["t"] = float(row["t"])
        row["replicate"] = int(row["replicate"])
        row["leg"] = int(row["leg"])
        row["time"] = float(row["time"])
        row["coord"] = int(row["coord"])
        row["value"] = float(row["value"])
    return row


def _t_colors(ts):
    """Monotone colormap assignment: smallest t darkest, evenly spaced."""
    cmap = colormaps[CMAP]
    n = len(ts)
    lo, hi = ALPHA_RANGE
    out = {}
    for i, t in enumerate(sorted(ts)):
        frac = i / (n - 1) if n > 1 else 0.5
        out[t] = (cmap(frac), lo + (hi - lo) * frac)
    return out


def build_tails_figure(row_lists):
    """One curve per t-value, log-log, colored monotonically by t."""
    curves = {}
    for rows in row_lists:
        for row in rows:
            curves.setdefault((row["run_id"], row["t"]), []).append(
                (row["r"], row["prob"])
            )
    if not curves:
        raise InputError("no curves")
    colors = _t_colors({t for _, t in curves})
    fig, ax = plt.subplots(figsize=FIGSIZE["tails"], dpi=DPI)
    for (run_id, t), pts in sorted(curves.items()):
        pts.sort()
        rs = [r for r, _ in pts]
        ps = [p for _, p in pts]
        color, alpha = colors[t]
        ax.plot(rs, ps, color=color, alpha=alpha, lw=1.4, label=f"t={t:.3g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel("tail probability")
    ax.set_title("Rescaled distance tails")
    ax.legend(fontsize=7, ncol=2, frameon=False)
    fig.tight_layout()
    return fig


def build_ratefit_figure(row_lists, reference_exponent=REFERENCE_EXPONENT):
    """Fitted lines with evaluation points and a slope reference.

    The fit CSV carries (slope, intercept) per statistic, so the figure draws
    each fitted power law exp(intercept) * t**slope over a fixed t-window,
    marking it at eight log-spaced points, plus a dashed reference line of the
    theoretical slope annotated with its label.
    """
    fits = []
    for rows in row_lists:
        for row in rows:
            fits.append(row)
    if not fits:
        raise InputError("no curves")
    t_lo, t_hi = 1e-4, 1e-1
    marks = [t_lo * (t_hi / t_lo) ** (i / 7.0) for i in range(8)]
    fig, ax = plt.subplots(figsize=FIGSIZE["ratefit"], dpi=DPI)
    for i, row in enumerate(fits):
        level = lambda t: math.exp(row["intercept"]) * t ** row["slope"]
        ax.plot(
            marks,
            [level(t) for t in marks],
            marker="o",
            ms=4,
            lw=1.2,
            color=f"C{i % 10}",
            label=f"{row['statistic']}: slope {row['slope']:.3f}",
        )
    anchor_t = marks[3]
    anchor = math.exp(fits[0]["intercept"]) * anchor_t ** fits[0]["slope"]
    ref = [
        anchor * (t / anchor_t) ** reference_exponent for t in (t_lo, t_hi)
    ]
    ax.plot([t_lo, t_hi], ref, ls="--", color="0.4", lw=1.0)
    ax.annotate(
        f"{REFERENCE_LABEL} = {reference_exponent:.4g}",
        xy=(t_hi, ref[1]),
        xytext=(-6, 4),
        textcoords="offset points",
        ha="right",
        fontsize=8,
        color="0.3",
    )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("statistic level")
    ax.set_title("Fitted decay rates")
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    return fig


def build_trajectories_figure(row_lists):
    """Panel grid over (t, replicate): both coupled legs overlaid per panel."""
    panels = {}
    for rows in row_lists:
        for row in rows:
            key = (row["t"], row["replicate"])
            series = panels.setdefault(key, {})
            series.setdefault((row["leg"], row["coord"]), []).append(
                (row["time"], row["value"])
            )
    if not panels:
        raise InputError("no curves")
    ts = sorted({t for t, _ in panels})
    reps = sorted({rep for _, rep in panels})
    nrows, ncols = len(ts), len(reps)
    fig, axes = plt.subplots(
        nrows,
        ncols,
        figsize=(PANEL_SIZE[0] * ncols, PANEL_SIZE[1] * nrows),
        dpi=DPI,
        squeeze=False,
        sharex="row",
    )
    for i, t in enumerate(ts):
        for j, rep in enumerate(reps):
            ax = axes[i][j]
            series = panels.get((t, rep))
            if not series:
                ax.set_axis_off()
                continue
            for (leg, coord), pts in sorted(series.items()):
                pts.sort()
                ax.plot(
                    [p[0] for p in pts],
                    [p[1] for p in pts],
                    color=f"C{coord % 10}",
                    ls="-" if leg == 1 else "--",
                    lw=1.0,
                    alpha=0.9,
                )
            ax.set_title(f"t={t:.3g}, replicate {rep}", fontsize=8)
            ax.tick_params(labelsize=6)
    handles = [
        Line2D([], [], color="0.2", ls="-", label="leg 1"),
        Line2D([], [], color="0.2", ls="--", label="leg 2"),
    ]
    fig.legend(handles=handles, loc="lower right", fontsize=7, frameon=False)
    fig.tight_layout()
    return fig


_BUILDERS = {
    "tails": build_tails_figure,
    "ratefit": build_ratefit_figure,
    "trajectories": build_trajectories_figure,
}


def render(kind, in_paths, out_path):
    """Validate inputs, build the figure, and write a non-empty PNG."""
    row_lists = [read_rows(path, kind) for path in in_paths]
    fig = _BUILDERS[kind](row_lists)
    try:
        fig.savefig(out_path, format="png")
    finally:
        plt.close(fig)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot.py",
        description="Render simulation CSV outputs as PNG figures.",
    )
    parser.add_argument(
        "--kind",
        required=True,
        choices=sorted(_BUILDERS),
        help="figure kind to render",
    )
    parser.add_argument(
        "--in",
        dest="inputs",
        metavar="CSV",
        action="append",
        required=True,
        help="input CSV (repeatable; all must share the kind's schema)",
    )
    parser.add_argument(
        "--out", required=True, metavar="PNG", help="output image path"
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        render(args.kind, args.inputs, args.out)
    except InputError as exc:
        print(f"plot.py: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
