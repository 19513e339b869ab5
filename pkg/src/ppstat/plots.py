"""Deterministic SVG figures for the report path.

Three figure kinds cover the workbench's outputs: the empirical
distribution of match distances, variance against scale for fluctuation
sweeps, and a log-log survival plot with a fitted power-law slope.
Figures are rendered through the object-oriented interface with a fixed
hash salt and no date metadata, so identical inputs give byte-identical
SVG files.
"""

from __future__ import annotations

import csv
import math

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .core import PPStatError

EMIT_KINDS = ("cdf", "variance-vs-scale", "tail-loglog")

_RC = {
    "svg.hashsalt": "ppstat",
    "svg.fonttype": "path",
    "font.size": 10.0,
}


def _read_columns(csv_path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    try:
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise PPStatError(f"{csv_path}: empty csv")
            missing = [c for c in required if c not in reader.fieldnames]
            if missing:
                raise PPStatError(f"{csv_path}: missing columns {missing}")
            rows = list(reader)
    except OSError as exc:
        raise PPStatError(f"{csv_path}: {exc}") from exc
    if not rows:
        raise PPStatError(f"{csv_path}: no data rows")
    out = {}
    for c in reader.fieldnames:
        vals = [row[c] for row in rows]
        try:
            out[c] = np.array([float(v) if v != "" else math.nan for v in vals])
        except (TypeError, ValueError):
            out[c] = np.array(vals, dtype=object)
    for c in required:
        if out[c].dtype == object or not np.all(np.isfinite(out[c])):
            raise PPStatError(f"{csv_path}: column {c!r} is not finite numeric")
    return out


def _new_axes():
    fig = Figure(figsize=(6.0, 4.25))
    ax = fig.add_subplot()
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig: Figure, out_path) -> None:
    with mpl.rc_context(_RC):
        fig.savefig(out_path, format="svg", metadata={"Date": None},
                    bbox_inches="tight")


def emit_plot(csv_path, kind: str, out_path) -> dict:
    """Render one figure kind from a CSV file to a standalone SVG.

    Returns a small metadata dict; the tail-loglog kind includes the
    least-squares slope fitted in log-log coordinates.
    """
    if kind not in EMIT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    if kind == "cdf":
        cols = _read_columns(csv_path, ("distance",))
        x = np.sort(cols["distance"])
        y = np.arange(1, len(x) + 1) / len(x)
        fig, ax = _new_axes()
        ax.step(np.concatenate([[x[0]], x]), np.concatenate([[0.0], y]),
                where="post", color="#1a5276")
        ax.set_xlabel("r")
        ax.set_ylabel("F(r)")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title("match distance distribution")
        _save(fig, out_path)
        return {"kind": kind, "rows": int(len(x))}
    if kind == "variance-vs-scale":
        cols = _read_columns(csv_path, ("scale", "var"))
        order = np.argsort(cols["scale"])
        s, v = cols["scale"][order], cols["var"][order]
        fig, ax = _new_axes()
        if "var_se" in cols and cols["var_se"].dtype != object \
                and np.all(np.isfinite(cols["var_se"])):
            ax.errorbar(s, v, yerr=2.0 * cols["var_se"][order], fmt="o-",
                        color="#1a5276", capsize=3)
        else:
            ax.plot(s, v, "o-", color="#1a5276")
        ax.set_xlabel("scale")
        ax.set_ylabel("variance")
        ax.set_title("linear-statistic variance vs scale")
        _save(fig, out_path)
        return {"kind": kind, "rows": int(len(s))}
    cols = _read_columns(csv_path, ("r", "p"))
    keep = (cols["r"] > 0) & (cols["p"] > 0)
    if keep.sum() < 2:
        raise PPStatError(f"{csv_path}: need at least two positive (r, p) rows")
    r, p = cols["r"][keep], cols["p"][keep]
    logr, logp = np.log(r), np.log(p)
    slope, intercept = np.polyfit(logr, logp, 1)
    fig, ax = _new_axes()
    ax.loglog(r, p, "o", color="#1a5276", label="empirical")
    rr = np.array([r.min(), r.max()])
    ax.loglog(rr, np.exp(intercept) * rr ** slope, "-", color="#b03a2e",
              label=f"slope {slope:.3f}")
    ax.set_xlabel("r")
    ax.set_ylabel("P(X > r)")
    ax.set_title("survival tail, log-log")
    ax.legend()
    _save(fig, out_path)
    return {"kind": kind, "rows": int(keep.sum()), "slope": float(slope),
            "intercept": float(intercept)}
