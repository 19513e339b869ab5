"""Execute experiment configs and write their output files.

Each command writes a fixed set of artifacts (patterns, delimited
series, verdict JSON, SVG figures) into the output directory, then a
manifest with the config hash and per-output checksums.  The manifest is
written last; if anything fails, partially written outputs are removed
so a directory never holds an unmanifested mix.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, diagnostics
from .config import ExperimentConfig
from .core import PointPattern, RngSpec, write_pattern
from .diagnostics import estimate_fluctuation, palm_sample_empirical, tolerance_report
from .generators import sample
from .matching import match_stats, stable_match
from .percolation import (SPAN_ALL_FACES, SPAN_OPPOSITE, build_boolean_model,
                          count_m_branches, count_spanning_clusters)
from .plots import emit_plot

_SPAN_MODES = {"opposite": SPAN_OPPOSITE, "all-faces": SPAN_ALL_FACES}


@dataclass(frozen=True)
class RunManifest:
    """What a run produced: config identity plus per-output checksums."""

    config_hash: str
    version: str
    command: str
    wall_clock_s: float
    outputs: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "command": self.command,
            "wall_clock_s": self.wall_clock_s,
            "outputs": dict(sorted(self.outputs.items())),
        }


class _Sink:
    """Tracks files written under the output directory for cleanup."""

    def __init__(self, out_dir: str, config: ExperimentConfig):
        self.out_dir = out_dir
        self.config = config
        self.written: list[str] = []

    def path(self, name: str) -> str:
        self.written.append(name)
        return os.path.join(self.out_dir, name)

    def csv(self, name: str, header: list[str], rows) -> str | None:
        if not self.config.wants("csv"):
            return None
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return p

    def json(self, name: str, payload: dict) -> str | None:
        if not self.config.wants("json"):
            return None
        p = self.path(name)
        with open(p, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return p

    def pattern(self, name: str, pat: PointPattern) -> str | None:
        if not self.config.wants("json"):
            return None
        write_pattern(pat, self.path(name))
        return name

    def plot(self, name: str, csv_name: str | None, kind: str) -> dict | None:
        if csv_name is None or not self.config.wants("svg"):
            return None
        return emit_plot(os.path.join(self.out_dir, csv_name), kind,
                         self.path(name))

    def discard_all(self) -> None:
        for name in self.written:
            try:
                os.remove(os.path.join(self.out_dir, name))
            except OSError:
                pass


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def run(config: ExperimentConfig) -> RunManifest:
    """Run one experiment config; returns the manifest it wrote."""
    out_dir = config.out_dir or "ppstat-out"
    os.makedirs(out_dir, exist_ok=True)
    sink = _Sink(out_dir, config)
    t0 = time.perf_counter()
    try:
        _RUNNERS[config.command](config, sink)
    except BaseException:
        sink.discard_all()
        raise
    outputs = {}
    for name in sink.written:
        p = os.path.join(out_dir, name)
        if os.path.exists(p):
            outputs[name] = _sha256(p)
    manifest = RunManifest(config_hash=config.config_hash, version=__version__,
                           command=config.command,
                           wall_clock_s=round(time.perf_counter() - t0, 6),
                           outputs=outputs)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def _run_generate(config: ExperimentConfig, sink: _Sink) -> None:
    reps = config.params["reps"]
    for r in range(reps):
        pat = sample(config.generator, config.rng.fork(r))
        sink.pattern(f"pattern_{r:03d}.json", pat)


def _run_match(config: ExperimentConfig, sink: _Sink) -> None:
    p = config.params
    reps, mode, margin = p["reps"], p["mode"], p["boundary_margin"]
    dist_rows = []
    pooled = []
    n_pairs = n_unmatched = 0
    for r in range(reps):
        red = sample(config.generator, config.rng.fork(r, 0))
        blue = (sample(config.generator_b, config.rng.fork(r, 1))
                if mode == "two-colour" else None)
        matching = stable_match(red, blue)
        st = match_stats(matching, red, blue, boundary_margin=margin)
        n_pairs += len(matching.pairs)
        n_unmatched += st.n_unmatched
        pooled.append(st.distances)
        dist_rows.extend((r, d) for d in st.distances)
    dist = np.sort(np.concatenate(pooled)) if pooled else np.empty(0)
    n = len(dist)
    f_half = float(np.searchsorted(dist, 0.5, side="right")) / n if n else float("nan")
    stats_rows = [
        ("reps", reps),
        ("mode", mode),
        ("n_pairs", n_pairs),
        ("n_unmatched", n_unmatched),
        ("n_observations", n),
        ("mean_distance", float(dist.mean()) if n else float("nan")),
        ("max_distance", float(dist[-1]) if n else float("nan")),
        ("f_half", f_half),
    ]
    dcsv = sink.csv("distances.csv", ["rep", "distance"], dist_rows)
    sink.csv("stats.csv", ["metric", "value"], stats_rows)
    if n:
        grid = np.linspace(0.0, float(dist[-1]), 33)[1:]
        tail = 1.0 - np.searchsorted(dist, grid, side="right") / n
        tcsv = sink.csv("tail.csv", ["r", "p"], zip(grid, tail))
        sink.plot("cdf.svg", "distances.csv" if dcsv else None, "cdf")
        if np.count_nonzero(tail > 0) >= 2:
            sink.plot("tail.svg", "tail.csv" if tcsv else None, "tail-loglog")


def _run_percolate(config: ExperimentConfig, sink: _Sink) -> None:
    p = config.params
    reps, radius = p["reps"], p["radius"]
    span_mode = _SPAN_MODES[p["spanning"]]
    m_radius = p.get("m_radius")
    rows = []
    spanning_counts = []
    branch_counts = []
    for r in range(reps):
        pat = sample(config.generator, config.rng.fork(r))
        labels = build_boolean_model(pat, radius)
        spanning = count_spanning_clusters(labels, span_mode)
        spanning_counts.append(spanning)
        sizes = [c.size for c in labels.clusters]
        branches = ""
        if m_radius is not None:
            origin = pat.window.centroid()
            b = count_m_branches(labels, origin, m_radius)
            branch_counts.append(b)
            branches = b
        rows.append((r, len(pat), len(labels.clusters),
                     max(sizes) if sizes else 0, spanning, branches))
    sink.csv("clusters.csv",
             ["rep", "n_points", "n_clusters", "largest", "spanning",
              "m_branches"], rows)
    sc = np.array(spanning_counts)
    summary = {
        "reps": reps,
        "radius": radius,
        "spanning_mode": p["spanning"],
        "one_spanning_fraction": float(np.mean(sc == 1)),
        "at_least_two_spanning_fraction": float(np.mean(sc >= 2)),
        "spanning_count_range": [int(sc.min()), int(sc.max())],
    }
    if branch_counts:
        bc = np.array(branch_counts)
        summary["m_radius"] = m_radius
        summary["m_branch_histogram"] = {
            str(k): int(np.sum(bc == k)) for k in np.unique(bc)}
    sink.json("summary.json", summary)


def _run_diagnose(config: ExperimentConfig, sink: _Sink) -> None:
    p = config.params
    reps, probe_radius = p["reps"], p["probe_radius"]
    scales = p.get("scales")
    if scales is None:
        probe = sample(config.generator, config.rng.fork(diagnostics._T_REPLICATE, 0))
        scales = diagnostics._default_scales(probe)
    stats = estimate_fluctuation(config.generator, scales, reps, config.rng,
                                 workers=config.workers)
    report = tolerance_report(config.generator, config.rng, reps=reps,
                              scales=stats.scales, probe_radius=probe_radius,
                              stats=stats)
    rcsv = sink.csv("replicates.csv", ["scale", "reps", "mean", "var", "var_se"],
                    stats.summary_rows())
    sink.csv("covariance.csv", ["scale_i", "scale_j", "cov"],
             stats.covariance_rows())
    sink.json("verdict.json", {k: report[k] for k in
                               ("trend", "count_probe", "verdict", "caveat")})
    sink.plot("variance.svg", "replicates.csv" if rcsv else None,
              "variance-vs-scale")


def _run_palm(config: ExperimentConfig, sink: _Sink) -> None:
    p = config.params
    reps, ball = p["reps"], p["ball_radius"]
    rows = []
    counts = np.empty(reps, dtype=int)
    first: PointPattern | None = None
    for r in range(reps):
        pat = palm_sample_empirical(config.generator, config.rng.fork(r))
        if first is None:
            first = pat
        d2 = np.einsum("ij,ij->i", pat.points, pat.points)
        counts[r] = int(((d2 > 0) & (d2 < ball * ball)).sum())
        rows.append((r, counts[r]))
    sink.csv("counts.csv", ["rep", "count"], rows)
    sink.json("summary.json", {
        "reps": reps,
        "ball_radius": ball,
        "mean_count": float(counts.mean()),
        "var_count": float(counts.var(ddof=1)) if reps > 1 else None,
    })
    if first is not None:
        sink.pattern("pattern_palm.json", first)


_RUNNERS = {
    "generate": _run_generate,
    "match": _run_match,
    "percolate": _run_percolate,
    "diagnose": _run_diagnose,
    "palm": _run_palm,
}
