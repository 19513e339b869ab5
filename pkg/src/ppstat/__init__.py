"""Point-process simulation and analysis workbench.

Samplers for lattice, percolation, Poisson and Gaussian-analytic-function
processes; stable matching; Boolean-model cluster analysis; fluctuation and
Palm diagnostics.  All randomness is addressed through :class:`RngSpec` so
every experiment is replayable from a (seed, stream) pair.
"""

from .core import (
    INTERVAL_PAIR,
    NEAREST_TO_ORIGIN,
    Metric,
    PPStatError,
    PointPattern,
    RngSpec,
    Window,
    delete_points,
    distance,
    insert_uniform,
    pattern_from_dict,
    pattern_to_dict,
    read_pattern,
    restrict,
    superpose,
    write_pattern,
)
from .regions import Ball, Box, Region
from .generators import (
    GeneratorSpec,
    PerturbationSpec,
    sample,
    sample_column_deleted_stack,
    sample_doubled_perturbed_lattice,
    sample_perturbed_lattice,
    sample_poisson,
    sample_shifted_lattice,
    sample_site_percolation,
)
from .matching import (
    Matching,
    PalmMatchStats,
    TieError,
    check_descending_chain,
    check_non_equidistant,
    compute_H,
    compute_N,
    match_stats,
    stable_match,
    verify_stability,
)
from .percolation import (
    SPAN_ALL_FACES,
    SPAN_OPPOSITE,
    ClusterInfo,
    ClusterLabels,
    build_boolean_model,
    count_m_branches,
    count_spanning_clusters,
)
from .gaf import (
    GafSeries,
    RootFindingError,
    ZeroSet,
    count_zeros_argument_principle,
    read_zero_set,
    sample_gaf_hyperbolic,
    sample_gaf_planar,
    write_zero_set,
)
from .diagnostics import (
    ReplicateStats,
    TestFunction,
    classify_trend,
    estimate_fluctuation,
    eval_linear_statistic,
    n1_bound,
    n1_statistic,
    palm_sample_empirical,
    tolerance_report,
)
from .plots import EMIT_KINDS, emit_plot

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "ClusterInfo",
    "ClusterLabels",
    "GafSeries",
    "GeneratorSpec",
    "INTERVAL_PAIR",
    "Matching",
    "Metric",
    "NEAREST_TO_ORIGIN",
    "PPStatError",
    "PalmMatchStats",
    "PerturbationSpec",
    "PointPattern",
    "Region",
    "ReplicateStats",
    "RngSpec",
    "RootFindingError",
    "SPAN_ALL_FACES",
    "SPAN_OPPOSITE",
    "TestFunction",
    "TieError",
    "Window",
    "ZeroSet",
    "build_boolean_model",
    "check_descending_chain",
    "check_non_equidistant",
    "compute_H",
    "compute_N",
    "count_m_branches",
    "count_spanning_clusters",
    "count_zeros_argument_principle",
    "delete_points",
    "distance",
    "EMIT_KINDS",
    "emit_plot",
    "classify_trend",
    "estimate_fluctuation",
    "eval_linear_statistic",
    "insert_uniform",
    "match_stats",
    "n1_bound",
    "n1_statistic",
    "palm_sample_empirical",
    "pattern_from_dict",
    "pattern_to_dict",
    "read_pattern",
    "read_zero_set",
    "restrict",
    "sample",
    "sample_column_deleted_stack",
    "sample_doubled_perturbed_lattice",
    "sample_gaf_hyperbolic",
    "sample_gaf_planar",
    "sample_perturbed_lattice",
    "sample_poisson",
    "sample_shifted_lattice",
    "sample_site_percolation",
    "stable_match",
    "superpose",
    "tolerance_report",
    "verify_stability",
    "write_pattern",
    "write_zero_set",
]
