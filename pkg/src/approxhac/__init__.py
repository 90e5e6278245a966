"""Approximate centroid-linkage hierarchical agglomerative clustering."""

from .adaptive import AdaptiveNns, CapacityError, CoveringNet, bounding_box_net, hac_query_beta
from .engine import (EngineError, HacConfig, RunStats, StepOracle, exact_hac, invariant_check,
                     requeue_cap, run_hac, run_hac_bucket)
from .geometry import (Centroid, Dendrogram, DimensionMismatchError, DistanceBounds,
                       DuplicatePointsError, MergeRecord, compute_bounds, euclidean_dist,
                       merge_centroids)
from .io import emit_stats, load_labels, load_points, read_dendrogram, write_dendrogram
from .lsh import LshNns, LshParams, lsh_build
from .metrics import (CutPolicy, ari, best_cut_score, dasgupta_cost, delta_inversions,
                      dendrogram_purity, flatten_at_threshold, nmi)
from .nns import EmptyStoreError, ExactNns, NnsApproxSpec, QueryResult

__version__ = "0.1.0"

__all__ = [
    "AdaptiveNns", "CapacityError", "CoveringNet", "bounding_box_net", "hac_query_beta",
    "EngineError", "HacConfig", "RunStats", "StepOracle", "exact_hac", "invariant_check",
    "requeue_cap", "run_hac", "run_hac_bucket",
    "Centroid", "Dendrogram", "DimensionMismatchError", "DistanceBounds", "DuplicatePointsError",
    "MergeRecord", "compute_bounds", "euclidean_dist", "merge_centroids",
    "emit_stats", "load_labels", "load_points", "read_dendrogram", "write_dendrogram",
    "LshNns", "LshParams", "lsh_build",
    "CutPolicy", "ari", "best_cut_score", "dasgupta_cost", "delta_inversions",
    "dendrogram_purity", "flatten_at_threshold", "nmi",
    "EmptyStoreError", "ExactNns", "NnsApproxSpec", "QueryResult",
]
