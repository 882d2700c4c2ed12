"""Disk-backed shortest-path index for large directed weighted graphs.

The index is built by repeatedly removing low-importance nodes and patching
distances with shortcut edges; removed adjacency lists land in rank-ordered
files that queries scan sequentially, while the surviving core stays in
memory.  Single-source distance, single-source shortest path and
point-to-point distance queries are exact.
"""
from .graph import (
    INCOMING,
    KIND_BASELINE,
    KIND_CANDIDATE,
    KIND_ORIGINAL,
    MAX_LENGTH,
    OUTGOING,
    UNREACHABLE,
    AdjacencyGraph,
    EdgeTriplet,
    GraphFormatError,
    GraphValidationError,
    dist_add,
    dump_edge_list,
    load_edge_list,
    load_edge_list_path,
    validate_graph,
)
from .extsort import TripletRun, external_sort, sort_key, triplet_compare
from .preprocess import (
    BuildConfig,
    BuildReport,
    EmptyRemovalError,
    RemovalSet,
    build_index,
    emit_baseline_edges,
    emit_candidate_edges,
    estimate_median_score,
    filter_shortcuts,
    node_score,
    reduce_iteration,
    select_removal_set,
)
from .query import (
    DistanceResult,
    QueryStats,
    bidirectional_core_search,
    ppd_query,
    ssd_query,
    sssp_query,
)
from .oracle import (
    approx_closeness,
    dijkstra_oracle,
    exact_closeness,
    query_count,
    verify_bundle,
)
from .store import (
    CoreTooLargeError,
    CorruptIndexError,
    FetchLog,
    IndexBundle,
    IndexWriter,
    ScanOrderError,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "BuildConfig",
    "BuildReport",
    "CoreTooLargeError",
    "CorruptIndexError",
    "DistanceResult",
    "EdgeTriplet",
    "EmptyRemovalError",
    "FetchLog",
    "GraphFormatError",
    "GraphValidationError",
    "IndexBundle",
    "IndexWriter",
    "INCOMING",
    "KIND_BASELINE",
    "KIND_CANDIDATE",
    "KIND_ORIGINAL",
    "MAX_LENGTH",
    "OUTGOING",
    "QueryStats",
    "RemovalSet",
    "ScanOrderError",
    "TripletRun",
    "UNREACHABLE",
    "approx_closeness",
    "bidirectional_core_search",
    "build_index",
    "dijkstra_oracle",
    "dist_add",
    "dump_edge_list",
    "emit_baseline_edges",
    "emit_candidate_edges",
    "estimate_median_score",
    "exact_closeness",
    "external_sort",
    "filter_shortcuts",
    "load_edge_list",
    "load_edge_list_path",
    "node_score",
    "ppd_query",
    "query_count",
    "reduce_iteration",
    "select_removal_set",
    "sort_key",
    "ssd_query",
    "sssp_query",
    "triplet_compare",
    "validate_graph",
    "verify_bundle",
]
