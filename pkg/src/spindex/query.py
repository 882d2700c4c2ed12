"""Distance queries over a finalized index bundle.

Single-source queries run three phases: a forward pass over the ascending
rank file keyed by file position (so the file is read once, front to back),
a Dijkstra continuation inside the memory-resident core, and one heap-free
sweep of the descending rank file that finalizes every remaining node.
Point-to-point queries run the forward pass from the source, its mirror over
the backward file from the target, and a bidirectional core search that
stops once the best witnessed distance cannot be beaten.

Each query builds its own tables, heaps and cursors, so any number of
queries may run concurrently against one immutable bundle.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .graph import UNREACHABLE, MAX_LENGTH, dist_add
from .store import (
    AllocationTracker,
    CoreGraph,
    CorruptIndexError,
    FetchLog,
    IndexBundle,
)

# Nominal per-entry sizes used by the allocation tracker.
DIST_SLOT_BYTES = 8
PRED_SLOT_BYTES = 4
HEAP_ENTRY_BYTES = 16

PHASE_FORWARD = "forward"
PHASE_CORE = "core"
PHASE_BACKWARD = "backward"
PHASE_BACKWARD_ASC = "backward-asc"
PHASE_BIDI = "bidi-core"


@dataclass
class QueryStats:
    """Per-query instrumentation: fetches, heap traffic, tracked bytes."""

    fetch_log: FetchLog = field(default_factory=FetchLog)
    alloc: AllocationTracker = field(default_factory=AllocationTracker)
    heap_pushes: dict[str, int] = field(default_factory=dict)
    heap_pops: dict[str, int] = field(default_factory=dict)
    settles: dict[str, int] = field(default_factory=dict)
    phases: list[str] = field(default_factory=list)

    def heap_ops(self, phase: str) -> int:
        return self.heap_pushes.get(phase, 0) + self.heap_pops.get(phase, 0)


@dataclass
class DistanceResult:
    """Single-source answer: one distance slot per node, UNREACHABLE if none."""

    source: int
    distances: list[int]
    predecessors: list[int | None] | None = None
    stats: QueryStats | None = None


class _Heap:
    """Counting min-heap charged against the query's allocation tracker."""

    def __init__(self, stats: QueryStats, phase: str):
        self._entries: list[tuple[int, int]] = []
        self._stats = stats
        self._phase = phase
        stats.heap_pushes.setdefault(phase, 0)
        stats.heap_pops.setdefault(phase, 0)
        stats.settles.setdefault(phase, 0)

    def push(self, key: int, node: int) -> None:
        heapq.heappush(self._entries, (key, node))
        self._stats.heap_pushes[self._phase] += 1
        self._stats.alloc.add(HEAP_ENTRY_BYTES)

    def pop(self) -> tuple[int, int]:
        self._stats.heap_pops[self._phase] += 1
        self._stats.alloc.release(HEAP_ENTRY_BYTES)
        return heapq.heappop(self._entries)

    def peek(self) -> tuple[int, int] | None:
        return self._entries[0] if self._entries else None

    def __bool__(self) -> bool:
        return bool(self._entries)


def _check_node(bundle: IndexBundle, node: int) -> None:
    if not (0 <= node < bundle.n):
        raise KeyError(f"unknown node id {node}")


def _new_dist_table(n: int, stats: QueryStats) -> list[int]:
    stats.alloc.add(n * DIST_SLOT_BYTES)
    return [UNREACHABLE] * n


def _rank_file_search(bundle: IndexBundle, start: int, dist: list[int],
                      pred: list[int | None] | None, stats: QueryStats,
                      *, backward: bool) -> None:
    """Relax blocks in ascending file-position order starting from ``start``.

    Forward mode walks the forward file (outgoing edges); backward mode walks
    the backward file by ascending rank (incoming edges, relaxed toward their
    sources).  Every edge leads to a strictly higher rank, so each node is
    popped after all its contributors and its distance is final on arrival.
    """
    phase = PHASE_BACKWARD_ASC if backward else PHASE_FORWARD
    stats.phases.append(phase)
    if backward:
        cursor = bundle.backward_ascending_cursor(stats.fetch_log, stats.alloc)
    else:
        cursor = bundle.forward_cursor(stats.fetch_log, stats.alloc)
    heap = _Heap(stats, phase)
    heap.push(bundle.position_of_node[start], start)
    core_set = bundle.core_set
    position_of_node = bundle.position_of_node
    unreachable = UNREACHABLE
    max_len = MAX_LENGTH
    try:
        while heap:
            position, v = heap.pop()
            stats.settles[phase] += 1
            block = cursor.block(position)
            if block.node != v:
                raise CorruptIndexError(
                    f"block at position {position} holds node {block.node}, "
                    f"expected {v}")
            dv = dist[v]
            for endpoint, length, pred_hint, _kind in block.edges:
                nd = dv + length
                if nd < dist[endpoint]:
                    if nd > max_len:
                        raise OverflowError(f"distance overflow at {endpoint}")
                    first = dist[endpoint] == unreachable
                    dist[endpoint] = nd
                    if pred is not None:
                        pred[endpoint] = pred_hint
                    if first and endpoint not in core_set:
                        heap.push(position_of_node[endpoint], endpoint)
    finally:
        cursor.close()


def forward_search(bundle: IndexBundle, source: int, dist: list[int],
                   pred: list[int | None] | None, stats: QueryStats) -> None:
    """Forward phase: exact distances along rank-ascending paths."""
    _rank_file_search(bundle, source, dist, pred, stats, backward=False)


def core_search(core: CoreGraph, dist: list[int],
                pred: list[int | None] | None, stats: QueryStats,
                phase: str = PHASE_CORE) -> None:
    """Continue the search inside the core with a plain Dijkstra.

    Every node already holding a finite distance is seeded; improvements
    re-push (lazy deletion), so each node settles at most once at its final
    key.  After this phase core distances are exact.
    """
    stats.phases.append(phase)
    heap = _Heap(stats, phase)
    for v, d in enumerate(dist):
        if d != UNREACHABLE:
            heap.push(d, v)
    out = core.out
    max_len = MAX_LENGTH
    while heap:
        d, v = heap.pop()
        if d > dist[v]:
            continue  # stale entry
        stats.settles[phase] += 1
        rows = out.get(v)
        if not rows:
            continue
        for endpoint, length, pred_hint, _kind in rows:
            nd = d + length
            if nd < dist[endpoint]:
                if nd > max_len:
                    raise OverflowError(f"distance overflow at {endpoint}")
                dist[endpoint] = nd
                if pred is not None:
                    pred[endpoint] = pred_hint
                heap.push(nd, endpoint)


def backward_scan(bundle: IndexBundle, dist: list[int],
                  pred: list[int | None] | None, stats: QueryStats) -> None:
    """Single heap-free pass of the backward file, finalizing every node.

    Blocks arrive in descending rank order and every incoming edge starts at
    a strictly higher rank, so each edge's source is already final when its
    block is visited.
    """
    stats.phases.append(PHASE_BACKWARD)
    for block in bundle.scan_backward_descending(stats.fetch_log, stats.alloc):
        v = block.node
        best = dist[v]
        best_pred = None
        for u, length, pred_hint, _kind in block.edges:
            du = dist[u]
            if du == UNREACHABLE:
                continue
            nd = du + length
            if nd < best:
                if nd > MAX_LENGTH:
                    raise OverflowError(f"distance overflow at node {v}")
                best = nd
                best_pred = pred_hint
        if best != dist[v]:
            dist[v] = best
            if pred is not None and best_pred is not None:
                pred[v] = best_pred


def ssd_query(bundle: IndexBundle, source: int, *, want_preds: bool = False,
              stats: QueryStats | None = None) -> DistanceResult:
    """Single-source distances (optionally with predecessors) for every node."""
    _check_node(bundle, source)
    stats = stats if stats is not None else QueryStats()
    dist = _new_dist_table(bundle.n, stats)
    pred: list[int | None] | None = None
    if want_preds:
        stats.alloc.add(bundle.n * PRED_SLOT_BYTES)
        pred = [None] * bundle.n
    dist[source] = 0

    if not bundle.is_core(source):
        forward_search(bundle, source, dist, pred, stats)
    core = bundle.load_core(stats.fetch_log, stats.alloc)
    core_search(core, dist, pred, stats)
    backward_scan(bundle, dist, pred, stats)
    return DistanceResult(source=source, distances=dist, predecessors=pred,
                          stats=stats)


def sssp_query(bundle: IndexBundle, source: int,
               stats: QueryStats | None = None) -> DistanceResult:
    """Single-source shortest paths: distances plus predecessor per node."""
    return ssd_query(bundle, source, want_preds=True, stats=stats)


def ppd_forward(bundle: IndexBundle, source: int, dist: list[int],
                stats: QueryStats) -> None:
    forward_search(bundle, source, dist, None, stats)


def ppd_backward(bundle: IndexBundle, target: int, dist: list[int],
                 stats: QueryStats) -> None:
    """Mirror of the forward phase over the backward file from the target."""
    _rank_file_search(bundle, target, dist, None, stats, backward=True)


def bidirectional_core_search(core: CoreGraph, dist_f: list[int],
                              dist_b: list[int], stats: QueryStats) -> int:
    """Alternate Dijkstra steps from both ends inside the core.

    The answer bound starts at the best forward+backward sum witnessed by the
    file phases and only decreases; the search stops when the bound is at
    most the sum of both frontier keys (or both queues drain).
    """
    stats.phases.append(PHASE_BIDI)
    best = UNREACHABLE
    for v, df in enumerate(dist_f):
        if df != UNREACHABLE and dist_b[v] != UNREACHABLE:
            best = min(best, dist_add(df, dist_b[v]))

    heap_f = _Heap(stats, PHASE_BIDI)
    heap_b = _Heap(stats, PHASE_BIDI)
    for v in core.out:
        if dist_f[v] != UNREACHABLE:
            heap_f.push(dist_f[v], v)
        if dist_b[v] != UNREACHABLE:
            heap_b.push(dist_b[v], v)

    def valid_top(heap: _Heap, dist: list[int]) -> tuple[int, int] | None:
        while heap:
            key, v = heap.peek()  # type: ignore[misc]
            if key > dist[v]:
                heap.pop()  # stale entry
                continue
            return key, v
        return None

    forward_turn = True
    while True:
        top_f = valid_top(heap_f, dist_f)
        top_b = valid_top(heap_b, dist_b)
        if top_f is None and top_b is None:
            break
        frontier = dist_add(top_f[0] if top_f else UNREACHABLE,
                            top_b[0] if top_b else UNREACHABLE)
        if best <= frontier:
            break
        take_forward = forward_turn if (top_f and top_b) else top_f is not None
        forward_turn = not forward_turn
        if take_forward:
            d, u = heap_f.pop()
            stats.settles[PHASE_BIDI] += 1
            if dist_b[u] != UNREACHABLE:
                best = min(best, dist_add(d, dist_b[u]))
            for endpoint, length, _pred, _kind in core.out.get(u, ()):
                nd = dist_add(d, length)
                if nd < dist_f[endpoint]:
                    dist_f[endpoint] = nd
                    heap_f.push(nd, endpoint)
                    if dist_b[endpoint] != UNREACHABLE:
                        best = min(best, dist_add(nd, dist_b[endpoint]))
        else:
            d, u = heap_b.pop()
            stats.settles[PHASE_BIDI] += 1
            if dist_f[u] != UNREACHABLE:
                best = min(best, dist_add(dist_f[u], d))
            for endpoint, length, _pred, _kind in core.inc.get(u, ()):
                nd = dist_add(d, length)
                if nd < dist_b[endpoint]:
                    dist_b[endpoint] = nd
                    heap_b.push(nd, endpoint)
                    if dist_f[endpoint] != UNREACHABLE:
                        best = min(best, dist_add(dist_f[endpoint], nd))
    return best


def ppd_query(bundle: IndexBundle, source: int, target: int,
              stats: QueryStats | None = None) -> int:
    """Point-to-point distance; UNREACHABLE when no path exists.

    A core-resident endpoint skips its file phase and is seeded at zero; the
    bidirectional core search reconciles the two half-searches.
    """
    _check_node(bundle, source)
    _check_node(bundle, target)
    stats = stats if stats is not None else QueryStats()
    dist_f = _new_dist_table(bundle.n, stats)
    dist_b = _new_dist_table(bundle.n, stats)
    dist_f[source] = 0
    dist_b[target] = 0

    if not bundle.is_core(source):
        ppd_forward(bundle, source, dist_f, stats)
    if not bundle.is_core(target):
        ppd_backward(bundle, target, dist_b, stats)
    core = bundle.load_core(stats.fetch_log, stats.alloc)
    return bidirectional_core_search(core, dist_f, dist_b, stats)
