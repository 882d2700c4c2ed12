"""Exact in-memory reference algorithms, bundle verification, and the
sampled closeness-estimation workload.

The Dijkstra oracle runs over the original adjacency only and is the ground
truth every index query is checked against; it deliberately shares no code
with the index search path.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field

from .graph import UNREACHABLE, AdjacencyGraph, KIND_ORIGINAL
from .query import DistanceResult, ppd_query, ssd_query
from .store import IndexBundle

EXACT_CLOSENESS_NODE_LIMIT = 2000


def dijkstra_oracle(g: AdjacencyGraph, source: int) -> DistanceResult:
    """Textbook Dijkstra over original edges: exact distances and predecessors."""
    if not (0 <= source < g.n):
        raise KeyError(f"unknown node id {source}")
    dist = [UNREACHABLE] * g.n
    pred: list[int | None] = [None] * g.n
    dist[source] = 0
    heap = [(0, source)]
    out = g.out
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for t in out[u]:
            nd = d + t.length
            if nd < dist[t.b]:
                dist[t.b] = nd
                pred[t.b] = u
                heapq.heappush(heap, (nd, t.b))
    return DistanceResult(source=source, distances=dist, predecessors=pred)


@dataclass
class CheckResult:
    ok: bool
    violations: list[str] = field(default_factory=list)


@dataclass
class VerifyReport:
    checks: dict[str, CheckResult] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def to_json(self) -> str:
        payload = {
            "ok": self.ok,
            "checks": {
                name: {"ok": c.ok, "violations": c.violations[:20]}
                for name, c in self.checks.items()
            },
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _bundle_edges(bundle: IndexBundle) -> dict[tuple[int, int], tuple[int, int]]:
    """Every logical edge of the augmented graph: (u, w) -> (length, kind)."""
    edges: dict[tuple[int, int], tuple[int, int]] = {}

    def put(u: int, w: int, length: int, kind: int) -> None:
        old = edges.get((u, w))
        if old is None or length < old[0]:
            edges[(u, w)] = (length, kind)

    for block in bundle.scan_forward(0):
        for endpoint, length, _pred, kind in block.edges:
            put(block.node, endpoint, length, kind)
    for block in bundle.scan_backward_descending():
        for endpoint, length, _pred, kind in block.edges:
            put(endpoint, block.node, length, kind)
    core = bundle.load_core()
    for v, rows in core.out.items():
        for endpoint, length, _pred, kind in rows:
            put(v, endpoint, length, kind)
    return edges


def verify_bundle(g: AdjacencyGraph, bundle: IndexBundle,
                  sample_sources: int = 10, seed: int = 0) -> VerifyReport:
    """Cross-check a bundle against its source graph.

    Checks: (a) every shortcut is at least as long as the true distance and
    decomposes into two augmented edges of exactly its length, (b) sampled
    single-source results match the oracle, (c) sampled point-to-point
    results match the oracle, (d) structural file invariants hold.
    """
    report = VerifyReport()
    rng = random.Random(seed)

    structural = bundle.check_structure()
    report.checks["structure"] = CheckResult(not structural, structural)

    edges = _bundle_edges(bundle)
    by_source: dict[int, list[tuple[int, int]]] = {}
    for (u, w), (length, _kind) in edges.items():
        by_source.setdefault(u, []).append((w, length))

    soundness: list[str] = []
    oracle_cache: dict[int, list[int]] = {}
    for (u, w), (length, kind) in sorted(edges.items()):
        if kind == KIND_ORIGINAL:
            continue
        if u not in oracle_cache:
            oracle_cache[u] = dijkstra_oracle(g, u).distances
        true_dist = oracle_cache[u][w]
        if true_dist == UNREACHABLE or true_dist > length:
            soundness.append(
                f"shortcut {u}->{w} length {length} below true distance "
                f"{true_dist}")
        two_hop = False
        for mid, l1 in by_source.get(u, ()):
            if l1 >= length:
                continue
            rest = edges.get((mid, w))
            if rest is not None and l1 + rest[0] == length:
                two_hop = True
                break
        if not two_hop:
            soundness.append(
                f"shortcut {u}->{w} length {length} does not decompose into "
                f"two augmented edges")
    report.checks["shortcut_soundness"] = CheckResult(not soundness, soundness)

    n = bundle.n
    ssd_bad: list[str] = []
    sources = rng.sample(range(n), min(sample_sources, n))
    for s in sources:
        got = ssd_query(bundle, s).distances
        want = dijkstra_oracle(g, s).distances
        for v in range(n):
            if got[v] != want[v]:
                ssd_bad.append(f"ssd from {s}: node {v} got {got[v]}, "
                               f"want {want[v]}")
    report.checks["ssd_equality"] = CheckResult(not ssd_bad, ssd_bad)

    ppd_bad: list[str] = []
    for _ in range(len(sources)):
        s, t = rng.randrange(n), rng.randrange(n)
        got = ppd_query(bundle, s, t)
        if s not in oracle_cache:
            oracle_cache[s] = dijkstra_oracle(g, s).distances
        want = oracle_cache[s][t]
        if got != want:
            ppd_bad.append(f"ppd {s}->{t}: got {got}, want {want}")
    report.checks["ppd_equality"] = CheckResult(not ppd_bad, ppd_bad)
    return report


def exact_closeness(g: AdjacencyGraph) -> list[float]:
    """Closeness of every node from all-sources oracle runs.

    closeness(v) = (n-1) / sum of finite distances into v; nodes nothing
    reaches get 0.  Distances are measured INTO each node, matching the
    sampled estimator which runs single-source queries from sources.
    """
    if g.n > EXACT_CLOSENESS_NODE_LIMIT:
        raise ValueError(
            f"graph too large for all-pairs closeness ({g.n} nodes, "
            f"limit {EXACT_CLOSENESS_NODE_LIMIT})")
    sums = [0] * g.n
    reached = [0] * g.n
    for u in range(g.n):
        dist = dijkstra_oracle(g, u).distances
        for v in range(g.n):
            if u != v and dist[v] != UNREACHABLE:
                sums[v] += dist[v]
                reached[v] += 1
    return [(g.n - 1) / s if s > 0 else 0.0 for s in sums]


def query_count(n: float, eps: float) -> int:
    """Number of sampled single-source queries for an accuracy target eps."""
    return max(1, math.ceil(math.log(n) / (eps * eps)))


@dataclass
class ClosenessEstimate:
    k: int
    sources: list[int]
    average_distance: list[float]
    closeness: list[float]
    penalty: int


def approx_closeness(bundle: IndexBundle, eps: float, seed: int,
                     penalty: int | None = None) -> ClosenessEstimate:
    """Estimate closeness from k = ceil(ln n / eps^2) sampled sources.

    Sources are drawn uniformly with replacement; each unreached sample
    contributes a penalty distance (default n * max edge length) so the
    estimator stays defined on graphs that are not strongly connected.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    n = bundle.n
    k = query_count(n, eps)
    rng = random.Random(seed)
    sources = [rng.randrange(n) for _ in range(k)]
    if penalty is None:
        penalty = n * bundle.max_edge_length

    sums = [0] * n
    for u in sources:
        dist = ssd_query(bundle, u).distances
        for v in range(n):
            d = dist[v]
            sums[v] += d if d != UNREACHABLE else penalty

    if n == 1:
        return ClosenessEstimate(k=k, sources=sources, average_distance=[0.0],
                                 closeness=[0.0], penalty=penalty)
    scale = n / (k * (n - 1))
    avg = [scale * s for s in sums]
    closeness = [1.0 / a if a > 0 else 0.0 for a in avg]
    return ClosenessEstimate(k=k, sources=sources, average_distance=avg,
                             closeness=closeness, penalty=penalty)
