"""Iterative graph reduction: score, remove, shortcut, filter, rank.

Each iteration removes an independent set of low-score nodes, replaces the
two-hop paths through them with candidate shortcut edges, and uses cheap
baseline witness edges plus one external sort to discard candidates that
cannot improve any distance.  Removed adjacency lists are archived in
removal order for the on-disk index; survivors after the loop form the
memory-resident core.
"""
from __future__ import annotations

import json
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .extsort import (RECORD_WIDTH, DEFAULT_BLOCK_SIZE, external_sort,
                      sort_key, unpack_triplet, TripletRun)
from .graph import (
    KIND_BASELINE,
    KIND_CANDIDATE,
    OUTGOING,
    AdjacencyGraph,
    EdgeTriplet,
    dist_add,
)
from .store import CoreTooLargeError, IndexBundle, IndexWriter


class EmptyRemovalError(RuntimeError):
    """No alive node qualified for removal in this iteration."""


@dataclass
class BuildConfig:
    memory_budget: int = 64 * 1024 * 1024
    block_size: int = DEFAULT_BLOCK_SIZE
    baseline_factor: int = 5
    median_sample_size: int = 10_000
    min_shrink: float = 0.05
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.memory_budget < self.block_size:
            raise ValueError("memory budget below block size")
        if not (0.0 < self.min_shrink < 1.0):
            raise ValueError("min_shrink must be in (0, 1)")
        if self.baseline_factor < 1:
            raise ValueError("baseline factor must be >= 1")

    def as_dict(self) -> dict:
        return {
            "memory_budget": self.memory_budget,
            "block_size": self.block_size,
            "baseline_factor": self.baseline_factor,
            "median_sample_size": self.median_sample_size,
            "min_shrink": self.min_shrink,
            "rng_seed": self.rng_seed,
        }


@dataclass
class RemovalSet:
    iteration: int
    members: list[int]
    blocked: set[int]


@dataclass
class IterationReport:
    iteration: int
    removed: list[int]
    threshold: int
    candidates_emitted: int
    baselines_emitted: int
    shortcuts_retained: list[EdgeTriplet]
    edges_remaining: int

    def stats_line(self) -> str:
        return json.dumps({
            "iteration": self.iteration,
            "removed": len(self.removed),
            "shortcuts_retained": len(self.shortcuts_retained),
            "candidates_emitted": self.candidates_emitted,
            "baselines_emitted": self.baselines_emitted,
            "edges_remaining": self.edges_remaining,
        }, sort_keys=True)


@dataclass
class BuildReport:
    iterations: list[IterationReport] = field(default_factory=list)
    ranks: list[int] = field(default_factory=list)
    core_nodes: list[int] = field(default_factory=list)
    removal_order: list[int] = field(default_factory=list)

    @property
    def shortcuts(self) -> list[EdgeTriplet]:
        return [s for it in self.iterations for s in it.shortcuts_retained]


def node_score(in_neighbors: set[int], out_neighbors: set[int]) -> int:
    """Upper bound on the shortcuts needed if this node were removed."""
    only_out = len(out_neighbors - in_neighbors)
    only_in = len(in_neighbors - out_neighbors)
    return len(in_neighbors) * only_out + len(out_neighbors) * only_in


def score_of(g: AdjacencyGraph, v: int) -> int:
    return node_score(g.in_neighbors(v), g.out_neighbors(v))


def estimate_median_score(g: AdjacencyGraph, sample_size: int,
                          rng: random.Random,
                          scores: dict[int, int] | None = None) -> int:
    """Lower median score over a uniform sample (without replacement) of alive nodes."""
    alive = [v for v in range(g.n) if g.alive[v]]
    if not alive:
        raise ValueError("graph has no alive nodes")
    k = min(sample_size, len(alive))
    sample = alive if k == len(alive) else rng.sample(alive, k)
    if scores is None:
        sampled = sorted(score_of(g, v) for v in sample)
    else:
        sampled = sorted(scores[v] for v in sample)
    return sampled[(len(sampled) - 1) // 2]


def select_removal_set(g: AdjacencyGraph, threshold: int, iteration: int,
                       scores: dict[int, int] | None = None) -> RemovalSet:
    """Pick an independent set of alive nodes scoring at or below the threshold.

    Nodes are scanned in ascending id; choosing a node blocks all of its
    neighbors for the rest of the iteration so that no two adjacent nodes
    are removed together.
    """
    members: list[int] = []
    blocked: set[int] = set()
    for v in range(g.n):
        if not g.alive[v] or v in blocked:
            continue
        s = scores[v] if scores is not None else score_of(g, v)
        if s <= threshold:
            members.append(v)
            blocked |= g.in_neighbors(v)
            blocked |= g.out_neighbors(v)
    if not members:
        raise EmptyRemovalError(f"iteration {iteration}: no removable node")
    return RemovalSet(iteration=iteration, members=members, blocked=blocked)


def emit_candidate_edges(g: AdjacencyGraph, removal: RemovalSet) -> Iterator[EdgeTriplet]:
    """Candidate shortcuts bridging every in/out neighbor pair of each removed node.

    A candidate <u, w> generated while removing v carries the length of the
    path <u, v, w> and inherits the pred hint of the edge <v, w>, so query
    predecessors reconstruct paths of the unreduced graph.  Both signs are
    emitted.
    """
    for v_star in removal.members:
        incoming = [(t.b, t.length) for t in g.inc[v_star]]
        for t_out in g.out[v_star]:
            w = t_out.b
            for u, len_in in incoming:
                if u == w:
                    continue
                length = dist_add(len_in, t_out.length)
                cand = EdgeTriplet(u, w, length, OUTGOING, KIND_CANDIDATE,
                                   t_out.pred_hint)
                yield cand
                yield cand.mirror()


def emit_baseline_edges(g: AdjacencyGraph, removal: RemovalSet, budget: int,
                        rng: random.Random,
                        useful_pairs: set[tuple[int, int]] | None = None
                        ) -> Iterator[EdgeTriplet]:
    """Witness edges used to discard redundant candidates; never persisted.

    Group one: every surviving edge whose endpoints are both kept.  Group
    two: up to ``budget`` sampled two-hop paths through kept nodes, favoring
    high-degree nodes by sampling edges uniformly (with replacement).

    ``useful_pairs`` restricts the output to witnesses whose (start, end)
    matches a candidate pair; a witness in a candidate-free sort group can
    never change what is retained, so suppressing it leaves results
    identical.  Suppressed two-hop samples still count against the budget.
    """
    removed = set(removal.members)
    edge_pool: list[EdgeTriplet] = []
    for v in range(g.n):
        if not g.alive[v]:
            continue
        for t in g.out[v]:
            if v not in removed and t.b not in removed and (
                    useful_pairs is None or (t.a, t.b) in useful_pairs):
                base = EdgeTriplet(t.a, t.b, t.length, OUTGOING, KIND_BASELINE,
                                   t.pred_hint)
                yield base
                yield base.mirror()
            edge_pool.append(t)

    if budget <= 0 or not edge_pool:
        return
    emitted = 0
    attempts = 0
    max_attempts = 4 * budget
    pool_len = len(edge_pool)
    while emitted < budget and attempts < max_attempts:
        attempts += 1
        t = edge_pool[rng.randrange(pool_len)]
        # An endpoint outside the removal set always exists: the set is
        # independent, so an edge never joins two removed nodes.
        a_ok = t.a not in removed
        b_ok = t.b not in removed
        if a_ok and b_ok:
            v = t.a if rng.randrange(2) == 0 else t.b
        else:
            v = t.a if a_ok else t.b
        inc_v = g.inc[v]
        out_v = g.out[v]
        if not inc_v or not out_v:
            continue
        # Rejection draws stay uniform over the eligible neighbors.
        t_in = inc_v[rng.randrange(len(inc_v))]
        if t_in.b in removed:
            continue
        t_out = out_v[rng.randrange(len(out_v))]
        if t_out.b in removed:
            continue
        u, w = t_in.b, t_out.b
        if u == w:
            continue
        emitted += 1
        if useful_pairs is not None and (u, w) not in useful_pairs:
            continue
        base = EdgeTriplet(u, w, dist_add(t_in.length, t_out.length),
                           OUTGOING, KIND_BASELINE, t_out.pred_hint)
        yield base
        yield base.mirror()


def filter_shortcuts(run: TripletRun | Iterable[EdgeTriplet]) -> list[EdgeTriplet]:
    """One pass over a sorted triplet file keeping only non-redundant candidates.

    Records sharing (owner, endpoint, sign) form a group; the first record of
    a group is its shortest.  A candidate survives only when it heads its
    group, i.e. no original or baseline edge matches it at equal or shorter
    length; later duplicates of a survivor are dropped.
    """
    if isinstance(run, TripletRun):
        # Raw records are key-ordered bytes: group on the leading
        # (owner, endpoint, sign) 9 bytes, kind lives at byte 17.
        retained = []
        prev = b""
        group = b""
        for raw in run.iter_raw():
            if raw < prev:
                raise RuntimeError("filter input not sorted")
            prev = raw
            gkey = raw[:9]
            if gkey != group:
                group = gkey
                if raw[17] == KIND_CANDIDATE:
                    retained.append(unpack_triplet(raw))
        return retained

    retained = []
    prev_key: tuple | None = None
    tuple_group: tuple[int, int, int] | None = None
    for t in run:
        key = sort_key(t)
        if prev_key is not None and key < prev_key:
            raise RuntimeError(f"filter input not sorted at record {t}")
        prev_key = key
        gkey = (t.a, t.b, t.sign)
        if gkey != tuple_group:
            tuple_group = gkey
            if t.kind == KIND_CANDIDATE:
                retained.append(t)
    return retained


def reduce_iteration(g: AdjacencyGraph, cfg: BuildConfig, iteration: int,
                     rng: random.Random, *, forced_members: list[int] | None = None,
                     keep_one: bool = False,
                     ) -> tuple[IterationReport, list[tuple[int, list[EdgeTriplet], list[EdgeTriplet]]]]:
    """Run one removal round, mutating ``g``; returns the report and archives.

    Archives hold, per removed node in removal order, the full outgoing and
    incoming adjacency at removal time; these become the on-disk blocks.
    With ``keep_one`` the removal set is trimmed so the graph never empties.
    """
    scores = {v: score_of(g, v) for v in range(g.n) if g.alive[v]}
    if forced_members is not None:
        removal = RemovalSet(iteration=iteration, members=list(forced_members),
                             blocked=set())
        threshold = -1
    else:
        threshold = estimate_median_score(g, cfg.median_sample_size, rng,
                                          scores=scores)
        removal = select_removal_set(g, threshold, iteration, scores=scores)
    if keep_one and len(removal.members) == g.alive_count() and len(removal.members) > 1:
        removal.members.pop()

    budget = cfg.baseline_factor * sum(scores[v] for v in removal.members)

    candidates = 0
    baselines = 0
    candidate_pairs: set[tuple[int, int]] = set()

    def stream() -> Iterator[EdgeTriplet]:
        nonlocal candidates, baselines
        for t in emit_candidate_edges(g, removal):
            candidates += 1
            if t.sign == OUTGOING:
                candidate_pairs.add((t.a, t.b))
            yield t
        for t in emit_baseline_edges(g, removal, budget, rng,
                                     useful_pairs=candidate_pairs):
            baselines += 1
            yield t

    with tempfile.TemporaryDirectory(prefix="triplets-") as tmp:
        run = external_sort(stream(), cfg.memory_budget, Path(tmp), cfg.block_size)
        retained = filter_shortcuts(run)
        run.unlink()

    # Counts above are record counts; report logical edges (two signs each).
    candidates //= 2
    baselines //= 2

    shortcuts = [t for t in retained if t.sign == OUTGOING]
    for s in shortcuts:
        g.add_edge(s.a, s.b, s.length, KIND_CANDIDATE, s.pred_hint)

    archives = [(v, list(g.out[v]), list(g.inc[v])) for v in removal.members]
    g.remove_nodes(removal.members)

    report = IterationReport(
        iteration=iteration,
        removed=list(removal.members),
        threshold=threshold,
        candidates_emitted=candidates,
        baselines_emitted=baselines,
        shortcuts_retained=shortcuts,
        edges_remaining=g.edge_count(),
    )
    return report, archives


def _fallback_member(g: AdjacencyGraph) -> int | None:
    best: tuple[int, int] | None = None
    for v in range(g.n):
        if not g.alive[v]:
            continue
        s = score_of(g, v)
        if best is None or s < best[0]:
            best = (s, v)
    return None if best is None else best[1]


def build_index(g: AdjacencyGraph, cfg: BuildConfig, out_dir: Path,
                *, stats_stream: TextIO | None = None) -> tuple[IndexBundle, BuildReport]:
    """Drive the reduction to termination and persist the index bundle.

    Iterating stops once the residual edge bytes fit the memory budget and
    the latest iteration shrank the edge count by less than ``min_shrink``;
    the survivors become the core with rank one above every removed node.
    """
    rng = random.Random(cfg.rng_seed)
    writer = IndexWriter(Path(out_dir), cfg)
    report = BuildReport(ranks=[0] * g.n)

    max_len = max((t.length for t in g.all_out_triplets()), default=1)

    last_shrink = 1.0
    iteration = 0
    while True:
        size = g.triplet_count() * RECORD_WIDTH
        if size <= cfg.memory_budget and last_shrink < cfg.min_shrink:
            break
        alive = g.alive_count()
        if alive <= 1:
            break
        iteration += 1
        before = g.triplet_count()
        try:
            it_report, archives = reduce_iteration(g, cfg, iteration, rng,
                                                   keep_one=True)
        except EmptyRemovalError:
            fallback = _fallback_member(g)
            if fallback is None:
                break
            it_report, archives = reduce_iteration(
                g, cfg, iteration, rng, forced_members=[fallback])
        for v, outs, ins in archives:
            report.ranks[v] = iteration
            report.removal_order.append(v)
            writer.append_removed_node(v, outs, ins)
        after = g.triplet_count()
        last_shrink = (before - after) / before if before else 0.0
        report.iterations.append(it_report)
        if stats_stream is not None:
            stats_stream.write(it_report.stats_line() + "\n")

    core_rank = 1 + max((r for r in report.ranks if r > 0), default=0)
    core_nodes = [v for v in range(g.n) if g.alive[v]]
    for v in core_nodes:
        report.ranks[v] = core_rank
    report.core_nodes = core_nodes

    core_bytes = g.triplet_count() * RECORD_WIDTH
    if core_bytes > cfg.memory_budget:
        raise CoreTooLargeError(core_bytes, cfg.memory_budget)

    writer.finalize(g, report.ranks, max_edge_length=max_len,
                    remap=g.remap)
    return IndexBundle.open(Path(out_dir)), report
