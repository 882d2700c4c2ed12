"""Directed weighted graph model with signed edge-triplet adjacency.

Every logical edge ``u -> w`` is held twice: as an outgoing triplet in the
adjacency of ``u`` and as an incoming (sign-flipped) triplet in the adjacency
of ``w``.  Edge lengths are strictly positive 64-bit integers, so distance
comparisons are exact and sort order is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

OUTGOING = 0
INCOMING = 1

KIND_ORIGINAL = 0
KIND_BASELINE = 1
KIND_CANDIDATE = 2

KIND_NAMES = {KIND_ORIGINAL: "original", KIND_BASELINE: "baseline", KIND_CANDIDATE: "candidate"}

#: Sentinel distance; behaves as +infinity under dist_add and comparison.
UNREACHABLE = (1 << 64) - 1
#: Largest finite length/distance the on-disk format can hold.
MAX_LENGTH = UNREACHABLE - 1

MAX_NODE_ID = (1 << 32) - 1


def dist_add(x: int, y: int) -> int:
    """Add two distances, propagating UNREACHABLE and refusing to wrap."""
    if x == UNREACHABLE or y == UNREACHABLE:
        return UNREACHABLE
    total = x + y
    if total > MAX_LENGTH:
        raise OverflowError(f"distance addition overflow: {x} + {y}")
    return total


class EdgeTriplet(NamedTuple):
    """One signed adjacency record.

    ``sign == OUTGOING`` means the record describes edge ``<a, b>``;
    ``sign == INCOMING`` means it describes edge ``<b, a>``.  ``pred_hint``
    names the node immediately preceding the edge's ending point on the
    shortest path the edge stands for (the starting point itself for an
    original edge).
    """

    a: int
    b: int
    length: int
    sign: int
    kind: int = KIND_ORIGINAL
    pred_hint: int = 0

    def mirror(self) -> "EdgeTriplet":
        """The same logical edge as seen from the other endpoint."""
        return EdgeTriplet(self.b, self.a, self.length, self.sign ^ 1, self.kind, self.pred_hint)

    def endpoints(self) -> tuple[int, int]:
        """(start, end) of the logical edge regardless of sign."""
        if self.sign == OUTGOING:
            return self.a, self.b
        return self.b, self.a


def original_edge(u: int, v: int, length: int) -> EdgeTriplet:
    return EdgeTriplet(u, v, length, OUTGOING, KIND_ORIGINAL, u)


class GraphFormatError(ValueError):
    """Malformed edge-list input; carries the offending 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class GraphValidationError(ValueError):
    """Structurally parseable input that violates a value constraint."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass
class LoadReport:
    duplicate_edges_collapsed: int = 0
    self_loops_dropped: int = 0


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class AdjacencyGraph:
    """Mutable in-memory graph used for loading and index construction.

    Mutation is confined to the preprocessing pipeline (single worker);
    after loading/validation the structure may be shared read-only.
    """

    def __init__(self, n: int, remap: list[int] | None = None):
        self.n = n
        self.out: list[list[EdgeTriplet]] = [[] for _ in range(n)]
        self.inc: list[list[EdgeTriplet]] = [[] for _ in range(n)]
        self.alive = [True] * n
        #: dense id -> original id (None when input ids were already dense)
        self.remap = remap
        self.load_report = LoadReport()

    # -- construction ------------------------------------------------------

    def add_edge(self, u: int, v: int, length: int, kind: int = KIND_ORIGINAL,
                 pred_hint: int | None = None) -> bool:
        """Insert edge ``u -> v``; parallel edges collapse to the minimum length.

        Returns True if the adjacency changed, False if an existing shorter
        (or equal) parallel edge made the insertion a no-op.
        """
        if pred_hint is None:
            pred_hint = u
        for i, t in enumerate(self.out[u]):
            if t.b == v:
                if length >= t.length:
                    return False
                new = EdgeTriplet(u, v, length, OUTGOING, kind, pred_hint)
                self.out[u][i] = new
                for j, r in enumerate(self.inc[v]):
                    if r.b == u:
                        self.inc[v][j] = new.mirror()
                        break
                return True
        new = EdgeTriplet(u, v, length, OUTGOING, kind, pred_hint)
        self.out[u].append(new)
        self.inc[v].append(new.mirror())
        return True

    def copy(self) -> "AdjacencyGraph":
        """Deep copy; the reduction pipeline consumes the graph it is given."""
        dup = AdjacencyGraph(self.n, remap=None if self.remap is None else list(self.remap))
        dup.out = [list(lst) for lst in self.out]
        dup.inc = [list(lst) for lst in self.inc]
        dup.alive = list(self.alive)
        dup.load_report = LoadReport(
            self.load_report.duplicate_edges_collapsed,
            self.load_report.self_loops_dropped)
        return dup

    # -- queries -----------------------------------------------------------

    def alive_nodes(self) -> Iterator[int]:
        return (v for v in range(self.n) if self.alive[v])

    def alive_count(self) -> int:
        return sum(self.alive)

    def edge_count(self) -> int:
        """Number of logical directed edges among alive nodes."""
        return sum(len(self.out[v]) for v in range(self.n) if self.alive[v])

    def triplet_count(self) -> int:
        return 2 * self.edge_count()

    def out_neighbors(self, v: int) -> set[int]:
        return {t.b for t in self.out[v]}

    def in_neighbors(self, v: int) -> set[int]:
        return {t.b for t in self.inc[v]}

    def all_out_triplets(self) -> Iterator[EdgeTriplet]:
        for v in range(self.n):
            if self.alive[v]:
                yield from self.out[v]

    # -- mutation used by the reduction pipeline ---------------------------

    def remove_nodes(self, removed: Iterable[int]) -> None:
        """Drop nodes and every edge incident to them."""
        dead = set(removed)
        touched: set[int] = set()
        for v in dead:
            for t in self.out[v]:
                touched.add(t.b)
            for t in self.inc[v]:
                touched.add(t.b)
            self.out[v] = []
            self.inc[v] = []
            self.alive[v] = False
        for u in touched - dead:
            self.out[u] = [t for t in self.out[u] if t.b not in dead]
            self.inc[u] = [t for t in self.inc[u] if t.b not in dead]


def _parse_header(line: str, line_no: int) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise GraphFormatError("header must be 'n m'", line_no)
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise GraphFormatError(f"header not integral: {exc}", line_no) from None
    if n < 0 or m < 0:
        raise GraphFormatError("negative counts in header", line_no)
    return n, m


def load_edge_list(source: Iterable[str], *, directed: bool = True,
                   weighted: bool = True) -> AdjacencyGraph:
    """Parse edge-list text into an AdjacencyGraph.

    Format: a header line ``n m``, then ``m`` lines ``u v [w]``; lines
    starting with ``#`` are comments.  Unweighted edges get length 1;
    undirected inputs materialize both directions.  Parallel edges keep the
    minimum length, self-loops are dropped; both are counted in the load
    report.
    """
    header: tuple[int, int] | None = None
    edges: dict[tuple[int, int], int] = {}
    report = LoadReport()
    edge_lines = 0
    seen_ids: set[int] = set()

    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = _parse_header(line, line_no)
            continue
        parts = line.split()
        expected = 3 if weighted else 2
        if len(parts) != expected:
            raise GraphFormatError(
                f"expected {expected} fields, got {len(parts)}", line_no)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphFormatError(f"bad node id: {exc}", line_no) from None
        if u < 0 or v < 0 or u > MAX_NODE_ID or v > MAX_NODE_ID:
            raise GraphFormatError("node id out of range", line_no)
        if weighted:
            try:
                w = int(parts[2])
            except ValueError as exc:
                raise GraphFormatError(f"bad weight: {exc}", line_no) from None
            if w <= 0:
                raise GraphValidationError(f"non-positive weight {w}", line_no)
            if w > MAX_LENGTH:
                raise GraphValidationError(f"weight {w} too large", line_no)
        else:
            w = 1
        edge_lines += 1
        seen_ids.add(u)
        seen_ids.add(v)
        pairs = [(u, v)] if directed else [(u, v), (v, u)]
        for a, b in pairs:
            if a == b:
                report.self_loops_dropped += 1
                continue
            old = edges.get((a, b))
            if old is None:
                edges[(a, b)] = w
            else:
                edges[(a, b)] = min(old, w)
                report.duplicate_edges_collapsed += 1

    if header is None:
        raise GraphFormatError("missing header line")
    n, m = header
    if edge_lines != m:
        raise GraphFormatError(
            f"header declares {m} edges but {edge_lines} edge lines found")

    remap: list[int] | None = None
    mapping: dict[int, int] | None = None
    if seen_ids and max(seen_ids) >= n:
        distinct = sorted(seen_ids)
        if len(distinct) > n:
            raise GraphValidationError(
                f"{len(distinct)} distinct node ids exceed declared n={n}")
        mapping = {orig: dense for dense, orig in enumerate(distinct)}
        remap = distinct

    g = AdjacencyGraph(n, remap=remap)
    g.load_report = report
    for (u, v), w in sorted(edges.items()):
        if mapping is not None:
            u, v = mapping[u], mapping[v]
        g.add_edge(u, v, w)
    return g


def load_edge_list_path(path, *, directed: bool = True, weighted: bool = True) -> AdjacencyGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_edge_list(fh, directed=directed, weighted=weighted)


def dump_edge_list(g: AdjacencyGraph) -> str:
    """Serialize back to the edge-list text format (directed, weighted)."""
    lines = [f"{g.n} {g.edge_count()}"]
    for v in range(g.n):
        if not g.alive[v]:
            continue
        for t in sorted(g.out[v]):
            a, b = (t.a, t.b) if g.remap is None else (g.remap[t.a], g.remap[t.b])
            lines.append(f"{a} {b} {t.length}")
    return "\n".join(lines) + "\n"


def validate_graph(g: AdjacencyGraph) -> ValidationReport:
    """Report every violation of the adjacency invariants; empty report == well-formed."""
    report = ValidationReport()
    add = report.violations.append

    for v in range(g.n):
        for t in g.out[v] + g.inc[v]:
            if t.a != v:
                add(f"triplet {t} stored under node {v} but owned by {t.a}")
            if not (1 <= t.length <= MAX_LENGTH):
                add(f"edge {t.a}->{t.b} has invalid length {t.length}")
            if not g.alive[v]:
                add(f"removed node {v} still has edge to {t.b}")
            elif not (0 <= t.b < g.n) or not g.alive[t.b]:
                add(f"edge between {v} and {t.b} touches a removed or unknown node")
        for t in g.out[v]:
            if t.sign != OUTGOING:
                add(f"incoming-signed triplet {t} in outgoing list of {v}")
        for t in g.inc[v]:
            if t.sign != INCOMING:
                add(f"outgoing-signed triplet {t} in incoming list of {v}")

    # Mirror agreement: outgoing records must equal the sign-flip of the
    # incoming records that name them, including length and pred_hint.
    out_side: dict[tuple, int] = {}
    for v in range(g.n):
        for t in g.out[v]:
            key = (t.a, t.b, t.length, t.kind, t.pred_hint)
            out_side[key] = out_side.get(key, 0) + 1
    for v in range(g.n):
        for t in g.inc[v]:
            m = t.mirror()
            key = (m.a, m.b, m.length, m.kind, m.pred_hint)
            count = out_side.get(key, 0)
            if count == 0:
                add(f"incoming record at {v} for edge {m.a}->{m.b} "
                    f"(length {m.length}) has no matching outgoing record")
            else:
                out_side[key] = count - 1
    for key, count in out_side.items():
        if count:
            add(f"outgoing record {key[0]}->{key[1]} (length {key[2]}) "
                f"has no matching incoming record")
    return report
