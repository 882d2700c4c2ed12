"""On-disk index bundle: rank-ordered adjacency files plus a resident core.

A bundle directory holds ``forward.bin`` (outgoing edges of removed nodes in
removal order), ``backward.bin`` (their incoming edges in reverse removal
order), ``core.bin`` (both-sign adjacency of the surviving core) and
``meta.json``.  Block reads go through an instrumented chunk reader so tests
can prove that queries touch each file sequentially and at most once.

Binary layout (little-endian, format version 1): each block is a header
``node u32, edge count u32`` followed by fixed 24-byte edge records
``endpoint u32, length u64, pred_hint u32, kind u8, pad``.  Core blocks use a
16-byte header ``node u32, out count u32, in count u32, reserved u32`` with
outgoing records first.  Files carry a CRC32 in the meta for corruption
detection.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterator

from .graph import EdgeTriplet, INCOMING, OUTGOING

if TYPE_CHECKING:  # pragma: no cover
    from .preprocess import BuildConfig

FORMAT_VERSION = 1

EDGE_RECORD = struct.Struct("<IQIB7x")  # endpoint, length, pred_hint, kind
BLOCK_HEADER = struct.Struct("<II")  # node, edge count
CORE_HEADER = struct.Struct("<IIII")  # node, out count, in count, reserved

FORWARD_FILE = "forward.bin"
BACKWARD_FILE = "backward.bin"
CORE_FILE = "core.bin"
META_FILE = "meta.json"


class ScanOrderError(RuntimeError):
    """A cursor was asked to move against its committed scan direction."""


class CorruptIndexError(RuntimeError):
    """Bundle files disagree with their metadata or checksums."""


class CoreTooLargeError(RuntimeError):
    """The core graph does not fit the configured memory budget."""

    def __init__(self, achieved_bytes: int, budget: int):
        self.achieved_bytes = achieved_bytes
        self.budget = budget
        super().__init__(f"core graph is {achieved_bytes} bytes, budget {budget}")


class AllocationTracker:
    """Nominal byte accounting for the structures a query keeps resident."""

    def __init__(self) -> None:
        self.current = 0
        self.peak = 0

    def add(self, nbytes: int) -> None:
        self.current += nbytes
        if self.current > self.peak:
            self.peak = self.current

    def release(self, nbytes: int) -> None:
        self.current -= nbytes


class FetchLog:
    """Chunk fetches per file, in order, for scan-discipline assertions."""

    def __init__(self) -> None:
        self.records: list[tuple[str, int]] = []

    def record(self, label: str, offset: int) -> None:
        self.records.append((label, offset))

    def offsets(self, label: str) -> list[int]:
        return [off for lab, off in self.records if lab == label]

    def count(self, label: str) -> int:
        return sum(1 for lab, _ in self.records if lab == label)


class ChunkReader:
    """Reads a file through aligned fixed-size chunks with a tiny LRU cache.

    Two cache slots are enough for any monotone scan (either direction) to
    fetch every chunk at most once, even when a block straddles a boundary.
    """

    def __init__(self, path: Path, label: str, chunk_size: int,
                 log: FetchLog | None = None,
                 tracker: AllocationTracker | None = None,
                 cache_slots: int = 2):
        self._fh = open(path, "rb")
        self.label = label
        self.chunk_size = chunk_size
        self.log = log
        self.tracker = tracker
        self.cache_slots = cache_slots
        self._cache: OrderedDict[int, bytes] = OrderedDict()
        self.size = os.fstat(self._fh.fileno()).st_size

    def _chunk(self, index: int) -> bytes:
        cached = self._cache.get(index)
        if cached is not None:
            self._cache.move_to_end(index)
            return cached
        self._fh.seek(index * self.chunk_size)
        data = self._fh.read(self.chunk_size)
        if self.log is not None:
            self.log.record(self.label, index * self.chunk_size)
        if self.tracker is not None:
            self.tracker.add(len(data))
        self._cache[index] = data
        while len(self._cache) > self.cache_slots:
            _, evicted = self._cache.popitem(last=False)
            if self.tracker is not None:
                self.tracker.release(len(evicted))
        return data

    def read(self, offset: int, size: int) -> bytes:
        if size == 0:
            return b""
        if offset < 0 or offset + size > self.size:
            raise CorruptIndexError(
                f"{self.label}: read [{offset}, {offset + size}) beyond "
                f"file size {self.size}")
        first = offset // self.chunk_size
        last = (offset + size - 1) // self.chunk_size
        parts = [self._chunk(i) for i in range(first, last + 1)]
        data = b"".join(parts)
        start = offset - first * self.chunk_size
        return data[start:start + size]

    def close(self) -> None:
        if self.tracker is not None:
            for data in self._cache.values():
                self.tracker.release(len(data))
        self._cache.clear()
        self._fh.close()


@dataclass
class Block:
    """One node's adjacency block: (endpoint, length, pred_hint, kind) rows."""

    node: int
    edges: list[tuple[int, int, int, int]]


@dataclass
class CoreGraph:
    """Memory-resident residual graph with both-sign adjacency."""

    out: dict[int, list[tuple[int, int, int, int]]]
    inc: dict[int, list[tuple[int, int, int, int]]]
    record_bytes: int

    @property
    def nodes(self) -> set[int]:
        return set(self.out)

    def edge_count(self) -> int:
        return sum(len(v) for v in self.out.values())


def _pack_block(node: int, triplets: list[EdgeTriplet]) -> bytes:
    parts = [BLOCK_HEADER.pack(node, len(triplets))]
    for t in triplets:
        parts.append(EDGE_RECORD.pack(t.b, t.length, t.pred_hint, t.kind))
    return b"".join(parts)


def _file_crc(path: Path) -> int:
    crc = 0
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(1 << 20)
            if not chunk:
                break
            crc = zlib.crc32(chunk, crc)
    return crc


class IndexWriter:
    """Streams removed-node blocks during the build, then seals the bundle."""

    def __init__(self, out_dir: Path, config: "BuildConfig"):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self._fwd_path = self.out_dir / FORWARD_FILE
        self._bwd_tmp = self.out_dir / (BACKWARD_FILE + ".staging")
        self._fwd = open(self._fwd_path, "wb")
        self._bwd = open(self._bwd_tmp, "wb")
        self._order: list[int] = []
        self._appended: set[int] = set()
        self._fwd_offsets: list[int] = []
        self._bwd_staged: list[tuple[int, int]] = []  # offset, size per block
        self._fwd_pos = 0
        self._bwd_pos = 0
        self._finalized = False

    def append_removed_node(self, node: int, outgoing: list[EdgeTriplet],
                            incoming: list[EdgeTriplet]) -> None:
        """Archive one removed node; must be called in removal order."""
        if self._finalized:
            raise RuntimeError("writer already finalized")
        if node in self._appended:
            raise ValueError(f"node {node} archived twice")
        for t in outgoing:
            if t.a != node or t.sign != OUTGOING:
                raise ValueError(f"bad outgoing triplet {t} for node {node}")
        for t in incoming:
            if t.a != node or t.sign != INCOMING:
                raise ValueError(f"bad incoming triplet {t} for node {node}")
        self._appended.add(node)
        self._order.append(node)

        blob = _pack_block(node, outgoing)
        self._fwd.write(blob)
        self._fwd_offsets.append(self._fwd_pos)
        self._fwd_pos += len(blob)

        blob = _pack_block(node, incoming)
        self._bwd.write(blob)
        self._bwd_staged.append((self._bwd_pos, len(blob)))
        self._bwd_pos += len(blob)

    def finalize(self, core, ranks: list[int], *, max_edge_length: int,
                 remap: list[int] | None) -> Path:
        """Reverse the backward staging, write the core, and persist metadata."""
        if self._finalized:
            raise RuntimeError("writer already finalized")
        self._finalized = True
        self._fwd.flush()
        os.fsync(self._fwd.fileno())
        self._fwd.close()
        self._bwd.flush()
        self._bwd.close()

        core_nodes = [v for v in range(core.n) if core.alive[v]]
        if set(core_nodes) & self._appended:
            raise ValueError("archived node still alive in the core graph")

        # Backward file: same blocks, block order reversed.
        bwd_path = self.out_dir / BACKWARD_FILE
        bwd_offsets: list[int] = []
        pos = 0
        with open(self._bwd_tmp, "rb") as src, open(bwd_path, "wb") as dst:
            for offset, size in reversed(self._bwd_staged):
                src.seek(offset)
                blob = src.read(size)
                dst.write(blob)
                bwd_offsets.append(pos)
                pos += len(blob)
            dst.flush()
            os.fsync(dst.fileno())
        os.unlink(self._bwd_tmp)

        core_path = self.out_dir / CORE_FILE
        core_records = 0
        with open(core_path, "wb") as fh:
            for v in core_nodes:
                fh.write(CORE_HEADER.pack(v, len(core.out[v]), len(core.inc[v]), 0))
                for t in core.out[v]:
                    fh.write(EDGE_RECORD.pack(t.b, t.length, t.pred_hint, t.kind))
                for t in core.inc[v]:
                    fh.write(EDGE_RECORD.pack(t.b, t.length, t.pred_hint, t.kind))
                core_records += len(core.out[v]) + len(core.inc[v])
            fh.flush()
            os.fsync(fh.fileno())

        meta = {
            "format_version": FORMAT_VERSION,
            "n": core.n,
            "removal_order": self._order,
            "ranks": ranks,
            "core_nodes": core_nodes,
            "forward_offsets": self._fwd_offsets,
            "backward_offsets": bwd_offsets,
            "forward_bytes": self._fwd_pos,
            "backward_bytes": pos,
            "core_bytes": os.path.getsize(core_path),
            "core_record_bytes": core_records * EDGE_RECORD.size,
            "checksums": {
                FORWARD_FILE: _file_crc(self._fwd_path),
                BACKWARD_FILE: _file_crc(bwd_path),
                CORE_FILE: _file_crc(core_path),
            },
            "config": self.config.as_dict(),
            "max_edge_length": max_edge_length,
            "remap": remap,
        }
        meta_path = self.out_dir / META_FILE
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        return meta_path


def _parse_edges(buf: bytes) -> list[tuple[int, int, int, int]]:
    return list(EDGE_RECORD.iter_unpack(buf))


def _block_sizes(offsets: list[int], total: int) -> list[int]:
    return [(offsets[i + 1] if i + 1 < len(offsets) else total) - offsets[i]
            for i in range(len(offsets))]


def _read_block(reader: ChunkReader, offset: int, size: int) -> Block:
    blob = reader.read(offset, size)
    node, _count = BLOCK_HEADER.unpack_from(blob, 0)
    return Block(node, _parse_edges(blob[BLOCK_HEADER.size:]))


class ForwardCursor:
    """Demand-driven access to forward blocks at non-decreasing positions."""

    def __init__(self, bundle: "IndexBundle", reader: ChunkReader):
        self._bundle = bundle
        self._reader = reader
        self._last = -1

    def block(self, position: int) -> Block:
        if not (0 <= position < len(self._bundle.removal_order)):
            raise IndexError(f"forward position {position} out of range")
        if position < self._last:
            raise ScanOrderError(
                f"forward scan went backwards: {self._last} -> {position}")
        self._last = position
        return _read_block(self._reader, self._bundle.forward_offsets[position],
                           self._bundle.forward_sizes[position])

    def scan_from(self, position: int) -> Iterator[Block]:
        for i in range(position, len(self._bundle.removal_order)):
            yield self.block(i)

    def close(self) -> None:
        self._reader.close()


class BackwardAscendingCursor:
    """Backward-file blocks fetched by ascending rank (reverse file order)."""

    def __init__(self, bundle: "IndexBundle", reader: ChunkReader):
        self._bundle = bundle
        self._reader = reader
        self._last = -1

    def block(self, position: int) -> Block:
        order = self._bundle.removal_order
        if not (0 <= position < len(order)):
            raise IndexError(f"backward position {position} out of range")
        if position < self._last:
            raise ScanOrderError(
                f"ascending backward scan went backwards: {self._last} -> {position}")
        self._last = position
        file_index = len(order) - 1 - position
        return _read_block(self._reader,
                           self._bundle.backward_offsets[file_index],
                           self._bundle.backward_sizes[file_index])

    def scan_all(self) -> Iterator[Block]:
        for position in range(len(self._bundle.removal_order)):
            yield self.block(position)

    def close(self) -> None:
        self._reader.close()


class IndexBundle:
    """Read-only view of a finalized bundle; safe for concurrent cursors."""

    def __init__(self, directory: Path, meta: dict):
        self.directory = Path(directory)
        self.meta = meta
        self.n: int = meta["n"]
        self.removal_order: list[int] = meta["removal_order"]
        self.ranks: list[int] = meta["ranks"]
        self.core_nodes: list[int] = meta["core_nodes"]
        self.forward_offsets: list[int] = meta["forward_offsets"]
        self.backward_offsets: list[int] = meta["backward_offsets"]
        self.block_size: int = meta["config"]["block_size"]
        self.memory_budget: int = meta["config"]["memory_budget"]
        self.max_edge_length: int = meta["max_edge_length"]
        self.core_set = set(self.core_nodes)
        self.position_of_node: dict[int, int] = {
            v: i for i, v in enumerate(self.removal_order)}
        self.forward_sizes = _block_sizes(self.forward_offsets,
                                          meta["forward_bytes"])
        self.backward_sizes = _block_sizes(self.backward_offsets,
                                           meta["backward_bytes"])

    @classmethod
    def open(cls, directory: Path) -> "IndexBundle":
        directory = Path(directory)
        meta_path = directory / META_FILE
        try:
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            raise FileNotFoundError(f"no index bundle at {directory}") from None
        if meta.get("format_version") != FORMAT_VERSION:
            raise CorruptIndexError(
                f"unsupported format version {meta.get('format_version')}")
        bundle = cls(directory, meta)
        k = len(bundle.removal_order)
        if len(bundle.forward_offsets) != k or len(bundle.backward_offsets) != k:
            raise CorruptIndexError("offset tables disagree with removal order")
        if len(set(bundle.removal_order)) != k:
            raise CorruptIndexError("removal order contains duplicates")
        if set(bundle.removal_order) & bundle.core_set:
            raise CorruptIndexError("node is both archived and core")
        if k + len(bundle.core_nodes) != bundle.n:
            raise CorruptIndexError("archived plus core nodes do not cover graph")
        for name, key in ((FORWARD_FILE, "forward_bytes"),
                          (BACKWARD_FILE, "backward_bytes"),
                          (CORE_FILE, "core_bytes")):
            actual = os.path.getsize(directory / name)
            if actual != meta[key]:
                raise CorruptIndexError(
                    f"{name} is {actual} bytes, meta says {meta[key]}")
        return bundle

    # -- node lookups --------------------------------------------------------

    def is_core(self, node: int) -> bool:
        return node in self.core_set

    def rank(self, node: int) -> int:
        return self.ranks[node]

    def position_of(self, node: int) -> int | None:
        """Forward-file position of a non-core node (None for core nodes)."""
        return self.position_of_node.get(node)

    # -- scans ---------------------------------------------------------------

    def _reader(self, name: str, log: FetchLog | None,
                tracker: AllocationTracker | None) -> ChunkReader:
        return ChunkReader(self.directory / name, name, self.block_size,
                           log=log, tracker=tracker)

    def forward_cursor(self, log: FetchLog | None = None,
                       tracker: AllocationTracker | None = None) -> ForwardCursor:
        return ForwardCursor(self, self._reader(FORWARD_FILE, log, tracker))

    def scan_forward(self, from_position: int, log: FetchLog | None = None) -> Iterator[Block]:
        if not (0 <= from_position <= len(self.removal_order)):
            raise IndexError(f"forward position {from_position} out of range")
        cursor = self.forward_cursor(log)
        try:
            yield from cursor.scan_from(from_position)
        finally:
            cursor.close()

    def scan_backward_descending(self, log: FetchLog | None = None,
                                 tracker: AllocationTracker | None = None) -> Iterator[Block]:
        """Every backward block once, front to back (descending rank).

        Streams the file in block_size steps with a carry buffer no larger
        than one adjacency block, so fetches are one aligned pass.
        """
        reader = self._reader(BACKWARD_FILE, log, tracker)
        header_size = BLOCK_HEADER.size
        edge_size = EDGE_RECORD.size
        unpack_header = BLOCK_HEADER.unpack_from
        try:
            size = reader.size
            pos = 0
            buf = b""
            off = 0
            while True:
                avail = len(buf) - off
                if avail < header_size:
                    if pos >= size:
                        if avail:
                            raise CorruptIndexError("backward file truncated")
                        break
                    step = min(self.block_size, size - pos)
                    buf = buf[off:] + reader.read(pos, step)
                    pos += step
                    off = 0
                    continue
                node, count = unpack_header(buf, off)
                need = header_size + count * edge_size
                if avail < need:
                    if pos >= size:
                        raise CorruptIndexError("backward file truncated")
                    step = min(self.block_size, size - pos)
                    buf = buf[off:] + reader.read(pos, step)
                    pos += step
                    off = 0
                    continue
                edges = _parse_edges(buf[off + header_size:off + need])
                off += need
                yield Block(node, edges)
        finally:
            reader.close()

    def backward_ascending_cursor(self, log: FetchLog | None = None,
                                  tracker: AllocationTracker | None = None
                                  ) -> BackwardAscendingCursor:
        return BackwardAscendingCursor(self, self._reader(BACKWARD_FILE, log, tracker))

    def scan_backward_ascending_rank(self, log: FetchLog | None = None) -> Iterator[Block]:
        cursor = self.backward_ascending_cursor(log)
        try:
            yield from cursor.scan_all()
        finally:
            cursor.close()

    def load_core(self, log: FetchLog | None = None,
                  tracker: AllocationTracker | None = None) -> CoreGraph:
        """Read core.bin into memory, verifying its checksum on the way."""
        reader = self._reader(CORE_FILE, log, tracker)
        try:
            parts = []
            pos = 0
            while pos < reader.size:
                step = min(self.block_size, reader.size - pos)
                parts.append(reader.read(pos, step))
                pos += step
        finally:
            reader.close()
        data = b"".join(parts)
        if zlib.crc32(data) != self.meta["checksums"][CORE_FILE]:
            raise CorruptIndexError("core file checksum mismatch")

        out: dict[int, list[tuple[int, int, int, int]]] = {}
        inc: dict[int, list[tuple[int, int, int, int]]] = {}
        records = 0
        pos = 0
        while pos < len(data):
            node, n_out, n_in, _ = CORE_HEADER.unpack_from(data, pos)
            body_end = pos + CORE_HEADER.size + (n_out + n_in) * EDGE_RECORD.size
            if body_end > len(data):
                raise CorruptIndexError("core file truncated")
            rows = _parse_edges(data[pos + CORE_HEADER.size:body_end])
            out[node] = rows[:n_out]
            inc[node] = rows[n_out:]
            records += n_out + n_in
            pos = body_end
        if not out:
            raise CorruptIndexError("core graph is empty")
        core = CoreGraph(out=out, inc=inc, record_bytes=records * EDGE_RECORD.size)
        if tracker is not None:
            tracker.add(core.record_bytes)
        if core.record_bytes > self.memory_budget:
            raise CoreTooLargeError(core.record_bytes, self.memory_budget)
        return core

    # -- structural verification ---------------------------------------------

    def check_structure(self) -> list[str]:
        """Full invariant sweep over metadata and both files."""
        problems: list[str] = []
        k = len(self.removal_order)

        for name in (FORWARD_FILE, BACKWARD_FILE, CORE_FILE):
            actual = _file_crc(self.directory / name)
            if actual != self.meta["checksums"][name]:
                problems.append(f"{name}: checksum mismatch")

        last_rank = 0
        for position, node in enumerate(self.removal_order):
            r = self.ranks[node]
            if r <= 0:
                problems.append(f"archived node {node} has non-positive rank {r}")
            if r < last_rank:
                problems.append(
                    f"rank decreases along the forward file at position {position}")
            last_rank = r
        core_rank = 1 + max((self.ranks[v] for v in self.removal_order), default=0)
        for v in self.core_nodes:
            if self.ranks[v] != core_rank:
                problems.append(f"core node {v} has rank {self.ranks[v]}, "
                                f"expected {core_rank}")

        fwd_nodes = []
        for position, block in enumerate(self.scan_forward(0)):
            fwd_nodes.append(block.node)
            expected = self.removal_order[position]
            if block.node != expected:
                problems.append(f"forward block {position} holds node {block.node}, "
                                f"meta says {expected}")
            for endpoint, _length, _pred, _kind in block.edges:
                if self.ranks[endpoint] <= self.ranks[block.node]:
                    problems.append(
                        f"forward edge {block.node}->{endpoint} does not "
                        f"climb ranks")

        bwd_nodes = [b.node for b in self.scan_backward_descending()]
        if bwd_nodes != list(reversed(fwd_nodes)):
            problems.append("backward block order is not the exact reverse "
                            "of the forward order")
        for block in self.scan_backward_descending():
            for endpoint, _length, _pred, _kind in block.edges:
                if self.ranks[endpoint] <= self.ranks[block.node]:
                    problems.append(
                        f"backward edge {endpoint}->{block.node} does not "
                        f"come from a higher rank")

        try:
            core = self.load_core()
        except (CorruptIndexError, CoreTooLargeError) as exc:
            problems.append(str(exc))
        else:
            if core.nodes != self.core_set:
                problems.append("core file nodes disagree with metadata")
        return problems
