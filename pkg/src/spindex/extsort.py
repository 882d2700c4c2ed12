"""External merge sort for edge-triplet streams under a byte budget.

Runs hold fixed-width binary records packed big-endian with fields in
comparator order (owner, endpoint, sign, length, kind, pred hint), so raw
24-byte records compare as bytes exactly like the comparator: sorting and
k-way merging never unpack a record.  The comparator orders triplets by
owning node, then other endpoint, then outgoing before incoming, then
shorter length first, then original over baseline over candidate, then pred
hint, which makes the order total and the sort deterministic.
"""
from __future__ import annotations

import heapq
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .graph import EdgeTriplet

RECORD = struct.Struct(">IIBQBI2x")  # a, b, sign, length, kind, pred_hint
RECORD_WIDTH = RECORD.size  # 24 bytes

DEFAULT_BLOCK_SIZE = 64 * 1024

_READ_SPAN = RECORD_WIDTH * 4096


def sort_key(t: EdgeTriplet) -> tuple[int, int, int, int, int, int]:
    return (t.a, t.b, t.sign, t.length, t.kind, t.pred_hint)


def triplet_compare(t1: EdgeTriplet, t2: EdgeTriplet) -> int:
    """Total order over triplets: -1, 0 or 1."""
    k1, k2 = sort_key(t1), sort_key(t2)
    if k1 < k2:
        return -1
    if k1 > k2:
        return 1
    return 0


def pack_triplet(t: EdgeTriplet) -> bytes:
    return RECORD.pack(t.a, t.b, t.sign, t.length, t.kind, t.pred_hint)


def unpack_triplet(raw: bytes, offset: int = 0) -> EdgeTriplet:
    a, b, sign, length, kind, pred_hint = RECORD.unpack_from(raw, offset)
    return EdgeTriplet(a, b, length, sign, kind, pred_hint)


def _iter_raw(path: Path) -> Iterator[bytes]:
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_READ_SPAN)
            if not chunk:
                break
            if len(chunk) % RECORD_WIDTH:
                raise IOError(f"{path}: truncated record (size not a multiple "
                              f"of {RECORD_WIDTH})")
            for off in range(0, len(chunk), RECORD_WIDTH):
                yield chunk[off:off + RECORD_WIDTH]


def read_run_file(path: Path) -> Iterator[EdgeTriplet]:
    for raw in _iter_raw(path):
        yield unpack_triplet(raw)


@dataclass
class TripletRun:
    """A sorted on-disk sequence of triplet records."""

    path: Path
    count: int
    runs_created: int = 1
    merge_passes: int = 0

    def __iter__(self) -> Iterator[EdgeTriplet]:
        return read_run_file(self.path)

    def iter_raw(self) -> Iterator[bytes]:
        return _iter_raw(self.path)

    def unlink(self) -> None:
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


def _merge_files(sources: list[Path], dest: Path) -> None:
    with open(dest, "wb") as fh:
        for raw in heapq.merge(*(_iter_raw(p) for p in sources)):
            fh.write(raw)


def external_sort(records: Iterable[EdgeTriplet], memory_budget: int,
                  tmp_dir: Path, block_size: int = DEFAULT_BLOCK_SIZE) -> TripletRun:
    """Sort a triplet stream holding at most ``memory_budget`` record bytes at once.

    Sorted runs of at most budget size are written to ``tmp_dir`` and merged
    with a fan-in of ``max(2, memory_budget // block_size - 1)``; the final
    output file is left in ``tmp_dir`` and described by the returned run.
    """
    if memory_budget < RECORD_WIDTH:
        raise ValueError(f"memory budget {memory_budget} below one record "
                         f"({RECORD_WIDTH} bytes)")
    tmp_dir = Path(tmp_dir)
    per_run = max(1, memory_budget // RECORD_WIDTH)
    fan_in = max(2, memory_budget // block_size - 1)

    pack = RECORD.pack
    runs: list[Path] = []
    buf: list[bytes] = []
    total = 0

    def flush() -> None:
        buf.sort()  # byte order == comparator order by record layout
        path = tmp_dir / f"run-{len(runs):06d}.bin"
        try:
            with open(path, "wb") as fh:
                fh.write(b"".join(buf))
        except OSError as exc:
            raise IOError(f"external sort failed writing {path}: {exc}") from exc
        runs.append(path)
        buf.clear()

    for t in records:
        buf.append(pack(t.a, t.b, t.sign, t.length, t.kind, t.pred_hint))
        total += 1
        if len(buf) >= per_run:
            flush()
    if buf or not runs:
        flush()

    runs_created = len(runs)
    merge_passes = 0
    generation = 0
    while len(runs) > 1:
        merge_passes += 1
        generation += 1
        merged: list[Path] = []
        for start in range(0, len(runs), fan_in):
            group = runs[start:start + fan_in]
            if len(group) == 1:
                merged.append(group[0])
                continue
            dest = tmp_dir / f"merge-{generation:03d}-{len(merged):06d}.bin"
            try:
                _merge_files(group, dest)
            except OSError as exc:
                raise IOError(f"external sort failed merging into {dest}: {exc}") from exc
            for p in group:
                os.unlink(p)
            merged.append(dest)
        runs = merged

    return TripletRun(path=runs[0], count=total, runs_created=runs_created,
                      merge_passes=merge_passes)
