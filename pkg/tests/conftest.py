"""Shared fixtures: the worked 10-node graph, generators, build helpers."""
from __future__ import annotations

import io
import random

import pytest

from spindex import AdjacencyGraph, BuildConfig, build_index, load_edge_list

# Ten-node demo graph (names v1..v10 map to ids 0..9).  Reduction removes
# {v1,v2,v3} then {v4,v5,v6} then {v7,v8}, keeps {v9,v10} as the core, and
# creates exactly three shortcuts.  All expected values below were derived
# by hand and double-checked with the in-memory oracle.
DEMO_EDGES = [
    (0, 8, 1),  # v1 -> v9
    (3, 8, 1),  # v4 -> v9
    (3, 1, 1),  # v4 -> v2
    (4, 7, 1),  # v5 -> v8
    (4, 2, 1),  # v5 -> v3
    (5, 6, 1),  # v6 -> v7
    (5, 2, 1),  # v6 -> v3
    (6, 9, 1),  # v7 -> v10
    (6, 2, 1),  # v7 -> v3
    (7, 3, 1),  # v8 -> v4
    (7, 2, 1),  # v8 -> v3
    (8, 5, 1),  # v9 -> v6
    (9, 7, 1),  # v10 -> v8
    (9, 4, 1),  # v10 -> v5
    (9, 2, 1),  # v10 -> v3
    (9, 8, 3),  # v10 -> v9
]

#: Exact single-source distances from v1 (id 0).
DEMO_SSD_FROM_V1 = {8: 1, 5: 2, 6: 3, 9: 4, 7: 5, 4: 5, 3: 6, 1: 7}
DEMO_SSD_FULL = {0: 0, 2: 3, **DEMO_SSD_FROM_V1}

#: The exact shortcut set the build must create: (start, end) -> length.
DEMO_SHORTCUTS = {(7, 8): 2, (8, 6): 2, (8, 9): 3}

#: Rank per node id: removal iteration, core nodes one above the maximum.
DEMO_RANKS = [1, 1, 1, 2, 2, 2, 3, 3, 4, 4]

DEMO_CORE = [8, 9]

#: Removal order (ascending id inside each iteration).
DEMO_REMOVAL_ORDER = [0, 1, 2, 3, 4, 5, 6, 7]


def demo_edge_text() -> str:
    lines = [f"10 {len(DEMO_EDGES)}"]
    lines += [f"{u} {v} {w}" for u, v, w in DEMO_EDGES]
    return "\n".join(lines) + "\n"


def demo_graph() -> AdjacencyGraph:
    return load_edge_list(io.StringIO(demo_edge_text()))


def demo_config(**overrides) -> BuildConfig:
    """Termination tuned so the demo graph stops with the two-node core."""
    params = dict(memory_budget=200, block_size=64, min_shrink=0.99,
                  median_sample_size=10_000, rng_seed=7)
    params.update(overrides)
    return BuildConfig(**params)


def random_graph_text(n: int, m: int, max_len: int, seed: int,
                      ensure_cycle: bool = False) -> str:
    """Uniform random directed weighted edge list (dups collapse at load)."""
    rng = random.Random(seed)
    lines = []
    if ensure_cycle:
        for v in range(n):
            lines.append(f"{v} {(v + 1) % n} {rng.randint(1, max_len)}")
    while len(lines) < m:
        u, v = rng.randrange(n), rng.randrange(n)
        if u == v:
            continue
        lines.append(f"{u} {v} {rng.randint(1, max_len)}")
    return f"{n} {len(lines)}\n" + "\n".join(lines) + "\n"


def load_random_graph(n: int, m: int, max_len: int, seed: int,
                      ensure_cycle: bool = False) -> AdjacencyGraph:
    text = random_graph_text(n, m, max_len, seed, ensure_cycle)
    return load_edge_list(io.StringIO(text))


def torus_graph_text(rows: int, cols: int, max_len: int, seed: int) -> str:
    """4-regular directed torus with random lengths; contracts gracefully."""
    rng = random.Random(seed)
    n = rows * cols
    lines = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            right = r * cols + (c + 1) % cols
            down = ((r + 1) % rows) * cols + c
            lines.append(f"{v} {right} {rng.randint(1, max_len)}")
            lines.append(f"{right} {v} {rng.randint(1, max_len)}")
            lines.append(f"{v} {down} {rng.randint(1, max_len)}")
            lines.append(f"{down} {v} {rng.randint(1, max_len)}")
    return f"{n} {len(lines)}\n" + "\n".join(lines) + "\n"


def build_in(tmp_path, g: AdjacencyGraph, cfg: BuildConfig):
    return build_index(g, cfg, tmp_path / "idx")


@pytest.fixture
def demo_bundle(tmp_path):
    g = demo_graph()
    bundle, report = build_in(tmp_path, g, demo_config())
    return bundle, report
