import random

import pytest

from spindex import (
    UNREACHABLE,
    BuildConfig,
    QueryStats,
    dijkstra_oracle,
    ppd_query,
    ssd_query,
    sssp_query,
)
from spindex.query import (
    PHASE_BACKWARD,
    PHASE_BACKWARD_ASC,
    PHASE_BIDI,
    PHASE_CORE,
    PHASE_FORWARD,
    core_search,
    forward_search,
    ppd_backward,
)
from spindex.store import BACKWARD_FILE, CORE_FILE, FORWARD_FILE

from conftest import (
    DEMO_SSD_FULL,
    build_in,
    demo_config,
    demo_graph,
    load_random_graph,
)


def original_edge_lengths(g):
    lengths = {}
    for v in range(g.n):
        for t in g.out[v]:
            lengths[(v, t.b)] = t.length
    return lengths


class TestDemoQueries:
    def test_ssd_from_v1_exact(self, demo_bundle):
        bundle, _ = demo_bundle
        res = ssd_query(bundle, 0)
        got = {v: d for v, d in enumerate(res.distances) if d != UNREACHABLE}
        assert got == DEMO_SSD_FULL

    def test_forward_phase_reaches_core_gate(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        dist = [UNREACHABLE] * bundle.n
        dist[0] = 0
        forward_search(bundle, 0, dist, None, stats)
        assert dist[8] == 1  # v9 reached over the only climbing edge
        assert dist[9] == UNREACHABLE  # v10 needs the core phase

    def test_core_phase_settles_core_distances(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        dist = [UNREACHABLE] * bundle.n
        dist[0] = 0
        forward_search(bundle, 0, dist, None, stats)
        core_search(bundle.load_core(), dist, None, stats)
        assert dist[8] == 1 and dist[9] == 4

    def test_source_with_no_climbing_edges(self, demo_bundle):
        bundle, _ = demo_bundle
        # v2 (id 1) has no outgoing edges at all
        res = ssd_query(bundle, 1)
        assert res.distances[1] == 0
        assert all(d == UNREACHABLE for v, d in enumerate(res.distances)
                   if v != 1)

    def test_sssp_predecessor_via_shortcut(self, demo_bundle):
        bundle, _ = demo_bundle
        res = sssp_query(bundle, 0)
        # the shortcut v9 -> v7 carries the erased middle node v6
        assert res.predecessors[6] == 5
        # original edge relaxation names the edge's start
        assert res.predecessors[8] == 0
        assert res.predecessors[1] == 3

    def test_ppd_demo_pair(self, demo_bundle):
        bundle, _ = demo_bundle
        assert ppd_query(bundle, 0, 9) == 4

    def test_ppd_source_equals_target(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        assert ppd_query(bundle, 0, 0, stats=stats) == 0
        assert stats.settles.get(PHASE_BIDI, 0) == 0

    def test_ppd_backward_seeds_target_side(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        dist_b = [UNREACHABLE] * bundle.n
        dist_b[6] = 0  # v7
        ppd_backward(bundle, 6, dist_b, stats)
        assert dist_b[8] == 2  # via the v9 -> v7 shortcut

    def test_unknown_node_rejected(self, demo_bundle):
        bundle, _ = demo_bundle
        with pytest.raises(KeyError):
            ssd_query(bundle, 10)
        with pytest.raises(KeyError):
            ppd_query(bundle, 0, -1)


class TestDegenerateCases:
    def test_core_resident_source_skips_forward(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        res = ssd_query(bundle, 8, stats=stats)  # v9 is core
        assert PHASE_FORWARD not in stats.phases
        want = dijkstra_oracle(demo_graph(), 8).distances
        assert res.distances == want

    def test_ppd_core_endpoints_skip_file_phases(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        got = ppd_query(bundle, 8, 9, stats=stats)
        assert PHASE_FORWARD not in stats.phases
        assert PHASE_BACKWARD_ASC not in stats.phases
        assert got == dijkstra_oracle(demo_graph(), 8).distances[9]

    def test_ppd_core_target_skips_backward_phase(self, demo_bundle):
        bundle, _ = demo_bundle
        stats = QueryStats()
        got = ppd_query(bundle, 0, 9, stats=stats)
        assert PHASE_BACKWARD_ASC not in stats.phases
        assert got == 4

    def test_isolated_source(self, tmp_path):
        import io
        from spindex import load_edge_list
        g = load_edge_list(io.StringIO("4 2\n1 2 3\n2 3 1\n"))
        bundle, _ = build_in(tmp_path, g, demo_config(memory_budget=200))
        res = ssd_query(bundle, 0)
        assert res.distances[0] == 0
        assert all(d == UNREACHABLE for v, d in enumerate(res.distances) if v)

    def test_unreachable_pair_is_inf(self, demo_bundle):
        bundle, _ = demo_bundle
        # v2 (id 1) has no outgoing edges, so nothing is reachable from it
        assert ppd_query(bundle, 1, 0) == UNREACHABLE

    def test_single_node_graph_query(self, tmp_path):
        import io
        from spindex import load_edge_list
        g = load_edge_list(io.StringIO("1 0\n"))
        bundle, _ = build_in(tmp_path, g, demo_config())
        res = ssd_query(bundle, 0)
        assert res.distances == [0]
        assert ppd_query(bundle, 0, 0) == 0


class TestOracleEquivalence:
    def test_ssd_every_source_matches_oracle(self, tmp_path):
        for seed in range(3):
            g = load_random_graph(120, 500, 40, seed=seed)
            orig = g.copy()
            bundle, _ = build_in(
                tmp_path.joinpath(str(seed)), g,
                BuildConfig(memory_budget=24 * 1024, block_size=1024,
                            rng_seed=seed))
            for s in range(orig.n):
                assert ssd_query(bundle, s).distances == \
                    dijkstra_oracle(orig, s).distances

    def test_forward_distances_are_upper_bounds(self, tmp_path):
        g = load_random_graph(100, 450, 20, seed=11)
        orig = g.copy()
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=16 * 1024,
                                         block_size=1024, rng_seed=11))
        for s in list(range(0, 100, 7)):
            if bundle.is_core(s):
                continue
            stats = QueryStats()
            dist = [UNREACHABLE] * bundle.n
            dist[s] = 0
            forward_search(bundle, s, dist, None, stats)
            want = dijkstra_oracle(orig, s).distances
            for v in range(bundle.n):
                if dist[v] != UNREACHABLE:
                    assert dist[v] >= want[v]

    def test_backward_half_search_gives_upper_bounds(self, tmp_path):
        g = load_random_graph(100, 450, 20, seed=12)
        orig = g.copy()
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=16 * 1024,
                                         block_size=1024, rng_seed=12))
        into_target = {}
        for s in range(orig.n):
            row = dijkstra_oracle(orig, s).distances
            for t in range(orig.n):
                into_target.setdefault(t, {})[s] = row[t]
        for t in range(0, 100, 9):
            if bundle.is_core(t):
                continue
            stats = QueryStats()
            dist_b = [UNREACHABLE] * bundle.n
            dist_b[t] = 0
            ppd_backward(bundle, t, dist_b, stats)
            for v in range(bundle.n):
                if dist_b[v] != UNREACHABLE:
                    assert dist_b[v] >= into_target[t][v]

    def test_ppd_random_pairs_match_oracle(self, tmp_path):
        rng = random.Random(123)
        for seed in range(3):
            g = load_random_graph(120, 480, 30, seed=seed + 50)
            orig = g.copy()
            bundle, _ = build_in(
                tmp_path.joinpath(str(seed)), g,
                BuildConfig(memory_budget=24 * 1024, block_size=1024,
                            rng_seed=seed))
            for _ in range(80):
                s, t = rng.randrange(orig.n), rng.randrange(orig.n)
                assert ppd_query(bundle, s, t) == \
                    dijkstra_oracle(orig, s).distances[t]

    def test_sssp_paths_rebuild_original_distances(self, tmp_path):
        g = load_random_graph(110, 470, 25, seed=77)
        orig = g.copy()
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=24 * 1024,
                                         block_size=1024, rng_seed=77))
        lengths = original_edge_lengths(orig)
        for s in range(0, 110, 5):
            res = sssp_query(bundle, s)
            want = dijkstra_oracle(orig, s).distances
            assert res.distances == want
            for v in range(orig.n):
                if v == s or res.distances[v] == UNREACHABLE:
                    continue
                cur, total, hops = v, 0, 0
                while cur != s:
                    p = res.predecessors[cur]
                    assert p is not None
                    assert (p, cur) in lengths
                    total += lengths[(p, cur)]
                    cur = p
                    hops += 1
                    assert hops <= orig.n
                assert total == want[v]


class TestScanDiscipline:
    def test_ssd_reads_each_file_once_with_monotone_offsets(self, tmp_path):
        g = load_random_graph(150, 700, 15, seed=21)
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=32 * 1024,
                                         block_size=2048, rng_seed=21))
        source = next(v for v in range(bundle.n) if not bundle.is_core(v))
        stats = QueryStats()
        ssd_query(bundle, source, stats=stats)
        for name in (FORWARD_FILE, BACKWARD_FILE, CORE_FILE):
            size = {FORWARD_FILE: bundle.meta["forward_bytes"],
                    BACKWARD_FILE: bundle.meta["backward_bytes"],
                    CORE_FILE: bundle.meta["core_bytes"]}[name]
            limit = -(-size // bundle.block_size)
            assert stats.fetch_log.count(name) <= max(limit, 0)
            offsets = stats.fetch_log.offsets(name)
            assert offsets == sorted(offsets)
            assert len(set(offsets)) == len(offsets)

    def test_ssd_backward_phase_uses_no_heap(self, tmp_path):
        g = load_random_graph(120, 480, 15, seed=22)
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=24 * 1024,
                                         block_size=1024, rng_seed=22))
        stats = QueryStats()
        ssd_query(bundle, 0, stats=stats)
        assert stats.heap_ops(PHASE_BACKWARD) == 0

    def test_position_keyed_queues_push_each_node_once(self, tmp_path):
        g = load_random_graph(120, 480, 15, seed=23)
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=24 * 1024,
                                         block_size=1024, rng_seed=23))
        for s in range(0, 120, 11):
            if bundle.is_core(s):
                continue
            stats = QueryStats()
            ssd_query(bundle, s, stats=stats)
            assert stats.heap_pushes[PHASE_FORWARD] == \
                stats.heap_pops[PHASE_FORWARD]
            assert stats.heap_pushes[PHASE_FORWARD] <= \
                len(bundle.removal_order)
            # every settle is unique: pops == settles for a static key queue
            assert stats.settles[PHASE_FORWARD] == \
                stats.heap_pops[PHASE_FORWARD]

    def test_core_search_settles_each_node_at_most_once(self, tmp_path):
        g = load_random_graph(120, 480, 15, seed=24)
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=24 * 1024,
                                         block_size=1024, rng_seed=24))
        stats = QueryStats()
        ssd_query(bundle, 0, stats=stats)
        assert stats.settles[PHASE_CORE] <= bundle.n


class TestBidirectionalTermination:
    def test_bound_never_increases_and_matches_oracle(self, tmp_path):
        g = load_random_graph(90, 400, 12, seed=31)
        orig = g.copy()
        bundle, _ = build_in(tmp_path, g,
                             BuildConfig(memory_budget=16 * 1024,
                                         block_size=1024, rng_seed=31))
        rng = random.Random(5)
        for _ in range(50):
            s, t = rng.randrange(90), rng.randrange(90)
            got = ppd_query(bundle, s, t)
            assert got == dijkstra_oracle(orig, s).distances[t]
