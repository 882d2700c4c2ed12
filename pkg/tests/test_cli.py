import hashlib
import io
import json
from contextlib import redirect_stderr, redirect_stdout

import pytest

from spindex.cli import main, parse_memory

from conftest import demo_edge_text, random_graph_text, DEMO_SSD_FULL


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def graph_file(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text(demo_edge_text())
    return path


@pytest.fixture
def built_index(tmp_path, graph_file):
    idx = tmp_path / "idx"
    code, out, err = run_cli("build", "-i", str(graph_file), "-o", str(idx),
                             "--memory", "200", "--block-size", "64",
                             "--min-shrink", "0.99", "--seed", "7")
    assert code == 0, err
    return idx


class TestParseMemory:
    def test_plain_bytes(self):
        assert parse_memory("4096") == 4096

    def test_suffixes(self):
        assert parse_memory("64KiB") == 64 * 1024
        assert parse_memory("64MiB") == 64 * 1024 * 1024
        assert parse_memory("2GiB") == 2 * 1024 ** 3

    def test_garbage_rejected(self):
        with pytest.raises(ValueError):
            parse_memory("lots")


class TestBuild:
    def test_build_emits_stats_lines(self, tmp_path, graph_file):
        idx = tmp_path / "idx"
        code, out, _ = run_cli("build", "-i", str(graph_file), "-o", str(idx),
                               "--memory", "200", "--block-size", "64",
                               "--min-shrink", "0.99", "--seed", "7")
        assert code == 0
        lines = [json.loads(line) for line in out.splitlines()]
        assert [rec["iteration"] for rec in lines] == [1, 2, 3]
        assert (idx / "forward.bin").exists()
        assert (idx / "meta.json").exists()

    def test_build_rejects_bad_graph(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("2 1\n0 1 -3\n")
        code, _, err = run_cli("build", "-i", str(bad), "-o",
                               str(tmp_path / "idx"))
        assert code == 2
        assert "error" in err

    def test_missing_input_is_data_error(self, tmp_path):
        code, _, err = run_cli("build", "-i", str(tmp_path / "nope.txt"),
                               "-o", str(tmp_path / "idx"))
        assert code == 2

    def test_usage_error_exit_code(self):
        code, _, _ = run_cli("build")  # missing required flags
        assert code == 1

    def test_unknown_subcommand(self):
        code, _, _ = run_cli("frobnicate")
        assert code == 1


class TestQueries:
    def test_ssd_output(self, built_index):
        code, out, _ = run_cli("ssd", "-x", str(built_index), "-s", "0")
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 10
        got = {}
        for line in lines:
            node, dist = line.split()
            if dist != "INF":
                got[int(node)] = int(dist)
        assert got == DEMO_SSD_FULL

    def test_ssd_unreachable_prints_inf(self, built_index):
        code, out, _ = run_cli("ssd", "-x", str(built_index), "-s", "1")
        rows = dict(line.split() for line in out.splitlines())
        assert rows["0"] == "INF"
        assert rows["1"] == "0"

    def test_sssp_output_includes_predecessors(self, built_index):
        code, out, _ = run_cli("sssp", "-x", str(built_index), "-s", "0")
        assert code == 0
        rows = {line.split()[0]: line.split()[1:] for line in out.splitlines()}
        assert rows["6"] == ["3", "5"]  # dist 3 via erased middle node v6
        assert rows["0"] == ["0", "-"]

    def test_ppd_single_pair(self, built_index):
        code, out, _ = run_cli("ppd", "-x", str(built_index),
                               "-s", "0", "-t", "9")
        assert code == 0
        assert out.strip() == "4"

    def test_ppd_unreachable(self, built_index):
        code, out, _ = run_cli("ppd", "-x", str(built_index),
                               "-s", "1", "-t", "0")
        assert out.strip() == "INF"

    def test_ppd_batch(self, built_index, tmp_path):
        batch = tmp_path / "pairs.txt"
        batch.write_text("0 9\n0 5\n1 0\n")
        code, out, _ = run_cli("ppd", "-x", str(built_index),
                               "--batch", str(batch))
        assert code == 0
        assert out.splitlines() == ["0 9 4", "0 5 2", "1 0 INF"]

    def test_ssd_batch_one_line_per_source(self, built_index, tmp_path):
        batch = tmp_path / "sources.txt"
        batch.write_text("0\n1\n")
        code, out, _ = run_cli("ssd", "-x", str(built_index),
                               "--batch", str(batch))
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("0 ")
        assert len(lines[0].split()) == 11  # source + one entry per node

    def test_unknown_node_is_data_error(self, built_index):
        code, _, err = run_cli("ssd", "-x", str(built_index), "-s", "99")
        assert code == 2

    def test_missing_index_is_data_error(self, tmp_path):
        code, _, _ = run_cli("ssd", "-x", str(tmp_path / "missing"), "-s", "0")
        assert code == 2


class TestVerifyAndStats:
    def test_verify_clean_exit_zero(self, built_index, graph_file):
        code, out, _ = run_cli("verify", "-i", str(graph_file),
                               "-x", str(built_index), "--sources", "5")
        assert code == 0
        assert json.loads(out)["ok"] is True

    def test_verify_detects_wrong_graph(self, built_index, tmp_path):
        other = tmp_path / "other.txt"
        other.write_text(random_graph_text(10, 30, 9, seed=3))
        code, out, _ = run_cli("verify", "-i", str(other),
                               "-x", str(built_index), "--sources", "5")
        assert code == 3
        assert json.loads(out)["ok"] is False

    def test_stats_summary(self, built_index):
        code, out, _ = run_cli("stats", "-x", str(built_index))
        assert code == 0
        summary = json.loads(out)
        assert summary["n"] == 10
        assert summary["core_nodes"] == 2
        assert summary["iterations"] == 3
        assert summary["core_rank"] == 4

    def test_closeness_csv(self, built_index):
        code, out, _ = run_cli("closeness", "-x", str(built_index),
                               "--eps", "0.5", "--seed", "1")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "node,estimate"
        assert len(lines) == 11


class TestRemappedIds:
    def test_sparse_ids_round_trip_through_cli(self, tmp_path):
        graph = tmp_path / "g.txt"
        graph.write_text("3 2\n10 20 5\n20 30 7\n")
        idx = tmp_path / "idx"
        code, _, err = run_cli("build", "-i", str(graph), "-o", str(idx),
                               "--memory", "4KiB", "--block-size", "256")
        assert code == 0, err
        code, out, _ = run_cli("ssd", "-x", str(idx), "-s", "10")
        assert code == 0
        rows = dict(line.split() for line in out.splitlines())
        assert rows == {"10": "0", "20": "5", "30": "12"}
        code, out, _ = run_cli("ppd", "-x", str(idx), "-s", "10", "-t", "30")
        assert out.strip() == "12"
        # an id outside the remap table is a data error
        code, _, _ = run_cli("ssd", "-x", str(idx), "-s", "11")
        assert code == 2


class TestDeterminism:
    def test_same_argv_same_bytes(self, tmp_path):
        graph = tmp_path / "g.txt"
        graph.write_text(random_graph_text(60, 240, 30, seed=2))
        digests = []
        outputs = []
        for attempt in range(2):
            idx = tmp_path / f"idx{attempt}"
            code, out, _ = run_cli("build", "-i", str(graph), "-o", str(idx),
                                   "--memory", "16KiB", "--block-size", "1KiB",
                                   "--seed", "5")
            assert code == 0
            outputs.append(out)
            h = hashlib.sha256()
            for name in ("forward.bin", "backward.bin", "core.bin", "meta.json"):
                h.update((idx / name).read_bytes())
            digests.append(h.hexdigest())
        assert digests[0] == digests[1]
        assert outputs[0] == outputs[1]

        results = []
        for attempt in range(2):
            code, out, _ = run_cli("closeness", "-x", str(tmp_path / "idx0"),
                                   "--eps", "0.3", "--seed", "9")
            assert code == 0
            results.append(out)
        assert results[0] == results[1]
