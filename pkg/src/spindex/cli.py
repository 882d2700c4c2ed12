"""Command-line surface: build an index, query it, verify it, estimate closeness.

Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 verification
failure.  All results go to stdout, diagnostics to stderr; given identical
arguments, inputs and seeds the output is byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .graph import (
    UNREACHABLE,
    GraphFormatError,
    GraphValidationError,
    load_edge_list_path,
    validate_graph,
)
from .oracle import approx_closeness, verify_bundle
from .preprocess import BuildConfig, CoreTooLargeError, build_index
from .query import ppd_query, ssd_query, sssp_query
from .store import CorruptIndexError, IndexBundle

_SUFFIXES = {"KiB": 1 << 10, "MiB": 1 << 20, "GiB": 1 << 30}


def parse_memory(text: str) -> int:
    """Parse a byte count with an optional KiB/MiB/GiB suffix."""
    s = text.strip()
    for suffix, scale in _SUFFIXES.items():
        if s.endswith(suffix):
            return int(s[: -len(suffix)].strip()) * scale
    return int(s)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="spindex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add_graph_flags(p):
        p.add_argument("-i", "--input", required=True, help="edge-list file")
        p.add_argument("--undirected", action="store_true",
                       help="treat input edges as bidirectional")
        p.add_argument("--unweighted", action="store_true",
                       help="edges have no weight column; all lengths are 1")

    p = sub.add_parser("build", help="build an index bundle from an edge list")
    add_graph_flags(p)
    p.add_argument("-o", "--output", required=True, help="bundle directory")
    p.add_argument("--memory", default="64MiB", type=parse_memory,
                   help="memory budget (bytes, KiB/MiB/GiB suffix allowed)")
    p.add_argument("--block-size", default="64KiB", type=parse_memory)
    p.add_argument("--baseline-factor", type=int, default=5,
                   help="witness edges sampled per candidate shortcut")
    p.add_argument("--median-sample", type=int, default=10_000)
    p.add_argument("--min-shrink", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    for name in ("ssd", "sssp"):
        p = sub.add_parser(name, help=f"run a {name} query")
        p.add_argument("-x", "--index", required=True)
        p.add_argument("-s", "--source", type=int)
        if name == "ssd":
            p.add_argument("--batch", help="file with one source id per line")

    p = sub.add_parser("ppd", help="point-to-point distance")
    p.add_argument("-x", "--index", required=True)
    p.add_argument("-s", "--source", type=int)
    p.add_argument("-t", "--target", type=int)
    p.add_argument("--batch", help="file with 's t' pairs, one per line")

    p = sub.add_parser("closeness", help="sampled closeness estimates as CSV")
    p.add_argument("-x", "--index", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="check a bundle against its source graph")
    add_graph_flags(p)
    p.add_argument("-x", "--index", required=True)
    p.add_argument("--sources", type=int, default=10,
                   help="sampled sources/pairs for oracle comparison")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="print bundle metadata and file sizes")
    p.add_argument("-x", "--index", required=True)
    return parser


def _load_graph(args):
    return load_edge_list_path(args.input, directed=not args.undirected,
                               weighted=not args.unweighted)


def _dense_lookup(bundle: IndexBundle) -> dict[int, int]:
    remap = bundle.meta.get("remap")
    if remap is None:
        return {}
    return {orig: dense for dense, orig in enumerate(remap)}


def _to_original(bundle: IndexBundle, node: int) -> int:
    remap = bundle.meta.get("remap")
    return node if remap is None else remap[node]


def _fmt_dist(d: int) -> str:
    return "INF" if d == UNREACHABLE else str(d)


def _resolve(bundle: IndexBundle, node: int | None, what: str) -> int:
    if node is None:
        raise KeyError(f"missing {what} node id")
    lookup = _dense_lookup(bundle)
    if lookup:
        if node not in lookup:
            raise KeyError(f"unknown node id {node}")
        return lookup[node]
    return node


def _cmd_build(args) -> int:
    g = _load_graph(args)
    report = validate_graph(g)
    if not report.ok:
        for v in report.violations[:10]:
            print(f"invalid graph: {v}", file=sys.stderr)
        return 2
    cfg = BuildConfig(
        memory_budget=args.memory,
        block_size=args.block_size,
        baseline_factor=args.baseline_factor,
        median_sample_size=args.median_sample,
        min_shrink=args.min_shrink,
        rng_seed=args.seed,
    )
    build_index(g, cfg, Path(args.output), stats_stream=sys.stdout)
    return 0


def _cmd_ssd(args, want_preds: bool) -> int:
    bundle = IndexBundle.open(Path(args.index))
    if getattr(args, "batch", None):
        with open(args.batch, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                s = _resolve(bundle, int(line.split()[0]), "source")
                res = ssd_query(bundle, s)
                row = " ".join(_fmt_dist(d) for d in res.distances)
                print(f"{line.split()[0]} {row}")
        return 0
    s = _resolve(bundle, args.source, "source")
    if want_preds:
        res = sssp_query(bundle, s)
        for v in range(bundle.n):
            d = res.distances[v]
            name = _to_original(bundle, v)
            if d == UNREACHABLE:
                print(f"{name} INF")
            else:
                p = res.predecessors[v]
                p_name = "-" if p is None else _to_original(bundle, p)
                print(f"{name} {d} {p_name}")
    else:
        res = ssd_query(bundle, s)
        for v in range(bundle.n):
            print(f"{_to_original(bundle, v)} {_fmt_dist(res.distances[v])}")
    return 0


def _cmd_ppd(args) -> int:
    bundle = IndexBundle.open(Path(args.index))
    if args.batch:
        with open(args.batch, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                raw_s, raw_t = line.split()[:2]
                s = _resolve(bundle, int(raw_s), "source")
                t = _resolve(bundle, int(raw_t), "target")
                print(f"{raw_s} {raw_t} {_fmt_dist(ppd_query(bundle, s, t))}")
        return 0
    s = _resolve(bundle, args.source, "source")
    t = _resolve(bundle, args.target, "target")
    print(_fmt_dist(ppd_query(bundle, s, t)))
    return 0


def _cmd_closeness(args) -> int:
    bundle = IndexBundle.open(Path(args.index))
    est = approx_closeness(bundle, args.eps, args.seed)
    print(f"# k={est.k}", file=sys.stderr)
    print("node,estimate")
    for v, value in enumerate(est.closeness):
        print(f"{_to_original(bundle, v)},{value:.12g}")
    return 0


def _cmd_verify(args) -> int:
    g = _load_graph(args)
    bundle = IndexBundle.open(Path(args.index))
    report = verify_bundle(g, bundle, sample_sources=args.sources,
                           seed=args.seed)
    print(report.to_json())
    return 0 if report.ok else 3


def _cmd_stats(args) -> int:
    bundle = IndexBundle.open(Path(args.index))
    meta = bundle.meta
    summary = {
        "n": meta["n"],
        "format_version": meta["format_version"],
        "archived_nodes": len(meta["removal_order"]),
        "core_nodes": len(meta["core_nodes"]),
        "iterations": max((meta["ranks"][v] for v in meta["removal_order"]),
                          default=0),
        "core_rank": max(meta["ranks"]) if meta["ranks"] else 0,
        "forward_bytes": meta["forward_bytes"],
        "backward_bytes": meta["backward_bytes"],
        "core_bytes": meta["core_bytes"],
        "core_record_bytes": meta["core_record_bytes"],
        "max_edge_length": meta["max_edge_length"],
        "config": meta["config"],
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "build":
            return _cmd_build(args)
        if args.command == "ssd":
            return _cmd_ssd(args, want_preds=False)
        if args.command == "sssp":
            return _cmd_ssd(args, want_preds=True)
        if args.command == "ppd":
            return _cmd_ppd(args)
        if args.command == "closeness":
            return _cmd_closeness(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "stats":
            return _cmd_stats(args)
        parser.error(f"unknown command {args.command}")
        return 1
    except (GraphFormatError, GraphValidationError, CorruptIndexError,
            CoreTooLargeError, KeyError, FileNotFoundError, IndexError,
            OSError, ValueError) as exc:
        print(f"spindex: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
