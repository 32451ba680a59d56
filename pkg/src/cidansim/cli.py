"""Command-line front end: ``cidansim <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .backends import BackendKind
from .config import ConfigError, load_config
from .dram import check_trace, read_trace_csv, write_trace_csv
from .isa import parse_length
from .report import emit_report, format_table, ratios_from_traces, reference_checks

RATIO_COLUMNS = [
    ("latency_ratio", "latency (CIDAN=1)", ".3f"),
    ("energy_ratio", "energy (CIDAN=1)", ".3f"),
]


def _backends(text: str) -> tuple:
    names = tuple(BackendKind.parse(b).value for b in text.split(",") if b.strip())
    if not names:
        raise argparse.ArgumentTypeError("no backend given")
    return names


def _size(text: str) -> int:
    try:
        return parse_length(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cidansim", description=__doc__)
    p.add_argument("--config", help="TOML config file (default: packaged defaults)")
    p.add_argument("--out", help="directory for JSON/CSV output (default: config output_dir)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--no-write", action="store_true", help="print only, write no files")
    sub = p.add_subparsers(dest="cmd", required=True)

    mb = sub.add_parser("microbench", help="bulk bitwise op over a vector")
    mb.add_argument("--op", default="and")
    mb.add_argument("--size", type=_size, default="4Mb", help="vector size, e.g. 1Mb, 2Mb, 4Mb")
    mb.add_argument("--backends", type=_backends, help="comma list (default: config backends)")
    mb.add_argument("--trace-dir", help="also write one command trace CSV per backend")

    aes = sub.add_parser("aes", help="bit-sliced AES with PIM AddRoundKey/MixColumns")
    aes.add_argument("--blocks", type=int, default=8192)
    aes.add_argument("--key-bits", type=int, choices=(128, 192, 256), default=128)
    aes.add_argument("--backends", type=_backends, help="comma list (default: config backends)")
    aes.add_argument("--host-profile", default="aes")
    aes.add_argument("--key", help="key as hex (16, 24 or 32 bytes); encrypts --plaintext instead of a random batch")
    aes.add_argument("--plaintext", help="one or more 16-byte blocks as hex")

    gr = sub.add_parser("graph", help="matching index over sampled vertex pairs")
    gr.add_argument("--dataset", default="facebook",
                    help="facebook, dblp, amazon (synthetic, same size) or an edge-list file")
    gr.add_argument("--pairs", type=int, default=32)
    gr.add_argument("--backends", type=_backends, help="comma list (default: config backends)")
    gr.add_argument("--host-profile", default="zero")

    dna = sub.add_parser("dna", help="Myers bit-vector read mapping")
    dna.add_argument("--problems", type=int, default=128)
    dna.add_argument("--pattern-len", type=int, default=64)
    dna.add_argument("--text-len", type=int, default=256)
    dna.add_argument("--patterns", help="file with one pattern per line")
    dna.add_argument("--texts", help="file with one text per line (paired with --patterns)")
    dna.add_argument("--mode", choices=("search", "global"), default="search")
    dna.add_argument("--add-mode", choices=("host", "pim"), default="host")
    dna.add_argument("--backends", type=_backends, help="comma list (default: config backends)")
    dna.add_argument("--host-profile", default="zero")

    cmp_ = sub.add_parser("compare", help="re-run experiments and compare to reference values")
    cmp_.add_argument("--against", choices=("reference",), default="reference")
    cmp_.add_argument("--quick", action="store_true", help="smaller workloads")

    ct = sub.add_parser("check-trace", help="verify timing rules on a trace CSV")
    ct.add_argument("trace")
    return p


def _write(args, cfg, name, results):
    if args.no_write:
        return
    out = args.out or cfg.output_dir
    for path in emit_report(results, out, name, cfg):
        print(f"wrote {path}")


def cmd_microbench(args, cfg) -> int:
    from .workloads.microbench import MicrobenchSpec, run_microbench
    kw = dict(geometry=cfg.geometry, timing=cfg.timing, energy=cfg.energy, seed=cfg.seed)
    runs = {}
    for be in ("cidan", *[b for b in args.backends if b != "cidan"]):
        runs[be] = run_microbench(MicrobenchSpec(args.op, args.size, be), **kw)
    base = runs["cidan"].stats
    table = {be: {
        "latency_ns": r.stats.latency_ns,
        "energy_pj": r.stats.energy_pj,
        "throughput_gops": r.throughput_gops,
        "latency_ratio": r.stats.latency_ns / base.latency_ns,
        "energy_ratio": r.stats.energy_pj / base.energy_pj,
        "macro_counts": dict(r.stats.macro_counts),
        "verified": r.verified,
        "violations": len(check_trace(r.stats.trace, cfg.timing, cfg.geometry)),
    } for be, r in runs.items()}
    print(format_table(table, RATIO_COLUMNS + [("throughput_gops", "GOps/s", ".1f")],
                       f"{args.op.upper()} over {args.size} bits"))
    if args.trace_dir:
        tdir = Path(args.trace_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        files = {}
        for be, r in runs.items():
            files[be] = tdir / f"{args.op}_{be}.csv"
            write_trace_csv(r.stats.trace, files[be])
        again = ratios_from_traces(files, cfg)
        for be in table:
            if abs(again[be]["latency_ratio"] - table[be]["latency_ratio"]) > 1e-6:
                print(f"trace recomputation disagrees for {be}", file=sys.stderr)
                return 1
        print(f"traces in {tdir}; ratios recomputed from traces agree")
    _write(args, cfg, f"microbench_{args.op}", {"op": args.op, "size_bits": args.size, "table": table})
    ok = all(v["verified"] and v["violations"] == 0 for v in table.values())
    if not ok:
        print("oracle mismatch or timing violation", file=sys.stderr)
    return 0 if ok else 1


def _hex(text: str, what: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise ValueError(f"{what} is not a hex string") from None


def cmd_aes_vectors(args, cfg) -> int:
    from .workloads.aes import ROUNDS, aes_encrypt, encrypt_reference
    key = _hex(args.key, "--key")
    data = _hex(args.plaintext, "--plaintext")
    if len(key) not in ROUNDS:
        raise ValueError("key must be 16, 24 or 32 bytes")
    if not data or len(data) % 16:
        raise ValueError("plaintext must be a non-empty multiple of 16 bytes")
    blocks = np.frombuffer(data, np.uint8).reshape(-1, 16)
    want = encrypt_reference(blocks, key)
    ok = True
    for be in args.backends:
        res = aes_encrypt(blocks, key, be, geometry=cfg.geometry, timing=cfg.timing,
                          energy=cfg.energy, host=cfg.host(args.host_profile))
        good = bool(np.array_equal(res.ciphertext, want))
        ok &= good
        print(f"{be:<7} {res.ciphertext.tobytes().hex()}  {'ok' if good else 'MISMATCH'}")
    return 0 if ok else 1


def cmd_aes(args, cfg) -> int:
    from .workloads.aes import aes_ratios
    if args.key or args.plaintext:
        if not (args.key and args.plaintext):
            print("--key and --plaintext go together", file=sys.stderr)
            return 2
        return cmd_aes_vectors(args, cfg)
    table = aes_ratios(args.blocks, args.key_bits // 8, args.backends, host=cfg.host(args.host_profile),
                       seed=cfg.seed, geometry=cfg.geometry, timing=cfg.timing, energy=cfg.energy)
    print(format_table(table, [("latency_ratio", "end-to-end (CIDAN=1)", ".3f"),
                               ("pim_latency_ratio", "PIM only (CIDAN=1)", ".3f"),
                               ("energy_ratio", "DRAM energy (CIDAN=1)", ".3f"),
                               ("correct", "matches reference", "")],
                       f"AES-{args.key_bits}, {args.blocks} blocks, host profile '{args.host_profile}'"))
    print(f"offloaded share of software AES ops: {table['cidan']['offloaded_share']:.3f}")
    _write(args, cfg, "aes", {"blocks": args.blocks, "key_bits": args.key_bits,
                              "host_profile": args.host_profile, "table": table})
    return 0 if all(v["correct"] for v in table.values()) else 1


def cmd_graph(args, cfg) -> int:
    from .workloads.graph import DATASET_SIZES, dataset_ratios, load_edge_list, synthetic_dataset
    if args.dataset in DATASET_SIZES:
        g = synthetic_dataset(args.dataset, seed=cfg.seed)
    else:
        g = load_edge_list(args.dataset)
    table = dataset_ratios(g, args.backends, args.pairs, cfg.seed, geometry=cfg.geometry,
                           timing=cfg.timing, energy=cfg.energy, host=cfg.host(args.host_profile))
    print(format_table(table, RATIO_COLUMNS, f"matching index on {g.name} ({g.n} vertices, "
                                             f"{g.n_edges} edges), {args.pairs} pairs"))
    _write(args, cfg, f"graph_{g.name}", {"dataset": g.name, "vertices": g.n, "edges": g.n_edges,
                                          "pairs": args.pairs, "table": table})
    return 0 if all(v["matches_oracle"] for v in table.values()) else 1


def cmd_dna(args, cfg) -> int:
    from .workloads.dna import edit_distance_dp, myers_batch, random_dna
    if args.patterns or args.texts:
        if not (args.patterns and args.texts):
            print("--patterns and --texts go together", file=sys.stderr)
            return 2
        patterns = Path(args.patterns).read_text().split()
        texts = Path(args.texts).read_text().split()
    else:
        rng = np.random.default_rng(cfg.seed)
        patterns = [random_dna(args.pattern_len, rng) for _ in range(args.problems)]
        texts = [random_dna(args.text_len, rng) for _ in range(args.problems)]
    kw = dict(geometry=cfg.geometry, timing=cfg.timing, energy=cfg.energy,
              host=cfg.host(args.host_profile))
    expected = [edit_distance_dp(p, t, args.mode) for p, t in zip(patterns, texts)]
    runs = {}
    for be in ("cidan", *[b for b in args.backends if b != "cidan"]):
        add_mode = args.add_mode if be == "cidan" else "host"
        runs[be] = myers_batch(patterns, texts, be, args.mode, add_mode=add_mode, **kw)
    base = runs["cidan"].stats
    table = {be: {
        "latency_ns": r.stats.extra["total_ns"],
        "energy_pj": r.stats.energy_pj,
        "latency_ratio": r.stats.extra["total_ns"] / base.extra["total_ns"],
        "energy_ratio": r.stats.energy_pj / base.energy_pj,
        "op_mix": r.op_mix,
        "matches_dp": r.distances == expected,
    } for be, r in runs.items()}
    print(format_table(table, RATIO_COLUMNS + [("matches_dp", "matches DP", "")],
                       f"Myers {args.mode}, {len(patterns)} problems"))
    for be, v in table.items():
        mix = ", ".join(f"{k}={n}" for k, n in sorted(v["op_mix"].items()))
        print(f"  op mix {be}: {mix}")
    _write(args, cfg, "dna", {"mode": args.mode, "problems": len(patterns), "table": table})
    return 0 if all(v["matches_dp"] for v in table.values()) else 1


def cmd_compare(args, cfg) -> int:
    checks = reference_checks(cfg, quick=args.quick)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} within tolerance")
    _write(args, cfg, "compare", {"checks": [
        {"name": c.name, "measured": c.measured, "reference": c.reference,
         "rel_tol": c.rel_tol, "passed": c.passed} for c in checks]})
    return 0 if not failed else 1


def cmd_check_trace(args, cfg) -> int:
    try:
        trace = read_trace_csv(args.trace, cfg.timing)
    except (OSError, ValueError) as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return 2
    violations = check_trace(trace, cfg.timing, cfg.geometry)
    for v in violations:
        print(f"{v.rule}: commands {v.first} and {v.second} {v.detail}")
    print(f"{len(trace)} commands, {len(violations)} violation(s)")
    return 0 if not violations else 1


COMMANDS = {
    "microbench": cmd_microbench,
    "aes": cmd_aes,
    "graph": cmd_graph,
    "dna": cmd_dna,
    "compare": cmd_compare,
    "check-trace": cmd_check_trace,
}


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "backends", "unset") is None:
        args.backends = cfg.backends
    try:
        return COMMANDS[args.cmd](args, cfg)
    except (ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
