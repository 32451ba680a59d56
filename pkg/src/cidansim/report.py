"""Result tables, deterministic JSON/CSV output and reference comparison."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .config import SimConfig, load_reference_values
from .dram import energy_of, read_trace_csv

SCHEMA_VERSION = 1


def _clean(obj):
    """JSON-safe, key-sorted copy; floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(f"{obj:.12g}")
    if hasattr(obj, "item"):  # numpy scalar
        return _clean(obj.item())
    return obj


def flatten_table(table: dict) -> list[dict]:
    """{backend: {metric: value}} -> rows with a ``backend`` column; nested maps become a.b keys."""
    rows = []
    for be, metrics in table.items():
        row = {"backend": be}
        for k, v in metrics.items():
            if isinstance(v, dict):
                for k2, v2 in sorted(v.items()):
                    row[f"{k}.{k2}"] = v2
            else:
                row[k] = v
        rows.append(row)
    return rows


def emit_report(results: dict, out_dir, name: str, config: SimConfig) -> list[Path]:
    """Write ``<name>.json`` and, for tabular results, ``<name>.csv``.

    ``results`` must be non-empty.  Output is byte-identical for identical
    inputs: keys are sorted and nothing time-dependent is recorded.
    """
    if not results:
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema": SCHEMA_VERSION,
        "experiment": name,
        "seed": config.seed,
        "config_hash": config.digest(),
        "config": config.as_dict(),
        "results": results,
    }
    json_path = out / f"{name}.json"
    json_path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    paths = [json_path]
    table = results.get("table")
    if isinstance(table, dict) and table:
        rows = flatten_table(_clean(table))
        cols = ["backend"] + sorted({k for r in rows for k in r} - {"backend"})
        csv_path = out / f"{name}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r)
        paths.append(csv_path)
    return paths


def format_table(table: dict, columns: list[tuple[str, str, str]], title: str = "") -> str:
    """Plain-text table; ``columns`` holds (key, header, format spec)."""
    head = ["backend"] + [h for _, h, _ in columns]
    body = []
    for be, metrics in table.items():
        row = [be]
        for key, _, fmt in columns:
            v = metrics.get(key)
            row.append("-" if v is None else format(v, fmt) if fmt else str(v))
        body.append(row)
    widths = [max(len(str(r[i])) for r in [head] + body) for i in range(len(head))]
    lines = [title] if title else []
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)))
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


def ratios_from_traces(trace_files: dict, config: SimConfig, base: str = "cidan") -> dict:
    """Latency and energy ratios recomputed from trace CSVs alone."""
    out = {}
    for be, path in trace_files.items():
        trace = read_trace_csv(path, config.timing)
        out[be] = {"latency_ns": trace.total_latency, "energy_pj": energy_of(trace, config.energy)}
    ref = out[base]
    for be, v in out.items():
        v["latency_ratio"] = v["latency_ns"] / ref["latency_ns"]
        v["energy_ratio"] = v["energy_pj"] / ref["energy_pj"]
    return out


# -- reference comparison ------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    reference: float
    rel_tol: float

    @property
    def rel_error(self) -> float:
        return abs(self.measured - self.reference) / abs(self.reference)

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.rel_tol + 1e-12

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.name:<40} measured {self.measured:9.4g}  reference "
                f"{self.reference:9.4g}  error {100 * self.rel_error:5.1f}% (tol {100 * self.rel_tol:.0f}%)")


def reference_checks(config: SimConfig, size_bits: int = 4 * 1024 ** 2, quick: bool = False) -> list[Check]:
    """Re-run every experiment with a stored reference value and compare."""
    from .workloads.aes import aes_ratios
    from .workloads.dna import dna_ratios
    from .workloads.graph import dataset_ratios, synthetic_dataset
    from .workloads.microbench import ratio_table

    ref = load_reference_values()
    kw = dict(geometry=config.geometry, timing=config.timing, energy=config.energy)
    checks = []
    mb = ref["microbench"]
    for op in ("not", "and", "or", "xor"):
        table = ratio_table(op, size_bits, ("redram", "ambit"), seed=config.seed, **kw)
        for metric in ("latency_ratio", "energy_ratio", "throughput_gops"):
            for be, value in mb[metric][op].items():
                checks.append(Check(f"microbench {op} {metric} {be}", table[be][metric],
                                    value, mb[metric]["rel_tol"]))
    aes = ref["aes"]
    blocks = config.geometry.row_bits  # host work per row scales with lanes, so use a full row
    table = aes_ratios(blocks, host=config.host("aes"), seed=config.seed, **kw)
    for be, value in aes["latency_ratio"].items():
        checks.append(Check(f"aes latency_ratio {be}", table[be]["latency_ratio"], value, aes["rel_tol"]))
    checks.append(Check("aes offloaded_share", table["cidan"]["offloaded_share"],
                        aes["offloaded_share"], aes["rel_tol"]))
    gr = ref["graph"]
    datasets = ("facebook",) if quick else ("facebook", "amazon", "dblp")
    for name in datasets:
        g = synthetic_dataset(name, seed=config.seed)
        table = dataset_ratios(g, pairs=8 if quick else 32, seed=config.seed, **kw)
        for be, value in gr["latency_ratio"].items():
            checks.append(Check(f"graph {name} latency_ratio {be}", table[be]["latency_ratio"],
                                value, gr["rel_tol"]))
    dn = ref["dna"]
    table = dna_ratios(text_len=32 if quick else 128, seed=config.seed, **kw)
    for be, value in dn["latency_ratio"].items():
        checks.append(Check(f"dna latency_ratio {be}", table[be]["latency_ratio"], value, dn["rel_tol"]))
    return checks
