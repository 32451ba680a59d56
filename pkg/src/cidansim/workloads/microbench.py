"""Bulk-bitwise microbenchmarks over 1/2/4 Mb vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..backends import BackendKind, PimDevice, RunStats, check_supported
from ..dram import DramGeometry, EnergyParams, TimingParams
from ..isa import BbopInstruction, allocate, execute, lower, parse_length, read_vector, write_vector
from ..threshold import Func, boolean_oracle

MB = 1024 ** 2
VECTOR_SIZES = (1 * MB, 2 * MB, 4 * MB)
# operands live in separate 32 MiB regions of the byte address space
REGION_BYTES = 32 * MB


@dataclass(frozen=True)
class MicrobenchSpec:
    op: Func
    vector_size_bits: int
    backend: BackendKind = BackendKind.CIDAN

    def __post_init__(self):
        object.__setattr__(self, "op", Func.parse(self.op))
        object.__setattr__(self, "backend", BackendKind.parse(self.backend))
        if isinstance(self.vector_size_bits, str):
            object.__setattr__(self, "vector_size_bits", parse_length(self.vector_size_bits))
        if self.vector_size_bits <= 0:
            raise ValueError("vector size must be positive")

    def instruction(self) -> BbopInstruction:
        src2 = REGION_BYTES if self.op.arity == 2 else None
        return BbopInstruction(self.op, 2 * REGION_BYTES, 0, src2, self.vector_size_bits, self.backend)


@dataclass
class MicrobenchResult:
    spec: MicrobenchSpec
    stats: RunStats
    verified: bool

    @property
    def throughput_gops(self) -> float:
        return self.stats.throughput_gops(self.spec.vector_size_bits)


def _chained_add_oracle(placement, a, b, row_bits: int) -> np.ndarray:
    """Lane-wise full add where each group's latch carries from one chunk to its next."""
    carry = {}
    out = np.zeros_like(a)
    pos = 0
    for ch in placement.chunks:
        n = ch.valid_bits
        c = carry.get(ch.group, np.zeros(row_bits, np.uint8))[:n]
        x, y = a[pos:pos + n], b[pos:pos + n]
        out[pos:pos + n] = x ^ y ^ c
        nxt = np.zeros(row_bits, np.uint8)
        nxt[:n] = (x & y) | (x & c) | (y & c)
        carry[ch.group] = nxt
        pos += n
    return out


def run_microbench(spec: MicrobenchSpec, geometry: DramGeometry | None = None,
                   timing: TimingParams | None = None, energy: EnergyParams | None = None,
                   seed: int = 0, verify: bool = True) -> MicrobenchResult:
    """Run one vector op end to end and check the result against numpy."""
    check_supported(spec.backend, spec.op)
    dev = PimDevice(spec.backend, geometry, timing, energy)
    instr = spec.instruction()
    placement = allocate(instr, dev.geometry)
    rng = np.random.default_rng(seed)
    n = spec.vector_size_bits
    a = rng.integers(0, 2, n, dtype=np.uint8)
    b = rng.integers(0, 2, n, dtype=np.uint8) if spec.op.arity == 2 else None
    write_vector(dev, placement, "src1", a)
    if b is not None:
        write_vector(dev, placement, "src2", b)
    execute(dev, lower(instr, placement))
    stats = dev.stats(op=spec.op.value, backend=spec.backend.value, vector_bits=n,
                      rows=len(placement.chunks))
    ok = True
    if verify:
        got = read_vector(dev, placement)
        if spec.op is Func.ADD:
            want = _chained_add_oracle(placement, a, b, dev.geometry.row_bits)
            ok = bool(np.array_equal(got, want))
        else:
            want = boolean_oracle(spec.op, a, b if b is not None else 0).astype(np.uint8)
            ok = bool(np.array_equal(got, want))
    return MicrobenchResult(spec, stats, ok)


def ratio_table(op, size_bits: int, backends=("cidan", "redram", "ambit"), **kw) -> dict:
    """Latency/energy of each back-end normalised to CIDAN (CIDAN = 1)."""
    results = {BackendKind.parse(b): run_microbench(MicrobenchSpec(op, size_bits, b), **kw)
               for b in ("cidan", *backends)}
    base = results[BackendKind.CIDAN].stats
    table = {}
    for be, res in results.items():
        table[be.value] = {
            "latency_ns": res.stats.latency_ns,
            "energy_pj": res.stats.energy_pj,
            "throughput_gops": res.throughput_gops,
            "latency_ratio": res.stats.latency_ns / base.latency_ns,
            "energy_ratio": res.stats.energy_pj / base.energy_pj,
            "verified": res.verified,
        }
    return table
