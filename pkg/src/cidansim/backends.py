"""Executable PIM back-ends: CIDAN, Ambit, ReDRAM and DRISA.

Each back-end turns one row-level bulk-bitwise operation into DRAM commands
and applies the operation to a :class:`MemoryImage`.  CIDAN reads operands
from distinct banks of one 4-bank group through its TLPE array; the other
three compute inside one bank through compute-row copies (AAP/AP macros).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .dram import (
    ACT, COMPUTE, PRE, PREA, WR, CommandTrace, DramCommand, DramGeometry,
    EnergyParams, Kind, Scheduler, TimingParams, energy_of, run_streams,
)
from .threshold import (
    Func, TlpeArray, TlpeControlWord, UnsupportedFunctionError, boolean_oracle,
    compile_schedule, Schedule,
)

Addr = tuple  # (bank, row)


class BackendKind(str, Enum):
    CIDAN = "cidan"
    AMBIT = "ambit"
    REDRAM = "redram"
    DRISA = "drisa"

    @classmethod
    def parse(cls, name) -> "BackendKind":
        if isinstance(name, BackendKind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown backend {name!r}") from None

    @property
    def label(self) -> str:
        return {"cidan": "CIDAN", "ambit": "Ambit", "redram": "ReDRAM", "drisa": "DRISA"}[self.value]


CAPABILITIES: dict[BackendKind, frozenset] = {
    BackendKind.CIDAN: frozenset(Func),
    BackendKind.AMBIT: frozenset({Func.COPY, Func.NOT, Func.AND, Func.OR, Func.XOR}),
    BackendKind.REDRAM: frozenset({Func.COPY, Func.NOT, Func.AND, Func.OR, Func.XOR}),
    BackendKind.DRISA: frozenset({Func.COPY, Func.NOT, Func.AND}),
}


class UnsupportedOperationError(UnsupportedFunctionError):
    """The back-end has no command sequence for this function."""


class AllocationError(RuntimeError):
    """Operands cannot be placed where the back-end needs them."""


def check_supported(backend, func) -> Func:
    backend = BackendKind.parse(backend)
    func = Func.parse(func)
    if func not in CAPABILITIES[backend]:
        raise UnsupportedOperationError(f"{backend.label} does not support {func.value.upper()}")
    return func


# reserved-row layout, offsets from the first reserved row of every bank
C0, C1 = 0, 1
T_ROWS = (2, 3, 4, 5, 6)
DCC0, DCC1 = 7, 8
SCRATCH = tuple(range(16, 32))
MIN_RESERVED = 32


class MemoryImage:
    """Sparse bank/row store; rows are uint8 arrays of 0/1, unwritten rows read as 0.

    With ``batch=k`` every row holds k independent samples (shape ``(k, N)``),
    so one simulated operation checks k random inputs at once.
    """

    def __init__(self, geometry: DramGeometry | None = None, batch: int | None = None):
        self.geometry = geometry or DramGeometry()
        if self.geometry.reserved_rows < MIN_RESERVED:
            raise ValueError(f"geometry must reserve at least {MIN_RESERVED} rows per bank")
        self.width = self.geometry.row_bits
        self.shape = (self.width,) if batch is None else (int(batch), self.width)
        self._rows: dict[tuple[int, int], np.ndarray] = {}
        ones = np.ones(self.shape, np.uint8)
        for bank in range(self.geometry.banks_per_chip):
            self._rows[(bank, self.geometry.reserved_row(C1))] = ones

    def _key(self, addr) -> tuple[int, int]:
        bank, row = int(addr[0]), int(addr[1])
        g = self.geometry
        if not (0 <= bank < g.banks_per_chip and 0 <= row < g.rows_per_bank):
            raise IndexError(f"address {addr} outside the memory")
        return bank, row

    def read(self, addr) -> np.ndarray:
        row = self._rows.get(self._key(addr))
        if row is None:
            return np.zeros(self.shape, np.uint8)
        return row.copy()

    def peek(self, addr) -> np.ndarray:
        """Read without copying; callers must not modify the result."""
        row = self._rows.get(self._key(addr))
        return np.zeros(self.shape, np.uint8) if row is None else row

    def write(self, addr, bits) -> None:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != self.shape:
            raise ValueError(f"row must have shape {self.shape}, got {bits.shape}")
        self._rows[self._key(addr)] = bits.copy()

    def __contains__(self, addr) -> bool:
        return self._key(addr) in self._rows

    def rows(self) -> Iterable[tuple[tuple[int, int], np.ndarray]]:
        return self._rows.items()


# -- functional kernels for the charge-sharing back-ends -----------------------

def ambit_majority(mem: MemoryImage, row_a, row_b, row_c) -> np.ndarray:
    """Bitwise 3-input majority of three rows (triple row activation)."""
    a, b, c = mem.peek(row_a), mem.peek(row_b), mem.peek(row_c)
    return (a & b) | (b & c) | (a & c)


DRA_MODES = ("NAND2", "NOR2", "AND2", "OR2", "XOR2", "XNOR2", "NOT")


def redram_dra(mem: MemoryImage, row_a, row_b=None, mode: str = "AND2") -> np.ndarray:
    """Double row activation sensed through the selected ReDRAM inverter."""
    mode = mode.upper()
    a = mem.peek(row_a)
    if mode == "NOT":
        return 1 - a
    if row_b is None:
        raise ValueError(f"{mode} needs two rows")
    b = mem.peek(row_b)
    table = {"AND2": Func.AND, "OR2": Func.OR, "NAND2": Func.NAND, "NOR2": Func.NOR,
             "XOR2": Func.XOR, "XNOR2": Func.XNOR}
    if mode not in table:
        raise ValueError(f"unknown DRA mode {mode!r}")
    return boolean_oracle(table[mode], a, b).astype(np.uint8)


# Step programs.  Operands: "Di", "Dj" sources, "Dr" destination, otherwise a
# reserved row.  Activation expressions:
#   ("row", r)            plain activation of r
#   ("neg", r)            negated wordline of a dual-contact row
#   ("maj", x, y, z)      TRA; x/y/z are row names or ("neg", r)
#   ("dra", mode, x, y)   DRA through a ReDRAM sense inverter
#   ("inv", r)            activation sensed through an inverting path
#   ("and_latch", r)      DRISA: latch AND r
#   ("latch_load", r)     DRISA: row -> latch
#   ("latch_store", r)    DRISA: latch -> row
_PROGRAMS = {
    BackendKind.REDRAM: {
        Func.COPY: [("AAP", ("row", "Di"), ("Dr",))],
        Func.NOT: [("AAP", ("inv", "Di"), ("Dr",))],
        Func.AND: [("AAP", ("row", "Di"), ("T0",)), ("AAP", ("row", "Dj"), ("T1",)),
                   ("AAP", ("dra", "AND2", "T0", "T1"), ("Dr",))],
        Func.OR: [("AAP", ("row", "Di"), ("T0",)), ("AAP", ("row", "Dj"), ("T1",)),
                  ("AAP", ("dra", "OR2", "T0", "T1"), ("Dr",))],
        Func.XOR: [("AAP", ("row", "Di"), ("T0",)), ("AAP", ("row", "Dj"), ("T1",)),
                   ("AAP", ("dra", "XOR2", "T0", "T1"), ("Dr",))],
    },
    BackendKind.AMBIT: {
        Func.COPY: [("AAP", ("row", "Di"), ("Dr",))],
        Func.NOT: [("AAP", ("row", "Di"), ("DCC0",)), ("AAP", ("neg", "DCC0"), ("Dr",))],
        Func.AND: [("AAP", ("row", "Di"), ("T0",)), ("AAP", ("row", "Dj"), ("T1",)),
                   ("AAP", ("row", "C0"), ("T2",)),
                   ("AAP", ("maj", "T0", "T1", "T2"), ("Dr",))],
        Func.OR: [("AAP", ("row", "Di"), ("T0",)), ("AAP", ("row", "Dj"), ("T1",)),
                  ("AAP", ("row", "C1"), ("T2",)),
                  ("AAP", ("maj", "T0", "T1", "T2"), ("Dr",))],
        Func.XOR: [("AAP", ("row", "Di"), ("DCC0", "T0")),
                   ("AAP", ("row", "Dj"), ("DCC1", "T1")),
                   ("AAP", ("row", "C0"), ("T2", "T3")),
                   ("AP", ("maj", ("neg", "DCC0"), "T1", "T2"), ()),   # T1 = ~A & B
                   ("AP", ("maj", ("neg", "DCC1"), "T0", "T3"), ()),   # T0 = A & ~B
                   ("AAP", ("row", "C1"), ("T4",)),
                   ("AAP", ("maj", "T0", "T1", "T4"), ("Dr",))],
    },
    BackendKind.DRISA: {
        Func.COPY: [("AP", ("latch_load", "Di"), ()), ("AP", ("latch_store", "Dr"), ())],
        Func.NOT: [("AAP", ("inv", "Di"), ("T0",)), ("AAP", ("row", "T0"), ("Dr",))],
        Func.AND: [("AP", ("latch_load", "Di"), ()),
                   ("AAP", ("and_latch", "Dj"), ("T0",)),
                   ("AAP", ("row", "T0"), ("Dr",))],
    },
}

_RESERVED_NAMES = {"C0": C0, "C1": C1, "DCC0": DCC0, "DCC1": DCC1,
                   **{f"T{k}": off for k, off in enumerate(T_ROWS)}}


def table_v_counts(backend, func) -> Counter:
    """Macro/command counts of one row op, as listed in the command-sequence table."""
    backend = BackendKind.parse(backend)
    func = check_supported(backend, func)
    if backend is BackendKind.CIDAN:
        acts = 3 if func.arity == 2 else 2
        cycles = 2 if func in (Func.XOR, Func.XNOR, Func.ADD) else 1
        return Counter({"ACT": acts, "COMPUTE": cycles, "WR": 1, "PREA": 1})
    return Counter(step[0] for step in _PROGRAMS[backend][func])


@dataclass
class RunStats:
    trace: CommandTrace
    latency_ns: float
    energy_pj: float
    macro_counts: Counter = field(default_factory=Counter)
    extra: dict = field(default_factory=dict)

    def throughput_gops(self, bits: int) -> float:
        """Bit operations per ns, i.e. GOps/s."""
        return bits / self.latency_ns if self.latency_ns else float("inf")

    def summary(self) -> dict:
        return {
            "latency_ns": self.latency_ns,
            "energy_pj": self.energy_pj,
            "commands": len(self.trace),
            "macro_counts": dict(sorted(self.macro_counts.items())),
            **self.extra,
        }


class PimDevice:
    """One DRAM device with a PIM back-end, its memory and its timing state.

    Operations are applied to memory immediately and their commands are
    queued on a stream (by default one per bank group); :meth:`flush`
    schedules all queued streams together so work in different groups
    overlaps subject to tRRD/tFAW.
    """

    def __init__(self, backend=BackendKind.CIDAN, geometry: DramGeometry | None = None,
                 timing: TimingParams | None = None, energy: EnergyParams | None = None,
                 memory: MemoryImage | None = None):
        self.backend = BackendKind.parse(backend)
        if memory is not None and geometry is not None and memory.geometry != geometry:
            raise ValueError("memory and geometry disagree")
        self.geometry = memory.geometry if memory is not None else (geometry or DramGeometry())
        self.timing = timing or TimingParams()
        self.energy = energy or EnergyParams()
        self.memory = memory if memory is not None else MemoryImage(self.geometry)
        cidan = self.backend is BackendKind.CIDAN
        self.scheduler = Scheduler(self.timing, self.geometry, row_clone=not cidan,
                                   multi_activation=self.backend in (BackendKind.AMBIT, BackendKind.REDRAM))
        self.tlpea = [TlpeArray(self.geometry.row_bits) for _ in range(self.geometry.n_groups)]
        self.macro_counts: Counter = Counter()
        self._pending: dict[int, list[DramCommand]] = {}
        self._barriers: dict[int, set[int]] = {}
        self._scratch_next: Counter = Counter()

    # -- helpers -----------------------------------------------------------------
    def supports(self, func) -> bool:
        return Func.parse(func) in CAPABILITIES[self.backend]

    def _addr(self, addr) -> tuple[int, int]:
        if addr is None:
            raise ValueError("missing operand address")
        bank, row = int(addr[0]), int(addr[1])
        g = self.geometry
        if not (0 <= bank < g.banks_per_chip and 0 <= row < g.rows_per_bank):
            raise AllocationError(f"address {(bank, row)} outside the memory")
        return bank, row

    def reserved(self, bank: int, offset: int) -> tuple[int, int]:
        return bank, self.geometry.reserved_row(offset)

    def constant_row(self, bank: int, value: int) -> tuple[int, int]:
        return self.reserved(bank, C1 if value else C0)

    def _scratch(self, bank: int) -> tuple[int, int]:
        k = self._scratch_next[bank]
        self._scratch_next[bank] = (k + 1) % len(SCRATCH)
        return self.reserved(bank, SCRATCH[k])

    def _emit(self, stream: int, cmds: Sequence[DramCommand]) -> None:
        # each emitted sequence is one operation; the controller starts the
        # next operation of a stream only once the previous one has finished
        queue = self._pending.setdefault(stream, [])
        self._barriers.setdefault(stream, set()).add(len(queue))
        queue.extend(cmds)

    # -- public operations -------------------------------------------------------
    def rowop(self, func, src1, src2, dest, stream: int | None = None) -> None:
        """``dest = func(src1, src2)`` over one full row."""
        func = check_supported(self.backend, func)
        if func is Func.ADD:
            self.add_rows(src1, src2, dest, stream=stream)
            return
        src1, dest = self._addr(src1), self._addr(dest)
        srcs = [src1] if func.arity == 1 else [src1, self._addr(src2)]
        if stream is None:
            stream = self.geometry.group_of(dest[0])
        if self.backend is BackendKind.CIDAN:
            self._cidan_op(func, srcs, dest, stream)
        else:
            self._subarray_op(func, srcs, dest, stream)

    def copy(self, src, dest, stream: int | None = None) -> None:
        self.rowop(Func.COPY, src, None, dest, stream)

    def add_rows(self, src_a, src_b, dest_sum, carry_in=None, dest_carry=None,
                 stream: int | None = None) -> None:
        """Lane-wise full add on CIDAN.

        Without ``carry_in`` the carry comes from latch L1 of the group's
        TLPE array (bit-serial chaining); with it, the carry row is read as a
        third operand.  The carry-out is left in L1 and, if ``dest_carry`` is
        given, also written to that row.
        """
        if self.backend is not BackendKind.CIDAN:
            raise UnsupportedOperationError(f"{self.backend.label} does not support ADD")
        dest_sum = self._addr(dest_sum)
        srcs = [self._addr(src_a), self._addr(src_b)]
        if carry_in is not None:
            srcs.append(self._addr(carry_in))
        if stream is None:
            stream = self.geometry.group_of(dest_sum[0])
        mode = "latch" if carry_in is None else "bank"
        self._cidan_op(Func.ADD, srcs, dest_sum, stream, compile_schedule(Func.ADD, mode))
        if dest_carry is not None:
            self._cidan_write_latch(self._addr(dest_carry), stream)

    # -- CIDAN ---------------------------------------------------------------------
    def _cidan_op(self, func: Func, srcs, dest, stream, sched: Schedule | None = None):
        geo = self.geometry
        group = geo.group_of(dest[0])
        for s in srcs:
            if geo.group_of(s[0]) != group:
                raise AllocationError(
                    f"operand {s} is outside bank group {group} of destination {dest}")
        # sources must sit in distinct banks; move colliding ones to scratch rows
        placed: list[tuple[int, int]] = []
        for s in srcs:
            if s[0] in {p[0] for p in placed}:
                free = self._free_bank(group, {p[0] for p in placed} | {s[0], dest[0]})
                tmp = self._scratch(free)
                self._cidan_copy(s, tmp, stream)
                self.macro_counts["FIXUP_COPY"] += 1
                s = tmp
            placed.append(s)
        in_place = dest in placed
        if not in_place and dest[0] in {p[0] for p in placed}:
            free = self._free_bank(group, {p[0] for p in placed})
            tmp = self._scratch(free)
            self._cidan_compute(func, placed, tmp, stream, sched)
            self.macro_counts["FIXUP_COPY"] += 1
            self._cidan_copy(tmp, dest, stream)
            return
        self._cidan_compute(func, placed, dest, stream, sched)

    def _free_bank(self, group: int, used: set) -> int:
        for b in self.geometry.banks_in_group(group):
            if b not in used:
                return b
        raise AllocationError(f"no free bank left in group {group} for a fix-up copy")

    def _cidan_copy(self, src, dest, stream):
        if src[0] == dest[0]:
            # same-bank copy goes through a scratch row in another bank
            group = self.geometry.group_of(src[0])
            tmp = self._scratch(self._free_bank(group, {src[0]}))
            self._cidan_compute(Func.COPY, [src], tmp, stream)
            src = tmp
        self._cidan_compute(Func.COPY, [src], dest, stream)

    def _cidan_compute(self, func: Func, srcs, dest, stream, sched: Schedule | None = None):
        geo = self.geometry
        group = geo.group_of(dest[0])
        sched = sched or compile_schedule(func)
        positions = [b % geo.bank_group_size for b, _ in srcs]
        routed = sched.routed(positions)
        inputs = [None] * geo.bank_group_size
        cmds = []
        for bank, row in srcs:
            cmds.append(ACT(bank, row))
            inputs[bank % geo.bank_group_size] = self.memory.peek((bank, row))
        if dest not in srcs:
            cmds.append(ACT(*dest))
        zero = np.zeros(geo.row_bits, np.uint8)
        inputs = [zero if x is None else x for x in inputs]
        out = self.tlpea[group].run(routed, inputs)
        self.memory.write(dest, out)
        cycles = len(sched.cycles)
        cmds += [COMPUTE(group, cycles), WR(*dest), PREA(group)]
        self._emit(stream, cmds)
        self.macro_counts["ACT"] += len(srcs) + (dest not in srcs)
        self.macro_counts["COMPUTE"] += cycles
        self.macro_counts["WR"] += 1
        self.macro_counts["PREA"] += 1

    def _cidan_write_latch(self, dest, stream):
        group = self.geometry.group_of(dest[0])
        ctrl = TlpeControlWord(enable_l1_feedback=True, threshold_select=1)
        zero = np.zeros(self.geometry.row_bits, np.uint8)
        out = self.tlpea[group].run(Schedule(Func.COPY, (ctrl,), operands=0), [zero] * 4)
        self.memory.write(dest, out)
        self._emit(stream, [ACT(*dest), COMPUTE(group, 1), WR(*dest), PREA(group)])
        self.macro_counts.update({"ACT": 1, "COMPUTE": 1, "WR": 1, "PREA": 1})

    # -- Ambit / ReDRAM / DRISA ------------------------------------------------------
    def _subarray_op(self, func: Func, srcs, dest, stream):
        bank = dest[0]
        for s in srcs:
            if s[0] != bank:
                raise AllocationError(
                    f"{self.backend.label} computes inside one subarray: operand {s} "
                    f"is not in bank {bank}")
        rows = {"Di": srcs[0][1], "Dr": dest[1]}
        if len(srcs) > 1:
            rows["Dj"] = srcs[1][1]
        for name, off in _RESERVED_NAMES.items():
            rows[name] = self.geometry.reserved_row(off)
        latch = None
        cmds: list[DramCommand] = []
        for macro, expr, dsts in _PROGRAMS[self.backend][func]:
            kind, first_row, value, clobber, latch = self._activate(expr, bank, rows, latch)
            cmds.append(DramCommand(kind, bank, first_row))
            for r, v in clobber:
                self.memory.write((bank, r), v)
            if macro == "AAP":
                for d in dsts:
                    self.memory.write((bank, rows[d]), value)
                cmds.append(ACT(bank, rows[dsts[0]]))
            cmds.append(PRE(bank))
            self.macro_counts[macro] += 1
        self._emit(stream, cmds)

    def _activate(self, expr, bank, rows, latch):
        """Evaluate one activation; returns (kind, row, bitline value, rows rewritten, latch)."""
        mem = self.memory
        op = expr[0]

        def operand(x):
            if isinstance(x, tuple):  # ("neg", name): negated wordline
                return rows[x[1]], True
            return rows[x], False

        if op == "row":
            r = rows[expr[1]]
            return Kind.ACT, r, mem.read((bank, r)), [], latch
        if op in ("neg", "inv"):
            r = rows[expr[1]]
            return Kind.ACT, r, 1 - mem.peek((bank, r)), [], latch
        if op == "maj":
            ops = [operand(x) for x in expr[1:]]
            vals = [1 - mem.peek((bank, r)) if neg else mem.peek((bank, r)) for r, neg in ops]
            value = (vals[0] & vals[1]) | (vals[1] & vals[2]) | (vals[0] & vals[2])
            clobber = [(r, 1 - value if neg else value) for r, neg in ops]
            return Kind.TRA, ops[0][0], value, clobber, latch
        if op == "dra":
            mode, a, b = expr[1], rows[expr[2]], rows[expr[3]]
            value = redram_dra(mem, (bank, a), (bank, b), mode)
            return Kind.DRA, a, value, [(a, value), (b, value)], latch
        if op == "and_latch":
            r = rows[expr[1]]
            return Kind.ACT, r, latch & mem.peek((bank, r)), [], latch
        if op == "latch_load":
            r = rows[expr[1]]
            value = mem.read((bank, r))
            return Kind.ACT, r, value, [], value
        if op == "latch_store":
            r = rows[expr[1]]
            return Kind.ACT, r, latch, [(r, latch)], latch
        raise ValueError(f"unknown activation {op!r}")

    # -- timing --------------------------------------------------------------------
    def pending(self) -> int:
        return sum(len(v) for v in self._pending.values())

    def flush(self) -> None:
        if not self._pending:
            return
        keys = sorted(self._pending)
        start = self.scheduler.completion
        run_streams(self.scheduler, [self._pending[k] for k in keys], start=start,
                    barriers=[self._barriers[k] for k in keys])
        self._pending.clear()
        self._barriers.clear()

    def stats(self, **extra) -> RunStats:
        self.flush()
        trace = self.scheduler.trace()
        return RunStats(trace, trace.total_latency, energy_of(trace, self.energy),
                        Counter(self.macro_counts), dict(extra))


def _device_for(backend, mem: MemoryImage, timing=None, energy=None) -> PimDevice:
    return PimDevice(backend, timing=timing, energy=energy, memory=mem)


def exec_rowop(backend, func, mem: MemoryImage, src1, src2, dest,
               timing: TimingParams | None = None, energy: EnergyParams | None = None):
    """Run one row operation on an idle device; returns ``(mem, RunStats)``."""
    dev = _device_for(backend, mem, timing, energy)
    dev.rowop(func, src1, src2, dest)
    return mem, dev.stats()


def exec_add_rows(backend, mem: MemoryImage, src_a, src_b, carry_in_row, dest_sum,
                  dest_carry=None, timing: TimingParams | None = None,
                  energy: EnergyParams | None = None):
    """Full add of two rows plus a carry row (``None``: carry from latch L1)."""
    dev = _device_for(backend, mem, timing, energy)
    dev.add_rows(src_a, src_b, dest_sum, carry_in=carry_in_row, dest_carry=dest_carry)
    return mem, dev.stats()


def copy_row(backend, mem: MemoryImage, src, dest,
             timing: TimingParams | None = None, energy: EnergyParams | None = None):
    dev = _device_for(backend, mem, timing, energy)
    dev.copy(src, dest)
    return mem, dev.stats()
