"""A small row-level programming layer used by the application workloads."""
from __future__ import annotations

from collections import Counter

import numpy as np

from ..backends import AllocationError, BackendKind, MemoryImage, PimDevice, RunStats
from ..config import HostCostModel
from ..dram import DramGeometry, EnergyParams, TimingParams
from ..threshold import Func


class RowMachine:
    """Allocates rows, runs row ops on a :class:`PimDevice` and books host time.

    CIDAN needs the operands of one op in distinct banks of a bank group, so
    rows get a bank hint and results are placed in a bank that no source (and
    nothing listed in ``avoid``) uses.  The subarray back-ends keep all rows of
    a group in that group's first bank.
    """

    def __init__(self, backend=BackendKind.CIDAN, geometry: DramGeometry | None = None,
                 timing: TimingParams | None = None, energy: EnergyParams | None = None,
                 host: HostCostModel | None = None, batch: int | None = None):
        geometry = geometry or DramGeometry()
        mem = MemoryImage(geometry, batch) if batch else None
        self.dev = PimDevice(backend, geometry, timing, energy, memory=mem)
        self.backend = self.dev.backend
        self.geometry = self.dev.geometry
        self.host = host or HostCostModel()
        self.host_ns = 0.0
        self.host_log: Counter = Counter()
        self.op_mix: Counter = Counter()
        self._next = [0] * self.geometry.banks_per_chip
        self._free: list[list[int]] = [[] for _ in range(self.geometry.banks_per_chip)]
        self._rr = 0

    @property
    def cidan(self) -> bool:
        return self.backend is BackendKind.CIDAN

    @property
    def width(self) -> int:
        return self.geometry.row_bits

    # -- allocation ----------------------------------------------------------------
    def _bank(self, bank, group):
        size = self.geometry.bank_group_size
        if not self.cidan:
            return group * size
        if bank is None:
            return group * size
        return group * size + bank % size

    def alloc(self, bank: int | None = None, group: int = 0) -> tuple[int, int]:
        b = self._bank(bank, group)
        if self._free[b]:
            return b, self._free[b].pop()
        row = self._next[b]
        if row >= self.geometry.usable_rows:
            raise AllocationError(f"bank {b} is full")
        self._next[b] = row + 1
        return b, row

    def free(self, *addrs) -> None:
        for a in addrs:
            if a is not None:
                self._free[a[0]].append(a[1])

    def pick_bank(self, group: int, used=(), avoid=()) -> int:
        """A bank of ``group`` not in ``used``; prefers banks outside ``avoid``."""
        size = self.geometry.bank_group_size
        if not self.cidan:
            return 0
        busy = {b % size for b in used}
        shun = {b % size for b in avoid}
        order = [(self._rr + k) % size for k in range(size)]
        for pool in ([b for b in order if b not in busy and b not in shun],
                     [b for b in order if b not in busy]):
            if pool:
                self._rr = (pool[0] + 1) % size
                return pool[0]
        raise AllocationError("no free bank for the result")

    # -- data movement (host side) --------------------------------------------------
    def put(self, bits, bank: int | None = None, group: int = 0, addr=None) -> tuple[int, int]:
        if addr is None:
            addr = self.alloc(bank, group)
        bits = np.asarray(bits, np.uint8)
        shape = self.dev.memory.shape
        if bits.shape != shape:
            row = np.zeros(shape, np.uint8)
            row[..., :bits.shape[-1]] = bits
            bits = row
        self.dev.memory.write(addr, bits)
        return addr

    def get(self, addr) -> np.ndarray:
        return self.dev.memory.read(addr)

    def constant(self, value: int, bank: int = 0, group: int = 0) -> tuple[int, int]:
        return self.dev.constant_row(self._bank(bank, group), value)

    def charge_host(self, ns: float, what: str = "host") -> None:
        self.host_ns += ns
        self.host_log[what] += ns

    # -- compute ----------------------------------------------------------------------
    def op(self, func, a, b=None, dest=None, avoid=(), bank: int | None = None):
        """``dest = func(a, b)``; allocates ``dest`` when not given."""
        func = Func.parse(func)
        group = self.geometry.group_of(a[0])
        if dest is None:
            if bank is None:
                used = [a[0]] + ([b[0]] if b is not None else [])
                bank = self.pick_bank(group, used, avoid)
            dest = self.alloc(bank, group)
        self.dev.rowop(func, a, b, dest, stream=group)
        self.op_mix[func.value] += 1
        return dest

    def stats(self, **extra) -> RunStats:
        st = self.dev.stats()
        st.extra.update({
            "pim_ns": st.latency_ns,
            "host_ns": self.host_ns,
            "total_ns": st.latency_ns + self.host_ns,
            "op_mix": dict(sorted(self.op_mix.items())),
            "fixup_copies": st.macro_counts.get("FIXUP_COPY", 0),
            **extra,
        })
        return st
