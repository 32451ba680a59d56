"""DRAM geometry, command protocol, timing scheduler and energy accounting.

All durations are in ns, energies in pJ and power in mW (1 mW * 1 ns = 1 pJ).
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

EPS = 1e-9


@dataclass(frozen=True)
class DramGeometry:
    banks_per_chip: int = 8
    rows_per_bank: int = 16384
    cols_per_row: int = 1024
    bits_per_col: int = 8
    bank_group_size: int = 4
    # rows at the top of every bank kept for constants, compute rows and scratch
    reserved_rows: int = 32

    def __post_init__(self):
        for name in ("banks_per_chip", "rows_per_bank", "cols_per_row",
                     "bits_per_col", "bank_group_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.banks_per_chip % self.bank_group_size:
            raise ValueError("banks_per_chip must be a multiple of bank_group_size")
        if not 0 <= self.reserved_rows < self.rows_per_bank:
            raise ValueError("reserved_rows must leave usable rows")

    @property
    def row_bits(self) -> int:
        return self.cols_per_row * self.bits_per_col

    @property
    def row_bytes(self) -> int:
        return self.row_bits // 8

    @property
    def n_groups(self) -> int:
        return self.banks_per_chip // self.bank_group_size

    @property
    def usable_rows(self) -> int:
        return self.rows_per_bank - self.reserved_rows

    def group_of(self, bank: int) -> int:
        return bank // self.bank_group_size

    def banks_in_group(self, group: int) -> range:
        start = group * self.bank_group_size
        return range(start, start + self.bank_group_size)

    def reserved_row(self, offset: int) -> int:
        if not 0 <= offset < self.reserved_rows:
            raise ValueError(f"reserved row offset {offset} out of range")
        return self.usable_rows + offset


@dataclass(frozen=True)
class TimingParams:
    t_rcd: float = 15.0
    t_ras: float = 35.0
    t_rp: float = 12.5
    t_rc: float = 47.5
    t_rrd: float = 7.5
    t_faw: float = 30.0
    t_ck: float = 1.25
    t_wr: float = 15.0
    t_writeback_extra: float = 17.5

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name == "t_writeback_extra":
                if value < 0:
                    raise ValueError("t_writeback_extra must be non-negative")
            elif not value > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not math.isclose(self.t_rc, self.t_ras + self.t_rp):
            raise ValueError("t_rc must equal t_ras + t_rp")
        if self.t_faw < self.t_rrd:
            raise ValueError("t_faw must be at least t_rrd")

    @property
    def aap(self) -> float:
        return 2 * self.t_ras + self.t_rp

    @property
    def ap(self) -> float:
        return self.t_ras + self.t_rp


@dataclass(frozen=True)
class EnergyParams:
    """Per-command energies.

    ``e_act`` and ``e_pre`` split the activate/precharge pair energy; a PREA
    is charged ``e_pre`` for every bank it closes.  ``e_wr`` is per WR
    command (a TLPEA write-back drives the whole row).
    """

    e_act: float = 892.5
    e_pre: float = 431.25
    e_rd: float = 652.5
    e_wr: float = 850.0
    e_tlpe_cycle: float = 10.0
    p_background: float = 57.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def e_act_pre(self) -> float:
        return self.e_act + self.e_pre


class Kind(str, Enum):
    ACT = "ACT"
    PRE = "PRE"
    PREA = "PREA"
    RD = "RD"
    WR = "WR"
    COMPUTE = "COMPUTE"
    TRA = "TRA"
    DRA = "DRA"

    @property
    def activates(self) -> bool:
        return self in (Kind.ACT, Kind.TRA, Kind.DRA)


@dataclass(frozen=True)
class DramCommand:
    """One DRAM command.

    ``bank`` is a bank index, except for COMPUTE and PREA where it is the
    bank-group index.  ``arg`` is the cycle count of a COMPUTE and the number
    of banks closed by a PREA (filled in by the scheduler).
    """

    kind: Kind
    bank: int
    row: int = -1
    arg: int = 0
    issue_time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.COMPUTE and self.arg < 1:
            raise ValueError("COMPUTE needs a positive cycle count")

    def at(self, t: float) -> "DramCommand":
        return replace(self, issue_time=t)


def ACT(bank, row):
    return DramCommand(Kind.ACT, bank, row)


def PRE(bank):
    return DramCommand(Kind.PRE, bank)


def WR(bank, row):
    return DramCommand(Kind.WR, bank, row)


def RD(bank, row):
    return DramCommand(Kind.RD, bank, row)


def PREA(group):
    return DramCommand(Kind.PREA, group)


def COMPUTE(group, cycles):
    return DramCommand(Kind.COMPUTE, group, arg=cycles)


class ProtocolError(RuntimeError):
    def __init__(self, rule: str, message: str):
        super().__init__(f"{rule}: {message}")
        self.rule = rule


@dataclass(frozen=True)
class Violation:
    rule: str
    first: int  # index of the earlier command in the trace
    second: int
    detail: str = ""


@dataclass
class CommandTrace:
    commands: list[DramCommand] = field(default_factory=list)
    total_latency: float = 0.0
    violations: list[Violation] = field(default_factory=list)

    def __len__(self):
        return len(self.commands)

    def __iter__(self):
        return iter(self.commands)

    def then(self, other: "CommandTrace") -> "CommandTrace":
        """Concatenate, running ``other`` after this trace has completed."""
        shift = self.total_latency
        moved = [c.at(c.issue_time + shift) for c in other.commands]
        return CommandTrace(self.commands + moved, shift + other.total_latency)

    def kinds(self) -> list[str]:
        return [c.kind.value for c in self.commands]


def command_end(cmd: DramCommand, timing: TimingParams) -> float:
    """Time at which the effect of an issued command is complete."""
    t = cmd.issue_time
    if cmd.kind in (Kind.PRE, Kind.PREA):
        return t + timing.t_rp
    if cmd.kind is Kind.COMPUTE:
        return t + cmd.arg * timing.t_ck
    if cmd.kind is Kind.WR:
        return t + timing.t_wr
    if cmd.kind is Kind.RD:
        return t + timing.t_ck
    return t + timing.t_rcd


class Scheduler:
    """In-order timing state machine for one DRAM device.

    ``issue`` places each command at the earliest time at or after both the
    request time and the previously issued command that satisfies every
    constraint.  ``row_clone`` permits a second ACT to an already open bank
    (the ACT-ACT of an AAP); ``multi_activation`` permits TRA/DRA.
    """

    def __init__(self, timing: TimingParams, geometry: DramGeometry,
                 row_clone: bool = False, multi_activation: bool = False):
        self.timing = timing
        self.geometry = geometry
        self.row_clone = row_clone
        self.multi_activation = multi_activation
        nb = geometry.banks_per_chip
        self.open_row: list[int | None] = [None] * nb
        self.last_act = [-math.inf] * nb
        self.cycle_start = [-math.inf] * nb
        self.last_pre = [-math.inf] * nb
        self.last_wr = [-math.inf] * nb
        self.compute_end = [-math.inf] * geometry.n_groups
        self.recent_acts: deque[float] = deque(maxlen=4)
        self.last_issue = 0.0
        self.completion = 0.0
        self.commands: list[DramCommand] = []

    # -- constraint evaluation -------------------------------------------------
    def _check_bank(self, bank):
        if not 0 <= bank < self.geometry.banks_per_chip:
            raise ProtocolError("address", f"bank {bank} does not exist")

    def _check_group(self, group):
        if not 0 <= group < self.geometry.n_groups:
            raise ProtocolError("address", f"bank group {group} does not exist")

    def _open_in_group(self, group):
        return [b for b in self.geometry.banks_in_group(group) if self.open_row[b] is not None]

    def _precharge_floor(self, bank):
        t = self.timing
        return max(self.last_act[bank] + t.t_ras,
                   self.last_wr[bank] + t.t_wr + t.t_writeback_extra)

    def earliest(self, cmd: DramCommand, request_time: float = 0.0) -> float:
        t = self.timing
        when = max(request_time, self.last_issue)
        kind = cmd.kind
        if kind.activates:
            self._check_bank(cmd.bank)
            if not 0 <= cmd.row < self.geometry.rows_per_bank:
                raise ProtocolError("address", f"row {cmd.row} does not exist")
            if kind is not Kind.ACT and not self.multi_activation:
                raise ProtocolError("multi-activation", f"{kind.value} not supported by this device")
            b = cmd.bank
            if self.open_row[b] is not None:
                if not self.row_clone:
                    raise ProtocolError("single-row", f"ACT to bank {b} which is already open")
                when = max(when, self.last_act[b] + t.t_ras)
            else:
                when = max(when, self.last_pre[b] + t.t_rp, self.cycle_start[b] + t.t_rc)
            if self.recent_acts:
                when = max(when, self.recent_acts[-1] + t.t_rrd)
            if len(self.recent_acts) == 4:
                when = max(when, self.recent_acts[0] + t.t_faw)
        elif kind is Kind.PRE:
            self._check_bank(cmd.bank)
            if self.open_row[cmd.bank] is None:
                raise ProtocolError("state", f"PRE to precharged bank {cmd.bank}")
            when = max(when, self._precharge_floor(cmd.bank))
        elif kind is Kind.PREA:
            self._check_group(cmd.bank)
            banks = self._open_in_group(cmd.bank)
            if not banks:
                raise ProtocolError("state", f"PREA with no open bank in group {cmd.bank}")
            when = max(when, *(self._precharge_floor(b) for b in banks))
        elif kind in (Kind.RD, Kind.WR):
            self._check_bank(cmd.bank)
            b = cmd.bank
            if self.open_row[b] is None:
                raise ProtocolError("state", f"{kind.value} to precharged bank {b}")
            if cmd.row != self.open_row[b]:
                raise ProtocolError("state", f"{kind.value} to row {cmd.row}, open row is {self.open_row[b]}")
            when = max(when, self.last_act[b] + t.t_rcd)
            if kind is Kind.WR:
                when = max(when, self.compute_end[self.geometry.group_of(b)])
        elif kind is Kind.COMPUTE:
            self._check_group(cmd.bank)
            banks = self._open_in_group(cmd.bank)
            if not banks:
                raise ProtocolError("state", f"COMPUTE with no open bank in group {cmd.bank}")
            when = max(when, self.compute_end[cmd.bank],
                       *(self.last_act[b] + t.t_rcd for b in banks))
        return when

    def issue(self, cmd: DramCommand, request_time: float = 0.0) -> DramCommand:
        when = self.earliest(cmd, request_time)
        kind = cmd.kind
        if kind.activates:
            b = cmd.bank
            if self.open_row[b] is None:
                self.cycle_start[b] = when
            self.open_row[b] = cmd.row
            self.last_act[b] = when
            self.recent_acts.append(when)
        elif kind is Kind.PRE:
            self._close(cmd.bank, when)
        elif kind is Kind.PREA:
            banks = self._open_in_group(cmd.bank)
            for b in banks:
                self._close(b, when)
            self.compute_end[cmd.bank] = -math.inf
            cmd = replace(cmd, arg=len(banks))
        elif kind is Kind.WR:
            self.last_wr[cmd.bank] = when
        elif kind is Kind.COMPUTE:
            self.compute_end[cmd.bank] = when + cmd.arg * self.timing.t_ck
        issued = cmd.at(when)
        self.last_issue = when
        self.completion = max(self.completion, command_end(issued, self.timing))
        self.commands.append(issued)
        return issued

    def _close(self, bank, when):
        self.open_row[bank] = None
        self.last_pre[bank] = when
        self.last_wr[bank] = -math.inf
        group = self.geometry.group_of(bank)
        if not self._open_in_group(group):
            self.compute_end[group] = -math.inf

    def trace(self) -> CommandTrace:
        return CommandTrace(list(self.commands), self.completion)


def issue(sched: Scheduler, cmd: DramCommand, request_time: float = 0.0):
    """Functional-style wrapper: returns ``(scheduler, issue_time)``."""
    issued = sched.issue(cmd, request_time)
    return sched, issued.issue_time


def run_streams(sched: Scheduler, streams: Sequence[Sequence[DramCommand]],
                start: float = 0.0, barriers: Sequence[Iterable[int]] | None = None
                ) -> list[list[DramCommand]]:
    """Interleave independent command streams on one device.

    Commands inside a stream stay in order and each is requested when its
    predecessor was issued.  ``barriers[i]`` lists indices of stream i whose
    command may not be requested before every earlier command of the stream
    has completed (an operation boundary).  Across streams the command that
    can issue earliest goes first; ties go to the lower stream index.
    """
    n = len(streams)
    walls = [frozenset(b) for b in barriers] if barriers is not None else [frozenset()] * n
    if len(walls) != n:
        raise ValueError("need one barrier set per stream")
    pos = [0] * n
    ready = [start] * n
    done = [start] * n
    out: list[list[DramCommand]] = [[] for _ in streams]
    live = [i for i, s in enumerate(streams) if s]

    def request(i):
        return done[i] if pos[i] in walls[i] else ready[i]

    while live:
        if len(live) == 1:
            best = live[0]
        else:
            best, best_t = None, math.inf
            for i in live:
                t = sched.earliest(streams[i][pos[i]], request(i))
                if t < best_t - EPS:
                    best, best_t = i, t
        issued = sched.issue(streams[best][pos[best]], request(best))
        out[best].append(issued)
        ready[best] = issued.issue_time
        done[best] = max(done[best], command_end(issued, sched.timing))
        pos[best] += 1
        if pos[best] == len(streams[best]):
            live.remove(best)
    return out


# -- macros --------------------------------------------------------------------

def expand_macro(name: str, bank: int, *rows: int, first: Kind = Kind.ACT) -> list[DramCommand]:
    """``AAP(bank, src, dst)`` -> ACT ACT PRE; ``AP(bank, row)`` -> ACT PRE.

    ``first`` lets the opening activation be a TRA or DRA.
    """
    name = name.upper()
    if name == "AAP":
        if len(rows) != 2:
            raise ValueError("AAP takes a source and a destination row")
        return [DramCommand(first, bank, rows[0]), ACT(bank, rows[1]), PRE(bank)]
    if name == "AP":
        if len(rows) != 1:
            raise ValueError("AP takes one row")
        return [DramCommand(first, bank, rows[0]), PRE(bank)]
    raise ValueError(f"unknown macro {name!r}")


def macro_latency(name: str, timing: TimingParams) -> float:
    """Latency of a macro issued on an idle device."""
    sched = Scheduler(timing, DramGeometry(), row_clone=True)
    rows = (0, 1) if name.upper() == "AAP" else (0,)
    for cmd in expand_macro(name, 0, *rows):
        sched.issue(cmd)
    return sched.completion


# -- energy --------------------------------------------------------------------

def command_energy(cmd: DramCommand, ep: EnergyParams) -> float:
    kind = cmd.kind
    if kind.activates:
        return ep.e_act
    if kind is Kind.PRE:
        return ep.e_pre
    if kind is Kind.PREA:
        return ep.e_pre * cmd.arg
    if kind is Kind.RD:
        return ep.e_rd
    if kind is Kind.WR:
        return ep.e_wr
    if kind is Kind.COMPUTE:
        return ep.e_tlpe_cycle * cmd.arg
    raise ValueError(kind)


def energy_of(trace: CommandTrace, ep: EnergyParams) -> float:
    """Command energies plus background power over the trace latency (pJ)."""
    return sum(command_energy(c, ep) for c in trace.commands) + ep.p_background * trace.total_latency


# -- independent trace checker -------------------------------------------------

def check_trace(trace: CommandTrace | Sequence[DramCommand], timing: TimingParams,
                geometry: DramGeometry | None = None) -> list[Violation]:
    """Re-verify every timing rule on an issued trace.

    Written separately from :class:`Scheduler`: rules are checked by looking
    back over the ordered command list rather than from incremental state.
    """
    geometry = geometry or DramGeometry()
    cmds = list(trace.commands if isinstance(trace, CommandTrace) else trace)
    gsize = geometry.bank_group_size
    found: list[Violation] = []

    def flag(rule, i, j, detail=""):
        found.append(Violation(rule, i, j, detail))

    for i in range(1, len(cmds)):
        if cmds[i].issue_time < cmds[i - 1].issue_time - EPS:
            flag("order", i - 1, i, "trace not sorted by issue time")

    acts = [i for i, c in enumerate(cmds) if c.kind.activates]
    for a, b in zip(acts, acts[1:]):
        gap = cmds[b].issue_time - cmds[a].issue_time
        if gap < timing.t_rrd - EPS:
            flag("tRRD", a, b, f"{gap:g} ns between activations")
    for k in range(len(acts) - 4):
        a, b = acts[k], acts[k + 4]
        span = cmds[b].issue_time - cmds[a].issue_time
        if span < timing.t_faw - EPS:
            flag("tFAW", a, b, f"5 activations within {span:g} ns")

    def banks_of(c):
        if c.kind is Kind.PREA or c.kind is Kind.COMPUTE:
            return range(c.bank * gsize, (c.bank + 1) * gsize)
        return (c.bank,)

    # per-bank scan: each bank's history is rebuilt from the commands touching it
    per_bank: dict[int, list[int]] = {}
    for i, c in enumerate(cmds):
        for b in banks_of(c):
            per_bank.setdefault(b, []).append(i)

    for bank, idxs in per_bank.items():
        is_open = False
        act_i = None        # latest activation while open
        first_act_i = None  # activation that opened the bank
        pre_i = None
        wr_i = None
        for i in idxs:
            c = cmds[i]
            t = c.issue_time
            if c.kind.activates:
                if is_open:
                    if t - cmds[act_i].issue_time < timing.t_ras - EPS:
                        flag("tRAS", act_i, i, "re-activation of an open bank")
                else:
                    if pre_i is not None and t - cmds[pre_i].issue_time < timing.t_rp - EPS:
                        flag("tRP", pre_i, i)
                    if first_act_i is not None and t - cmds[first_act_i].issue_time < timing.t_rc - EPS:
                        flag("tRC", first_act_i, i)
                    first_act_i = i
                is_open = True
                act_i = i
            elif c.kind in (Kind.PRE, Kind.PREA):
                if not is_open:
                    if c.kind is Kind.PRE:
                        flag("state", i, i, f"PRE to closed bank {bank}")
                    continue
                if t - cmds[act_i].issue_time < timing.t_ras - EPS:
                    flag("tRAS", act_i, i)
                if wr_i is not None and t - cmds[wr_i].issue_time < timing.t_wr + timing.t_writeback_extra - EPS:
                    flag("tWR", wr_i, i)
                is_open, pre_i, wr_i = False, i, None
            elif c.kind in (Kind.RD, Kind.WR):
                if not is_open:
                    flag("state", i, i, f"{c.kind.value} to closed bank {bank}")
                    continue
                if t - cmds[act_i].issue_time < timing.t_rcd - EPS:
                    flag("tRCD", act_i, i)
                if c.kind is Kind.WR:
                    wr_i = i
            elif c.kind is Kind.COMPUTE:
                if is_open and t - cmds[act_i].issue_time < timing.t_rcd - EPS:
                    flag("tRCD", act_i, i, "operand not sensed before compute")

    # write-back may not start before the group's compute has finished
    group_compute: dict[int, int] = {}
    for i, c in enumerate(cmds):
        if c.kind is Kind.COMPUTE:
            group_compute[c.bank] = i
        elif c.kind is Kind.PREA:
            group_compute.pop(c.bank, None)
        elif c.kind is Kind.WR:
            g = c.bank // gsize
            j = group_compute.get(g)
            if j is not None:
                end = cmds[j].issue_time + cmds[j].arg * timing.t_ck
                if c.issue_time < end - EPS:
                    flag("tCOMPUTE", j, i, "write-back before compute finished")
    found.sort(key=lambda v: (v.second, v.first, v.rule))
    return found


# -- CSV trace files -----------------------------------------------------------

CSV_COLUMNS = ("issue_time_ns", "kind", "bank", "row", "arg")


def write_trace_csv(trace: CommandTrace, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in trace.commands:
            w.writerow((f"{c.issue_time:.4f}", c.kind.value, c.bank,
                        "" if c.row < 0 else c.row, c.arg or ""))
    finally:
        if own:
            fh.close()


def read_trace_csv(path_or_file, timing: TimingParams | None = None) -> CommandTrace:
    """Read a trace CSV; the ``arg`` column is optional."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, newline="") if own else path_or_file
    try:
        reader = csv.DictReader(fh)
        missing = {"issue_time_ns", "kind", "bank", "row"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trace CSV lacks columns {sorted(missing)}")
        cmds = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                cmds.append(DramCommand(
                    Kind(rec["kind"].strip().upper()),
                    int(rec["bank"]),
                    int(rec["row"]) if rec["row"].strip() else -1,
                    int(rec.get("arg") or 0),
                    float(rec["issue_time_ns"]),
                ))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    finally:
        if own:
            fh.close()
    timing = timing or TimingParams()
    total = max((command_end(c, timing) for c in cmds), default=0.0)
    return CommandTrace(cmds, total)


def trace_to_csv_string(trace: CommandTrace) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()
