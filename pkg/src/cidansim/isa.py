"""The bbop instruction: text format, operand placement and lowering to row ops.

Grammar (case-insensitive, whitespace-insensitive around commas)::

    instruction := "bbop" operand "," operand "," (operand | "_") "," func ["," length]
    operand     := hex ("0x...") or decimal byte address, row-aligned
    func        := copy | not | and | or | nand | nor | xor | xnor | add
    length      := integer [unit]      unit := b | Kb | Mb   (powers of 1024 bits)

Unary functions take ``_`` as second source.  The default length is one row.

Byte addresses map to DRAM rows group-interleaved: consecutive rows of a
vector alternate between bank groups so groups work in parallel.  Inside a
group, CIDAN fills one bank before the next (so vectors in different regions
land in different banks), while the subarray back-ends stripe rows over the
four banks (so equally aligned vectors share a bank, as they must).
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .backends import (
    SCRATCH, AllocationError, BackendKind, PimDevice, check_supported,
)
from .dram import DramGeometry
from .threshold import Func

UNITS = {"": 1, "b": 1, "kb": 1024, "mb": 1024 ** 2}


class BbopSyntaxError(ValueError):
    def __init__(self, message: str, text: str = "", position: int = 0):
        self.position = position
        self.text = text
        super().__init__(f"{message} at column {position + 1}" + (f": {text!r}" if text else ""))


@dataclass(frozen=True)
class BbopInstruction:
    func: Func
    dest: int
    src1: int
    src2: int | None
    length: int  # bits
    backend: BackendKind = BackendKind.CIDAN

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if (self.src2 is None) != (self.func.arity == 1):
            raise ValueError(f"{self.func.value} takes {self.func.arity} source operand(s)")


def parse_length(token: str) -> int:
    m = re.fullmatch(r"\s*(\d+)\s*([a-zA-Z]*)\s*", token)
    if not m or m.group(2).lower() not in UNITS:
        raise ValueError(f"bad length {token!r}")
    return int(m.group(1)) * UNITS[m.group(2).lower()]


def format_length(bits: int) -> str:
    for unit, scale in (("Mb", 1024 ** 2), ("Kb", 1024)):
        if bits and bits % scale == 0:
            return f"{bits // scale}{unit}"
    return f"{bits}b"


_TOKEN = re.compile(r"\s*([^,\s]+)\s*")


def decode(text: str, backend=BackendKind.CIDAN, geometry: DramGeometry | None = None) -> BbopInstruction:
    """Parse one bbop line and check it against ``backend``'s capabilities."""
    geometry = geometry or DramGeometry()
    backend = BackendKind.parse(backend)
    stripped = text.split("#", 1)[0]
    m = re.match(r"\s*bbop\b", stripped, re.IGNORECASE)
    if not m:
        raise BbopSyntaxError("expected 'bbop'", text, len(stripped) - len(stripped.lstrip()))
    fields: list[tuple[str, int]] = []
    pos = m.end()
    rest = stripped[pos:]
    if not rest.strip():
        raise BbopSyntaxError("missing operands", text, pos)
    for part in rest.split(","):
        tm = _TOKEN.fullmatch(part)
        if not tm:
            col = pos + len(part) - len(part.lstrip())
            raise BbopSyntaxError("empty or malformed field", text, col)
        fields.append((tm.group(1), pos + tm.start(1)))
        pos += len(part) + 1
    if len(fields) < 4:
        raise BbopSyntaxError(f"expected dest, src1, src2, func but got {len(fields)} field(s)", text, pos - 1)
    if len(fields) > 5:
        raise BbopSyntaxError("too many fields", text, fields[5][1])

    func_tok, func_pos = fields[3]
    try:
        func = Func.parse(func_tok)
    except ValueError:
        raise BbopSyntaxError(f"unknown func {func_tok!r}", text, func_pos) from None
    check_supported(backend, func)

    def address(tok, col):
        try:
            value = int(tok, 0)
        except ValueError:
            raise BbopSyntaxError(f"bad address {tok!r}", text, col) from None
        if value < 0 or value % geometry.row_bytes:
            raise BbopSyntaxError(
                f"address {tok} is not aligned to a {geometry.row_bytes}-byte row", text, col)
        return value

    dest = address(*fields[0])
    src1 = address(*fields[1])
    src2_tok, src2_pos = fields[2]
    if src2_tok == "_":
        src2 = None
    else:
        src2 = address(src2_tok, src2_pos)
    if func.arity == 1 and src2 is not None:
        raise BbopSyntaxError(f"{func.value} takes one source; use '_'", text, src2_pos)
    if func.arity == 2 and src2 is None:
        raise BbopSyntaxError(f"{func.value} needs a second source", text, src2_pos)
    if len(fields) == 5:
        try:
            length = parse_length(fields[4][0])
        except ValueError as exc:
            raise BbopSyntaxError(str(exc), text, fields[4][1]) from None
    else:
        length = geometry.row_bits
    return BbopInstruction(func, dest, src1, src2, length, backend)


def format_instruction(instr: BbopInstruction) -> str:
    src2 = "_" if instr.src2 is None else f"0x{instr.src2:x}"
    return (f"bbop 0x{instr.dest:x}, 0x{instr.src1:x}, {src2}, {instr.func.value}, "
            f"{format_length(instr.length)}")


# -- placement -------------------------------------------------------------------

class AddressMap:
    """Byte address + chunk index -> (bank, row) for one back-end."""

    def __init__(self, geometry: DramGeometry, backend):
        self.geometry = geometry
        self.backend = BackendKind.parse(backend)

    def locate(self, byte_addr: int, chunk: int = 0) -> tuple[int, int]:
        g = self.geometry
        if byte_addr % g.row_bytes:
            raise AllocationError(f"address 0x{byte_addr:x} is not row-aligned")
        gr = byte_addr // g.row_bytes + chunk
        group, q = gr % g.n_groups, gr // g.n_groups
        if self.backend is BackendKind.CIDAN:
            in_group, row = divmod(q, g.usable_rows)
        else:
            row, in_group = divmod(q, g.bank_group_size)
        if in_group >= g.bank_group_size or row >= g.usable_rows:
            raise AllocationError(f"address 0x{byte_addr:x} chunk {chunk} exceeds memory capacity")
        return group * g.bank_group_size + in_group, row


@dataclass(frozen=True)
class ChunkPlacement:
    group: int
    dest: tuple[int, int]
    src1: tuple[int, int]
    src2: tuple[int, int] | None
    valid_bits: int
    # (from, to) row copies that must run before the chunk's operation
    fixups: tuple = ()


@dataclass(frozen=True)
class VectorPlacement:
    backend: BackendKind
    func: Func
    chunks: tuple[ChunkPlacement, ...] = field(default_factory=tuple)

    def to_json(self) -> str:
        doc = {"backend": self.backend.value, "func": self.func.value,
               "chunks": [asdict(c) for c in self.chunks]}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VectorPlacement":
        doc = json.loads(text)

        def addr(a):
            return None if a is None else tuple(a)

        chunks = tuple(
            ChunkPlacement(c["group"], addr(c["dest"]), addr(c["src1"]), addr(c["src2"]),
                           c["valid_bits"], tuple((tuple(a), tuple(b)) for a, b in c["fixups"]))
            for c in doc["chunks"])
        return cls(BackendKind.parse(doc["backend"]), Func.parse(doc["func"]), chunks)

    def violations(self, geometry: DramGeometry) -> list[str]:
        """Static legality check of every chunk; empty when the plan is legal."""
        out = []
        for k, c in enumerate(self.chunks):
            srcs = [c.src1] + ([c.src2] if c.src2 is not None else [])
            for src, dst in c.fixups:
                srcs = [dst if s == src else s for s in srcs]
            ops = srcs + [c.dest]
            if any(geometry.group_of(b) != c.group for b, _ in ops):
                out.append(f"chunk {k}: operands span bank groups")
            if self.backend is BackendKind.CIDAN:
                banks = [b for b, _ in srcs]
                if len(set(banks)) != len(banks):
                    out.append(f"chunk {k}: sources share a bank")
                if c.dest not in srcs and c.dest[0] in banks:
                    out.append(f"chunk {k}: destination shares a bank with a source")
            elif len({b for b, _ in ops}) != 1:
                out.append(f"chunk {k}: operands are not in one bank")
        return out


def n_chunks(length: int, geometry: DramGeometry) -> int:
    return -(-length // geometry.row_bits)


def allocate(instr: BbopInstruction, geometry: DramGeometry | None = None,
             pins: dict | None = None) -> VectorPlacement:
    """Place every row chunk of ``instr``.

    ``pins`` optionally overrides an operand's location, mapping
    ``"dest"/"src1"/"src2"`` to the (bank, row) of its first chunk; later
    chunks follow at the same stride as the address map would use.  If a pin
    breaks the CIDAN distinct-bank rule, the plan copies the offending source
    to a scratch row of a free bank first.
    """
    geometry = geometry or DramGeometry()
    amap = AddressMap(geometry, instr.backend)
    pins = dict(pins or {})
    unknown = set(pins) - {"dest", "src1", "src2"}
    if unknown:
        raise ValueError(f"unknown pinned operand(s) {sorted(unknown)}")
    base = {"dest": instr.dest, "src1": instr.src1, "src2": instr.src2}
    count = n_chunks(instr.length, geometry)
    chunks = []
    scratch_used: dict[int, int] = {}
    for k in range(count):
        where = {}
        for name, addr in base.items():
            if addr is None:
                where[name] = None
            elif name in pins:
                where[name] = _pinned(pins[name], k, geometry)
            else:
                where[name] = amap.locate(addr, k)
        group = geometry.group_of(where["dest"][0])
        valid = min(geometry.row_bits, instr.length - k * geometry.row_bits)
        fixups = []
        if instr.backend is BackendKind.CIDAN:
            srcs = [where["src1"]] + ([where["src2"]] if where["src2"] is not None else [])
            if any(geometry.group_of(b) != group for b, _ in srcs):
                raise AllocationError(f"chunk {k}: operands are in different bank groups")
            if len(srcs) == 2 and srcs[1][0] == srcs[0][0]:
                taken = {where["dest"][0], srcs[0][0]}
                free = [b for b in geometry.banks_in_group(group) if b not in taken]
                if not free:
                    raise AllocationError(f"chunk {k}: no free bank for a fix-up copy")
                slot = scratch_used.get(free[0], 0)
                scratch_used[free[0]] = slot + 1
                tmp = (free[0], geometry.reserved_row(SCRATCH[slot % len(SCRATCH)]))
                fixups.append((srcs[1], tmp))
                srcs[1] = tmp
            if where["dest"] not in srcs and where["dest"][0] in {b for b, _ in srcs}:
                raise AllocationError(f"chunk {k}: destination shares a bank with a source")
        else:
            ops = [v for v in where.values() if v is not None]
            if len({b for b, _ in ops}) != 1:
                raise AllocationError(
                    f"chunk {k}: {instr.backend.label} needs all operands in one bank, got {ops}")
        chunks.append(ChunkPlacement(group, where["dest"], where["src1"], where["src2"],
                                     valid, tuple(fixups)))
    return VectorPlacement(instr.backend, instr.func, tuple(chunks))


def _pinned(first, k, geometry):
    bank, row = int(first[0]), int(first[1])
    # follow the address map stride: alternate groups, advance a row per round
    group_step, row_step = k % geometry.n_groups, k // geometry.n_groups
    bank = (bank + group_step * geometry.bank_group_size) % geometry.banks_per_chip
    row += row_step
    if row >= geometry.usable_rows:
        raise AllocationError("pinned operand exceeds memory capacity")
    return bank, row


# -- lowering and execution ----------------------------------------------------------

@dataclass(frozen=True)
class RowCall:
    func: Func
    src1: tuple[int, int]
    src2: tuple[int, int] | None
    dest: tuple[int, int]
    stream: int


def lower(instr: BbopInstruction, placement: VectorPlacement) -> list[RowCall]:
    """One row operation per chunk, preceded by any fix-up copies."""
    calls = []
    for c in placement.chunks:
        src2 = c.src2
        for src, dst in c.fixups:
            calls.append(RowCall(Func.COPY, src, None, dst, c.group))
            if src2 == src:
                src2 = dst
        calls.append(RowCall(instr.func, c.src1, src2, c.dest, c.group))
    return calls


def execute(device: PimDevice, calls: Sequence[RowCall]) -> None:
    for call in calls:
        device.rowop(call.func, call.src1, call.src2, call.dest, stream=call.stream)


def write_vector(device: PimDevice, placement: VectorPlacement, operand: str, bits) -> None:
    """Store a host bit vector into an operand's chunks, zero-padding the last row."""
    bits = np.asarray(bits, np.uint8)
    width = device.geometry.row_bits
    for k, c in enumerate(placement.chunks):
        row = np.zeros(width, np.uint8)
        part = bits[k * width:(k + 1) * width]
        row[:len(part)] = part
        device.memory.write(getattr(c, operand), row)


def read_vector(device: PimDevice, placement: VectorPlacement, operand: str = "dest") -> np.ndarray:
    """Concatenate an operand's chunks, masking bits past the vector length."""
    parts = [device.memory.read(getattr(c, operand))[:c.valid_bits] for c in placement.chunks]
    return np.concatenate(parts) if parts else np.zeros(0, np.uint8)


def run_instruction(device: PimDevice, instr: BbopInstruction, pins: dict | None = None) -> VectorPlacement:
    placement = allocate(instr, device.geometry, pins)
    execute(device, lower(instr, placement))
    return placement
