import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cidansim.backends import AllocationError, BackendKind, PimDevice, UnsupportedOperationError
from cidansim.dram import DramGeometry
from cidansim.isa import (
    AddressMap, BbopInstruction, BbopSyntaxError, VectorPlacement, allocate, decode,
    format_instruction, lower, parse_length, read_vector, run_instruction, write_vector,
)
from cidansim.threshold import Func, boolean_oracle

G = DramGeometry()
ROW = G.row_bytes  # 1024-byte rows


def test_decode_basic():
    instr = decode("bbop 0x0, 0x2000, 0x4000, and")
    assert instr == BbopInstruction(Func.AND, 0, 0x2000, 0x4000, 8192, BackendKind.CIDAN)


def test_decode_length_and_unary():
    instr = decode("BBOP 0x400, 0x800, _, not, 2Mb  # comment", "ambit")
    assert instr.func is Func.NOT and instr.src2 is None and instr.length == 2 * 1024 ** 2


@pytest.mark.parametrize("text,col", [
    ("bbop 0x0, 0x2000, and", 22),
    ("bop 0x0, 0x0, 0x0, and", 1),
    ("bbop 0x0, , 0x0, and", 11),
    ("bbop 0x0, 0x10, 0x0, and", 11),
    ("bbop 0x0, 0x0, 0x0, frob", 21),
    ("bbop 0x0, 0x0, 0x400, not", 16),
    ("bbop 0x0, 0x0, 0x400, and, 3parsecs", 28),
])
def test_decode_errors_report_position(text, col):
    with pytest.raises(BbopSyntaxError) as e:
        decode(text)
    assert e.value.position + 1 == col, str(e.value)
    assert f"column {col}" in str(e.value)


def test_decode_capability_check():
    with pytest.raises(UnsupportedOperationError):
        decode("bbop 0x0, 0x0, 0x400, xor", "drisa")


def test_lengths():
    assert parse_length("4Mb") == 4 * 1024 ** 2
    assert parse_length("3Kb") == 3072 and parse_length("17") == 17
    with pytest.raises(ValueError):
        parse_length("4 GB")


addr = st.integers(0, 4000).map(lambda k: k * ROW)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(list(Func)), addr, addr, addr, st.integers(0, 10 ** 7))
def test_format_decode_round_trip(func, d, s1, s2, length):
    instr = BbopInstruction(func, d, s1, s2 if func.arity == 2 else None, length)
    assert decode(format_instruction(instr)) == instr


def test_address_map_interleaves_groups():
    amap = AddressMap(G, "cidan")
    assert [amap.locate(0, k) for k in range(4)] == [(0, 0), (4, 0), (0, 1), (4, 1)]
    base = AddressMap(G, "ambit")
    assert [base.locate(0, k) for k in range(4)] == [(0, 0), (4, 0), (1, 0), (5, 0)]
    with pytest.raises(AllocationError):
        amap.locate(10)


def test_allocate_4mb_vector():
    instr = BbopInstruction(Func.AND, 64 * 1024 ** 2, 0, 32 * 1024 ** 2, 4 * 1024 ** 2)
    plan = allocate(instr, G)
    assert len(plan.chunks) == 512
    per_group = np.bincount([c.group for c in plan.chunks])
    assert per_group.tolist() == [256, 256]
    assert plan.violations(G) == []
    assert allocate(instr, G) == plan


def test_allocate_single_chunk_distinct_banks():
    plan = allocate(decode("bbop 0x4000000, 0x0, 0x2000000, or"), G)
    (c,) = plan.chunks
    assert len({c.dest[0], c.src1[0], c.src2[0]}) == 3
    assert {G.group_of(b) for b in (c.dest[0], c.src1[0], c.src2[0])} == {c.group}


def test_pinned_same_bank_gets_fixup_copy():
    instr = decode("bbop 0x4000000, 0x0, 0x2000000, and")
    plan = allocate(instr, G, pins={"src1": (0, 5), "src2": (0, 6)})
    (c,) = plan.chunks
    assert len(c.fixups) == 1 and c.fixups[0][0] == (0, 6)
    calls = lower(instr, plan)
    assert [x.func for x in calls] == [Func.COPY, Func.AND]
    assert calls[1].src2 == c.fixups[0][1] and calls[1].src2[0] not in (0, c.dest[0])
    assert plan.violations(G) == []


def test_violations_detects_illegal_plan():
    instr = decode("bbop 0x4000000, 0x0, 0x2000000, and")
    plan = allocate(instr, G)
    c = plan.chunks[0]
    bad = VectorPlacement(plan.backend, plan.func, (type(c)(c.group, c.dest, c.src1, c.src1, c.valid_bits),))
    assert bad.violations(G)


def test_plan_json_round_trip():
    instr = decode("bbop 0x4000000, 0x0, 0x2000000, xor, 20000")
    plan = allocate(instr, G, pins={"src1": (0, 5), "src2": (0, 6)})
    assert VectorPlacement.from_json(plan.to_json()) == plan


def test_lower_pads_last_chunk_and_empty_plan():
    instr = BbopInstruction(Func.AND, 64 * ROW * 1024, 0, 32 * ROW * 1024, int(2.5 * 8192))
    plan = allocate(instr, G)
    assert len(lower(instr, plan)) == 3
    assert [c.valid_bits for c in plan.chunks] == [8192, 8192, 4096]
    empty = BbopInstruction(Func.AND, 0, ROW, 2 * ROW, 0)
    assert lower(empty, allocate(empty, G)) == []


def test_baseline_allocation_rejects_split_banks():
    with pytest.raises(AllocationError):
        allocate(decode("bbop 0x4000000, 0x0, 0x2000000, and", "ambit"), G,
                 pins={"src2": (1, 0)})


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([("cidan", Func.XOR), ("cidan", Func.NAND), ("cidan", Func.NOT),
                        ("ambit", Func.OR), ("redram", Func.XOR), ("drisa", Func.AND)]),
       st.integers(1, 5 * 8192), st.integers(0, 2 ** 32 - 1))
def test_lowered_plan_equals_host_oracle(cell, length, seed):
    backend, func = cell
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 2, (2, length), dtype=np.uint8)
    instr = BbopInstruction(func, 64 * 1024 ** 2, 0, 32 * 1024 ** 2 if func.arity == 2 else None,
                            length, BackendKind.parse(backend))
    dev = PimDevice(backend)
    plan = allocate(instr, dev.geometry)
    write_vector(dev, plan, "src1", a)
    if func.arity == 2:
        write_vector(dev, plan, "src2", b)
    run_instruction(dev, instr)
    assert np.array_equal(read_vector(dev, plan), boolean_oracle(func, a, b))
