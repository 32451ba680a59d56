"""Threshold logic gate and the threshold logic processing element (TLPE).

The gate is a comparator over a weighted sum of binary inputs.  A TLPE wraps
one gate with two latches (L1, L2), four bank inputs that can be inverted or
disabled, and a selectable threshold.  The fixed gate layout is::

    position   0     1    2    3    4    5
    weight    -2    +1   +1   +1   +1   +1
    input     L2    B1   B2   B3   B4   L1

Functions that are not threshold functions (XOR, XNOR, full add) are run as
short multi-cycle schedules.  Everything here works on plain ints as well as
on numpy arrays of 0/1 values, where every array element is an independent
lane of a TLPE array.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

GATE_WEIGHTS = (-2, 1, 1, 1, 1, 1)
N_BANK_INPUTS = 4


class Func(str, Enum):
    COPY = "copy"
    NOT = "not"
    AND = "and"
    OR = "or"
    NAND = "nand"
    NOR = "nor"
    XOR = "xor"
    XNOR = "xnor"
    ADD = "add"

    @property
    def arity(self) -> int:
        return 1 if self in (Func.COPY, Func.NOT) else 2

    @classmethod
    def parse(cls, name) -> "Func":
        if isinstance(name, Func):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise UnsupportedFunctionError(f"unknown function {name!r}") from None


class UnsupportedFunctionError(ValueError):
    """Raised for a function a component cannot realise."""


def boolean_oracle(func: Func, a, b=0):
    """Reference semantics of every row function, on ints or 0/1 arrays."""
    func = Func.parse(func)
    if func is Func.COPY:
        return a
    if func is Func.NOT:
        return 1 - a
    if func is Func.AND:
        return a & b
    if func is Func.OR:
        return a | b
    if func is Func.NAND:
        return 1 - (a & b)
    if func is Func.NOR:
        return 1 - (a | b)
    if func is Func.XOR:
        return a ^ b
    if func is Func.XNOR:
        return 1 - (a ^ b)
    raise UnsupportedFunctionError(f"{func.value} has no single-output oracle")


def _as_int(x):
    if isinstance(x, np.ndarray):
        return x.astype(np.int16)
    return int(x)


def _as_bit(x):
    if isinstance(x, np.ndarray):
        return x.astype(np.uint8)
    return int(bool(x))


@dataclass(frozen=True)
class ThresholdFunction:
    """Weights and threshold of ``f(x) = 1 iff sum(w_i * x_i) >= T``."""

    weights: tuple[int, ...]
    threshold: int

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        object.__setattr__(self, "threshold", int(self.threshold))
        if not self.weights:
            raise ValueError("a threshold function needs at least one weight")

    def __len__(self):
        return len(self.weights)

    def __str__(self):
        return "[" + ", ".join(map(str, self.weights)) + f"; {self.threshold}]"

    def weighted_sum(self, inputs: Sequence):
        if len(inputs) != len(self.weights):
            raise ValueError(
                f"expected {len(self.weights)} inputs, got {len(inputs)}")
        total = 0
        for w, x in zip(self.weights, inputs):
            if w:
                total = total + w * _as_int(x)
        return total

    def __call__(self, inputs: Sequence):
        return eval_threshold(self, inputs)


def eval_threshold(tf: ThresholdFunction, inputs: Sequence):
    """Return 1 iff the weighted sum of ``inputs`` reaches the threshold."""
    return _as_bit(tf.weighted_sum(inputs) >= tf.threshold)


class LatchAction(str, Enum):
    NONE = "none"
    STORE_L1 = "store_l1"
    STORE_L2 = "store_l2"
    MOVE_L2_TO_L1 = "move_l2_to_l1"


class CombineMode(str, Enum):
    FINAL = "final"
    # result = gate output OR the value held in L2 before the cycle
    OR_WITH_L2 = "or_with_l2"


@dataclass(frozen=True)
class TlpeControlWord:
    invert: tuple[bool, bool, bool, bool] = (False,) * 4
    enable_bank: tuple[bool, bool, bool, bool] = (False,) * 4
    enable_l1_feedback: bool = False
    enable_l2_feedback: bool = False
    threshold_select: int = 1
    latch_action: LatchAction = LatchAction.NONE
    combine_mode: CombineMode = CombineMode.FINAL

    def __post_init__(self):
        if self.threshold_select not in (1, 2):
            raise ValueError("threshold_select must be 1 or 2")
        if len(self.invert) != N_BANK_INPUTS or len(self.enable_bank) != N_BANK_INPUTS:
            raise ValueError("control word needs exactly four bank controls")
        object.__setattr__(self, "invert", tuple(bool(v) for v in self.invert))
        object.__setattr__(self, "enable_bank", tuple(bool(v) for v in self.enable_bank))

    def gate(self) -> ThresholdFunction:
        """The threshold function actually evaluated: disabled inputs get weight 0."""
        enables = (self.enable_l2_feedback, *self.enable_bank, self.enable_l1_feedback)
        weights = tuple(w if en else 0 for w, en in zip(GATE_WEIGHTS, enables))
        return ThresholdFunction(weights, self.threshold_select)

    def routed(self, positions: Sequence[int]) -> "TlpeControlWord":
        """Move logical operand k onto bank input ``positions[k]``."""
        invert = [False] * N_BANK_INPUTS
        enable = [False] * N_BANK_INPUTS
        for k, pos in enumerate(positions):
            invert[pos] = self.invert[k]
            enable[pos] = self.enable_bank[k]
        for k in range(len(positions), N_BANK_INPUTS):
            if self.enable_bank[k]:
                raise ValueError(f"operand {k} is enabled but not routed")
        return replace(self, invert=tuple(invert), enable_bank=tuple(enable))


@dataclass(frozen=True)
class TlpeState:
    """Latch contents; ints for a single TLPE or arrays for a whole TLPEA."""

    l1: object = 0
    l2: object = 0

    @classmethod
    def zeros(cls, width: int | None = None) -> "TlpeState":
        if width is None:
            return cls(0, 0)
        return cls(np.zeros(width, np.uint8), np.zeros(width, np.uint8))


def tlpe_cycle(state: TlpeState, ctrl: TlpeControlWord, bank_inputs: Sequence):
    """Evaluate one clock of the TLPE. Returns ``(new_state, output)``."""
    if len(bank_inputs) != N_BANK_INPUTS:
        raise ValueError("a TLPE has exactly four bank inputs")
    conditioned = []
    for x, inv in zip(bank_inputs, ctrl.invert):
        x = _as_bit(x)
        conditioned.append(1 - x if inv else x)
    out = eval_threshold(ctrl.gate(), [state.l2, *conditioned, state.l1])
    if ctrl.combine_mode is CombineMode.OR_WITH_L2:
        out = out | _as_bit(state.l2)

    action = ctrl.latch_action
    if action is LatchAction.STORE_L1:
        state = TlpeState(out, state.l2)
    elif action is LatchAction.STORE_L2:
        state = TlpeState(state.l1, out)
    elif action is LatchAction.MOVE_L2_TO_L1:
        state = TlpeState(state.l2, state.l2)
    return state, out


class ResultSource(str, Enum):
    FINAL_CYCLE = "final_cycle"
    OR_L2_FINAL = "or_l2_final"


@dataclass(frozen=True)
class Schedule:
    func: Func
    cycles: tuple[TlpeControlWord, ...]
    result_source: ResultSource = ResultSource.FINAL_CYCLE
    produces_carry: bool = False
    operands: int = 2

    def routed(self, positions: Sequence[int]) -> "Schedule":
        return replace(self, cycles=tuple(c.routed(positions) for c in self.cycles))


def _word(enable=(), invert=(), t=1, l1=False, l2=False,
          action=LatchAction.NONE, combine=CombineMode.FINAL) -> TlpeControlWord:
    return TlpeControlWord(
        invert=tuple(k in invert for k in range(N_BANK_INPUTS)),
        enable_bank=tuple(k in enable for k in range(N_BANK_INPUTS)),
        enable_l1_feedback=l1,
        enable_l2_feedback=l2,
        threshold_select=t,
        latch_action=action,
        combine_mode=combine,
    )


def compile_schedule(func, carry_input: str = "latch") -> Schedule:
    """Control words for ``func`` with operand I1 on input 0, I2 on input 1.

    For ADD the carry-in is either latch L1 (``carry_input="latch"``, the
    bit-serial chaining mode) or a third operand row on input 2 (``"bank"``).
    """
    func = Func.parse(func)
    single = {
        Func.COPY: _word(enable=(0,), t=1),
        Func.NOT: _word(enable=(0,), invert=(0,), t=1),
        Func.AND: _word(enable=(0, 1), t=2),
        Func.OR: _word(enable=(0, 1), t=1),
        Func.NAND: _word(enable=(0, 1), invert=(0, 1), t=1),
        Func.NOR: _word(enable=(0, 1), invert=(0, 1), t=2),
    }
    if func in single:
        return Schedule(func, (single[func],), operands=func.arity)
    if func is Func.XOR:
        cycles = (
            _word(enable=(0, 1), invert=(1,), t=2, action=LatchAction.STORE_L2),
            _word(enable=(0, 1), invert=(0,), t=2, l2=True, combine=CombineMode.OR_WITH_L2),
        )
        return Schedule(func, cycles, ResultSource.OR_L2_FINAL)
    if func is Func.XNOR:
        cycles = (
            _word(enable=(0, 1), t=2, action=LatchAction.STORE_L2),
            _word(enable=(0, 1), invert=(0, 1), t=2, l2=True, combine=CombineMode.OR_WITH_L2),
        )
        return Schedule(func, cycles, ResultSource.OR_L2_FINAL)
    if func is Func.ADD:
        if carry_input == "latch":
            ops, from_l1 = (0, 1), True
        elif carry_input == "bank":
            ops, from_l1 = (0, 1, 2), False
        else:
            raise ValueError("carry_input must be 'latch' or 'bank'")
        cycles = (
            # carry-out = Maj(A, B, Cin) -> L2
            _word(enable=ops, t=2, l1=from_l1, action=LatchAction.STORE_L2),
            # sum = [-2, 1, 1, 1; 1](Cout, A, B, Cin), then L2 -> L1
            _word(enable=ops, t=1, l1=from_l1, l2=True, action=LatchAction.MOVE_L2_TO_L1),
        )
        return Schedule(func, cycles, produces_carry=True, operands=len(ops))
    raise UnsupportedFunctionError(f"no TLPE schedule for {func.value}")


def run_schedule(sched: Schedule, inputs: Sequence, state: TlpeState | None = None):
    """Run every cycle of ``sched``; returns ``(result, carry_out, state)``.

    ``carry_out`` is the new L1 for ADD schedules and ``None`` otherwise.
    """
    if state is None:
        state = TlpeState()
    inputs = list(inputs) + [0] * (N_BANK_INPUTS - len(inputs))
    out = 0
    for ctrl in sched.cycles:
        state, out = tlpe_cycle(state, ctrl, inputs)
    carry = state.l1 if sched.produces_carry else None
    return out, carry, state


def _check_rows(rows: Sequence) -> int:
    if not rows:
        raise ValueError("at least one operand row is required")
    if len(rows) > 3:
        raise ValueError("a TLPEA takes at most three operand rows")
    width = len(rows[0])
    for r in rows:
        if len(r) != width:
            raise ValueError("operand rows differ in width")
    return width


def tlpea_apply(sched: Schedule, rows: Sequence, states: TlpeState | None = None):
    """Apply ``sched`` lane-wise over up to three rows of equal width N.

    Returns ``(result_row, states)``; lane i only sees bit i of each row.
    """
    arrays = [np.asarray(r, dtype=np.uint8) for r in rows]
    width = _check_rows(arrays)
    if states is None:
        states = TlpeState.zeros(width)
    elif np.shape(states.l1) != (width,) or np.shape(states.l2) != (width,):
        raise ValueError("need one latch state per lane")
    zero = np.zeros(width, np.uint8)
    inputs = arrays + [zero] * (N_BANK_INPUTS - len(arrays))
    out, _, states = run_schedule(sched, inputs, states)
    return np.asarray(out, dtype=np.uint8), states


class AddResult(NamedTuple):
    planes: list
    carry: np.ndarray
    cycles: int


def tlpea_multibit_add(a_planes: Sequence, b_planes: Sequence, carry=None) -> AddResult:
    """Bit-serial add of transposed operands (plane k = bit k of every lane).

    The carry travels from plane to plane through latch L1, two TLPE cycles
    per plane.  Lane results are the integer sums modulo ``2**len(a_planes)``.
    """
    if len(a_planes) != len(b_planes):
        raise ValueError("operands have different plane counts")
    sched = compile_schedule(Func.ADD)
    width = len(a_planes[0]) if a_planes else 0
    state = TlpeState.zeros(width)
    if carry is not None:
        state = TlpeState(np.asarray(carry, np.uint8).copy(), state.l2)
    planes, cycles = [], 0
    for a, b in zip(a_planes, b_planes):
        out, state = tlpea_apply(sched, [a, b], state)
        planes.append(out)
        cycles += len(sched.cycles)
    return AddResult(planes, np.asarray(state.l1, np.uint8), cycles)


@dataclass
class TlpeArray:
    """A TLPEA with persistent per-lane latches, as owned by one bank group."""

    width: int
    state: TlpeState = field(default=None)
    cycles: int = 0

    def __post_init__(self):
        if self.state is None:
            self.state = TlpeState.zeros(self.width)

    def run(self, sched: Schedule, bank_inputs: Sequence) -> np.ndarray:
        if len(bank_inputs) != N_BANK_INPUTS:
            raise ValueError("a TLPEA has exactly four bank inputs")
        out, _, self.state = run_schedule(sched, bank_inputs, self.state)
        self.cycles += len(sched.cycles)
        return np.asarray(out, dtype=np.uint8)

    def load_carry(self, row) -> None:
        self.state = TlpeState(np.asarray(row, np.uint8).copy(), self.state.l2)
