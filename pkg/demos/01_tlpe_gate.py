"""One TLPE evaluating AND, XOR and a full add, cycle by cycle.

The gate sums weighted inputs (L2 weighs -2, the four bank inputs and L1
weigh +1) and fires when the sum reaches the selected threshold.  Two-cycle
functions park an intermediate in a latch and read it back.
"""
import itertools

from cidansim.threshold import Func, TlpeState, compile_schedule, run_schedule

for func in (Func.AND, Func.XOR):
    sched = compile_schedule(func)
    print(f"{func.value.upper()}: {len(sched.cycles)} cycle(s)")
    for k, word in enumerate(sched.cycles, 1):
        print(f"  cycle {k}: enable={word.enable_bank} threshold={word.threshold_select}")
    for a, b in itertools.product((0, 1), repeat=2):
        out, _, _ = run_schedule(sched, [a, b])
        print(f"  {a} {func.value} {b} = {out}")

# ADD: cycle 1 stores the majority (carry) in L2, cycle 2 forms the sum
# and moves the carry into L1 for the next bit.
sched = compile_schedule(Func.ADD)
print("ADD with the carry chained through L1")
state = TlpeState()
a_bits, b_bits = [1, 0, 1, 1], [1, 1, 0, 1]  # 13 + 11, least significant bit first
total = []
for a, b in zip(a_bits, b_bits):
    s, carry, state = run_schedule(sched, [a, b], state)
    total.append(s)
total.append(carry)
value = sum(bit << k for k, bit in enumerate(total))
print(f"  13 + 11 = {value}  (sum bits {total})")
