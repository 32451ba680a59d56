"""Decode a bbop, place it across banks, run it and look at the command trace."""
import numpy as np

from cidansim import PimDevice, check_trace, decode
from cidansim.isa import allocate, lower, read_vector, write_vector
from cidansim.threshold import boolean_oracle

line = "bbop 0x4000000, 0x0, 0x2000000, xor, 64Kb"
rng = np.random.default_rng(1)

for backend in ("cidan", "redram", "ambit"):
    instr = decode(line, backend)
    dev = PimDevice(backend)
    plan = allocate(instr, dev.geometry)
    a, b = rng.integers(0, 2, (2, instr.length), dtype=np.uint8)
    write_vector(dev, plan, "src1", a)
    write_vector(dev, plan, "src2", b)
    for call in lower(instr, plan):
        dev.rowop(call.func, call.src1, call.src2, call.dest, stream=call.stream)
    st = dev.stats()
    ok = np.array_equal(read_vector(dev, plan), boolean_oracle(instr.func, a, b))
    print(f"{backend:<7} {len(plan.chunks)} rows  {st.latency_ns:8.1f} ns  "
          f"macros {dict(sorted(st.macro_counts.items()))}  correct {ok}  "
          f"violations {len(check_trace(st.trace, dev.timing, dev.geometry))}")

# the first CIDAN row op: three ACTs to three banks, two TLPE cycles, write-back, PREA
dev = PimDevice("cidan")
instr = decode("bbop 0x4000000, 0x0, 0x2000000, xor")
for call in lower(instr, allocate(instr, dev.geometry)):
    dev.rowop(call.func, call.src1, call.src2, call.dest)
print("\nCIDAN XOR on one row:")
for c in dev.stats().trace:
    print(f"  t={c.issue_time:6.2f} ns  {c.kind.value:<8} bank {c.bank}")
