"""The three applications on small inputs, each checked against a host oracle."""
import numpy as np

from cidansim.config import load_config
from cidansim.workloads.aes import aes_encrypt, encrypt_reference
from cidansim.workloads.dna import edit_distance_dp, myers_search
from cidansim.workloads.graph import matching_index, matching_index_oracle, random_graph

cfg = load_config()
rng = np.random.default_rng(0)

# AES: SubBytes/ShiftRows on the host, AddRoundKey and MixColumns as row XOR/AND
blocks = rng.integers(0, 256, (64, 16), dtype=np.uint8)
key = bytes(range(16))
for be in ("cidan", "redram"):
    res = aes_encrypt(blocks, key, be, host=cfg.host("aes"))
    ex = res.stats.extra
    print(f"AES {be:<7} correct {np.array_equal(res.ciphertext, encrypt_reference(blocks, key))}  "
          f"host {ex['host_ns'] / 1e3:.1f} us  DRAM {ex['pim_ns'] / 1e3:.1f} us  ops {ex['op_mix']}")

# matching index: |N(i) & N(j)| / |N(i) | N(j)| from one AND and one OR row op
g = random_graph(50, 0.2, seed=3)
for be in ("cidan", "ambit"):
    value, st = matching_index(g, 4, 7, be)
    print(f"graph {be:<7} M(4, 7) = {value} (oracle {matching_index_oracle(g, 4, 7)})  "
          f"{st.latency_ns:.1f} ns")

# Myers: per text character 6 OR, 3 AND, 1 XOR and 2 NOT, plus an add and two shifts
pattern, text = "ACGTTGCA", "TTACGTAGCATT"
res = myers_search(pattern, text, "cidan")
print(f"myers best distance {min(res.distances[0])} "
      f"(DP {min(edit_distance_dp(pattern, text))})  op mix {res.op_mix}")
