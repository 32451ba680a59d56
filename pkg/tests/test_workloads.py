import itertools
from fractions import Fraction

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings
from hypothesis import strategies as st

from cidansim.backends import UnsupportedOperationError
from cidansim.config import HostCostModel
from cidansim.dram import DramGeometry, TimingParams, check_trace
from cidansim.workloads.aes import (
    BitslicedAes, aes_encrypt, encrypt_reference, expand_key, from_planes, offloaded_share, to_planes,
)
from cidansim.workloads.dna import MyersEngine, edit_distance_dp, myers_batch, myers_search, random_dna
from cidansim.workloads.graph import (
    GraphDataset, GraphEngine, load_edge_list, matching_index, matching_index_oracle,
    partition_graph, random_graph, synthetic_dataset,
)
from cidansim.workloads.machine import RowMachine
from cidansim.workloads.microbench import MB, MicrobenchSpec, ratio_table, run_microbench

SMALL = DramGeometry(cols_per_row=16)  # 128-bit rows keep workload tests quick


def aes_oracle(blocks, keys):
    out = []
    for k, p in zip(keys, blocks):
        enc = Cipher(algorithms.AES(bytes(k)), modes.ECB()).encryptor()
        out.append(np.frombuffer(enc.update(bytes(p)) + enc.finalize(), np.uint8))
    return np.array(out)


# -- microbench -------------------------------------------------------------------

def test_microbench_spec_validation():
    assert MicrobenchSpec("and", "1Mb").vector_size_bits == MB
    with pytest.raises(ValueError):
        MicrobenchSpec("and", 0)
    with pytest.raises(UnsupportedOperationError):
        run_microbench(MicrobenchSpec("or", MB, "drisa"))


@pytest.mark.parametrize("op", ["and", "not", "xor", "nand", "add"])
def test_microbench_verifies(op):
    res = run_microbench(MicrobenchSpec(op, 3 * 8192 + 100, "cidan"))
    assert res.verified
    assert check_trace(res.stats.trace, TimingParams(), DramGeometry()) == []


def test_microbench_latency_linear_in_size():
    for backend in ("cidan", "redram", "ambit"):
        sizes = np.array([1, 2, 4]) * MB
        lat = np.array([run_microbench(MicrobenchSpec("and", int(n), backend), verify=False).stats.latency_ns
                        for n in sizes])
        fit = np.polyfit(sizes, lat, 1)
        resid = lat - np.polyval(fit, sizes)
        r2 = 1 - (resid ** 2).sum() / ((lat - lat.mean()) ** 2).sum()
        assert r2 >= 0.999


def test_ratio_table_normalised_to_cidan():
    table = ratio_table("and", MB, ("redram",))
    assert table["cidan"]["latency_ratio"] == 1.0
    assert table["redram"]["latency_ratio"] == pytest.approx(
        table["redram"]["latency_ns"] / table["cidan"]["latency_ns"])


# -- AES ------------------------------------------------------------------------------

FIPS_KEY = bytes(range(16))
FIPS_PT = bytes.fromhex("00112233445566778899aabbccddeeff")


@pytest.mark.parametrize("backend", ["cidan", "redram", "ambit"])
def test_aes_known_answer(backend):
    res = aes_encrypt(np.frombuffer(FIPS_PT, np.uint8).reshape(1, 16), FIPS_KEY, backend)
    assert res.ciphertext.tobytes().hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"
    assert res.stats.extra["fixup_copies"] == 0


def test_reference_aes_matches_library():
    rng = np.random.default_rng(4)
    for klen in (16, 24, 32):
        keys = rng.integers(0, 256, (20, klen), dtype=np.uint8)
        pts = rng.integers(0, 256, (20, 16), dtype=np.uint8)
        assert np.array_equal(encrypt_reference(pts, keys), aes_oracle(pts, keys))


@pytest.mark.parametrize("klen", [16, 24, 32])
def test_bitsliced_aes_matches_library(klen):
    rng = np.random.default_rng(klen)
    keys = rng.integers(0, 256, (100, klen), dtype=np.uint8)
    pts = rng.integers(0, 256, (100, 16), dtype=np.uint8)
    res = aes_encrypt(pts, keys, "cidan", geometry=SMALL)
    assert np.array_equal(res.ciphertext, aes_oracle(pts, keys))
    assert res.stats.extra["rounds"] == {16: 10, 24: 12, 32: 14}[klen]


def test_aes_single_key_batch_over_groups():
    rng = np.random.default_rng(11)
    pts = rng.integers(0, 256, (300, 16), dtype=np.uint8)  # spans both groups and two batches
    key = bytes(rng.integers(0, 256, 16, dtype=np.uint8))
    res = aes_encrypt(pts, key, "redram", geometry=SMALL)
    assert np.array_equal(res.ciphertext, aes_oracle(pts, [key] * len(pts)))


def test_add_round_key_on_zero_state_gives_key():
    rng = np.random.default_rng(2)
    key = rng.integers(0, 256, 16, dtype=np.uint8)
    eng = BitslicedAes("cidan", geometry=SMALL)
    rows = eng._write_state(to_planes(np.zeros((1, 16), np.uint8)), 0)
    out = eng._add_round_key(rows, None, key, 0, 1)
    assert from_planes(eng._read_state(out, 1))[0].tolist() == key.tolist()


def test_aes_stats_split_and_bad_key():
    res = aes_encrypt(np.zeros((4, 16), np.uint8), FIPS_KEY, "cidan", geometry=SMALL,
                      host=HostCostModel(ns_per_byte=1.0))
    ex = res.stats.extra
    assert ex["host_ns"] > 0 and ex["pim_ns"] > 0
    assert ex["total_ns"] == pytest.approx(ex["host_ns"] + ex["pim_ns"])
    assert set(ex["op_mix"]) == {"and", "xor"}
    with pytest.raises(ValueError):
        expand_key(bytes(15))


def test_offloaded_share_near_three_quarters():
    assert 0.7 < offloaded_share(10) < 0.85


# -- graph ----------------------------------------------------------------------------

def test_triangle_matching_index():
    g = GraphDataset.from_edges("k3", 3, [(0, 1), (1, 2), (0, 2)])
    value, stats = matching_index(g, 1, 2, "cidan")
    assert value == Fraction(1, 3)
    assert stats.extra["op_mix"] == {"and": 1, "or": 1}


def test_identical_rows_and_isolated_pair():
    g = GraphDataset.from_edges("star", 4, [(0, 2), (1, 2)])
    assert matching_index(g, 0, 1, "ambit")[0] == 1
    h = GraphDataset.from_edges("empty", 3, [])
    assert matching_index(h, 0, 1, "redram")[0] == 0


def test_invalid_vertices():
    g = random_graph(5, 0.5)
    with pytest.raises(IndexError):
        matching_index(g, 0, 9)
    with pytest.raises(ValueError):
        matching_index(g, 2, 2)


def test_adjacency_symmetric_without_self_loops():
    g = random_graph(40, 0.2, seed=3)
    m = g.dense()
    assert (m == m.T).all() and not np.diag(m).any()


@settings(max_examples=6, deadline=None)
@given(st.integers(2, 64), st.floats(0.0, 0.6), st.integers(0, 1000), st.sampled_from(["cidan", "redram"]))
def test_matching_index_all_pairs_brute_force(n, p, seed, backend):
    g = random_graph(n, p, seed)
    eng = GraphEngine(g, backend, geometry=SMALL)
    for i, j in itertools.combinations(range(n), 2):
        v = eng.matching_index(i, j)
        assert v == matching_index_oracle(g, i, j) == eng.matching_index(j, i)
        assert 0 <= v <= 1


def test_partition_balance_and_determinism():
    g = GraphDataset.from_edges("line", 8, [(k, k + 1) for k in range(7)])
    assert np.bincount(partition_graph(g, 2)).tolist() == [4, 4]
    r = random_graph(301, 0.03, seed=5)
    parts = partition_graph(r, 8)
    load = np.bincount(parts, minlength=8)
    assert load.max() / load.min() <= 1.1
    assert np.array_equal(parts, partition_graph(r, 8))


def test_load_edge_list(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# comment\n10 20\n20 30\n\n10 30  # closing edge\n")
    g = load_edge_list(path)
    assert g.n == 3 and g.n_edges == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("1 x\n")
    with pytest.raises(ValueError, match=":1:"):
        load_edge_list(bad)


def test_synthetic_dataset_sizes():
    g = synthetic_dataset("facebook", seed=1, scale=0.1)
    assert g.n == 403 and g.n_edges == 8823


# -- DNA ------------------------------------------------------------------------------

def test_dp_oracle_examples():
    assert edit_distance_dp("abc", "abd", "global")[-1] == 1
    assert edit_distance_dp("ACGT", "ACGT", "global")[-1] == 0
    assert min(edit_distance_dp("CGT", "AACGTT", "search")) == 0


def test_myers_simple_cases():
    res = myers_search("abc", "abd", "cidan", mode="global", geometry=SMALL)
    assert res.distances[0][-1] == 1
    res = myers_search("ACGTAC", "ACGTAC", "redram", mode="global", geometry=SMALL)
    assert res.distances[0][-1] == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 64), st.integers(1, 80), st.sampled_from(["search", "global"]),
       st.integers(0, 2 ** 32 - 1))
def test_myers_single_matches_dp(m, n, mode, seed):
    rng = np.random.default_rng(seed)
    p, t = random_dna(m, rng), random_dna(n, rng)
    res = myers_search(p, t, "cidan", mode=mode, geometry=DramGeometry(cols_per_row=8))
    assert res.distances[0] == edit_distance_dp(p, t, mode)


def test_myers_batch_and_multiword_patterns():
    rng = np.random.default_rng(8)
    pats = [random_dna(int(rng.integers(65, 200)), rng) for _ in range(8)]
    texts = [random_dna(int(rng.integers(1, 120)), rng) for _ in range(8)]
    for backend in ("cidan", "ambit"):
        res = myers_batch(pats, texts, backend, mode="search", geometry=DramGeometry(cols_per_row=256))
        assert res.distances == [edit_distance_dp(p, t) for p, t in zip(pats, texts)]
        assert res.stats.extra["fixup_copies"] == 0


def test_myers_pim_add_mode():
    rng = np.random.default_rng(6)
    pats = [random_dna(12, rng) for _ in range(4)]
    texts = [random_dna(20, rng) for _ in range(4)]
    res = myers_batch(pats, texts, "cidan", mode="global", add_mode="pim", geometry=SMALL)
    assert res.distances == [edit_distance_dp(p, t, "global") for p, t in zip(pats, texts)]
    assert res.op_mix["add"] > 0
    with pytest.raises(UnsupportedOperationError):
        myers_batch(pats, texts, "redram", add_mode="pim")


def test_myers_op_mix_per_character():
    rng = np.random.default_rng(1)
    res = myers_search(random_dna(10, rng), random_dna(7, rng), "cidan", geometry=SMALL)
    assert res.op_mix == {"or": 42, "and": 21, "xor": 7, "not": 14}


def test_myers_errors():
    with pytest.raises(ValueError):
        myers_search("A" * 200, "ACGT", geometry=SMALL)
    with pytest.raises(ValueError, match="alphabet"):
        MyersEngine(geometry=SMALL).run(["ACGT"], ["ACGU"], alphabet="ACGT")
    with pytest.raises(ValueError):
        myers_search("ACGT", "ACGT", mode="local", geometry=SMALL)


# -- row machine -------------------------------------------------------------------------

def test_row_machine_keeps_cidan_operands_apart():
    m = RowMachine("cidan", SMALL)
    a = m.put(np.ones(128, np.uint8), bank=0)
    b = m.put(np.zeros(128, np.uint8), bank=1)
    c = m.op("or", a, b)
    assert c[0] not in (a[0], b[0])
    assert m.get(c).all()
    st_ = m.stats()
    assert st_.extra["fixup_copies"] == 0 and st_.extra["op_mix"] == {"or": 1}
