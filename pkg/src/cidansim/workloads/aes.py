"""Bit-sliced AES encryption with AddRoundKey and MixColumns offloaded.

Layout: bit ``k`` of state byte ``i`` of block ``b`` lives in lane ``b`` of
the row holding plane ``8*i + k`` (state bytes in the usual column-major
order).  SubBytes and ShiftRows stay on the host, which reads the planes,
substitutes, permutes, and writes the planes back; on that write plane
(i, k) goes to bank ``(i + k) % 4`` of the group, so neighbouring bytes of a
column always sit in different banks.  MixColumns uses xtime written with
row ops only: a plane rename for the shift and ``msb AND mask`` rows XORed
into the bits of 0x1B.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..backends import BackendKind, RunStats
from ..config import HostCostModel
from ..dram import DramGeometry, EnergyParams, TimingParams
from .machine import RowMachine

ROUNDS = {16: 10, 24: 12, 32: 14}


def _gf_mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = ((a << 1) ^ 0x1B) & 0xFF if a & 0x80 else a << 1
        b >>= 1
    return out


def _make_sbox() -> np.ndarray:
    inv = [0] * 256
    for x in range(1, 256):
        for y in range(1, 256):
            if _gf_mul(x, y) == 1:
                inv[x] = y
                break
    box = np.zeros(256, np.uint8)
    for x in range(256):
        b = inv[x]
        s = b
        for r in range(1, 5):
            s ^= ((b << r) | (b >> (8 - r))) & 0xFF
        box[x] = s ^ 0x63
    return box


SBOX = _make_sbox()
# ShiftRows as a byte permutation: new[i] = old[SHIFT_ROWS[i]]
SHIFT_ROWS = np.array([(4 * ((i // 4 + i % 4) % 4)) + i % 4 for i in range(16)])
XTIME_MASK_BITS = (0, 1, 3, 4)  # bits of 0x1B


def expand_key(key) -> np.ndarray:
    """Round keys for one key (bytes) or many keys (uint8 array (n, len)).

    Returns an array of shape (rounds + 1, 16) or (n, rounds + 1, 16).
    """
    k = np.asarray(bytearray(key) if isinstance(key, (bytes, bytearray)) else key, np.uint8)
    single = k.ndim == 1
    k = np.atleast_2d(k)
    nk = k.shape[1] // 4
    if k.shape[1] not in ROUNDS:
        raise ValueError(f"AES key must be 16, 24 or 32 bytes, got {k.shape[1]}")
    nr = ROUNDS[k.shape[1]]
    words = [k[:, 4 * i:4 * i + 4] for i in range(nk)]
    rcon = 1
    for i in range(nk, 4 * (nr + 1)):
        t = words[i - 1].copy()
        if i % nk == 0:
            t = SBOX[np.roll(t, -1, axis=1)]
            t[:, 0] ^= rcon
            rcon = _gf_mul(rcon, 2)
        elif nk > 6 and i % nk == 4:
            t = SBOX[t]
        words.append(words[i - nk] ^ t)
    out = np.concatenate(words, axis=1).reshape(-1, nr + 1, 16)
    return out[0] if single else out


def encrypt_reference(blocks: np.ndarray, key) -> np.ndarray:
    """Byte-oriented AES on the host; blocks is (n, 16) uint8."""
    rk = expand_key(key)
    s = np.asarray(blocks, np.uint8) ^ rk[..., 0, :] if rk.ndim == 2 else blocks ^ rk[:, 0, :]
    nr = rk.shape[-2] - 1
    xt = np.array([_gf_mul(x, 2) for x in range(256)], np.uint8)
    for r in range(1, nr + 1):
        s = SBOX[s][:, SHIFT_ROWS]
        if r < nr:
            c = s.reshape(-1, 4, 4)
            t = c[:, :, 0] ^ c[:, :, 1] ^ c[:, :, 2] ^ c[:, :, 3]
            c = c ^ t[:, :, None] ^ xt[c ^ np.roll(c, -1, axis=2)]
            s = c.reshape(-1, 16)
        s = s ^ (rk[r] if rk.ndim == 2 else rk[:, r, :])
    return s


def host_op_counts(rounds: int) -> dict:
    """Byte-level op counts of software AES per block, by stage.

    MixColumns per column: 3 XOR for t, then per byte 1 XOR, 3 ops of
    xtime and 2 XOR.  SubBytes is a lookup per byte, ShiftRows a move per
    byte, AddRoundKey a XOR per byte.
    """
    mix = 4 * (3 + 4 * (1 + 3 + 2))
    return {
        "sub_bytes": 16 * rounds,
        "shift_rows": 16 * rounds,
        "mix_columns": mix * (rounds - 1),
        "add_round_key": 16 * (rounds + 1),
    }


def offloaded_share(rounds: int = 10) -> float:
    c = host_op_counts(rounds)
    return (c["mix_columns"] + c["add_round_key"]) / sum(c.values())


def to_planes(blocks: np.ndarray) -> np.ndarray:
    """(n, 16) bytes -> (128, n) bit planes, plane 8*i + k = bit k of byte i."""
    bits = np.unpackbits(blocks[:, :, None], axis=2, bitorder="little")  # (n, 16, 8)
    return bits.reshape(len(blocks), 128).T.copy()


def from_planes(planes: np.ndarray) -> np.ndarray:
    n = planes.shape[1]
    bits = planes.T.reshape(n, 16, 8)
    return np.packbits(bits, axis=2, bitorder="little")[:, :, 0]


@dataclass
class AesResult:
    ciphertext: np.ndarray
    stats: RunStats


class BitslicedAes:
    def __init__(self, backend=BackendKind.CIDAN, geometry: DramGeometry | None = None,
                 timing: TimingParams | None = None, energy: EnergyParams | None = None,
                 host: HostCostModel | None = None):
        self.m = RowMachine(backend, geometry, timing, energy, host)

    # -- host stages ------------------------------------------------------------------
    def _write_state(self, planes: np.ndarray, group: int) -> list:
        return [self.m.put(planes[p], bank=(p // 8 + p % 8) % 4, group=group) for p in range(128)]

    def _read_state(self, rows, lanes: int) -> np.ndarray:
        return np.stack([self.m.get(r)[:lanes] for r in rows])

    def _host_bytes(self, n: int, what: str):
        self.m.charge_host(self.m.host.bytes_ns(n), what)

    # -- PIM stages -------------------------------------------------------------------
    def _xor3(self, a, b, c):
        """a ^ b ^ c choosing an order whose first pair sits in two different banks."""
        for x, y, z in ((a, b, c), (a, c, b), (b, c, a)):
            if x[0] != y[0]:
                s = self.m.op("xor", x, y, avoid=[z[0]])
                out = self.m.op("xor", s, z)
                self.m.free(s)
                return out
        s = self.m.op("xor", a, b)  # all in one bank: the device inserts a fix-up copy
        out = self.m.op("xor", s, c)
        self.m.free(s)
        return out

    def _and_mask(self, msb, partner):
        """msb AND all-ones mask row; the result avoids ``partner``'s bank."""
        m = self.m
        size = m.geometry.bank_group_size
        group = m.geometry.group_of(msb[0])
        cb = partner[0] if partner is not None and partner[0] != msb[0] else None
        if cb is None:
            cb = next(b for b in m.geometry.banks_in_group(group) if b != msb[0])
        return m.op("and", msb, m.constant(1, bank=cb % size, group=group),
                    avoid=[partner[0]] if partner is not None else ())

    def _xtime(self, u: list) -> list:
        """Bit-sliced multiply by x in GF(2^8); u is 8 planes, LSB first."""
        out = [None] * 8
        for j in range(8):
            if j in XTIME_MASK_BITS:
                prev = u[j - 1] if j else None
                m_j = self._and_mask(u[7], prev)
                if prev is None:
                    out[j] = m_j
                else:
                    out[j] = self.m.op("xor", prev, m_j)
                    self.m.free(m_j)
            else:
                out[j] = ("alias", u[j - 1])  # plain shift: reuse the row
        return out

    def _mix_columns(self, rows: list) -> list:
        m = self.m
        size = m.geometry.bank_group_size
        new = [None] * 128
        for c in range(4):
            a = [[rows[8 * (4 * c + i) + k] for k in range(8)] for i in range(4)]
            t01 = [m.op("xor", a[0][k], a[1][k]) for k in range(8)]
            t23 = [m.op("xor", a[2][k], a[3][k], avoid=[t01[k][0]]) for k in range(8)]
            u = [t01,
                 [m.op("xor", a[1][k], a[2][k]) for k in range(8)],
                 t23,
                 [m.op("xor", a[3][k], a[0][k]) for k in range(8)]]
            xs = [[x[1] if isinstance(x[0], str) else x for x in self._xtime(u[i])]
                  for i in range(4)]
            # place t where it never meets an a_i and x_i that share a bank
            t = []
            for k in range(8):
                options = [b for b in range(size) if b not in (t01[k][0] % size, t23[k][0] % size)]
                clash = [sum(a[i][k][0] % size == b and xs[i][k][0] % size == b for i in range(4))
                         for b in options]
                t.append(m.op("xor", t01[k], t23[k], bank=options[clash.index(min(clash))]))
            for i in range(4):
                for k in range(8):
                    new[8 * (4 * c + i) + k] = self._xor3(a[i][k], t[k], xs[i][k])
            for i in range(4):
                m.free(*[x for k, x in enumerate(xs[i]) if k in XTIME_MASK_BITS])
                m.free(*u[i])
            m.free(*t)
        m.free(*rows)
        return new

    def _add_round_key(self, rows: list, key_planes: np.ndarray | None, round_key: np.ndarray | None,
                       group: int, lanes: int) -> list:
        m = self.m
        size = m.geometry.bank_group_size
        out = []
        for p, r in enumerate(rows):
            kb = (r[0] + 1) % size
            if key_planes is not None:
                krow = m.put(key_planes[p], bank=kb, group=group)
            else:
                bit = (int(round_key[p // 8]) >> (p % 8)) & 1
                krow = m.constant(bit, bank=kb, group=group)
            out.append(m.op("xor", r, krow))
            if key_planes is not None:
                m.free(krow)
        if key_planes is not None:
            self._host_bytes(16 * lanes, "round_key_write")
        m.free(*rows)
        return out

    # -- driver -----------------------------------------------------------------------
    def encrypt(self, blocks: np.ndarray, key) -> AesResult:
        blocks = np.asarray(blocks, np.uint8).reshape(-1, 16)
        keys = np.asarray(bytearray(key) if isinstance(key, (bytes, bytearray)) else key, np.uint8)
        per_block = keys.ndim == 2
        if per_block and len(keys) != len(blocks):
            raise ValueError("need one key per block")
        rk = expand_key(keys)
        nr = rk.shape[-2] - 1
        m = self.m
        width = m.width
        groups = m.geometry.n_groups
        out = np.zeros_like(blocks)
        batch = width * groups
        for start in range(0, len(blocks), batch):
            chunk = blocks[start:start + batch]
            states = []
            for g in range(groups):
                part = chunk[g * width:(g + 1) * width]
                if len(part) == 0:
                    break
                lanes = len(part)
                kp = (to_planes_all(rk[start + g * width:start + g * width + lanes])
                      if per_block else None)
                rows = self._write_state(to_planes(part), g)
                self._host_bytes(16 * lanes, "load")
                states.append([rows, lanes, kp, g])
            for r in range(nr + 1):
                for st in states:
                    rows, lanes, kp, g = st
                    if r > 0:
                        s = from_planes(self._read_state(rows, lanes))
                        m.free(*rows)
                        s = SBOX[s][:, SHIFT_ROWS]
                        self._host_bytes(2 * 16 * lanes, "sub_bytes_shift_rows")
                        rows = self._write_state(to_planes(s), g)
                        if r < nr:
                            rows = self._mix_columns(rows)
                    st[0] = self._add_round_key(rows, None if kp is None else kp[r],
                                                None if per_block else rk[r], g, lanes)
            for st in states:
                rows, lanes, _, g = st
                lo = start + g * width
                out[lo:lo + lanes] = from_planes(self._read_state(rows, lanes))
                self._host_bytes(16 * lanes, "store")
                m.free(*rows)
        stats = m.stats(blocks=len(blocks), rounds=nr, offloaded_share=offloaded_share(nr))
        return AesResult(out, stats)


def to_planes_all(round_keys: np.ndarray) -> np.ndarray:
    """(n, rounds+1, 16) round keys -> (rounds+1, 128, n) key planes."""
    return np.stack([to_planes(round_keys[:, r, :]) for r in range(round_keys.shape[1])])


def aes_encrypt(blocks, key, backend=BackendKind.CIDAN, **kw) -> AesResult:
    """Encrypt (n, 16) blocks under one key (bytes) or one key per block ((n, klen) array)."""
    return BitslicedAes(backend, **kw).encrypt(blocks, key)


def aes_ratios(n_blocks: int = 8192, key_bytes: int = 16, backends=("cidan", "redram"),
               host: HostCostModel | None = None, seed: int = 0, **kw) -> dict:
    """End-to-end AES time (host + PIM) on each back-end, normalised to CIDAN."""
    rng = np.random.default_rng(seed)
    blocks = rng.integers(0, 256, (n_blocks, 16), dtype=np.uint8)
    key = bytes(rng.integers(0, 256, key_bytes, dtype=np.uint8))
    runs = {be: aes_encrypt(blocks, key, be, host=host, **kw)
            for be in ("cidan", *[b for b in backends if b != "cidan"])}
    base = runs["cidan"].stats
    ref = encrypt_reference(blocks, key)
    return {be: {
        "total_ns": r.stats.extra["total_ns"],
        "pim_ns": r.stats.extra["pim_ns"],
        "host_ns": r.stats.extra["host_ns"],
        "energy_pj": r.stats.energy_pj,
        "latency_ratio": r.stats.extra["total_ns"] / base.extra["total_ns"],
        "pim_latency_ratio": r.stats.extra["pim_ns"] / base.extra["pim_ns"],
        "energy_ratio": r.stats.energy_pj / base.energy_pj,
        "offloaded_share": r.stats.extra["offloaded_share"],
        "op_mix": r.stats.extra["op_mix"],
        "correct": bool(np.array_equal(r.ciphertext, ref)),
    } for be, r in runs.items()}
