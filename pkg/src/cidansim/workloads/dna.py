"""Myers bit-vector approximate string matching on PIM rows.

Per text character the recurrence needs 6 OR, 3 AND, 1 XOR and 2 NOT row
ops, one carry-propagating add and two one-bit shifts.  The bitwise steps run
on the back-end.  The add and shifts are confined to each pattern's segment
and run on the host by default (``add_mode="host"``); CIDAN can instead do
the add as a bit-serial TLPE add over transposed planes (``add_mode="pim"``).

Several independent problems share one row in *segments* of ``seg_bits``
lanes; problem s owns lanes ``[s*seg_bits, (s+1)*seg_bits)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..backends import BackendKind, RunStats, UnsupportedOperationError
from ..config import HostCostModel
from ..dram import DramGeometry, EnergyParams, TimingParams
from .machine import RowMachine

DNA_ALPHABET = "ACGT"


def edit_distance_dp(pattern: str, text: str, mode: str = "search") -> list[int]:
    """Oracle: last DP row entry after each text character.

    ``search``: best match of the whole pattern ending at each position
    (free start in the text).  ``global``: edit distance between the pattern
    and each text prefix.
    """
    m = len(pattern)
    prev = list(range(m + 1))
    out = []
    for j, t in enumerate(text, 1):
        cur = [0 if mode == "search" else j] + [0] * m
        for i in range(1, m + 1):
            cur[i] = min(prev[i] + 1, cur[i - 1] + 1, prev[i - 1] + (pattern[i - 1] != t))
        out.append(cur[m])
        prev = cur
    return out


@dataclass
class MyersResult:
    distances: list  # one list of per-position distances per problem
    stats: RunStats
    op_mix: dict = field(default_factory=dict)


def _segment_add(x: np.ndarray, y: np.ndarray, seg: int) -> np.ndarray:
    """Add two rows as independent little-endian ``seg``-bit integers (mod 2**seg)."""
    lanes = x.shape[-1]
    n = lanes // seg
    xb = np.packbits(x.reshape(*x.shape[:-1], n, seg), axis=-1, bitorder="little")
    yb = np.packbits(y.reshape(*y.shape[:-1], n, seg), axis=-1, bitorder="little")
    flat_x = xb.reshape(-1, xb.shape[-1])
    flat_y = yb.reshape(-1, yb.shape[-1])
    nbytes = xb.shape[-1]
    mask = (1 << seg) - 1
    out = np.empty_like(flat_x)
    for k in range(flat_x.shape[0]):
        s = (int.from_bytes(flat_x[k].tobytes(), "little")
             + int.from_bytes(flat_y[k].tobytes(), "little")) & mask
        out[k] = np.frombuffer(s.to_bytes(nbytes, "little"), np.uint8)
    bits = np.unpackbits(out.reshape(xb.shape), axis=-1, count=seg, bitorder="little")
    return bits.reshape(x.shape)


def _segment_shift(x: np.ndarray, seg: int, fill) -> np.ndarray:
    """Shift every segment one lane up (towards higher bit index); ``fill`` enters lane 0."""
    lanes = x.shape[-1]
    v = x.reshape(*x.shape[:-1], lanes // seg, seg)
    out = np.empty_like(v)
    out[..., 1:] = v[..., :-1]
    out[..., 0] = fill
    return out.reshape(x.shape)


class MyersEngine:
    def __init__(self, backend=BackendKind.CIDAN, geometry: DramGeometry | None = None,
                 timing: TimingParams | None = None, energy: EnergyParams | None = None,
                 host: HostCostModel | None = None, add_mode: str = "host"):
        if add_mode not in ("host", "pim"):
            raise ValueError("add_mode must be 'host' or 'pim'")
        backend = BackendKind.parse(backend)
        if add_mode == "pim" and backend is not BackendKind.CIDAN:
            raise UnsupportedOperationError(f"{backend.label} has no in-memory ADD")
        self.m = RowMachine(backend, geometry, timing, energy, host)
        self.add_mode = add_mode

    # host-side helpers priced per 64-bit word of a row
    def _host_rmw(self, what: str):
        self.m.charge_host(self.m.host.words_ns(self.m.width // 64), what)

    def _add(self, a, b, seg: int, bank: int):
        if self.add_mode == "host":
            out = _segment_add(self.m.get(a), self.m.get(b), seg)
            self._host_rmw("add")
            return self.m.put(out, bank=bank)
        return self._pim_add(a, b, seg, bank)

    def _pim_add(self, a, b, seg: int, bank: int):
        """Transpose segments to bit planes, add plane by plane in the TLPEA, transpose back."""
        m = self.m
        x, y = m.get(a), m.get(b)
        n = m.width // seg
        xs = x.reshape(n, seg).T  # plane k = bit k of every segment
        ys = y.reshape(n, seg).T
        planes = []
        carry = m.constant(0, bank=2)
        for k in range(seg):
            pa = m.put(xs[k], bank=0)
            pb = m.put(ys[k], bank=1)
            dest = m.alloc(bank=3)
            # first plane reads the zero row as carry; later planes chain through L1
            m.dev.add_rows(pa, pb, dest, carry_in=carry if k == 0 else None, stream=0)
            m.op_mix["add"] += 1
            planes.append(m.get(dest)[:n])
            m.free(pa, pb, dest)
        self._host_rmw("transpose")
        self._host_rmw("transpose")
        out = np.stack(planes).T.reshape(-1)
        row = np.zeros(m.width, np.uint8)
        row[:out.size] = out
        return m.put(row, bank=bank)

    def _shift(self, addr, seg: int, fill: int):
        out = _segment_shift(self.m.get(addr), seg, fill)
        self._host_rmw("shift")
        new = self.m.put(out, bank=addr[0])
        self.m.free(addr)
        return new

    def run(self, patterns: list[str], texts: list[str], mode: str = "search",
            seg_bits: int | None = None, alphabet: str | None = None) -> MyersResult:
        if mode not in ("search", "global"):
            raise ValueError("mode must be 'search' or 'global'")
        if len(patterns) != len(texts) or not patterns:
            raise ValueError("need one text per pattern")
        m = self.m
        width = m.width
        longest = max(len(p) for p in patterns)
        if longest == 0:
            raise ValueError("patterns must be non-empty")
        if seg_bits is None:
            seg_bits = width if len(patterns) == 1 else 1 << max(0, (longest - 1).bit_length())
        if longest > seg_bits or seg_bits > width or width % seg_bits:
            raise ValueError(f"pattern of length {longest} does not fit {seg_bits}-lane segments "
                             f"of a {width}-bit row")
        per_row = width // seg_bits
        if len(patterns) > per_row:
            raise ValueError(f"at most {per_row} problems fit one row")
        chars = alphabet or "".join(sorted({c for s in patterns + texts for c in s}))
        index = {c: k for k, c in enumerate(chars)}
        for s in patterns + texts:
            bad = set(s) - set(index)
            if bad:
                raise ValueError(f"characters {sorted(bad)} not in alphabet {chars!r}")

        # Peq masks per problem; lanes past a pattern's end stay 0
        peq = np.zeros((len(chars), width), np.uint8)
        pv0 = np.zeros(width, np.uint8)
        top = np.zeros(width, np.uint8)
        for s, p in enumerate(patterns):
            base = s * seg_bits
            for i, c in enumerate(p):
                peq[index[c], base + i] = 1
            pv0[base:base + len(p)] = 1
            top[base + len(p) - 1] = 1
        top_lane = top.nonzero()[0]
        single = len(patterns) == 1
        peq_rows = [m.put(peq[k], bank=0) for k in range(len(chars))] if single else None
        pv = m.put(pv0, bank=1)
        mv = m.put(np.zeros(width, np.uint8), bank=2)
        score = np.array([len(p) for p in patterns])
        dist: list[list[int]] = [[] for _ in patterns]
        steps = max(len(t) for t in texts)
        fill = 1 if mode == "global" else 0
        for j in range(steps):
            if single:
                eq = peq_rows[index[texts[0][j]]]
            else:
                row = np.zeros(width, np.uint8)
                for s, t in enumerate(texts):
                    if j < len(t):
                        base = s * seg_bits
                        row[base:base + seg_bits] = peq[index[t[j]], base:base + seg_bits]
                eq = m.put(row, bank=0)
                self._host_rmw("eq")
            # bank plan (bank within the group): eq 0, pv 1, mv 2 on entry and
            # exit; every op reads two different banks and writes a third
            xv = m.op("or", eq, mv, bank=3)
            t1 = m.op("and", eq, pv, bank=2)
            t2 = self._add(t1, pv, seg_bits, bank=3)
            t3 = m.op("xor", t2, pv, bank=2)
            xh = m.op("or", t3, eq, bank=3)
            t4 = m.op("or", xh, pv, bank=0)
            t5 = m.op("not", t4, bank=3)
            ph = m.op("or", mv, t5, bank=0)
            mh = m.op("and", pv, xh, bank=2)
            m.free(t1, t2, t3, t4, t5, xh)
            if not single:
                m.free(eq)
            phb, mhb = m.get(ph), m.get(mh)
            for s, t in enumerate(texts):
                if j < len(t):
                    lane = top_lane[s]
                    score[s] += int(phb[lane]) - int(mhb[lane])
                    dist[s].append(int(score[s]))
            ph = self._shift(ph, seg_bits, fill)
            mh = self._shift(mh, seg_bits, 0)
            t6 = m.op("or", xv, ph, bank=1)
            t7 = m.op("not", t6, bank=3)
            new_pv = m.op("or", mh, t7, bank=1)
            new_mv = m.op("and", ph, xv, bank=2)
            m.free(t6, t7, ph, mh, xv, pv, mv)
            pv, mv = new_pv, new_mv
        st = m.stats(mode=mode, problems=len(patterns), seg_bits=seg_bits, add_mode=self.add_mode)
        return MyersResult(dist, st, dict(m.op_mix))


def myers_search(pattern: str, text: str, backend=BackendKind.CIDAN, mode: str = "search",
                 add_mode: str = "host", **kw) -> MyersResult:
    """Single-row mode: the pattern's bit-vector spans one row (length <= row width)."""
    return MyersEngine(backend, add_mode=add_mode, **kw).run([pattern], [text], mode)


def myers_batch(patterns, texts, backend=BackendKind.CIDAN, mode: str = "search",
                seg_bits: int | None = None, add_mode: str = "host", **kw) -> MyersResult:
    """Many independent (pattern, text) problems, one segment each."""
    return MyersEngine(backend, add_mode=add_mode, **kw).run(list(patterns), list(texts), mode, seg_bits)


def random_dna(n: int, rng) -> str:
    return "".join(rng.choice(list(DNA_ALPHABET), n))


def dna_ratios(backends=("cidan", "redram", "ambit"), pattern_len: int = 64, text_len: int = 256,
               problems: int = 128, seed: int = 0, **kw) -> dict:
    """Batched read mapping on each back-end, normalised to CIDAN."""
    rng = np.random.default_rng(seed)
    patterns = [random_dna(pattern_len, rng) for _ in range(problems)]
    texts = [random_dna(text_len, rng) for _ in range(problems)]
    runs = {be: myers_batch(patterns, texts, be, **kw) for be in ("cidan", *[b for b in backends if b != "cidan"])}
    base = runs["cidan"].stats
    return {be: {
        "latency_ns": r.stats.extra["total_ns"],
        "energy_pj": r.stats.energy_pj,
        "latency_ratio": r.stats.extra["total_ns"] / base.extra["total_ns"],
        "energy_ratio": r.stats.energy_pj / base.energy_pj,
        "op_mix": r.op_mix,
        "agrees": r.distances == runs["cidan"].distances,
    } for be, r in runs.items()}
