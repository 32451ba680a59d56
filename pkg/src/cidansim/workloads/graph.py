"""Matching index of vertex pairs over adjacency bit rows."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..backends import BackendKind, RunStats
from ..config import HostCostModel
from ..dram import DramGeometry, EnergyParams, TimingParams
from .machine import RowMachine

# name -> (vertices, edges) of the social-network graphs used for evaluation
DATASET_SIZES = {
    "facebook": (4039, 88234),
    "dblp": (317080, 1049866),
    "amazon": (334863, 925872),
}


@dataclass
class GraphDataset:
    """Undirected graph kept as sorted neighbour arrays.

    Adjacency bit rows are produced on demand, so large sparse graphs never
    need a dense n x n matrix.
    """

    name: str
    n: int
    neighbors: list

    @classmethod
    def from_edges(cls, name: str, n: int, edges, directed: bool = False) -> "GraphDataset":
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint outside the vertex range")
        if not directed:
            edges = np.concatenate([edges, edges[:, ::-1]])
        nbrs = [np.zeros(0, np.int64)] * n
        if edges.size:
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = np.unique(edges[order], axis=0)
            cuts = np.searchsorted(edges[:, 0], np.arange(n + 1))
            nbrs = [edges[cuts[v]:cuts[v + 1], 1] for v in range(n)]
        return cls(name, n, nbrs)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.neighbors) // 2

    def adjacency_row(self, v: int) -> np.ndarray:
        row = np.zeros(self.n, np.uint8)
        row[self.neighbors[v]] = 1
        return row

    def dense(self) -> np.ndarray:
        return np.stack([self.adjacency_row(v) for v in range(self.n)]) if self.n else np.zeros((0, 0), np.uint8)


def load_edge_list(path, name: str | None = None) -> GraphDataset:
    """Read "u v" pairs, one per line; '#' starts a comment. Vertex ids are relabelled densely."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v'")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: vertex ids must be integers") from None
    ids = sorted({v for p in pairs for v in p})
    index = {v: k for k, v in enumerate(ids)}
    edges = [(index[u], index[v]) for u, v in pairs]
    return GraphDataset.from_edges(name or Path(path).stem, len(ids), edges)


def synthetic_dataset(name: str, seed: int = 0, scale: float = 1.0) -> GraphDataset:
    """Uniform random graph with the vertex/edge counts of a named dataset."""
    n, m = DATASET_SIZES[name]
    n, m = max(2, int(n * scale)), max(1, int(m * scale))
    rng = np.random.default_rng(seed)
    u = rng.integers(0, n, 2 * m)
    v = rng.integers(0, n, 2 * m)
    keep = u != v
    pairs = np.unique(np.sort(np.stack([u[keep], v[keep]], 1), axis=1), axis=0)
    pairs = pairs[rng.permutation(len(pairs))[:m]]
    return GraphDataset.from_edges(name, n, pairs)


def random_graph(n: int, p: float, seed: int = 0) -> GraphDataset:
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    mask = rng.random(len(iu[0])) < p
    return GraphDataset.from_edges(f"gnp-{n}", n, np.stack([iu[0][mask], iu[1][mask]], 1))


def partition_graph(g: GraphDataset, parts: int) -> np.ndarray:
    """Deterministic balanced partition by greedy BFS region growing.

    Each part grows breadth-first from the lowest unassigned vertex until it
    holds its quota (sizes differ by at most one), so parts tend to keep
    neighbourhoods together.
    """
    if parts <= 0:
        raise ValueError("parts must be positive")
    assign = np.full(g.n, -1, np.int64)
    quotas = [g.n // parts + (1 if k < g.n % parts else 0) for k in range(parts)]
    nxt = 0
    for part, quota in enumerate(quotas):
        filled = 0
        queue: deque = deque()
        while filled < quota:
            if not queue:
                while assign[nxt] != -1:
                    nxt += 1
                queue.append(nxt)
                assign[nxt] = part
                filled += 1
                continue
            v = queue.popleft()
            for w in g.neighbors[v]:
                if filled >= quota:
                    break
                if assign[w] == -1:
                    assign[w] = part
                    filled += 1
                    queue.append(w)
    return assign


def matching_index_oracle(g: GraphDataset, i: int, j: int) -> Fraction:
    a, b = set(g.neighbors[i].tolist()), set(g.neighbors[j].tolist())
    union = len(a | b)
    return Fraction(len(a & b), union) if union else Fraction(0)


class GraphEngine:
    """Adjacency rows of a graph resident in PIM memory.

    CIDAN keeps every adjacency row in bank 0 of its group and a mirror copy
    in bank 1, so a pair's two rows are always in different banks; AND
    results go to bank 2 and OR results to bank 3.  The subarray back-ends
    keep everything in bank 0 of the group.  Rows wider than one DRAM row
    are split into row chunks.
    """

    def __init__(self, g: GraphDataset, backend=BackendKind.CIDAN,
                 geometry: DramGeometry | None = None, timing: TimingParams | None = None,
                 energy: EnergyParams | None = None, host: HostCostModel | None = None):
        self.g = g
        self.m = RowMachine(backend, geometry, timing, energy, host)
        self.chunks = max(1, -(-g.n // self.m.width))
        self.groups = self.m.geometry.n_groups
        self.part = partition_graph(g, self.groups)
        self._rows: dict[tuple[int, int], list] = {}

    def _load(self, v: int, group: int) -> list:
        """Adjacency row of ``v`` in ``group``: [(primary, mirror), ...] per chunk."""
        key = (v, group)
        if key not in self._rows:
            row = self.g.adjacency_row(v)
            width = self.m.width
            out = []
            for k in range(self.chunks):
                part = row[k * width:(k + 1) * width]
                prim = self.m.put(part, bank=0, group=group)
                mirror = self.m.put(part, bank=1, group=group) if self.m.cidan else prim
                out.append((prim, mirror))
            self._rows[key] = out
        return self._rows[key]

    def matching_index(self, i: int, j: int) -> Fraction:
        g = self.g
        if not (0 <= i < g.n and 0 <= j < g.n):
            raise IndexError(f"vertex pair ({i}, {j}) outside 0..{g.n - 1}")
        if i == j:
            raise ValueError("matching index needs two distinct vertices")
        group = int(self.part[i])
        ri, rj = self._load(i, group), self._load(j, group)
        common = total = 0
        for (pi, _), (_, mj) in zip(ri, rj):
            a = self.m.op("and", pi, mj, bank=2)
            o = self.m.op("or", pi, mj, bank=3)
            common += int(self.m.get(a).sum())
            total += int(self.m.get(o).sum())
            self.m.free(a, o)
        words = self.chunks * self.m.width // 64
        self.m.charge_host(self.m.host.words_ns(2 * words), "popcount")
        self.m.charge_host(self.m.host.divides_ns(1), "divide")
        return Fraction(common, total) if total else Fraction(0)

    def stats(self, **extra) -> RunStats:
        return self.m.stats(dataset=self.g.name, vertices=self.g.n, **extra)


def matching_index(g: GraphDataset, i: int, j: int, backend=BackendKind.CIDAN, **kw):
    """Matching index of one pair on a fresh device; returns ``(value, RunStats)``."""
    eng = GraphEngine(g, backend, **kw)
    value = eng.matching_index(i, j)
    return value, eng.stats(pairs=1)


def sample_pairs(g: GraphDataset, count: int, seed: int = 0) -> list[tuple[int, int]]:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        i, j = (int(x) for x in rng.integers(0, g.n, 2))
        if i != j:
            out.append((i, j))
    return out


def dataset_ratios(g: GraphDataset, backends=("cidan", "redram", "ambit"), pairs: int = 32,
                   seed: int = 0, **kw) -> dict:
    """Matching index over sampled pairs on each back-end, normalised to CIDAN."""
    chosen = sample_pairs(g, pairs, seed)
    results = {}
    for be in ("cidan", *[b for b in backends if b != "cidan"]):
        eng = GraphEngine(g, be, **kw)
        values = [eng.matching_index(i, j) for i, j in chosen]
        results[be] = (values, eng.stats(pairs=len(chosen)))
    base_values, base = results["cidan"]
    expected = [matching_index_oracle(g, i, j) for i, j in chosen]
    table = {}
    for be, (values, st) in results.items():
        table[be] = {
            "latency_ns": st.extra["total_ns"],
            "energy_pj": st.energy_pj,
            "latency_ratio": st.extra["total_ns"] / base.extra["total_ns"],
            "energy_ratio": st.energy_pj / base.energy_pj,
            "agrees": values == base_values,
            "matches_oracle": values == expected,
        }
    return table
