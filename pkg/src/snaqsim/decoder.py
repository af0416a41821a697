"""Matching-graph decoding of detector samples.

The default decoder is union-find with weighted cluster growth and peeling.
An exact minimum-weight perfect matching over shortest-path distances is
available for small instances.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import StabilizerCircuit
from .engine import DetectorErrorModel, compile, extract_dem, sample, xor_prob

__all__ = [
    "DecoderError", "DecodingGraph", "LerEstimate", "build_graph", "decode", "decode_batch",
    "estimate_ler", "wilson_interval", "combine_rates",
]


class DecoderError(ValueError):
    pass


@dataclass
class DecodingGraph:
    """Detectors ``0..n-1`` plus one boundary node ``n``."""

    n_detectors: int
    n_observables: int
    edges: list[tuple[int, int, float, float, int]] = field(default_factory=list)  # u, v, p, w, obs
    provenance: dict[int, list[int]] = field(default_factory=dict)
    undetectable: dict[int, float] = field(default_factory=dict)  # obs mask -> p
    _index: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def boundary(self) -> int:
        return self.n_detectors

    def edge(self, u: int, v: int):
        i = self._index.get((min(u, v), max(u, v)))
        return None if i is None else self.edges[i]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj = self._cache.get("adj")
        if adj is None:
            adj = [[] for _ in range(self.n_detectors + 1)]
            for i, (u, v, *_rest) in enumerate(self.edges):
                adj[u].append((v, i))
                adj[v].append((u, i))
            self._cache["adj"] = adj
        return adj


def _weight(p: float) -> float:
    return math.log((1 - p) / p)


def _mask(obs) -> int:
    m = 0
    for o in obs:
        m ^= 1 << o
    return m


def _split(dets: tuple[int, ...], obs: int, known: dict) -> list[tuple[tuple[int, ...], int]] | None:
    """Partition ``dets`` into known one- and two-detector signatures whose
    observable masks XOR to ``obs``."""
    if not dets:
        return [] if obs == 0 else None
    first, rest = dets[0], dets[1:]
    options = [((first,), rest)]
    options += [((first, x), rest[:i] + rest[i + 1:]) for i, x in enumerate(rest)]
    for part, remain in options:
        for m in known.get(part, ()):
            tail = _split(remain, obs ^ m, known)
            if tail is not None:
                return [(part, m)] + tail
    return None


def build_graph(dem: DetectorErrorModel) -> DecodingGraph:
    """Graphlike mechanisms become edges directly; larger ones are split into
    signatures that already occur on their own."""
    n = dem.n_detectors
    g = DecodingGraph(n, dem.n_observables)
    known: dict[tuple[int, ...], set[int]] = {}
    for p, dets, obs in dem.mechanisms:
        if 1 <= len(dets) <= 2:
            known.setdefault(dets, set()).add(_mask(obs))
    acc: dict[tuple[int, int], list] = {}

    def put(dets, m, p, src):
        key = (dets[0], n) if len(dets) == 1 else dets
        cur = acc.get(key)
        if cur is None:
            acc[key] = [p, m, p, [src]]
            return
        cur[0] = xor_prob(cur[0], p)
        cur[3].append(src)
        if p > cur[2]:  # conflicting masks: keep the most likely one
            cur[1], cur[2] = m, p

    for k, (p, dets, obs) in enumerate(dem.mechanisms):
        m = _mask(obs)
        if not dets:
            if m:
                g.undetectable[m] = xor_prob(g.undetectable.get(m, 0.0), p)
            continue
        if len(dets) <= 2:
            put(dets, m, p, k)
            continue
        parts = _split(tuple(sorted(dets)), m, {s: sorted(v) for s, v in known.items()})
        if parts is None:
            raise DecoderError(f"mechanism {k} (p={p:.3g}, D{list(dets)}, L{list(obs)}) "
                               "cannot be split into graphlike edges")
        for part, pm in parts:
            put(part, pm, p, k)
    for (u, v), (p, m, _, src) in sorted(acc.items()):
        if not 0 < p < 0.5:
            raise DecoderError(f"edge {u}-{v} has probability {p}; weights need p in (0, 1/2)")
        g._index[(u, v)] = len(g.edges)
        g.provenance[len(g.edges)] = src
        g.edges.append((u, v, p, _weight(p), m))
    return g


# --------------------------------------------------------------------------
# union-find


def _lengths(g: DecodingGraph) -> list[float]:
    ls = g._cache.get("len")
    if ls is None:
        wmin = min((e[3] for e in g.edges), default=1.0)
        ls = [max(1, round(4 * e[3] / wmin)) for e in g.edges]
        g._cache["len"] = ls
    return ls


def _union_find(g: DecodingGraph, fired: list[int]) -> int:
    adj = g.adjacency()
    length = _lengths(g)
    B = g.boundary
    parent: dict[int, int] = {}
    members: dict[int, list[int]] = {}
    odd: dict[int, bool] = {}
    bnd: dict[int, bool] = {}

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def make(a, defect):
        parent[a] = a
        members[a] = [a]
        odd[a] = defect
        bnd[a] = a == B

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return
        if len(members[ra]) < len(members[rb]):
            ra, rb = rb, ra
        parent[rb] = ra
        members[ra].extend(members.pop(rb))
        odd[ra] ^= odd.pop(rb)
        bnd[ra] = bnd[ra] or bnd.pop(rb)

    for f in fired:
        make(f, True)
    support: dict[int, float] = {}
    grown: list[int] = []

    def active(r):
        return odd[r] and not bnd[r]

    while True:
        roots = [r for r in members if active(r)]
        if not roots:
            break
        rate: dict[int, int] = {}
        for r in roots:
            for u in members[r]:
                for v, e in adj[u]:
                    if support.get(e, 0.0) < length[e]:
                        rate[e] = rate.get(e, 0) + 1
        if not rate:
            raise DecoderError("odd cluster cannot reach the boundary or another defect")
        step = min((length[e] - support.get(e, 0.0)) / k for e, k in rate.items())
        done = []
        for e, k in rate.items():
            s = support.get(e, 0.0) + step * k
            support[e] = s
            if s >= length[e] - 1e-9:
                done.append(e)
        for e in done:
            u, v = g.edges[e][0], g.edges[e][1]
            for x in (u, v):
                if x not in parent:
                    make(x, False)
            if find(u) != find(v):
                union(u, v)
            grown.append(e)
    groups: dict[int, list[int]] = {}
    for f in fired:
        groups.setdefault(find(f), []).append(f)
    out = 0
    rest: list[int] = []
    adj_grown: dict[int, list[tuple[int, int]]] = {}
    for e in grown:
        u, v = g.edges[e][0], g.edges[e][1]
        adj_grown.setdefault(u, []).append((v, e))
        adj_grown.setdefault(v, []).append((u, e))
    for r, defects in groups.items():
        m = _match_cluster(g, defects, adj_grown, bnd[r]) if len(defects) <= MATCH_LIMIT else None
        if m is None:
            rest.extend(defects)
        else:
            out ^= m
    if rest:
        keep = {find(f) for f in rest}
        out ^= _peel(g, rest, [e for e in grown if find(g.edges[e][0]) in keep], find)
    return out


MATCH_LIMIT = 8


def _cluster_paths(g: DecodingGraph, src: int, adj) -> dict[int, tuple[float, int]]:
    """Shortest paths from ``src`` over grown edges: node -> (weight, obs mask)."""
    best = {src: (0.0, 0)}
    heap = [(0.0, src, 0)]
    while heap:
        w, a, m = heapq.heappop(heap)
        if w > best[a][0]:
            continue
        if a == g.boundary and a != src:
            continue
        for b, e in adj.get(a, ()):
            nw = w + g.edges[e][3]
            if b not in best or nw < best[b][0] - 1e-12:
                best[b] = (nw, m ^ g.edges[e][4])
                heapq.heappush(heap, (nw, b, m ^ g.edges[e][4]))
    return best


def _match_cluster(g: DecodingGraph, defects: list[int], adj, boundary: bool) -> int | None:
    """Exact minimum-weight pairing of one cluster's defects along its grown edges."""
    B = g.boundary
    paths = {a: _cluster_paths(g, a, adj) for a in defects}
    k = len(defects)
    inf = math.inf

    def pair(i, j):
        return paths[defects[i]].get(defects[j], (inf, 0))

    def to_b(i):
        return paths[defects[i]].get(B, (inf, 0)) if boundary else (inf, 0)

    @functools.lru_cache(maxsize=None)
    def solve(mask: int) -> tuple[float, int]:
        if mask == 0:
            return 0.0, 0
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        w, m = to_b(i)
        best = (inf, 0)
        if w < inf:
            sw, sm = solve(rest)
            best = (w + sw, m ^ sm)
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= j_mask - 1
            w, m = pair(i, j)
            if w < inf:
                sw, sm = solve(rest & ~(1 << j))
                if w + sw < best[0]:
                    best = (w + sw, m ^ sm)
        return best

    w, m = solve((1 << k) - 1)
    return None if w == inf else m


def _peel(g: DecodingGraph, fired, grown, find) -> int:
    B = g.boundary
    # peel a minimum-weight spanning forest so cycles drop their costliest edge
    root: dict[int, int] = {}

    def top(a):
        while root.get(a, a) != a:
            a = root[a]
        return a

    tree: dict[int, list[tuple[int, int]]] = {}
    for e in sorted(grown, key=lambda i: (g.edges[i][3], i)):
        u, v = g.edges[e][0], g.edges[e][1]
        ru, rv = top(u), top(v)
        if ru == rv:
            continue
        root[ru] = rv
        tree.setdefault(u, []).append((v, e))
        tree.setdefault(v, []).append((u, e))
    mark = set(fired)
    seen: set[int] = set()
    out = 0
    starts = ([B] if B in tree else []) + sorted(tree)
    for s in starts:
        if s in seen:
            continue
        order, up = [s], {s: None}
        seen.add(s)
        i = 0
        while i < len(order):
            a = order[i]
            i += 1
            for b, e in tree.get(a, ()):
                if b not in seen:
                    seen.add(b)
                    up[b] = (a, e)
                    order.append(b)
        for a in reversed(order[1:]):
            if a in mark:
                p, e = up[a]
                out ^= g.edges[e][4]
                mark.discard(a)
                if p != B:
                    mark ^= {p}
    return out


# --------------------------------------------------------------------------
# exact matching


def _paths(g: DecodingGraph):
    cached = g._cache.get("paths")
    if cached is not None:
        return cached
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra

    n = g.n_detectors + 1
    u = [e[0] for e in g.edges]
    v = [e[1] for e in g.edges]
    w = [e[3] for e in g.edges]
    mat = coo_matrix((w, (u, v)), shape=(n, n)).tocsr()
    dist, pred = dijkstra(mat, directed=False, return_predecessors=True)
    par = np.zeros((n, n), dtype=np.int64)
    for s in range(n):
        order = np.argsort(dist[s])
        row = par[s]
        for x in order:
            if x == s or not np.isfinite(dist[s, x]):
                continue
            p = pred[s, x]
            row[x] = row[p] ^ g.edge(p, x)[4]
    g._cache["paths"] = (dist, par)
    return dist, par


def _mwpm(g: DecodingGraph, fired: list[int]) -> int:
    import networkx as nx

    dist, par = _paths(g)
    B = g.boundary
    k = len(fired)
    G = nx.Graph()
    big = 1.0 + 2 * max((dist[a, b] for a in fired for b in fired + [B]
                         if np.isfinite(dist[a, b])), default=0.0)
    for i, j in itertools.combinations(range(k), 2):
        d = dist[fired[i], fired[j]]
        if np.isfinite(d):
            G.add_edge(i, j, weight=big - d)
        G.add_edge(k + i, k + j, weight=big)
    for i in range(k):
        d = dist[fired[i], B]
        if np.isfinite(d):
            G.add_edge(i, k + i, weight=big - d)
    match = nx.max_weight_matching(G, maxcardinality=True)
    out = 0
    covered = set()
    for a, b in match:
        covered.update((a, b))
        if a >= k and b >= k:
            continue
        if a >= k or b >= k:
            i = min(a, b)
            out ^= int(par[fired[i], B])
        else:
            out ^= int(par[fired[a], fired[b]])
    if any(i not in covered for i in range(k)):
        raise DecoderError("fired detectors cannot be paired or sent to a boundary")
    return out


# --------------------------------------------------------------------------
# public decoding API


def _fired(g: DecodingGraph, syndrome) -> list[int]:
    s = np.asarray(syndrome)
    if s.dtype == bool or (s.ndim == 1 and s.size == g.n_detectors and set(np.unique(s)) <= {0, 1}):
        if s.size != g.n_detectors:
            raise DecoderError(f"syndrome has {s.size} bits, graph has {g.n_detectors} detectors")
        return [int(i) for i in np.flatnonzero(s)]
    return sorted(int(i) for i in s)


def _unmask(m: int, n: int) -> np.ndarray:
    return np.array([(m >> i) & 1 for i in range(n)], dtype=bool)


def decode(graph: DecodingGraph, syndrome, method: str = "uf") -> np.ndarray:
    """Predicted observable flips for one syndrome (bool vector of detectors)."""
    fired = _fired(graph, syndrome)
    return _unmask(_decode_mask(graph, fired, method), graph.n_observables)


def _decode_mask(g: DecodingGraph, fired: list[int], method: str) -> int:
    if not fired:
        return 0
    if method == "uf":
        return _union_find(g, fired)
    if method == "mwpm":
        return _mwpm(g, fired)
    raise DecoderError(f"unknown decoding method {method!r}")


def decode_batch(graph: DecodingGraph, detectors: np.ndarray, method: str = "uf") -> np.ndarray:
    """Decode a shots x detectors bool matrix; repeated syndromes are decoded once."""
    det = np.asarray(detectors, dtype=bool)
    if det.ndim != 2 or det.shape[1] != graph.n_detectors:
        raise DecoderError(f"expected shots x {graph.n_detectors} detector matrix")
    out = np.zeros((det.shape[0], graph.n_observables), dtype=bool)
    memo: dict[tuple[int, ...], int] = {}
    rows = np.flatnonzero(det.any(axis=1))
    for r in rows:
        key = tuple(np.flatnonzero(det[r]).tolist())
        m = memo.get(key)
        if m is None:
            m = memo[key] = _decode_mask(graph, list(key), method)
        if m:
            out[r] = _unmask(m, graph.n_observables)
    return out


# --------------------------------------------------------------------------
# logical error rates


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def combine_rates(p_x: float, p_z: float) -> float:
    return 1 - (1 - p_x) * (1 - p_z)


@dataclass
class LerEstimate:
    shots: int
    failures: int
    p_L: float
    ci_low: float
    ci_high: float
    by_basis: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"shots": self.shots, "failures": self.failures, "p_L": self.p_L,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "by_basis": self.by_basis}


def _basis_run(circuit: StabilizerCircuit, shots: int, seed: int, method: str, threads):
    g = build_graph(extract_dem(circuit))
    s = sample(compile(circuit), shots, seed, threads)
    pred = decode_batch(g, s.detectors, method)
    fails = int(np.any(pred != s.observables, axis=1).sum())
    return fails


def estimate_ler(circuit_x: StabilizerCircuit | None, circuit_z: StabilizerCircuit | None,
                 shots: int, seed: int = 0, method: str = "uf",
                 threads: int | None = None) -> LerEstimate:
    """Combined logical error rate of X- and Z-basis memory experiments.

    ``p_L = 1 - (1 - p_X)(1 - p_Z)``; the interval combines the per-basis
    Wilson intervals the same way.
    """
    if shots < 1000:
        raise DecoderError("estimate_ler needs at least 1000 shots per basis")
    by, lo, hi, p = {}, [], [], []
    seeds = np.random.SeedSequence(seed).generate_state(2)
    for name, c, sd in (("X", circuit_x, seeds[0]), ("Z", circuit_z, seeds[1])):
        if c is None:
            continue
        f = _basis_run(c, shots, int(sd), method, threads)
        a, b = wilson_interval(f, shots)
        by[name] = {"shots": shots, "failures": f, "p": f / shots, "ci_low": a, "ci_high": b}
        p.append(f / shots)
        lo.append(a)
        hi.append(b)
    if not by:
        raise DecoderError("need at least one circuit")

    def comb(v):
        out = 0.0
        for x in v:
            out = combine_rates(out, x)
        return out

    total = sum(b["failures"] for b in by.values())
    return LerEstimate(shots * len(by), total, comb(p), comb(lo), comb(hi), by)
