"""Deterministic supergraphs: generation, connectivity, and link indexing.

The supergraph collects every realizable communication link.  Random
topologies drawn elsewhere are always edge subsets of it, so all moment
algebra is keyed to the canonical undirected link ordering defined here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CONNECTIVITY_RETRY_BUDGET = 100
RADIUS_BISECTION_ITERS = 40
DEGREE_TOLERANCE = 0.10


class GraphGenerationError(RuntimeError):
    """Raised when a geometric graph with the requested degree cannot be built."""


@dataclass(frozen=True, eq=False)
class Supergraph:
    """Undirected supergraph of realizable links.

    ``edges`` holds unordered pairs (i, j) with i < j; the directed edge
    count used by the consensus algebra is therefore 2 * len(edges).
    ``positions`` and ``radius`` are set only for geometric graphs.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    positions: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("node count must be positive")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
            if i == j:
                raise ValueError(f"self-loop ({i},{j}) not allowed")
            if i > j:
                raise ValueError(f"edge ({i},{j}) not normalized as i<j")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        if self.positions is not None and len(self.positions) != self.n:
            raise ValueError("positions must have one point per node")

    @property
    def num_links(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def neighbors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return [sorted(v) for v in out]

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "edges": [[i, j] for i, j in self.edges],
            "positions": None if self.positions is None else self.positions.tolist(),
            "radius": self.radius,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "Supergraph":
        payload = json.loads(text)
        positions = payload.get("positions")
        return Supergraph(
            n=payload["n"],
            edges=normalize_edges(payload["edges"]),
            positions=None if positions is None else np.asarray(positions, dtype=float),
            radius=payload.get("radius"),
        )


@dataclass(frozen=True, eq=False)
class LinkIndex:
    """Lexicographic enumeration of the undirected links of a supergraph."""

    m: int
    pairs: tuple[tuple[int, int], ...]
    _lookup: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if self.m != len(self.pairs):
            raise ValueError("m must equal the number of pairs")
        if list(self.pairs) != sorted(set(self.pairs)):
            raise ValueError("pairs must be strictly increasing lexicographically")
        object.__setattr__(self, "_lookup", {p: k for k, p in enumerate(self.pairs)})

    def link_id(self, i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        return self._lookup[key]

    def endpoint_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self.m == 0:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        arr = np.asarray(self.pairs, dtype=int)
        return arr[:, 0], arr[:, 1]


def normalize_edges(raw: Sequence[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    """Canonicalize an edge list to sorted unique (i, j) pairs with i < j."""
    pairs = {(min(i, j), max(i, j)) for i, j in raw}
    return tuple(sorted(pairs))


def complete_graph(n: int) -> Supergraph:
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return Supergraph(n=n, edges=edges)


def path_graph(n: int) -> Supergraph:
    return Supergraph(n=n, edges=tuple((i, i + 1) for i in range(n - 1)))


def star_graph(n_leaves: int) -> Supergraph:
    return Supergraph(n=n_leaves + 1, edges=tuple((0, j) for j in range(1, n_leaves + 1)))


def link_index(g: Supergraph) -> LinkIndex:
    pairs = tuple(sorted(g.edges))
    return LinkIndex(m=len(pairs), pairs=pairs)


def is_connected(g: Supergraph) -> bool:
    if g.n == 1:
        return True
    adj = g.neighbors()
    seen = np.zeros(g.n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def node_distances(g: Supergraph) -> np.ndarray:
    """All-pairs hop distances by BFS; unreachable pairs get +inf."""
    adj = g.neighbors()
    dist = np.full((g.n, g.n), np.inf)
    for src in range(g.n):
        dist[src, src] = 0.0
        frontier = [src]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for v in frontier:
                for w in adj[v]:
                    if not np.isfinite(dist[src, w]):
                        dist[src, w] = d
                        nxt.append(w)
            frontier = nxt
    return dist


def link_distance(g: Supergraph, idx: LinkIndex, l1: int, l2: int) -> float:
    """Hop distance between two links: closest pair of their endpoints.

    Links that share a node are at distance 0; endpoints in different
    components give +inf.
    """
    if not (0 <= l1 < idx.m and 0 <= l2 < idx.m):
        raise ValueError("link id out of range")
    a, b = idx.pairs[l1]
    c, d = idx.pairs[l2]
    if {a, b} & {c, d}:
        return 0.0
    dist = node_distances(g)
    return float(min(dist[a, c], dist[a, d], dist[b, c], dist[b, d]))


def link_distance_matrix(g: Supergraph, idx: LinkIndex) -> np.ndarray:
    """All link pair hop distances at once (the pairwise form of link_distance)."""
    dist = node_distances(g)
    ei, ej = idx.endpoint_arrays()
    d = np.minimum(dist[np.ix_(ei, ei)], dist[np.ix_(ei, ej)])
    d = np.minimum(d, dist[np.ix_(ej, ei)])
    d = np.minimum(d, dist[np.ix_(ej, ej)])
    return d


def _edges_within_radius(dists: np.ndarray, radius: float) -> tuple[tuple[int, int], ...]:
    n = dists.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    keep = dists[iu, ju] <= radius
    return tuple(zip(iu[keep].tolist(), ju[keep].tolist()))


def generate_geometric(n: int, degree_fraction: float, seed: int) -> Supergraph:
    """Connected random geometric graph on the unit square.

    Node positions are uniform i.i.d.; the communication radius is found by
    bisection so that the average degree lands within +/-10% of
    degree_fraction * n (clamped to the complete-graph maximum n - 1).
    Placements that cannot meet the degree target or are disconnected are
    redrawn, up to a fixed retry budget.
    """
    if n < 2:
        raise GraphGenerationError("need at least 2 nodes to place links")
    if not (0.0 < degree_fraction < 1.0):
        raise ValueError("degree_fraction must lie in (0, 1)")
    target = min(degree_fraction * n, float(n - 1))
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6E0DE5)))

    for _ in range(CONNECTIVITY_RETRY_BUDGET):
        positions = rng.random((n, 2))
        diffs = positions[:, None, :] - positions[None, :, :]
        dists = np.sqrt((diffs**2).sum(axis=2))

        lo, hi = 0.0, math.sqrt(2.0)
        for _ in range(RADIUS_BISECTION_ITERS):
            mid = 0.5 * (lo + hi)
            # average degree is monotone in the radius
            avg = (np.count_nonzero(dists <= mid) - n) / n
            if avg < target:
                lo = mid
            else:
                hi = mid

        # the closest achievable degree straddles the target; try both ends
        candidates = []
        for radius in (hi, lo):
            edges = _edges_within_radius(dists, radius)
            avg_degree = 2 * len(edges) / n
            if abs(avg_degree - target) <= DEGREE_TOLERANCE * target:
                candidates.append((abs(avg_degree - target), radius, edges))
        for _, radius, edges in sorted(candidates, key=lambda c: c[0]):
            g = Supergraph(n=n, edges=edges, positions=positions, radius=radius)
            if is_connected(g):
                return g

    raise GraphGenerationError(
        f"no connected geometric graph with average degree ~{target:.2f} "
        f"after {CONNECTIVITY_RETRY_BUDGET} placements (n={n})"
    )
