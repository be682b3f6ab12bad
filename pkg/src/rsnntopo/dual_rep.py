"""Five-layer autoencoder view of a recurrent layer.

L1 and L5 are the input and output neurons. L3 (the bottleneck) holds the
non-I/O neurons with the highest betweenness centrality, and L2/L4 are the
neurons closest, in summed hop distance, to the L1+L3 and L3+L5 pairs.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTopologyError, InputDomainError
from .net_graph import NetworkTopology


@dataclass
class CentralityMap:
    scores: np.ndarray

    def __getitem__(self, node: int) -> float:
        return float(self.scores[node])

    def __len__(self) -> int:
        return len(self.scores)

    def ranking(self, nodes: Iterable[int]) -> list[int]:
        """Nodes by descending score, lower id first among ties."""
        return sorted(nodes, key=lambda v: (-self.scores[v], v))


def _successors(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    succ = [[] for _ in range(n)]
    for a, b in edges:
        succ[a].append(b)
    for s in succ:
        s.sort()
    return succ


def brandes(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    """Unnormalised betweenness of a directed unweighted graph over ordered pairs."""
    succ = _successors(n, edges)
    cb = np.zeros(n)
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in succ[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    return cb


def betweenness(net: NetworkTopology) -> CentralityMap:
    return CentralityMap(brandes(net.neuron_count, net.edges))


def hop_distances(n: int, edges: Iterable[tuple[int, int]], sources: Iterable[int],
                  sentinel: int) -> np.ndarray:
    """Minimum hop count to any source on the undirected skeleton."""
    nbrs = [set() for _ in range(n)]
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    dist = np.full(n, -1, dtype=int)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    while queue:
        v = queue.popleft()
        for w in nbrs[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    dist[dist < 0] = sentinel
    return dist


def _ceil_count(fraction: float, size: int) -> int:
    return int(math.ceil(fraction * size - 1e-9))


@dataclass
class LayerAssignment:
    L1: list
    L2: list
    L3: list
    L4: list
    L5: list
    centrality: CentralityMap
    d13: dict = field(default_factory=dict)  # node -> (d^{L1,L3}, rank)
    d35: dict = field(default_factory=dict)  # node -> (d^{L3,L5}, rank)

    def layer(self, name: str) -> list:
        return getattr(self, name)

    def layer_of(self) -> dict:
        out = {}
        for name in ("L1", "L2", "L3", "L4", "L5"):
            for v in self.layer(name):
                out[v] = name
        return out

    def to_dict(self) -> dict:
        return {
            **{name: [int(v) for v in self.layer(name)] for name in ("L1", "L2", "L3", "L4", "L5")},
            "centrality": [float(c) for c in self.centrality.scores],
            "d_L1_L3": {str(k): [int(d), int(r)] for k, (d, r) in sorted(self.d13.items())},
            "d_L3_L5": {str(k): [int(d), int(r)] for k, (d, r) in sorted(self.d35.items())},
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def to_dot(self, net: NetworkTopology) -> str:
        colors = {"L1": "lightblue", "L2": "palegreen", "L3": "gold", "L4": "orange", "L5": "salmon"}
        where = self.layer_of()
        lines = ["digraph rsnn {"]
        for v in range(net.neuron_count):
            layer = where.get(v)
            attr = f' [style=filled, fillcolor={colors[layer]}, label="{v}\\n{layer}"]' if layer else ""
            lines.append(f"  {v}{attr};")
        for a, b in net.edges:
            lines.append(f"  {a} -> {b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def extract_layers(net: NetworkTopology, bottleneck_fraction: float = 0.1,
                   band_fraction: float = 0.1) -> LayerAssignment:
    if not (bottleneck_fraction > 0 and band_fraction > 0):
        raise InputDomainError("layer fractions must be > 0")
    n = net.neuron_count
    L1 = sorted(net.input_ids)
    L5 = sorted(net.output_ids)
    io = set(L1) | set(L5)
    cb = betweenness(net)

    pool3 = [v for v in range(n) if v not in io]
    if not pool3:
        raise DegenerateTopologyError("no candidate nodes for the bottleneck layer L3", "L3")
    k3 = min(_ceil_count(bottleneck_fraction, n), len(pool3))
    L3 = sorted(cb.ranking(pool3)[:k3])

    edges = net.edges
    h1 = hop_distances(n, edges, L1, n)
    h3 = hop_distances(n, edges, L3, n)
    h5 = hop_distances(n, edges, L5, n)
    d13 = h1 + h3
    d35 = h3 + h5

    taken = io | set(L3)
    pool = [v for v in range(n) if v not in taken]
    if not pool:
        raise DegenerateTopologyError("no candidate nodes left for layer L2", "L2")
    k_band = _ceil_count(band_fraction, len(pool))

    order2 = sorted(pool, key=lambda v: (d13[v], d35[v], v))
    L2 = order2[:k_band]
    pool4 = [v for v in pool if v not in set(L2)]
    if not pool4:
        raise DegenerateTopologyError("no candidate nodes left for layer L4", "L4")
    order4 = sorted(pool, key=lambda v: (d35[v], d13[v], v))
    L4 = [v for v in order4 if v not in set(L2)][:k_band]

    return LayerAssignment(
        L1=L1, L2=sorted(L2), L3=L3, L4=sorted(L4), L5=L5, centrality=cb,
        d13={v: (int(d13[v]), r) for r, v in enumerate(order2)},
        d35={v: (int(d35[v]), r) for r, v in enumerate(order4)},
    )
