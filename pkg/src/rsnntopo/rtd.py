"""Representation Topology Divergence from dimension-0 cross-barcodes.

Two distance matrices over the same samples define the threshold graphs
``G^{w<=a}`` and ``G^{min(w, w~)<=a}``. Each merge of the union graph that
``w`` has not matched opens a bar; each later merge of ``w`` closes the
youngest open bar joining the merged components.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputDomainError
from .spike_metrics import DistanceMatrix


def _as_matrix(d) -> np.ndarray:
    m = np.asarray(d.values if isinstance(d, DistanceMatrix) else d, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputDomainError(f"distance matrix must be square, got shape {m.shape}")
    if np.any(~np.isfinite(m)) or np.any(m < 0):
        raise InputDomainError("distance matrix entries must be finite and >= 0")
    return m


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise InputDomainError(f"size mismatch: {a.shape} vs {b.shape}")
    return a, b


def _sorted_edges(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle edges ordered by weight, then (i, j) lexicographically."""
    i, j = np.triu_indices(m.shape[0], k=1)
    w = m[i, j]
    order = np.lexsort((j, i, w))
    return i[order], j[order], w[order]


class _DisjointSets:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.members = [[v] for v in range(n)]

    def find(self, v: int) -> int:
        root = v
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[v] != root:
            self.parent[v], v = root, self.parent[v]
        return root

    def union(self, a: int, b: int) -> tuple[list, list]:
        """Merge the roots ``a`` and ``b``; returns the two member lists."""
        if len(self.members[a]) < len(self.members[b]):
            a, b = b, a
        left, right = self.members[a], self.members[b]
        self.parent[b] = a
        self.members[a] = left + right
        self.members[b] = []
        return left, right


@dataclass
class CrossBarcode:
    bars: np.ndarray  # (n - 1, 2) rows of (birth, death)

    @property
    def lengths(self) -> np.ndarray:
        return self.bars[:, 1] - self.bars[:, 0]

    def total_length(self) -> float:
        return float(self.lengths.sum()) if len(self.bars) else 0.0


def _merge_events(m: np.ndarray) -> list[tuple[float, int, int]]:
    """Kruskal merges of ``m`` as ``(threshold, u, v)``, ties by edge index."""
    ds = _DisjointSets(m.shape[0])
    out = []
    for u, v, a in zip(*_sorted_edges(m)):
        ru, rv = ds.find(u), ds.find(v)
        if ru != rv:
            ds.union(ru, rv)
            out.append((float(a), int(u), int(v)))
    return out


def cross_barcode_h0(w, w_tilde) -> CrossBarcode:
    """Dimension-0 cross-barcode of ``w`` against the union filtration.

    Bars live in the kernel of ``H0(G^{w<=a}) -> H0(G^{min<=a})``. A union
    merge opens a bar between the two ``w``-components it joins. A ``w``
    merge closes the youngest open bar on the path between the two
    components, so the number of open bars at ``a`` is always
    ``c_w(a) - c_min(a)``. Union merges at a threshold are handled before
    ``w`` merges at the same threshold.
    """
    a, b = _pair(w, w_tilde)
    n = a.shape[0]
    events = [(t, 0, u, v) for t, u, v in _merge_events(np.minimum(a, b))]
    events += [(t, 1, u, v) for t, u, v in _merge_events(a)]
    events.sort(key=lambda e: (e[0], e[1]))

    ds = _DisjointSets(n)
    # open bars as edges between w-component roots: id -> [x, y, birth]
    open_bars: dict[int, list] = {}
    bars = []
    for t, kind, u, v in events:
        ru, rv = ds.find(u), ds.find(v)
        if kind == 0:
            open_bars[len(bars) + len(open_bars)] = [ru, rv, t]
            continue
        path = _forest_path(open_bars, ru, rv)
        # youngest bar on the path; among equal births the latest opened
        victim = max(path, key=lambda k: (open_bars[k][2], k))
        bars.append((open_bars.pop(victim)[2], t))
        ds.union(ru, rv)
        root = ds.find(ru)
        for e in open_bars.values():
            for i in (0, 1):
                if e[i] in (ru, rv):
                    e[i] = root
    bars.sort()
    return CrossBarcode(np.array(bars, dtype=float).reshape(-1, 2))


def _forest_path(edges: dict, src: int, dst: int) -> list:
    """Edge ids on the unique path between two nodes of the open-bar forest."""
    adj: dict[int, list] = {}
    for k, (x, y, _) in edges.items():
        adj.setdefault(x, []).append((y, k))
        adj.setdefault(y, []).append((x, k))
    back = {src: None}
    stack = [src]
    while stack:
        node = stack.pop()
        if node == dst:
            break
        for nxt, k in adj.get(node, ()):
            if nxt not in back:
                back[nxt] = (node, k)
                stack.append(nxt)
    if dst not in back:
        raise AssertionError("w-merge between components not joined in the union graph")
    path = []
    node = dst
    while back[node] is not None:
        node, k = back[node]
        path.append(k)
    return path


@dataclass
class RtdReport:
    rtd_ab: float
    rtd_ba: float
    rtd: float
    bars_ab: np.ndarray
    bars_ba: np.ndarray
    n: int
    labels: tuple = ("a", "b")
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rtd": self.rtd,
            "rtd_ab": self.rtd_ab,
            "rtd_ba": self.rtd_ba,
            "bars_ab": self.bars_ab.tolist(),
            "bars_ba": self.bars_ba.tolist(),
            "n": self.n,
            "labels": list(self.labels),
            "diagnostics": self.diagnostics,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def rtd_score(a, b, labels: Sequence[str] = ("a", "b")) -> RtdReport:
    """Symmetrised total bar length of the two directional cross-barcodes."""
    ma, mb = _pair(a, b)
    ab = cross_barcode_h0(ma, mb)
    ba = cross_barcode_h0(mb, ma)
    rtd_ab, rtd_ba = ab.total_length(), ba.total_length()
    return RtdReport(
        rtd_ab=rtd_ab,
        rtd_ba=rtd_ba,
        rtd=(rtd_ab + rtd_ba) / 2.0,
        bars_ab=ab.bars,
        bars_ba=ba.bars,
        n=ma.shape[0],
        labels=tuple(labels),
        diagnostics={"mean_pairwise_divergence": mean_pairwise_divergence(ma, mb)},
    )


def mean_pairwise_divergence(a, b) -> float:
    """Mean ``|a_ij - b_ij|`` over ``i < j``; a sanity diagnostic, not an RTD."""
    ma, mb = _pair(a, b)
    i, j = np.triu_indices(ma.shape[0], k=1)
    if len(i) == 0:
        return 0.0
    return float(np.mean(np.abs(ma[i, j] - mb[i, j])))


def classical_mds(d, dims: int) -> np.ndarray:
    """Classical (Torgerson) scaling to ``dims`` coordinates.

    Each axis is oriented so its first coordinate with magnitude above 1e-12
    is positive; axes with nonpositive eigenvalues come out as zeros.
    """
    m = _as_matrix(d)
    n = m.shape[0]
    if not 1 <= dims < n:
        raise InputDomainError(f"dims must lie in [1, {n - 1}]")
    centering = np.eye(n) - np.ones((n, n)) / n
    gram = -0.5 * centering @ (m ** 2) @ centering
    gram = (gram + gram.T) / 2
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(-evals, kind="stable")[:dims]
    evals, evecs = evals[order], evecs[:, order]
    for k in range(dims):
        nz = np.flatnonzero(np.abs(evecs[:, k]) > 1e-12)
        if len(nz) and evecs[nz[0], k] < 0:
            evecs[:, k] *= -1
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def save_coordinates(coords: np.ndarray, path) -> None:
    header = ",".join(f"dim{k}" for k in range(coords.shape[1]))
    np.savetxt(path, coords, delimiter=",", fmt="%.17g", header=header, comments="")
