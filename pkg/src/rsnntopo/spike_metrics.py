"""Spike-train transport distance and per-layer response distance matrices."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InputDomainError
from .lif_sim import SpikeRaster


def _transport_sorted(x: np.ndarray, y: np.ndarray) -> float:
    """1-D optimal transport between uniform measures on sorted supports.

    Integrates ``|Q_x(u) - Q_y(u)|`` over the merged quantile partition. The
    breakpoints ``i/N`` and ``j/M`` are kept as integers in units of
    ``1/(N*M)`` so the partition is exact.
    """
    n, m = len(x), len(y)
    if n == m:
        return float(np.mean(np.abs(x - y)))
    cuts = np.union1d(np.arange(1, n + 1) * m, np.arange(1, m + 1) * n)
    starts = np.concatenate(([0], cuts[:-1]))
    widths = cuts - starts
    cost = np.abs(x[starts // m] - y[starts // n])
    return float(np.dot(widths, cost) / (n * m))


def wasserstein_spike(f, g, empty_penalty: Optional[float] = None) -> float:
    """Minimum-cost flow between two normalised spike trains (ms).

    Both empty gives 0. Exactly one empty has no valid flow; ``empty_penalty``
    is returned instead and must then be supplied.
    """
    return _distance(f, g, empty_penalty)[0]


def _distance(f, g, empty_penalty) -> tuple[float, bool]:
    x = np.sort(np.asarray(f, dtype=float))
    y = np.sort(np.asarray(g, dtype=float))
    if len(x) == 0 and len(y) == 0:
        return 0.0, False
    if len(x) == 0 or len(y) == 0:
        if empty_penalty is None:
            raise InputDomainError("one spike train is empty and no empty_penalty was given")
        return float(empty_penalty), True
    return _transport_sorted(x, y), False


@dataclass
class PopulationStateMatrix:
    counts: np.ndarray  # (bins, neurons)
    bin_width: float


def population_state_vectors(raster: SpikeRaster, bin_width: float) -> PopulationStateMatrix:
    if not bin_width > 0:
        raise InputDomainError("bin_width must be > 0")
    n_bins = int(math.ceil(raster.duration / bin_width - 1e-12))
    counts = np.zeros((n_bins, raster.neuron_count), dtype=int)
    for i, times in enumerate(raster.trains):
        if len(times):
            b = np.minimum((times // bin_width).astype(int), n_bins - 1)
            np.add.at(counts[:, i], b, 1)
    return PopulationStateMatrix(counts, bin_width)


def _response_distance(a: SpikeRaster, b: SpikeRaster, subset: Sequence[int],
                       empty_penalty: Optional[float]) -> tuple[float, int]:
    if len(subset) == 0:
        raise InputDomainError("neuron subset is empty")
    for r in (a, b):
        if max(subset) >= r.neuron_count or min(subset) < 0:
            raise InputDomainError("raster does not cover the neuron subset")
    if empty_penalty is None:
        empty_penalty = max(a.duration, b.duration)
    total, flagged = 0.0, 0
    for i in subset:
        d, flag = _distance(a.trains[i], b.trains[i], empty_penalty)
        total += d
        flagged += flag
    return total / len(subset), flagged


def response_distance(a: SpikeRaster, b: SpikeRaster, neuron_subset: Sequence[int],
                      empty_penalty: Optional[float] = None) -> float:
    """Mean per-neuron spike distance over ``neuron_subset``.

    A neuron silent in exactly one response costs ``empty_penalty``, by
    default the simulation duration.
    """
    return _response_distance(a, b, list(neuron_subset), empty_penalty)[0]


@dataclass
class DistanceMatrix:
    values: np.ndarray
    neuron_subset: list = field(default_factory=list)
    empty_penalty_count: int = 0

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        path = Path(path)
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")
        meta = {"n": self.n, "neuron_subset": [int(i) for i in self.neuron_subset],
                "empty_penalty_count": int(self.empty_penalty_count)}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        path = Path(path)
        values = np.loadtxt(path, delimiter=",", ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        return cls(values, meta["neuron_subset"], meta["empty_penalty_count"])


def distance_matrix(responses: Sequence[SpikeRaster], neuron_subset: Sequence[int],
                    empty_penalty: Optional[float] = None) -> DistanceMatrix:
    if len(responses) < 2:
        raise InputDomainError("need at least two responses")
    counts = {r.neuron_count for r in responses}
    if len(counts) != 1:
        raise InputDomainError(f"responses have mismatched neuron counts {sorted(counts)}")
    subset = [int(i) for i in neuron_subset]
    if not subset:
        raise InputDomainError("neuron subset is empty")
    n = len(responses)
    d = np.zeros((n, n))
    flagged = 0
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j], f = _response_distance(responses[i], responses[j], subset, empty_penalty)
            d[j, i] = d[i, j]
            flagged += f
    return DistanceMatrix(d, subset, flagged)
