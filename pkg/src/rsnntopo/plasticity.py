"""Online soft-bounded STDP with nearest-neighbour spike pairing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InputDomainError
from .lif_sim import LIFEngine, SpikeRaster, rate_encode
from .net_graph import NetworkTopology, SynapseParams


def stdp_delta(delta_t: float, p: SynapseParams, w: float) -> float:
    """Weight change for one pre/post pairing; ``delta_t = t_post - t_pre``."""
    if delta_t >= 0:
        return p.eta_plus * (p.w_max - w) * math.exp(-abs(delta_t) / p.tau_plus)
    return -p.eta_minus * (w - p.w_min) * math.exp(-abs(delta_t) / p.tau_minus)


@dataclass
class PlasticityTrace:
    """Last spike time of every presynaptic source and postsynaptic neuron.

    With nearest-neighbour pairing the trace seen by a synapse with time
    constant ``tau`` is ``exp(-(t - t_last) / tau)``; storing the timestamps
    lets each synapse decay with its own constant.
    """

    last_post: np.ndarray
    last_pre_input: np.ndarray

    @classmethod
    def fresh(cls, n: int, n_in: int) -> "PlasticityTrace":
        return cls(np.full(n, -np.inf), np.full(n_in, -np.inf))

    @staticmethod
    def value(last: np.ndarray, t: float, tau) -> np.ndarray:
        return np.exp(-(t - last) / tau)


@dataclass
class SimConfig:
    dt: float = 1.0
    duration: float = 100.0
    max_rate: float = 100.0
    input_gain: float = 2.0
    recurrent_gain: float = 0.25

    def __post_init__(self):
        for name in ("dt", "duration", "max_rate"):
            if not getattr(self, name) > 0:
                raise ConfigurationError("must be > 0", name)
        for name in ("input_gain", "recurrent_gain"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError("must be >= 0", name)

    def engine(self, net: NetworkTopology, **kw) -> LIFEngine:
        return LIFEngine(net, self.dt, self.input_gain, self.recurrent_gain, **kw)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class STDPRule:
    """Applies nearest-neighbour STDP to a running :class:`LIFEngine`.

    Post spikes pair with the latest presynaptic spike at or before the
    current step (potentiation); pre spikes pair with the latest strictly
    earlier post spike (depression), so a coincident pair is counted once.
    """

    def __init__(self, engine: LIFEngine, net: NetworkTopology):
        self.e = engine
        self.dt = engine.dt
        n = net.neuron_count
        adj = net.adjacency()
        plastic = np.zeros((n, n), dtype=bool)
        for s in net.synapses:
            plastic[s.post, s.pre] = s.params.plastic
        self.mask = adj & plastic
        f = net.synapse_field
        self.tau_p, self.tau_m = f("tau_plus"), f("tau_minus")
        self.eta_p, self.eta_m = f("eta_plus"), f("eta_minus")
        self.w_lo, self.w_hi = f("w_min"), f("w_max")
        # unconnected entries: keep exponentials finite
        self.tau_p[~adj] = 1.0
        self.tau_m[~adj] = 1.0

        ins = net.input_synapses
        self.in_mask = np.array([p.plastic for p in ins], dtype=bool) if ins else np.zeros(len(net.input_ids), bool)
        get = lambda name, default: np.array([getattr(p, name) for p in ins]) if ins else np.full(len(net.input_ids), default)
        self.in_tau_p, self.in_tau_m = get("tau_plus", 1.0), get("tau_minus", 1.0)
        self.in_eta_p, self.in_eta_m = get("eta_plus", 0.0), get("eta_minus", 0.0)
        self.in_lo, self.in_hi = get("w_min", 0.0), get("w_max", 1.0)
        self.input_ids = np.array(net.input_ids, dtype=int)

        self.trace = PlasticityTrace.fresh(n, len(net.input_ids))
        self.abs_dw = 0.0

    def reset_traces(self) -> None:
        self.trace = PlasticityTrace.fresh(len(self.trace.last_post), len(self.trace.last_pre_input))

    def __call__(self, k: int, spiked: np.ndarray, x_k: np.ndarray) -> None:
        t = k * self.dt
        tr = self.trace
        W, w_in = self.e.W, self.e.w_in
        post_before = tr.last_post.copy()
        # the neuron's own last spike doubles as its presynaptic timestamp
        tr.last_post[spiked] = t
        in_spiked = x_k > 0
        tr.last_pre_input[in_spiked] = t

        post = np.flatnonzero(spiked)
        if post.size:
            # potentiation: post now, nearest pre at or before now
            dt_pre = t - tr.last_post[None, :]
            rows = self.mask[post]
            factor = np.where(rows, np.exp(-dt_pre / self.tau_p[post]), 0.0)
            dw = self.eta_p[post] * (self.w_hi[post] - W[post]) * factor
            W[post] += dw
            self.abs_dw += np.abs(dw).sum()

            # input synapses onto spiking input neurons
            hit = spiked[self.input_ids] & self.in_mask
            if hit.any():
                lag = t - tr.last_pre_input[hit]
                dwi = self.in_eta_p[hit] * (self.in_hi[hit] - w_in[hit]) * np.exp(-lag / self.in_tau_p[hit])
                w_in[hit] += dwi
                self.abs_dw += np.abs(dwi).sum()

        pre = np.flatnonzero(spiked)
        if pre.size:
            # depression: pre now, nearest strictly earlier post
            lag = t - post_before[:, None]
            cols = self.mask[:, pre]
            factor = np.where(cols, np.exp(-lag / self.tau_m[:, pre]), 0.0)
            dw = -self.eta_m[:, pre] * (W[:, pre] - self.w_lo[:, pre]) * factor
            W[:, pre] += dw
            self.abs_dw += np.abs(dw).sum()

        hit = in_spiked & self.in_mask
        if hit.any():
            tgt = self.input_ids[hit]
            lag = t - post_before[tgt]
            dwi = -self.in_eta_m[hit] * (w_in[hit] - self.in_lo[hit]) * np.exp(-lag / self.in_tau_m[hit])
            w_in[hit] += dwi
            self.abs_dw += np.abs(dwi).sum()

        # guard against round-off at the soft bounds
        np.clip(W, self.w_lo, self.w_hi, out=W, where=self.mask)
        np.clip(w_in, self.in_lo, self.in_hi, out=w_in)


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "mean_abs_dw", "w_q05", "w_q25", "w_q50", "w_q75", "w_q95"])
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])


def as_raster(sample, sim: SimConfig, seed: int) -> SpikeRaster:
    if isinstance(sample, SpikeRaster):
        return sample
    return rate_encode(sample, sim.duration, sim.max_rate, seed, sim.dt)


def train_unsupervised(net: NetworkTopology, dataset: Sequence, epochs: int = 1,
                       sim: Optional[SimConfig] = None, seed: int = 0,
                       log: Optional[TrainingLog] = None) -> NetworkTopology:
    """Present every sample once per epoch with plasticity on.

    Samples are feature vectors (rate encoded with a per-presentation seed) or
    ready-made input rasters. Each presentation starts from rest; weights carry
    over between presentations.
    """
    if len(dataset) == 0:
        raise InputDomainError("dataset is empty")
    sim = sim or SimConfig()
    engine = sim.engine(net)
    rule = STDPRule(engine, net)
    rng = np.random.default_rng(seed)
    n_syn = max(int(rule.mask.sum() + rule.in_mask.sum()), 1)
    for epoch in range(epochs):
        rule.abs_dw = 0.0
        order = rng.permutation(len(dataset))
        enc_seeds = rng.integers(0, 2**63 - 1, len(dataset))
        for idx, s in zip(order, enc_seeds):
            raster = as_raster(dataset[idx], sim, int(s))
            engine.reset()
            rule.reset_traces()
            engine.run(raster, sim.duration, on_step=rule)
        if log is not None:
            ws = np.concatenate([engine.W[rule.mask], engine.w_in])
            q = np.quantile(ws, [0.05, 0.25, 0.5, 0.75, 0.95]) if ws.size else np.zeros(5)
            log.rows.append((epoch + 1, rule.abs_dw / (n_syn * len(dataset)), *q))
    return net.with_weights(engine.W, engine.w_in)
