"""Clocked simulation of heterogeneous leaky integrate-and-fire networks.

Time is in ms, potentials in mV, rates in Hz. A spike emitted during step
``k`` (the interval ``[k*dt, (k+1)*dt)``) is recorded at ``k*dt`` and reaches
its postsynaptic targets in step ``k + 1``. External input spikes are
delivered in the step that contains them.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputDomainError, ParseError
from .net_graph import NetworkTopology


@dataclass
class SpikeRaster:
    """Per-neuron sorted spike times over ``[0, duration)``."""

    duration: float
    dt: float
    trains: list

    def __post_init__(self):
        self.trains = [np.asarray(t, dtype=float).reshape(-1) for t in self.trains]
        for i, t in enumerate(self.trains):
            check_train(t, self.duration, i)

    @property
    def neuron_count(self) -> int:
        return len(self.trains)

    def counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.trains], dtype=int)

    def subset(self, ids: Sequence[int]) -> "SpikeRaster":
        return SpikeRaster(self.duration, self.dt, [self.trains[i] for i in ids])

    def equals(self, other: "SpikeRaster") -> bool:
        return (
            self.duration == other.duration
            and self.neuron_count == other.neuron_count
            and all(np.array_equal(a, b) for a, b in zip(self.trains, other.trains))
        )

    @classmethod
    def empty(cls, n: int, duration: float, dt: float = 0.1) -> "SpikeRaster":
        return cls(duration, dt, [np.empty(0)] * n)


def check_train(times: np.ndarray, duration: float, neuron: int = 0) -> None:
    if len(times) == 0:
        return
    if times[0] < 0:
        raise InputDomainError(f"neuron {neuron}: negative spike time {times[0]}")
    if times[-1] >= duration:
        raise InputDomainError(f"neuron {neuron}: spike time {times[-1]} >= duration {duration}")
    if np.any(np.diff(times) <= 0):
        raise InputDomainError(f"neuron {neuron}: spike times not strictly increasing")


@dataclass
class SimState:
    v: np.ndarray
    refractory: np.ndarray  # remaining refractory time, ms
    current: np.ndarray  # pulse input delivered in the last step


def rate_encode(features, duration: float, max_rate: float, seed: int,
                dt: float = 0.1) -> SpikeRaster:
    """Independent Poisson trains; neuron ``i`` fires at ``features[i] * max_rate`` Hz."""
    x = np.asarray(features, dtype=float).reshape(-1)
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
        raise InputDomainError("features must lie in [0, 1]")
    if not max_rate > 0:
        raise InputDomainError("max_rate must be > 0")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(x * max_rate * duration / 1000.0)
    trains = []
    for c in counts:
        t = np.sort(rng.uniform(0.0, duration, c))
        # continuous draws collide with probability zero; guard anyway
        trains.append(np.unique(t))
    return SpikeRaster(duration, dt, trains)


def bin_input(raster: Optional[SpikeRaster], n_channels: int, n_steps: int, dt: float) -> np.ndarray:
    """Spike counts per (step, channel)."""
    out = np.zeros((n_steps, n_channels))
    if raster is None:
        return out
    for ch, times in enumerate(raster.trains):
        if len(times):
            steps = np.floor(times / dt + 1e-9).astype(int)
            steps = steps[steps < n_steps]
            np.add.at(out[:, ch], steps, 1.0)
    return out


def n_steps_for(duration: float, dt: float) -> int:
    return int(math.ceil(duration / dt - 1e-9))


class LIFEngine:
    """Vectorised exponential-Euler integrator for one network.

    ``W`` (dense ``[post, pre]``) and ``w_in`` are plain arrays that an
    ``on_step`` hook may modify in place; plasticity uses this.
    """

    def __init__(self, net: NetworkTopology, dt: float = 0.1, input_gain: float = 1.0,
                 recurrent_gain: float = 1.0, bias_current=None, input_weights=None):
        if not dt > 0:
            raise InputDomainError("dt must be > 0")
        self.net = net
        self.dt = float(dt)
        self.n = net.neuron_count
        tau = net.neuron_field("tau_m")
        if dt > tau.min() / 5:
            warnings.warn(f"dt={dt} exceeds min tau_m / 5 = {tau.min() / 5:.4g}", RuntimeWarning)
        self.decay = np.exp(-self.dt / tau)
        self.v_th = net.neuron_field("v_th")
        self.v_rest = net.neuron_field("v_rest")
        self.v_reset = net.neuron_field("v_reset")
        self.ref_steps = np.rint(net.neuron_field("t_ref") / self.dt).astype(int)
        self.W = net.weight_matrix()
        self.w_in = np.array(net.input_weights() if input_weights is None else input_weights, dtype=float)
        if self.w_in.shape != (len(net.input_ids),):
            raise InputDomainError("input_weights must have one entry per input id")
        self.input_ids = np.array(net.input_ids, dtype=int)
        self.input_gain = float(input_gain)
        self.recurrent_gain = float(recurrent_gain)
        bias = np.zeros(self.n) if bias_current is None else np.broadcast_to(
            np.asarray(bias_current, dtype=float), (self.n,)).copy()
        self.bias_drive = bias * (1.0 - self.decay)
        self.reset()

    def reset(self) -> None:
        self.v = self.v_rest.copy()
        self.ref = np.zeros(self.n, dtype=int)
        self.current = np.zeros(self.n)

    @property
    def state(self) -> SimState:
        return SimState(self.v.copy(), self.ref * self.dt, self.current.copy())

    def run(self, inp: Optional[SpikeRaster], duration: float,
            on_step: Optional[Callable] = None) -> SpikeRaster:
        """Simulate ``duration`` ms from the current state.

        ``on_step(k, spiked, in_counts_k)`` is called after the spike check of
        every step with the boolean spike vector and the input counts.
        """
        n_in = len(self.input_ids)
        if inp is not None and inp.neuron_count != n_in:
            raise InputDomainError(
                f"input raster has {inp.neuron_count} channels but the network has {n_in} input ids")
        n_steps = n_steps_for(duration, self.dt)
        x = bin_input(inp, n_in, n_steps, self.dt)
        s_prev = np.zeros(self.n)
        rec_steps, rec_ids = [], []
        for k in range(n_steps):
            current = self.recurrent_gain * (self.W @ s_prev)
            current[self.input_ids] += self.input_gain * self.w_in * x[k]
            spiked = self._step(current)
            if spiked.any():
                idx = np.flatnonzero(spiked)
                rec_ids.append(idx)
                rec_steps.append(np.full(len(idx), k))
            if on_step is not None:
                on_step(k, spiked, x[k])
            s_prev = spiked.astype(float)
        return _collect(rec_steps, rec_ids, self.n, duration, self.dt)

    def _step(self, current: np.ndarray) -> np.ndarray:
        refractory = self.ref > 0
        self.ref[refractory] -= 1
        v = self.v_rest + (self.v - self.v_rest) * self.decay + self.bias_drive + current
        v = np.where(refractory, self.v_reset, v)
        spiked = (v >= self.v_th) & ~refractory
        v[spiked] = self.v_reset[spiked]
        self.ref[spiked] = self.ref_steps[spiked]
        self.v = v
        self.current = current
        return spiked


def _collect(rec_steps, rec_ids, n, duration, dt) -> SpikeRaster:
    if not rec_ids:
        return SpikeRaster.empty(n, duration, dt)
    steps = np.concatenate(rec_steps)
    ids = np.concatenate(rec_ids)
    order = np.lexsort((steps, ids))
    steps, ids = steps[order], ids[order]
    bounds = np.searchsorted(ids, np.arange(n + 1))
    trains = [steps[bounds[i]:bounds[i + 1]] * dt for i in range(n)]
    return SpikeRaster(duration, dt, trains)


def simulate(net: NetworkTopology, inp: Optional[SpikeRaster], dt: float = 0.1,
             duration: Optional[float] = None, input_weights=None, *, input_gain: float = 1.0,
             recurrent_gain: float = 1.0, bias_current=None, return_state: bool = False):
    """Run one network on one input raster from rest.

    ``bias_current`` is a constant current (mV after multiplication by the
    membrane resistance) added to every step; synaptic events are delta
    pulses that raise the potential by ``gain * weight``.
    """
    if duration is None:
        if inp is None:
            raise InputDomainError("duration required when there is no input raster")
        duration = inp.duration
    engine = LIFEngine(net, dt, input_gain, recurrent_gain, bias_current, input_weights)
    raster = engine.run(inp, duration)
    return (raster, engine.state) if return_state else raster


def readout_rates(raster: SpikeRaster, window: Optional[tuple] = None) -> np.ndarray:
    """Per-neuron firing rate (Hz) in ``[t0, t1)``."""
    t0, t1 = window if window is not None else (0.0, raster.duration)
    if not (0 <= t0 < t1 <= raster.duration):
        raise InputDomainError(f"invalid window ({t0}, {t1}) for duration {raster.duration}")
    counts = np.array([np.count_nonzero((t >= t0) & (t < t1)) for t in raster.trains], dtype=float)
    return counts / ((t1 - t0) / 1000.0)


# -- file format -------------------------------------------------------------

def save_raster(raster: SpikeRaster, path, extra: Optional[dict] = None) -> None:
    """CSV ``neuron_id,time_ms`` sorted by (neuron, time) plus a ``.json`` sidecar."""
    path = Path(path)
    lines = ["neuron_id,time_ms"]
    for i, times in enumerate(raster.trains):
        lines.extend(f"{i},{format_time(t)}" for t in times)
    path.write_text("\n".join(lines) + "\n")
    meta = {"duration": raster.duration, "dt": raster.dt, "neuron_count": raster.neuron_count}
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))


def format_time(t: float) -> str:
    """Shortest fixed-point text with at least 6 decimals that parses back to ``t``."""
    for digits in range(6, 60):
        text = f"{t:.{digits}f}"
        if float(text) == t:
            return text
    return repr(t)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def load_raster(path) -> tuple[SpikeRaster, dict]:
    """Parse a raster CSV and its sidecar; returns the raster and the sidecar dict."""
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise ParseError("missing sidecar manifest", path=side)
    try:
        meta = json.loads(side.read_text())
        duration, dt, n = float(meta["duration"]), float(meta["dt"]), int(meta["neuron_count"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad sidecar: {exc}", path=side) from exc
    trains = [[] for _ in range(n)]
    last = (-1, -math.inf)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "neuron_id,time_ms":
            raise ParseError(f"unexpected header {header!r}", line=1, path=path)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                a, b = line.split(",")
                nid, t = int(a), float(b)
            except ValueError:
                raise ParseError(f"malformed row {line!r}", line=lineno, path=path) from None
            if not 0 <= nid < n:
                raise ParseError(f"neuron id {nid} outside [0, {n})", line=lineno, path=path)
            if not math.isfinite(t) or t < 0:
                raise ParseError(f"negative or non-finite time {t}", line=lineno, path=path)
            if t >= duration:
                raise ParseError(f"time {t} >= declared duration {duration}", line=lineno, path=path)
            if (nid, t) <= last:
                raise ParseError("rows not sorted by (neuron_id, time_ms)", line=lineno, path=path)
            last = (nid, t)
            trains[nid].append(t)
    return SpikeRaster(duration, dt, trains), meta
