"""Supervised training of the recurrent LIF network with surrogate gradients.

The forward pass is a batched copy of :meth:`LIFEngine.run` (same update
order, same arithmetic), so a trained network can be handed straight back to
:func:`rsnntopo.lif_sim.simulate`. The backward pass replaces the Heaviside
derivative by a fast-sigmoid surrogate and treats the reset as a constant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, TrainingError
from .lif_sim import SpikeRaster, bin_input, n_steps_for, rate_encode
from .net_graph import NetworkTopology
from .plasticity import SimConfig


def surrogate_grad(v, v_th, beta: float):
    """Fast-sigmoid stand-in for d(spike)/dv, in (0, 1]."""
    if not beta > 0:
        raise ConfigurationError("must be > 0", "surrogate_beta")
    return 1.0 / (1.0 + beta * np.abs(np.asarray(v) - v_th)) ** 2


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.005
    surrogate_beta: float = 10.0
    truncation_length: Optional[int] = None  # None: full sequence
    batch_size: int = 8
    momentum: float = 0.9
    optimizer: str = "adam"  # "adam" or "momentum"
    readout_init_scale: float = 0.01
    snapshot: bool = False
    seed: int = 0

    def __post_init__(self):
        # zero learning rate is accepted as an explicit no-op run
        if not self.learning_rate >= 0:
            raise ConfigurationError("must be >= 0", "learning_rate")
        if not self.surrogate_beta > 0:
            raise ConfigurationError("must be > 0", "surrogate_beta")
        if self.truncation_length is not None and self.truncation_length < 1:
            raise ConfigurationError("must be >= 1", "truncation_length")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size >= 1 and epochs >= 0 required", "batch_size/epochs")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("must lie in [0, 1)", "momentum")
        if self.optimizer not in ("adam", "momentum"):
            raise ConfigurationError("must be 'adam' or 'momentum'", "optimizer")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Readout:
    """Linear decoder on output-neuron spike counts."""

    weights: np.ndarray  # (classes, n_out)
    bias: np.ndarray

    def logits(self, counts: np.ndarray) -> np.ndarray:
        return counts @ self.weights.T + self.bias

    def predict(self, counts: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(counts), axis=1)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Readout":
        return cls(np.array(d["weights"], dtype=float), np.array(d["bias"], dtype=float))


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    b = len(labels)
    loss = -np.mean(np.log(p[np.arange(b), labels] + 1e-300))
    grad = p.copy()
    grad[np.arange(b), labels] -= 1.0
    return float(loss), grad / b


@dataclass
class ForwardTape:
    x: np.ndarray  # (K, B, n_in) input counts
    v_pre: np.ndarray  # (K, B, n) potential after integration, before reset
    spikes: np.ndarray  # (K, B, n) float 0/1
    refractory: np.ndarray  # (K, B, n) bool

    @property
    def counts(self) -> np.ndarray:
        return self.spikes.sum(axis=0)


class BPTTTrainer:
    def __init__(self, net: NetworkTopology, cfg: TrainConfig, sim: SimConfig, n_classes: int):
        self.net = net
        self.cfg = cfg
        self.sim = sim
        self.dt = sim.dt
        self.n = net.neuron_count
        tau = net.neuron_field("tau_m")
        self.decay = np.exp(-self.dt / tau)
        self.v_th = net.neuron_field("v_th")
        self.v_rest = net.neuron_field("v_rest")
        self.v_reset = net.neuron_field("v_reset")
        self.ref_steps = np.rint(net.neuron_field("t_ref") / self.dt).astype(int)
        self.W = net.weight_matrix()
        self.w_in = net.input_weights().astype(float)
        self.adj = net.adjacency()
        self.w_lo = net.synapse_field("w_min")
        self.w_hi = net.synapse_field("w_max")
        ins = net.input_synapses
        self.in_lo = np.array([p.w_min for p in ins]) if ins else np.full(len(self.w_in), -np.inf)
        self.in_hi = np.array([p.w_max for p in ins]) if ins else np.full(len(self.w_in), np.inf)
        self.input_ids = np.array(net.input_ids, dtype=int)
        self.output_ids = np.array(net.output_ids, dtype=int)
        self.bias_drive = np.zeros(self.n)
        rng = np.random.default_rng(cfg.seed)
        self.readout = Readout(
            rng.normal(0.0, cfg.readout_init_scale, (n_classes, len(self.output_ids))),
            np.zeros(n_classes),
        )
        self.rng = rng
        self.history: list[tuple[int, float, float]] = []
        self.snapshots: list[tuple[int, NetworkTopology, Readout]] = []

    # -- forward -------------------------------------------------------------

    def encode(self, samples: Sequence, seeds: Sequence[int]) -> np.ndarray:
        n_steps = n_steps_for(self.sim.duration, self.dt)
        out = np.zeros((n_steps, len(samples), len(self.input_ids)))
        for b, (s, seed) in enumerate(zip(samples, seeds)):
            if not isinstance(s, SpikeRaster):
                s = rate_encode(s, self.sim.duration, self.sim.max_rate, int(seed), self.dt)
            out[:, b, :] = bin_input(s, len(self.input_ids), n_steps, self.dt)
        return out

    def forward(self, x: np.ndarray) -> ForwardTape:
        n_steps, batch, _ = x.shape
        g_in, g_rec = self.sim.input_gain, self.sim.recurrent_gain
        v = np.broadcast_to(self.v_rest, (batch, self.n)).copy()
        ref = np.zeros((batch, self.n), dtype=int)
        s_prev = np.zeros((batch, self.n))
        v_pre = np.empty((n_steps, batch, self.n))
        spikes = np.empty((n_steps, batch, self.n))
        refr_tape = np.empty((n_steps, batch, self.n), dtype=bool)
        for k in range(n_steps):
            current = g_rec * (s_prev @ self.W.T)
            current[:, self.input_ids] += g_in * self.w_in * x[k]
            refr = ref > 0
            ref[refr] -= 1
            u = self.v_rest + (v - self.v_rest) * self.decay + self.bias_drive + current
            u = np.where(refr, self.v_reset, u)
            s = (u >= self.v_th) & ~refr
            v_pre[k] = u
            v = np.where(s, self.v_reset, u)
            ref = np.where(s, self.ref_steps, ref)
            spikes[k] = s
            refr_tape[k] = refr
            s_prev = spikes[k]
        return ForwardTape(x, v_pre, spikes, refr_tape)

    # -- backward ------------------------------------------------------------

    def backward(self, tape: ForwardTape, d_counts_out: np.ndarray):
        """Gradients of the loss w.r.t. ``W`` and ``w_in`` given dL/d(output counts)."""
        n_steps, batch, n = tape.spikes.shape
        g_in, g_rec = self.sim.input_gain, self.sim.recurrent_gain
        beta = self.cfg.surrogate_beta
        trunc = self.cfg.truncation_length or n_steps
        d_counts = np.zeros((batch, n))
        d_counts[:, self.output_ids] = d_counts_out
        gW = np.zeros_like(self.W)
        g_win = np.zeros_like(self.w_in)
        d_v = np.zeros((batch, n))  # dL/dv_k after reset, carried back
        d_cur_next = np.zeros((batch, n))
        for k in range(n_steps - 1, -1, -1):
            if (k + 1) % trunc == 0:
                d_v[:] = 0.0
                d_cur_next[:] = 0.0
            s_k = tape.spikes[k]
            d_s = d_counts + g_rec * (d_cur_next @ self.W)
            sg = surrogate_grad(tape.v_pre[k], self.v_th, beta)
            d_u = (d_s * sg + d_v * (1.0 - s_k)) * ~tape.refractory[k]
            if k > 0:
                gW += g_rec * (d_u.T @ tape.spikes[k - 1])
            g_win += g_in * np.sum(d_u[:, self.input_ids] * tape.x[k], axis=0)
            d_v = d_u * self.decay
            d_cur_next = d_u
        return gW * self.adj, g_win

    # -- training loop -------------------------------------------------------

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        tape = self.forward(x)
        counts = tape.counts[:, self.output_ids]
        loss, d_logits = softmax_xent(self.readout.logits(counts), labels)
        g_R = d_logits.T @ counts
        g_b = d_logits.sum(axis=0)
        gW, g_win = self.backward(tape, d_logits @ self.readout.weights)
        return loss, tape, (gW, g_win, g_R, g_b)

    def fit(self, samples: Sequence, labels: Sequence[int]) -> NetworkTopology:
        cfg = self.cfg
        labels = np.asarray(labels, dtype=int)
        enc_seeds = self.rng.integers(0, 2**63 - 1, len(samples))
        x_all = self.encode(samples, enc_seeds)
        params = [self.W, self.w_in, self.readout.weights, self.readout.bias]
        vel = [np.zeros_like(p) for p in params]
        sq = [np.zeros_like(p) for p in params]
        step = 0
        for epoch in range(1, cfg.epochs + 1):
            order = self.rng.permutation(len(samples))
            for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                loss, _, grads = self.loss_and_grads(x_all[:, idx], labels[idx])
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                    raise TrainingError("non-finite loss or gradient", epoch, bi)
                step += 1
                for p, v, m2, g in zip(params, vel, sq, grads):
                    if cfg.optimizer == "momentum":
                        v *= cfg.momentum
                        v += g
                        p -= cfg.learning_rate * v
                    else:
                        v *= cfg.momentum
                        v += (1 - cfg.momentum) * g
                        m2 *= 0.999
                        m2 += 0.001 * g * g
                        v_hat = v / (1 - cfg.momentum ** step)
                        m_hat = m2 / (1 - 0.999 ** step)
                        p -= cfg.learning_rate * v_hat / (np.sqrt(m_hat) + 1e-8)
                np.clip(self.W, self.w_lo, self.w_hi, out=self.W, where=self.adj)
                np.clip(self.w_in, self.in_lo, self.in_hi, out=self.w_in)
            # epoch metrics on the whole training set with the weights just reached
            loss, acc = self.evaluate(x_all, labels)
            if not np.isfinite(loss):
                raise TrainingError("non-finite loss", epoch)
            self.history.append((epoch, loss, acc))
            if cfg.snapshot:
                self.snapshots.append((epoch, self.network(), Readout(self.readout.weights.copy(),
                                                                       self.readout.bias.copy())))
        return self.network()

    def evaluate(self, x: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
        """Loss and accuracy on encoded inputs, without updating anything."""
        counts = self.forward(x).counts[:, self.output_ids]
        logits = self.readout.logits(counts)
        loss, _ = softmax_xent(logits, labels)
        return loss, float(np.mean(np.argmax(logits, axis=1) == labels))

    def network(self) -> NetworkTopology:
        net = self.net.with_weights(self.W, self.w_in)
        echo = dict(net.config_echo)
        echo["readout"] = self.readout.to_dict()
        return NetworkTopology(net.neuron_count, net.neurons, net.synapses, net.input_ids,
                               net.output_ids, net.input_synapses, echo)

    def predict(self, samples: Sequence, seeds: Sequence[int]) -> np.ndarray:
        tape = self.forward(self.encode(samples, seeds))
        return self.readout.predict(tape.counts[:, self.output_ids])

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "train_accuracy"])
            for e, loss, acc in self.history:
                w.writerow([e, repr(float(loss)), repr(float(acc))])


def train_bptt(net: NetworkTopology, dataset: Sequence[tuple], cfg: TrainConfig,
               sim: Optional[SimConfig] = None, n_classes: Optional[int] = None) -> NetworkTopology:
    """Train on ``(sample, label)`` pairs; the decoder is stored under
    ``config_echo["readout"]`` of the returned network."""
    samples = [s for s, _ in dataset]
    labels = [int(y) for _, y in dataset]
    n_classes = n_classes or (max(labels) + 1)
    trainer = BPTTTrainer(net, cfg, sim or SimConfig(), n_classes)
    return trainer.fit(samples, labels)


def readout_of(net: NetworkTopology) -> Readout:
    return Readout.from_dict(net.config_echo["readout"])
