"""Network topology and heterogeneous parameter sampling.

Every stochastic draw comes from a named child stream of the config seed, so
changing the distribution of one field never perturbs any other draw. This is
what makes a heterogeneous config with degenerate distributions reproduce the
homogeneous model exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InputDomainError

FORMAT_VERSION = 1

FAMILIES = ("constant", "uniform", "lognormal", "gamma")
_FAMILY_PARAMS = {
    "constant": ("value",),
    "uniform": ("low", "high"),
    "lognormal": ("median", "sigma"),
    "gamma": ("shape", "scale"),
}

# stable integer ids for the child RNG streams
_STREAMS = {
    "tau_m": 1,
    "v_th": 2,
    "tau_plus": 3,
    "tau_minus": 4,
    "eta_plus": 5,
    "eta_minus": 6,
    "wiring": 7,
    "weights": 8,
    "input:tau_plus": 9,
    "input:tau_minus": 10,
    "input:eta_plus": 11,
    "input:eta_minus": 12,
    "input:weights": 13,
}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name]]))


@dataclass(frozen=True)
class NeuronParams:
    tau_m: float
    v_th: float
    v_rest: float = 0.0
    v_reset: float = 0.0
    t_ref: float = 2.0

    def __post_init__(self):
        if not self.tau_m > 0:
            raise ConfigurationError(f"must be > 0, got {self.tau_m}", "tau_m")
        if not self.t_ref >= 0:
            raise ConfigurationError(f"must be >= 0, got {self.t_ref}", "t_ref")
        if not (self.v_th > self.v_reset and self.v_th > self.v_rest):
            raise ConfigurationError(
                f"threshold {self.v_th} must exceed v_reset={self.v_reset} and v_rest={self.v_rest}",
                "v_th",
            )


@dataclass(frozen=True)
class SynapseParams:
    weight: float
    tau_plus: float = 20.0
    tau_minus: float = 20.0
    eta_plus: float = 0.01
    eta_minus: float = 0.01
    w_min: float = 0.0
    w_max: float = 1.0
    plastic: bool = True

    def __post_init__(self):
        if not self.w_min <= self.w_max:
            raise ConfigurationError("w_min must not exceed w_max", "w_min")
        if not self.w_min <= self.weight <= self.w_max:
            raise ConfigurationError(
                f"{self.weight} outside [{self.w_min}, {self.w_max}]", "weight"
            )
        if not (self.tau_plus > 0 and self.tau_minus > 0):
            raise ConfigurationError("STDP time constants must be > 0", "tau_plus/tau_minus")
        if self.eta_plus < 0 or self.eta_minus < 0:
            raise ConfigurationError("learning rates must be >= 0", "eta_plus/eta_minus")


@dataclass(frozen=True)
class Synapse:
    pre: int
    post: int
    params: SynapseParams


@dataclass(frozen=True)
class DistSpec:
    """One parameter distribution: a family, its parameters and a clamp range."""

    family: str
    params: dict
    clamp: tuple = (-math.inf, math.inf)

    @classmethod
    def constant(cls, value: float) -> "DistSpec":
        return cls("constant", {"value": float(value)})

    def validate(self, name: str) -> None:
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}", name)
        expected = _FAMILY_PARAMS[self.family]
        missing = [k for k in expected if k not in self.params]
        if missing:
            raise ConfigurationError(f"missing parameters {missing} for {self.family}", name)
        p = self.params
        if self.family == "uniform" and not p["low"] <= p["high"]:
            raise ConfigurationError("uniform requires low <= high", name)
        if self.family == "lognormal" and (p["median"] <= 0 or p["sigma"] < 0):
            raise ConfigurationError("lognormal requires median > 0 and sigma >= 0", name)
        if self.family == "gamma" and (p["shape"] <= 0 or p["scale"] <= 0):
            raise ConfigurationError("gamma requires positive shape and scale", name)
        lo, hi = self.clamp
        if not lo <= hi:
            raise ConfigurationError("clamp range is empty", name)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.family == "constant":
            x = np.full(size, float(p["value"]))
        elif self.family == "uniform":
            x = rng.uniform(p["low"], p["high"], size)
        elif self.family == "lognormal":
            x = rng.lognormal(math.log(p["median"]), p["sigma"], size)
        else:
            x = rng.gamma(p["shape"], p["scale"], size)
        lo, hi = self.clamp
        return np.clip(x, lo, hi)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "clamp": list(self.clamp)}

    @classmethod
    def from_dict(cls, d) -> "DistSpec":
        if isinstance(d, (int, float)):
            return cls.constant(d)
        clamp = d.get("clamp", (-math.inf, math.inf))
        clamp = tuple(-math.inf if c is None and i == 0 else math.inf if c is None else float(c)
                      for i, c in enumerate(clamp))
        return cls(d["family"], {k: float(v) for k, v in d.get("params", {}).items()}, clamp)


_DIST_FIELDS = ("tau_m", "v_th", "tau_plus", "tau_minus", "eta_plus", "eta_minus")


@dataclass(frozen=True)
class HeterogeneityConfig:
    """Distributions for the heterogeneous parameters plus the shared constants.

    The defaults are the heterogeneous (HRSNN) setting; see :meth:`homogeneous`.
    """

    tau_m: DistSpec = DistSpec("lognormal", {"median": 20.0, "sigma": 0.4}, (5.0, 100.0))
    v_th: DistSpec = DistSpec("uniform", {"low": 0.8, "high": 1.2}, (0.5, 2.0))
    tau_plus: DistSpec = DistSpec("gamma", {"shape": 4.0, "scale": 5.0}, (2.0, 100.0))
    tau_minus: DistSpec = DistSpec("gamma", {"shape": 4.0, "scale": 5.0}, (2.0, 100.0))
    eta_plus: DistSpec = DistSpec("gamma", {"shape": 2.0, "scale": 0.005}, (0.0, 0.1))
    eta_minus: DistSpec = DistSpec("gamma", {"shape": 2.0, "scale": 0.005}, (0.0, 0.1))
    v_rest: float = 0.0
    v_reset: float = 0.0
    t_ref: float = 2.0
    w_min: float = 0.0
    w_max: float = 1.0
    connection_probability: float = 0.2
    plastic_recurrent: bool = True
    plastic_input: bool = True
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in _DIST_FIELDS:
            getattr(self, name).validate(name)
        if not 0 < self.connection_probability <= 1:
            raise ConfigurationError("must lie in (0, 1]", "connection_probability")
        if not self.w_min <= self.w_max:
            raise ConfigurationError("w_min must not exceed w_max", "w_min")
        if self.t_ref < 0:
            raise ConfigurationError("must be >= 0", "t_ref")
        for name in ("tau_m", "tau_plus", "tau_minus"):
            if not self._lower_bound(name) > 0:
                raise ConfigurationError("clamp lower bound must be > 0", name)
        for name in ("eta_plus", "eta_minus"):
            if not self._lower_bound(name) >= 0:
                raise ConfigurationError("clamp lower bound must be >= 0", name)
        if not self._lower_bound("v_th") > max(self.v_rest, self.v_reset):
            raise ConfigurationError("clamp lower bound must exceed v_rest and v_reset", "v_th")

    def _lower_bound(self, name: str) -> float:
        spec = getattr(self, name)
        if spec.family == "constant":
            return max(spec.params["value"], spec.clamp[0])
        if spec.family == "uniform":
            return max(spec.params["low"], spec.clamp[0])
        # lognormal and gamma are supported on (0, inf)
        return spec.clamp[0] if spec.clamp[0] > 0 else math.ulp(0.0)

    @classmethod
    def homogeneous(cls, seed: int = 0, **overrides) -> "HeterogeneityConfig":
        """Constant-family config (the MRSNN model) at the heterogeneous medians."""
        base = dict(
            tau_m=DistSpec.constant(20.0),
            v_th=DistSpec.constant(1.0),
            tau_plus=DistSpec.constant(20.0),
            tau_minus=DistSpec.constant(20.0),
            eta_plus=DistSpec.constant(0.01),
            eta_minus=DistSpec.constant(0.01),
            seed=seed,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = {name: getattr(self, name).to_dict() for name in _DIST_FIELDS}
        for k in ("v_rest", "v_reset", "t_ref", "w_min", "w_max", "connection_probability",
                  "plastic_recurrent", "plastic_input", "seed"):
            d[k] = getattr(self, k)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HeterogeneityConfig":
        kw = {}
        for k, v in d.items():
            if k in _DIST_FIELDS:
                kw[k] = DistSpec.from_dict(v)
            elif k in ("v_rest", "v_reset", "t_ref", "w_min", "w_max", "connection_probability"):
                kw[k] = float(v)
            elif k in ("plastic_recurrent", "plastic_input"):
                kw[k] = bool(v)
            elif k == "seed":
                kw[k] = int(v)
            else:
                raise ConfigurationError("unknown key", k)
        return cls(**kw)


def sample_params(cfg: HeterogeneityConfig, n: int, seed: int) -> list[NeuronParams]:
    """Draw ``n`` neuron parameter records; identical ``(cfg, seed)`` gives identical output."""
    if n < 1:
        raise ConfigurationError("need at least one neuron", "n")
    tau_m = cfg.tau_m.draw(stream(seed, "tau_m"), n)
    v_th = cfg.v_th.draw(stream(seed, "v_th"), n)
    return [
        NeuronParams(float(t), float(v), cfg.v_rest, cfg.v_reset, cfg.t_ref)
        for t, v in zip(tau_m, v_th)
    ]


def _sample_synapses(cfg: HeterogeneityConfig, count: int, seed: int, prefix: str,
                     plastic: bool) -> list[SynapseParams]:
    if count == 0:
        return []
    draws = {name: getattr(cfg, name).draw(stream(seed, prefix + name), count)
             for name in ("tau_plus", "tau_minus", "eta_plus", "eta_minus")}
    weights = stream(seed, prefix + "weights").uniform(cfg.w_min, cfg.w_max, count)
    return [
        SynapseParams(
            weight=float(np.clip(weights[k], cfg.w_min, cfg.w_max)),
            tau_plus=float(draws["tau_plus"][k]),
            tau_minus=float(draws["tau_minus"][k]),
            eta_plus=float(draws["eta_plus"][k]),
            eta_minus=float(draws["eta_minus"][k]),
            w_min=cfg.w_min,
            w_max=cfg.w_max,
            plastic=plastic,
        )
        for k in range(count)
    ]


@dataclass(frozen=True)
class NetworkTopology:
    """Directed weighted graph of LIF neurons.

    ``input_synapses[k]`` is the one-to-one synapse from external input channel
    ``k`` onto neuron ``input_ids[k]``.
    """

    neuron_count: int
    neurons: tuple
    synapses: tuple
    input_ids: tuple
    output_ids: tuple
    input_synapses: tuple = ()
    config_echo: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.neuron_count
        if len(self.neurons) != n:
            raise ConfigurationError(f"expected {n} neuron records, got {len(self.neurons)}", "neurons")
        seen = set()
        for s in self.synapses:
            if s.pre == s.post:
                raise ConfigurationError(f"self-loop on neuron {s.pre}", "synapses")
            if not (0 <= s.pre < n and 0 <= s.post < n):
                raise ConfigurationError(f"synapse ({s.pre}, {s.post}) out of range", "synapses")
            if (s.pre, s.post) in seen:
                raise ConfigurationError(f"duplicate synapse ({s.pre}, {s.post})", "synapses")
            seen.add((s.pre, s.post))
        ins, outs = set(self.input_ids), set(self.output_ids)
        if not ins or not outs:
            raise ConfigurationError("input_ids and output_ids must be nonempty", "input_ids")
        if ins & outs:
            raise ConfigurationError(f"input and output sets overlap: {sorted(ins & outs)}", "output_ids")
        if len(ins) != len(self.input_ids) or len(outs) != len(self.output_ids):
            raise ConfigurationError("duplicate ids", "input_ids/output_ids")
        if not all(0 <= i < n for i in ins | outs):
            raise ConfigurationError("ids outside [0, neuron_count)", "input_ids/output_ids")
        if self.input_synapses and len(self.input_synapses) != len(self.input_ids):
            raise ConfigurationError("one input synapse per input id required", "input_synapses")

    # -- array views -------------------------------------------------------

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(s.pre, s.post) for s in self.synapses]

    def weight_matrix(self) -> np.ndarray:
        """Dense ``W[post, pre]``."""
        w = np.zeros((self.neuron_count, self.neuron_count))
        for s in self.synapses:
            w[s.post, s.pre] = s.params.weight
        return w

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.neuron_count, self.neuron_count), dtype=bool)
        for s in self.synapses:
            a[s.post, s.pre] = True
        return a

    def input_weights(self) -> np.ndarray:
        if not self.input_synapses:
            return np.ones(len(self.input_ids))
        return np.array([p.weight for p in self.input_synapses])

    def synapse_field(self, name: str) -> np.ndarray:
        """Dense ``[post, pre]`` matrix of a SynapseParams field (zero where no synapse)."""
        m = np.zeros((self.neuron_count, self.neuron_count))
        for s in self.synapses:
            m[s.post, s.pre] = getattr(s.params, name)
        return m

    def neuron_field(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.neurons], dtype=float)

    def with_weights(self, weights: np.ndarray, input_weights: Optional[np.ndarray] = None
                     ) -> "NetworkTopology":
        """Copy with recurrent weights taken from dense ``weights[post, pre]``."""
        syn = tuple(
            Synapse(s.pre, s.post, replace(s.params, weight=float(weights[s.post, s.pre])))
            for s in self.synapses
        )
        ins = self.input_synapses
        if input_weights is not None and ins:
            ins = tuple(replace(p, weight=float(w)) for p, w in zip(ins, input_weights))
        return replace(self, synapses=syn, input_synapses=ins)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "neuron_count": self.neuron_count,
            "neurons": [asdict(p) for p in self.neurons],
            "synapses": [{"pre": s.pre, "post": s.post, **asdict(s.params)} for s in self.synapses],
            "input_synapses": [asdict(p) for p in self.input_synapses],
            "input_ids": list(self.input_ids),
            "output_ids": list(self.output_ids),
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkTopology":
        if d.get("version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported network format version {d.get('version')!r}", "version")
        syn = []
        for s in d["synapses"]:
            s = dict(s)
            pre, post = s.pop("pre"), s.pop("post")
            syn.append(Synapse(pre, post, SynapseParams(**s)))
        return cls(
            neuron_count=d["neuron_count"],
            neurons=tuple(NeuronParams(**p) for p in d["neurons"]),
            synapses=tuple(syn),
            input_ids=tuple(d["input_ids"]),
            output_ids=tuple(d["output_ids"]),
            input_synapses=tuple(SynapseParams(**p) for p in d.get("input_synapses", [])),
            config_echo=d.get("config_echo", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "NetworkTopology":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_network(cfg: HeterogeneityConfig, neuron_count: int, input_ids: Iterable[int],
                  output_ids: Iterable[int]) -> NetworkTopology:
    """Erdos-Renyi directed wiring at ``cfg.connection_probability`` over all neurons.

    Input and output neurons take part in the recurrent wiring like any other.
    """
    input_ids = tuple(int(i) for i in input_ids)
    output_ids = tuple(int(i) for i in output_ids)
    overlap = set(input_ids) & set(output_ids)
    if overlap:
        raise ConfigurationError(f"input and output sets overlap: {sorted(overlap)}", "output_ids")
    if neuron_count < len(set(input_ids)) + len(set(output_ids)):
        raise ConfigurationError("fewer neurons than input + output ids", "neuron_count")
    n = int(neuron_count)
    neurons = sample_params(cfg, n, cfg.seed)

    draw = stream(cfg.seed, "wiring").random((n, n))
    mask = draw < cfg.connection_probability
    np.fill_diagonal(mask, False)
    pres, posts = np.nonzero(mask)  # row-major: sorted by (pre, post)
    params = _sample_synapses(cfg, len(pres), cfg.seed, "", cfg.plastic_recurrent)
    synapses = tuple(Synapse(int(a), int(b), p) for a, b, p in zip(pres, posts, params))
    in_syn = _sample_synapses(cfg, len(input_ids), cfg.seed, "input:", cfg.plastic_input)
    return NetworkTopology(
        neuron_count=n,
        neurons=tuple(neurons),
        synapses=synapses,
        input_ids=input_ids,
        output_ids=output_ids,
        input_synapses=tuple(in_syn),
        config_echo=cfg.to_dict(),
    )


def default_io_ids(neuron_count: int, n_inputs: int, n_outputs: int) -> tuple[list[int], list[int]]:
    """Inputs are the lowest ids, outputs the highest."""
    if n_inputs + n_outputs > neuron_count:
        raise ConfigurationError("too many input/output neurons", "neuron_count")
    return list(range(n_inputs)), list(range(neuron_count - n_outputs, neuron_count))


def from_edges(n: int, edges: Sequence[tuple[int, int]], input_ids=(0,), output_ids=None,
               weight: float = 0.5, neuron: Optional[NeuronParams] = None) -> NetworkTopology:
    """Hand-built topology with uniform parameters; mostly for tests and examples."""
    neuron = neuron or NeuronParams(20.0, 1.0)
    if output_ids is None:
        output_ids = (n - 1,)
    return NetworkTopology(
        neuron_count=n,
        neurons=tuple([neuron] * n),
        synapses=tuple(Synapse(int(a), int(b), SynapseParams(weight)) for a, b in edges),
        input_ids=tuple(input_ids),
        output_ids=tuple(output_ids),
        input_synapses=tuple(SynapseParams(weight) for _ in input_ids),
    )
