"""Experiment configuration: one YAML document, validated into dataclasses.

Top-level keys: ``dataset``, ``network``, ``models``, ``simulation``,
``analysis``, ``sweep``, ``output_dir``. Every key is optional; the defaults
describe the desk-scale temporal comparison of the three model families.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from ..errors import ConfigurationError
from ..net_graph import HeterogeneityConfig
from ..plasticity import SimConfig
from ..surrogate_trainer import TrainConfig

DATASET_KINDS = ("synthetic_temporal", "synthetic_spatial", "spike_csv")
MODEL_KINDS = ("stdp", "bptt")
LAYERS = ("L1", "L2", "L3", "L4", "L5")


@dataclass
class DatasetSpec:
    kind: str = "synthetic_temporal"
    classes: int = 2
    samples_per_class: int = 40
    test_per_class: int = 50
    seed: int = 0
    # synthetic_temporal
    channels: int = 16
    duration: float = 100.0
    jitter: float = 1.0
    spikes_per_channel: int = 4
    drop_rate: float = 0.0
    add_rate: float = 0.0
    # synthetic_spatial
    feature_dim: int = 16
    noise: float = 0.1
    # spike_csv
    path: Optional[str] = None
    test_path: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigurationError(f"must be one of {DATASET_KINDS}", "dataset.kind")
        if self.kind == "spike_csv":
            if not (self.path and self.test_path):
                raise ConfigurationError("spike_csv needs both path and test_path", "dataset.path")
            return
        if self.classes < 2:
            raise ConfigurationError("need at least two classes", "dataset.classes")
        if self.samples_per_class < 1 or self.test_per_class < 1:
            raise ConfigurationError("need >= 1 train and test sample per class",
                                     "dataset.samples_per_class")
        if self.jitter < 0:
            raise ConfigurationError("must be >= 0", "dataset.jitter")
        if self.noise < 0:
            raise ConfigurationError("must be >= 0", "dataset.noise")

    @property
    def n_channels(self) -> Optional[int]:
        if self.kind == "synthetic_temporal":
            return self.channels
        if self.kind == "synthetic_spatial":
            return self.feature_dim
        return None


@dataclass
class NetworkSpec:
    """Shared wiring: every model is built on the same edge set."""

    neuron_count: int = 64
    n_outputs: int = 16
    connection_probability: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.n_outputs < 1:
            raise ConfigurationError("must be >= 1", "network.n_outputs")
        if not 0 < self.connection_probability <= 1:
            raise ConfigurationError("must lie in (0, 1]", "network.connection_probability")


@dataclass
class ModelSpec:
    name: str
    kind: str
    heterogeneity: HeterogeneityConfig = field(default_factory=HeterogeneityConfig)
    epochs: int = 1  # STDP passes over the training set
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"must be one of {MODEL_KINDS}", f"models.{self.name}.kind")
        if self.epochs < 0:
            raise ConfigurationError("must be >= 0", f"models.{self.name}.epochs")

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "heterogeneity": self.heterogeneity.to_dict(),
                "epochs": self.epochs, "seed": self.seed, "train": self.train.to_dict()}


@dataclass
class AnalysisSpec:
    layers: tuple = ("L3", "L5")
    bottleneck_fraction: float = 0.1
    band_fraction: float = 0.1
    bin_width: float = 10.0
    empty_penalty: Optional[float] = None  # None: simulation duration
    mds_dims: int = 2

    def validate(self) -> None:
        bad = [x for x in self.layers if x not in LAYERS]
        if bad or not self.layers:
            raise ConfigurationError(f"layers must be a nonempty subset of {LAYERS}", "analysis.layers")
        if not (self.bottleneck_fraction > 0 and self.band_fraction > 0):
            raise ConfigurationError("fractions must be > 0", "analysis.bottleneck_fraction")
        if not self.bin_width > 0:
            raise ConfigurationError("must be > 0", "analysis.bin_width")
        if self.mds_dims < 1:
            raise ConfigurationError("must be >= 1", "analysis.mds_dims")


@dataclass
class SweepSpec:
    neuron_counts: tuple = ()
    epochs_track: Optional[int] = None

    def validate(self) -> None:
        counts = list(self.neuron_counts)
        if counts != sorted(counts) or len(set(counts)) != len(counts):
            raise ConfigurationError("must be strictly ascending", "sweep.neuron_counts")
        if any(c < 20 for c in counts):
            raise ConfigurationError("every count must be >= 20", "sweep.neuron_counts")
        if self.epochs_track is not None and self.epochs_track < 1:
            raise ConfigurationError("must be >= 1", "sweep.epochs_track")


def default_models() -> list[ModelSpec]:
    return [
        ModelSpec("HRSNN", "stdp", HeterogeneityConfig()),
        ModelSpec("MRSNN", "stdp", HeterogeneityConfig.homogeneous()),
        ModelSpec("BPRSNN", "bptt", HeterogeneityConfig.homogeneous()),
    ]


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    models: list = field(default_factory=default_models)
    simulation: SimConfig = field(default_factory=SimConfig)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.dataset.validate()
        self.network.validate()
        self.analysis.validate()
        self.sweep.validate()
        names = [m.name for m in self.models]
        if not names:
            raise ConfigurationError("at least one model required", "models")
        if len(set(names)) != len(names):
            raise ConfigurationError("model names must be unique", "models")
        for m in self.models:
            m.validate()
        if self.dataset.kind == "synthetic_temporal" and self.dataset.duration != self.simulation.duration:
            raise ConfigurationError("must equal simulation.duration", "dataset.duration")
        n_in = self.dataset.n_channels
        if n_in is not None and n_in + self.network.n_outputs > self.network.neuron_count:
            raise ConfigurationError(
                f"{n_in} inputs + {self.network.n_outputs} outputs exceed neuron_count", "network.neuron_count")

    def model(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigurationError(f"no model named {name!r}", "models")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed (data, wiring, each model) set to ``seed``."""
        cfg = copy.deepcopy(self)
        cfg.dataset.seed = seed
        cfg.network.seed = seed
        for m in cfg.models:
            m.seed = seed
            m.train = dataclasses.replace(m.train, seed=seed)
        return cfg

    def with_neuron_count(self, count: int) -> "ExperimentConfig":
        """Copy with ``count`` neurons; the output population keeps its share."""
        cfg = copy.deepcopy(self)
        share = self.network.n_outputs / self.network.neuron_count
        cfg.network.neuron_count = int(count)
        cfg.network.n_outputs = max(1, int(round(share * count)))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "dataset": dataclasses.asdict(self.dataset),
            "network": dataclasses.asdict(self.network),
            "models": [m.to_dict() for m in self.models],
            "simulation": self.simulation.to_dict(),
            "analysis": {**dataclasses.asdict(self.analysis), "layers": list(self.analysis.layers)},
            "sweep": {"neuron_counts": list(self.sweep.neuron_counts),
                      "epochs_track": self.sweep.epochs_track},
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = set(d) - {"dataset", "network", "models", "simulation", "analysis", "sweep", "output_dir"}
        if unknown:
            raise ConfigurationError("unknown top-level key", sorted(unknown)[0])
        kw = {
            "dataset": _build(DatasetSpec, d.get("dataset"), "dataset"),
            "network": _build(NetworkSpec, d.get("network"), "network"),
            "simulation": _build(SimConfig, d.get("simulation"), "simulation"),
            "analysis": _build(AnalysisSpec, d.get("analysis"), "analysis", tuple_keys=("layers",)),
            "sweep": _build(SweepSpec, d.get("sweep"), "sweep", tuple_keys=("neuron_counts",)),
        }
        if "models" in d:
            kw["models"] = [_model(m, k) for k, m in enumerate(d["models"] or [])]
        if "output_dir" in d:
            kw["output_dir"] = str(d["output_dir"])
        return cls(**kw)


def _build(klass, d, section: str, tuple_keys=()):
    if d is None:
        return klass()
    if not isinstance(d, dict):
        raise ConfigurationError("must be a mapping", section)
    known = {f.name for f in dataclasses.fields(klass)}
    for k in d:
        if k not in known:
            raise ConfigurationError("unknown key", f"{section}.{k}")
    d = {k: tuple(v) if k in tuple_keys else v for k, v in d.items()}
    try:
        return klass(**d)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc).split(": ", 1)[-1], f"{section}.{exc.field}") from None
    except TypeError as exc:
        raise ConfigurationError(str(exc), section) from None


def _heterogeneity(value, where: str) -> HeterogeneityConfig:
    if value is None or value == "heterogeneous":
        return HeterogeneityConfig()
    if value == "homogeneous":
        return HeterogeneityConfig.homogeneous()
    if isinstance(value, dict):
        try:
            return HeterogeneityConfig.from_dict(value)
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc).split(": ", 1)[-1], f"{where}.{exc.field}") from None
    raise ConfigurationError("must be 'heterogeneous', 'homogeneous' or a mapping", where)


def _model(d, k: int) -> ModelSpec:
    if not isinstance(d, dict) or "name" not in d or "kind" not in d:
        raise ConfigurationError("each model needs 'name' and 'kind'", f"models[{k}]")
    where = f"models.{d['name']}"
    unknown = set(d) - {"name", "kind", "heterogeneity", "epochs", "seed", "train"}
    if unknown:
        raise ConfigurationError("unknown key", f"{where}.{sorted(unknown)[0]}")
    het = _heterogeneity(d.get("heterogeneity"), f"{where}.heterogeneity")
    train = _build(TrainConfig, d.get("train"), f"{where}.train")
    return ModelSpec(str(d["name"]), str(d["kind"]), het, int(d.get("epochs", 1)),
                     int(d.get("seed", 0)), train)


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid YAML: {exc}", "config") from None
    except OSError as exc:
        raise ConfigurationError(str(exc), "config") from None
    return ExperimentConfig.from_dict(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
