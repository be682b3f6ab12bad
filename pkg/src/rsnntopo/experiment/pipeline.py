"""End-to-end comparison of trained networks on a shared held-out stimulus set.

Every numeric artifact of a run is a pure function of the configuration.
Wall-clock data goes to ``run_meta.json`` only, which the manifest leaves out.
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..dual_rep import LayerAssignment, extract_layers
from ..errors import ConfigurationError, RsnnError, StageError
from ..lif_sim import SpikeRaster, format_time, rate_encode, readout_rates
from ..net_graph import NetworkTopology, build_network, default_io_ids
from ..plasticity import TrainingLog, train_unsupervised
from ..rtd import classical_mds, rtd_score, save_coordinates
from ..spike_metrics import distance_matrix, population_state_vectors
from ..surrogate_trainer import BPTTTrainer, Readout
from .config import ExperimentConfig, ModelSpec, dump_config
from .datasets import gen_synthetic_spatial, gen_synthetic_temporal, ingest_directory

# stream ids for seeds derived from the dataset seed
_TEST_ENCODING = 101
_TRAIN_ENCODING = 102


@contextlib.contextmanager
def stage(name: str, timings: Optional[dict] = None):
    """Tag any failure inside the block with the stage name."""
    t0 = time.perf_counter()
    try:
        yield
    except (ConfigurationError, StageError):
        raise
    except (RsnnError, ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


# -- data -------------------------------------------------------------------

@dataclass
class Split:
    train: list  # (sample, label); sample is a SpikeRaster or a feature vector
    test: list  # (SpikeRaster, label), already encoded so every model sees the same spikes

    @property
    def n_classes(self) -> int:
        return int(max(y for _, y in self.train + self.test)) + 1


def _derived_seeds(seed: int, stream_id: int, count: int) -> list[int]:
    ss = np.random.SeedSequence([seed, stream_id])
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64) >> np.uint64(1)]


def load_split(cfg: ExperimentConfig) -> Split:
    ds, sim = cfg.dataset, cfg.simulation
    if ds.kind == "spike_csv":
        return Split(ingest_directory(ds.path), ingest_directory(ds.test_path))
    per_class = ds.samples_per_class + ds.test_per_class
    if ds.kind == "synthetic_temporal":
        data = gen_synthetic_temporal(ds.classes, per_class, ds.channels, ds.duration, ds.jitter, ds.seed,
                                      spikes_per_channel=ds.spikes_per_channel, drop_rate=ds.drop_rate,
                                      add_rate=ds.add_rate, dt=sim.dt)
    else:
        x, y = gen_synthetic_spatial(ds.classes, per_class, ds.feature_dim, ds.noise, ds.seed)
        data = list(zip(x, (int(v) for v in y)))
    train, test = [], []
    for k, item in enumerate(data):
        (train if k % per_class < ds.samples_per_class else test).append(item)
    seeds = _derived_seeds(ds.seed, _TEST_ENCODING, len(test))
    test = [(s if isinstance(s, SpikeRaster) else rate_encode(s, sim.duration, sim.max_rate, seed, sim.dt), y)
            for (s, y), seed in zip(test, seeds)]
    return Split(train, test)


def encoded_train(cfg: ExperimentConfig, split: Split) -> list[SpikeRaster]:
    """Training samples as rasters (feature vectors get fixed encoding seeds)."""
    sim = cfg.simulation
    seeds = _derived_seeds(cfg.dataset.seed, _TRAIN_ENCODING, len(split.train))
    return [s if isinstance(s, SpikeRaster) else rate_encode(s, sim.duration, sim.max_rate, seed, sim.dt)
            for (s, _), seed in zip(split.train, seeds)]


def stimulus_hash(rasters) -> str:
    h = hashlib.sha256()
    for r in rasters:
        h.update(np.float64(r.duration).tobytes())
        for t in r.trains:
            h.update(np.int64(len(t)).tobytes())
            h.update(np.ascontiguousarray(t, dtype=np.float64).tobytes())
    return h.hexdigest()


# -- models -----------------------------------------------------------------

@dataclass
class TrainedModel:
    spec: ModelSpec
    net: NetworkTopology
    trainer: Optional[BPTTTrainer] = None
    log: Optional[TrainingLog] = None


def n_inputs(cfg: ExperimentConfig, split: Optional[Split] = None) -> int:
    if cfg.dataset.n_channels is not None:
        return cfg.dataset.n_channels
    return split.test[0][0].neuron_count


def build_model_network(cfg: ExperimentConfig, spec: ModelSpec, n_in: int) -> NetworkTopology:
    """All models share wiring and initial weights through the network seed."""
    het = dataclasses.replace(spec.heterogeneity, seed=cfg.network.seed,
                              connection_probability=cfg.network.connection_probability)
    ins, outs = default_io_ids(cfg.network.neuron_count, n_in, cfg.network.n_outputs)
    return build_network(het, cfg.network.neuron_count, ins, outs)


def train_model(cfg: ExperimentConfig, spec: ModelSpec, split: Split, n_in: int,
                snapshot: bool = False, epochs: Optional[int] = None) -> TrainedModel:
    net = build_model_network(cfg, spec, n_in)
    if spec.kind == "stdp":
        log = TrainingLog()
        trained = train_unsupervised(net, [s for s, _ in split.train], spec.epochs, cfg.simulation,
                                     seed=spec.seed, log=log)
        return TrainedModel(spec, trained, log=log)
    tcfg = dataclasses.replace(spec.train, snapshot=snapshot or spec.train.snapshot,
                               epochs=spec.train.epochs if epochs is None else epochs)
    trainer = BPTTTrainer(net, tcfg, cfg.simulation, split.n_classes)
    trained = trainer.fit([s for s, _ in split.train], [y for _, y in split.train])
    return TrainedModel(spec, trained, trainer=trainer)


def collect_responses(net: NetworkTopology, stimuli, cfg: ExperimentConfig) -> list[SpikeRaster]:
    sim = cfg.simulation
    engine = sim.engine(net)
    out = []
    for r in stimuli:
        engine.reset()
        out.append(engine.run(r, sim.duration))
    return out


def output_counts(responses, net: NetworkTopology) -> np.ndarray:
    ids = list(net.output_ids)
    return np.array([r.counts()[ids] for r in responses], dtype=float)


def probe_accuracy(train_resp, train_y, test_resp, test_y, net: NetworkTopology) -> tuple[float, float]:
    """Logistic-regression probe on output-neuron rates (frozen weights)."""
    from sklearn.linear_model import LogisticRegression

    ids = list(net.output_ids)
    xtr = np.array([readout_rates(r)[ids] for r in train_resp])
    xte = np.array([readout_rates(r)[ids] for r in test_resp])
    clf = LogisticRegression(max_iter=2000)
    clf.fit(xtr, train_y)
    return float(clf.score(xtr, train_y)), float(clf.score(xte, test_y))


def decoder_accuracy(readout: Readout, responses, labels, net: NetworkTopology) -> float:
    return float(np.mean(readout.predict(output_counts(responses, net)) == np.asarray(labels)))


# -- report -----------------------------------------------------------------

@dataclass
class ComparisonReport:
    models: dict  # name -> {"kind", "train_accuracy", "test_accuracy", "layers"}
    comparisons: list  # one dict per (model_a <= model_b, layer)
    stimulus_hash: str
    n_stimuli: int
    config: dict
    versions: dict
    reports: dict = field(default_factory=dict, repr=False)  # (a, b, layer) -> RtdReport

    def rtd(self, a: str, b: str, layer: str) -> float:
        for c in self.comparisons:
            if c["layer"] == layer and (c["model_a"], c["model_b"]) in ((a, b), (b, a)):
                return c["rtd"]
        raise KeyError((a, b, layer))

    def to_dict(self) -> dict:
        return {
            "models": self.models,
            "comparisons": self.comparisons,
            "delta_accuracy": "signed held-out accuracy of model_a minus model_b",
            "stimulus_hash": self.stimulus_hash,
            "n_stimuli": self.n_stimuli,
            "config": self.config,
            "versions": self.versions,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def versions() -> dict:
    import sklearn
    return {"rsnntopo": __version__, "numpy": np.__version__, "scikit-learn": sklearn.__version__, "python": platform.python_version()}


# -- artifacts --------------------------------------------------------------

def write_responses(responses, path) -> None:
    """All responses of one model in a single CSV (stimulus, neuron_id, time_ms)."""
    path = Path(path)
    lines = ["stimulus,neuron_id,time_ms"]
    for k, r in enumerate(responses):
        for i, train in enumerate(r.trains):
            lines.extend(f"{k},{i},{format_time(t)}" for t in train)
    path.write_text("\n".join(lines) + "\n")
    first = responses[0]
    meta = {"n_stimuli": len(responses), "duration": first.duration, "dt": first.dt,
            "neuron_count": first.neuron_count}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=1) + "\n")


def write_population_states(responses, bin_width: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = responses[0].neuron_count
        w.writerow(["stimulus", "bin"] + [f"n{i}" for i in range(n)])
        for k, r in enumerate(responses):
            for b, row in enumerate(population_state_vectors(r, bin_width).counts):
                w.writerow([k, b, *row.tolist()])


def write_manifest(run_dir: Path) -> dict:
    files = {}
    for p in sorted(run_dir.rglob("*")):
        rel = p.relative_to(run_dir).as_posix()
        if p.is_file() and rel not in ("manifest.json", "run_meta.json"):
            files[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {"files": files, "volatile": ["run_meta.json"]}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def new_run_dir(cfg: ExperimentConfig, run_dir=None, prefix: str = "run") -> Path:
    if run_dir is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        run_dir = Path(cfg.output_dir) / f"{prefix}-{stamp}"
        k = 1
        while run_dir.exists():
            run_dir = Path(cfg.output_dir) / f"{prefix}-{stamp}-{k}"
            k += 1
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_meta(run_dir: Path, started: float, timings: dict, kind: str) -> None:
    meta = {"kind": kind, "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "wall_time_s": time.time() - started, "stage_seconds": timings}
    (run_dir / "run_meta.json").write_text(json.dumps(meta, indent=1) + "\n")


# -- operations -------------------------------------------------------------

def _layer_matrices(cfg, name, net, responses, layers: LayerAssignment, out: Path) -> dict:
    mats = {}
    for layer in cfg.analysis.layers:
        ids = layers.layer(layer)
        dm = distance_matrix(responses, ids, cfg.analysis.empty_penalty)
        dm.save(out / f"distance_{layer}.csv")
        if dm.n > cfg.analysis.mds_dims:
            save_coordinates(classical_mds(dm.values, cfg.analysis.mds_dims), out / f"mds_{layer}.csv")
        mats[layer] = dm
    return mats


def run_experiment(cfg: ExperimentConfig, run_dir=None) -> ComparisonReport:
    """Train every model, respond to shared stimuli, compare layer by layer."""
    started = time.time()
    timings: dict = {}
    run_dir = new_run_dir(cfg, run_dir)
    (run_dir / "config.yaml").write_text(dump_config(cfg))
    try:
        with stage("data", timings):
            split = load_split(cfg)
            n_in = n_inputs(cfg, split)
            stimuli = [s for s, _ in split.test]
            test_y = np.array([y for _, y in split.test])
            train_y = np.array([y for _, y in split.train])
            stim_hash = stimulus_hash(stimuli)
            train_rasters = encoded_train(cfg, split)

        models, mats, hashes = {}, {}, {}
        for spec in cfg.models:
            out = run_dir / "models" / spec.name
            out.mkdir(parents=True, exist_ok=True)
            with stage(f"train:{spec.name}", timings):
                tm = train_model(cfg, spec, split, n_in)
                tm.net.save(out / "network.json")
                if tm.log is not None:
                    tm.log.write_csv(out / "training_log.csv")
                if tm.trainer is not None:
                    tm.trainer.write_history(out / "training_history.csv")
            with stage(f"respond:{spec.name}", timings):
                responses = collect_responses(tm.net, stimuli, cfg)
                hashes[spec.name] = stimulus_hash(stimuli)
                write_responses(responses, out / "responses.csv")
                write_population_states(responses, cfg.analysis.bin_width, out / "population_states.csv")
            with stage(f"accuracy:{spec.name}", timings):
                if spec.kind == "stdp":
                    train_resp = collect_responses(tm.net, train_rasters, cfg)
                    tr_acc, te_acc = probe_accuracy(train_resp, train_y, responses, test_y, tm.net)
                else:
                    tr_acc = float(tm.trainer.history[-1][2]) if tm.trainer.history else float("nan")
                    te_acc = decoder_accuracy(tm.trainer.readout, responses, test_y, tm.net)
            with stage(f"layers:{spec.name}", timings):
                layers = extract_layers(tm.net, cfg.analysis.bottleneck_fraction, cfg.analysis.band_fraction)
                layers.save_json(out / "layers.json")
                (out / "layers.dot").write_text(layers.to_dot(tm.net))
                mats[spec.name] = _layer_matrices(cfg, spec.name, tm.net, responses, layers, out)
            models[spec.name] = {
                "kind": spec.kind,
                "train_accuracy": tr_acc,
                "test_accuracy": te_acc,
                "accuracy_readout": "logistic_probe" if spec.kind == "stdp" else "trained_decoder",
                "layers": {k: [int(v) for v in layers.layer(k)] for k in ("L1", "L2", "L3", "L4", "L5")},
                "mean_output_count": float(output_counts(responses, tm.net).mean()),
            }

        with stage("rtd", timings):
            if len(set(hashes.values())) > 1:
                raise RuntimeError("models were not presented the same stimuli")
            comparisons, reports = [], {}
            names = [m.name for m in cfg.models]
            (run_dir / "rtd").mkdir(exist_ok=True)
            for i, a in enumerate(names):
                for b in names[i:]:
                    for layer in cfg.analysis.layers:
                        rep = rtd_score(mats[a][layer], mats[b][layer], labels=(a, b))
                        rep.save(run_dir / "rtd" / f"{a}__{b}__{layer}.json")
                        reports[(a, b, layer)] = rep
                        comparisons.append({
                            "model_a": a, "model_b": b, "layer": layer,
                            "rtd": rep.rtd, "rtd_ab": rep.rtd_ab, "rtd_ba": rep.rtd_ba,
                            "mean_pairwise_divergence": rep.diagnostics["mean_pairwise_divergence"],
                            "delta_accuracy": models[a]["test_accuracy"] - models[b]["test_accuracy"],
                            "empty_penalty_count": [mats[a][layer].empty_penalty_count,
                                                    mats[b][layer].empty_penalty_count],
                        })

        report = ComparisonReport(models, comparisons, stim_hash, len(stimuli), cfg.to_dict(), versions(),
                                  reports)
        report.save(run_dir / "report.json")
        return report
    finally:
        _write_meta(run_dir, started, timings, "run")
        write_manifest(run_dir)


def sweep_neurons(cfg: ExperimentConfig, neuron_counts=None, run_dir=None) -> dict:
    """One :func:`run_experiment` per neuron count plus a long-format CSV."""
    counts = list(cfg.sweep.neuron_counts if neuron_counts is None else neuron_counts)
    if not counts:
        raise ConfigurationError("no neuron counts given", "sweep.neuron_counts")
    cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, neuron_counts=tuple(counts)))
    cfg.validate()
    started = time.time()
    run_dir = new_run_dir(cfg, run_dir, prefix="sweep")
    reports = {}
    rows = []
    try:
        for c in counts:
            rep = run_experiment(cfg.with_neuron_count(c), run_dir / f"n{c:05d}")
            reports[c] = rep
            for comp in rep.comparisons:
                if comp["model_a"] != comp["model_b"]:
                    rows.append((c, f"{comp['model_a']}-{comp['model_b']}", comp["layer"], comp["rtd"]))
        with open(run_dir / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["count", "pair", "layer", "rtd"])
            for c, pair, layer, r in rows:
                w.writerow([c, pair, layer, repr(float(r))])
    finally:
        _write_meta(run_dir, started, {}, "sweep")
        write_manifest(run_dir)
    return reports


def _pick(cfg: ExperimentConfig, kind: str, preferred: str) -> ModelSpec:
    specs = [m for m in cfg.models if m.kind == kind]
    if not specs:
        raise ConfigurationError(f"track needs a model of kind {kind!r}", "models")
    return next((m for m in specs if m.name == preferred), specs[0])


@dataclass
class EpochTrace:
    rows: list  # (epoch, bp_accuracy, rtd)
    control_rtd: float
    layer: str

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "bp_accuracy", "rtd"])
            for e, acc, r in self.rows:
                w.writerow([e, repr(float(acc)), repr(float(r))])


def track_epochs(cfg: ExperimentConfig, epochs: Optional[int] = None, run_dir=None,
                 layer: str = "L3") -> EpochTrace:
    """RTD between every surrogate-gradient epoch snapshot and the trained STDP net."""
    epochs = epochs or cfg.sweep.epochs_track or _pick(cfg, "bptt", "BPRSNN").train.epochs
    started = time.time()
    timings: dict = {}
    run_dir = new_run_dir(cfg, run_dir, prefix="track")
    (run_dir / "config.yaml").write_text(dump_config(cfg))
    try:
        with stage("data", timings):
            split = load_split(cfg)
            n_in = n_inputs(cfg, split)
            stimuli = [s for s, _ in split.test]
            test_y = [y for _, y in split.test]
        h_spec, bp_spec = _pick(cfg, "stdp", "HRSNN"), _pick(cfg, "bptt", "BPRSNN")
        with stage(f"train:{h_spec.name}", timings):
            h = train_model(cfg, h_spec, split, n_in)
            h.net.save(run_dir / f"{h_spec.name}_network.json")
        with stage(f"respond:{h_spec.name}", timings):
            h_layers = extract_layers(h.net, cfg.analysis.bottleneck_fraction, cfg.analysis.band_fraction)
            h_mat = distance_matrix(collect_responses(h.net, stimuli, cfg), h_layers.layer(layer),
                                    cfg.analysis.empty_penalty)
        with stage(f"train:{bp_spec.name}", timings):
            bp = train_model(cfg, bp_spec, split, n_in, snapshot=True, epochs=epochs)
            if len(bp.trainer.snapshots) != epochs:
                raise StageError(f"train:{bp_spec.name}",
                                 f"expected {epochs} snapshots, got {len(bp.trainer.snapshots)}")
            bp.trainer.write_history(run_dir / "training_history.csv")
        rows = []
        with stage("rtd", timings):
            initial = build_model_network(cfg, bp_spec, n_in)
            init_layers = extract_layers(initial, cfg.analysis.bottleneck_fraction, cfg.analysis.band_fraction)
            init_mat = distance_matrix(collect_responses(initial, stimuli, cfg), init_layers.layer(layer),
                                       cfg.analysis.empty_penalty)
            control = rtd_score(init_mat, init_mat).rtd
            for epoch, snap, readout in bp.trainer.snapshots:
                resp = collect_responses(snap, stimuli, cfg)
                lay = extract_layers(snap, cfg.analysis.bottleneck_fraction, cfg.analysis.band_fraction)
                mat = distance_matrix(resp, lay.layer(layer), cfg.analysis.empty_penalty)
                rows.append((epoch, decoder_accuracy(readout, resp, test_y, snap), rtd_score(mat, h_mat).rtd))
        trace = EpochTrace(rows, control, layer)
        trace.write_csv(run_dir / "track.csv")
        (run_dir / "track.json").write_text(json.dumps(
            {"layer": layer, "epochs": epochs, "reference": h_spec.name, "model": bp_spec.name,
             "control_self_rtd": control, "stimulus_hash": stimulus_hash(stimuli)}, indent=1) + "\n")
        return trace
    finally:
        _write_meta(run_dir, started, timings, "track")
        write_manifest(run_dir)
