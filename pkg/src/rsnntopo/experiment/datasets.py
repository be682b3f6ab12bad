"""Desk-scale stand-ins for a spatial and a temporal spike classification task."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigurationError, ParseError
from ..lif_sim import SpikeRaster, load_raster, save_raster


def gen_synthetic_spatial(classes: int, samples_per_class: int, feature_dim: int,
                          noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Class prototypes in ``[0, 1]^d`` plus clipped Gaussian noise.

    Returns ``(features, labels)`` in class-major order.
    """
    if classes < 2:
        raise ConfigurationError("need at least two classes", "classes")
    if noise < 0:
        raise ConfigurationError("must be >= 0", "noise")
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(0.0, 1.0, (classes, feature_dim))
    labels = np.repeat(np.arange(classes), samples_per_class)
    x = prototypes[labels] + rng.normal(0.0, noise, (len(labels), feature_dim)) if noise > 0 \
        else prototypes[labels].copy()
    return np.clip(x, 0.0, 1.0), labels


def temporal_templates(classes: int, channels: int, duration: float, spikes_per_channel: int,
                       margin: float, min_gap: float, rng: np.random.Generator) -> list:
    """Per class, per channel sorted template spike times.

    Every class has exactly ``spikes_per_channel`` spikes on every channel,
    so per-channel rates carry no class information.
    """
    span = duration - 2 * margin
    if span <= (spikes_per_channel - 1) * min_gap or span <= 0:
        raise ConfigurationError(
            f"duration {duration} too short for {spikes_per_channel} spikes per channel "
            f"with margin {margin} and gap {min_gap}", "duration")
    out = []
    for _ in range(classes):
        chans = []
        for _ in range(channels):
            # order statistics with a guaranteed minimum gap
            slack = span - (spikes_per_channel - 1) * min_gap
            u = np.sort(rng.uniform(0.0, slack, spikes_per_channel))
            chans.append(margin + u + np.arange(spikes_per_channel) * min_gap)
        out.append(chans)
    return out


def gen_synthetic_temporal(classes: int, samples_per_class: int, channels: int, duration: float,
                           jitter: float, seed: int, spikes_per_channel: int = 3,
                           drop_rate: float = 0.0, add_rate: float = 0.0,
                           dt: float = 1.0) -> list[tuple[SpikeRaster, int]]:
    """Labelled rasters where the class lives only in spike timing.

    Each template spike is moved by Gaussian jitter truncated at 3 sigma,
    dropped with probability ``drop_rate``; ``add_rate`` is the expected
    number of extra uniformly placed spikes per template spike.
    """
    if classes < 2:
        raise ConfigurationError("need at least two classes", "classes")
    if jitter < 0:
        raise ConfigurationError("must be >= 0", "jitter")
    if not (0 <= drop_rate <= 1 and add_rate >= 0):
        raise ConfigurationError("drop_rate in [0, 1] and add_rate >= 0 required", "drop_rate/add_rate")
    rng = np.random.default_rng(seed)
    margin = max(3.0 * jitter, 1.0)
    templates = temporal_templates(classes, channels, duration, spikes_per_channel, margin,
                                   min_gap=max(2.0 * jitter, dt), rng=rng)
    data = []
    for label in range(classes):
        for _ in range(samples_per_class):
            trains = []
            for times in templates[label]:
                t = times.copy()
                if jitter > 0:
                    noise = rng.normal(0.0, jitter, len(t))
                    t = t + np.clip(noise, -3 * jitter, 3 * jitter)
                if drop_rate > 0:
                    t = t[rng.random(len(t)) >= drop_rate]
                if add_rate > 0:
                    extra = rng.uniform(0.0, duration, rng.poisson(add_rate * len(times)))
                    t = np.concatenate([t, extra])
                t = np.unique(np.clip(t, 0.0, np.nextafter(duration, 0.0)))
                trains.append(t)
            data.append((SpikeRaster(duration, dt, trains), label))
    return data


def template_rasters(classes: int, channels: int, duration: float, seed: int,
                     spikes_per_channel: int = 3, jitter: float = 0.0, dt: float = 1.0) -> list:
    """The noise-free class templates used by :func:`gen_synthetic_temporal`."""
    rng = np.random.default_rng(seed)
    margin = max(3.0 * jitter, 1.0)
    tpl = temporal_templates(classes, channels, duration, spikes_per_channel, margin,
                             max(2.0 * jitter, dt), rng)
    return [SpikeRaster(duration, dt, chans) for chans in tpl]


def write_labelled_rasters(data, directory, prefix: str = "sample") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (raster, label) in enumerate(data):
        p = directory / f"{prefix}_{k:05d}.csv"
        save_raster(raster, p, extra={"label": int(label)})
        paths.append(p)
    return paths


def ingest_spike_csv(path) -> tuple[SpikeRaster, int]:
    """Read one labelled raster (CSV plus sidecar carrying ``label``)."""
    raster, meta = load_raster(path)
    if "label" not in meta:
        raise ParseError("sidecar has no 'label'", path=Path(path).with_suffix(".json"))
    try:
        label = int(meta["label"])
    except (TypeError, ValueError):
        raise ParseError(f"bad label {meta['label']!r}", path=Path(path).with_suffix(".json")) from None
    return raster, label


def ingest_directory(directory) -> list[tuple[SpikeRaster, int]]:
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise ParseError("no raster CSV files found", path=directory)
    return [ingest_spike_csv(p) for p in files]
