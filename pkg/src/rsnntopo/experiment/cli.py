"""Command-line entry point: ``rsnntopo <command> [options]``.

Exit status is 0 on success, 2 for configuration errors and 3 for failures
inside a stage.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from ..errors import ConfigurationError, ParseError, RsnnError
from ..lif_sim import save_raster
from ..net_graph import NetworkTopology
from ..rtd import rtd_score
from ..spike_metrics import DistanceMatrix
from .config import ExperimentConfig, load_config
from .datasets import ingest_directory, write_labelled_rasters
from .pipeline import (
    collect_responses,
    encoded_train,
    load_split,
    n_inputs,
    new_run_dir,
    run_experiment,
    sweep_neurons,
    track_epochs,
    train_model,
)

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_gen(args) -> None:
    cfg = _config(args)
    out = new_run_dir(cfg, args.out, prefix="data")
    split = load_split(cfg)
    train = list(zip(encoded_train(cfg, split), (y for _, y in split.train)))
    write_labelled_rasters(train, out / "train")
    write_labelled_rasters(split.test, out / "test")
    print(f"wrote {len(train)} training and {len(split.test)} test rasters to {out}")


def cmd_train(args) -> None:
    cfg = _config(args)
    spec = cfg.model(args.model)
    split = load_split(cfg)
    tm = train_model(cfg, spec, split, n_inputs(cfg, split))
    out = new_run_dir(cfg, args.out, prefix=f"train-{spec.name}")
    tm.net.save(out / "network.json")
    if tm.log is not None:
        tm.log.write_csv(out / "training_log.csv")
    if tm.trainer is not None:
        tm.trainer.write_history(out / "training_history.csv")
    print(out / "network.json")


def cmd_respond(args) -> None:
    cfg = _config(args)
    net = NetworkTopology.load(args.network)
    data = ingest_directory(args.stimuli)
    responses = collect_responses(net, [r for r, _ in data], cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, ((_, label), resp) in enumerate(zip(data, responses)):
        save_raster(resp, out / f"response_{k:05d}.csv", extra={"label": int(label)})
    print(f"wrote {len(responses)} responses to {out}")


def cmd_rtd(args) -> None:
    try:
        a, b = DistanceMatrix.load(args.a), DistanceMatrix.load(args.b)
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(str(exc)) from None
    rep = rtd_score(a, b, labels=(Path(args.a).stem, Path(args.b).stem))
    if args.out:
        rep.save(args.out)
    print(json.dumps({"rtd": rep.rtd, "rtd_ab": rep.rtd_ab, "rtd_ba": rep.rtd_ba}))


def cmd_run(args) -> None:
    cfg = _config(args)
    rep = run_experiment(cfg, args.out)
    for c in rep.comparisons:
        if c["model_a"] != c["model_b"]:
            print(f"{c['layer']} {c['model_a']}-{c['model_b']}: rtd={c['rtd']:.4g} "
                  f"dacc={c['delta_accuracy']:+.3f}")


def cmd_sweep(args) -> None:
    cfg = _config(args)
    sweep_neurons(cfg, args.counts, args.out)


def cmd_track(args) -> None:
    cfg = _config(args)
    trace = track_epochs(cfg, args.epochs, args.out)
    for epoch, acc, r in trace.rows:
        print(f"epoch {epoch}: bp_accuracy={acc:.3f} rtd={r:.4g}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsnntopo", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True, out=True):
        sp = sub.add_parser(name, help=help_text)
        if config:
            sp.add_argument("--config", "-c", help="YAML experiment config (defaults if omitted)")
        if out:
            sp.add_argument("--out", "-o", help="output directory (default: stamped under output_dir)")
        sp.set_defaults(func=func)
        return sp

    add("gen", cmd_gen, "write the configured dataset as labelled raster files")
    add("train", cmd_train, "train one model").add_argument("--model", required=True)
    sp = add("respond", cmd_respond, "simulate a saved network on a directory of rasters")
    sp.add_argument("--network", required=True)
    sp.add_argument("--stimuli", required=True)
    sp.set_defaults(out=None)
    sp = add("rtd", cmd_rtd, "compare two saved distance matrices", config=False, out=False)
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--out", "-o")
    add("run", cmd_run, "full comparison of all configured models")
    add("sweep", cmd_sweep, "repeat the comparison over neuron counts").add_argument(
        "--counts", type=int, nargs="+")
    add("track", cmd_track, "epoch-wise RTD of the gradient-trained model").add_argument(
        "--epochs", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "respond" and not args.out:
        parser.error("respond needs --out")
    warnings.simplefilter("default")
    try:
        args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RsnnError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
