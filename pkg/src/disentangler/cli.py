"""Command-line entry points.

Subcommands: train, eval, edit, protocol, export, serve.  Reporting
commands write JSON-lines files and render matplotlib PNGs next to them.

Exit codes: 0 success, 1 runtime failure, 2 malformed config/usage,
3 missing checkpoint, 4 training diverged (a last-good checkpoint and a
diagnostic record are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import reporting
from .checkpoint import (CheckpointError, checkpoint_checksum,
                         load_checkpoint, save_checkpoint)
from .config import (ConfigError, ExperimentConfig, load_experiment_config)
from .data import Dataset, generate_glyphs, load_idx, save_idx, split_dataset
from .editing import DEFAULT_EDIT_INTERVAL, EditRequest, synthesize
from .evaluation import (disentanglement_protocol, image_metrics,
                         resolve_attribute, spearman_rank_correlation)
from .networks import Model, ModelParams
from .service import EditingService, serve_forever
from .training import TrainingDiverged, train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING_CHECKPOINT = 3
EXIT_DIVERGED = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def grid_argument(text: str) -> tuple:
    """Parse "lo:hi:count" into an inclusive evenly spaced grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"{text!r}: expected lo:hi:count, e.g. -1.5:3.0:10")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r}: expected lo:hi:count with numeric bounds")
    if count < 1:
        raise argparse.ArgumentTypeError(f"{text!r}: count must be >= 1")
    if count > 1 and hi <= lo:
        raise argparse.ArgumentTypeError(f"{text!r}: hi must exceed lo")
    return tuple(float(v) for v in np.linspace(lo, hi, count))


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Materialize (train, val, test) splits for an experiment config."""
    data = cfg.data
    if data.kind == "glyphs":
        glyphs = dataclasses.replace(data.glyphs,
                                     counts=tuple(data.counts))
        full = generate_glyphs(glyphs)
    else:
        full = load_idx(data.images_path, data.labels_path,
                        value_range=cfg.network.image_range)
        if full.mode != cfg.network.target_kind:
            raise ConfigError(
                f"data.kind: idx data is {full.mode}, network expects "
                f"{cfg.network.target_kind}")
        if full.images.shape[1] != cfg.network.image_dim:
            raise ConfigError(
                f"data.images_path: images have {full.images.shape[1]} "
                f"pixels, network.image_dim is {cfg.network.image_dim}")
        if full.labels.shape[1] != cfg.network.target_dim:
            raise ConfigError(
                f"data.labels_path: labels have {full.labels.shape[1]} "
                f"columns, network.target_dim is {cfg.network.target_dim}")
    parts = split_dataset(full, data.counts, data.split_seed)
    return parts[0], parts[1], parts[2]


def _checkpoint_extra(cfg: ExperimentConfig, train_set: Dataset) -> dict:
    return {
        "experiment": cfg.to_dict(),
        "label_names": list(train_set.label_names),
        "editing_interval": list(DEFAULT_EDIT_INTERVAL),
    }


def _open_checkpoint(path) -> tuple[ModelParams, dict]:
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING_CHECKPOINT,
                       f"checkpoint not found: {path}")
    try:
        return load_checkpoint(p)
    except CheckpointError as exc:
        raise CliError(EXIT_FAILURE, str(exc))


def _embedded_config(header: dict) -> ExperimentConfig:
    from .config import parse_experiment_config
    raw = header.get("extra", {}).get("experiment")
    if raw is None:
        raise CliError(EXIT_FAILURE,
                       "checkpoint carries no experiment config; "
                       "pass --config")
    return parse_experiment_config(raw)


def _datasets_for_checkpoint(args, header) -> tuple[Dataset, Dataset,
                                                    Dataset]:
    if getattr(args, "config", None):
        cfg = load_experiment_config(args.config)
    else:
        cfg = _embedded_config(header)
    return load_datasets(cfg)


# -- train ----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, training=dataclasses.replace(cfg.training, seed=args.seed))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / "run.lock"
    try:
        lock_fh = lock.open("x")
    except FileExistsError:
        raise CliError(EXIT_FAILURE,
                       f"{lock}: another run owns this directory "
                       "(remove the lock if that run is dead)")
    try:
        train_set, val_set, _ = load_datasets(cfg)
        try:
            params, log = train(cfg.training, cfg.network, train_set,
                                val_set)
        except TrainingDiverged as exc:
            save_checkpoint(outdir / "diverged.ckpt", exc.params,
                            extra=_checkpoint_extra(cfg, train_set))
            reporting.write_jsonl(outdir / "phase2.jsonl", exc.log.phase2)
            (outdir / "diagnostic.json").write_text(json.dumps(
                {"error": str(exc), "iteration": exc.iteration},
                indent=2))
            print(f"training diverged: {exc}", file=sys.stderr)
            print(f"last good parameters in {outdir / 'diverged.ckpt'}",
                  file=sys.stderr)
            return EXIT_DIVERGED

        checksum = save_checkpoint(outdir / "model.ckpt", params,
                                   extra=_checkpoint_extra(cfg, train_set))
        (outdir / "checksum.txt").write_text(checksum + "\n")
        (outdir / "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        reporting.write_jsonl(outdir / "phase1.jsonl", log.phase1)
        reporting.write_jsonl(outdir / "phase2.jsonl", log.phase2)
        reporting.plot_phase1_curve(outdir / "phase1.png", log.phase1)
        reporting.plot_training_curves(outdir / "phase2.png", log.phase2)
        if val_set is not None and len(val_set):
            sample = val_set.images[:8]
            recon = Model(params).reconstruct(sample)
            side = int(round(cfg.network.image_dim ** 0.5))
            if side * side == cfg.network.image_dim:
                reporting.save_image_grid(
                    outdir / "reconstructions.png",
                    np.vstack([sample, recon]), side, cols=len(sample),
                    value_range=cfg.network.image_range)
        summary = {"checkpoint": str(outdir / "model.ckpt"),
                   "checksum": checksum,
                   "phase1_epochs": len(log.phase1),
                   "phase2_iterations": len(log.phase2)}
        if log.phase1:
            summary["phase1_accuracy"] = log.phase1[-1].get("accuracy")
        if log.phase2:
            summary["final_reconstruction"] = \
                log.phase2[-1]["reconstruction"]
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    finally:
        lock_fh.close()
        lock.unlink(missing_ok=True)


# -- eval -----------------------------------------------------------------

def cmd_eval(args) -> int:
    params, header = _open_checkpoint(args.checkpoint)
    _, _, test_set = _datasets_for_checkpoint(args, header)
    model = Model(params)
    recon = model.reconstruct(test_set.images)
    peak = params.spec.image_range[1] - params.spec.image_range[0]
    report = image_metrics(test_set.images, recon, peak)
    outdir = Path(args.outdir)
    record = dict(report.to_dict(), split="test",
                  checkpoint=str(args.checkpoint))
    reporting.write_jsonl(outdir / "metrics.jsonl", [record])
    side = int(round(params.spec.image_dim ** 0.5))
    if side * side == params.spec.image_dim and len(test_set):
        k = min(8, len(test_set))
        reporting.save_image_grid(
            outdir / "reconstructions.png",
            np.vstack([test_set.images[:k], recon[:k]]), side, cols=k,
            value_range=params.spec.image_range)
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


# -- protocol ---------------------------------------------------------------

def cmd_protocol(args) -> int:
    params, header = _open_checkpoint(args.checkpoint)
    if params.spec.target_kind != "multilabel":
        raise CliError(EXIT_FAILURE,
                       "the intensity protocol needs a multilabel model")
    train_set, _, test_set = _datasets_for_checkpoint(args, header)
    attributes = args.attribute or list(train_set.label_names)
    if not attributes:
        raise CliError(EXIT_FAILURE,
                       "dataset has no attribute names; pass --attribute")
    interval = tuple(header.get("extra", {}).get(
        "editing_interval", DEFAULT_EDIT_INTERVAL))
    records = []
    for attribute in attributes:
        spec_attr = int(attribute) if attribute.isdigit() else attribute
        runs = [disentanglement_protocol(
                    params, train_set, test_set, spec_attr,
                    args.grid, seed=s, interval=interval)
                for s in range(args.seeds)]
        mean_rates = tuple(float(np.mean([r.error_rates[i] for r in runs]))
                           for i in range(len(args.grid)))
        rho = spearman_rank_correlation(args.grid, mean_rates)
        records.append({
            "attribute": runs[0].attribute,
            "attribute_index": runs[0].attribute_index,
            "intensities": list(args.grid),
            "error_rates": list(mean_rates),
            "spearman": rho,
            "seeds": args.seeds,
            "per_seed_error_rates": [list(r.error_rates) for r in runs],
            "classifier_holdout_accuracy": float(np.mean(
                [r.classifier_holdout_accuracy for r in runs])),
            "synthesized_count": runs[0].synthesized_count,
        })
        print(f"{runs[0].attribute}: spearman={rho:+.3f}")
    outdir = Path(args.outdir)
    reporting.write_jsonl(outdir / "protocol.jsonl", records)
    reporting.plot_protocol_curves(outdir / "protocol.png", records)
    return EXIT_OK


# -- edit -------------------------------------------------------------------

def _parse_assignment(text: str, dataset: Dataset) -> tuple[int, float]:
    name, _, value = text.partition("=")
    if not _:
        raise CliError(EXIT_CONFIG,
                       f"--set {text!r}: expected attribute=value")
    try:
        return resolve_attribute(dataset, name if not name.isdigit()
                                 else int(name)), float(value)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"--set {text!r}: {exc}")


def cmd_edit(args) -> int:
    params, header = _open_checkpoint(args.checkpoint)
    _, _, test_set = _datasets_for_checkpoint(args, header)
    if not 0 <= args.index < len(test_set):
        raise CliError(EXIT_FAILURE,
                       f"--index {args.index} out of range for "
                       f"{len(test_set)} test images")
    image = test_set.images[args.index]
    interval = tuple(header.get("extra", {}).get(
        "editing_interval", DEFAULT_EDIT_INTERVAL))
    outdir = Path(args.outdir)
    side = int(round(params.spec.image_dim ** 0.5))
    square = side * side == params.spec.image_dim

    if args.sweep is not None:
        if params.spec.target_kind != "multilabel":
            raise CliError(EXIT_FAILURE,
                           "--sweep needs a multilabel model")
        idx = resolve_attribute(test_set, args.sweep if not
                                args.sweep.isdigit() else int(args.sweep))
        rows, records = [image], [{"intensity": None, "role": "input"}]
        for value in args.grid:
            request = EditRequest(mode="multilabel",
                                  assignments=((idx, value),),
                                  interval=interval)
            result = synthesize(params, image, request)
            rows.append(result.image)
            records.append({"intensity": value,
                            "y_hat": result.soft_targets.tolist(),
                            "y_hat_edited": result.edited_targets.tolist()})
        reporting.write_jsonl(outdir / "sweep.jsonl", records)
        if square:
            titles = ["input"] + [f"{v:+.2f}" for v in args.grid]
            reporting.save_image_grid(
                outdir / "sweep.png", np.stack(rows), side,
                titles=titles, cols=len(rows),
                value_range=params.spec.image_range)
        print(f"swept {test_set.label_names[idx]} over "
              f"{len(args.grid)} values; reports in {outdir}")
        return EXIT_OK

    if params.spec.target_kind == "multiclass":
        if args.target_class is None:
            raise CliError(EXIT_CONFIG,
                           "--target-class required for a multiclass model")
        request = EditRequest(mode="multiclass",
                              target_class=args.target_class,
                              interval=interval)
    else:
        if not args.set:
            raise CliError(EXIT_CONFIG,
                           "--set attribute=value required for a "
                           "multilabel model")
        assignments = tuple(_parse_assignment(t, test_set)
                            for t in args.set)
        request = EditRequest(mode="multilabel", assignments=assignments,
                              interval=interval)
    result = synthesize(params, image, request)
    record = {"index": args.index,
              "y_hat": result.soft_targets.tolist(),
              "y_hat_edited": result.edited_targets.tolist()}
    reporting.write_jsonl(outdir / "edit.jsonl", [record])
    if square:
        reporting.save_image_grid(
            outdir / "edit.png", np.stack([image, result.image]), side,
            titles=["input", "edited"], cols=2,
            value_range=params.spec.image_range)
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


# -- export -----------------------------------------------------------------

def cmd_export(args) -> int:
    cfg = load_experiment_config(args.config)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = ("train", "val", "test")
    for name, split in zip(names, load_datasets(cfg)):
        save_idx(split, outdir / f"{name}-images.idx",
                 outdir / f"{name}-labels.idx",
                 outdir / f"{name}-factors.json")
        print(f"{name}: {len(split)} samples -> "
              f"{outdir / (name + '-images.idx')}")
    return EXIT_OK


# -- serve ------------------------------------------------------------------

def cmd_serve(args) -> int:
    params, header = _open_checkpoint(args.checkpoint)
    extra = header.get("extra", {})
    service = EditingService(
        params,
        attribute_names=extra.get("label_names") or None,
        interval=tuple(extra.get("editing_interval",
                                 DEFAULT_EDIT_INTERVAL)))
    serve_forever(service, args.host, args.port)
    return EXIT_OK


# -- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disentangler",
        description="Train, probe, and serve attribute-conditional "
                    "autoencoders.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run both training phases")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override training.seed from the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="reconstruction metrics on the test "
                                    "split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None,
                   help="dataset config (defaults to the one stored in "
                        "the checkpoint)")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("protocol",
                       help="attribute-recovery sweep over edit "
                            "intensities")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--outdir", required=True)
    p.add_argument("--attribute", action="append", default=None,
                   help="attribute name or index; repeatable "
                        "(default: all)")
    p.add_argument("--grid", type=grid_argument, default=grid_argument(
        "-1.5:3.0:10"),
        help="lo:hi:count; write --grid=-1.5:3.0:10 when lo is negative")
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("edit", help="edit one test image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--outdir", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--set", action="append", default=[],
                   metavar="ATTR=VALUE")
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--sweep", default=None, metavar="ATTR")
    p.add_argument("--grid", type=grid_argument, default=grid_argument(
        "-1.5:3.0:10"))
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("export", help="write the configured dataset as "
                                      "IDX files")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="HTTP editing service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (CheckpointError, ValueError) as exc:
        # IntervalError and other domain validation surface here.
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
