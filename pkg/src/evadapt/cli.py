"""Command-line entry point.

Subcommands: gen-toy, train, eval, ablate, export-embeddings, export-fakes,
inspect-config.  Options come from a JSON config file plus flag overrides
(flags win); every run writes its fully-resolved config next to its outputs.
Exit codes: 0 success, 2 usage/config errors, 1 runtime failures.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from evadapt.config import TrainConfig, config_to_dict, load_config, save_config
from evadapt.data.loaders import DatasetSpec, load_dataset
from evadapt.data.toy import ToyConfig, generate_toy_dataset
from evadapt.errors import ConfigError, EvadaptError
from evadapt.evaluate import (
    ABLATION_CELLS,
    evaluate_accuracy,
    export_embeddings,
    export_fake_events,
    run_ablation,
)

DATA_ROOT_ENV = "EVADAPT_DATA_ROOT"


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument(
        "--data-root", type=Path, default=None, help=f"dataset root (or ${DATA_ROOT_ENV})"
    )
    parser.add_argument(
        "--toggle",
        action="append",
        default=[],
        metavar="NAME=on|off",
        help="override a loss toggle (contrastive, uncorrelated, attribute_encoder)",
    )
    for i in (1, 2, 3, 4):
        parser.add_argument(f"--lambda{i}", type=float, default=None, dest=f"lambda{i}")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="evadapt", description="Frame-to-event domain adaptation trainer"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate the synthetic two-domain benchmark")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--eval-per-class", type=int, default=30)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--theta", type=float, default=0.2)
    p.add_argument("--traj-len", type=int, default=8)
    p.add_argument("--noise-rate", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="run the adaptation training loop")
    _add_common(p)
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate event-domain accuracy of a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("ablate", help="train and score a toggle-ablation matrix")
    _add_common(p)
    p.add_argument("--cells", default="baseline,contrastive,uncorrelated,both")
    p.add_argument("--seeds", default="0,1,2")

    p = sub.add_parser("export-embeddings", help="dump pooled pre-logit features")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("export-fakes", help="render frames beside synthesized events")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--count", type=int, default=16)

    p = sub.add_parser("inspect-config", help="print the fully-resolved configuration")
    _add_common(p)
    return parser


def _resolve_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    data_root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    if data_root is not None:
        overrides["data"] = replace(cfg.data, root=str(data_root))
    lam = {}
    for i in (1, 2, 3, 4):
        value = getattr(args, f"lambda{i}")
        if value is not None:
            lam[f"lambda{i}"] = value
    if lam:
        overrides["weights"] = replace(cfg.weights, **lam)
    toggles = cfg.toggles
    for item in args.toggle:
        if "=" not in item:
            raise ConfigError(f"--toggle expects NAME=on|off, got '{item}'")
        name, _, value = item.partition("=")
        if value.lower() not in ("on", "off"):
            raise ConfigError(f"toggle value must be on|off, got '{value}'")
        if not hasattr(toggles, name):
            raise ConfigError(f"unknown toggle '{name}'")
        toggles = replace(toggles, **{name: value.lower() == "on"})
    overrides["toggles"] = toggles
    return replace(cfg, **overrides)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except EvadaptError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    from evadapt.trainer import load_checkpoint, train

    if args.command == "gen-toy":
        cfg = ToyConfig(
            classes=args.classes,
            per_class=args.per_class,
            eval_per_class=args.eval_per_class,
            image_size=args.size,
            theta=args.theta,
            trajectory_steps=args.traj_len,
            noise_rate=args.noise_rate,
        )
        root = generate_toy_dataset(cfg, args.seed, args.out)
        print(f"toy dataset written to {root}")
        return 0

    if args.command == "inspect-config":
        cfg = _resolve_config(args)
        print(json.dumps(config_to_dict(cfg), indent=1, sort_keys=True))
        return 0

    cfg = _resolve_config(args)

    if args.command == "train":
        ckpt = train(cfg, resume_from=args.resume)
        print(f"final checkpoint: {ckpt}")
        return 0

    if args.command == "ablate":
        cells = [c.strip() for c in args.cells.split(",") if c.strip()]
        unknown = [c for c in cells if c not in ABLATION_CELLS]
        if unknown:
            raise ConfigError(f"unknown ablation cells {unknown}; known: {sorted(ABLATION_CELLS)}")
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out_dir / "config.json")
        results = run_ablation(cfg, cells, seeds, out_dir / "ablation_results.tsv")
        for row in results:
            val = "n/a" if row["val_acc"] is None else f"{row['val_acc']:.4f}"
            test = "n/a" if row["test_acc"] is None else f"{row['test_acc']:.4f}"
            note = f"  [{row['error']}]" if row["error"] else ""
            print(f"{row['cell']}\tseed={row['seed']}\tval={val}\ttest={test}{note}")
        print(f"results table: {out_dir / 'ablation_results.tsv'}")
        return 0

    # remaining commands need a checkpoint and the dataset
    state, ckpt_cfg, class_names = load_checkpoint(args.checkpoint, override_config=None)
    data_cfg = replace(ckpt_cfg, data=cfg.data) if (args.data_root or args.config) else ckpt_cfg
    dataset = load_dataset(data_cfg.data, data_cfg.event_bins, data_cfg.event_normalization)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(data_cfg, out_dir / "config.json")

    if args.command == "eval":
        accuracy, per_class = evaluate_accuracy(state.model, dataset.events_test)
        print(f"event test accuracy: {accuracy:.4f}")
        for cls, acc in sorted(per_class.items()):
            name = class_names[cls] if cls < len(class_names) else str(cls)
            print(f"  class {name}: {acc:.4f}")
        (out_dir / "eval.json").write_text(
            json.dumps({"accuracy": accuracy, "per_class": per_class}, indent=1)
        )
        return 0

    if args.command == "export-embeddings":
        path = export_embeddings(
            state.model, dataset.frames_test, dataset.events_test, out_dir / "embeddings.tsv"
        )
        print(f"embeddings written to {path}")
        return 0

    if args.command == "export-fakes":
        frames = dataset.frames_test if len(dataset.frames_test) else dataset.frames_train
        events = dataset.events_test if len(dataset.events_test) else dataset.events_train
        count = min(args.count, len(frames))
        subset = type(frames)(frames.data[:count], frames.labels[:count], frames.ids[:count])
        paths = export_fake_events(state.model, subset, events, out_dir / "fakes", seed=cfg.seed)
        print(f"{len(paths)} panels written to {out_dir / 'fakes'}")
        return 0

    raise ConfigError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
