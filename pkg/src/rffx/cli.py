"""Command line interface: synthesize data, train, evaluate, render figures.

Exit codes: 0 on success, 1 for usage or configuration problems (including
malformed input files), 2 for runtime failures. Every command that produces
an output directory drops a provenance.json recording the version, config,
and seed that made it.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import (
    ExperimentConfig,
    apply_overrides,
    default_config,
    desk_config,
    load_config,
)
from .datasets import SPLIT_NAMES, gen_dataset, read_dataset
from .exceptions import ConfigurationError, FormatError, RffxError
from .metrics import evaluate_split, sweep as run_sweep, write_sweep_csv
from .models import load_checkpoint
from .training import train as run_training
from .visualization import render_disentanglement, render_learning_curves


class UsageError(ConfigurationError):
    """Bad command line; reported without a traceback."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1
    def error(self, message):
        raise UsageError(message)


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_provenance(out_dir, command: str, config: dict | None = None,
                     seed: int | None = None, inputs=()) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {"version": __version__, "created_utc": _utc_now(), "command": command,
              "config": config, "seed": seed, "inputs": [str(p) for p in inputs]}
    path = out_dir / "provenance.json"
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _add_config_opts(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config JSON file")
    p.add_argument("--preset", choices=("default", "desk"), default="default",
                   help="base config when --config is not given")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")


def _load_experiment(args, extra_overrides=()) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset == "desk":
        cfg = desk_config()
    else:
        cfg = default_config()
    overrides = list(args.set) + list(extra_overrides)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _read_split(data_dir, split: str):
    path = Path(data_dir) / split
    if not path.exists():
        raise FormatError(f"no split directory {path}")
    return read_dataset(path)


def cmd_gen_data(args) -> int:
    cfg = _load_experiment(args)
    splits = gen_dataset(cfg.dataset, args.seed, out_dir=args.out)
    write_provenance(args.out, "gen-data", cfg.to_dict(), args.seed)
    for name in SPLIT_NAMES:
        ds = splits[name]
        print(f"{name}: {ds.num_records} records x {ds.signal_length} samples, "
              f"{ds.device_ids.size} devices")
    return 0


def cmd_train(args) -> int:
    extra = []
    if args.method:
        extra.append(f"train.method={args.method}")
    if args.seed is not None:
        extra.append(f"train.seed={args.seed}")
    cfg = _load_experiment(args, extra)
    train_ds = _read_split(args.data, "train")
    eval_sets = {}
    for name in SPLIT_NAMES[1:]:
        if (Path(args.data) / name).exists():
            eval_sets[name] = read_dataset(Path(args.data) / name)
    state = run_training(train_ds, cfg, eval_datasets=eval_sets or None, out_dir=args.out)
    write_provenance(args.out, "train", cfg.to_dict(), cfg.train.seed, inputs=[args.data])
    print(f"trained method={cfg.train.method} seed={cfg.train.seed} "
          f"epochs={state.epoch}; wrote {Path(args.out) / 'checkpoint.pt'}")
    return 0


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = _read_split(args.data, args.split)
    report = evaluate_split(checkpoint, dataset, out_dir=args.out)
    write_provenance(args.out, "eval", checkpoint.config, checkpoint.seed,
                     inputs=[args.checkpoint, args.data])
    print(f"{args.split}: auc={report['auc']:.4f} eer={report['eer']:.4f} "
          f"({report['n_genuine']} genuine / {report['n_impostor']} impostor pairs)")
    return 0


def cmd_viz(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = _read_split(args.data, args.split)
    index_a, index_b = args.records
    render_disentanglement(checkpoint, dataset, index_a, index_b,
                           seed=args.seed, out_dir=args.out)
    write_provenance(args.out, "viz", checkpoint.config, args.seed,
                     inputs=[args.checkpoint, args.data])
    print(f"wrote {Path(args.out) / 'disentangle.png'} and per-panel CSVs")
    return 0


def cmd_sweep(args) -> int:
    if args.seed is not None:
        cfg = _load_experiment(args, [f"train.seed={args.seed}"])
    else:
        cfg = _load_experiment(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated numbers, got {args.values!r}")
    datasets = {"train": _read_split(args.data, "train"),
                args.eval_split: _read_split(args.data, args.eval_split)}
    rows = run_sweep(args.param, values, args.repeats, cfg, datasets,
                     eval_split=args.eval_split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "sweep.csv", rows)
    write_provenance(args.out, "sweep", cfg.to_dict(), cfg.train.seed, inputs=[args.data])
    for row in rows:
        print(f"{args.param}={row['param_value']:g}: median auc {row['median']:.4f} "
              f"[{row['min']:.4f}, {row['max']:.4f}]")
    return 0


def cmd_curves(args) -> int:
    rows = render_learning_curves(args.histories, out_dir=args.out)
    write_provenance(args.out, "curves", inputs=args.histories)
    print(f"wrote {Path(args.out) / 'curves.csv'} ({len(rows)} rows)")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rffx",
                     description="radio fingerprint disentanglement experiments")
    parser.add_argument("--version", action="version", version=f"rffx {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize the four dataset splits")
    _add_config_opts(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=0, help="dataset seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model on a dataset")
    _add_config_opts(p)
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--method", choices=("dr", "ml", "awgn", "fir"),
                   help="shortcut for --set train.method=...")
    p.add_argument("--seed", type=int, help="shortcut for --set train.seed=...")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one split")
    p.add_argument("--checkpoint", required=True, help="checkpoint prefix, file, or run dir")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--split", choices=SPLIT_NAMES, default="test_unknown_multipath")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="render cross-device disentanglement panels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=SPLIT_NAMES, default="train")
    p.add_argument("--records", type=int, nargs=2, default=(0, 1),
                   metavar=("A", "B"), help="two record indices to cross-render")
    p.add_argument("--seed", type=int, default=0, help="bottleneck noise seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("sweep", help="train repeatedly across one loss weight")
    _add_config_opts(p)
    p.add_argument("--data", required=True)
    p.add_argument("--param", choices=("lambda", "alpha", "beta"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--eval-split", choices=SPLIT_NAMES, default="test_unknown_multipath")
    p.add_argument("--seed", type=int, help="base seed; repeats use seed, seed+1, ...")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curves", help="aggregate training histories into AUC curves")
    p.add_argument("--histories", nargs="+", required=True,
                   help="history.json files from train runs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RffxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
