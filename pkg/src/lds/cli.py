"""Command-line entry points.

Subcommands: train, eval, ablate, synth, gradcheck, export-csv.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import (ConfigError, DataError, NumericalError, save_dataset,
                   save_split)
from .encoder import save_embedding_store
from .harness import (Metrics, ablate, evaluate, export_results,
                      format_ablation_table, load_backend, load_config, train)
from .gradcheck import check_encoder_gradient, check_loss_gradients
from .synth import (KeywordSynthConfig, SynthConfig, gen_keyword_dataset,
                    gen_random_store, gen_synthetic)

GRADCHECK_TOLERANCE = 1e-5


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    result = train(cfg)
    for entry in result.log:
        print(f"epoch {entry['epoch']:>3}  loss {entry['mean_loss']:.6f}  "
              f"val_acc {entry['val_accuracy']:.4f}")
    if result.best_epoch is not None:
        print(f"best epoch {result.best_epoch}")
    if cfg.checkpoint:
        print(f"checkpoint written to {cfg.checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    from dataclasses import replace

    cfg = load_config(args.config)
    if args.scaler is not None:
        cfg = replace(cfg, scaler_enabled=(args.scaler == "em"))
    if args.metalearner is not None:
        cfg = replace(cfg, metalearner=replace(cfg.metalearner,
                                               kind=args.metalearner))
    metrics = evaluate(cfg)
    print(f"episodes {metrics.count}  accuracy {metrics.mean:.4f} "
          f"+/- {metrics.std:.4f}  ({metrics.seconds:.1f}s)")
    if args.out:
        export_results(metrics, args.out)
        print(f"per-episode CSV written to {args.out}")
    if args.out_json:
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_dict(), fh)
        print(f"JSON report written to {args.out_json}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    rows = ablate(cfg)
    print(format_ablation_table(rows))
    export_results(rows, args.out)
    print(f"ablation CSV written to {args.out}")
    if args.out_json:
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump({"kind": "ablation", "rows": rows}, fh)
    return 0


def _load_synth_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})")
    if not isinstance(obj, dict):
        raise ConfigError("synth config must be a JSON object")
    return obj


def _cmd_synth(args) -> int:
    obj = _load_synth_config(args.config)
    mode = obj.pop("mode", "gaussian")
    prefix = args.out_prefix
    try:
        if mode == "gaussian":
            stores = gen_synthetic(SynthConfig(**obj))
        elif mode == "noise":
            stores = gen_random_store(**obj)
        elif mode == "keywords":
            dataset, split = gen_keyword_dataset(KeywordSynthConfig(**obj))
            stores = None
        else:
            raise ConfigError(f"unknown synth mode {mode!r}")
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}")
    if stores is not None:
        sample_store, label_store, dataset, split = stores
        save_embedding_store(sample_store, f"{prefix}.samples.lds")
        save_embedding_store(label_store, f"{prefix}.labels.lds")
        print(f"stores written to {prefix}.samples.lds / {prefix}.labels.lds")
    save_dataset(dataset, f"{prefix}.jsonl")
    save_split(split, f"{prefix}.split.json")
    print(f"dataset written to {prefix}.jsonl, split to {prefix}.split.json")
    return 0


def _cmd_gradcheck(args) -> int:
    losses = check_loss_gradients(trials=args.trials, seed=args.seed)
    encoder = check_encoder_gradient(instances=max(1, args.trials // 4),
                                     seed=args.seed)
    failed = False
    for name, err in {**losses, "encoder": encoder}.items():
        ok = err < GRADCHECK_TOLERANCE
        failed |= not ok
        print(f"{name:<8} max rel err {err:.3e}  "
              f"{'ok' if ok else 'FAIL'} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    if failed:
        raise NumericalError("analytic gradients disagree with finite differences")
    return 0


def _cmd_export_csv(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.report}: malformed JSON ({exc.msg})")
    kind = obj.get("kind")
    if kind == "metrics":
        metrics = Metrics(np.asarray(obj["accuracies"], dtype=np.float64),
                          float(obj.get("seconds", 0.0)))
        export_results(metrics, args.out)
    elif kind == "ablation":
        export_results(obj["rows"], args.out)
    else:
        raise DataError(f"{args.report}: unknown report kind {kind!r}")
    print(f"CSV written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lds",
        description="Label-guided distance scaling for few-shot episodes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the toy encoder")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--scaler", choices=["em", "none"])
    p.add_argument("--metalearner", choices=["pn", "rrml"])
    p.add_argument("--out", help="per-episode CSV path")
    p.add_argument("--out-json", help="JSON report path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="loss x scaler x meta-learner grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--out-json")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("synth", help="generate synthetic fixtures")
    p.add_argument("--config", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("export-csv", help="convert a JSON report to CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_csv)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
