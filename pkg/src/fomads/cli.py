"""Command-line driver for the full pipeline.

Subcommands: generate | attack | extract | train | eval | sweep. All file
formats are the CSV/text formats owned by the corresponding modules. The
environment variable ``FOMADS_SEED`` supplies the seed when a command's
``--seed`` flag is omitted.

Exit codes: 0 success, 2 config error, 3 data error, 4 training
divergence.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import attacks, pmrat, sigsim
from .errors import ConfigError, DataError, TrainingError
from .evaluate import EvalReport
from .features import (FeatureNormalizer, FractionalFeatureExtractor,
                       save_features_csv)
from .model import HierarchicalModel
from .pmrat import TrainConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


def _default_seed() -> int:
    raw = os.environ.get("FOMADS_SEED", "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"FOMADS_SEED must be an integer, got {raw!r}") from exc


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: $FOMADS_SEED or 0)")


def _seed_of(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else _default_seed()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fomads",
                                     description="Microgrid fault and cyber-attack diagnosis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic VPQ dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-normal", type=int, default=800)
    p.add_argument("--n-per-fault", type=int, default=200)
    p.add_argument("--config", help="scenario config file (flat key = value)")
    _add_seed(p)

    p = sub.add_parser("attack", help="corrupt a dataset with one attack kind")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attack", required=True,
                   choices=["bias", "noise", "replacement", "replay"])
    p.add_argument("--dv", type=float, default=0.1)
    p.add_argument("--dp", type=float, default=50.0)
    p.add_argument("--dq", type=float, default=30.0)
    p.add_argument("--sigma-rel", type=float, default=0.05)
    p.add_argument("--start", type=int, default=None)
    p.add_argument("--len", type=int, default=None, dest="length")
    p.add_argument("--value-mode", choices=["zero", "hold-first", "constant"],
                   default="zero")
    p.add_argument("--const", type=float, default=0.0)
    p.add_argument("--source-start", type=int, default=0)
    p.add_argument("--target-start", type=int, default=None)
    _add_seed(p)

    p = sub.add_parser("extract", help="extract feature vectors from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--kernel-len", type=int, default=10)
    p.add_argument("--no-frac-features", action="store_true")
    p.add_argument("--normalizer", help="apply a previously fitted normalizer")
    p.add_argument("--fit-normalizer", help="fit on this dataset and save here")

    p = sub.add_parser("train", help="run the adversarial training curriculum")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="train config file (flat key = value)")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-normalizer", default=None,
                   help="default: <out-model>.norm")
    p.add_argument("--metrics", default=None, help="per-epoch metrics CSV")
    p.add_argument("--stages", default=None,
                   help="comma list, e.g. 'normal' or 'normal,bias,noise'")
    p.add_argument("--epochs-per-stage", type=int, default=None)
    p.add_argument("--no-ohem", action="store_true", help="force the mined-loss weight to 0")
    p.add_argument("--no-frac-features", action="store_true",
                   help="raw-statistics features (ablation)")
    p.add_argument("--flat", action="store_true",
                   help="train and evaluate only the flat 25-class net")
    _add_seed(p)

    p = sub.add_parser("eval", help="evaluate a model on per-condition datasets")
    p.add_argument("--model", required=True)
    p.add_argument("--normalizer", default=None, help="default: <model>.norm")
    p.add_argument("--dataset", action="append", required=True, metavar="COND=PATH",
                   help="repeatable; condition names normal/bias/noise/replacement/replay")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--switch-metric", choices=["routed", "all"], default="routed")

    p = sub.add_parser("sweep", help="alpha x window-length sensitivity grid")
    p.add_argument("--out", required=True)
    p.add_argument("--alphas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.95",
                   help="comma list of Caputo orders in (0, 1)")
    p.add_argument("--window-lens", default="100,200,300,400,500,600")
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--n-normal", type=int, default=64)
    p.add_argument("--n-per-fault", type=int, default=16)
    p.add_argument("--epochs", type=int, default=12)
    _add_seed(p)
    return parser


def _cmd_generate(args: argparse.Namespace) -> int:
    config = (sigsim.ScenarioConfig.from_file(args.config) if args.config
              else sigsim.ScenarioConfig())
    windows = sigsim.generate_dataset(config, args.n_normal, args.n_per_fault,
                                      seed=_seed_of(args))
    sigsim.save_dataset_csv(args.out, windows)
    print(f"wrote {len(windows)} windows to {args.out}")
    return EXIT_OK


def _attack_spec(args: argparse.Namespace, seed: int) -> attacks.AttackSpec:
    kind = args.attack
    base = attacks.AttackSpec.default_for(kind, seed=seed)
    if kind == "bias":
        return attacks.AttackSpec.bias(args.dv, args.dp, args.dq, seed=seed)
    if kind == "noise":
        start = base.start if args.start is None else args.start
        length = base.length if args.length is None else args.length
        return attacks.AttackSpec.noise(args.sigma_rel, start, length, seed=seed)
    if kind == "replacement":
        start = base.start if args.start is None else args.start
        length = base.length if args.length is None else args.length
        return attacks.AttackSpec.replacement(args.value_mode, args.const, start,
                                              length, seed=seed)
    target = base.target_start if args.target_start is None else args.target_start
    length = base.length if args.length is None else args.length
    return attacks.AttackSpec.replay(args.source_start, target, length, seed=seed)


def _cmd_attack(args: argparse.Namespace) -> int:
    windows = sigsim.load_dataset_csv(args.dataset)
    spec = _attack_spec(args, _seed_of(args))
    out = [attacks.apply(w, spec) for w in windows]
    sigsim.save_dataset_csv(args.out, out)
    print(f"wrote {len(out)} {args.attack}-attacked windows to {args.out}")
    return EXIT_OK


def _cmd_extract(args: argparse.Namespace) -> int:
    windows = sigsim.load_dataset_csv(args.dataset)
    extractor = FractionalFeatureExtractor(
        args.alpha, args.beta, args.kernel_len,
        include_fractional=not args.no_frac_features,
    )
    feats = extractor.transform(windows)
    if args.normalizer and args.fit_normalizer:
        raise ConfigError("--normalizer and --fit-normalizer are mutually exclusive")
    if args.fit_normalizer:
        normalizer = FeatureNormalizer(extractor.schema_id).fit(feats)
        normalizer.to_file(args.fit_normalizer)
        feats = normalizer.transform(feats)
    elif args.normalizer:
        normalizer = FeatureNormalizer.from_file(args.normalizer)
        feats = normalizer.transform(feats)
    save_features_csv(
        args.out, feats,
        np.array([w.label.class_id for w in windows]),
        [w.attack_kind for w in windows],
        np.array([w.window_id for w in windows]),
    )
    print(f"wrote {feats.shape[0]} x {feats.shape[1]} features to {args.out}")
    return EXIT_OK


def _train_config(args: argparse.Namespace) -> TrainConfig:
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides: dict[str, object] = {}
    if args.stages is not None:
        overrides["stages"] = args.stages
    if args.epochs_per_stage is not None:
        overrides["epochs_per_stage"] = args.epochs_per_stage
    if args.no_ohem:
        overrides["use_ohem"] = False
    if args.no_frac_features:
        overrides["include_fractional"] = False
    if args.flat:
        overrides["flat"] = True
    if args.seed is not None or "FOMADS_SEED" in os.environ:
        overrides["seed"] = _seed_of(args)
    if overrides:
        values = {f: getattr(config, f) for f in config.__dataclass_fields__}
        values.update(overrides)
        config = TrainConfig(**values)
    return config


def _cmd_train(args: argparse.Namespace) -> int:
    windows = sigsim.load_dataset_csv(args.dataset)
    config = _train_config(args)
    result = pmrat.train_curriculum(windows, config)

    metadata = {
        "feature_schema": result.extractor.schema_id,
        "alpha": config.alpha,
        "beta": config.beta,
        "kernel_len": config.kernel_len,
        "include_fractional": int(config.include_fractional),
        "flat": int(config.flat),
    }
    result.model.save(args.out_model, metadata)
    norm_path = args.out_normalizer or args.out_model + ".norm"
    result.normalizer.to_file(norm_path)
    if args.metrics:
        pmrat.save_metrics_csv(args.metrics, result.metrics)
    last = result.metrics[-1]
    print(f"trained {len(config.stages)} stages, {config.total_epochs} epochs; "
          f"final clean acc {last.clean_acc:.4f}, adv acc {last.adv_acc:.4f}")
    print(f"model: {args.out_model}  normalizer: {norm_path}")
    return EXIT_OK


def _load_pipeline(model_path: str, normalizer_path: str | None):
    model, meta = HierarchicalModel.load(model_path)
    try:
        extractor = FractionalFeatureExtractor(
            alpha=float(meta["alpha"]),
            beta=float(meta["beta"]),
            kernel_len=int(meta["kernel_len"]),
            include_fractional=bool(int(meta["include_fractional"])),
        )
        flat = bool(int(meta["flat"]))
    except KeyError as exc:
        raise DataError(f"{model_path}: missing pipeline metadata {exc}") from exc
    normalizer = FeatureNormalizer.from_file(normalizer_path or model_path + ".norm")
    if normalizer.schema_id != extractor.schema_id:
        raise ConfigError(
            f"normalizer schema {normalizer.schema_id} does not match "
            f"model feature schema {extractor.schema_id}"
        )
    return model, extractor, normalizer, flat


def _cmd_eval(args: argparse.Namespace) -> int:
    model, extractor, normalizer, flat = _load_pipeline(args.model, args.normalizer)
    report = EvalReport(switch_metric=args.switch_metric)
    for item in args.dataset:
        if "=" in item:
            cond, path = item.split("=", 1)
        else:
            cond, path = None, item
        windows = sigsim.load_dataset_csv(path)
        if cond is None:
            kinds = {w.attack_kind for w in windows}
            cond = kinds.pop() if len(kinds) == 1 else "mixed"
            if cond == "none":
                cond = "normal"
        x = normalizer.transform(extractor.transform(windows))
        pred = model.predict_flat(x) if flat else model.predict(x)
        y = np.array([w.label.class_id for w in windows])
        report.add(cond, y, pred.class_ids)
    report.to_csv(args.out)
    print(report.table())
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    from .sweep import run_sweep

    alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    lens = [int(v) for v in args.window_lens.split(",") if v.strip()]
    rows = run_sweep(alphas, lens, beta=args.beta, n_normal=args.n_normal,
                     n_per_fault=args.n_per_fault, epochs=args.epochs,
                     seed=_seed_of(args))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("alpha,L,val_acc\n")
        for alpha, length, acc in rows:
            fh.write(f"{alpha!r},{length},{acc!r}\n")
    best = max(rows, key=lambda r: r[2])
    print(f"wrote {len(rows)} cells to {args.out}; "
          f"best alpha={best[0]} L={best[1]} val_acc={best[2]:.4f}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "attack": _cmd_attack,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
