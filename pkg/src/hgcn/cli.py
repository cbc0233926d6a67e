"""Command-line surface: train | eval | explain | correlate | synth.

Configuration comes from an optional JSON file plus flag overrides.
Exit codes: 0 success, 1 config/validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import run as runmod
from .analysis import render_heatmap
from .data import (
    DatasetError,
    CheckpointError,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)
from .run import RunConfig
from .synth import generate_synthetic_corpus

log = logging.getLogger("hgcn")


class ConfigError(ValueError):
    pass


def _load_run_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                values = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {args.config}: invalid JSON ({e.msg})") from e
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    if args.seed is not None:
        values["seed"] = args.seed
    if args.layers is not None:
        values["num_layers"] = args.layers
    if args.hidden is not None:
        values["hidden"] = args.hidden
    if args.encoder is not None:
        values["encoder"] = args.encoder
    if args.freeze:
        values["freeze"] = True
    if args.out is not None:
        values["out_dir"] = args.out
    if args.decode is not None:
        kind, _, value = args.decode.partition(":")
        if kind == "topk":
            values["decode"] = "topk"
            values["topk"] = int(value)
        elif kind == "thr":
            values["decode"] = "threshold"
            values["threshold"] = float(value)
        else:
            raise ConfigError(f"--decode must be topk:K or thr:T, got {args.decode!r}")

    if "label_names" not in values:
        raise ConfigError("config must declare label_names")
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    problems = cfg.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def _require(cfg: RunConfig, attr: str, what: str) -> str:
    path = getattr(cfg, attr)
    if not path:
        raise ConfigError(f"{what} requires config key {attr!r}")
    return path


def _load_model(cfg: RunConfig):
    ckpt = Path(cfg.out_dir) / "model.ckpt"
    params, model_cfg, vocab, label_names = load_checkpoint(ckpt)
    if label_names and label_names != cfg.label_names:
        raise ConfigError(
            f"checkpoint label set {label_names} differs from config {cfg.label_names}")
    if vocab is None:
        raise CheckpointError(f"{ckpt}: checkpoint has no vocabulary")
    provider = runmod.make_provider(cfg, vocab, np.random.default_rng(cfg.seed))
    return params, model_cfg, vocab, provider


def cmd_train(cfg: RunConfig) -> int:
    train_samples = load_dataset(_require(cfg, "train_path", "train"), cfg.label_names)
    dev = load_dataset(cfg.dev_path, cfg.label_names) if cfg.dev_path else None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train.log", "w", encoding="utf-8") as logfile:
        def emit(line):
            print(line)
            logfile.write(line + "\n")
        params, provider, vocab, _ = runmod.train(train_samples, cfg, dev, log=emit)
    save_checkpoint(params, cfg.model_config(), out / "model.ckpt",
                    vocab=vocab, label_names=cfg.label_names)
    log.info("checkpoint written to %s", out / "model.ckpt")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    samples = load_dataset(_require(cfg, "test_path", "eval"), cfg.label_names)
    params, _, vocab, provider = _load_model(cfg)
    report = runmod.evaluate_model(samples, params, provider, cfg, vocab)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.txt").write_text(report.render(cfg.label_names), encoding="utf-8")
    (out / "eval.json").write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(report.render(cfg.label_names), end="")
    return 0


def cmd_explain(cfg: RunConfig) -> int:
    samples = load_dataset(_require(cfg, "test_path", "explain"), cfg.label_names)
    params, _, vocab, provider = _load_model(cfg)
    attributions, corpus_mse = runmod.explain_samples(samples, params, provider, cfg, vocab)
    out = Path(cfg.out_dir) / "attributions"
    out.mkdir(parents=True, exist_ok=True)
    for sample, attr in attributions:
        render_heatmap(attr.values, attr.tokens, attr.labels, out / sample.id)
    if corpus_mse is not None:
        (out / "mse.txt").write_text(f"attribution_mse {corpus_mse:.8f}\n", encoding="utf-8")
        print(f"attribution_mse {corpus_mse:.8f}")
    print(f"wrote {len(attributions)} attribution matrices to {out}")
    return 0


def cmd_correlate(cfg: RunConfig) -> int:
    samples = load_dataset(_require(cfg, "test_path", "correlate"), cfg.label_names)
    params, _, vocab, provider = _load_model(cfg)
    pearson, cosine = runmod.correlate(samples, params, provider, cfg, vocab)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    render_heatmap(pearson, cfg.label_names, cfg.label_names, out / "pearson")
    render_heatmap(cosine, cfg.label_names, cfg.label_names, out / "label_cosine")
    print(f"wrote pearson and label_cosine heatmaps to {out}")
    return 0


def cmd_synth(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_samples, label_names, _ = generate_synthetic_corpus(
        args.labels, args.vocab_size, args.train_samples, seed=cfg.seed,
        id_prefix="train_")
    test_samples, _, _ = generate_synthetic_corpus(
        args.labels, args.vocab_size, args.test_samples, seed=cfg.seed + 1,
        id_prefix="test_")
    save_dataset(train_samples, out / "train.jsonl")
    save_dataset(test_samples, out / "test.jsonl")
    print(f"wrote {len(train_samples)} train / {len(test_samples)} test samples "
          f"with labels {label_names} to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgcn",
                                     description="heterogeneous graph network for "
                                                 "multi-label text classification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "explain", "correlate", "synth"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--layers", type=int)
        p.add_argument("--hidden", type=int)
        p.add_argument("--decode", help="topk:K or thr:T")
        p.add_argument("--encoder", help="lookup or file:PATH")
        p.add_argument("--freeze", action="store_true")
        p.add_argument("--out", help="output directory")
        if name == "synth":
            p.add_argument("--labels", type=int, default=5)
            p.add_argument("--vocab-size", type=int, default=60)
            p.add_argument("--train-samples", type=int, default=500)
            p.add_argument("--test-samples", type=int, default=100)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HGCN_LOG_LEVEL", "WARNING").upper())
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            # synth does not need a label declaration; fabricate one
            if args.config:
                cfg = _load_run_config(args)
            else:
                cfg = RunConfig(label_names=[f"L{i + 1}" for i in range(args.labels)],
                                seed=args.seed or 0,
                                out_dir=args.out or "out")
            return cmd_synth(cfg, args)
        cfg = _load_run_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "explain":
            return cmd_explain(cfg)
        if args.command == "correlate":
            return cmd_correlate(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DatasetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (CheckpointError, OSError, ValueError, KeyError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
