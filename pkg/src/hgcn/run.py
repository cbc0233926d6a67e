"""Training and evaluation orchestration shared by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    AttributionMatrix,
    build_attribution,
    build_golden,
    attribution_mse,
    label_cosine_matrix,
    pearson_matrix,
)
from .autodiff import Adam, Tape
from .data import Sample
from .encoder import PrecomputedFile, TrainableLookup, Vocabulary, tokenize
from .metrics import EvalReport, decode_threshold, decode_topk, evaluate
from .model import ModelConfig, ModelParams, build_target, forward, train_step


@dataclass
class RunConfig:
    label_names: list[str]
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    num_layers: int = 2
    hidden: int = 64
    input_dim: int = 64
    activation: str = "relu"
    detach_edges: bool = False
    optimizer: str = "adam"
    lr: float = 0.01
    seed: int = 0
    precision: str = "float64"
    decode: str = "topk"       # "topk" or "threshold"
    topk: int = 1
    threshold: float = 0.5
    encoder: str = "lookup"    # "lookup" or "file:PATH"
    freeze: bool = False
    epochs: int = 50
    batch_size: int = 10
    max_len: int = 32
    out_dir: str = "out"

    def validate(self) -> list[str]:
        problems = []
        if not self.label_names:
            problems.append("label_names must be nonempty")
        if self.decode not in ("topk", "threshold"):
            problems.append(f"decode must be topk or threshold, got {self.decode!r}")
        if self.decode == "topk" and self.topk < 1:
            problems.append(f"topk must be >= 1, got {self.topk}")
        if self.decode == "threshold" and not (0 < self.threshold <= 1):
            problems.append(f"threshold must be in (0, 1], got {self.threshold}")
        if not (self.encoder == "lookup" or self.encoder.startswith("file:")):
            problems.append(f"encoder must be 'lookup' or 'file:PATH', got {self.encoder!r}")
        if self.num_layers < 1:
            problems.append("num_layers must be >= 1")
        if self.hidden < 1:
            problems.append("hidden must be >= 1")
        if self.max_len < 3:
            problems.append("max_len must be >= 3")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        return problems

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            num_labels=len(self.label_names),
            num_layers=self.num_layers,
            hidden=self.hidden,
            input_dim=self.input_dim,
            activation=self.activation,
            detach_edges=self.detach_edges,
            optimizer=self.optimizer,
            lr=self.lr,
            seed=self.seed,
            precision=self.precision,
        )


def build_vocab(samples) -> Vocabulary:
    vocab = Vocabulary()
    for s in samples:
        for t in s.tokens:
            vocab.add(t)
    return vocab


def make_provider(run_cfg: RunConfig, vocab: Vocabulary, rng: np.random.Generator):
    if run_cfg.encoder.startswith("file:"):
        return PrecomputedFile.load(run_cfg.encoder[len("file:"):])
    return TrainableLookup(len(vocab), run_cfg.input_dim, rng, freeze=run_cfg.freeze)


def prepare(samples, run_cfg: RunConfig, vocab: Vocabulary):
    """Tokenize and target-encode samples into (ids, target, sample_id) triples."""
    index = {name: i for i, name in enumerate(run_cfg.label_names)}
    out = []
    for s in samples:
        ids = tokenize(s.tokens, vocab, run_cfg.max_len)
        binary = np.zeros(len(run_cfg.label_names))
        for name in s.labels:
            binary[index[name]] = 1.0
        out.append((ids, build_target(binary), s.id))
    return out


def decode_probs(probs, run_cfg: RunConfig) -> set[int]:
    if run_cfg.decode == "topk":
        return decode_topk(probs, run_cfg.topk)
    return decode_threshold(probs, run_cfg.threshold)


def predict(samples, params, provider, run_cfg, vocab, cfg=None,
            want_traces=False):
    """Forward every sample; returns (pred_sets, gold_sets, traces)."""
    cfg = cfg or run_cfg.model_config()
    index = {name: i for i, name in enumerate(run_cfg.label_names)}
    preds, golds, traces = [], [], []
    for s in samples:
        ids = tokenize(s.tokens, vocab, run_cfg.max_len)
        with Tape():
            trace = forward(ids, provider, params, cfg, sample_id=s.id)
        preds.append(decode_probs(trace.probs, run_cfg))
        golds.append({index[name] for name in s.labels})
        if want_traces:
            traces.append(trace)
    return preds, golds, traces


def evaluate_model(samples, params, provider, run_cfg, vocab) -> EvalReport:
    preds, golds, _ = predict(samples, params, provider, run_cfg, vocab)
    return evaluate(preds, golds, len(run_cfg.label_names))


def train(train_samples, run_cfg: RunConfig, dev_samples=None, vocab=None,
          log=None):
    """Full training run; returns (params, provider, vocab, log_lines).

    All randomness flows from run_cfg.seed; the per-epoch shuffle order
    is derived from (seed, epoch), so logs are reproducible byte for
    byte.
    """
    if not train_samples:
        raise ValueError("empty training set")
    if vocab is None:
        vocab = build_vocab(train_samples)
    cfg = run_cfg.model_config()
    rng = np.random.default_rng(run_cfg.seed)
    params = ModelParams.init(cfg, rng)
    provider = make_provider(run_cfg, vocab, rng)
    trainable = params.parameters() + provider.parameters()
    optimizer = Adam(trainable, cfg.lr) if cfg.optimizer == "adam" else None

    prepared = prepare(train_samples, run_cfg, vocab)
    lines = []
    for epoch in range(run_cfg.epochs):
        order = np.random.default_rng([run_cfg.seed, epoch]).permutation(len(prepared))
        losses = []
        for start in range(0, len(order), run_cfg.batch_size):
            batch = [prepared[i] for i in order[start:start + run_cfg.batch_size]]
            losses.append(train_step(batch, params, cfg, provider, optimizer))
        mean_loss = float(np.mean(losses))
        line = f"epoch {epoch} loss {mean_loss:.8f}"
        if dev_samples:
            report = evaluate_model(dev_samples, params, provider, run_cfg, vocab)
            line += (f" micro_f1 {report.micro_f1:.6f} macro_f1 {report.macro_f1:.6f}"
                     f" jaccard {report.jaccard:.6f}")
        lines.append(line)
        if log is not None:
            log(line)
    return params, provider, vocab, lines


def explain_samples(samples, params, provider, run_cfg, vocab):
    """Per-sample attribution matrices plus corpus golden MSE (None if no goldens).

    Golden matrices use annotated keyword intensities at the annotated
    token rows; samples without annotations do not enter the MSE mean.
    """
    cfg = run_cfg.model_config()
    index = {name: i for i, name in enumerate(run_cfg.label_names)}
    attributions = []
    mses = []
    for s in samples:
        ids = tokenize(s.tokens, vocab, run_cfg.max_len)
        with Tape():
            trace = forward(ids, provider, params, cfg, sample_id=s.id)
        token_names = ["<s>"] + s.tokens[: run_cfg.max_len - 2] + ["</s>"]
        attr = build_attribution(trace.final_edges, token_names, run_cfg.label_names)
        attributions.append((s, attr))
        if s.annotations:
            golden = build_golden(
                [(i, index[name], x) for i, name, x in s.annotations],
                len(ids), len(run_cfg.label_names))
            mses.append(attribution_mse(attr.values, golden))
    corpus_mse = float(np.mean(mses)) if mses else None
    return attributions, corpus_mse


def correlate(samples, params, provider, run_cfg, vocab):
    """Pearson over decoded predictions and cosine over mean final label features."""
    cfg = run_cfg.model_config()
    preds, _, traces = predict(samples, params, provider, run_cfg, vocab,
                               cfg=cfg, want_traces=True)
    pearson = pearson_matrix(preds, len(run_cfg.label_names))
    mean_label_feats = np.mean([t.final_label_features for t in traces], axis=0)
    cosine = label_cosine_matrix(mean_label_feats)
    return pearson, cosine
