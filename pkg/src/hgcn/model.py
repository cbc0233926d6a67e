"""The HGCN stack: projections, convolution layers, loss, training step.

Each sample is its own graph. Layer 1 propagates over a block-diagonal
adjacency (the token-label block starts at zero); later layers and the
final prediction re-estimate that block from the current node features.
Label scores are column sums of the final token-label block, pushed
through a softmax and trained against a target distribution with MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Node, Tape, constant, parameter
from .graph import (
    assemble_block_node,
    build_chain_adjacency,
    build_label_adjacency,
    normalize_adjacency_node,
    reconstruct_token_label,
)


@dataclass
class ModelConfig:
    num_labels: int
    num_layers: int = 2
    hidden: int = 64
    input_dim: int = 64
    activation: str = "relu"
    detach_edges: bool = False
    optimizer: str = "adam"
    lr: float = 0.01
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.precision not in ("float64", "float32"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32

    def to_dict(self) -> dict:
        return {
            "num_labels": self.num_labels,
            "num_layers": self.num_layers,
            "hidden": self.hidden,
            "input_dim": self.input_dim,
            "activation": self.activation,
            "detach_edges": self.detach_edges,
            "optimizer": self.optimizer,
            "lr": self.lr,
            "seed": self.seed,
            "precision": self.precision,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class ModelParams:
    """Learned weights: per-type input projections plus per-layer mixers."""

    w_token_in: Node
    w_label_in: Node
    w_layer: list[Node]

    @classmethod
    def init(cls, cfg: ModelConfig, rng: np.random.Generator | None = None) -> "ModelParams":
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        dt = cfg.dtype
        return cls(
            w_token_in=parameter(_glorot(rng, cfg.input_dim, cfg.hidden, dt)),
            w_label_in=parameter(_glorot(rng, cfg.num_labels, cfg.hidden, dt)),
            w_layer=[parameter(_glorot(rng, cfg.hidden, cfg.hidden, dt))
                     for _ in range(cfg.num_layers)],
        )

    def parameters(self) -> list[Node]:
        return [self.w_token_in, self.w_label_in, *self.w_layer]

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {"w_token_in": self.w_token_in.value, "w_label_in": self.w_label_in.value}
        for i, w in enumerate(self.w_layer):
            out[f"w_layer_{i}"] = w.value
        return out

    @classmethod
    def from_named_tensors(cls, tensors: dict[str, np.ndarray], cfg: ModelConfig) -> "ModelParams":
        for name in ["w_token_in", "w_label_in",
                     *(f"w_layer_{i}" for i in range(cfg.num_layers))]:
            if name not in tensors:
                raise KeyError(f"checkpoint missing tensor {name!r}")
        return cls(
            w_token_in=parameter(tensors["w_token_in"]),
            w_label_in=parameter(tensors["w_label_in"]),
            w_layer=[parameter(tensors[f"w_layer_{i}"]) for i in range(cfg.num_layers)],
        )


@dataclass
class ForwardTrace:
    """Everything the decoders and explanation tooling need from one pass."""

    layer_token_features: list[np.ndarray]
    layer_label_features: list[np.ndarray]
    layer_edges: list[np.ndarray]      # token-label block fed into each layer
    final_edges: np.ndarray            # reconstructed after the last layer
    probs: np.ndarray                  # 1 x n
    final_edges_node: Node | None = None
    probs_node: Node | None = None

    @property
    def final_label_features(self) -> np.ndarray:
        return self.layer_label_features[-1]


def init_label_features(n: int) -> np.ndarray:
    """One-hot label inputs: the identity, later projected to the hidden width."""
    return np.eye(n)


def forward(ids, provider, params: ModelParams, cfg: ModelConfig,
            sample_id=None) -> ForwardTrace:
    """Run the HGCN on one token-id sequence. Requires an active Tape."""
    m = len(ids)
    if m < 1:
        raise ValueError("empty token sequence")
    n = cfg.num_labels

    x_token = provider.embed(ids, sample_id=sample_id)
    h_token = ad.matmul(x_token, params.w_token_in)
    # one-hot label inputs: I_n @ w_label_in is w_label_in itself
    h = ad.concat_rows(h_token, params.w_label_in)

    a_token = build_chain_adjacency(m)
    a_label = build_label_adjacency(n)

    token_feats = [h.value[:m].copy()]
    label_feats = [h.value[m:].copy()]
    layer_edges: list[np.ndarray] = []

    edges: Node = constant(np.zeros((m, n)))  # first layer: no token-label edges yet
    for layer in range(cfg.num_layers):
        if layer > 0:
            edges = reconstruct_token_label(
                ad.slice_rows(h, 0, m), ad.slice_rows(h, m, m + n))
            if cfg.detach_edges:
                edges = constant(edges.value)
        layer_edges.append(edges.value.copy())
        full = assemble_block_node(a_token, a_label, edges)
        norm = normalize_adjacency_node(full)
        h = ad.activation(ad.matmul(ad.matmul(norm, h), params.w_layer[layer]),
                          cfg.activation)
        token_feats.append(h.value[:m].copy())
        label_feats.append(h.value[m:].copy())

    final_edges = reconstruct_token_label(
        ad.slice_rows(h, 0, m), ad.slice_rows(h, m, m + n))
    scores = ad.col_sums(final_edges)
    probs = ad.softmax_row(scores)

    return ForwardTrace(
        layer_token_features=token_feats,
        layer_label_features=label_feats,
        layer_edges=layer_edges,
        final_edges=final_edges.value,
        probs=probs.value,
        final_edges_node=final_edges,
        probs_node=probs,
    )


def build_target(labels) -> np.ndarray:
    """Ground-truth distribution: uniform over positive labels.

    A sample with no positive label gets the uniform distribution; a
    softmax output cannot represent the all-zero vector.
    """
    labels = np.asarray(labels, dtype=float).reshape(1, -1)
    k = labels.sum()
    if k == 0:
        return np.full_like(labels, 1.0 / labels.shape[1])
    return labels / k


def sample_loss(ids, target, provider, params, cfg, sample_id=None) -> Node:
    trace = forward(ids, provider, params, cfg, sample_id=sample_id)
    return ad.mse_loss(trace.probs_node, target)


def train_step(batch, params: ModelParams, cfg: ModelConfig, provider,
               optimizer: Adam | None = None) -> float:
    """One optimizer step on a batch of (ids, target[, sample_id]) triples.

    Loss is the mean per-sample MSE; gradients accumulate across samples
    before the single parameter update.
    """
    if not batch:
        raise ValueError("empty batch")
    trainable = params.parameters() + provider.parameters()
    total = 0.0
    inv = 1.0 / len(batch)
    for item in batch:
        ids, target = item[0], item[1]
        sample_id = item[2] if len(item) > 2 else None
        with Tape() as tape:
            loss = sample_loss(ids, target, provider, params, cfg, sample_id=sample_id)
            scaled = ad.scale(loss, inv)
            tape.backward(scaled)
        total += float(loss.value[0, 0])
    if optimizer is not None:
        optimizer.step()
    else:
        ad.sgd_step(trainable, cfg.lr)
    return total * inv
