"""Token-node feature providers.

A pluggable stand-in for a pretrained contextual encoder: either a
trainable embedding table or frozen per-sample vectors loaded from a
tensor container file. Sequence boundary markers are real token nodes.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Node, constant, gather_rows, parameter

SEQ_START = 0
SEQ_END = 1
UNKNOWN = 2
PAD = 3
RESERVED = ["<s>", "</s>", "<unk>", "<pad>"]


class Vocabulary:
    """Dense token -> id map with fixed reserved ids 0..3."""

    def __init__(self, tokens=()):
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self._token_to_id:
            self._token_to_id[token] = len(self._token_to_id)
        return self._token_to_id[token]

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNKNOWN)

    def __len__(self) -> int:
        return len(self._token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def to_dict(self) -> dict[str, int]:
        return dict(self._token_to_id)

    @classmethod
    def from_dict(cls, mapping: dict[str, int]) -> "Vocabulary":
        vocab = cls()
        for token, idx in sorted(mapping.items(), key=lambda kv: kv[1]):
            if idx < len(RESERVED):
                continue
            got = vocab.add(token)
            if got != idx:
                raise ValueError(f"vocabulary ids not dense: {token!r} -> {idx}, expected {got}")
        return vocab


def tokenize(tokens, vocab: Vocabulary, max_len: int) -> list[int]:
    """[START] + content ids (UNKNOWN for OOV, truncated to max_len - 2) + [END]."""
    if max_len < 3:
        raise ValueError(f"max_len must be >= 3, got {max_len}")
    ids = [vocab.id_of(t) for t in tokens[: max_len - 2]]
    return [SEQ_START] + ids + [SEQ_END]


class TrainableLookup:
    """Embedding table of learned parameters, one row per vocabulary id.

    With freeze=True the table is excluded from training (frozen random
    embeddings, the degraded-encoder ablation arm).
    """

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator, freeze=False):
        scale = 1.0 / np.sqrt(dim)
        table = rng.uniform(-scale, scale, size=(vocab_size, dim))
        self.table = parameter(table) if not freeze else constant(table)
        self.frozen = freeze
        self.dim = dim

    def embed(self, ids, sample_id=None) -> Node:
        return gather_rows(self.table, ids)

    def parameters(self) -> list[Node]:
        return [] if self.frozen else [self.table]


class PrecomputedFile:
    """Frozen per-sample vectors keyed by sample id; never updated by training."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise ValueError("no precomputed vectors given")
        self.vectors = vectors
        self.dim = next(iter(vectors.values())).shape[1]
        for sid, v in vectors.items():
            if v.ndim != 2 or v.shape[1] != self.dim:
                raise ValueError(f"vector block for sample {sid!r} has shape {v.shape}")

    @classmethod
    def load(cls, path) -> "PrecomputedFile":
        from .data import load_tensors
        meta, tensors = load_tensors(path)
        if meta.get("format") != "hgcn-embeddings":
            raise ValueError(f"{path}: not an embedding container")
        return cls(tensors)

    def embed(self, ids, sample_id=None) -> Node:
        if sample_id not in self.vectors:
            raise KeyError(f"no precomputed embedding for sample {sample_id!r}")
        vecs = self.vectors[sample_id]
        if vecs.shape[0] != len(ids):
            raise ValueError(
                f"sample {sample_id!r}: {vecs.shape[0]} vectors for {len(ids)} tokens")
        return constant(vecs)

    def parameters(self) -> list[Node]:
        return []
