"""Dataset ingestion and binary persistence.

Datasets are JSON-lines, one sample per line. Tensors (checkpoints and
precomputed embeddings) share a single container format: a one-line JSON
header describing named shapes, followed by raw little-endian float
payloads in header order, so round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import Vocabulary
from .model import ModelConfig, ModelParams

CHECKPOINT_FORMAT = "hgcn-checkpoint"
EMBEDDING_FORMAT = "hgcn-embeddings"
CONTAINER_VERSION = 1


class DatasetError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class Sample:
    id: str
    tokens: list[str]
    labels: list[str]
    # (content-token index, label name, intensity in [0, 1])
    annotations: list[tuple[int, str, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        obj = {"id": self.id, "tokens": self.tokens, "labels": self.labels}
        if self.annotations:
            obj["annotations"] = [[i, name, x] for i, name, x in self.annotations]
        return obj


def _parse_sample(obj: dict, label_set, lineno: int) -> Sample:
    if "id" not in obj:
        raise DatasetError(f"line {lineno}: missing 'id'")
    if "tokens" in obj:
        tokens = obj["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise DatasetError(f"line {lineno}: 'tokens' must be a list of strings")
    elif "text" in obj:
        tokens = obj["text"].split()
    else:
        raise DatasetError(f"line {lineno}: need 'tokens' or 'text'")
    labels = obj.get("labels", [])
    for name in labels:
        if label_set is not None and name not in label_set:
            raise DatasetError(f"line {lineno}: unknown label {name!r}")
    annotations = []
    for entry in obj.get("annotations", []):
        idx, name, intensity = entry
        if not 0 <= idx < len(tokens):
            raise DatasetError(f"line {lineno}: annotation token index {idx} out of range")
        if label_set is not None and name not in label_set:
            raise DatasetError(f"line {lineno}: unknown annotation label {name!r}")
        if not 0.0 <= intensity <= 1.0:
            raise DatasetError(f"line {lineno}: intensity {intensity} outside [0, 1]")
        annotations.append((int(idx), str(name), float(intensity)))
    return Sample(id=str(obj["id"]), tokens=list(tokens), labels=list(labels),
                  annotations=annotations)


def load_dataset(path, label_names=None) -> list[Sample]:
    """Parse a JSON-lines dataset, validating labels against the declared set."""
    label_set = set(label_names) if label_names is not None else None
    samples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"line {lineno}: malformed JSON ({e.msg})") from e
            samples.append(_parse_sample(obj, label_set, lineno))
    return samples


def save_dataset(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


# --- tensor container ---------------------------------------------------

def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict, fmt: str) -> None:
    header = {
        "format": fmt,
        "version": CONTAINER_VERSION,
        "meta": meta,
        "tensors": [
            {"name": name, "shape": list(t.shape), "dtype": t.dtype.str}
            for name, t in tensors.items()
        ],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
        for t in tensors.values():
            f.write(np.ascontiguousarray(t).astype(t.dtype.newbyteorder("<")).tobytes())


def load_tensors(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        header_line = f.readline()
        payload = f.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt container header") from e
    if header.get("version") != CONTAINER_VERSION:
        raise CheckpointError(
            f"{path}: container version {header.get('version')!r}, "
            f"expected {CONTAINER_VERSION}")
    tensors = {}
    offset = 0
    for spec in header.get("tensors", []):
        shape = tuple(spec["shape"])
        dtype = np.dtype(spec["dtype"])
        nbytes = int(np.prod(shape)) * dtype.itemsize
        if offset + nbytes > len(payload):
            raise CheckpointError(
                f"{path}: payload truncated for tensor {spec['name']!r}")
        tensors[spec["name"]] = np.frombuffer(
            payload[offset:offset + nbytes], dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")
    meta = {"format": header.get("format"), **header.get("meta", {})}
    return meta, tensors


# --- checkpoints --------------------------------------------------------

def save_checkpoint(params: ModelParams, cfg: ModelConfig, path,
                    vocab: Vocabulary | None = None, label_names=None) -> None:
    meta = {"config": cfg.to_dict()}
    if vocab is not None:
        meta["vocab"] = vocab.to_dict()
    if label_names is not None:
        meta["label_names"] = list(label_names)
    save_tensors(path, params.named_tensors(), meta, CHECKPOINT_FORMAT)


def load_checkpoint(path):
    """Returns (params, cfg, vocab_or_None, label_names_or_None)."""
    meta, tensors = load_tensors(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a model checkpoint")
    if "config" not in meta:
        raise CheckpointError(f"{path}: checkpoint header missing config")
    cfg = ModelConfig.from_dict(meta["config"])
    params = ModelParams.from_named_tensors(tensors, cfg)
    vocab = Vocabulary.from_dict(meta["vocab"]) if "vocab" in meta else None
    return params, cfg, vocab, meta.get("label_names")


def save_embeddings(path, vectors: dict[str, np.ndarray]) -> None:
    save_tensors(path, vectors, {}, EMBEDDING_FORMAT)
