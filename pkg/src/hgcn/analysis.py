"""Explanation and label-correlation analyses.

The final token-label edge block, globally normalized to sum 1, is the
per-sample explanation artifact; its quality is measured as MSE against
a keyword-intensity golden matrix. Label structure is inspected two
ways: Pearson correlation over binary prediction vectors and cosine
similarity over final label-node embeddings.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class AttributionMatrix:
    """m x n token-label weights, globally normalized to total 1."""

    values: np.ndarray
    tokens: list[str]
    labels: list[str]


def build_attribution(final_edges: np.ndarray, tokens, labels) -> AttributionMatrix:
    """Normalize the final edge block so all values sum to 1.

    An all-zero block (untrainable degenerate case) falls back to the
    uniform matrix with a warning rather than dividing by zero.
    """
    values = np.asarray(final_edges, dtype=float)
    total = values.sum()
    if total > 0:
        values = values / total
    else:
        warnings.warn("all-zero edge block; attribution falls back to uniform")
        values = np.full_like(values, 1.0 / values.size)
    return AttributionMatrix(values=values, tokens=list(tokens), labels=list(labels))


def build_golden(annotations, m: int, n: int, row_offset: int = 1) -> np.ndarray:
    """Arrange keyword-intensity annotations as an m x n matrix.

    `annotations` holds (token_index, label_index, intensity) triples
    indexed over the sample's content tokens; `row_offset` maps them onto
    token-node rows (the sequence-start marker occupies row 0). Rows for
    non-keyword tokens stay zero and the matrix is deliberately not
    normalized. Annotations past the truncation boundary are dropped.
    """
    golden = np.zeros((m, n))
    for tok_idx, label_idx, intensity in annotations:
        row = tok_idx + row_offset
        if not 0.0 <= intensity <= 1.0:
            raise ValueError(f"intensity {intensity} outside [0, 1]")
        if row < m - 1:  # last row is the sequence-end marker
            golden[row, label_idx] = intensity
    return golden


def attribution_mse(pred: np.ndarray, golden: np.ndarray) -> float:
    """Mean squared elementwise difference between the two matrices."""
    pred = np.asarray(pred, dtype=float)
    golden = np.asarray(golden, dtype=float)
    if pred.shape != golden.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {golden.shape}")
    return float(np.mean((pred - golden) ** 2))


def pearson_matrix(pred_sets, n: int) -> np.ndarray:
    """Pearson correlation between per-label binary prediction vectors.

    A constant vector (a label always or never predicted) has no defined
    correlation; by convention it gets 0 off-diagonal and 1 on the
    diagonal.
    """
    if not pred_sets:
        raise ValueError("empty prediction list")
    indicators = np.zeros((n, len(pred_sets)))
    for i, labels in enumerate(pred_sets):
        for j in labels:
            indicators[j, i] = 1.0
    centered = indicators - indicators.mean(axis=1, keepdims=True)
    std = np.sqrt(np.sum(centered ** 2, axis=1))
    ok = std > 0
    safe = np.where(ok, std, 1.0)
    corr = (centered @ centered.T) / np.outer(safe, safe)
    corr = np.where(np.outer(ok, ok), corr, 0.0)
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def label_cosine_matrix(x_label_last: np.ndarray) -> np.ndarray:
    """Raw cosine similarity between final label-node embeddings, in [-1, 1]."""
    x = np.asarray(x_label_last, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    ok = norms > 0
    safe = np.where(ok, norms, 1.0)
    cos = (x @ x.T) / np.outer(safe, safe)
    cos = np.where(np.outer(ok, ok), cos, 0.0)
    np.fill_diagonal(cos, 1.0)
    return np.clip(cos, -1.0, 1.0)


def render_heatmap(matrix: np.ndarray, row_names, col_names, path) -> None:
    """Write `<path>.csv` (exact values) and `<path>.svg` (brightness heatmap).

    The SVG embeds each cell's value in a data-value attribute so tests
    can read it back; fill brightness is linear in the value.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape != (len(row_names), len(col_names)):
        raise ValueError(
            f"matrix {matrix.shape} vs {len(row_names)} rows / {len(col_names)} cols")

    path = str(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([""] + list(col_names))
    for name, row in zip(row_names, matrix):
        writer.writerow([name] + [repr(float(v)) for v in row])
    with open(path + ".csv", "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())

    lo = min(0.0, float(matrix.min()))
    hi = float(matrix.max())
    span = hi - lo
    cell = 24
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{matrix.shape[1] * cell}" height="{matrix.shape[0] * cell}">'
    ]
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            v = float(matrix[i, j])
            level = int(round(255 * (v - lo) / span)) if span > 0 else 0
            parts.append(
                f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" height="{cell}" '
                f'fill="rgb({level},{level},{level})" data-value="{v!r}"/>')
    parts.append("</svg>")
    with open(path + ".svg", "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(parts) + "\n")


def parse_heatmap_csv(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read back a heatmap CSV written by render_heatmap."""
    with open(str(path), encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    col_names = rows[0][1:]
    row_names = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return values, row_names, col_names
