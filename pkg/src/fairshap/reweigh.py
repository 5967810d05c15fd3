"""Reweighing: per-(group, label) instance weights that make the sensitive
attribute and the target independent under the weighted distribution.

Each cell ``(a, y)`` gets ``P(A=a) * P(Y=y) / P(A=a, Y=y)`` with all
probabilities estimated by counting on the data passed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ReweighError

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True, eq=False)
class ReweighWeights:
    cell_weights: dict  # (a, y) -> weight
    per_row: np.ndarray
    cell_counts: dict  # (a, y) -> count

    def to_dict(self) -> dict:
        return {
            "cells": {f"a={a},y={y}": self.cell_weights[(a, y)] for a, y in CELLS},
            "counts": {f"a={a},y={y}": self.cell_counts[(a, y)] for a, y in CELLS},
        }


def cell_weights_from_counts(counts: dict) -> dict:
    """Weights from integer cell counts; one division per cell keeps hand cases exact."""
    for cell in CELLS:
        if counts.get(cell, 0) <= 0:
            a, y = cell
            raise ReweighError(
                f"cell (sensitive={a}, target={y}) is empty; reweighing weights are undefined"
            )
    n = sum(counts[c] for c in CELLS)
    n_a = {a: counts[(a, 0)] + counts[(a, 1)] for a in (0, 1)}
    n_y = {y: counts[(0, y)] + counts[(1, y)] for y in (0, 1)}
    return {(a, y): (n_a[a] * n_y[y]) / (n * counts[(a, y)]) for a, y in CELLS}


def compute_weights(train: Dataset) -> ReweighWeights:
    a = train.sensitive
    y = train.target
    counts = {(ca, cy): int(np.sum((a == ca) & (y == cy))) for ca, cy in CELLS}
    cells = cell_weights_from_counts(counts)
    table = np.array([[cells[(0, 0)], cells[(0, 1)]], [cells[(1, 0)], cells[(1, 1)]]])
    per_row = table[a, y]
    per_row.setflags(write=False)
    return ReweighWeights(cells, per_row, counts)


def apply_weights(dataset: Dataset, weights) -> Dataset:
    """Replace the dataset's weight column; features are left untouched."""
    w = weights.per_row if isinstance(weights, ReweighWeights) else np.asarray(weights, dtype=float)
    if w.shape != (dataset.n_rows,):
        raise ReweighError(f"{len(w)} weights for {dataset.n_rows} rows")
    return dataset.with_weights(w)


def weighted_favorable_rates(dataset: Dataset) -> tuple[float, float]:
    """Weighted ``P(Y=1 | A=0)`` and ``P(Y=1 | A=1)``."""
    rates = []
    for g in (0, 1):
        in_g = dataset.sensitive == g
        w = dataset.weights[in_g]
        rates.append(float(np.dot(w, dataset.target[in_g]) / w.sum()))
    return rates[0], rates[1]
