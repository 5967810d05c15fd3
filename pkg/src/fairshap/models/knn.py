"""Exact Euclidean k-nearest-neighbour search with deterministic tie-breaking."""

from __future__ import annotations

import numpy as np

from ..errors import ModelError


class KnnIndex:
    """Brute-force index over a fixed reference matrix.

    Ties in distance go to the lower reference row index. A query that is
    itself in the reference set finds itself at distance zero.
    """

    def __init__(self, points, k: int):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] == 0:
            raise ModelError("reference points must be a non-empty 2-D matrix")
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
            raise ModelError(f"k must be a positive integer, got {k!r}")
        if k > points.shape[0]:
            raise ModelError(f"k={k} exceeds the {points.shape[0]} reference points")
        self.points = points
        self.k = int(k)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def query_many(self, Q, chunk_bytes: int = 64 * 2**20) -> np.ndarray:
        """Neighbour indices for every row of ``Q``, shape ``(len(Q), k)``."""
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[1] != self.dim:
            raise ModelError(f"query dimension {Q.shape[-1]} does not match index dimension {self.dim}")
        n_ref = self.points.shape[0]
        step = max(1, chunk_bytes // (8 * n_ref * max(1, self.dim)))
        out = np.empty((Q.shape[0], self.k), dtype=np.int64)
        for start in range(0, Q.shape[0], step):
            block = Q[start : start + step]
            # explicit differences keep equal distances bit-identical
            d = ((block[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
            out[start : start + step] = np.argsort(d, axis=1, kind="stable")[:, : self.k]
        return out


def knn_query(index: KnnIndex, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.ndim != 1:
        raise ModelError("knn_query takes a single point; use KnnIndex.query_many for batches")
    return index.query_many(point[None, :])[0]
