"""RBF-kernel segment cost over one-hot encoded categorical sequences.

The segment cost is c(a, b) = (b-a) - (1/(b-a)) * sum_{a<=i,j<b} K_ij with
K_ij = exp(-gamma * ||y_i - y_j||^2). For one-hot points the squared
distance is 0 for equal labels and 2 otherwise, so K takes two values and
the double sum collapses to per-label prefix counts: cost queries are O(k)
instead of O(len^2). The Gram-matrix and naive routes are kept for
verification; all three agree to floating-point accuracy.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Union

import numpy as np

__all__ = [
    "EncodedSequence",
    "encode",
    "median_gamma",
    "RbfCost",
    "GramRbfCost",
    "naive_rbf_cost",
]


class EncodedSequence:
    """One-hot view of a categorical sequence with labels 1..k."""

    def __init__(self, labels, k: Optional[int] = None):
        arr = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels,
                         dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if k is None:
            k = int(arr.max()) if arr.size else 1
        if k < 1:
            raise ValueError("alphabet size k must be >= 1")
        if arr.size and (arr.min() < 1 or arr.max() > k):
            raise ValueError(f"labels must lie in 1..{k}")
        self.labels = arr
        self.k = int(k)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def points(self) -> np.ndarray:
        """n x k one-hot matrix; row i is the indicator of label i."""
        out = np.zeros((self.n, self.k), dtype=np.float64)
        if self.n:
            out[np.arange(self.n), self.labels - 1] = 1.0
        return out

    def label_prefix_counts(self) -> np.ndarray:
        """(n+1) x k matrix; row i counts each label among the first i points."""
        counts = np.zeros((self.n + 1, self.k), dtype=np.int64)
        if self.n:
            onehot = np.zeros((self.n, self.k), dtype=np.int64)
            onehot[np.arange(self.n), self.labels - 1] = 1
            counts[1:] = np.cumsum(onehot, axis=0)
        return counts

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"EncodedSequence(n={self.n}, k={self.k})"


def encode(seq, k: Optional[int] = None) -> EncodedSequence:
    """One-hot encode a ChoiceSequence or a plain iterable of labels."""
    place = getattr(seq, "place", None)
    if place is not None and hasattr(seq, "elements"):
        return EncodedSequence([e.label for e in seq.elements], k=k or place.k)
    return EncodedSequence(seq, k=k)


def median_gamma(enc: EncodedSequence) -> float:
    """Bandwidth by the median heuristic: 1 / median pairwise squared
    distance over all unordered point pairs; 1.0 when the median is zero
    (constant sequence)."""
    n = enc.n
    if n < 2:
        raise ValueError("median_gamma needs at least two points")
    _, counts = np.unique(enc.labels, return_counts=True)
    same = int((counts * (counts - 1) // 2).sum())
    total = n * (n - 1) // 2
    diff = total - same
    # distances are 0 (same label) or 2 (different); median as np.median would
    def value_at(i):
        return 0.0 if i < same else 2.0
    if total % 2:
        med = value_at((total - 1) // 2)
    else:
        med = (value_at(total // 2 - 1) + value_at(total // 2)) / 2.0
    return 1.0 / med if med > 0 else 1.0


def resolve_gamma(enc: EncodedSequence, gamma: Optional[float]) -> float:
    if gamma is not None:
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return float(gamma)
    if enc.n < 2:
        return 1.0
    return median_gamma(enc)


class RbfCost:
    """O(k)-per-query RBF segment cost for one-hot data.

    With w = exp(-2*gamma) and c_l the label counts inside [a, b):
    sum K = sum_l c_l^2 + w * (L^2 - sum_l c_l^2), hence
    cost = (1 - w) * (L - sum_l c_l^2 / L). Zero iff the segment is
    constant.
    """

    def __init__(self, enc: EncodedSequence, gamma: Optional[float] = None):
        self.n = enc.n
        self.gamma = resolve_gamma(enc, gamma)
        self._w = math.exp(-2.0 * self.gamma)
        self._prefix = enc.label_prefix_counts()

    def cost(self, a: int, b: int) -> float:
        if not 0 <= a < b <= self.n:
            raise ValueError(f"invalid segment [{a}, {b}) for n={self.n}")
        diff = self._prefix[b] - self._prefix[a]
        sumsq = float(np.dot(diff, diff))
        length = float(b - a)
        return (1.0 - self._w) * (length - sumsq / length)

    def cost_many(self, starts: np.ndarray, b: int) -> np.ndarray:
        """Vector of cost(s, b) for every start index in ``starts``."""
        diff = self._prefix[b] - self._prefix[starts]
        sumsq = np.einsum("ij,ij->i", diff, diff).astype(np.float64)
        length = (b - starts).astype(np.float64)
        return (1.0 - self._w) * (length - sumsq / length)


class GramRbfCost:
    """Reference cost via a precomputed Gram matrix (O(n^2) memory).

    Works for arbitrary point vectors, not only one-hot rows; used to
    cross-check RbfCost and in the exact-search oracle tests.
    """

    def __init__(self, points: np.ndarray, gamma: float):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        self.n = points.shape[0]
        self.gamma = float(gamma)
        sq = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        gram = np.exp(-self.gamma * sq)
        self._block = np.zeros((self.n + 1, self.n + 1))
        self._block[1:, 1:] = gram.cumsum(axis=0).cumsum(axis=1)

    def cost(self, a: int, b: int) -> float:
        if not 0 <= a < b <= self.n:
            raise ValueError(f"invalid segment [{a}, {b}) for n={self.n}")
        s = (self._block[b, b] - self._block[a, b]
             - self._block[b, a] + self._block[a, a])
        length = float(b - a)
        return length - s / length

    def cost_many(self, starts: np.ndarray, b: int) -> np.ndarray:
        s = (self._block[b, b] - self._block[starts, b]
             - self._block[b, starts] + self._block[starts, starts])
        length = (b - starts).astype(np.float64)
        return length - s / length


def naive_rbf_cost(points: np.ndarray, gamma: float, a: int, b: int) -> float:
    """Direct double loop over the kernel sum; test reference only."""
    points = np.asarray(points, dtype=np.float64)
    total = 0.0
    for i in range(a, b):
        for j in range(a, b):
            d2 = float(((points[i] - points[j]) ** 2).sum())
            total += math.exp(-gamma * d2)
    length = float(b - a)
    return length - total / length
