"""Multi-index sets: monotonicity, margins, envelopes and bulk selection."""
from __future__ import annotations

import numpy as np


class IndexSetError(ValueError):
    pass


def as_index_array(indices, m=None) -> np.ndarray:
    a = np.asarray(indices, dtype=np.int64)
    if a.ndim == 1:
        a = a.reshape(-1, m if m is not None else a.size)
    if a.size and a.min() < 0:
        raise IndexSetError("multi-indices must be nonnegative")
    return a


def sort_indices(a: np.ndarray) -> np.ndarray:
    """Lexicographic order on rows (first component most significant)."""
    if a.shape[0] == 0:
        return a
    order = np.lexsort(a.T[::-1])
    return a[order]


class MultiIndexSet:
    """Ordered set of multi-indices in N^m (rows of an integer array)."""

    def __init__(self, indices, m=None):
        a = as_index_array(indices, m)
        self.array = a
        self.m = a.shape[1]
        self._lookup = {tuple(r): k for k, r in enumerate(a.tolist())}
        if len(self._lookup) != a.shape[0]:
            raise IndexSetError("duplicate multi-indices")

    @classmethod
    def zero(cls, m):
        return cls(np.zeros((1, m), dtype=np.int64))

    def __len__(self):
        return self.array.shape[0]

    def __iter__(self):
        return iter(self._lookup)

    def __contains__(self, alpha):
        return tuple(int(v) for v in alpha) in self._lookup

    def position(self, alpha):
        return self._lookup[tuple(int(v) for v in alpha)]

    def positions(self, other) -> np.ndarray:
        """Positions of the rows of ``other`` (all must be present)."""
        return np.array([self._lookup[t] for t in map(tuple, np.asarray(other).tolist())],
                        dtype=np.int64)

    def to_set(self):
        return set(self._lookup)

    def union(self, other) -> "MultiIndexSet":
        b = other.array if isinstance(other, MultiIndexSet) else as_index_array(other, self.m)
        new = [r for r in b.tolist() if tuple(r) not in self._lookup]
        if not new:
            return self
        return MultiIndexSet(np.vstack([self.array, np.array(new, dtype=np.int64)]))

    def sorted(self) -> "MultiIndexSet":
        return MultiIndexSet(sort_indices(self.array))

    def max_degrees(self) -> np.ndarray:
        return self.array.max(axis=0) if len(self) else np.zeros(self.m, dtype=np.int64)

    def __eq__(self, other):
        return isinstance(other, MultiIndexSet) and self.to_set() == other.to_set()

    def __repr__(self):
        return f"MultiIndexSet(m={self.m}, n={len(self)})"


def _as_set(A):
    return A if isinstance(A, MultiIndexSet) else MultiIndexSet(A)


def is_monotone(A) -> bool:
    A = _as_set(A)
    s = A.to_set()
    for alpha in s:
        for i, ai in enumerate(alpha):
            if ai > 0:
                beta = alpha[:i] + (ai - 1,) + alpha[i + 1:]
                if beta not in s:
                    return False
    return True


def _require_monotone(A):
    if len(A) == 0:
        raise IndexSetError("empty index set")
    if not is_monotone(A):
        raise IndexSetError("index set is not monotone")


def margin(A) -> MultiIndexSet:
    """Indices outside ``A`` having at least one backward neighbour in ``A``."""
    A = _as_set(A)
    _require_monotone(A)
    s = A.to_set()
    cand = set()
    for alpha in s:
        for i in range(A.m):
            beta = alpha[:i] + (alpha[i] + 1,) + alpha[i + 1:]
            if beta not in s:
                cand.add(beta)
    return MultiIndexSet(sort_indices(np.array(sorted(cand), dtype=np.int64).reshape(-1, A.m)))


def reduced_margin(A) -> MultiIndexSet:
    """Margin indices all of whose backward neighbours lie in ``A``."""
    A = _as_set(A)
    M = margin(A)
    s = A.to_set()
    keep = []
    for alpha in M.array.tolist():
        ok = True
        for i, ai in enumerate(alpha):
            if ai > 0 and tuple(alpha[:i] + [ai - 1] + alpha[i + 1:]) not in s:
                ok = False
                break
        if ok:
            keep.append(alpha)
    return MultiIndexSet(np.array(keep, dtype=np.int64).reshape(-1, A.m))


def monotone_envelope(values, A) -> np.ndarray:
    """``env[a] = max(values[b] for b in A if b >= a)`` componentwise."""
    A = _as_set(A)
    _require_monotone(A)
    values = np.asarray(values, dtype=float)
    a = A.array
    env = np.empty(len(A))
    for k in range(len(A)):
        dominated = np.all(a >= a[k], axis=1)
        env[k] = values[dominated].max()
    return env


def select_bulk(M, norms2, theta) -> MultiIndexSet:
    """Smallest subset of ``M`` carrying a ``theta`` share of ``sum(norms2)``.

    Candidates are taken in decreasing order of squared coefficient norm,
    ties in lexicographic order. At least one index is always returned.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    M = _as_set(M)
    if len(M) == 0:
        raise IndexSetError("empty candidate set")
    norms2 = np.asarray(norms2, dtype=float)
    a = M.array
    # primary key: -norm2; secondary: lexicographic index
    order = np.lexsort(tuple(a.T[::-1]) + (-norms2,))
    total = norms2.sum()
    if total <= 0.0:
        return MultiIndexSet(a[order[:1]])
    if theta >= 1.0:
        keep = order[norms2[order] > 0]
        return MultiIndexSet(a[keep])
    csum = np.cumsum(norms2[order])
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    n = max(1, min(n, len(order)))
    return MultiIndexSet(a[order[:n]])
