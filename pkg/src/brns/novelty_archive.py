"""Archive-based novelty: mean distance to the k nearest neighbours in
``archive ∪ current behaviors``, with a bounded, randomly grown archive."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_behaviors
from .core import as_generator

_CHUNK = 1 << 22  # distance-matrix entries per block


def euclidean_distances(A, B):
    """Exact pairwise Euclidean distances.

    Squared differences are accumulated dimension by dimension so every
    entry equals the plain sequential ``sqrt(sum((a_i - b_i)**2))``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    acc = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = A[:, j, None] - B[None, :, j]
        acc += diff * diff
    return np.sqrt(acc)


def _mean_smallest(D, k):
    """Row-wise mean of the ``k`` smallest finite entries (``inf`` if none)."""
    n, m = D.shape
    if m == 0:
        return np.full(n, np.inf)
    kk = min(k, m)
    part = np.partition(D, kk - 1, axis=1)[:, :kk] if kk < m else D
    part = np.sort(part, axis=1)[:, :kk]
    finite = np.isfinite(part)
    counts = finite.sum(axis=1)
    sums = np.cumsum(np.where(finite, part, 0.0), axis=1)
    out = np.full(n, np.inf)
    ok = counts > 0
    out[ok] = sums[ok, counts[ok] - 1] / counts[ok]
    return out


def knn_scores(X, reference, k, self_index=None):
    """Novelty of each row of ``X`` against ``reference``.

    ``self_index[i]`` (or -1) marks the reference row that *is* ``X[i]`` and
    must be left out of its own neighbour set.
    """
    X = np.asarray(X, dtype=float)
    reference = np.asarray(reference, dtype=float)
    n, m = X.shape[0], reference.shape[0]
    out = np.empty(n)
    step = max(1, _CHUNK // max(m, 1))
    for start in range(0, n, step):
        stop = min(n, start + step)
        D = euclidean_distances(X[start:stop], reference)
        if self_index is not None:
            rows = np.arange(stop - start)
            idx = np.asarray(self_index[start:stop])
            mask = idx >= 0
            D[rows[mask], idx[mask]] = np.inf
        out[start:stop] = _mean_smallest(D, k)
    return out


def knn_novelty(b, reference, k, self_index=-1):
    """Mean distance from ``b`` to its ``k`` nearest neighbours in ``reference``.

    With fewer than ``k`` neighbours available the mean runs over all of
    them; an empty reference set gives ``inf``.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    reference = np.asarray(reference, dtype=float).reshape(-1, b.shape[1])
    return float(knn_scores(b, reference, k, [self_index])[0])


def archive_novelty_all(behaviors, archive_entries, k):
    """Score every current behavior against ``archive ∪ behaviors`` (self excluded)."""
    behaviors = np.asarray(behaviors, dtype=float)
    archive_entries = np.asarray(archive_entries, dtype=float).reshape(-1, behaviors.shape[1])
    reference = np.vstack([archive_entries, behaviors])
    self_index = archive_entries.shape[0] + np.arange(behaviors.shape[0])
    return knn_scores(behaviors, reference, k, self_index)


@dataclass
class Archive:
    entries: np.ndarray
    max_size: int = 10000
    growth_rate: int = 6
    add_policy: str = "random"
    prune_policy: str = "random"

    def __len__(self):
        return self.entries.shape[0]


def archive_maintain(archive, candidates, rng, novelties=None):
    """Add up to ``growth_rate`` candidates, then evict down to ``max_size``.

    Returns ``(new_archive, added, removed)`` where ``removed`` holds sorted
    row indices into the post-addition entries.
    """
    candidates = np.asarray(candidates, dtype=float).reshape(-1, archive.entries.shape[1])
    n_add = min(archive.growth_rate, candidates.shape[0])
    if archive.add_policy == "random":
        pick = np.sort(rng.choice(candidates.shape[0], size=n_add, replace=False))
    elif archive.add_policy == "most_novel":
        if novelties is None:
            raise ValueError("most_novel add policy needs novelty scores")
        pick = np.argsort(-np.asarray(novelties), kind="stable")[:n_add]
    else:
        raise ValueError(f"unknown add policy {archive.add_policy!r}")
    added = candidates[pick]
    entries = np.vstack([archive.entries, added])
    removed = np.zeros(0, dtype=int)
    excess = entries.shape[0] - archive.max_size
    if excess > 0:
        if archive.prune_policy != "random":
            raise ValueError(f"unknown prune policy {archive.prune_policy!r}")
        removed = np.sort(rng.choice(entries.shape[0], size=excess, replace=False))
        entries = np.delete(entries, removed, axis=0)
    return replace(archive, entries=entries), added, removed


class ArchiveNovelty(BaseEstimator):
    """Classic k-NN novelty over a bounded archive.

    ``score_samples(X)`` treats ``X`` as the current candidate set: each row
    is scored against ``archive ∪ X`` without itself. ``partial_fit(X)``
    performs one generation of archive maintenance with ``X`` as candidates.
    """

    def __init__(self, k=15, max_size=10000, growth_rate=6, add_policy="random",
                 prune_policy="random", random_state=None):
        self.k = k
        self.max_size = max_size
        self.growth_rate = growth_rate
        self.add_policy = add_policy
        self.prune_policy = prune_policy
        self.random_state = random_state

    def initialize(self, n_features):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        self.n_features_in_ = int(n_features)
        self.archive_ = Archive(np.zeros((0, self.n_features_in_)), self.max_size, self.growth_rate,
                                self.add_policy, self.prune_policy)
        self._rng = as_generator(self.random_state, "archive")
        self.last_added_ = np.zeros((0, self.n_features_in_))
        self.last_removed_ = np.zeros(0, dtype=int)
        return self

    def fit(self, X, y=None):
        X = check_behaviors(X)
        self.initialize(X.shape[1])
        return self.partial_fit(X)

    def partial_fit(self, X, y=None, novelty=None):
        if not hasattr(self, "archive_"):
            self.initialize(check_behaviors(X).shape[1])
        X = check_behaviors(X, self.n_features_in_, allow_empty=True)
        if self.add_policy == "most_novel" and novelty is None and len(X):
            novelty = self.score_samples(X)
        self.archive_, self.last_added_, self.last_removed_ = archive_maintain(
            self.archive_, X, self._rng, novelty)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "archive_")
        X = check_behaviors(X, self.n_features_in_)
        return archive_novelty_all(X, self.archive_.entries, self.k)

    def snapshot(self):
        return None

    def frozen_state(self):
        return None
