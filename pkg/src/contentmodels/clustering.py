"""Complete-link agglomerative clustering of sentences over bigram features."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator, ClusterMixin

from .corpus import BOS, Sentence

MAX_DENSE_SENTENCES = 4000

FeatureVector = Counter


def bigram_features(sentence: Sentence | Sequence[str]) -> Counter:
    """Counts of adjacent token pairs, including the ``(BOS, w1)`` pair."""
    tokens = sentence.tokens if isinstance(sentence, Sentence) else tuple(sentence)
    if not tokens:
        raise ValueError("cannot featurize an empty sentence")
    seq = (BOS,) + tuple(tokens)
    return Counter(zip(seq[:-1], seq[1:]))


def cosine(u: Counter, v: Counter) -> float:
    nu = math.sqrt(sum(c * c for c in u.values()))
    nv = math.sqrt(sum(c * c for c in v.values()))
    if nu == 0 or nv == 0:
        raise ValueError("cosine undefined for a zero-norm vector")
    if len(u) > len(v):
        u, v = v, u
    dot = sum(c * v[key] for key, c in u.items() if key in v)
    return min(1.0, dot / (nu * nv))


def similarity_matrix(sentences: Sequence[Sentence | Sequence[str]]) -> np.ndarray:
    """Dense pairwise cosine similarity of bigram feature vectors."""
    n = len(sentences)
    if n > MAX_DENSE_SENTENCES:
        raise ValueError(
            f"{n} sentences exceed the dense similarity limit of {MAX_DENSE_SENTENCES}; "
            "train on fewer documents or split the collection"
        )
    feats = [bigram_features(s) for s in sentences]
    columns = {key: j for j, key in enumerate(sorted({k for f in feats for k in f}))}
    rows, cols, vals = [], [], []
    for i, f in enumerate(feats):
        for key in sorted(f):
            rows.append(i)
            cols.append(columns[key])
            vals.append(f[key])
    X = sparse.csr_matrix((vals, (rows, cols)), shape=(n, len(columns)), dtype=float)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    X = sparse.diags(1.0 / norms) @ X
    S = (X @ X.T).toarray()
    np.clip(S, 0.0, 1.0, out=S)
    np.fill_diagonal(S, 1.0)
    return S


@dataclass(frozen=True)
class Clustering:
    """Partition of sentences into ``m`` dense cluster indices.

    When ``etcetera_index`` is set it is always ``m - 1``; that cluster may be
    empty.
    """

    assignments: tuple[int, ...]
    m: int
    etcetera_index: int | None = None
    merge_heights: tuple[float, ...] = ()

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("a clustering needs at least one cluster")
        if self.etcetera_index is not None and self.etcetera_index != self.m - 1:
            raise ValueError("the etcetera cluster must be the last one")
        if any(a < 0 or a >= self.m for a in self.assignments):
            raise ValueError("cluster index out of range")

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self.assignments, dtype=np.int64)

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.m).tolist()

    def members(self, cluster: int) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a == cluster]

    @property
    def n_content(self) -> int:
        return self.m - 1 if self.etcetera_index is not None else self.m


def _relabel_by_first_member(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters 0..k-1 in order of their smallest member."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def complete_link_labels(S: np.ndarray, k: int) -> tuple[np.ndarray, list[float]]:
    """Agglomerate until ``k`` clusters remain under complete linkage.

    Clusters are identified by their smallest member index. At each step the
    pair with the highest linkage similarity is merged; among equal
    similarities the lexicographically smallest ``(low id, high id)`` pair
    wins. Returns each item's cluster id and the similarity of every merge.
    """
    n = S.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and the number of sentences ({n})")
    S = np.array(S, dtype=float, copy=True)
    np.fill_diagonal(S, -np.inf)
    owner = np.arange(n)
    best = np.full(n, -np.inf)
    best_j = np.full(n, -1)

    def refresh(i):
        seg = S[i, i + 1:]
        if seg.size == 0:
            best[i], best_j[i] = -np.inf, -1
            return
        j = int(np.argmax(seg))
        best[i] = seg[j]
        best_j[i] = i + 1 + j if np.isfinite(seg[j]) else -1

    for i in range(n):
        refresh(i)

    heights = []
    for _ in range(n - k):
        a = int(np.argmax(best))
        b = int(best_j[a])
        heights.append(float(best[a]))
        merged = np.minimum(S[a], S[b])
        S[a, :] = merged
        S[:, a] = merged
        S[a, a] = -np.inf
        S[b, :] = -np.inf
        S[:, b] = -np.inf
        best[b], best_j[b] = -np.inf, -1
        owner[owner == b] = a
        refresh(a)
        stale = np.nonzero((best_j == a) | (best_j == b))[0]
        for r in stale:
            refresh(int(r))
    return owner, heights


def complete_link_cluster(sentences: Sequence[Sentence | Sequence[str]], k: int,
                          similarities: np.ndarray | None = None) -> Clustering:
    """Complete-link clustering of sentences into ``k`` clusters (no etcetera)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(sentences):
        raise ValueError(f"k={k} exceeds the number of sentences ({len(sentences)})")
    S = similarity_matrix(sentences) if similarities is None else similarities
    owner, heights = complete_link_labels(S, k)
    labels = _relabel_by_first_member(owner)
    return Clustering(tuple(int(x) for x in labels), k, None, tuple(heights))


def merge_small_clusters(clustering: Clustering, T: int) -> Clustering:
    """Move every cluster smaller than ``T`` into a new, last etcetera cluster."""
    if clustering.etcetera_index is not None:
        raise ValueError("clustering already has an etcetera cluster")
    sizes = clustering.sizes()
    surviving = [c for c in range(clustering.m) if sizes[c] >= T]
    if not surviving:
        raise ValueError("no content states: every cluster has fewer than T sentences")
    etc = len(surviving)
    remap = {c: i for i, c in enumerate(surviving)}
    labels = tuple(remap.get(a, etc) for a in clustering.assignments)
    return Clustering(labels, etc + 1, etc, clustering.merge_heights)


def write_assignments_tsv(path: str | Path, sentences: Sequence[Sentence], clustering: Clustering) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("doc_id\tindex\tcluster_id\n")
        for s, c in zip(sentences, clustering.assignments):
            fh.write(f"{s.doc_id}\t{s.index}\t{c}\n")


class CompleteLinkClustering(ClusterMixin, BaseEstimator):
    """Estimator wrapper: ``fit(sentences)`` sets ``labels_`` and ``clustering_``.

    Parameters
    ----------
    n_clusters : int
        Number of clusters produced by complete-link agglomeration.
    min_cluster_size : int or None
        If given, clusters smaller than this are pooled into a trailing
        etcetera cluster.
    """

    def __init__(self, n_clusters=10, min_cluster_size=None):
        self.n_clusters = n_clusters
        self.min_cluster_size = min_cluster_size

    def fit(self, X, y=None):
        clustering = complete_link_cluster(list(X), self.n_clusters)
        if self.min_cluster_size is not None:
            clustering = merge_small_clusters(clustering, self.min_cluster_size)
        self.clustering_ = clustering
        self.labels_ = clustering.labels
        return self
