"""Model induction: clustering, parameter estimation and Viterbi re-estimation."""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .clustering import Clustering, complete_link_cluster, merge_small_clusters
from .content_model import ContentModel, build_model, forward_batch, viterbi_path
from .corpus import Corpus, Document, Vocabulary, build_vocabulary
from .validation import INTEGRAL, REAL, check_documents

logger = logging.getLogger(__name__)

MERGE_TARGETS = ("etcetera", "smallest")


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Free parameters of model induction.

    ``n_states``, when set, replaces the cluster-size threshold: the initial
    clusters are shrunk to exactly that many states (etcetera included) by
    repeatedly merging the smallest one.
    """

    k: int = 20
    T: int = 4
    delta1: float = 1e-6
    delta2: float = 0.01
    max_iterations: int = 20
    end_state: bool = True
    n_states: int | None = None
    merge_into: str = "etcetera"

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, INTEGRAL) or self.k < 2:
            raise ValueError("k must be ≥ 2")
        if isinstance(self.T, bool) or not isinstance(self.T, INTEGRAL) or self.T < 1:
            raise ValueError("T must be ≥ 1")
        if not isinstance(self.delta1, REAL) or not self.delta1 > 0:
            raise ValueError("delta1 must be > 0")
        if not isinstance(self.delta2, REAL) or not self.delta2 > 0:
            raise ValueError("delta2 must be > 0")
        if not isinstance(self.max_iterations, INTEGRAL) or self.max_iterations < 1:
            raise ValueError("max_iterations must be ≥ 1")
        if self.n_states is not None and self.n_states < 2:
            raise ValueError("n_states must be ≥ 2")
        if self.merge_into not in MERGE_TARGETS:
            raise ValueError(f"merge_into must be one of {MERGE_TARGETS}")

    def hyperparams(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: ContentModel
    clustering: Clustering
    iterations: int
    converged: bool
    loglik_history: list[float] = field(default_factory=list)

    def report(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "loglik": self.loglik_history,
            "final_m": self.model.m,
            "cluster_sizes": self.clustering.sizes(),
        }


def force_state_count(clustering: Clustering, m_target: int, merge_into: str = "etcetera") -> Clustering:
    """Merge the smallest content clusters until ``m_target`` clusters remain.

    With ``merge_into="etcetera"`` each smallest cluster is absorbed by the
    etcetera cluster; with ``"smallest"`` it is merged into the next smallest
    content cluster. Ties go to the lower cluster index.
    """
    if clustering.etcetera_index is None:
        raise ValueError("force_state_count expects a clustering with an etcetera cluster")
    if m_target < 2:
        raise ValueError("m_target must be ≥ 2")
    if m_target > clustering.m:
        raise ValueError(f"cannot grow {clustering.m} clusters to {m_target}")
    if merge_into not in MERGE_TARGETS:
        raise ValueError(f"merge_into must be one of {MERGE_TARGETS}")
    labels = list(clustering.assignments)
    m = clustering.m
    while m > m_target:
        etc = m - 1
        sizes = np.bincount(labels, minlength=m)
        order = sorted(range(etc), key=lambda c: (sizes[c], c))
        victim = order[0]
        target = etc if merge_into == "etcetera" else order[1]
        labels = [target if lab == victim else lab for lab in labels]
        labels = [lab - 1 if lab > victim else lab for lab in labels]
        m -= 1
    return Clustering(tuple(labels), m, m - 1)


def _compact_states(labels: np.ndarray, m: int) -> tuple[np.ndarray, int]:
    """Retire content states that received no sentences; etcetera stays last."""
    sizes = np.bincount(labels, minlength=m)
    keep = [c for c in range(m - 1) if sizes[c] > 0]
    if not keep:
        raise ValueError("no content states: every sentence was assigned to the insertion state")
    remap = np.full(m, len(keep))
    remap[keep] = np.arange(len(keep))
    return remap[labels], len(keep) + 1


def decode_corpus(model: ContentModel, documents: Sequence[Document]) -> tuple[np.ndarray, float]:
    """Viterbi labels of every sentence (document order) and the corpus log likelihood."""
    labels: list[int] = []
    total = 0.0
    for doc in documents:
        E = model.emission_matrix(doc)
        path, _ = _viterbi(model, E)
        labels.extend(path)
        total += float(_forward(model, E))
    return np.asarray(labels, dtype=np.int64), total


def _viterbi(model, E):
    return viterbi_path(E, model.log_pi, model.logA, model.log_end)


def _forward(model, E):
    return forward_batch(E[None], model.log_pi, model.transitions.matrix, model.log_end)[0]


def estimate_from_clustering(clustering: Clustering, documents: Sequence[Document], vocab: Vocabulary,
                             config: TrainConfig) -> ContentModel:
    return build_model(clustering.assignments, clustering.m, documents, vocab, config.delta1,
                       config.delta2, config.end_state, config.hyperparams())


def viterbi_reestimate(model: ContentModel, corpus: Corpus | Sequence[Document], config: TrainConfig,
                       clustering: Clustering | None = None):
    """Alternate Viterbi re-clustering and re-estimation until the labels stop changing.

    Returns ``(model, iterations_used, clustering, converged, loglik_history)``.
    ``loglik_history[i]`` is the corpus log likelihood under the model that was
    decoded in iteration ``i + 1``.
    """
    docs = check_documents(corpus)
    vocab = model.vocabulary
    prev = None if clustering is None else clustering.labels
    history: list[float] = []
    converged = False
    iterations = 0
    for it in range(1, config.max_iterations + 1):
        iterations = it
        labels, loglik = decode_corpus(model, docs)
        history.append(loglik)
        logger.debug("iteration %d: loglik %.4f, m=%d", it, loglik, model.m)
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        labels, m = _compact_states(labels, model.m)
        clustering = Clustering(tuple(int(x) for x in labels), m, m - 1)
        model = estimate_from_clustering(clustering, docs, vocab, config)
        prev = labels
    if clustering is None:
        clustering = Clustering(tuple(int(x) for x in prev), model.m, model.m - 1)
    if not converged:
        warnings.warn(f"Viterbi re-estimation stopped after {iterations} iterations without stabilizing",
                      ConvergenceWarning, stacklevel=2)
    return model, iterations, clustering, converged, history


def initial_clustering(documents: Sequence[Document], config: TrainConfig) -> Clustering:
    sentences = [s for d in documents for s in d.sentences]
    if config.k > len(sentences):
        raise ValueError(f"k={config.k} exceeds the number of training sentences ({len(sentences)})")
    clustering = complete_link_cluster(sentences, config.k)
    if config.n_states is not None:
        clustering = merge_small_clusters(clustering, 1)
        if config.n_states > clustering.m:
            raise ValueError(f"n_states={config.n_states} exceeds k + 1 = {clustering.m}")
        return force_state_count(clustering, config.n_states, config.merge_into)
    return merge_small_clusters(clustering, config.T)


def build_content_model(corpus: Corpus | Sequence[Document], config: TrainConfig) -> TrainResult:
    """Cluster, estimate and Viterbi re-estimate a content model."""
    docs = check_documents(corpus, min_docs=2)
    vocab = corpus.vocabulary if isinstance(corpus, Corpus) and corpus.vocabulary else build_vocabulary(docs)
    clustering = initial_clustering(docs, config)
    model = estimate_from_clustering(clustering, docs, vocab, config)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model, iterations, clustering, converged, history = viterbi_reestimate(model, docs, config, clustering)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    return TrainResult(model, clustering, iterations, converged, history)


class ContentModelEstimator(BaseEstimator):
    """Induce a content model from unannotated documents.

    Parameters
    ----------
    k : int, default=20
        Number of initial complete-link clusters.
    T : int, default=4
        Clusters with fewer sentences are pooled into the etcetera cluster.
    delta1, delta2 : float
        Additive smoothing of emissions and transitions.
    max_iter : int, default=20
        Cap on Viterbi re-estimation rounds.
    end_state : bool, default=True
        Score the transition into the dummy final state.
    n_states : int or None
        Force exactly this many states instead of using ``T``.
    merge_into : {"etcetera", "smallest"}
        Where clusters go when ``n_states`` forces merges.

    Attributes
    ----------
    model_ : ContentModel
    clustering_ : Clustering
    n_iter_ : int
    converged_ : bool
    loglik_history_ : list of float
    """

    def __init__(self, k=20, T=4, delta1=1e-6, delta2=0.01, max_iter=20, end_state=True,
                 n_states=None, merge_into="etcetera"):
        self.k = k
        self.T = T
        self.delta1 = delta1
        self.delta2 = delta2
        self.max_iter = max_iter
        self.end_state = end_state
        self.n_states = n_states
        self.merge_into = merge_into

    def to_config(self) -> TrainConfig:
        return TrainConfig(self.k, self.T, self.delta1, self.delta2, self.max_iter,
                           self.end_state, self.n_states, self.merge_into)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "ContentModelEstimator":
        return cls(config.k, config.T, config.delta1, config.delta2, config.max_iterations,
                   config.end_state, config.n_states, config.merge_into)

    def fit(self, X, y=None):
        result = build_content_model(X, self.to_config())
        self.model_ = result.model
        self.clustering_ = result.clustering
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.loglik_history_ = result.loglik_history
        self.result_ = result
        return self

    def predict(self, X) -> list[np.ndarray]:
        """Viterbi topic label of every sentence, one array per document."""
        check_is_fitted(self, "model_")
        return [np.asarray(self.model_.viterbi(d)[0]) for d in check_documents(X)]

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return np.array([self.model_.forward_logprob(d) for d in check_documents(X)])

    def score(self, X, y=None) -> float:
        """Mean per-document log likelihood."""
        return float(self.score_samples(X).mean())


# -- parameter search ----------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    k: Sequence[int] = (10, 20, 40, 60, 80, 100)
    T: Sequence[int] = (2, 4, 8)
    delta1: Sequence[float] = (1e-8, 1e-6, 1e-4)
    delta2: Sequence[float] = (1e-4, 1e-2, 0.1)

    def __post_init__(self):
        for name in ("k", "T", "delta1", "delta2"):
            if not len(getattr(self, name)):
                raise ValueError(f"grid for {name} is empty")

    def cells(self):
        return list(itertools.product(self.k, self.T, self.delta1, self.delta2))


def _evaluate_cell(train, dev, base: TrainConfig, cell, cap):
    from .ordering import evaluate_ordering

    k, T, d1, d2 = cell
    row = {"k": k, "T": T, "delta1": d1, "delta2": d2}
    try:
        config = TrainConfig(k, T, d1, d2, base.max_iterations, base.end_state, None, base.merge_into)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            result = build_content_model(train, config)
        report = evaluate_ordering(result.model, dev, cap)
    except ValueError as exc:
        row.update(oso_pred_rate=None, mean_rank=None, mean_tau=None, m=None, error=str(exc))
        return row
    row.update(oso_pred_rate=report.prediction_rate, mean_rank=report.mean_rank,
               mean_tau=report.mean_tau, m=result.model.m, error=None)
    return row


def tune_parameters(train: Corpus, dev: Corpus, grid: GridSpec | None = None, cap=None,
                    base: TrainConfig | None = None, n_jobs: int = 1):
    """Exhaustive grid search maximizing the dev-set OSO prediction rate.

    Ties prefer smaller k, then larger T, then smaller delta1 and delta2.
    Returns the winning :class:`TrainConfig` and one score row per cell.
    """
    if dev is None or len(dev) == 0:
        raise ValueError("the development corpus is empty")
    grid = grid or GridSpec()
    base = base or TrainConfig()
    rows = Parallel(n_jobs=n_jobs)(delayed(_evaluate_cell)(train, dev, base, cell, cap) for cell in grid.cells())
    scored = [r for r in rows if r["oso_pred_rate"] is not None]
    if not scored:
        raise ValueError("no grid cell produced a usable model")
    best = min(scored, key=lambda r: (-r["oso_pred_rate"], r["k"], -r["T"], r["delta1"], r["delta2"]))
    config = TrainConfig(best["k"], best["T"], best["delta1"], best["delta2"], base.max_iterations,
                         base.end_state, None, base.merge_into)
    return config, rows
