"""Information-ordering evaluation: OSO rank, OSO prediction rate and Kendall's tau."""

from __future__ import annotations

import itertools
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .content_model import ContentModel, forward_batch
from .corpus import Corpus, Document
from .validation import check_documents

logger = logging.getLogger(__name__)

Permutation = tuple[int, ...]
RANK_BINS = ("0-4", "5-10", ">10")


def _check_permutation(sigma: Sequence[int], n: int | None = None) -> list[int]:
    sigma = [int(x) for x in sigma]
    if sorted(sigma) != list(range(len(sigma))):
        raise ValueError(f"{sigma} is not a permutation of 0..{len(sigma) - 1}")
    if n is not None and len(sigma) != n:
        raise ValueError(f"permutation length {len(sigma)} does not match document length {n}")
    return sigma


def count_inversions(sigma: Sequence[int]) -> int:
    """Number of adjacent swaps that sort ``sigma`` (merge-sort count)."""

    def sort(seq):
        if len(seq) <= 1:
            return seq, 0
        mid = len(seq) // 2
        left, a = sort(seq[:mid])
        right, b = sort(seq[mid:])
        merged, inv, i, j = [], a + b, 0, 0
        while i < len(left) and j < len(right):
            if left[i] <= right[j]:
                merged.append(left[i])
                i += 1
            else:
                merged.append(right[j])
                inv += len(left) - i
                j += 1
        merged.extend(left[i:])
        merged.extend(right[j:])
        return merged, inv

    return sort(list(sigma))[1]


def kendall_tau(sigma: Sequence[int]) -> float:
    """tau = 1 - 2 S(sigma) / C(N, 2), S being the adjacent-swap distance to the identity."""
    sigma = _check_permutation(sigma)
    n = len(sigma)
    if n < 2:
        raise ValueError("Kendall's tau needs at least two items")
    return 1.0 - 2.0 * count_inversions(sigma) / (n * (n - 1) / 2)


def permutation_scorer(model, document: Document) -> Callable[[np.ndarray], np.ndarray]:
    """Callable mapping an (B, N) array of orders to log scores, with per-document work cached."""
    if isinstance(model, ContentModel):
        E = model.emission_matrix(document)
        A, log_pi, log_end = model.transitions.matrix, model.log_pi, model.log_end
        return lambda perms: forward_batch(E[np.asarray(perms)], log_pi, A, log_end)
    pieces = model._pieces(document)
    return lambda perms: model.permutation_scores(document, perms, pieces)


def score_permutation(model, document: Document, sigma: Sequence[int]) -> float:
    """Log probability of the document with its sentences in the order ``sigma``."""
    sigma = _check_permutation(sigma, len(document))
    return float(permutation_scorer(model, document)(np.array([sigma]))[0])


@dataclass(frozen=True)
class PermutationCap:
    """Exhaustive enumeration up to ``exhaustive_max`` sentences, seeded sampling beyond.

    Scores within ``tie_tol`` (relative to the OSO score's magnitude) count
    as ties; summing the same terms in another order moves the last bits.
    """

    exhaustive_max: int = 9
    sample_size: int = 10000
    seed: int = 0
    tie_tol: float = 1e-9
    chunk: int = 40320


@dataclass
class OrderingResult:
    doc_id: str
    N: int
    oso_rank: float
    oso_predicted: bool
    best_perm: Permutation
    tau_of_best: float
    num_permutations_scored: int
    pessimistic_rank: float
    sampled: bool = False
    oso_score: float = float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best_perm"] = list(self.best_perm)
        return d


def iter_permutations(n: int, chunk: int):
    """All permutations of ``range(n)`` in lexicographic order, as (B, n) arrays."""
    it = itertools.permutations(range(n))
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.int64)


def _doc_rng(cap: PermutationCap, doc_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cap.seed, zlib.crc32(doc_id.encode("utf-8"))]))


def rank_oso(model, document: Document, cap: PermutationCap | None = None) -> OrderingResult:
    """Rank of the original sentence order among all (or sampled) permutations.

    The rank counts permutations scoring strictly higher than the OSO, so the
    OSO is placed ahead of anything it ties with. The pessimistic rank, which
    places it behind its ties, is reported alongside.
    """
    cap = cap or PermutationCap()
    N = len(document)
    if N < 2:
        raise ValueError("ranking needs a document with at least two sentences")
    score = permutation_scorer(model, document)
    identity = np.arange(N)
    oso = float(score(identity[None])[0])
    tol = cap.tie_tol * max(1.0, abs(oso))

    if N <= cap.exhaustive_max:
        chunks = iter_permutations(N, cap.chunk)
        sampled = False
    else:
        rng = _doc_rng(cap, document.doc_id)
        chunks = [rng.permuted(np.tile(identity, (cap.sample_size, 1)), axis=1)]
        sampled = True

    greater = ties = total = 0
    best_score, best_perm = -np.inf, identity
    for perms in chunks:
        s = score(perms)
        greater += int(np.sum(s > oso + tol))
        ties += int(np.sum(np.abs(s - oso) <= tol))
        total += len(perms)
        i = int(np.argmax(s))
        if s[i] > best_score:
            best_score, best_perm = float(s[i]), perms[i]

    if sampled:
        ties += 1  # the OSO itself
        scale = math.factorial(N) / cap.sample_size
        rank = greater * scale
        pessimistic = (greater + ties - 1) * scale
        total += 1
    else:
        rank = greater
        pessimistic = greater + ties - 1
    if greater == 0:
        best_perm = identity
    best = tuple(int(x) for x in best_perm)
    return OrderingResult(document.doc_id, N, rank, greater == 0, best, kendall_tau(best), total,
                          pessimistic, sampled, oso)


@dataclass
class OrderingReport:
    results: list[OrderingResult]
    skipped: list[str] = field(default_factory=list)

    @property
    def mean_rank(self) -> float:
        return float(np.mean([r.oso_rank for r in self.results]))

    @property
    def prediction_rate(self) -> float:
        return float(np.mean([r.oso_predicted for r in self.results]))

    @property
    def mean_tau(self) -> float:
        return float(np.mean([r.tau_of_best for r in self.results]))

    def rank_histogram(self) -> dict[str, int]:
        hist = dict.fromkeys(RANK_BINS, 0)
        for r in self.results:
            if r.oso_rank <= 4:
                hist["0-4"] += 1
            elif r.oso_rank <= 10:
                hist["5-10"] += 1
            else:
                hist[">10"] += 1
        return hist

    def summary(self) -> dict:
        return {
            "n_docs": len(self.results),
            "mean_rank": self.mean_rank,
            "oso_pred_rate": self.prediction_rate,
            "mean_tau": self.mean_tau,
            "rank_histogram": self.rank_histogram(),
            "n_sampled": sum(r.sampled for r in self.results),
            "skipped": self.skipped,
        }

    def to_dict(self) -> dict:
        return {**self.summary(), "documents": [r.to_dict() for r in self.results]}


def evaluate_ordering(model, test_corpus: Corpus | Sequence[Document], cap: PermutationCap | None = None,
                      n_jobs: int = 1) -> OrderingReport:
    """Rank the OSO of every test document with two or more sentences."""
    docs = check_documents(test_corpus)
    skipped = [d.doc_id for d in docs if len(d) < 2]
    usable = [d for d in docs if len(d) >= 2]
    if n_jobs == 1:
        results = [rank_oso(model, doc, cap) for doc in usable]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(rank_oso)(model, doc, cap) for doc in usable)
    if not results:
        raise ValueError("no test document has two or more sentences")
    if skipped:
        logger.warning("skipped %d single-sentence documents", len(skipped))
    return OrderingReport(results, skipped)


def learning_curve(train_corpus: Corpus, config, sizes: Sequence[int], test_corpus: Corpus,
                   cap: PermutationCap | None = None, seed: int = 0, n_jobs: int = 1) -> list[dict]:
    """OSO prediction rate of models trained on seeded subsets of growing size.

    A subset of size ``s`` is the first ``s`` documents of one fixed shuffle,
    kept in corpus order.
    """
    from .training import build_content_model

    n = len(train_corpus)
    order = np.random.default_rng(seed).permutation(n)
    rows = []
    for size in sizes:
        if not 2 <= size <= n:
            raise ValueError(f"training size {size} outside 2..{n}")
        subset = train_corpus.subset(sorted(order[:size].tolist()))
        model = build_content_model(subset, config).model
        report = evaluate_ordering(model, test_corpus, cap, n_jobs)
        rows.append({"train_size": int(size), "oso_prediction_rate": report.prediction_rate,
                     "mean_rank": report.mean_rank, "mean_tau": report.mean_tau})
    return rows
