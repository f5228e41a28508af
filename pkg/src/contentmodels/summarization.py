"""Extractive summarization with content models, plus the lead baseline."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .clustering import bigram_features, cosine
from .content_model import ContentModel
from .corpus import Corpus, Document
from .validation import check_documents

logger = logging.getLogger(__name__)

SUMMARY_FORMAT_VERSION = "summarymodel/1"


@dataclass(frozen=True)
class AlignedPair:
    full: Document
    summary: Document
    gold_indices: tuple[int, ...]

    def __post_init__(self):
        if any(not 0 <= i < len(self.full) for i in self.gold_indices):
            raise ValueError("gold index outside the full document")


def align_summary(full: Document, summary: Document, threshold: float = 0.5) -> AlignedPair:
    """Map summary sentences one-to-one onto full-document sentences.

    Candidate links are taken greedily by decreasing bigram cosine; links
    below ``threshold`` are dropped.
    """
    full_feats = [bigram_features(s) for s in full.sentences]
    links = []
    for j, s in enumerate(summary.sentences):
        f = bigram_features(s)
        for i, g in enumerate(full_feats):
            sim = cosine(f, g)
            if sim >= threshold and sim > 0:
                links.append((-sim, j, i))
    links.sort()
    used_full, used_summary, gold = set(), set(), []
    for _, j, i in links:
        if i in used_full or j in used_summary:
            continue
        used_full.add(i)
        used_summary.add(j)
        gold.append(i)
    dropped = len(summary) - len(used_summary)
    if not gold:
        raise ValueError(f"pair unusable: no summary sentence of {summary.doc_id!r} aligns with {full.doc_id!r}")
    if dropped:
        warnings.warn(f"{dropped} summary sentence(s) of {summary.doc_id!r} could not be aligned", stacklevel=2)
    return AlignedPair(full, summary, tuple(sorted(gold)))


@dataclass(frozen=True)
class StateSummaryStats:
    state: int
    support_docs: int
    summary_docs: int
    eligible: bool
    summary_prob: float | None


@dataclass(frozen=True)
class SummaryModel:
    """Per-state probability that a V-topic shows up in the summary."""

    states: tuple[StateSummaryStats, ...]
    min_support: int = 3

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        for s in self.states:
            if s.eligible != (s.support_docs >= self.min_support) or s.eligible != (s.summary_prob is not None):
                raise ValueError(f"inconsistent eligibility for state {s.state}")

    @property
    def probs(self) -> dict[int, float]:
        return {s.state: s.summary_prob for s in self.states if s.eligible}

    def to_dict(self) -> dict:
        return {"version": SUMMARY_FORMAT_VERSION, "min_support": self.min_support,
                "states": [asdict(s) for s in self.states]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "SummaryModel":
        if data.get("version") != SUMMARY_FORMAT_VERSION:
            raise ValueError(f"unsupported summary model version {data.get('version')!r}")
        return cls([StateSummaryStats(**s) for s in data["states"]], data["min_support"])

    @classmethod
    def load(cls, path: str | Path) -> "SummaryModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_summarizer(model: ContentModel, pairs: Sequence[AlignedPair], min_support: int = 3) -> SummaryModel:
    """Estimate, for each state, P(summary has V-topic s | article has V-topic s).

    Only states found in at least ``min_support`` training articles are
    eligible. Summaries are decoded as documents in their own right.
    """
    if not pairs:
        raise ValueError("need at least one document-summary pair")
    support = np.zeros(model.m, dtype=int)
    both = np.zeros(model.m, dtype=int)
    for pair in pairs:
        full_topics = set(model.viterbi(pair.full)[0])
        summary_topics = set(model.viterbi(pair.summary)[0])
        for s in full_topics:
            support[s] += 1
            if s in summary_topics:
                both[s] += 1
    stats = []
    for s in range(model.m):
        eligible = bool(support[s] >= min_support)
        prob = float(both[s] / support[s]) if eligible else None
        stats.append(StateSummaryStats(s, int(support[s]), int(both[s]), eligible, prob))
    if not any(st.eligible for st in stats):
        raise ValueError(f"no state occurs in {min_support} or more training articles")
    return SummaryModel(stats, min_support)


def select_sentences(vtopics: Sequence[int], probs: dict[int, float], ell: int) -> list[int]:
    """Choose ``ell`` sentence positions given their V-topics and per-state summary probabilities."""
    if ell < 1:
        raise ValueError("ell must be ≥ 1")
    n = len(vtopics)
    present = sorted({s for s in vtopics if s in probs}, key=lambda s: (-probs[s], s))
    chosen_states = set(present[:ell])
    candidates = [i for i, s in enumerate(vtopics) if s in chosen_states]
    candidates.sort(key=lambda i: (-probs[vtopics[i]], i))
    picked = candidates[:ell]
    if len(picked) < min(ell, n):
        taken = set(picked)
        picked.extend(i for i in range(n) if i not in taken)
        picked = picked[:min(ell, n)]
    return sorted(picked)


def summarize(model: ContentModel, summ: SummaryModel, document: Document, ell: int) -> list[int]:
    """Indices (in document order) of the sentences forming a length-``ell`` summary."""
    vtopics, _ = model.viterbi(document)
    return select_sentences(vtopics, summ.probs, ell)


def lead_baseline(document: Document | int, ell: int) -> list[int]:
    if ell < 1:
        raise ValueError("ell must be ≥ 1")
    n = document if isinstance(document, int) else len(document)
    return list(range(min(ell, n)))


def extraction_accuracy(predicted: Iterable[int], gold: Iterable[int]) -> float:
    """Fraction of extracted sentences that belong to the reference summary."""
    predicted = set(predicted)
    if not predicted:
        raise ValueError("empty prediction")
    return len(predicted & set(gold)) / len(predicted)


def read_pairs(path: str | Path) -> list[tuple[str, str]]:
    """Pairs file: JSONL records ``{"full": doc_id, "summary": doc_id}``."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append((str(rec["full"]), str(rec["summary"])))
    return out


def build_pairs(full: Corpus | Sequence[Document], summaries: Corpus | Sequence[Document],
                ids: Sequence[tuple[str, str]], threshold: float = 0.5) -> list[AlignedPair]:
    """Align each listed (full, summary) pair whose article is in ``full``.

    Pairs naming other articles are ignored, so one pairs file can serve
    several splits. Unusable pairs are skipped with a warning.
    """
    full_by_id = {d.doc_id: d for d in check_documents(full)}
    summ_by_id = {d.doc_id: d for d in check_documents(summaries)}
    pairs = []
    for fid, sid in ids:
        if fid not in full_by_id:
            continue
        if sid not in summ_by_id:
            raise KeyError(f"summary {sid!r} of {fid!r} not found")
        try:
            pairs.append(align_summary(full_by_id[fid], summ_by_id[sid], threshold))
        except ValueError as exc:
            logger.warning("%s", exc)
    return pairs


class ContentSummarizer(BaseEstimator):
    """Learn which content-model states belong in summaries.

    Parameters
    ----------
    content_model : ContentModel
        Model trained on full articles of the domain.
    min_support : int, default=3
        Minimum number of training articles containing a state.
    """

    def __init__(self, content_model=None, min_support=3):
        self.content_model = content_model
        self.min_support = min_support

    def fit(self, X, y=None):
        """``X`` is a list of :class:`AlignedPair`."""
        if self.content_model is None:
            raise ValueError("ContentSummarizer needs a fitted content_model")
        self.summary_model_ = train_summarizer(self.content_model, list(X), self.min_support)
        return self

    def predict(self, X, ell) -> list[list[int]]:
        """Summaries of each document; ``ell`` is an int or one length per document."""
        check_is_fitted(self, "summary_model_")
        docs = check_documents(X)
        lengths = [ell] * len(docs) if np.isscalar(ell) else list(ell)
        return [summarize(self.content_model, self.summary_model_, d, int(n)) for d, n in zip(docs, lengths)]

    def score(self, X, y=None) -> float:
        """Mean extraction accuracy on aligned pairs, with ``ell`` = number of gold sentences."""
        pairs = list(X)
        preds = self.predict([p.full for p in pairs], [len(p.gold_indices) for p in pairs])
        return float(np.mean([extraction_accuracy(pr, p.gold_indices) for pr, p in zip(preds, pairs)]))
