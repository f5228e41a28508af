"""Planted-HMM corpora with known topic labels, orderings and summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import Corpus, Document, corpus_records


def cyclic_transitions(num_states: int, self_prob: float) -> np.ndarray:
    """Stay with ``self_prob``, otherwise move on to the next state (cyclically)."""
    A = np.zeros((num_states, num_states))
    for s in range(num_states):
        if num_states == 1:
            A[s, s] = 1.0
        else:
            A[s, s] = self_prob
            A[s, (s + 1) % num_states] += 1.0 - self_prob
    return A


@dataclass(frozen=True)
class PlantedSpec:
    """Parameters of a synthetic domain.

    Each state owns ``vocab_size`` private words. A pool of
    ``round(overlap * vocab_size)`` function words is shared by all states,
    and each token is drawn from that pool with probability ``overlap``.
    Within a state, words follow a bigram chain in which each word has
    ``branching`` possible successors weighted by a Dirichlet(``concentration``)
    draw, so sentences are formulaic. Sentence openers are drawn from a
    Dirichlet(``start_concentration``) over the whole state vocabulary and
    are never function words.
    """

    num_states: int = 4
    vocab_size: int = 50
    overlap: float = 0.1
    transitions: tuple[tuple[float, ...], ...] | None = None
    self_prob: float = 0.6
    initial: tuple[float, ...] | None = None
    sentence_length: tuple[int, int] = (6, 10)
    doc_length: tuple[int, int] = (8, 12)
    n_docs: int = 100
    summary_states: tuple[int, ...] = (0, 2)
    summary_cap: int | None = None
    branching: int = 3
    concentration: float = 1.0
    start_concentration: float = 0.0005
    seed: int = 42

    def __post_init__(self):
        if self.num_states < 1 or self.vocab_size < 1:
            raise ValueError("need at least one state and one word per state")
        if self.branching < 1:
            raise ValueError("branching must be ≥ 1")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must be in [0, 1)")
        A = self.transition_matrix()
        if A.shape != (self.num_states, self.num_states) or not np.allclose(A.sum(axis=1), 1.0):
            raise ValueError("transition rows must sum to 1")
        if not self.summary_states or any(not 0 <= s < self.num_states for s in self.summary_states):
            raise ValueError("summary_states must be a non-empty subset of the states")
        lo, hi = self.sentence_length
        if not 1 <= lo <= hi:
            raise ValueError("invalid sentence length range")
        lo, hi = self.doc_length
        if not 1 <= lo <= hi:
            raise ValueError("invalid document length range")

    def transition_matrix(self) -> np.ndarray:
        if self.transitions is not None:
            return np.asarray(self.transitions, dtype=float)
        return cyclic_transitions(self.num_states, self.self_prob)

    def initial_distribution(self) -> np.ndarray:
        if self.initial is not None:
            return np.asarray(self.initial, dtype=float)
        pi = np.zeros(self.num_states)
        pi[0] = 1.0
        return pi


@dataclass
class PlantedCorpus:
    corpus: Corpus
    labels: list[list[int]]
    gold_summaries: list[list[int]]
    spec: PlantedSpec = field(repr=False, default=None)

    def split(self, n_train: int) -> tuple["PlantedCorpus", "PlantedCorpus"]:
        docs = self.corpus.documents
        head = PlantedCorpus(Corpus(docs[:n_train]), self.labels[:n_train], self.gold_summaries[:n_train], self.spec)
        tail = PlantedCorpus(Corpus(docs[n_train:]), self.labels[n_train:], self.gold_summaries[n_train:], self.spec)
        return head, tail

    def summary_documents(self) -> list[Document]:
        """Each gold summary as its own document (``<doc_id>.summary``)."""
        out = []
        for doc, gold in zip(self.corpus.documents, self.gold_summaries):
            if gold:
                sents = [doc.sentences[i] for i in gold]
                out.append(Document.from_tokens(f"{doc.doc_id}.summary", [s.tokens for s in sents],
                                                [s.raw for s in sents]))
        return out

    def flat_labels(self) -> np.ndarray:
        return np.array([lab for doc in self.labels for lab in doc], dtype=np.int64)

    def sidecar_records(self):
        for doc, labels, gold in zip(self.corpus.documents, self.labels, self.gold_summaries):
            yield {"doc_id": doc.doc_id, "labels": labels, "gold_summary_indices": gold}


def _state_generators(spec: PlantedSpec, rng: np.random.Generator):
    """Per-state bigram tables over local word ids (0 = start context)."""
    V = spec.vocab_size
    tables = []
    for _ in range(spec.num_states):
        # row r is the distribution after local word r-1; row 0 is sentence start
        start = rng.dirichlet(np.full(V, spec.start_concentration))
        rows = np.zeros((V, V))
        width = min(spec.branching, V)
        for r in range(V):
            support = rng.choice(V, size=width, replace=False)
            rows[r, support] = rng.dirichlet(np.full(width, spec.concentration))
        tables.append(np.vstack([start, rows]))
    return tables


def generate_corpus(spec: PlantedSpec) -> PlantedCorpus:
    """Sample documents from the planted chain; a pure function of ``spec``."""
    root = np.random.SeedSequence(spec.seed)
    model_seed, *doc_seeds = root.spawn(spec.n_docs + 1)
    rng = np.random.default_rng(model_seed)
    tables = _state_generators(spec, rng)
    n_func = max(1, round(spec.overlap * spec.vocab_size)) if spec.overlap > 0 else 0
    A = spec.transition_matrix()
    pi = spec.initial_distribution()
    width = len(str(spec.n_docs - 1))

    documents, all_labels, golds = [], [], []
    for d, seed in enumerate(doc_seeds):
        r = np.random.default_rng(seed)
        n_sent = int(r.integers(spec.doc_length[0], spec.doc_length[1] + 1))
        states = [int(r.choice(spec.num_states, p=pi))]
        for _ in range(n_sent - 1):
            states.append(int(r.choice(spec.num_states, p=A[states[-1]])))
        token_lists = []
        for s in states:
            length = int(r.integers(spec.sentence_length[0], spec.sentence_length[1] + 1))
            prev = 0
            toks = []
            for pos in range(length):
                if pos and n_func and r.random() < spec.overlap:
                    toks.append(f"fw{int(r.integers(n_func))}")
                    continue
                w = int(r.choice(spec.vocab_size, p=tables[s][prev]))
                toks.append(f"t{s}w{w}")
                prev = w + 1
            token_lists.append(toks)
        raws = [" ".join(t).capitalize() + "." for t in token_lists]
        documents.append(Document.from_tokens(f"doc{d:0{width}d}", token_lists, raws))
        all_labels.append(states)
        golds.append(_gold_summary(states, spec))
    return PlantedCorpus(Corpus(documents), all_labels, golds, spec)


def _gold_summary(states: Sequence[int], spec: PlantedSpec) -> list[int]:
    chosen = [i for i, s in enumerate(states) if s in spec.summary_states]
    if spec.summary_cap is not None and len(chosen) > spec.summary_cap:
        rank = {s: r for r, s in enumerate(spec.summary_states)}
        chosen = sorted(chosen, key=lambda i: (rank[states[i]], i))[: spec.summary_cap]
    return sorted(chosen)


def write_planted(planted: PlantedCorpus, out_dir: str | Path, name: str = "corpus") -> dict[str, Path]:
    """Write the corpus, its label sidecar, the gold summaries and the pairs file.

    Files: ``<name>.jsonl`` (corpus cache format), ``<name>.labels.jsonl``,
    ``<name>.summaries.jsonl`` and ``<name>.pairs.jsonl``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {kind: out_dir / f"{name}{suffix}.jsonl" for kind, suffix in
             (("corpus", ""), ("labels", ".labels"), ("summaries", ".summaries"), ("pairs", ".pairs"))}
    summaries = planted.summary_documents()
    pair_records = [{"full": s.doc_id[: -len(".summary")], "summary": s.doc_id} for s in summaries]
    contents = {
        "corpus": corpus_records(planted.corpus),
        "labels": planted.sidecar_records(),
        "summaries": corpus_records(summaries),
        "pairs": pair_records,
    }
    for kind, records in contents.items():
        with paths[kind].open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return paths


def _contingency(learned: Sequence[int], planted: Sequence[int]) -> np.ndarray:
    learned = np.asarray(learned, dtype=np.int64)
    planted = np.asarray(planted, dtype=np.int64)
    if learned.shape != planted.shape or learned.ndim != 1 or not len(learned):
        raise ValueError("label sequences must be non-empty and of equal length")
    table = np.zeros((learned.max() + 1, planted.max() + 1), dtype=np.int64)
    np.add.at(table, (learned, planted), 1)
    return table


def state_agreement(learned: Sequence[int], planted: Sequence[int]) -> float:
    """Fraction of sentences labelled correctly under the best one-to-one state matching.

    Learned and planted states are paired by a maximum-weight matching on
    their co-occurrence counts. When there are more learned states than
    planted ones, sentences in unmatched learned states count as errors.
    """
    table = _contingency(learned, planted)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def cluster_purity(learned: Sequence[int], planted: Sequence[int]) -> float:
    """Fraction of sentences whose learned state's majority planted state is their own."""
    table = _contingency(learned, planted)
    return float(table.max(axis=1).sum() / table.sum())
