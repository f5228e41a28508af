"""Content models: HMMs whose states emit sentences through smoothed bigram LMs.

Every state but the last has an additively smoothed bigram model estimated
from its cluster. The last (insertion) state's model is the normalized
complement of the others: for each context it favours exactly the words the
content states find unlikely. All scoring happens in log space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .corpus import BOS, Document, Sentence, Vocabulary

FORMAT_VERSION = "contentmodel/1"
NORMAL = "normal"
INSERTION = "insertion"


def _token_ids(vocab: Vocabulary, sentence) -> np.ndarray:
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    return vocab.encode(tokens)


@dataclass(eq=False)
class StateLM:
    """Bigram emission model of one state.

    ``bigram_counts`` maps ``(context id, word id)`` to a count and
    ``context_counts[w]`` is the number of bigrams with context ``w``, so
    every conditional row is normalized over the ``vocab.size`` emittable
    words. Insertion states carry no counts of their own; their rows derive
    from ``others``.
    """

    kind: str
    vocab: Vocabulary
    delta1: float
    bigram_counts: Mapping[tuple[int, int], int] = field(default_factory=dict)
    context_counts: np.ndarray | None = None
    others: tuple["StateLM", ...] = ()
    _rows: dict = field(default_factory=dict, repr=False)
    _by_context: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.context_counts is None:
            self.context_counts = np.zeros(len(self.vocab.items))

    def _counts_after(self, context: int) -> np.ndarray:
        if self._by_context is None:
            grouped: dict[int, list[tuple[int, int]]] = {}
            for (w, w2), c in self.bigram_counts.items():
                grouped.setdefault(w, []).append((w2, c))
            self._by_context = grouped
        counts = np.zeros(self.vocab.size)
        for w2, c in self._by_context.get(context, ()):
            counts[w2] = c
        return counts

    def _complement(self, context: int) -> np.ndarray:
        V = self.vocab.size
        ctx = self.context_counts[context]
        counts = self._counts_after(context)
        # 1 - p(.|context), written to avoid cancellation for sharp models
        return (ctx - counts + self.delta1 * (V - 1)) / (ctx + self.delta1 * V)

    def row(self, context: int | str) -> np.ndarray:
        """Conditional distribution over emittable words given ``context``."""
        if isinstance(context, str):
            context = self.vocab.bos if context == BOS else self.vocab.index(context)
        cached = self._rows.get(context)
        if cached is not None:
            return cached
        V = self.vocab.size
        if self.kind == NORMAL:
            counts = self._counts_after(context)
            out = (counts + self.delta1) / (self.context_counts[context] + self.delta1 * V)
        else:
            comp = np.min([s._complement(context) for s in self.others], axis=0)
            total = comp.sum()
            if total <= 0:
                raise ValueError("insertion state has a degenerate normalizer")
            out = comp / total
        self._rows[context] = out
        return out

    def prob(self, word: str, context: str) -> float:
        """p(word | context)."""
        return float(self.row(context)[self.vocab.index(word)])

    def logprob_ids(self, ids: np.ndarray) -> float:
        """Sum of log p(ids[i] | ids[i-1]) for i >= 1."""
        return float(sum(np.log(self.row(int(a))[int(b)]) for a, b in zip(ids[:-1], ids[1:])))


def _validate_delta(name: str, value: float) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")


def count_bigrams(token_lists: Iterable[Sequence[str]], vocab: Vocabulary):
    counts: dict[tuple[int, int], int] = {}
    ctx = np.zeros(len(vocab.items))
    for toks in token_lists:
        ids = vocab.encode(toks)
        for a, b in zip(ids[:-1].tolist(), ids[1:].tolist()):
            counts[(a, b)] = counts.get((a, b), 0) + 1
            ctx[a] += 1
    return dict(sorted(counts.items())), ctx


def estimate_emission(cluster_sentences: Iterable[Sentence | Sequence[str]], delta1: float,
                      vocab: Vocabulary) -> StateLM:
    """Smoothed bigram model of a cluster: (f(ww') + d1) / (f(w) + d1 |V|)."""
    _validate_delta("delta1", delta1)
    toks = [s.tokens if isinstance(s, Sentence) else s for s in cluster_sentences]
    counts, ctx = count_bigrams(toks, vocab)
    return StateLM(NORMAL, vocab, delta1, counts, ctx)


def estimate_insertion(other_states: Sequence[StateLM], vocab: Vocabulary) -> StateLM:
    if not other_states:
        raise ValueError("the insertion state needs at least one content state")
    if any(s.kind != NORMAL for s in other_states):
        raise ValueError("the insertion state complements normal states only")
    return StateLM(INSERTION, vocab, other_states[0].delta1, others=tuple(other_states))


def sentence_logprob(state: StateLM, sentence: Sentence | Sequence[str]) -> float:
    """log p_s(x) = sum_i log p_s(w_i | w_{i-1}) with w_0 = BOS."""
    return state.logprob_ids(_token_ids(state.vocab, sentence))


@dataclass
class TransitionMatrix:
    """Row-stochastic state transitions plus start and (optional) end factors."""

    matrix: np.ndarray
    pi: np.ndarray
    end: np.ndarray | None = None
    delta2: float | None = None

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


def _document_cluster_sequences(labels: Sequence[int], documents: Sequence[Document]) -> list[list[int]]:
    seqs, pos = [], 0
    for doc in documents:
        seqs.append([int(x) for x in labels[pos:pos + len(doc)]])
        pos += len(doc)
    if pos != len(labels):
        raise ValueError("cluster assignments do not cover the documents exactly")
    return seqs


def transition_counts(sequences: Sequence[Sequence[int]], m: int):
    """Document-level counts: D(c, c'), D(c), first-sentence and last-sentence clusters."""
    pair = np.zeros((m, m))
    present = np.zeros(m)
    first = np.zeros(m)
    last = np.zeros(m)
    for seq in sequences:
        if not seq:
            continue
        present[sorted(set(seq))] += 1
        for a, b in sorted(set(zip(seq[:-1], seq[1:]))):
            pair[a, b] += 1
        first[seq[0]] += 1
        last[seq[-1]] += 1
    return pair, present, first, last


def estimate_transitions(clustering, documents: Sequence[Document], delta2: float,
                         end_state: bool = True) -> TransitionMatrix:
    """Smoothed transitions p(s_j|s_i) = (D(c_i,c_j) + d2) / (D(c_i) + d2 m).

    Rows are renormalized afterwards: a document can hold several successors
    of one cluster (or none), so D(c_i) need not equal the row total. The
    start distribution uses documents' first sentences; the end factor,
    applied to the last state of a complete document, uses their last.
    """
    _validate_delta("delta2", delta2)
    m = clustering.m
    seqs = _document_cluster_sequences(clustering.assignments, documents)
    pair, present, first, last = transition_counts(seqs, m)
    raw = (pair + delta2) / (present[:, None] + delta2 * m)
    matrix = raw / raw.sum(axis=1, keepdims=True)
    pi = (first + delta2) / (len(seqs) + delta2 * m)
    pi = pi / pi.sum()
    end = (last + delta2) / (present + delta2 * m) if end_state else None
    return TransitionMatrix(matrix, pi, end, delta2)


class _EmissionTable:
    """Vectorized log emission scores of every state for batches of bigrams."""

    def __init__(self, normals: Sequence[StateLM], vocab: Vocabulary):
        V = vocab.size
        self.vocab = vocab
        pairs = sorted(set().union(*(s.bigram_counts.keys() for s in normals)))
        self.pair_index = {p: i for i, p in enumerate(pairs)}
        P = len(pairs)
        C = np.zeros((len(normals), P + 1))
        for s, st in enumerate(normals):
            for p, c in st.bigram_counts.items():
                C[s, self.pair_index[p]] = c
        ctx = np.stack([np.asarray(st.context_counts, dtype=float) for st in normals])
        d1 = np.array([st.delta1 for st in normals])[:, None]
        self.lognum = np.log(C + d1)
        self.logden = np.log(ctx + d1 * V)

        floor = ((ctx + d1 * (V - 1)) / (ctx + d1 * V)).min(axis=0)
        rows = np.array([p[0] for p in pairs], dtype=np.int64)
        if P:
            seen = ((ctx[:, rows] - C[:, :P] + d1 * (V - 1)) / (ctx[:, rows] + d1 * V)).min(axis=0)
        else:
            seen = np.zeros(0)
        n_ctx = ctx.shape[1]
        Z = (V - np.bincount(rows, minlength=n_ctx)) * floor + np.bincount(rows, weights=seen, minlength=n_ctx)
        if np.any(Z <= 0):
            raise ValueError("insertion state has a degenerate normalizer")
        self.log_seen = np.log(np.append(seen, 1.0))
        self.log_floor = np.log(floor)
        self.logZ = np.log(Z)
        self.P = P

    def bigram_scores(self, ctx_ids: np.ndarray, word_ids: np.ndarray) -> np.ndarray:
        """(m, B) log p_s(word | ctx) for every state including insertion."""
        get = self.pair_index.get
        pid = np.fromiter((get((a, b), self.P) for a, b in zip(ctx_ids.tolist(), word_ids.tolist())),
                          dtype=np.int64, count=len(ctx_ids))
        normal = self.lognum[:, pid] - self.logden[:, ctx_ids]
        ins = np.where(pid < self.P, self.log_seen[pid], self.log_floor[ctx_ids]) - self.logZ[ctx_ids]
        return np.vstack([normal, ins[None, :]])

    def sentence_scores(self, sentences: Sequence[Sentence | Sequence[str]]) -> np.ndarray:
        """(N, m) log emission probability of each sentence under each state."""
        encoded = [_token_ids(self.vocab, s) for s in sentences]
        ctx = np.concatenate([e[:-1] for e in encoded])
        words = np.concatenate([e[1:] for e in encoded])
        starts = np.cumsum([0] + [len(e) - 1 for e in encoded[:-1]])
        return np.add.reduceat(self.bigram_scores(ctx, words), starts, axis=1).T


def forward_batch(E: np.ndarray, log_pi: np.ndarray, A: np.ndarray, log_end: np.ndarray | None) -> np.ndarray:
    """Log total probability of ``B`` emission sequences ``E`` of shape (B, N, m).

    Each step shifts by the row maximum before the matrix product, which is
    log-sum-exp written as a GEMM.
    """
    alpha = log_pi + E[:, 0, :]
    for t in range(1, E.shape[1]):
        amax = alpha.max(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            alpha = np.log(np.exp(alpha - amax) @ A) + amax + E[:, t, :]
    if log_end is not None:
        alpha = alpha + log_end
    return logsumexp(alpha, axis=1)


def viterbi_path(E: np.ndarray, log_pi: np.ndarray, logA: np.ndarray,
                 log_end: np.ndarray | None) -> tuple[list[int], float]:
    """Best path through emission scores ``E`` (N, m); ties go to the lower state."""
    N, m = E.shape
    delta = log_pi + E[0]
    back = np.zeros((N, m), dtype=np.int64)
    cols = np.arange(m)
    for t in range(1, N):
        scores = delta[:, None] + logA
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], cols] + E[t]
    if log_end is not None:
        delta = delta + log_end
    state = int(np.argmax(delta))
    score = float(delta[state])
    path = [state]
    for t in range(N - 1, 0, -1):
        state = int(back[t, state])
        path.append(state)
    return path[::-1], score


class ContentModel:
    """A fitted content model: ``m`` states, the last one being the insertion state.

    Parameters
    ----------
    states : sequence of StateLM
        ``m - 1`` normal states followed by one insertion state.
    transitions : TransitionMatrix
    vocabulary : Vocabulary
    hyperparams : dict
        Training settings, stored verbatim in the model file.
    """

    def __init__(self, states: Sequence[StateLM], transitions: TransitionMatrix,
                 vocabulary: Vocabulary, hyperparams: dict | None = None):
        states = list(states)
        if len(states) < 2:
            raise ValueError("a content model needs at least one content state and the insertion state")
        if states[-1].kind != INSERTION or any(s.kind != NORMAL for s in states[:-1]):
            raise ValueError("exactly one insertion state is allowed and it must be last")
        if any(s.vocab != vocabulary for s in states):
            raise ValueError("all states must share the model vocabulary")
        if transitions.m != len(states):
            raise ValueError("transition matrix size does not match the number of states")
        self.states = states
        self.transitions = transitions
        self.vocabulary = vocabulary
        self.hyperparams = dict(hyperparams or {})
        self._table = _EmissionTable(states[:-1], vocabulary)
        with np.errstate(divide="ignore"):  # hand-built models may hold exact zeros
            self.log_pi = np.log(transitions.pi)
            self.logA = np.log(transitions.matrix)
            self.log_end = None if transitions.end is None else np.log(transitions.end)

    @property
    def m(self) -> int:
        return len(self.states)

    def emission_matrix(self, document: Document | Sequence) -> np.ndarray:
        sentences = document.sentences if isinstance(document, Document) else document
        return self._table.sentence_scores(sentences)

    def forward_logprob(self, document: Document) -> float:
        E = self.emission_matrix(document)
        return float(forward_batch(E[None], self.log_pi, self.transitions.matrix, self.log_end)[0])

    def viterbi(self, document: Document) -> tuple[list[int], float]:
        return viterbi_path(self.emission_matrix(document), self.log_pi, self.logA, self.log_end)

    def permutation_scores(self, document: Document, perms: np.ndarray, E: np.ndarray | None = None) -> np.ndarray:
        """Forward log probability of the document under each sentence order in ``perms``."""
        if E is None:
            E = self.emission_matrix(document)
        return forward_batch(E[np.asarray(perms)], self.log_pi, self.transitions.matrix, self.log_end)

    def with_delta1(self, delta1: float) -> "ContentModel":
        """Same counts and transitions, emission probabilities re-derived for ``delta1``."""
        normals = [StateLM(NORMAL, self.vocabulary, delta1, s.bigram_counts, s.context_counts)
                   for s in self.states[:-1]]
        hp = dict(self.hyperparams, delta1=delta1)
        return ContentModel(normals + [estimate_insertion(normals, self.vocabulary)],
                            self.transitions, self.vocabulary, hp)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        items = self.vocabulary.items
        states = []
        for s in self.states:
            if s.kind == NORMAL:
                bigrams = [[items[a], items[b], int(c)] for (a, b), c in sorted(s.bigram_counts.items())]
                contexts = [[items[w], int(c)] for w, c in enumerate(s.context_counts) if c]
            else:
                bigrams, contexts = [], []
            states.append({"kind": s.kind, "bigram_counts": bigrams, "context_counts": contexts})
        tr = self.transitions
        return {
            "version": FORMAT_VERSION,
            "hyperparams": self.hyperparams,
            "vocab": self.vocabulary.to_list(),
            "states": states,
            "transitions": tr.matrix.tolist(),
            "pi": tr.pi.tolist(),
            "end": None if tr.end is None else tr.end.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "ContentModel":
        version = data.get("version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {version!r}")
        vocab = Vocabulary.from_list(data["vocab"])
        hp = data["hyperparams"]
        delta1 = float(hp["delta1"])

        def idx(tok):
            return vocab.bos if tok == BOS else vocab.index(tok)

        normals = []
        for st in data["states"]:
            if st["kind"] != NORMAL:
                continue
            counts = {(idx(a), idx(b)): int(c) for a, b, c in st["bigram_counts"]}
            ctx = np.zeros(len(vocab.items))
            for w, c in st["context_counts"]:
                ctx[idx(w)] = c
            normals.append(StateLM(NORMAL, vocab, delta1, dict(sorted(counts.items())), ctx))
        states = normals + [estimate_insertion(normals, vocab)]
        tr = TransitionMatrix(
            np.array(data["transitions"], dtype=float),
            np.array(data["pi"], dtype=float),
            None if data.get("end") is None else np.array(data["end"], dtype=float),
            hp.get("delta2"),
        )
        return cls(states, tr, vocab, hp)

    @classmethod
    def load(cls, path: str | Path) -> "ContentModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def forward_logprob(model, document: Document) -> float:
    """log p(document) summed over all state sequences."""
    return model.forward_logprob(document)


def viterbi_decode(model: ContentModel, document: Document) -> tuple[list[int], float]:
    """Most likely state sequence and its log score."""
    return model.viterbi(document)


def build_model(labels: Sequence[int], m: int, documents: Sequence[Document], vocab: Vocabulary,
                delta1: float, delta2: float, end_state: bool = True,
                hyperparams: dict | None = None) -> ContentModel:
    """Estimate all parameters from a clustering whose last cluster is etcetera."""
    from .clustering import Clustering

    clustering = Clustering(tuple(int(x) for x in labels), m, m - 1)
    sentences = [s for d in documents for s in d.sentences]
    members: list[list[Sentence]] = [[] for _ in range(m)]
    for s, lab in zip(sentences, clustering.assignments):
        members[lab].append(s)
    normals = [estimate_emission(members[c], delta1, vocab) for c in range(m - 1)]
    states = normals + [estimate_insertion(normals, vocab)]
    transitions = estimate_transitions(clustering, documents, delta2, end_state)
    hp = dict(hyperparams or {})
    hp.update(delta1=delta1, delta2=delta2, end_state=end_state)
    return ContentModel(states, transitions, vocab, hp)


class BigramBaseline:
    """Single-state bigram language model used as the ordering baseline.

    With ``chain=True`` (default) a document is one token stream: only its
    first sentence starts from BOS, and each later sentence is conditioned on
    the last word of the one before it. With ``chain=False`` every sentence
    restarts at BOS, which makes the score independent of sentence order.
    """

    def __init__(self, delta1=1e-6, chain=True):
        self.delta1 = delta1
        self.chain = chain

    def get_params(self, deep=True):
        return {"delta1": self.delta1, "chain": self.chain}

    def set_params(self, **params):
        for k, v in params.items():
            setattr(self, k, v)
        return self

    def fit(self, X, y=None):
        from .validation import check_documents

        docs = check_documents(X)
        vocab = getattr(X, "vocabulary", None) or Vocabulary(
            t for d in docs for s in d.sentences for t in s.tokens)
        if self.chain:
            streams = [[t for s in d.sentences for t in s.tokens] for d in docs]
        else:
            streams = [s.tokens for d in docs for s in d.sentences]
        self.vocabulary_ = vocab
        self.state_ = estimate_emission(streams, self.delta1, vocab)
        return self

    def _pieces(self, document: Document):
        lm = self.state_
        vocab = lm.vocab
        encoded = [vocab.encode(s.tokens) for s in document.sentences]
        init = np.array([lm.logprob_ids(e) for e in encoded])
        if not self.chain:
            return init, None
        N = len(encoded)
        cont = np.empty((N, N))
        for i in range(N):
            last = encoded[i][-1]
            for j in range(N):
                e = encoded[j].copy()
                e[0] = last
                cont[i, j] = lm.logprob_ids(e)
        return init, cont

    def permutation_scores(self, document: Document, perms: np.ndarray, pieces=None) -> np.ndarray:
        init, cont = self._pieces(document) if pieces is None else pieces
        perms = np.asarray(perms)
        if cont is None:
            return np.full(len(perms), init.sum())
        scores = init[perms[:, 0]]
        for t in range(1, perms.shape[1]):
            scores = scores + cont[perms[:, t - 1], perms[:, t]]
        return scores

    def forward_logprob(self, document: Document) -> float:
        return float(self.permutation_scores(document, np.arange(len(document))[None])[0])
