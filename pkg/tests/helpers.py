"""Shared builders and brute-force oracles for the test suite."""

import itertools

import numpy as np
from scipy.special import logsumexp

from contentmodels.content_model import build_model, sentence_logprob
from contentmodels.corpus import Document, Vocabulary


def random_document(rng, words, n_sent, max_len, doc_id="doc"):
    return Document.from_tokens(doc_id, [list(rng.choice(words, size=int(rng.integers(1, max_len + 1))))
                                         for _ in range(n_sent)])


def random_model(rng, m_max=4, v_max=12, n_train_docs=6, max_len=6, end_state=None):
    """A content model estimated from a random labelling of random documents."""
    n_words = int(rng.integers(2, v_max + 1))
    words = [f"w{i}" for i in range(n_words)]
    vocab = Vocabulary.from_list(words)
    m = int(rng.integers(2, m_max + 1))
    docs = [random_document(rng, words, int(rng.integers(1, 6)), max_len, f"t{i}") for i in range(n_train_docs)]
    n_sent = sum(len(d) for d in docs)
    labels = rng.integers(0, m, size=n_sent)
    delta1 = float(10 ** rng.uniform(-6, 0))
    delta2 = float(10 ** rng.uniform(-3, 0))
    if end_state is None:
        end_state = bool(rng.integers(2))
    model = build_model(labels, m, docs, vocab, delta1, delta2, end_state)
    return model, words


def brute_force(model, document, E=None):
    """Exhaustive sum and max over all m^N state sequences.

    Sequence scores accumulate left to right in the same order as the
    Viterbi recursion so maxima compare exactly. Returns (log total, best
    score, best sequence), where among equal maxima the sequence that is
    smallest when read from the last position backwards wins.
    """
    m, N = model.m, len(document)
    if E is None:
        E = np.array([[sentence_logprob(st, s) for st in model.states] for s in document.sentences])
    log_pi, logA, log_end = model.log_pi, model.logA, model.log_end
    scores, seqs = [], []
    for seq in itertools.product(range(m), repeat=N):
        s = log_pi[seq[0]] + E[0, seq[0]]
        for t in range(1, N):
            s = s + logA[seq[t - 1], seq[t]] + E[t, seq[t]]
        if log_end is not None:
            s = s + log_end[seq[-1]]
        scores.append(s)
        seqs.append(seq)
    scores = np.array(scores)
    best = scores.max()
    tied = [seq for seq, s in zip(seqs, scores) if s == best]
    best_seq = min(tied, key=lambda q: q[::-1])
    return float(logsumexp(scores)), float(best), list(best_seq)
