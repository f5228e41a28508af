"""Corpus ingestion: sentence splitting, token masking, vocabulary and statistics.

Documents are read either from a directory of ``.txt`` files (one document
each), from pre-split JSONL (``{"doc_id", "sentences"}``) or from the corpus
cache format written by :func:`save_corpus` (``{"doc_id", "index", "raw",
"tokens"}``, one sentence per line).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NAME = "NAME"
NUM = "NUM"
DATE = "DATE"
UNK = "UNK"
BOS = "<s>"
RESERVED = (NAME, NUM, DATE, UNK)
MASKS = frozenset((NAME, NUM, DATE, UNK))

ABBREVIATIONS = frozenset(
    """
    mr mrs ms dr st jr sr prof gen gov sen rep lt col sgt capt cmdr adm maj
    rev hon pres supt det insp u.s u.n u.k u.s.a e.g i.e vs etc inc co corp
    ltd bros no nos km mi ft lb oz approx dept est fig
    jan feb mar apr jun jul aug sep sept oct nov dec mon tue tues wed thu thur
    thurs fri sat sun
    """.split()
)

MONTHS = frozenset(
    """
    january february march april may june july august september october
    november december jan feb mar apr jun jul aug sep sept oct nov dec
    """.split()
)
WEEKDAYS = frozenset(
    "monday tuesday wednesday thursday friday saturday sunday".split()
)

_TERMINAL = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s|$)")
_WORD = re.compile(r"\d+(?:[.,:]\d+)*|[^\W\d_]+(?:['’-][^\W\d_]+)*")
_NUMBER = re.compile(r"\d+(?:[.,:]\d+)*")


def split_sentences(raw_text: str) -> list[str]:
    """Split text into sentences at terminal punctuation.

    A period does not end a sentence when the word before it is a known
    abbreviation or a single letter (an initial).

    >>> split_sentences("Mr. Smith arrived. He left.")
    ['Mr. Smith arrived.', 'He left.']
    """
    spans = []
    start = 0
    for match in _TERMINAL.finditer(raw_text):
        end = match.end()
        following = raw_text[end:].lstrip()
        if following[:1].islower():
            continue
        if match.group().startswith(".") and len(match.group().rstrip("\"'”’)]")) == 1:
            head = raw_text[start:match.start()]
            last = head.split()[-1] if head.split() else ""
            last = last.lstrip("\"'(“‘[").lower()
            if last in ABBREVIATIONS or (len(last) == 1 and last.isalpha()):
                continue
        span = raw_text[start:end].strip()
        if span:
            spans.append(span)
        start = end
    tail = raw_text[start:].strip()
    if tail:
        spans.append(tail)
    return spans


def _is_capitalized(word: str) -> bool:
    return word[0].isupper()


def tokenize_and_mask(sentence: str) -> list[str]:
    """Lowercase a sentence into word tokens, masking names, numbers and dates.

    Masking precedence is numbers, then dates (month followed by a number, or
    a weekday name), then runs of capitalized words that do not open the
    sentence. Punctuation is dropped. Tokens that are already masks pass
    through unchanged, so masking is idempotent on its own output.

    Raises
    ------
    ValueError
        If nothing but punctuation remains.
    """
    words = _WORD.findall(sentence)
    if not words:
        raise ValueError("empty after tokenization")

    n = len(words)
    kinds: list[str | None] = [None] * n
    for i, w in enumerate(words):
        if w in MASKS:
            kinds[i] = w
        elif _NUMBER.fullmatch(w):
            kinds[i] = NUM

    out: list[str] = []
    i = 0
    while i < n:
        w = words[i]
        kind = kinds[i]
        if kind is not None:
            out.append(kind)
            i += 1
            continue
        low = w.lower()
        if low in MONTHS and i + 1 < n and kinds[i + 1] == NUM:
            # "June 5" or "June 5, 1999"
            i += 2
            if i < n and kinds[i] == NUM and len(words[i]) == 4:
                i += 1
            out.append(DATE)
            continue
        if low in WEEKDAYS:
            out.append(DATE)
            i += 1
            continue
        if i > 0 and _is_capitalized(w) and w != "I":
            while i < n and kinds[i] is None and _is_capitalized(words[i]) and words[i].lower() not in WEEKDAYS:
                i += 1
            out.append(NAME)
            continue
        out.append(low)
        i += 1
    return out


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    raw: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f"sentence {self.doc_id}:{self.index} has no tokens")
        for tok in self.tokens:
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"invalid token {tok!r} in {self.doc_id}:{self.index}")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        if not self.sentences:
            raise ValueError(f"document {self.doc_id!r} has no sentences")
        for i, s in enumerate(self.sentences):
            if s.index != i:
                raise ValueError(f"document {self.doc_id!r}: sentence indices are not 0..N-1")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @classmethod
    def from_tokens(cls, doc_id: str, token_lists: Iterable[Sequence[str]], raws: Sequence[str] | None = None):
        token_lists = [tuple(t) for t in token_lists]
        if raws is None:
            raws = [" ".join(t) for t in token_lists]
        sentences = tuple(
            Sentence(doc_id, i, raw, toks) for i, (raw, toks) in enumerate(zip(raws, token_lists))
        )
        return cls(doc_id, sentences)

    @classmethod
    def from_text(cls, doc_id: str, sentences: Iterable[str]):
        """Tokenize already-split sentence strings; all-punctuation ones are dropped."""
        raws, toks = [], []
        for raw in sentences:
            try:
                t = tokenize_and_mask(raw)
            except ValueError:
                logger.debug("dropping empty sentence %r in %s", raw, doc_id)
                continue
            raws.append(raw)
            toks.append(t)
        return cls.from_tokens(doc_id, toks, raws)

    def reordered(self, sigma: Sequence[int]) -> "Document":
        """The document with sentences rearranged so position t holds sentence sigma[t]."""
        return Document.from_tokens(
            self.doc_id,
            [self.sentences[j].tokens for j in sigma],
            [self.sentences[j].raw for j in sigma],
        )


class Vocabulary:
    """Ordered token inventory.

    Emittable tokens are sorted and indexed ``0..size-1``; the sentence
    boundary token is always appended last with index ``size``. It is a
    bigram context only and is never emitted, so ``size`` (the |V| used for
    smoothing) does not count it.
    """

    def __init__(self, tokens: Iterable[str], reserved: bool = True):
        items = set(tokens)
        items.discard(BOS)
        if reserved:
            items.update(RESERVED)
        if not items:
            raise ValueError("vocabulary must contain at least one token")
        self.items: tuple[str, ...] = tuple(sorted(items)) + (BOS,)
        self._index = {tok: i for i, tok in enumerate(self.items)}

    @property
    def size(self) -> int:
        return len(self.items) - 1

    @property
    def bos(self) -> int:
        return len(self.items) - 1

    @property
    def unk(self) -> int | None:
        return self._index.get(UNK)

    def __len__(self):
        return self.size

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.items == other.items

    def __hash__(self):
        return hash(self.items)

    def __repr__(self):
        return f"Vocabulary(size={self.size})"

    def index(self, token: str) -> int:
        idx = self._index.get(token)
        if idx is None or idx == self.bos:
            if self.unk is None:
                raise KeyError(f"token {token!r} not in vocabulary and no UNK entry")
            return self.unk
        return idx

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Token ids with the boundary id prepended: ``[BOS, w1, ..., wn]``."""
        return np.array([self.bos] + [self.index(t) for t in tokens], dtype=np.int64)

    def to_list(self) -> list[str]:
        return list(self.items[:-1])

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        return cls(tokens, reserved=False)


@dataclass(frozen=True)
class CorpusStats:
    avg_doc_length_sentences: float
    stddev_length: float
    vocab_size: int
    token_type_ratio: float


@dataclass
class Corpus:
    documents: list[Document]
    vocabulary: Vocabulary = field(default=None)

    def __post_init__(self):
        self.documents = list(self.documents)
        if self.vocabulary is None and self.documents:
            self.vocabulary = build_vocabulary(self.documents)

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Corpus(self.documents[item], self.vocabulary)
        return self.documents[item]

    def sentences(self) -> list[Sentence]:
        return [s for d in self.documents for s in d.sentences]

    def subset(self, indices: Iterable[int]) -> "Corpus":
        """Documents at ``indices``, vocabulary rebuilt from them."""
        return Corpus([self.documents[i] for i in indices])

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}


def build_vocabulary(documents: Sequence[Document]) -> Vocabulary:
    if not documents:
        raise ValueError("cannot build a vocabulary from zero documents")
    return Vocabulary(tok for d in documents for s in d.sentences for tok in s.tokens)


def corpus_stats(corpus: Corpus | Sequence[Document]) -> CorpusStats:
    docs = corpus.documents if isinstance(corpus, Corpus) else list(corpus)
    if not docs:
        raise ValueError("corpus is empty")
    lengths = np.array([len(d) for d in docs], dtype=float)
    total = 0
    types = set()
    for d in docs:
        for s in d.sentences:
            total += len(s.tokens)
            types.update(s.tokens)
    return CorpusStats(
        avg_doc_length_sentences=float(lengths.mean()),
        stddev_length=float(lengths.std()),
        vocab_size=len(types),
        token_type_ratio=total / len(types),
    )


# -- I/O ----------------------------------------------------------------------


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return records


def _documents_from_records(records: list[dict], path: Path) -> list[Document]:
    if not records:
        return []
    if "sentences" in records[0]:
        docs = []
        for rec in records:
            try:
                docs.append(Document.from_text(str(rec["doc_id"]), rec["sentences"]))
            except ValueError as exc:
                logger.warning("skipping %s: %s", rec.get("doc_id"), exc)
        return docs
    if "tokens" in records[0]:
        grouped: dict[str, list[dict]] = {}
        for rec in records:
            grouped.setdefault(str(rec["doc_id"]), []).append(rec)
        docs = []
        for doc_id, recs in grouped.items():
            recs.sort(key=lambda r: r["index"])
            docs.append(Document.from_tokens(doc_id, [r["tokens"] for r in recs], [r.get("raw", "") for r in recs]))
        return docs
    raise ValueError(f"{path}: unrecognized JSONL records (need 'sentences' or 'tokens')")


def read_text_document(path: Path, doc_id: str | None = None) -> Document:
    text = Path(path).read_text(encoding="utf-8")
    return Document.from_text(doc_id or Path(path).stem, split_sentences(text))


def load_corpus(path: str | Path, vocabulary: Vocabulary | None = None) -> Corpus:
    """Load a corpus from a directory of ``.txt`` files or a JSONL file."""
    path = Path(path)
    if path.is_dir():
        docs = []
        for f in sorted(path.glob("*.txt")):
            try:
                docs.append(read_text_document(f))
            except ValueError as exc:
                logger.warning("skipping %s: %s", f.name, exc)
    elif path.is_file():
        docs = _documents_from_records(_read_jsonl(path), path)
    else:
        raise FileNotFoundError(f"no such corpus: {path}")
    if not docs:
        raise ValueError(f"{path}: no usable documents")
    return Corpus(docs, vocabulary)


def corpus_records(corpus: Corpus | Iterable[Document]) -> Iterable[dict]:
    for doc in corpus:
        for s in doc.sentences:
            yield {"doc_id": s.doc_id, "index": s.index, "raw": s.raw, "tokens": list(s.tokens)}


def save_corpus(corpus: Corpus | Iterable[Document], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in corpus_records(corpus):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
