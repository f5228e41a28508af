"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numbers
from typing import Sequence

from .corpus import Corpus, Document


def check_documents(X, min_docs: int = 1) -> list[Document]:
    """Coerce ``X`` to a list of :class:`Document`.

    Accepts a :class:`Corpus`, a sequence of documents, or a nested sequence
    where each document is a list of sentences given as token lists.
    """
    if isinstance(X, Corpus):
        docs = list(X.documents)
    elif isinstance(X, Document):
        docs = [X]
    else:
        docs = []
        for i, item in enumerate(X):
            if isinstance(item, Document):
                docs.append(item)
            elif isinstance(item, Sequence) and not isinstance(item, str):
                docs.append(Document.from_tokens(f"doc{i}", [list(s) for s in item]))
            else:
                raise TypeError(f"cannot interpret {type(item).__name__} as a document")
    if len(docs) < min_docs:
        raise ValueError(f"need at least {min_docs} document(s), got {len(docs)}")
    return docs


INTEGRAL = numbers.Integral
REAL = numbers.Real
