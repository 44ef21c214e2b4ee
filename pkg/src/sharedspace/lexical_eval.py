"""Word-similarity and analogy benchmarks, plus the unaligned-average baseline.

Similarity files hold ``word1<TAB>word2<TAB>score`` lines; analogy files hold
``a b c d`` lines (``a : b :: c : d``) and may contain ``: section`` header
lines, which are skipped.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .embedding_store import ENCODING, ERRORS, EmbeddingEnsemble, EmbeddingSet
from .errors import ParseError, ValidationError
from .procrustes import FusedEmbedding


@dataclass(frozen=True)
class SimilarityDataset:
    items: tuple
    name: str = "similarity"

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class AnalogyDataset:
    items: tuple
    name: str = "analogy"

    def __post_init__(self):
        for item in self.items:
            if len(set(item)) != 4:
                raise ValidationError(f"analogy item {item} repeats a word")

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class EvalResult:
    metric: str
    value: float
    evaluated: int
    skipped_oov: int
    dataset: str = ""

    def to_row(self, method: str) -> list:
        return [method, self.dataset, self.metric, repr(self.value), str(self.evaluated), str(self.skipped_oov)]


TSV_HEADER = ["method", "dataset", "metric", "value", "evaluated", "skipped"]


def rank_average(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    start = 0
    n = len(values)
    while start < n:
        stop = start + 1
        while stop < n and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        # positions start..stop-1 hold ranks start+1..stop
        ranks[order[start:stop]] = (start + 1 + stop) / 2.0
        start = stop
    return ranks


def spearman(xs, ys) -> float:
    """Spearman's rho: Pearson correlation of tie-averaged ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValidationError(f"inputs must be 1-d of equal length, got {xs.shape} and {ys.shape}")
    if len(xs) < 2:
        raise ValidationError("need at least 2 observations")
    rx = rank_average(xs)
    ry = rank_average(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0:
        raise ValidationError("a constant input has no rank correlation")
    return float(np.clip(np.dot(rx, ry) / denom, -1.0, 1.0))


def _lookup(emb: EmbeddingSet, word, lowercase_fallback: bool):
    idx = emb.index.get(word)
    if idx is None and lowercase_fallback:
        idx = emb.index.get(word.lower())
    return idx


def _unit_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(norms == 0, 1.0, norms)


def eval_similarity(emb: EmbeddingSet, dataset: SimilarityDataset,
                    lowercase_fallback: bool = False) -> EvalResult:
    """Spearman correlation between cosine similarities and human scores.

    Pairs with an out-of-vocabulary word are skipped and counted.
    """
    X = _unit_rows(emb.vectors)
    cosines, human = [], []
    skipped = 0
    for w1, w2, score in dataset.items:
        i = _lookup(emb, w1, lowercase_fallback)
        j = _lookup(emb, w2, lowercase_fallback)
        if i is None or j is None:
            skipped += 1
            continue
        cosines.append(float(X[i] @ X[j]))
        human.append(score)
    if len(cosines) < 2:
        raise ValidationError(
            f"{dataset.name}: only {len(cosines)} of {len(dataset)} pairs are in vocabulary"
        )
    return EvalResult("spearman", spearman(cosines, human), len(cosines), skipped, dataset.name)


def predict_analogies(emb: EmbeddingSet, queries, batch_size: int = 256) -> np.ndarray:
    """3CosAdd answers for ``(a, b, c)`` row-index triples.

    Returns the row index maximizing ``cos(v, x_b - x_a + x_c)`` over unit
    vectors, never one of ``a, b, c``.
    """
    X = _unit_rows(emb.vectors)
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
    out = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), batch_size):
        q = queries[start:start + batch_size]
        target = X[q[:, 1]] - X[q[:, 0]] + X[q[:, 2]]
        scores = target @ X.T
        rows = np.arange(len(q))[:, None]
        scores[rows, q] = -np.inf
        out[start:start + batch_size] = np.argmax(scores, axis=1)
    return out


def eval_analogy(emb: EmbeddingSet, dataset: AnalogyDataset,
                 lowercase_fallback: bool = False) -> EvalResult:
    """Accuracy of 3CosAdd on the in-vocabulary analogy items."""
    queries, answers = [], []
    skipped = 0
    for item in dataset.items:
        idx = [_lookup(emb, w, lowercase_fallback) for w in item]
        if any(i is None for i in idx):
            skipped += 1
            continue
        queries.append(idx[:3])
        answers.append(idx[3])
    if not queries:
        raise ValidationError(f"{dataset.name}: no analogy item is fully in vocabulary")
    predicted = predict_analogies(emb, queries)
    correct = int(np.sum(predicted == np.asarray(answers)))
    return EvalResult("accuracy", correct / len(queries), len(queries), skipped, dataset.name)


def naive_average(ensemble: EmbeddingEnsemble) -> FusedEmbedding:
    """Per-word mean across sets with no alignment at all."""
    mats = ensemble.matrices()
    acc = mats[0]
    for X in mats[1:]:
        acc = acc + X
    return FusedEmbedding(ensemble.words, acc / ensemble.k, {"method": "naive mean", "k": ensemble.k})


def load_similarity_dataset(path, name: str | None = None) -> SimilarityDataset:
    items = []
    with open(path, encoding=ENCODING, errors=ERRORS) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"expected 'word1<TAB>word2<TAB>score', got {line[:60]!r}", path, lineno)
            w1, w2, raw = (p.strip() for p in parts)
            if not w1 or not w2:
                raise ParseError("empty word field", path, lineno)
            try:
                score = float(raw)
            except ValueError:
                raise ParseError(f"score {raw!r} is not a number", path, lineno) from None
            items.append((w1, w2, score))
    return SimilarityDataset(tuple(items), name or _stem(path))


def load_analogy_dataset(path, name: str | None = None) -> AnalogyDataset:
    items = []
    with open(path, encoding=ENCODING, errors=ERRORS) as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith(":"):
                continue
            words = stripped.split()
            if len(words) != 4:
                raise ParseError(f"expected 4 words, found {len(words)}", path, lineno)
            if len(set(words)) != 4:
                raise ParseError(f"analogy item repeats a word: {stripped!r}", path, lineno)
            items.append(tuple(words))
    return AnalogyDataset(tuple(items), name or _stem(path))


def _stem(path) -> str:
    return os.path.splitext(os.path.basename(os.fspath(path)))[0]
