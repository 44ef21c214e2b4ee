"""How consistent is an embedding method across independent runs?

Two instances are compared after mapping one onto the other with the best
orthogonal transform; what is left over is the mapping discrepancy, per
word or averaged over the vocabulary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .embedding_store import EmbeddingSet
from .errors import ValidationError
from .procrustes import procrustes_align

DEFAULT_NUM_PAIRS = 10
DEFAULT_BIN_WIDTH = 50


def _check_pair(a: EmbeddingSet, b: EmbeddingSet):
    if a.d != b.d:
        raise ValidationError(f"dimension mismatch: {a.d} vs {b.d}")
    if a.words != b.words:
        raise ValidationError("embedding sets must share the same vocabulary in the same order")


def per_word_discrepancy(a: EmbeddingSet, b: EmbeddingSet) -> np.ndarray:
    """Squared residual ``||Q a_t - b_t||^2`` per word, ``Q`` fitted from a to b."""
    _check_pair(a, b)
    Q = procrustes_align(a.vectors, b.vectors)
    resid = a.vectors @ Q.T - b.vectors
    return np.einsum("ij,ij->i", resid, resid)


def pairwise_mse(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Mean over words of :func:`per_word_discrepancy`."""
    return float(np.mean(per_word_discrepancy(a, b)))


@dataclass
class StabilityReport:
    mean_mse: float
    std_mse: float
    num_pairs: int
    per_pair_mse: list
    pairs: list = field(default_factory=list)
    seed: int | None = None
    std_kind: str = "population"

    def to_dict(self) -> dict:
        return {
            "mean_mse": self.mean_mse,
            "std_mse": self.std_mse,
            "num_pairs": self.num_pairs,
            "per_pair_mse": list(self.per_pair_mse),
            "pairs": [list(p) for p in self.pairs],
            "seed": self.seed,
            "std_kind": self.std_kind,
        }


def sample_pairs(k: int, num_pairs: int, seed=None) -> list:
    """Draw distinct unordered index pairs uniformly without replacement.

    Every pair is returned, in lexicographic order, when ``num_pairs`` is at
    least ``k (k - 1) / 2``.
    """
    candidates = list(itertools.combinations(range(k), 2))
    if num_pairs >= len(candidates):
        return candidates
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(candidates), size=num_pairs, replace=False)
    return [candidates[p] for p in sorted(picked)]


def average_stability(instances, num_pairs: int = DEFAULT_NUM_PAIRS, seed=0) -> StabilityReport:
    """Mean and population std of :func:`pairwise_mse` over sampled pairs."""
    instances = list(instances)
    if len(instances) < 2:
        raise ValidationError(f"need at least 2 instances, got {len(instances)}")
    if num_pairs < 1:
        raise ValidationError("num_pairs must be at least 1")
    pairs = sample_pairs(len(instances), num_pairs, seed)
    values = [pairwise_mse(instances[i], instances[j]) for i, j in pairs]
    arr = np.array(values)
    return StabilityReport(
        mean_mse=float(arr.mean()),
        std_mse=float(arr.std()),
        num_pairs=len(pairs),
        per_pair_mse=values,
        pairs=pairs,
        seed=seed,
    )


def mean_discrepancy(instances, pairs) -> np.ndarray:
    """Per-word discrepancy averaged over the given instance pairs."""
    acc = None
    for i, j in pairs:
        disc = per_word_discrepancy(instances[i], instances[j])
        acc = disc if acc is None else acc + disc
    return acc / len(pairs)


@dataclass
class BinnedCurve:
    """Mean discrepancy per frequency bin; ``points`` rows are
    ``(bin_lower, mean_mse, n_words)`` in ascending bin order."""

    bin_width: int
    points: list
    missing_words: int = 0

    @property
    def bin_lowers(self) -> list:
        return [p[0] for p in self.points]

    @property
    def means(self) -> list:
        return [p[1] for p in self.points]

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "points": [{"bin_lower": lo, "mean_mse": m, "n_words": c} for lo, m, c in self.points],
            "missing_words": self.missing_words,
        }

    def to_tsv(self) -> str:
        lines = ["bin_lower\tmean_mse\tn_words"]
        lines += [f"{lo}\t{m!r}\t{c}" for lo, m, c in self.points]
        return "\n".join(lines) + "\n"


def frequency_binned_mse(discrepancy, freqs, vocab, bin_width: int = DEFAULT_BIN_WIDTH) -> BinnedCurve:
    """Group per-word discrepancies by ``floor(count / bin_width)``.

    Words absent from ``freqs`` are skipped and counted in
    ``missing_words``; empty bins are not emitted.
    """
    if int(bin_width) != bin_width or bin_width <= 0:
        raise ValidationError(f"bin_width must be a positive integer, got {bin_width!r}")
    bin_width = int(bin_width)
    discrepancy = np.asarray(discrepancy, dtype=np.float64)
    vocab = list(vocab)
    if discrepancy.shape != (len(vocab),):
        raise ValidationError(
            f"{discrepancy.shape[0] if discrepancy.ndim else 0} discrepancies for {len(vocab)} words"
        )
    rows = []
    bins = []
    for t, word in enumerate(vocab):
        count = freqs.get(word)
        if count is None:
            continue
        rows.append(t)
        bins.append(int(count) // bin_width)
    missing = len(vocab) - len(rows)
    if not rows:
        return BinnedCurve(bin_width, [], missing)
    bins = np.array(bins)
    values = discrepancy[rows]
    points = []
    for b in np.unique(bins):
        members = values[bins == b]
        points.append((int(b) * bin_width, float(members.mean()), int(members.size)))
    return BinnedCurve(bin_width, points, missing)


def is_strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:])) and not any(math.isnan(v) for v in values)
