"""Loading, validating, normalizing and writing word embedding sets.

Two plain-text layouts are understood:

``header``
    First line is ``"<n> <d>"``; each following line is a token followed by
    ``d`` whitespace-separated floats (word2vec / FastText ``.vec`` style).
``headerless``
    Same rows without the leading size line (GloVe style). ``d`` is inferred
    from the first row.

Tokens are any run of non-whitespace characters. Files are read and written
as UTF-8 with ``surrogateescape`` so undecodable bytes survive a round trip.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

FORMATS = ("header", "headerless")
ENCODING = "utf-8"
ERRORS = "surrogateescape"

# word -> corpus occurrence count
FrequencyTable = dict


def _freeze(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """An ordered vocabulary with one row vector per word.

    The vector matrix is stored read-only; derive new sets instead of
    mutating one in place.
    """

    words: tuple
    vectors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        words = tuple(self.words)
        vectors = _freeze(self.vectors)
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be a 2-d matrix, got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValidationError("vector dimension must be at least 1")
        if len(words) != vectors.shape[0]:
            raise ValidationError(
                f"{len(words)} words but {vectors.shape[0]} vector rows"
            )
        if len(set(words)) != len(words):
            seen = set()
            dup = next(w for w in words if w in seen or seen.add(w))
            raise ValidationError(f"duplicate token {dup!r}")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def index(self) -> dict:
        """Map from token to row number."""
        return {w: i for i, w in enumerate(self.words)}

    def __len__(self):
        return self.n

    def __contains__(self, word):
        return word in self.index

    def vector(self, word) -> np.ndarray:
        return self.vectors[self.index[word]]

    def subset(self, words: Sequence) -> "EmbeddingSet":
        """Return the rows for ``words`` in the given order."""
        rows = [self.index[w] for w in words]
        return EmbeddingSet(words, self.vectors[rows], self.meta)

    def replace(self, vectors=None, **meta) -> "EmbeddingSet":
        """Copy with new vectors and/or updated metadata entries."""
        new_meta = {**self.meta, **meta}
        return type(self)(self.words, self.vectors if vectors is None else vectors, new_meta)


@dataclass(frozen=True, eq=False)
class EmbeddingEnsemble:
    """k embedding sets over one shared word order and dimension."""

    sets: tuple
    dropped: tuple = ()

    def __post_init__(self):
        sets = tuple(self.sets)
        if len(sets) < 2:
            raise ValidationError(f"an ensemble needs at least 2 sets, got {len(sets)}")
        first = sets[0]
        for i, s in enumerate(sets[1:], start=2):
            if s.d != first.d:
                raise ValidationError(f"set {i} has dimension {s.d}, expected {first.d}")
            if s.words != first.words:
                raise ValidationError(
                    f"set {i} vocabulary differs from set 1; use align_vocabularies"
                )
        dropped = tuple(self.dropped) if self.dropped else (0,) * len(sets)
        if len(dropped) != len(sets):
            raise ValidationError("drop counts must match the number of sets")
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "dropped", dropped)

    @property
    def k(self) -> int:
        return len(self.sets)

    @property
    def n(self) -> int:
        return self.sets[0].n

    @property
    def d(self) -> int:
        return self.sets[0].d

    @property
    def words(self) -> tuple:
        return self.sets[0].words

    def __len__(self):
        return self.k

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def matrices(self) -> list:
        return [s.vectors for s in self.sets]

    def drop_report(self) -> dict:
        """Words dropped from each input set, keyed ``set1``, ``set2``, ..."""
        report = {}
        for i, (s, count) in enumerate(zip(self.sets, self.dropped), start=1):
            report[f"set{i}"] = count
        return report

    @classmethod
    def from_matrices(cls, matrices: Iterable, words: Sequence | None = None) -> "EmbeddingEnsemble":
        """Build an ensemble from bare matrices, generating tokens if needed."""
        matrices = [np.asarray(m, dtype=np.float64) for m in matrices]
        if words is None:
            words = [f"w{t}" for t in range(matrices[0].shape[0])]
        return cls(tuple(EmbeddingSet(words, m) for m in matrices))


def load_embeddings(path, format: str = "header") -> EmbeddingSet:
    """Read an embedding set from a text file.

    Parameters
    ----------
    path : str or PathLike
        File to read.
    format : {"header", "headerless"}
        Whether the first line carries ``"<n> <d>"``.

    Raises
    ------
    ParseError
        Wrong field count, non-numeric value, bad header, or a header row
        count that disagrees with the body. The message carries the line number.
    ValidationError
        Empty file or duplicate token.
    """
    if format not in FORMATS:
        raise ValidationError(f"unknown embedding format {format!r}; expected one of {FORMATS}")
    words = []
    rows = []
    expected_n = None
    d = None
    with open(path, encoding=ENCODING, errors=ERRORS) as f:
        lineno = 0
        if format == "header":
            for lineno, line in enumerate(f, start=1):
                if line.strip():
                    break
            else:
                raise ValidationError(f"{path}: empty embedding file")
            fields = line.split()
            try:
                if len(fields) != 2:
                    raise ValueError
                expected_n, d = int(fields[0]), int(fields[1])
                if expected_n < 0 or d < 1:
                    raise ValueError
            except ValueError:
                raise ParseError(
                    f"expected header '<n> <d>', got {line.strip()[:60]!r}", path, lineno
                ) from None
        seen = {}
        for lineno, line in enumerate(f, start=lineno + 1):
            fields = line.split()
            if not fields:
                continue
            if d is None:
                d = len(fields) - 1
                if d < 1:
                    raise ParseError("row has a token but no vector values", path, lineno)
            if len(fields) - 1 != d:
                raise ParseError(
                    f"expected {d} values after the token, found {len(fields) - 1}", path, lineno
                )
            try:
                values = [float(x) for x in fields[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", path, lineno) from None
            token = fields[0]
            if token in seen:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate token {token!r} (first seen on line {seen[token]})"
                )
            seen[token] = lineno
            words.append(token)
            rows.append(values)
    if not words:
        if expected_n == 0:
            raise ValidationError(f"{path}: header declares an empty vocabulary")
        raise ValidationError(f"{path}: no embedding rows found")
    if expected_n is not None and expected_n != len(words):
        raise ParseError(f"header declares {expected_n} rows but file has {len(words)}", path, 1)
    vectors = np.array(rows, dtype=np.float64)
    return EmbeddingSet(words, vectors, {"source": os.fspath(path)})


def _format_row(values, precision):
    if precision is None:
        return " ".join(repr(float(v)) for v in values)
    return " ".join(f"{v:.{precision}g}" for v in values)


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding=ENCODING, errors=ERRORS, newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_embeddings(emb: EmbeddingSet, path, format: str = "header", precision: int | None = None):
    """Write ``emb`` so that :func:`load_embeddings` can read it back.

    ``precision`` is the number of significant digits; ``None`` writes the
    shortest representation that round-trips each float exactly. The file is
    written to a temporary sibling and renamed, so a failure never leaves a
    truncated output behind.
    """
    if format not in FORMATS:
        raise ValidationError(f"unknown embedding format {format!r}; expected one of {FORMATS}")
    if precision is not None and precision < 1:
        raise ValidationError("precision must be at least 1 significant digit")
    lines = []
    if format == "header":
        lines.append(f"{emb.n} {emb.d}")
    for word, row in zip(emb.words, emb.vectors):
        lines.append(f"{word} {_format_row(row, precision)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def align_vocabularies(sets: Sequence[EmbeddingSet]) -> EmbeddingEnsemble:
    """Restrict all sets to their common vocabulary, in the first set's order.

    Words missing from any set are dropped (with a logged warning) rather
    than treated as an error; the per-set drop counts are kept on the
    returned ensemble (see :meth:`EmbeddingEnsemble.drop_report`).
    """
    sets = list(sets)
    if len(sets) < 2:
        raise ValidationError(f"need at least 2 embedding sets, got {len(sets)}")
    d = sets[0].d
    for i, s in enumerate(sets[1:], start=2):
        if s.d != d:
            raise ValidationError(f"set {i} has dimension {s.d}, set 1 has {d}")

    if all(s.words == sets[0].words for s in sets[1:]):
        return EmbeddingEnsemble(tuple(sets))

    common = set(sets[0].words)
    for s in sets[1:]:
        common.intersection_update(s.words)
    if not common:
        raise ValidationError("embedding sets share no vocabulary")
    order = [w for w in sets[0].words if w in common]
    dropped = tuple(s.n - len(order) for s in sets)
    for i, count in enumerate(dropped, start=1):
        if count:
            logger.warning("set %d: dropped %d words not shared by all sets", i, count)
    aligned = tuple(s if s.words == tuple(order) else s.subset(order) for s in sets)
    return EmbeddingEnsemble(aligned, dropped)


def center_and_normalize(emb: EmbeddingSet, zero_tol: float = 1e-12) -> EmbeddingSet:
    """Subtract the per-dimension mean, then scale each row to unit length.

    Rows whose norm after centering is at most ``zero_tol`` become exact
    zeros and are counted in ``meta["zero_rows"]``; they are never dropped,
    so ensembles stay row-synchronized.
    """
    X = emb.vectors
    centered = X - X.mean(axis=0, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    zero = norms <= zero_tol
    safe = np.where(zero, 1.0, norms)
    out = centered / safe[:, None]
    out[zero] = 0.0
    n_zero = int(zero.sum())
    if n_zero:
        logger.warning("%d rows are zero after centering", n_zero)
    return emb.replace(out, centered=True, normalized=True, zero_rows=n_zero)


def load_frequency_table(path) -> FrequencyTable:
    """Read ``token<TAB>count`` lines into a dict. Blank lines are ignored."""
    table = {}
    with open(path, encoding=ENCODING, errors=ERRORS) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"expected 'token<TAB>count', got {line[:60]!r}", path, lineno)
            token, raw = parts[0], parts[1].strip()
            try:
                count = int(raw)
            except ValueError:
                raise ParseError(f"count {raw!r} is not an integer", path, lineno) from None
            if count < 0:
                raise ParseError(f"negative count {count}", path, lineno)
            table[token] = count
    return table

