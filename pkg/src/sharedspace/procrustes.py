"""Orthogonal Procrustes alignment and shared-space averaging of k sets.

Convention: embeddings are stored as rows, transforms act on column
vectors. Mapping a whole set ``X`` (n x d) by ``T`` is therefore
``X @ T.T``.

The multi-set fit works entirely on the d x d cross-correlation matrices
``C[i, j] = sum_t x_{j,t} x_{i,t}^T`` computed once up front; after that no
sweep touches the n x d data, so iteration cost depends on k and d only.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .embedding_store import EmbeddingEnsemble, EmbeddingSet
from .errors import ValidationError


def orthogonality_error(T) -> float:
    """Frobenius norm of ``T^T T - I``."""
    T = np.asarray(T)
    return float(np.linalg.norm(T.T @ T - np.eye(T.shape[1])))


def orthogonal_project(M) -> np.ndarray:
    """Closest orthogonal matrix to ``M`` in Frobenius norm (polar factor).

    Returns ``U @ Vt`` for ``M = U diag(s) Vt``. Reflections are allowed,
    so the determinant may be -1. For singular ``M`` any SVD is accepted and
    the result is one of several equally good answers.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def procrustes_align(source, target) -> np.ndarray:
    """Orthogonal ``T`` minimizing ``sum_t ||T source_t - target_t||^2``.

    Parameters
    ----------
    source, target : (n, d) array_like
        Corresponding rows.

    Returns
    -------
    T : (d, d) ndarray
        ``source @ T.T`` is the best orthogonal image of ``source`` onto
        ``target``.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.ndim != 2 or source.shape != target.shape:
        raise ValidationError(
            f"source and target must be equal-shape matrices, got {source.shape} and {target.shape}"
        )
    if source.shape[0] < 1 or source.shape[1] < 1:
        raise ValidationError("need at least one row and one column")
    return orthogonal_project(target.T @ source)


@dataclass(frozen=True)
class GpaConfig:
    """Stopping rule for :func:`gpa_fit`.

    Iteration stops once a sweep lowers the score by less than
    ``rel_tolerance`` times its previous value, or after ``max_sweeps``.
    """

    max_sweeps: int = 300
    rel_tolerance: float = 1e-7
    record_history: bool = True

    def __post_init__(self):
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise ValidationError(f"max_sweeps must be a positive integer, got {self.max_sweeps!r}")
        if not self.rel_tolerance > 0:
            raise ValidationError(f"rel_tolerance must be positive, got {self.rel_tolerance!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class CrossCorrelationCache:
    """Pairwise cross-correlations of an ensemble plus per-set Gram traces.

    Only ``i < j`` blocks are stored; :meth:`get` derives the rest by
    transposition (``C[j, i] = C[i, j].T``).
    """

    def __init__(self, upper: dict, gram_traces, d: int):
        self._upper = upper
        self.gram_traces = np.asarray(gram_traces, dtype=np.float64)
        self.k = len(self.gram_traces)
        self.d = d

    def get(self, i: int, j: int) -> np.ndarray:
        """``C_ij = sum_t x_{j,t} x_{i,t}^T`` (0-based indices)."""
        if i == j:
            raise KeyError("diagonal blocks are not cached")
        if i < j:
            return self._upper[i, j]
        return self._upper[j, i].T

    def pairs(self):
        return sorted(self._upper)

    @property
    def total_gram(self) -> float:
        return float(self.gram_traces.sum())


def compute_cross_correlations(ensemble: EmbeddingEnsemble, chunk_size: int | None = None) -> CrossCorrelationCache:
    """Precompute every ``C_ij`` (i < j) and the Gram trace of each set.

    ``chunk_size`` bounds how many vocabulary rows enter each partial
    product; chunks are accumulated in a fixed order so the result does not
    depend on the chunking schedule's timing.
    """
    mats = ensemble.matrices()
    k, n, d = ensemble.k, ensemble.n, ensemble.d
    step = n if not chunk_size else int(chunk_size)
    if step < 1:
        raise ValidationError("chunk_size must be positive")
    upper = {(i, j): np.zeros((d, d)) for i in range(k) for j in range(i + 1, k)}
    traces = np.zeros(k)
    for start in range(0, n, step):
        blocks = [m[start:start + step] for m in mats]
        for i in range(k):
            traces[i] += np.einsum("ij,ij->", blocks[i], blocks[i])
            for j in range(i + 1, k):
                upper[i, j] += blocks[j].T @ blocks[i]
    for C in upper.values():
        C.setflags(write=False)
    return CrossCorrelationCache(upper, traces, d)


@dataclass
class TransformSet:
    """Fitted maps into the shared space and how the fit went.

    ``score_history[m]`` is the objective after sweep ``m + 1``;
    ``sweep_seconds`` holds matching wall times and is left out of
    :meth:`to_dict` so serialized fits are reproducible byte for byte.
    """

    transforms: list
    sweeps_run: int = 0
    score_history: list = field(default_factory=list)
    converged: bool = False
    config: GpaConfig | None = None
    sweep_seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.transforms)

    def __iter__(self):
        return iter(self.transforms)

    def __getitem__(self, i):
        return self.transforms[i]

    @property
    def k(self) -> int:
        return len(self.transforms)

    @property
    def d(self) -> int:
        return self.transforms[0].shape[0]

    @property
    def max_orthogonality_error(self) -> float:
        return max(orthogonality_error(T) for T in self.transforms)

    @classmethod
    def identity(cls, k: int, d: int) -> "TransformSet":
        return cls([np.eye(d) for _ in range(k)], converged=True)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "transforms": [T.tolist() for T in self.transforms],
            "sweeps_run": self.sweeps_run,
            "score_history": [float(s) for s in self.score_history],
            "converged": self.converged,
            "config": self.config.to_dict() if self.config else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransformSet":
        config = GpaConfig(**data["config"]) if data.get("config") else None
        return cls(
            [np.array(T, dtype=np.float64) for T in data["transforms"]],
            sweeps_run=data.get("sweeps_run", 0),
            score_history=list(data.get("score_history", [])),
            converged=data.get("converged", False),
            config=config,
        )


class FusedEmbedding(EmbeddingSet):
    """Per-word mean of mapped vectors; behaves like any other embedding set."""


def cached_score(cache: CrossCorrelationCache, transforms) -> float:
    """Objective value computed from the cache alone (orthogonal transforms)."""
    k = cache.k
    cross = 0.0
    for i, j in cache.pairs():
        # tr(T_i^T T_j C_ij)
        cross += np.sum(transforms[i] * (transforms[j] @ cache.get(i, j)))
    # diagonal terms contribute tr(C_ii) = gram trace each for orthogonal T_i
    return float(cache.total_gram - (cache.total_gram + 2.0 * cross) / k)


def gpa_fit(cache: CrossCorrelationCache, k: int | None = None, d: int | None = None,
            config: GpaConfig | None = None) -> TransformSet:
    """Fit k orthogonal transforms by block-coordinate descent.

    Starts from ``T_1 = ... = T_{k-1} = 0`` and ``T_k = I``. Each inner step
    replaces ``T_i`` with the polar factor of ``sum_{j != i} T_j C_ij``,
    which is the exact minimizer of the objective over ``T_i`` with the
    others held fixed; sets are visited in ascending order and every update
    is seen by the next one. The objective therefore never increases once
    every transform has been updated.

    Raises nothing on slow convergence: the result then has
    ``converged=False``.
    """
    config = config or GpaConfig()
    k = cache.k if k is None else k
    d = cache.d if d is None else d
    if k != cache.k or d != cache.d:
        raise ValidationError(f"cache holds k={cache.k}, d={cache.d}; got k={k}, d={d}")
    if k < 2:
        raise ValidationError("need at least 2 sets")

    T = [np.zeros((d, d)) for _ in range(k - 1)] + [np.eye(d)]
    history = []
    seconds = []
    converged = False
    # a score this close to zero is the global minimum up to rounding
    floor = 1e-14 * cache.total_gram
    prev = None
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        tic = time.perf_counter()
        for i in range(k):
            M = np.zeros((d, d))
            for j in range(k):
                if j != i:
                    M += T[j] @ cache.get(i, j)
            T[i] = orthogonal_project(M)
        score = cached_score(cache, T)
        seconds.append(time.perf_counter() - tic)
        if config.record_history:
            history.append(score)
        if score <= floor:
            converged = True
            break
        if prev is not None and prev - score < config.rel_tolerance * prev:
            converged = True
            break
        prev = score
    if not config.record_history:
        history = [score]
    return TransformSet(T, sweeps, history, converged, config, seconds)


def _as_matrices(transforms) -> list:
    mats = [np.asarray(T, dtype=np.float64) for T in transforms]
    return mats


def _check_shapes(ensemble: EmbeddingEnsemble, mats: list):
    if len(mats) != ensemble.k:
        raise ValidationError(f"{len(mats)} transforms for an ensemble of {ensemble.k} sets")
    for i, T in enumerate(mats, start=1):
        if T.shape != (ensemble.d, ensemble.d):
            raise ValidationError(
                f"transform {i} has shape {T.shape}, expected {(ensemble.d, ensemble.d)}"
            )


def _mean_of_mapped(mats_and_transforms, k):
    acc = None
    for X, T in mats_and_transforms:
        mapped = X @ T.T
        acc = mapped if acc is None else acc + mapped
    return acc / k


def compute_fused(ensemble: EmbeddingEnsemble, transforms) -> FusedEmbedding:
    """Average the mapped sets: ``y_t = (1/k) sum_i T_i x_{i,t}``."""
    mats = _as_matrices(transforms)
    _check_shapes(ensemble, mats)
    Y = _mean_of_mapped(zip(ensemble.matrices(), mats), ensemble.k)
    return FusedEmbedding(ensemble.words, Y, {"method": "shared-space mean", "k": ensemble.k})


def alignment_score(ensemble: EmbeddingEnsemble, transforms) -> float:
    """Objective ``sum_i sum_t ||T_i x_{i,t} - y_t||^2`` with the optimal ``y``.

    Evaluated directly on the n x d data; this is the reference path that
    the cache-based score inside :func:`gpa_fit` is checked against.
    """
    mats = _as_matrices(transforms)
    _check_shapes(ensemble, mats)
    mapped = [X @ T.T for X, T in zip(ensemble.matrices(), mats)]
    Y = sum(mapped[1:], mapped[0]) / ensemble.k
    return float(sum(np.sum((M - Y) ** 2) for M in mapped))


def ssea(ensemble: EmbeddingEnsemble, config: GpaConfig | None = None,
         chunk_size: int | None = None) -> tuple:
    """Align an ensemble into a shared space and average it.

    Returns ``(fused, transforms)``.
    """
    cache = compute_cross_correlations(ensemble, chunk_size=chunk_size)
    fit = gpa_fit(cache, ensemble.k, ensemble.d, config)
    fused = compute_fused(ensemble, fit)
    fused = fused.replace(sweeps_run=fit.sweeps_run, converged=fit.converged)
    return fused, fit
