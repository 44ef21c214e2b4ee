"""Ensembles with a planted ground truth.

Each synthetic set is ``x_{i,t} = R_i (y*_t + eps_{i,t})`` with ``R_i`` a
random orthogonal matrix and Gaussian noise ``eps``. Because the truth and
the maps are known, these ensembles serve as the oracle for every
denoising claim: exact recovery without noise, a ``1/k`` reduction of the
noise variance after fusion, and the failure of unaligned averaging.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .embedding_store import EmbeddingEnsemble, EmbeddingSet
from .errors import ValidationError
from .lexical_eval import naive_average
from .procrustes import GpaConfig, alignment_score, compute_cross_correlations, gpa_fit, compute_fused
from .stability import average_stability, pairwise_mse


@dataclass(frozen=True)
class SynthConfig:
    """Shape and noise level of a synthetic ensemble.

    With ``freq_profile`` set, every word gets a count drawn from a power law
    ``p(c) ~ c**-freq_profile`` on ``[freq_min, freq_max]`` and its noise
    standard deviation becomes ``sigma * sqrt(freq_min / count)``; ``sigma``
    is then the noise level of the rarest words.
    """

    n: int = 2000
    d: int = 20
    k: int = 10
    sigma: float = 0.1
    seed: int = 0
    freq_profile: float | None = None
    freq_min: int = 1
    freq_max: int = 400

    def __post_init__(self):
        for name in ("n", "d", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be non-negative, got {self.sigma!r}")
        if self.freq_profile is not None and not 1 <= self.freq_min < self.freq_max:
            raise ValidationError("need 1 <= freq_min < freq_max")

    def to_dict(self) -> dict:
        return asdict(self)


class SyntheticEnsemble(NamedTuple):
    truth: EmbeddingSet
    ensemble: EmbeddingEnsemble
    rotations: list


def random_orthogonal(d: int, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrix; both determinant signs occur."""
    if d < 1:
        raise ValidationError("d must be at least 1")
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    # sign fix makes the distribution uniform over O(d)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def synthetic_words(n: int) -> list:
    return [f"w{t}" for t in range(n)]


def generate_truth(config: SynthConfig) -> EmbeddingSet:
    """Centered i.i.d. standard Gaussian rows (full-rank Gram matrix)."""
    Y = _rng(config.seed, 0).standard_normal((config.n, config.d))
    Y -= Y.mean(axis=0)
    return EmbeddingSet(synthetic_words(config.n), Y, {"source": "synthetic truth"})


def synthetic_frequencies(config: SynthConfig) -> dict:
    """Power-law word counts, or ``{}`` when no profile is configured."""
    if config.freq_profile is None:
        return {}
    a = float(config.freq_profile)
    lo, hi = float(config.freq_min), float(config.freq_max)
    u = _rng(config.seed, 1).random(config.n)
    if abs(a - 1.0) < 1e-12:
        c = lo * (hi / lo) ** u
    else:
        e = 1.0 - a
        c = (lo ** e + u * (hi ** e - lo ** e)) ** (1.0 / e)
    counts = np.clip(np.floor(c), config.freq_min, config.freq_max - 1).astype(int)
    return dict(zip(synthetic_words(config.n), counts.tolist()))


def noise_scales(config: SynthConfig) -> np.ndarray:
    """Per-word noise standard deviation."""
    if config.freq_profile is None:
        return np.full(config.n, float(config.sigma))
    counts = np.array(list(synthetic_frequencies(config).values()), dtype=np.float64)
    return config.sigma * np.sqrt(config.freq_min / counts)


def generate_ensemble(config: SynthConfig, draw: int = 0) -> SyntheticEnsemble:
    """Draw one noisy, randomly rotated ensemble around the configured truth.

    The truth and word counts depend only on ``config.seed``; ``draw``
    selects an independent stream of rotations and noise, so two draws give
    two independent ensembles of the same underlying embedding.
    """
    if config.k < 2:
        raise ValidationError("an ensemble needs k >= 2")
    truth = generate_truth(config)
    scales = noise_scales(config)[:, None]
    rng = _rng(config.seed, 2, draw)
    sets, rotations = [], []
    for i in range(config.k):
        R = random_orthogonal(config.d, rng)
        noisy = truth.vectors + rng.standard_normal((config.n, config.d)) * scales
        sets.append(EmbeddingSet(truth.words, noisy @ R.T, {"source": f"synthetic set {i + 1}"}))
        rotations.append(R)
    return SyntheticEnsemble(truth, EmbeddingEnsemble(tuple(sets)), rotations)


def recovery_error(fused: EmbeddingSet, truth: EmbeddingSet) -> float:
    """MSE to the truth after the best orthogonal alignment of ``fused``."""
    return pairwise_mse(fused, truth)


def expected_fused_error(config: SynthConfig) -> float:
    """Noise-averaging prediction ``d * mean(sigma_t**2) / k``."""
    return float(config.d * np.mean(noise_scales(config) ** 2) / config.k)


def _check(name, passed, measured, expected, detail=""):
    return {
        "name": name,
        "passed": bool(passed),
        "measured": float(measured),
        "expected": expected,
        "detail": detail,
    }


def run_oracle_suite(config: SynthConfig, gpa: GpaConfig | None = None, num_pairs: int = 10) -> dict:
    """Fit synthetic ensembles and compare every outcome with its oracle.

    Returns a JSON-ready verdict whose ``passed`` entry is true only if
    every individual check passed.
    """
    gpa = gpa or GpaConfig()
    first = generate_ensemble(config, draw=0)
    cache = compute_cross_correlations(first.ensemble)
    fit = gpa_fit(cache, config.k, config.d, gpa)
    fused = compute_fused(first.ensemble, fit)
    checks = []

    orth = fit.max_orthogonality_error
    checks.append(_check("orthogonality", orth <= 1e-10, orth, "<= 1e-10"))

    hist = fit.score_history
    worst = max([(b - a) / max(a, 1e-300) for a, b in zip(hist, hist[1:])], default=0.0)
    floor = 1e-12 * cache.total_gram
    monotone = all(b <= a * (1 + 1e-9) or b <= floor for a, b in zip(hist, hist[1:]))
    checks.append(_check("monotone_score", monotone, worst, "relative increase <= 1e-9"))

    direct = alignment_score(first.ensemble, fit)
    cached = hist[-1]
    gap = abs(direct - cached)
    checks.append(_check(
        "cache_score_matches_direct", gap <= 1e-9 * direct + 1e-12 * cache.total_gram, gap,
        "<= 1e-9 relative (+1e-12 of total energy)",
    ))

    err = recovery_error(fused, first.truth)
    if config.sigma == 0:
        checks.append(_check("exact_recovery", err < 1e-10, err, "< 1e-10"))
    else:
        oracle = expected_fused_error(config)
        checks.append(_check(
            "noise_averaging", oracle / 2 <= err <= oracle * 2, err, f"within 2x of {oracle!r}",
        ))

    naive_err = recovery_error(naive_average(first.ensemble), first.truth)
    checks.append(_check(
        "naive_average_fails", naive_err >= 10 * err, naive_err, f">= 10 x {err!r}",
    ))

    if config.sigma > 0:
        second = generate_ensemble(config, draw=1)
        fused_b = compute_fused(second.ensemble, gpa_fit(compute_cross_correlations(second.ensemble),
                                                         config.k, config.d, gpa))
        raw = average_stability(list(first.ensemble) + list(second.ensemble), num_pairs, config.seed)
        den = average_stability([fused, fused_b], num_pairs, config.seed)
        ratio = den.mean_mse / raw.mean_mse
        bound = 3.0 / config.k
        checks.append(_check(
            "stability_ratio", ratio <= bound, ratio, f"<= {bound!r} (oracle 1/k = {1 / config.k!r})",
        ))

    return {
        "config": config.to_dict(),
        "gpa": gpa.to_dict(),
        "sweeps_run": fit.sweeps_run,
        "converged": fit.converged,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
