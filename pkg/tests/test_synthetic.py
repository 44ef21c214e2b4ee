import numpy as np
import pytest

from conftest import make_set
from sharedspace import (
    ValidationError,
    naive_average,
    ssea,
)
from sharedspace.procrustes import orthogonality_error
from sharedspace.synthetic import (
    SynthConfig,
    expected_fused_error,
    generate_ensemble,
    noise_scales,
    random_orthogonal,
    recovery_error,
    run_oracle_suite,
    synthetic_frequencies,
)


def test_random_orthogonal_one_dimensional():
    rng = np.random.default_rng(0)
    values = {float(random_orthogonal(1, rng)[0, 0]) for _ in range(50)}
    assert values == {1.0, -1.0}


@pytest.mark.parametrize("d", [2, 7, 31, 100])
def test_random_orthogonal_is_orthogonal(d):
    Q = random_orthogonal(d, np.random.default_rng(d))
    assert orthogonality_error(Q) <= 1e-10


def test_random_orthogonal_seeded_and_both_signs():
    a = random_orthogonal(5, np.random.default_rng(42))
    b = random_orthogonal(5, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)
    rng = np.random.default_rng(1)
    dets = {round(np.linalg.det(random_orthogonal(4, rng))) for _ in range(40)}
    assert dets == {-1, 1}


def test_random_orthogonal_is_haar_on_average():
    # E[Q] = 0 and E[Q_ij^2] = 1/d for the Haar measure on O(d)
    rng = np.random.default_rng(5)
    qs = np.array([random_orthogonal(3, rng) for _ in range(4000)])
    assert np.abs(qs.mean(axis=0)).max() < 0.05
    np.testing.assert_allclose((qs ** 2).mean(axis=0), 1 / 3, atol=0.03)


def test_noise_free_sets_are_exact_images():
    cfg = SynthConfig(n=50, d=4, k=3, sigma=0.0, seed=9)
    draw = generate_ensemble(cfg)
    for emb, R in zip(draw.ensemble, draw.rotations):
        np.testing.assert_allclose(emb.vectors @ R, draw.truth.vectors, atol=1e-12)


def test_truth_is_centered_and_draws_independent():
    cfg = SynthConfig(n=300, d=5, k=2, sigma=0.1, seed=4)
    a, b = generate_ensemble(cfg, 0), generate_ensemble(cfg, 1)
    np.testing.assert_allclose(a.truth.vectors.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_array_equal(a.truth.vectors, b.truth.vectors)
    assert not np.allclose(a.ensemble[0].vectors, b.ensemble[0].vectors)
    again = generate_ensemble(cfg, 0)
    np.testing.assert_array_equal(again.ensemble[1].vectors, a.ensemble[1].vectors)


def test_noise_free_recovery_is_exact():
    draw = generate_ensemble(SynthConfig(n=400, d=12, k=6, sigma=0.0, seed=1))
    fused, _ = ssea(draw.ensemble)
    assert recovery_error(fused, draw.truth) < 1e-10


def test_fused_error_matches_noise_averaging():
    cfg = SynthConfig(n=2000, d=20, k=10, sigma=0.1, seed=0)
    draw = generate_ensemble(cfg)
    fused, _ = ssea(draw.ensemble)
    # Monte-Carlo estimate: squared norm of the mean of k independent noise vectors
    rng = np.random.default_rng(99)
    mean_noise = rng.normal(0, cfg.sigma, size=(cfg.k, cfg.n, cfg.d)).mean(axis=0)
    oracle = float(np.mean(np.sum(mean_noise ** 2, axis=1)))
    assert oracle == pytest.approx(expected_fused_error(cfg), rel=0.05)
    err = recovery_error(fused, draw.truth)
    assert oracle / 2 <= err <= 2 * oracle


def test_recovery_error_examples(rng):
    truth = make_set(rng.standard_normal((10_000, 8)))
    assert recovery_error(truth, truth) < 1e-24
    rotated = make_set(truth.vectors @ random_orthogonal(8, rng).T)
    assert recovery_error(rotated, truth) < 1e-12
    sigma = 0.2
    noisy = make_set(truth.vectors + sigma * rng.standard_normal(truth.vectors.shape))
    assert recovery_error(noisy, truth) == pytest.approx(sigma ** 2 * 8, rel=0.10)
    with pytest.raises(ValidationError):
        recovery_error(make_set(np.zeros((10, 8))), truth)


def test_fusion_beats_every_single_set():
    cfg = SynthConfig(n=3000, d=10, k=8, sigma=0.2, seed=6)
    draw = generate_ensemble(cfg)
    fused_err = recovery_error(ssea(draw.ensemble)[0], draw.truth)
    single = [recovery_error(s, draw.truth) for s in draw.ensemble]
    assert fused_err < min(single)
    assert fused_err / np.mean(single) == pytest.approx(1 / cfg.k, rel=0.25)


def test_naive_average_at_least_ten_times_worse():
    draw = generate_ensemble(SynthConfig(n=1000, d=10, k=6, sigma=0.1, seed=8))
    naive = recovery_error(naive_average(draw.ensemble), draw.truth)
    aligned = recovery_error(ssea(draw.ensemble)[0], draw.truth)
    assert naive >= 10 * aligned


def test_frequency_profile():
    cfg = SynthConfig(n=5000, d=4, k=2, sigma=0.5, seed=2, freq_profile=1.0, freq_max=300)
    freqs = synthetic_frequencies(cfg)
    counts = np.array(list(freqs.values()))
    assert counts.min() >= 1 and counts.max() < 300
    # log-uniform: about half the words fall below sqrt(300)
    assert np.mean(counts < np.sqrt(300)) == pytest.approx(0.5, abs=0.05)
    np.testing.assert_allclose(noise_scales(cfg), 0.5 / np.sqrt(counts))
    assert synthetic_frequencies(SynthConfig()) == {}


def test_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(n=0)
    with pytest.raises(ValidationError):
        SynthConfig(sigma=-1.0)
    with pytest.raises(ValidationError):
        generate_ensemble(SynthConfig(k=1))


@pytest.mark.parametrize("sigma", [0.0, 0.1])
def test_oracle_suite_passes(sigma):
    verdict = run_oracle_suite(SynthConfig(n=800, d=10, k=10, sigma=sigma, seed=3))
    names = {c["name"] for c in verdict["checks"]}
    assert verdict["passed"], verdict["checks"]
    assert ("exact_recovery" in names) == (sigma == 0)
    assert ("stability_ratio" in names) == (sigma > 0)
