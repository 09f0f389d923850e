import numpy as np
import pytest

from orthochain.numerics import (SvdFactors, derive_seed, matrix_with_spectrum,
                                 min_singular_value, rng_from,
                                 sample_gaussian_matrix, singular_values,
                                 thin_svd)


def test_gaussian_sampler_moments():
    # standard-error bounds: |mean| <= 4 sqrt(var/N), var within 5% of target
    d, var = 512, 1.0 / 512
    M = sample_gaussian_matrix(d, d, var, rng_from(1))
    N = d * d
    assert abs(M.mean()) <= 4.0 * np.sqrt(var / N)
    assert abs(M.var() - var) <= 0.05 * var


def test_gaussian_sampler_rejects_bad_parameters():
    rng = rng_from(0)
    with pytest.raises(ValueError):
        sample_gaussian_matrix(4, 4, 0.0, rng)
    with pytest.raises(ValueError):
        sample_gaussian_matrix(4, 4, -1.0, rng)
    with pytest.raises(ValueError):
        sample_gaussian_matrix(0, 4, 1.0, rng)


def test_gaussian_sampler_deterministic():
    a = sample_gaussian_matrix(16, 8, 0.5, rng_from(42))
    b = sample_gaussian_matrix(16, 8, 0.5, rng_from(42))
    assert np.array_equal(a, b)


def test_thin_svd_identity():
    f = thin_svd(np.eye(4))
    assert np.allclose(f.singulars, 1.0, atol=1e-12)


def test_thin_svd_rank_one():
    rng = rng_from(3)
    u = rng.standard_normal(6)
    v = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    s = thin_svd(np.outer(u, v)).singulars
    assert abs(s[0] - 1.0) <= 1e-12
    assert np.all(s[1:] <= 1e-12)


@pytest.mark.parametrize("shape", [(8, 4), (64, 8), (256, 16)])
def test_thin_svd_round_trip_and_orthonormality(shape):
    rng = rng_from(7)
    M = rng.standard_normal(shape)
    f = thin_svd(M)
    rel = np.linalg.norm(f.reconstruct() - M) / np.linalg.norm(M)
    assert rel <= 1e-10
    r = f.singulars.size
    assert np.linalg.norm(f.left.T @ f.left - np.eye(r)) <= 1e-10
    assert np.linalg.norm(f.right.T @ f.right - np.eye(r)) <= 1e-10
    assert np.all(np.diff(f.singulars) <= 1e-14)
    assert np.all(f.singulars >= 0.0)


def test_thin_svd_deterministic_and_validates():
    M = rng_from(9).standard_normal((10, 5))
    a, b = thin_svd(M), thin_svd(M)
    assert np.array_equal(a.singulars, b.singulars)
    assert np.array_equal(a.left, b.left)
    with pytest.raises(ValueError):
        thin_svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_min_singular_value_examples():
    assert min_singular_value(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    M = rng_from(2).standard_normal((5, 3))
    M[:, 2] = M[:, 1]  # duplicated column forces rank deficiency
    assert min_singular_value(M) <= 1e-10
    H = matrix_with_spectrum(6, 2, [0.8, 0.6], rng_from(5))
    assert min_singular_value(H) == pytest.approx(0.6, abs=1e-10)
    assert min_singular_value(H) == pytest.approx(
        thin_svd(H).singulars[-1], abs=1e-14)


def test_matrix_with_spectrum_matches_request():
    s = np.array([1.5, 0.7, 0.1])
    H = matrix_with_spectrum(9, 3, s, rng_from(11))
    assert np.allclose(singular_values(H), s, atol=1e-10)
    with pytest.raises(ValueError):
        matrix_with_spectrum(4, 3, [1.0, 0.5], rng_from(0))


def test_derive_seed_stable_and_sensitive():
    assert derive_seed(1, "kind", (4, 64), 0) == derive_seed(1, "kind", (4, 64), 0)
    assert derive_seed(1, "kind", (4, 64), 0) != derive_seed(1, "kind", (4, 64), 1)
    assert derive_seed(1, "kind", (4, 64), 0) != derive_seed(2, "kind", (4, 64), 0)


def test_svd_factors_reconstruct():
    f = SvdFactors(left=np.eye(3), singulars=np.array([2.0, 1.0, 0.5]),
                   right=np.eye(3))
    assert np.allclose(f.reconstruct(), np.diag([2.0, 1.0, 0.5]))
