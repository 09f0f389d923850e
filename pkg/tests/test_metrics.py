import numpy as np
import pytest

from orthochain.chain import ChainConfig, simulate_chain
from orthochain.metrics import (conjecture_gap, gaussianity_diagnostics, gram,
                                layer_trace, lyapunov_gap, orthogonality_gap,
                                pairwise_cosines, v_from_spectrum)
from orthochain.numerics import matrix_with_spectrum, rng_from, thin_svd


def scaled_orthonormal(d, n, seed=0):
    q, _ = np.linalg.qr(rng_from(seed).standard_normal((d, n)))
    return q / np.sqrt(n)  # H^T H = I/n, unit Frobenius norm


def test_gap_zero_for_orthogonal():
    assert orthogonality_gap(scaled_orthonormal(12, 4)) <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 5])
def test_gap_rank_one(n):
    # sigma_1^2 = 1, rest 0: V^2 = (1 - 1/n)^2 + (n-1)/n^2 = 1 - 1/n
    rng = rng_from(4)
    u = rng.standard_normal(10)
    H = np.outer(u, rng.standard_normal(n))
    assert orthogonality_gap(H) == pytest.approx(np.sqrt(1.0 - 1.0 / n), abs=1e-10)


def test_gap_rank_one_n2_value():
    H = np.outer(rng_from(1).standard_normal(8), [1.0, 2.0])
    assert orthogonality_gap(H) == pytest.approx(0.7071067811865476, abs=1e-10)


def test_gap_scale_invariant():
    H = rng_from(5).standard_normal((20, 4))
    base = orthogonality_gap(H)
    for c in (1e-6, 2.0, 1e6, -3.0):
        assert orthogonality_gap(c * H) == pytest.approx(base, abs=1e-12)


def test_gap_rejects_zero_matrix():
    with pytest.raises(ValueError):
        orthogonality_gap(np.zeros((4, 2)))


def test_v_from_spectrum_matches_gram_route():
    rng = rng_from(8)
    for d, n in ((16, 2), (64, 4), (128, 8)):
        H = rng.standard_normal((d, n))
        H /= np.linalg.norm(H)
        s = thin_svd(H).singulars
        assert v_from_spectrum(s, n) == pytest.approx(orthogonality_gap(H), abs=1e-8)


def test_lyapunov_gap_examples():
    assert lyapunov_gap(scaled_orthonormal(10, 4)) == pytest.approx(0.0, abs=1e-10)
    rank_def = matrix_with_spectrum(8, 2, [1.0, 0.0], rng_from(2))
    assert lyapunov_gap(rank_def) == pytest.approx(0.5, abs=1e-10)
    H = matrix_with_spectrum(6, 2, [np.sqrt(0.7), np.sqrt(0.3)], rng_from(3))
    assert lyapunov_gap(H) == pytest.approx(0.2, abs=1e-10)


def test_lyapunov_gap_requires_unit_norm():
    with pytest.raises(ValueError):
        lyapunov_gap(2.0 * scaled_orthonormal(10, 4))


def test_gram_identities():
    H = rng_from(6).standard_normal((12, 5))
    C = gram(H)
    assert np.linalg.norm(C - C.T) <= 1e-12
    assert np.trace(C) == pytest.approx(np.linalg.norm(H) ** 2, rel=1e-12)
    assert np.allclose(gram(scaled_orthonormal(12, 4)), np.eye(4) / 4, atol=1e-10)
    eigs = np.sort(np.linalg.eigvalsh(C))[::-1]
    assert np.allclose(eigs, thin_svd(H).singulars ** 2, atol=1e-8)


def test_pairwise_cosines_examples():
    H = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert pairwise_cosines(H)[0] == pytest.approx(1.0)
    H = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert pairwise_cosines(H)[0] == pytest.approx(0.0, abs=1e-15)
    H = np.array([[1.0, 1.0 / np.sqrt(2)], [0.0, 1.0 / np.sqrt(2)]])
    assert pairwise_cosines(H)[0] == pytest.approx(1.0 / np.sqrt(2), abs=1e-12)
    with pytest.raises(ValueError):
        pairwise_cosines(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_cosines_invariant_under_positive_column_scaling():
    H = rng_from(7).standard_normal((10, 4))
    scales = np.array([0.1, 3.0, 7.5, 42.0])
    assert np.allclose(pairwise_cosines(H), pairwise_cosines(H * scales), atol=1e-12)


def test_cosine_count():
    H = rng_from(9).standard_normal((6, 5))
    assert pairwise_cosines(H).size == 10  # C(5, 2)


def test_gaussianity_diagnostics_on_target_law():
    n, d = 4, 256
    M = rng_from(10).standard_normal((d, n)) / np.sqrt(n * d)
    rep = gaussianity_diagnostics(M, n, d)
    target = 1.0 / (n * d)
    # chi-square standard error of a variance estimate over n*d entries
    assert abs(rep.entry_var - target) <= 5.0 * np.sqrt(2.0 / (d * n)) * target
    assert rep.target_var == pytest.approx(target)
    assert not rep.degenerate
    assert 0.0 <= rep.max_column_crosscorr <= 1.0


def test_gaussianity_diagnostics_degenerate():
    rep = gaussianity_diagnostics(np.zeros((8, 3)), 3, 8)
    assert rep.degenerate and rep.entry_var == 0.0


def test_conjecture_gap_window_one_and_too_short():
    grams = [np.eye(2) * (k + 1) for k in range(5)]
    vals = conjecture_gap(grams, burn_in=4)
    assert vals.shape == (1,)
    assert vals[0] == 0.0  # single-layer window compares the layer to itself
    with pytest.raises(ValueError):
        conjecture_gap(grams, burn_in=5)


def test_layer_trace_invariants_on_simulated_chain():
    traces = simulate_chain(ChainConfig(d=64, n=4, depth=30, seed=12))
    for t in traces:
        n = t.gram.shape[0]
        assert t.v_gap <= 2 * n * t.lyap_gap + 1e-8
        assert t.v_gap <= np.sqrt(2.0) * (n - 1) * t.lyap_gap + 1e-8
        assert 0.0 <= t.v_gap <= np.sqrt(1.0 - 1.0 / n) + 1e-10
        assert abs(t.frob_norm - 1.0) <= 1e-10
        assert abs(np.sum(t.singulars**2) - 1.0) <= 1e-10


def test_layer_trace_of_arbitrary_input():
    H = 3.0 * rng_from(13).standard_normal((16, 3))
    t = layer_trace(0, H)
    assert t.layer == 0
    assert t.frob_norm == pytest.approx(np.linalg.norm(H), rel=1e-12)
    assert t.v_gap == pytest.approx(orthogonality_gap(H), abs=1e-10)
    assert t.matrix is None
