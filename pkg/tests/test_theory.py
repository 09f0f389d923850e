import numpy as np
import pytest

from orthochain.chain import ChainConfig, simulate_chain
from orthochain.metrics import layer_trace
from orthochain.numerics import matrix_with_spectrum, rng_from
from orthochain.theory import (coupling_w2_quantities, gaussian_w2_bound,
                               estimate_spectral_floor, g_convexity_scan,
                               unconditional_stability, p_vector_montecarlo,
                               p_vector_quadrature, random_unit_spectrum,
                               random_unit_state, single_step_bound,
                               depth_gap_bound, verify_contraction_center,
                               verify_gram_concentration, verify_single_step)


# ---------------------------------------------------------------------------
# p-vector
# ---------------------------------------------------------------------------

def test_p_quadrature_trivial_cases():
    assert p_vector_quadrature([1.0]).values == pytest.approx([1.0], abs=1e-10)
    for n in (2, 4, 8):
        flat = np.full(n, np.sqrt(1.0 / n))
        assert p_vector_quadrature(flat).values == pytest.approx(
            np.full(n, 1.0 / n), abs=1e-8)


def test_p_quadrature_against_monte_carlo():
    sigma = np.sqrt([0.7, 0.3])
    pq = p_vector_quadrature(sigma)
    pm = p_vector_montecarlo(sigma, 10**6, rng_from(1))
    assert np.all(np.abs(pq.values - pm.values) <= 3.0 * pm.std_errors)
    assert abs(pq.values.sum() - 1.0) <= 1e-6


def test_p_quadrature_sum_and_monotonicity_random():
    rng = rng_from(2)
    for n in (2, 4, 8):
        for _ in range(10):
            s = random_unit_spectrum(n, rng)
            p = p_vector_quadrature(s).values
            assert abs(p.sum() - 1.0) <= 1e-6
            assert np.all(np.diff(p) <= 1e-12)  # sigma descending -> p descending


def test_p_quadrature_zero_handling():
    sigma = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        p_vector_quadrature(sigma)
    p = p_vector_quadrature(sigma, zero_policy="analytic").values
    assert p == pytest.approx([1.0, 0.0], abs=1e-10)


def test_p_quadrature_rejects_bad_spectra():
    with pytest.raises(ValueError):
        p_vector_quadrature([0.5, 0.5])  # energy != 1
    with pytest.raises(ValueError):
        p_vector_quadrature([0.3, np.sqrt(1 - 0.09)])  # ascending


def test_p_montecarlo_properties():
    rng = rng_from(3)
    n = 4
    flat = np.full(n, np.sqrt(1.0 / n))
    pm = p_vector_montecarlo(flat, 50_000, rng)
    assert np.all(np.abs(pm.values - 1.0 / n) <= 3.0 * pm.std_errors)
    assert abs(pm.values.sum() - 1.0) <= 1e-12  # ratios sum to one pointwise
    skew = np.sqrt([1.0 - 1e-12, 1e-12])
    p1 = p_vector_montecarlo(skew, 20_000, rng).values[0]
    assert p1 == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        p_vector_montecarlo(flat, 9_999, rng)


# ---------------------------------------------------------------------------
# single-step contraction
# ---------------------------------------------------------------------------

def test_single_step_bound_values():
    assert single_step_bound(0.0, 4, 64) == pytest.approx(1.0 / 8.0)
    assert single_step_bound(0.25, 4, 64) == pytest.approx(0.25 + 1.0 / 8.0)
    assert single_step_bound(0.1, 4, 256) == pytest.approx(0.1525, abs=1e-12)
    with pytest.raises(ValueError):
        single_step_bound(0.3, 4, 64)  # above 1/n


def test_verify_single_step_orthogonal_state():
    H = random_unit_state(128, 4, rng_from(4),
                          spectrum=np.full(4, np.sqrt(0.25)))
    rep = verify_single_step(H, 200, rng_from(5))
    assert rep.satisfied
    assert rep.bound == pytest.approx(1.0 / np.sqrt(128))


def test_verify_single_step_random_state():
    H = random_unit_state(256, 4, rng_from(6))
    rep = verify_single_step(H, 500, rng_from(7))
    assert rep.satisfied
    assert rep.margin >= 0.0
    assert rep.mc_std_error > 0.0


def test_verify_single_step_rank_deficient_boundary():
    H = matrix_with_spectrum(64, 2, [1.0, 0.0], rng_from(8))
    rep = verify_single_step(H, 150, rng_from(9))
    # contraction factor is 1 at the boundary: bound = V_hat + 1/sqrt(d)
    assert rep.bound == pytest.approx(0.5 + 1.0 / 8.0, abs=1e-12)
    assert rep.satisfied
    with pytest.raises(ValueError):
        verify_single_step(H, 99, rng_from(0))


# ---------------------------------------------------------------------------
# depth bounds
# ---------------------------------------------------------------------------

def test_depth_gap_bound_values():
    n, d, alpha = 4, 1024, 0.2
    expected = 2.0 * (13.0 / 15.0) ** 30 + 12.0 / (0.2 * 32.0)
    assert depth_gap_bound(alpha, 30, n, d) == pytest.approx(expected, rel=1e-12)
    # depth -> infinity leaves the additive term
    assert depth_gap_bound(alpha, 10**6, n, d) == pytest.approx(
        3.0 * n / (alpha * np.sqrt(d)))
    assert depth_gap_bound(alpha, 0, n, d) == pytest.approx(
        2.0 + 3.0 * n / (alpha * np.sqrt(d)))
    assert depth_gap_bound(alpha, 30, n, d, constant="sharp") == pytest.approx(
        2.0 * (13.0 / 15.0) ** 30 + 6.0 / (0.2 * 32.0), rel=1e-12)
    with pytest.raises(ValueError):
        depth_gap_bound(0.0, 10, 4, 64)
    with pytest.raises(ValueError):
        depth_gap_bound(0.5, 10, 4, 64)  # above 1/n


def test_corollary_is_2n_times_theorem1():
    for alpha, depth, n, d in ((0.1, 5, 2, 64), (0.2, 30, 4, 1024), (0.05, 80, 8, 256)):
        assert gaussian_w2_bound(alpha, depth, n, d) == pytest.approx(
            2.0 * n * depth_gap_bound(alpha, depth, n, d), rel=1e-12)
    assert gaussian_w2_bound(0.4, 10**6, 2, 10**4) == pytest.approx(
        6.0 * 4.0 / (0.4 * 100.0))
    # plug-in evaluation at n=2, d=1e4, alpha=0.4, depth=50: the geometric term
    # is ~1.5e-6 and the additive term 6n^2/(alpha sqrt(d)) = 0.6 dominates
    assert gaussian_w2_bound(0.4, 50, 2, 10**4) == pytest.approx(0.6, abs=1e-4)


# ---------------------------------------------------------------------------
# coupling quantities
# ---------------------------------------------------------------------------

def test_coupling_quantities_flat_and_rank_one():
    n = 4
    flat = np.full(n, np.sqrt(1.0 / n))
    q = coupling_w2_quantities(flat, n)
    assert q.coupling_cost == pytest.approx(0.0, abs=1e-14)
    q = coupling_w2_quantities([1.0, 0.0], 2)
    assert q.coupling_cost == pytest.approx((1 - 1 / np.sqrt(2)) ** 2 + 0.5, abs=1e-12)
    assert q.v_bound == pytest.approx(2 * 2 * np.sqrt(0.5), abs=1e-12)
    assert q.coupling_cost <= q.v_bound


def test_coupling_chain_on_simulated_layers():
    traces = simulate_chain(ChainConfig(d=128, n=4, depth=40, seed=14))
    for t in traces:
        q = coupling_w2_quantities(t.singulars, 4)
        assert q.coupling_cost <= q.quadratic_bound + 1e-12
        assert q.coupling_cost <= q.v_bound + 1e-12


# ---------------------------------------------------------------------------
# gram concentration
# ---------------------------------------------------------------------------

def test_gram_concentration_reference_state():
    H = random_unit_state(256, 4, rng_from(15))
    rep = verify_gram_concentration(H, 500, rng_from(16))
    assert rep.concentration.satisfied
    assert rep.concentration.bound == pytest.approx(1.0 / 256)
    assert rep.diag_within_4se
    assert rep.offdiag_within_4se
    assert np.all(np.diff(rep.p_quadrature) <= 1e-12)


def test_gram_concentration_single_sample():
    H = random_unit_state(32, 1, rng_from(17))
    rep = verify_gram_concentration(H, 200, rng_from(18))
    # with n = 1 the normalized Gram is the scalar 1 in every replicate
    assert rep.concentration.empirical == pytest.approx(0.0, abs=1e-20)
    assert rep.mean_gram[0, 0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        verify_gram_concentration(H, 100, rng_from(0))


# ---------------------------------------------------------------------------
# contraction center, convexity, stability
# ---------------------------------------------------------------------------

def test_contraction_center_equal_spectrum():
    n = 4
    rep = verify_contraction_center(np.full(n, np.sqrt(1.0 / n)), n)
    assert abs(rep.lhs) <= 1e-8
    assert rep.loose.satisfied and rep.tight.satisfied


def test_contraction_center_example_n2():
    rep = verify_contraction_center(np.sqrt([0.9, 0.1]), 2)
    # proof form: (1 - (2n/(n+2)) sigma_n^2)(1/n - sigma_n^2) = 0.9 * 0.4
    assert rep.tight.bound == pytest.approx(0.36, abs=1e-12)
    assert rep.lhs <= 0.36
    assert rep.loose.satisfied and rep.tight.satisfied
    assert rep.tight.bound <= rep.loose.bound + 1e-12


@pytest.mark.parametrize("n", [2, 4, 8])
def test_contraction_center_random_sweep(n):
    rng = rng_from(19)
    for _ in range(100):
        rep = verify_contraction_center(random_unit_spectrum(n, rng), n)
        assert rep.loose.satisfied and rep.tight.satisfied


def test_g_convexity_scan():
    assert g_convexity_scan(2, theta_grid=[0.0]) == pytest.approx(0.0, abs=1e-12)
    assert g_convexity_scan(2, theta_grid=[0.0, 1.0, 10.0, 100.0]) >= -1e-6
    assert g_convexity_scan(8) >= -1e-6
    with pytest.raises(ValueError):
        g_convexity_scan(1)
    with pytest.raises(ValueError):
        g_convexity_scan(2, theta_grid=[-1.0])


def test_unconditional_stability():
    seeds = range(40, 48)
    traces = [simulate_chain(ChainConfig(d=256, n=4, depth=60, seed=s))
              for s in seeds]
    rep = unconditional_stability(traces, 256)
    assert rep.satisfied
    assert rep.lhs.shape == rep.rhs.shape == (60,)
    # large-l limit of the bound is 3/(2 sqrt(d))
    assert rep.rhs[-1] <= 3.0 * 0.25 / (2 * 60) + 1.5 / np.sqrt(256) + 1e-12
    with pytest.raises(ValueError):
        unconditional_stability(traces[:1], 256)
    with pytest.raises(ValueError):
        unconditional_stability([tr[:5] for tr in traces], 256)


def test_unconditional_stability_orthogonal_start():
    # from an orthogonal state every summand is near (small)*(1/n): lhs << rhs
    from orthochain.chain import orthogonal_input
    traces = []
    for s in (60, 61, 62):
        h0 = orthogonal_input(512, 4, rng_from(s))
        traces.append(simulate_chain(ChainConfig(d=512, n=4, depth=20, seed=s), h0=h0))
    rep = unconditional_stability(traces, 512)
    assert rep.satisfied
    assert np.all(rep.lhs <= rep.rhs)


# ---------------------------------------------------------------------------
# alpha estimation
# ---------------------------------------------------------------------------

def test_estimate_spectral_floor_orthogonal_chain():
    from orthochain.chain import orthogonal_input
    h0 = orthogonal_input(1024, 4, rng_from(50))
    traces = simulate_chain(ChainConfig(d=1024, n=4, depth=30, seed=50), h0=h0)
    alpha = estimate_spectral_floor(traces)
    assert 0.5 / 4 <= alpha <= 1.0 / 4 + 1e-12


def test_estimate_spectral_floor_rank_deficient_flags_zero():
    rank_def = matrix_with_spectrum(8, 2, [1.0, 0.0], rng_from(51))
    traces = [layer_trace(0, rank_def)]
    assert estimate_spectral_floor(traces) <= 1e-20
    with pytest.raises(ValueError):
        estimate_spectral_floor([])


def test_estimate_spectral_floor_positive_at_desk_scale():
    # d = Omega(n^2) regime: positive alpha on every seed
    for seed in range(5):
        traces = simulate_chain(ChainConfig(d=256, n=4, depth=50, seed=700 + seed))
        assert estimate_spectral_floor(traces) > 0.0
