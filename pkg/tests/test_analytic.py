import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lsfmimo.analytic import (
    SinrReport,
    asymptotic_downlink_sinr,
    asymptotic_uplink_sinr,
    build_sinr_report,
    downlink_components,
    finite_m_downlink_sinr,
    finite_m_downlink_sinr_alpha,
    finite_m_uplink_sinr,
    finite_m_uplink_sinr_simplified,
    no_lsfp_downlink_limit,
    rate_from_sinr,
    uplink_components,
    uplink_effective_gain,
)
from lsfmimo.errors import DegenerateWeights
from lsfmimo.network import LargeScaleFading, random_fading, symmetric_fading
from lsfmimo.precoding import no_lsfp, omega_star, phi_to_alpha, zf_lsfd, zf_lsfp


def two_cell_fading():
    beta = np.zeros((2, 1, 2))
    beta[0, 0] = [1.0, 0.3]
    beta[1, 0] = [0.2, 1.0]
    return LargeScaleFading(beta)


# ---------------------------------------------------------------------------
# Slow reference implementations, written as plain loops over the sums
# ---------------------------------------------------------------------------

def naive_downlink_sinr(beta, phi, rho_f, rho_r, tau, M, k, l):
    L = beta.shape[0]
    K = beta.shape[1]

    def C(kk, ll, jj):
        denom = 1.0 + rho_r * tau * beta[jj, kk, :].sum()
        return beta[jj, kk, ll] * beta[jj, kk, jj] / denom

    def coupling(v):
        return sum(C(k, l, j) * phi[k, j, v] for j in range(L))

    numerator = rho_f * (M * rho_r * tau) ** 2 * abs(coupling(l)) ** 2
    i1 = rho_f * (rho_r * tau) ** 2 * sum(
        abs(coupling(v)) ** 2 for v in range(L) if v != l
    )
    i2 = 0.0
    for j in range(L):
        for n in range(K):
            gain = beta[j, n, j] ** 2 / (1.0 + rho_r * tau * beta[j, n, :].sum())
            row = sum(abs(phi[n, j, v]) ** 2 for v in range(L))
            i2 += gain * beta[j, k, l] * row
    i2 *= rho_f * rho_r * tau
    return numerator / (M**2 * i1 + M * i2 + 1.0)


def naive_uplink_sinr(beta, omega, rho_r, tau, M, k, l):
    L = beta.shape[0]

    def D(kk, jj, vv):
        denom = 1.0 + rho_r * tau * beta[vv, kk, :].sum()
        return beta[vv, kk, vv] * beta[vv, kk, jj] / denom

    def coupling(j):
        return sum(D(k, j, v) * omega[k, l, v] for v in range(L))

    numerator = (M * rho_r * tau) ** 2 * rho_r * abs(coupling(l)) ** 2
    i1 = rho_r**3 * tau**2 * sum(abs(coupling(j)) ** 2 for j in range(L) if j != l)
    i2 = 0.0
    for v in range(L):
        own = rho_r * tau * beta[v, k, v] ** 2 / (1.0 + rho_r * tau * beta[v, k, :].sum())
        i2 += abs(omega[k, l, v]) ** 2 * own * (1.0 + rho_r * beta[v].sum())
    return numerator / (M**2 * i1 + M * i2)


# ---------------------------------------------------------------------------
# Infinite-antenna limits
# ---------------------------------------------------------------------------

def test_asymptotic_downlink_symmetric_values():
    # every interferer looks like the target, so the limit is 1/(L - 1)
    assert asymptotic_downlink_sinr(symmetric_fading(2, 3, 1.0), 1.0, 3, 1, 0) == 1.0
    got = asymptotic_downlink_sinr(symmetric_fading(3, 2, 0.4), 2.0, 2, 0, 2)
    assert_allclose(got, 0.5, rtol=1e-14)


def test_asymptotic_single_cell_is_infinite():
    fading = LargeScaleFading(np.full((1, 2, 1), 0.7))
    assert asymptotic_downlink_sinr(fading, 1.0, 2, 0, 0) == math.inf
    assert asymptotic_uplink_sinr(fading, 1, 0) == math.inf


def test_asymptotic_downlink_two_cell_oracle():
    fading = two_cell_fading()
    got = asymptotic_downlink_sinr(fading, rho_r=2.0, tau=1, k=0, j=0)
    eta0_sq = 1.0 + 2.0 * 1.3
    eta1_sq = 1.0 + 2.0 * 1.2
    assert_allclose(got, (1.0 / eta0_sq) / (0.2**2 / eta1_sq), rtol=1e-13)


def test_asymptotic_uplink_two_cell_oracle():
    got = asymptotic_uplink_sinr(two_cell_fading(), k=0, j=0)
    assert_allclose(got, 1.0 / 0.3**2, rtol=1e-13)


def test_power_control_uniform_reduces_to_plain_limit():
    fading = random_fading(3, 2, seed=11)
    uniform = np.full((2, 3), 1.7)
    for k in range(2):
        for j in range(3):
            plain = asymptotic_downlink_sinr(fading, 1.0, 2, k, j)
            weighted = asymptotic_downlink_sinr(fading, 1.0, 2, k, j, rho_f_user=uniform)
            assert_allclose(weighted, plain, rtol=1e-13)
            assert_allclose(
                asymptotic_uplink_sinr(fading, k, j, rho_r_user=uniform),
                asymptotic_uplink_sinr(fading, k, j),
                rtol=1e-13,
            )


def test_power_control_shifts_the_balance():
    fading = two_cell_fading()
    # silencing the interfering cell's user on this pilot removes all interference
    silent = np.array([[1.0, 0.0]])
    assert asymptotic_downlink_sinr(fading, 1.0, 1, 0, 0, rho_f_user=silent) == math.inf
    assert asymptotic_uplink_sinr(fading, 0, 0, rho_r_user=silent) == math.inf


# ---------------------------------------------------------------------------
# Finite-antenna downlink
# ---------------------------------------------------------------------------

def test_downlink_matches_loop_reference():
    rng = np.random.default_rng(5)
    fading = random_fading(3, 2, seed=5)
    phi = rng.normal(size=(2, 3, 3))
    for k in range(2):
        for l in range(3):
            want = naive_downlink_sinr(fading.beta, phi, 1.5, 0.8, 2, 32, k, l)
            got = finite_m_downlink_sinr(fading, phi, 1.5, 0.8, 2, 32, k, l)
            assert_allclose(got, want, rtol=1e-12)


def test_downlink_array_agrees_with_scalars():
    fading = random_fading(2, 3, seed=6)
    phi = np.random.default_rng(6).normal(size=(3, 2, 2))
    table = finite_m_downlink_sinr(fading, phi, 1.0, 1.0, 3, 16)
    assert table.shape == (3, 2)
    assert_allclose(
        table[1, 0], finite_m_downlink_sinr(fading, phi, 1.0, 1.0, 3, 16, 1, 0)
    )


def test_alpha_form_equals_weight_form():
    rng = np.random.default_rng(7)
    for trial in range(50):
        L = int(rng.integers(2, 5))
        K = int(rng.integers(1, 4))
        fading = random_fading(L, K, seed=100 + trial)
        phi = rng.normal(size=(K, L, L))
        rho_f = float(rng.uniform(0.2, 4.0))
        rho_r = float(rng.uniform(0.2, 4.0))
        tau = K
        alpha = phi_to_alpha(phi, fading, rho_r, tau)
        direct = finite_m_downlink_sinr(fading, phi, rho_f, rho_r, tau, 64)
        via_alpha = finite_m_downlink_sinr_alpha(fading, alpha, rho_f, rho_r, tau, 64)
        assert_allclose(via_alpha, direct, rtol=1e-12)


def test_zero_forcing_mu_removes_coherent_interference():
    fading = random_fading(4, 3, seed=9)
    rho_f, rho_r, tau = 2.0, 1.0, 3
    weights = zf_lsfp(fading, rho_r, tau, variant="mu")
    numerator, coherent, _ = downlink_components(fading, weights, rho_f, rho_r, tau, 64)
    assert np.all(coherent <= 1e-20)
    expected = rho_f * 64**2 * rho_r**2 * tau**2 * weights.rho_A
    assert_allclose(numerator, np.full((3, 4), expected), rtol=1e-10)


def test_zero_forcing_eta_removes_coherent_interference():
    fading = random_fading(3, 2, seed=10)
    weights = zf_lsfp(fading, 1.0, 2, variant="eta")
    _, coherent, _ = downlink_components(fading, weights, 1.0, 1.0, 2, 128)
    assert np.all(coherent <= 1e-20)


def test_zero_forcing_sinr_scales_linearly_in_antennas():
    fading = random_fading(3, 2, seed=12)
    weights = zf_lsfp(fading, 1.0, 2, variant="mu")
    num_m, _, inc_m = downlink_components(fading, weights, 1.0, 1.0, 2, 64)
    num_2m, _, inc_2m = downlink_components(fading, weights, 1.0, 1.0, 2, 128)
    assert_allclose(num_2m, 4.0 * num_m, rtol=1e-12)
    assert_allclose(inc_2m, 2.0 * inc_m, rtol=1e-12)
    ratio = finite_m_downlink_sinr(fading, weights, 1.0, 1.0, 2, 128) / (
        finite_m_downlink_sinr(fading, weights, 1.0, 1.0, 2, 64)
    )
    assert np.all(ratio > 2.0)
    assert np.all(ratio <= 4.0)


def test_diagonal_weights_saturate_at_the_limit():
    fading = random_fading(3, 2, seed=13)
    rho_r, tau = 1.0, 2
    M = 10**8
    weights = no_lsfp(fading, rho_r, tau, M)
    table = finite_m_downlink_sinr(fading, weights, 1.0, rho_r, tau, M)
    for k in range(2):
        for l in range(3):
            limit = no_lsfp_downlink_limit(fading, rho_r, tau, k, l)
            assert_allclose(table[k, l], limit, rtol=1e-3)


def test_no_lsfp_limit_equals_asymptotic_theorem():
    fading = random_fading(4, 2, seed=14)
    for k in range(2):
        for l in range(4):
            assert_allclose(
                no_lsfp_downlink_limit(fading, 1.3, 2, k, l),
                asymptotic_downlink_sinr(fading, 1.3, 2, k, l),
                rtol=1e-9,
            )


# ---------------------------------------------------------------------------
# Finite-antenna uplink
# ---------------------------------------------------------------------------

def test_uplink_matches_loop_reference():
    rng = np.random.default_rng(15)
    fading = random_fading(3, 2, seed=15)
    omega = rng.normal(size=(2, 3, 3))
    for k in range(2):
        for l in range(3):
            want = naive_uplink_sinr(fading.beta, omega, 0.7, 2, 48, k, l)
            got = finite_m_uplink_sinr(fading, omega, 0.7, 2, 48, k, l)
            assert_allclose(got, want, rtol=1e-12)


def test_omega_star_form_equals_weight_form():
    rng = np.random.default_rng(16)
    for trial in range(50):
        L = int(rng.integers(2, 5))
        K = int(rng.integers(1, 4))
        fading = random_fading(L, K, seed=200 + trial)
        omega = rng.normal(size=(K, L, L))
        rho_r = float(rng.uniform(0.2, 4.0))
        M = int(rng.integers(8, 256))
        scaled = omega_star(omega, fading, rho_r, K, M)
        direct = finite_m_uplink_sinr(fading, omega, rho_r, K, M)
        via_star = finite_m_uplink_sinr_simplified(fading, scaled, rho_r, K, M)
        assert_allclose(via_star, direct, rtol=1e-12)


def test_zf_lsfd_removes_coherent_uplink_interference():
    fading = random_fading(4, 3, seed=17)
    weights = zf_lsfd(fading)
    _, coherent, _ = uplink_components(fading, weights, 1.0, 3, 64)
    assert np.all(coherent <= 1e-20)
    # with no coherent term the numerator and denominator both scale linearly
    # in M through the scaled-convention weights, so SINR is exactly linear
    low = finite_m_uplink_sinr(fading, weights, 1.0, 3, 10**5)
    high = finite_m_uplink_sinr(fading, weights, 1.0, 3, 10**6)
    assert_allclose(high, 10.0 * low, rtol=1e-12)


def test_identity_combining_reaches_uplink_limit():
    fading = random_fading(3, 2, seed=21)
    omega = np.tile(np.eye(3), (2, 1, 1))
    table = finite_m_uplink_sinr(fading, omega, 1.2, 2, 10**8)
    for k in range(2):
        for l in range(3):
            assert_allclose(
                table[k, l], asymptotic_uplink_sinr(fading, k, l), rtol=1e-3
            )


def test_zero_combining_row_warns_and_scores_zero():
    fading = random_fading(2, 1, seed=18)
    omega = np.zeros((1, 2, 2))
    omega[0, 1] = [0.4, 1.0]
    with pytest.warns(DegenerateWeights):
        table = finite_m_uplink_sinr(fading, omega, 1.0, 1, 32)
    assert table[0, 0] == 0.0
    assert table[0, 1] > 0.0


def test_uplink_effective_gain_matched_filter_oracle():
    # single cell, single user: the decision statistic mean has a closed form
    beta = 0.8
    fading = LargeScaleFading(np.full((1, 1, 1), beta))
    rho_r, tau, M = 1.5, 1, 24
    omega = np.ones((1, 1, 1))
    gain = uplink_effective_gain(fading, omega, rho_r, tau, M)
    expected = math.sqrt(rho_r) * M * rho_r * tau * beta**2 / (1.0 + rho_r * tau * beta)
    assert_allclose(gain, [[expected]], rtol=1e-13)


# ---------------------------------------------------------------------------
# Rates and reports
# ---------------------------------------------------------------------------

def test_rate_from_sinr_values():
    assert_allclose(rate_from_sinr(3.0), 2.0, rtol=1e-15)
    assert rate_from_sinr(math.inf) == math.inf
    assert_allclose(rate_from_sinr([0.0, 1.0]), [0.0, 1.0], rtol=1e-15)


def test_sinr_report_round_trip(tmp_path):
    fading = random_fading(3, 2, seed=19)
    weights = zf_lsfp(fading, 1.0, 2, variant="mu")
    report = build_sinr_report(fading, weights, 1.0, 1.0, 2, 32)
    assert isinstance(report, SinrReport)
    assert report.sinr_dl.shape == (2, 3)
    assert_allclose(report.rate_dl, np.log2(1.0 + report.sinr_dl), rtol=1e-15)
    assert_allclose(report.rate_ul, np.log2(1.0 + report.sinr_ul), rtol=1e-15)

    out = tmp_path / "report.csv"
    report.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "k,l,sinr_dl,sinr_ul,rate_dl,rate_ul,i1,i2,noise"
    assert len(lines) == 1 + 2 * 3
    first = lines[1].split(",")
    assert first[:2] == ["0", "0"]
    assert_allclose(float(first[2]), report.sinr_dl[0, 0], rtol=1e-15)
    assert_allclose(float(first[6]), report.dl_coherent[0, 0], rtol=1e-15)
