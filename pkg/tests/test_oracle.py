import csv
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from lsfmimo.analytic import (
    downlink_components,
    finite_m_downlink_sinr,
    finite_m_uplink_sinr,
    uplink_components,
)
from lsfmimo.errors import DimensionError
from lsfmimo.network import NetworkConfig, random_fading
from lsfmimo.oracle import (
    COVARIANCE_PAIRS,
    collect_downlink_trials,
    collect_uplink_trials,
    convergence_slope,
    downlink_term_variances,
    empirical_sinr,
    empirical_term_stats,
    empirical_variances_downlink,
    empirical_variances_uplink,
    lemma1_probe,
    nearest_qpsk,
    qpsk_symbols,
    ser_study,
    simulate_downlink_trial,
    simulate_uplink_trial,
    trial_rng,
    uplink_term_variances,
    variance_report,
    zf_lsfp_detect,
)
from lsfmimo.precoding import no_lsfp, zf_lsfd, zf_lsfp


def reference_config(M=32):
    return NetworkConfig(L=3, K=2, M=M, tau=2, rho_f=1.0, rho_r=1.0)


def reference_fading():
    return random_fading(3, 2, seed=11)


def random_weights(seed, K, L, scale=0.3):
    rng = np.random.default_rng(seed)
    return scale * rng.normal(size=(K, L, L))


# ---------------------------------------------------------------------------
# Exact decomposition of the simulated signals
# ---------------------------------------------------------------------------

def test_downlink_terms_sum_to_received_signal():
    fading = reference_fading()
    cfg = reference_config()
    phi = random_weights(0, 2, 3)
    batch = collect_downlink_trials(fading, phi, cfg, seed=5, trials=50)
    assert batch.max_decomposition_residual < 1e-10


def test_uplink_terms_sum_to_received_signal():
    fading = reference_fading()
    cfg = reference_config()
    omega = random_weights(1, 2, 3)
    batch = collect_uplink_trials(fading, omega, cfg, seed=5, trials=50)
    assert batch.max_decomposition_residual < 1e-10


def test_decomposition_holds_for_constructed_weights():
    fading = reference_fading()
    cfg = reference_config()
    zf = zf_lsfp(fading, cfg.rho_r, cfg.tau, variant="mu")
    down = collect_downlink_trials(fading, zf, cfg, seed=2, trials=20)
    up = collect_uplink_trials(fading, zf, cfg, seed=2, trials=20)
    assert down.max_decomposition_residual < 1e-10
    assert up.max_decomposition_residual < 1e-10


def test_single_cell_single_user_interference_terms_vanish():
    # with one user on one pilot in one cell, the contamination and
    # nonorthogonality sums are empty
    beta = np.full((1, 1, 1), 0.8)
    from lsfmimo.network import LargeScaleFading

    fading = LargeScaleFading(beta)
    cfg = NetworkConfig(L=1, K=1, M=16, tau=1, rho_f=1.0, rho_r=1.0)
    phi = np.ones((1, 1, 1))
    for trial in range(5):
        terms, received, s = simulate_downlink_trial(
            fading, phi, cfg, seed=3, trial=trial, with_noise=False
        )
        assert np.all(terms[2] == 0)
        assert np.all(terms[3] == 0)
        assert np.all(terms[5] == 0)
        q_terms, _, _ = simulate_uplink_trial(
            fading, phi, cfg, seed=3, trial=trial, with_noise=False
        )
        assert np.all(q_terms[2] == 0)
        assert np.all(q_terms[3] == 0)
        assert np.all(q_terms[5] == 0)


def test_leading_term_is_the_deterministic_gain_times_symbol():
    fading = reference_fading()
    cfg = reference_config()
    zf = zf_lsfp(fading, cfg.rho_r, cfg.tau, variant="mu")
    down = collect_downlink_trials(fading, zf, cfg, seed=9, trials=10)
    coeff = down.terms[:, 0] * np.conj(down.symbols)
    assert_allclose(coeff, np.broadcast_to(down.effective_gain, coeff.shape), rtol=1e-12)
    up = collect_uplink_trials(fading, zf, cfg, seed=9, trials=10)
    coeff = up.terms[:, 0] * np.conj(up.symbols)
    assert_allclose(coeff, np.broadcast_to(up.effective_gain, coeff.shape), rtol=1e-12)


def test_mismatched_weight_shape_raises():
    fading = reference_fading()
    cfg = reference_config()
    with pytest.raises(DimensionError):
        simulate_downlink_trial(fading, np.ones((2, 2, 2)), cfg, seed=0)
    with pytest.raises(DimensionError):
        simulate_uplink_trial(fading, np.ones((4, 3, 3)), cfg, seed=0)


def test_mismatched_fading_and_config_raises():
    cfg = NetworkConfig(L=2, K=2, M=8, tau=2, rho_f=1.0, rho_r=1.0)
    with pytest.raises(DimensionError):
        simulate_downlink_trial(reference_fading(), np.ones((2, 2, 2)), cfg, seed=0)


# ---------------------------------------------------------------------------
# Reproducible counter-based streams and threaded collection
# ---------------------------------------------------------------------------

def test_trial_streams_are_reproducible_and_distinct():
    a = trial_rng(7, 3).standard_normal(4)
    b = trial_rng(7, 3).standard_normal(4)
    c = trial_rng(7, 4).standard_normal(4)
    assert_array_equal(a, b)
    assert np.all(a != c)


def test_threaded_collection_matches_serial_exactly():
    fading = reference_fading()
    cfg = reference_config(M=8)
    phi = random_weights(4, 2, 3)
    serial = collect_downlink_trials(fading, phi, cfg, seed=21, trials=60)
    threaded = collect_downlink_trials(fading, phi, cfg, seed=21, trials=60, threads=3)
    assert_array_equal(serial.terms, threaded.terms)
    assert_array_equal(serial.received, threaded.received)


def test_statistics_are_summation_order_independent():
    fading = reference_fading()
    cfg = reference_config(M=8)
    batch = collect_downlink_trials(fading, random_weights(5, 2, 3), cfg, seed=13, trials=500)
    stats = empirical_term_stats(batch)
    perm = np.random.default_rng(0).permutation(batch.trials)
    batch.terms = batch.terms[perm]
    batch.received = batch.received[perm]
    batch.symbols = batch.symbols[perm]
    shuffled = empirical_term_stats(batch)
    assert_allclose(shuffled.variances, stats.variances, rtol=1e-8)
    assert_allclose(shuffled.mean_coeff, stats.mean_coeff, rtol=1e-8)


# ---------------------------------------------------------------------------
# Closed-form term variances against the analytic denominators
# ---------------------------------------------------------------------------

def test_downlink_variances_sum_to_the_analytic_denominator():
    for seed in range(8):
        fading = random_fading(3, 2, seed=seed)
        phi = random_weights(seed + 50, 2, 3)
        var = downlink_term_variances(fading, phi, 1.3, 0.7, 2, 48)
        num, coherent, incoherent = downlink_components(fading, phi, 1.3, 0.7, 2, 48)
        assert_allclose(var[0], num, rtol=1e-12)
        assert_allclose(var[1:].sum(axis=0), coherent + incoherent + 1.0, rtol=1e-12)


def test_uplink_variances_sum_to_the_analytic_denominator():
    for seed in range(8):
        fading = random_fading(3, 2, seed=seed)
        omega = random_weights(seed + 90, 2, 3)
        var = uplink_term_variances(fading, omega, 0.9, 2, 48)
        num, coherent, incoherent = uplink_components(fading, omega, 0.9, 2, 48)
        assert_allclose(var[0], num, rtol=1e-12)
        assert_allclose(var[1:].sum(axis=0), coherent + incoherent, rtol=1e-12)


def test_variance_identities_hold_for_constructed_weights():
    fading = reference_fading()
    zf = zf_lsfp(fading, 1.0, 2, variant="mu")
    var = downlink_term_variances(fading, zf, 1.0, 1.0, 2, 32)
    num, coherent, incoherent = downlink_components(fading, zf, 1.0, 1.0, 2, 32)
    assert_allclose(var[1:].sum(axis=0), coherent + incoherent + 1.0, rtol=1e-12)
    lsfd = zf_lsfd(fading)
    var_u = uplink_term_variances(fading, lsfd, 1.0, 2, 32)
    num_u, coh_u, inc_u = uplink_components(fading, lsfd, 1.0, 2, 32)
    assert_allclose(var_u[0], num_u, rtol=1e-12)
    assert_allclose(var_u[1:].sum(axis=0), coh_u + inc_u, rtol=1e-12)


# ---------------------------------------------------------------------------
# Empirical moments at the reference operating point
# ---------------------------------------------------------------------------

def test_downlink_moments_match_closed_forms_at_reference_point():
    fading = reference_fading()
    cfg = reference_config()
    zf = zf_lsfp(fading, cfg.rho_r, cfg.tau, variant="mu")
    batch = collect_downlink_trials(fading, zf, cfg, seed=101, trials=20_000)
    stats = empirical_variances_downlink(batch)
    closed = downlink_term_variances(fading, zf, cfg.rho_f, cfg.rho_r, cfg.tau, cfg.M)

    for i in range(1, 6):
        z = (stats.variances[i] - closed[i]) / stats.variances_se[i]
        assert np.all(np.abs(z) < 4.0), f"term {i} drifted: {z}"
    # the additive-noise term has unit variance by construction
    assert np.all(np.abs(stats.variances[5] - 1.0) < 0.03)
    # the terms are pairwise uncorrelated
    cov_z = np.abs(stats.covariances) / stats.covariances_se
    assert np.all(cov_z < 4.0)
    # the matched-filter coefficient reproduces the fed-back gain
    rel = np.abs(stats.mean_coeff.real - batch.effective_gain) / batch.effective_gain
    assert np.all(rel < 0.02)


def test_uplink_moments_match_closed_forms_at_reference_point():
    fading = reference_fading()
    cfg = reference_config()
    lsfd = zf_lsfd(fading)
    batch = collect_uplink_trials(fading, lsfd, cfg, seed=202, trials=20_000)
    stats = empirical_variances_uplink(batch)
    closed = uplink_term_variances(fading, lsfd, cfg.rho_r, cfg.tau, cfg.M)

    for i in range(1, 6):
        z = (stats.variances[i] - closed[i]) / stats.variances_se[i]
        assert np.all(np.abs(z) < 4.0), f"term {i} drifted: {z}"
    cov_z = np.abs(stats.covariances) / stats.covariances_se
    assert np.all(cov_z < 4.0)


def test_batch_direction_is_checked():
    fading = reference_fading()
    cfg = reference_config(M=4)
    batch = collect_downlink_trials(fading, random_weights(6, 2, 3), cfg, seed=1, trials=5)
    with pytest.raises(DimensionError):
        empirical_variances_uplink(batch)


# ---------------------------------------------------------------------------
# Empirical SINR against the closed forms
# ---------------------------------------------------------------------------

def test_downlink_empirical_sinr_matches_closed_form():
    fading = reference_fading()
    cfg = reference_config(M=64)
    zf = zf_lsfp(fading, cfg.rho_r, cfg.tau, variant="mu")
    batch = collect_downlink_trials(fading, zf, cfg, seed=303, trials=10_000)
    closed = finite_m_downlink_sinr(fading, zf, cfg.rho_f, cfg.rho_r, cfg.tau, cfg.M)
    got = empirical_sinr(batch)
    assert_allclose(got, closed, rtol=0.05)


def test_uplink_empirical_sinr_matches_closed_form():
    fading = reference_fading()
    cfg = reference_config(M=64)
    lsfd = zf_lsfd(fading)
    batch = collect_uplink_trials(fading, lsfd, cfg, seed=404, trials=10_000)
    closed = finite_m_uplink_sinr(fading, lsfd, cfg.rho_r, cfg.tau, cfg.M)
    got = empirical_sinr(batch)
    assert_allclose(got, closed, rtol=0.05)


def test_zero_gain_scores_zero():
    fading = reference_fading()
    cfg = reference_config(M=8)
    batch = collect_downlink_trials(fading, random_weights(7, 2, 3), cfg, seed=1, trials=20)
    got = empirical_sinr(batch, epsilon=np.zeros((2, 3)))
    assert np.all(got == 0.0)


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def test_detector_trivial_points():
    assert zf_lsfp_detect(0.0, 64, 1.0, 1.0, 0.5, 2) == 0.0
    s = qpsk_symbols(np.random.default_rng(0), (4, 3))
    scale = math.sqrt(64 * 1.0 * 1.0 * 0.5 * 2)
    assert_array_equal(zf_lsfp_detect(scale * s, 64, 1.0, 1.0, 0.5, 2), s)


def test_nearest_qpsk_decision():
    pts = np.array([0.9 + 0.8j, 0.3 - 2.0j, 1e-3 + 1e-4j])
    decided = nearest_qpsk(pts)
    root = 1 / math.sqrt(2)
    assert decided[0] == root * (1 + 1j)
    assert decided[1] == root * (1 - 1j)
    assert decided[2] == root * (1 + 1j)


def test_symbol_error_rate_decreases_with_antennas():
    fading = random_fading(2, 2, seed=3, cross_range=(0.3, 0.8))
    weights = zf_lsfp(fading, rho_r=1.0, tau=2, variant="eta")
    cfg = NetworkConfig(L=2, K=2, M=64, tau=2, rho_f=0.02, rho_r=1.0)
    rates = ser_study(fading, weights, cfg, M_grid=[64, 256, 1024], seed=9, min_symbols=4000)
    values = [rate for _, rate in rates]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[0] > values[-1]


# ---------------------------------------------------------------------------
# Inner-product convergence probe
# ---------------------------------------------------------------------------

def test_probe_recovers_the_variance():
    rows = lemma1_probe(1.0, [10_000], trials=1000, seed=42)
    row = rows[0]
    assert abs(row["self_mean"] - 1.0) < 0.01
    cross_se = row["cross_sd"] / math.sqrt(1000)
    assert abs(row["cross_mean"]) < 4 * cross_se


def test_probe_degenerate_variance_gives_exact_zeros():
    rows = lemma1_probe(0.0, [10, 100], trials=50, seed=0)
    for row in rows:
        assert row["self_mean"] == 0.0
        assert row["cross_mean"] == 0.0
        assert row["cross_sd"] == 0.0


def test_probe_spread_shrinks_like_inverse_root():
    rows = lemma1_probe(1.0, [100, 400, 1600, 6400], trials=2000, seed=7)
    slope = convergence_slope(rows)
    assert -0.6 < slope < -0.4


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def test_variance_report_round_trip(tmp_path):
    fading = reference_fading()
    cfg = reference_config(M=16)
    zf = zf_lsfp(fading, cfg.rho_r, cfg.tau, variant="mu")
    batch = collect_downlink_trials(fading, zf, cfg, seed=77, trials=2000)
    closed = downlink_term_variances(fading, zf, cfg.rho_f, cfg.rho_r, cfg.tau, cfg.M)
    report = variance_report(batch, closed, k=0, l=1)

    path = tmp_path / "report.csv"
    report.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["term", "closed_form", "empirical", "stderr", "z_score"]
    assert len(rows) == 1 + 1 + 5 + len(COVARIANCE_PAIRS)
    names = [r[0] for r in rows[1:]]
    assert names[0] == "E[T0]"
    assert "Var[T5]" in names
    for r in rows[1:]:
        float(r[1]), float(r[2]), float(r[3]), float(r[4])
    assert report.max_abs_z() < 6.0
