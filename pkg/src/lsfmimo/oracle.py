"""Monte-Carlo simulation of both transmission protocols.

Each trial plays the full protocol (pilots, MMSE estimation, payload) and
splits the decision statistic into its six labeled terms: the expected signal
part, the effective-channel fluctuation, pilot contamination, channel
nonorthogonality, estimation error, and additive noise. The received value is
also assembled independently from the true channels, so the term split can be
checked against it per trial. Sample moments of the terms are the ground
truth for every closed-form variance and SINR.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import uplink_effective_gain
from .channel import complex_normal, draw_realization, mmse_estimate, simulate_pilot_phase
from .errors import DimensionError
from .network import LargeScaleFading, NetworkConfig
from .precoding import absorbed_weights, epsilon_feedback, raw_combining

TERM_COUNT = 6
COVARIANCE_PAIRS = [(i, j) for i in range(TERM_COUNT) for j in range(i + 1, TERM_COUNT)]

QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2.0)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream: trial t is reproducible without drawing 0..t-1."""
    return np.random.Generator(np.random.Philox(key=seed, counter=trial << 192))


def qpsk_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-power QPSK symbols."""
    return QPSK_POINTS[rng.integers(0, 4, size=shape)]


@dataclass
class TrialBatch:
    """Per-trial term decompositions for one direction.

    terms[t, i] is the i-th labeled term of trial t, shape (K, L) over users;
    received is the decision statistic assembled independently from the true
    channels, and symbols holds the payload symbols of the target users.
    """

    direction: str
    terms: np.ndarray      # (trials, 6, K, L) complex
    received: np.ndarray   # (trials, K, L) complex
    symbols: np.ndarray    # (trials, K, L) complex
    effective_gain: np.ndarray  # (K, L) real, closed-form coefficient of term 0
    max_decomposition_residual: float

    @property
    def trials(self) -> int:
        return self.terms.shape[0]


def _check_setup(fading: LargeScaleFading, weights: np.ndarray, config: NetworkConfig):
    if (fading.L, fading.K) != (config.L, config.K):
        raise DimensionError(
            f"fading is {fading.L}x{fading.K} cells/users but the "
            f"configuration says {config.L}x{config.K}"
        )
    if weights.shape != (config.K, config.L, config.L):
        raise DimensionError(
            f"weight tensor has shape {weights.shape}, "
            f"expected {(config.K, config.L, config.L)}"
        )


def _mean_estimate_products(
    fading: LargeScaleFading, rho_r: float, tau: int, M: int
) -> np.ndarray:
    """E of (own estimate)^dag (estimate toward cell l), shape (j, k, l)."""
    own = fading.beta[np.arange(fading.L), :, np.arange(fading.L)]  # (j, k)
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2)  # (j, k)
    return M * rho_r * tau * fading.beta * (own / denom)[:, :, None]


def simulate_downlink_trial(
    fading: LargeScaleFading,
    phi,
    config: NetworkConfig,
    seed: int,
    trial: int = 0,
    with_noise: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One coherence block of the forward-link protocol.

    Returns (terms, received, symbols): terms has shape (6, K, L) and sums to
    the received signal of each user; received is assembled from the true
    channels instead of the estimate/error split.
    """
    K, L, M = config.K, config.L, config.M
    rho_f, rho_r, tau = config.rho_f, config.rho_r, config.tau
    phi = absorbed_weights(phi, fading, rho_r, tau, M)
    _check_setup(fading, phi, config)
    rng = trial_rng(seed, trial)

    realization = draw_realization(fading, M, rng)
    Y = simulate_pilot_phase(realization, fading, rho_r, tau, rng, with_noise=with_noise)
    est = mmse_estimate(Y, fading, rho_r, tau, realization)
    s = qpsk_symbols(rng, (K, L))
    w = complex_normal(rng, (K, L)) if with_noise else np.zeros((K, L), complex)

    own_hat = est.g_hat[np.arange(L), :, np.arange(L), :]  # (j, n, m)
    beam = np.conj(own_hat)
    inner_hat = np.einsum("jnm,jklm->jnkl", beam, est.g_hat)
    inner_err = np.einsum("jnm,jklm->jnkl", beam, est.g_tilde)
    inner_true = np.einsum("jnm,jklm->jnkl", beam, realization.g)
    mean_prod = _mean_estimate_products(fading, rho_r, tau, M)  # (j, k, l)
    own_inner = np.einsum("jkkl->jkl", inner_hat)
    c = np.einsum("njv,nv->jn", phi, s)  # transmitted weighted symbol per (station, pilot)

    root = math.sqrt(rho_f)
    terms = np.empty((TERM_COUNT, K, L), complex)
    terms[0] = root * s * np.einsum("kjl,jkl->kl", phi, mean_prod)
    terms[1] = root * s * np.einsum("kjl,jkl->kl", phi, own_inner - mean_prod)
    contaminated = np.einsum("kv,kjv,jkl->kl", s, phi, own_inner)
    terms[2] = root * (contaminated - s * np.einsum("kjl,jkl->kl", phi, own_inner))
    cross = np.einsum("jnkl,jn->kl", inner_hat, c)
    terms[3] = root * (cross - np.einsum("jkl,jk->kl", own_inner, c))
    terms[4] = root * np.einsum("jnkl,jn->kl", inner_err, c)
    terms[5] = w

    received = root * np.einsum("jnkl,jn->kl", inner_true, c) + w
    return terms, received, s


def simulate_uplink_trial(
    fading: LargeScaleFading,
    omega,
    config: NetworkConfig,
    seed: int,
    trial: int = 0,
    with_noise: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One coherence block of the reverse-link protocol.

    omega is taken in the unscaled convention (LsfMatrices are converted).
    Returns (terms, received, symbols) with terms of shape (6, K, L).
    """
    K, L, M = config.K, config.L, config.M
    rho_r, tau = config.rho_r, config.tau
    omega = raw_combining(omega, fading, rho_r, tau, M)
    _check_setup(fading, omega, config)
    rng = trial_rng(seed, trial)

    realization = draw_realization(fading, M, rng)
    Y = simulate_pilot_phase(realization, fading, rho_r, tau, rng, with_noise=with_noise)
    est = mmse_estimate(Y, fading, rho_r, tau, realization)
    s = qpsk_symbols(rng, (K, L))
    w = (
        complex_normal(rng, (L, M))
        if with_noise
        else np.zeros((L, M), complex)
    )

    own_hat = est.g_hat[np.arange(L), :, np.arange(L), :]  # (v, k, m)
    filt = np.conj(own_hat)
    inner_hat = np.einsum("vkm,vnjm->vknj", filt, est.g_hat)
    inner_err = np.einsum("vkm,vnjm->vknj", filt, est.g_tilde)
    inner_true = np.einsum("vkm,vnjm->vknj", filt, realization.g)
    mean_prod = _mean_estimate_products(fading, rho_r, tau, M)  # (v, k, j)
    pilot_slice = np.einsum("vkkj->vkj", inner_hat)  # same-pilot couplings
    filtered_noise = np.einsum("vkm,vm->vk", filt, w)

    root = math.sqrt(rho_r)
    terms = np.empty((TERM_COUNT, K, L), complex)
    terms[0] = root * s * np.einsum("klv,vkl->kl", omega, mean_prod)
    terms[1] = root * s * np.einsum("klv,vkl->kl", omega, pilot_slice - mean_prod)
    same_pilot = np.einsum("klv,vkj,kj->kl", omega, pilot_slice, s)
    terms[2] = root * (same_pilot - s * np.einsum("klv,vkl->kl", omega, pilot_slice))
    cross = np.einsum("klv,vknj,nj->kl", omega, inner_hat, s)
    terms[3] = root * (cross - same_pilot)
    terms[4] = root * np.einsum("klv,vknj,nj->kl", omega, inner_err, s)
    terms[5] = np.einsum("klv,vk->kl", omega, filtered_noise)

    received = (
        root * np.einsum("klv,vknj,nj->kl", omega, inner_true, s)
        + terms[5]
    )
    return terms, received, s


# ---------------------------------------------------------------------------
# Batch collection
# ---------------------------------------------------------------------------

def _collect(simulate, fading, weights, config, seed, trials, threads, with_noise):
    K, L = config.K, config.L
    terms = np.empty((trials, TERM_COUNT, K, L), complex)
    received = np.empty((trials, K, L), complex)
    symbols = np.empty((trials, K, L), complex)

    def run_range(lo, hi):
        for t in range(lo, hi):
            terms[t], received[t], symbols[t] = simulate(
                fading, weights, config, seed, trial=t, with_noise=with_noise
            )

    if threads and threads > 1:
        chunk = -(-trials // threads)
        bounds = [(i, min(i + chunk, trials)) for i in range(0, trials, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run_range(*b), bounds))
    else:
        run_range(0, trials)

    residual = np.max(np.abs(terms.sum(axis=1) - received))
    scale = max(1.0, float(np.max(np.abs(received))))
    return terms, received, symbols, residual / scale


def collect_downlink_trials(
    fading: LargeScaleFading,
    phi,
    config: NetworkConfig,
    seed: int,
    trials: int,
    threads: int | None = None,
    with_noise: bool = True,
) -> TrialBatch:
    gain = epsilon_feedback(fading, phi, config.rho_f, config.rho_r, config.tau, config.M)
    terms, received, symbols, residual = _collect(
        simulate_downlink_trial, fading, phi, config, seed, trials, threads, with_noise
    )
    return TrialBatch(
        direction="downlink",
        terms=terms,
        received=received,
        symbols=symbols,
        effective_gain=gain,
        max_decomposition_residual=residual,
    )


def collect_uplink_trials(
    fading: LargeScaleFading,
    omega,
    config: NetworkConfig,
    seed: int,
    trials: int,
    threads: int | None = None,
    with_noise: bool = True,
) -> TrialBatch:
    gain = uplink_effective_gain(fading, omega, config.rho_r, config.tau, config.M)
    terms, received, symbols, residual = _collect(
        simulate_uplink_trial, fading, omega, config, seed, trials, threads, with_noise
    )
    return TrialBatch(
        direction="uplink",
        terms=terms,
        received=received,
        symbols=symbols,
        effective_gain=gain,
        max_decomposition_residual=residual,
    )


# ---------------------------------------------------------------------------
# Closed-form term variances
# ---------------------------------------------------------------------------

def downlink_term_variances(
    fading: LargeScaleFading, phi, rho_f: float, rho_r: float, tau: int, M: int
) -> np.ndarray:
    """Variances of terms 1..5 at slots [1..5], |mean of term 0|^2 at slot 0.

    Shape (6, K, L). Slots 1..5 sum to the SINR denominator exactly.
    """
    phi = absorbed_weights(phi, fading, rho_r, tau, M)
    beta = fading.beta
    L = fading.L
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)  # (j, k)
    ghv = rho_r * tau * beta**2 / denom[:, :, None]  # (j, k, l)
    ghv_own = ghv[np.arange(L), :, np.arange(L)]  # (j, k)
    err = beta - ghv  # estimation-error variances

    out = np.empty((TERM_COUNT,) + denom.T.shape, float)  # (6, K, L)
    eps = epsilon_feedback(fading, phi, rho_f, rho_r, tau, M)
    out[0] = eps**2

    pair = ghv * ghv_own[:, :, None]  # (j, k, l): fluctuation of the estimate product
    out[1] = rho_f * M * np.einsum("kjl,jkl->kl", np.abs(phi) ** 2, pair)

    # same-pilot couplings from other cells: a coherent part plus a residual
    own = beta[np.arange(L), :, np.arange(L)]
    coupling = M * rho_r * tau * np.einsum(
        "jkl,jk,kjv->klv", beta, own / denom, phi
    )  # (k, l, v)
    coherent = np.sum(np.abs(coupling) ** 2, axis=2) - np.abs(
        np.einsum("kll->kl", coupling)
    ) ** 2
    row_sq = np.abs(phi) ** 2  # (k, j, v)
    residual = np.einsum("kjv,jkl->klv", row_sq, pair)
    residual_sum = residual.sum(axis=2) - np.einsum("kll->kl", residual)
    out[2] = rho_f * (coherent + M * residual_sum)

    row_power = row_sq.sum(axis=2)  # (n, j)
    cross_gain = np.einsum("jn,nj->jn", ghv_own, row_power)  # (j, n)
    total = np.einsum("jkl,jn->kl", ghv, cross_gain)
    same = np.einsum("jkl,jk->kl", ghv, np.einsum("jk,kj->jk", ghv_own, row_power))
    out[3] = rho_f * M * (total - same)

    out[4] = rho_f * M * np.einsum("jkl,jn->kl", err, cross_gain)
    out[5] = 1.0
    return out


def uplink_term_variances(
    fading: LargeScaleFading, omega, rho_r: float, tau: int, M: int
) -> np.ndarray:
    """Variances of terms 1..5 at slots [1..5], |mean of term 0|^2 at slot 0."""
    omega = raw_combining(omega, fading, rho_r, tau, M)
    beta = fading.beta
    L = fading.L
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)  # (v, k)
    ghv = rho_r * tau * beta**2 / denom[:, :, None]  # (v, k/n, l/j)
    ghv_own = ghv[np.arange(L), :, np.arange(L)]  # (v, k)
    err = beta - ghv
    w_sq = np.abs(omega) ** 2  # (k, l, v)

    out = np.empty((TERM_COUNT,) + denom.T.shape, float)
    gain = uplink_effective_gain(fading, omega, rho_r, tau, M)
    out[0] = gain**2

    out[1] = rho_r * M * np.einsum("klv,vk,vkl->kl", w_sq, ghv_own, ghv)

    own = beta[np.arange(L), :, np.arange(L)]
    coupling = M * rho_r * tau * np.einsum(
        "vkj,vk,klv->klj", beta, own / denom, omega
    )  # (k, l, j)
    coherent = np.sum(np.abs(coupling) ** 2, axis=2) - np.abs(
        np.einsum("kll->kl", coupling)
    ) ** 2
    residual = np.einsum("klv,vk,vkj->klj", w_sq, ghv_own, ghv)
    residual_sum = residual.sum(axis=2) - np.einsum("kll->kl", residual)
    out[2] = rho_r * (coherent + M * residual_sum)

    station_hat = np.einsum("vnj->vn", ghv)  # total estimate power seen at v
    total = np.einsum("klv,vk,vn->kl", w_sq, ghv_own, station_hat)
    same = np.einsum("klv,vk,vk->kl", w_sq, ghv_own, np.einsum("vkj->vk", ghv))
    out[3] = rho_r * M * (total - same)

    station_err = np.einsum("vnj->vn", err)
    out[4] = rho_r * M * np.einsum("klv,vk,vn->kl", w_sq, ghv_own, station_err)
    out[5] = M * np.einsum("klv,vk->kl", w_sq, ghv_own)
    return out


# ---------------------------------------------------------------------------
# Empirical statistics and reports
# ---------------------------------------------------------------------------

@dataclass
class TermStats:
    """Sample moments of a batch: term-0 coefficient, variances, covariances."""

    mean_coeff: np.ndarray  # (K, L) complex, correlation of received with the symbol
    mean_coeff_se: np.ndarray
    variances: np.ndarray   # (6, K, L) real; slot 0 holds |mean of term 0|^2
    variances_se: np.ndarray
    covariances: np.ndarray  # (15, K, L) complex, pairs in COVARIANCE_PAIRS order
    covariances_se: np.ndarray
    trials: int


def empirical_term_stats(batch: TrialBatch) -> TermStats:
    n = batch.trials
    root_n = math.sqrt(n)

    matched = batch.received * np.conj(batch.symbols)
    mean_coeff = matched.mean(axis=0)
    mean_coeff_se = matched.std(axis=0) / root_n

    power = np.abs(batch.terms) ** 2  # (n, 6, K, L)
    variances = power.mean(axis=0)
    variances_se = power.std(axis=0) / root_n
    # slot 0 is not a variance; report the squared coefficient magnitude
    matched0 = batch.terms[:, 0] * np.conj(batch.symbols)
    variances[0] = np.abs(matched0.mean(axis=0)) ** 2

    products = np.stack(
        [batch.terms[:, i] * np.conj(batch.terms[:, j]) for i, j in COVARIANCE_PAIRS],
        axis=1,
    )
    covariances = products.mean(axis=0)
    covariances_se = products.std(axis=0) / root_n
    return TermStats(
        mean_coeff=mean_coeff,
        mean_coeff_se=mean_coeff_se,
        variances=variances,
        variances_se=variances_se,
        covariances=covariances,
        covariances_se=covariances_se,
        trials=n,
    )


def empirical_variances_downlink(batch: TrialBatch) -> TermStats:
    if batch.direction != "downlink":
        raise DimensionError("expected a downlink batch")
    return empirical_term_stats(batch)


def empirical_variances_uplink(batch: TrialBatch) -> TermStats:
    if batch.direction != "uplink":
        raise DimensionError("expected an uplink batch")
    return empirical_term_stats(batch)


def empirical_sinr(batch: TrialBatch, epsilon: np.ndarray | None = None) -> np.ndarray:
    """|coefficient|^2 over the sample variance of everything else, shape (K, L)."""
    eps = batch.effective_gain if epsilon is None else epsilon
    residual = batch.received - eps * batch.symbols
    return np.abs(eps) ** 2 / np.mean(np.abs(residual) ** 2, axis=0)


@dataclass
class VarianceReport:
    """Closed-form versus empirical moments for one user, row per statistic."""

    rows: list = field(default_factory=list)  # (name, closed, empirical, stderr)

    def add(self, name: str, closed: float, empirical: float, stderr: float) -> None:
        self.rows.append((name, closed, empirical, stderr))

    def z_scores(self) -> dict[str, float]:
        out = {}
        for name, closed, empirical, stderr in self.rows:
            out[name] = (empirical - closed) / stderr if stderr > 0 else 0.0
        return out

    def max_abs_z(self) -> float:
        return max(abs(z) for z in self.z_scores().values())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["term", "closed_form", "empirical", "stderr", "z_score"])
            z = self.z_scores()
            for name, closed, empirical, stderr in self.rows:
                writer.writerow(
                    [name, repr(float(closed)), repr(float(empirical)),
                     repr(float(stderr)), repr(float(z[name]))]
                )


def variance_report(
    batch: TrialBatch, closed_variances: np.ndarray, k: int, l: int
) -> VarianceReport:
    """Compare a batch against closed forms for user (k, l).

    closed_variances comes from downlink_term_variances or
    uplink_term_variances; slot 0 carries the squared mean coefficient.
    """
    stats = empirical_term_stats(batch)
    prefix = "T" if batch.direction == "downlink" else "Q"
    report = VarianceReport()
    report.add(
        f"E[{prefix}0]",
        float(batch.effective_gain[k, l]),
        float(stats.mean_coeff[k, l].real),
        float(stats.mean_coeff_se[k, l]),
    )
    for i in range(1, TERM_COUNT):
        report.add(
            f"Var[{prefix}{i}]",
            float(closed_variances[i, k, l]),
            float(stats.variances[i, k, l]),
            float(stats.variances_se[i, k, l]),
        )
    for idx, (i, j) in enumerate(COVARIANCE_PAIRS):
        report.add(
            f"Cov[{prefix}{i},{prefix}{j}]",
            0.0,
            float(np.abs(stats.covariances[idx, k, l])),
            float(stats.covariances_se[idx, k, l]),
        )
    return report


# ---------------------------------------------------------------------------
# Detection studies
# ---------------------------------------------------------------------------

def zf_lsfp_detect(y, M: int, rho_f: float, rho_r: float, rho_A: float, tau: int):
    """Normalize the received signal by the nominal zero-forcing gain."""
    return np.asarray(y) / math.sqrt(M * rho_f * rho_r * rho_A * tau)


def nearest_qpsk(points: np.ndarray) -> np.ndarray:
    """Map each complex sample to the closest unit-power QPSK point."""
    distances = np.abs(points[..., None] - QPSK_POINTS)
    return QPSK_POINTS[np.argmin(distances, axis=-1)]


def ser_study(
    fading: LargeScaleFading,
    weights,
    config: NetworkConfig,
    M_grid,
    seed: int,
    min_symbols: int = 10_000,
    rho_A: float | None = None,
    threads: int | None = None,
) -> list[tuple[int, float]]:
    """Symbol-error rate of the normalized detector over an antenna grid."""
    if rho_A is None:
        rho_A = getattr(weights, "rho_A", 1.0)
    out = []
    per_trial = config.K * config.L
    trials = -(-min_symbols // per_trial)
    for M in M_grid:
        point = replace(config, M=int(M))
        batch = collect_downlink_trials(
            fading, weights, point, seed, trials, threads=threads
        )
        detected = nearest_qpsk(
            zf_lsfp_detect(
                batch.received, int(M), config.rho_f, config.rho_r, rho_A, config.tau
            )
        )
        errors = np.sum(np.abs(detected - batch.symbols) > 1e-9)
        out.append((int(M), float(errors) / batch.symbols.size))
    return out


def lemma1_probe(nu: float, M_grid, trials: int, seed: int) -> list[dict]:
    """Convergence of normalized inner products of independent CN vectors.

    For each M: sample mean of x^dag x / M (tends to nu), of x^dag y / M
    (tends to 0), and their spreads. The spread decays like 1 / sqrt(M).
    """
    rows = []
    rng = np.random.default_rng(seed)
    for M in M_grid:
        if nu == 0.0:
            rows.append(
                {"M": int(M), "self_mean": 0.0, "self_se": 0.0,
                 "cross_mean": complex(0.0), "cross_sd": 0.0}
            )
            continue
        x = complex_normal(rng, (trials, int(M)), variance=nu)
        y = complex_normal(rng, (trials, int(M)), variance=nu)
        self_products = np.sum(np.abs(x) ** 2, axis=1) / M
        cross_products = np.sum(np.conj(x) * y, axis=1) / M
        rows.append(
            {
                "M": int(M),
                "self_mean": float(self_products.mean()),
                "self_se": float(self_products.std() / math.sqrt(trials)),
                "cross_mean": complex(cross_products.mean()),
                "cross_sd": float(cross_products.std()),
            }
        )
    return rows


def convergence_slope(rows: list[dict]) -> float:
    """Log-log slope of the cross-product spread against M."""
    M = np.array([row["M"] for row in rows], float)
    sd = np.array([row["cross_sd"] for row in rows], float)
    slope, _ = np.polyfit(np.log(M), np.log(sd), 1)
    return float(slope)
