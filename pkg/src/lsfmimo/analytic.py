"""Closed-form SINR and rate lower bounds.

Covers the infinite-antenna limits (with optional per-user power control),
the finite-antenna downlink bound in both the weight form and the alpha
coefficient form, the finite-antenna uplink bound in both the weight form and
the scaled-weight form, and the no-precoding specializations and limits.

Downlink weight inputs are expected in the absorbed convention (the
conjugate-beamformer normalization folded into the weights); LsfMatrices
objects are converted automatically via their stored convention flag.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import estimate_component_variance
from .errors import DegenerateWeights
from .network import LargeScaleFading
from .precoding import LsfMatrices, absorbed_weights, pilot_signature, raw_combining


def rate_from_sinr(sinr):
    """Achievable-rate lower bound in bits per channel use."""
    return np.log2(1.0 + np.asarray(sinr, dtype=float))


# ---------------------------------------------------------------------------
# Infinite-antenna limits
# ---------------------------------------------------------------------------

def _ratio_or_inf(signal: float, interference: float) -> float:
    if interference == 0.0:
        return float("inf")
    return signal / interference


def asymptotic_downlink_sinr(
    fading: LargeScaleFading,
    rho_r: float,
    tau: int,
    k: int,
    j: int,
    rho_f_user: np.ndarray | None = None,
) -> float:
    """Large-antenna downlink SINR of user (k, j) under conjugate beamforming.

    rho_f_user optionally holds per-user forward powers, shape (K, L); uniform
    powers cancel and reduce to the unweighted limit.
    """
    beta = fading.beta
    eta_sq = 1.0 + rho_r * tau * beta.sum(axis=2)[:, k]  # per cell l
    weights = np.ones(fading.L) if rho_f_user is None else np.asarray(rho_f_user)[k, :]
    terms = weights * beta[:, k, j] ** 2 / eta_sq
    signal = terms[j]
    interference = terms.sum() - signal
    return _ratio_or_inf(signal, interference)


def asymptotic_uplink_sinr(
    fading: LargeScaleFading,
    k: int,
    j: int,
    rho_r_user: np.ndarray | None = None,
) -> float:
    """Large-antenna uplink SINR of user (k, j) under matched-filter combining."""
    beta = fading.beta
    weights = np.ones(fading.L) if rho_r_user is None else np.asarray(rho_r_user)[k, :]
    terms = weights * beta[j, k, :] ** 2
    signal = terms[j]
    interference = terms.sum() - signal
    return _ratio_or_inf(signal, interference)


# ---------------------------------------------------------------------------
# Finite-antenna downlink
# ---------------------------------------------------------------------------

def downlink_components(
    fading: LargeScaleFading,
    phi,
    rho_f: float,
    rho_r: float,
    tau: int,
    M: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Numerator, coherent interference (M^2 I1), and incoherent part (M I2).

    All three are (K, L) arrays; the SINR denominator is the last two plus the
    unit noise power.
    """
    phi = absorbed_weights(phi, fading, rho_r, tau, M)
    beta = fading.beta
    C = pilot_signature(fading, rho_r, tau)  # (K, L, L->j)
    couplings = np.einsum("klj,kjv->klv", C, phi)  # (K, target l, symbol v)
    diag = np.einsum("kll->kl", couplings)
    numerator = rho_f * (M * rho_r * tau) ** 2 * np.abs(diag) ** 2
    cross = np.sum(np.abs(couplings) ** 2, axis=2) - np.abs(diag) ** 2
    coherent = (M * rho_r * tau) ** 2 * rho_f * cross
    # incoherent part: estimation error and symbol leakage through every
    # base station, weighted by the total row power of its weights
    own_sq = beta[np.arange(fading.L), :, np.arange(fading.L)] ** 2  # (j, n)
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)  # (j, n)
    row_power = np.sum(np.abs(phi) ** 2, axis=2)  # (n, j)
    station_load = np.einsum("jn,nj->j", own_sq / denom, row_power)
    incoherent = M * rho_f * rho_r * tau * np.einsum("jkl,j->kl", beta, station_load)
    return numerator, coherent, incoherent


def finite_m_downlink_sinr(
    fading: LargeScaleFading,
    phi,
    rho_f: float,
    rho_r: float,
    tau: int,
    M: int,
    k: int | None = None,
    l: int | None = None,
):
    """Finite-antenna downlink SINR; scalar for one user or the full (K, L) array."""
    numerator, coherent, incoherent = downlink_components(
        fading, phi, rho_f, rho_r, tau, M
    )
    sinr = numerator / (coherent + incoherent + 1.0)
    if k is None:
        return sinr
    return float(sinr[k, l])


def finite_m_downlink_sinr_alpha(
    fading: LargeScaleFading,
    alpha: np.ndarray,
    rho_f: float,
    rho_r: float,
    tau: int,
    M: int,
    k: int | None = None,
    l: int | None = None,
):
    """Downlink SINR in the alpha coefficient form."""
    beta = fading.beta
    # couplings[k,l,v] = sum_j beta[j,k,l] * alpha[k,j,v]
    couplings = np.einsum("jkl,kjv->klv", beta, alpha)
    diag = np.einsum("kll->kl", couplings)
    numerator = M * rho_f * rho_r * tau * np.abs(diag) ** 2
    J1 = rho_f * rho_r * tau * (
        np.sum(np.abs(couplings) ** 2, axis=2) - np.abs(diag) ** 2
    )
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)  # (j, n)
    row_power = np.sum(np.abs(alpha) ** 2, axis=2)  # (n, j)
    station_load = np.einsum("jn,nj->j", denom, row_power)
    J2 = rho_f * np.einsum("jkl,j->kl", beta, station_load)
    sinr = numerator / (M * J1 + J2 + 1.0 / M)
    if k is None:
        return sinr
    return float(sinr[k, l])


def no_lsfp_downlink_limit(
    fading: LargeScaleFading, rho_r: float, tau: int, k: int, l: int
) -> float:
    """Large-antenna limit of the downlink SINR with diagonal weights.

    Both the numerator and the coherent interference grow linearly in M once
    the diagonal weights (which shrink as 1/sqrt(M)) are substituted, so the
    limit is the ratio of their coefficients; the incoherent part loses by a
    factor of M. The result coincides with the asymptotic theorem value.
    """
    C = pilot_signature(fading, rho_r, tau)  # (K, L, L)
    ghv = estimate_component_variance(fading, rho_r, tau)
    own = ghv[np.arange(fading.L), :, np.arange(fading.L)]  # (j, k)
    terms = C[k, l, :] ** 2 / own[:, k]
    signal = terms[l]
    return _ratio_or_inf(signal, terms.sum() - signal)


# ---------------------------------------------------------------------------
# Finite-antenna uplink
# ---------------------------------------------------------------------------

def uplink_components(
    fading: LargeScaleFading,
    omega,
    rho_r: float,
    tau: int,
    M: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Numerator, coherent interference (M^2 I1), and incoherent part (M I2)."""
    omega = raw_combining(omega, fading, rho_r, tau, M)
    beta = fading.beta
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)  # (v, k)
    own = beta[np.arange(fading.L), :, np.arange(fading.L)]  # (v, k)
    # D[k,j,v]: coupling of base station v's matched filter into user (k, j)
    D = np.transpose(beta * (own / denom)[:, :, None], (1, 2, 0))
    couplings = np.einsum("kjv,klv->klj", D, omega)
    diag = np.einsum("kll->kl", couplings)
    numerator = (M * rho_r * tau) ** 2 * rho_r * np.abs(diag) ** 2
    cross = np.sum(np.abs(couplings) ** 2, axis=2) - np.abs(diag) ** 2
    coherent = (M * rho_r * tau) ** 2 * rho_r * cross
    received_power = 1.0 + rho_r * beta.sum(axis=(1, 2))  # (v,)
    filter_gain = rho_r * tau * own**2 / denom  # (v, k)
    incoherent = M * np.einsum(
        "klv,vk,v->kl", np.abs(omega) ** 2, filter_gain, received_power
    )
    return numerator, coherent, incoherent


def finite_m_uplink_sinr(
    fading: LargeScaleFading,
    omega,
    rho_r: float,
    tau: int,
    M: int,
    k: int | None = None,
    l: int | None = None,
):
    """Finite-antenna uplink SINR; all-zero combining rows yield 0 with a warning."""
    numerator, coherent, incoherent = uplink_components(fading, omega, rho_r, tau, M)
    denominator = coherent + incoherent
    dead = denominator == 0.0
    if np.any(dead):
        warnings.warn(
            "combining weights are identically zero for some users; their SINR is 0",
            DegenerateWeights,
            stacklevel=2,
        )
    sinr = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=~dead)
    if k is None:
        return sinr
    return float(sinr[k, l])


def finite_m_uplink_sinr_simplified(
    fading: LargeScaleFading,
    omega_star: np.ndarray,
    rho_r: float,
    tau: int,
    M: int,
    k: int | None = None,
    l: int | None = None,
):
    """Uplink SINR in the scaled-weight form."""
    beta = fading.beta
    # couplings[k,l,j] = sum_v beta[v,k,j] * omega_star[k,l,v]
    couplings = np.einsum("vkj,klv->klj", beta, omega_star)
    diag = np.einsum("kll->kl", couplings)
    numerator = M * rho_r**2 * tau * np.abs(diag) ** 2
    J1 = rho_r**2 * tau * (np.sum(np.abs(couplings) ** 2, axis=2) - np.abs(diag) ** 2)
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)  # (v, k)
    received_power = 1.0 + rho_r * beta.sum(axis=(1, 2))  # (v,)
    J2 = np.einsum("klv,vk,v->kl", np.abs(omega_star) ** 2, denom, received_power)
    denominator = M * J1 + J2
    dead = denominator == 0.0
    if np.any(dead):
        warnings.warn(
            "combining weights are identically zero for some users; their SINR is 0",
            DegenerateWeights,
            stacklevel=2,
        )
    sinr = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=~dead)
    if k is None:
        return sinr
    return float(sinr[k, l])


def uplink_effective_gain(
    fading: LargeScaleFading, omega, rho_r: float, tau: int, M: int
) -> np.ndarray:
    """Mean of the combined uplink decision statistic per unit symbol, shape (K, L)."""
    omega = raw_combining(omega, fading, rho_r, tau, M)
    beta = fading.beta
    denom = 1.0 + rho_r * tau * beta.sum(axis=2)
    own = beta[np.arange(fading.L), :, np.arange(fading.L)]
    D = np.transpose(beta * (own / denom)[:, :, None], (1, 2, 0))
    couplings = np.einsum("kjv,klv->klj", D, omega)
    return np.sqrt(rho_r) * M * rho_r * tau * np.einsum("kll->kl", couplings)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class SinrReport:
    """Per-user SINRs, rates, and denominator breakdowns for both directions."""

    sinr_dl: np.ndarray
    sinr_ul: np.ndarray
    rate_dl: np.ndarray
    rate_ul: np.ndarray
    dl_coherent: np.ndarray    # M^2 I1
    dl_incoherent: np.ndarray  # M I2
    dl_noise: float            # unit noise power
    ul_coherent: np.ndarray
    ul_incoherent: np.ndarray

    def to_csv(self, path) -> None:
        """One row per user; the i1/i2/noise columns are the downlink breakdown."""
        K, L = self.sinr_dl.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["k", "l", "sinr_dl", "sinr_ul", "rate_dl", "rate_ul", "i1", "i2", "noise"]
            )
            for k in range(K):
                for l in range(L):
                    writer.writerow(
                        [
                            k,
                            l,
                            repr(float(self.sinr_dl[k, l])),
                            repr(float(self.sinr_ul[k, l])),
                            repr(float(self.rate_dl[k, l])),
                            repr(float(self.rate_ul[k, l])),
                            repr(float(self.dl_coherent[k, l])),
                            repr(float(self.dl_incoherent[k, l])),
                            repr(float(self.dl_noise)),
                        ]
                    )


def build_sinr_report(
    fading: LargeScaleFading,
    weights: LsfMatrices,
    rho_f: float,
    rho_r: float,
    tau: int,
    M: int,
) -> SinrReport:
    """Evaluate both directions for one weight scheme."""
    numerator, coherent, incoherent = downlink_components(
        fading, weights, rho_f, rho_r, tau, M
    )
    sinr_dl = numerator / (coherent + incoherent + 1.0)
    sinr_ul = finite_m_uplink_sinr(fading, weights, rho_r, tau, M)
    _, ul_coherent, ul_incoherent = uplink_components(fading, weights, rho_r, tau, M)
    return SinrReport(
        sinr_dl=sinr_dl,
        sinr_ul=sinr_ul,
        rate_dl=rate_from_sinr(sinr_dl),
        rate_ul=rate_from_sinr(sinr_ul),
        dl_coherent=coherent,
        dl_incoherent=incoherent,
        dl_noise=1.0,
        ul_coherent=ul_coherent,
        ul_incoherent=ul_incoherent,
    )
