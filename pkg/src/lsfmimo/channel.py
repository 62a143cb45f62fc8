"""Small-scale fading, pilot-phase simulation, and MMSE channel estimation.

Index convention throughout: tensors are [j][k][l] where j is the observing
base station, k the pilot index, and l the cell of the user. Antenna vectors
add a trailing axis of length M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .network import LargeScaleFading


def as_rng(seed) -> np.random.Generator:
    """Accept either a seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian draws with the given per-entry variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass
class ChannelRealization:
    """One coherence block of small-scale fading.

    h has unit-variance CN entries; g scales each M-vector by the square root
    of the corresponding large-scale gain.
    """

    h: np.ndarray  # (L, K, L, M) complex
    g: np.ndarray  # (L, K, L, M) complex

    @property
    def M(self) -> int:
        return self.h.shape[-1]


@dataclass
class ChannelEstimates:
    """MMSE estimates and their exact second-order statistics."""

    g_hat: np.ndarray          # (L, K, L, M) complex
    theta: np.ndarray          # (L, K, L) real
    lambda_sq: np.ndarray      # (L, K) real, expected squared norm of the own-cell estimate
    g_tilde: np.ndarray | None  # (L, K, L, M) complex estimation error, if the truth was given


def draw_realization(fading: LargeScaleFading, M: int, seed) -> ChannelRealization:
    """Draw i.i.d. Rayleigh fading for every (base station, user) pair."""
    if M < 1:
        raise DimensionError(f"antenna count must be positive, got {M}")
    rng = as_rng(seed)
    h = complex_normal(rng, (fading.L, fading.K, fading.L, M))
    g = np.sqrt(fading.beta)[..., None] * h
    return ChannelRealization(h=h, g=g)


def pilot_matrix(tau: int, K: int) -> np.ndarray:
    """Orthonormal pilots: the first K columns of the tau-dimensional identity."""
    if tau < K:
        raise DimensionError(f"pilot length tau={tau} is shorter than user count K={K}")
    return np.eye(tau, K)


def compute_theta(fading: LargeScaleFading, rho_r: float, tau: int) -> np.ndarray:
    """MMSE shrinkage coefficients, shape (L, K, L).

    theta[j,k,l] = sqrt(rho_r*tau) * beta[j,k,l] / (1 + rho_r*tau * sum_s beta[j,k,s]).
    """
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2, keepdims=True)
    return np.sqrt(rho_r * tau) * fading.beta / denom


def estimate_component_variance(fading: LargeScaleFading, rho_r: float, tau: int) -> np.ndarray:
    """Per-component variance of each MMSE estimate, shape (L, K, L).

    Equals rho_r*tau*beta^2 / (1 + rho_r*tau * sum_s beta[j,k,s]); the
    estimation error has per-component variance beta minus this.
    """
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2, keepdims=True)
    return rho_r * tau * fading.beta**2 / denom


def estimate_norm_sq(fading: LargeScaleFading, rho_r: float, tau: int, M: int) -> np.ndarray:
    """Expected squared norm of the own-cell estimate, shape (L, K)."""
    var = estimate_component_variance(fading, rho_r, tau)
    own = var[np.arange(fading.L), :, np.arange(fading.L)]  # (L, K)
    return M * own


def simulate_pilot_phase(
    realization: ChannelRealization,
    fading: LargeScaleFading,
    rho_r: float,
    tau: int,
    seed,
    with_noise: bool = True,
) -> np.ndarray:
    """Received pilot-phase matrices Y, shape (L, M, tau).

    Every cell reuses the same orthonormal pilot set, so base station j sees
    the pilot-k users of all L cells stacked on pilot column k, plus unit
    variance noise.
    """
    L, K = fading.L, fading.K
    if tau < K:
        raise DimensionError(f"pilot length tau={tau} is shorter than user count K={K}")
    M = realization.M
    rng = as_rng(seed)
    Y = complex_normal(rng, (L, M, tau)) if with_noise else np.zeros((L, M, tau), complex)
    # g summed over the interfering cells lands on the pilot's column
    combined = realization.g.sum(axis=2)  # (L, K, M)
    Y[:, :, :K] += np.sqrt(rho_r * tau) * np.transpose(combined, (0, 2, 1))
    return Y


def mmse_estimate(
    Y: np.ndarray,
    fading: LargeScaleFading,
    rho_r: float,
    tau: int,
    realization: ChannelRealization | None = None,
) -> ChannelEstimates:
    """MMSE channel estimates from the pilot observations.

    The estimate for every (j,k,l) is a scalar multiple of the same projected
    observation Y_j r^{[k]}, which is what makes estimates across cells exactly
    proportional. When the true realization is supplied, the estimation error
    g - g_hat is returned as well.
    """
    L, K = fading.L, fading.K
    M = Y.shape[1]
    theta = compute_theta(fading, rho_r, tau)
    projected = Y[:, :, :K]  # (L, M, K), pilot matrix is identity columns
    g_hat = theta[:, :, :, None] * np.transpose(projected, (0, 2, 1))[:, :, None, :]
    lam_sq = estimate_norm_sq(fading, rho_r, tau, M)
    g_tilde = realization.g - g_hat if realization is not None else None
    return ChannelEstimates(g_hat=g_hat, theta=theta, lambda_sq=lam_sq, g_tilde=g_tilde)
