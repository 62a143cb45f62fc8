"""Large-scale fading precoding (downlink) and decoding (uplink) matrices.

Two weight conventions appear in the model. In the protocol convention the
conjugate beamformer is normalized by the expected estimate norm (division by
lambda inside the beamformer), and the LSFP matrix acts on top of that. In the
analysis convention that normalization is absorbed into the LSFP coefficients,
which is the form every finite-antenna SINR expression here expects.

LsfMatrices records which convention its downlink matrix is stored in via the
``absorbed`` flag; ``absorbed_weights`` converts to the analysis convention.
The zero-forcing construction from the eta-normalized gain matrix is a
protocol quantity (absorbed=False); the mu-weighted construction and the
no-LSFP diagonal are defined directly in the analysis convention
(absorbed=True). Either way, the matrix stored is exactly what its defining
expression states.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import estimate_norm_sq
from .errors import ConfigError, SingularMatrix
from .network import LargeScaleFading

CONDITION_LIMIT = 1e12

MODE_NONE = "none"
MODE_ZERO_FORCING = "zero-forcing"


@dataclass
class LsfMatrices:
    """Per-pilot LSFP/LSFD matrices.

    phi: downlink matrices, shape (K, L, L); row j, column v of matrix k is
        the weight applied by base station j to the symbol of user (k, v).
    omega: uplink combining matrices, shape (K, L, L); row l, column v of
        matrix k combines the statistic from base station v into the decision
        for user (k, l). Always stored in the scaled convention (per-station
        estimate gain divided out); raw_combining undoes that.
    rho_A: global normalization applied to zero-forcing downlink matrices.
    mode: "none" or "zero-forcing".
    absorbed: True when phi already includes the conjugate-beamformer
        normalization (analysis convention), False when it is the protocol
        matrix that rides on a normalized beamformer. Refers to phi only.
    variant: which gain matrix a zero-forcing construction inverted.
    """

    phi: np.ndarray | None
    omega: np.ndarray | None
    rho_A: float
    mode: str
    absorbed: bool = True
    variant: str | None = None

    def to_csv(self, path, part: str = "phi") -> None:
        tensor = self.phi if part == "phi" else self.omega
        if tensor is None:
            raise ConfigError(f"no {part} matrices stored")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "row", "col", "value"])
            K, L, _ = tensor.shape
            for k in range(K):
                for r in range(L):
                    for c in range(L):
                        writer.writerow([k, r, c, repr(float(tensor[k, r, c]))])


# ---------------------------------------------------------------------------
# Gain matrices
# ---------------------------------------------------------------------------

def _check_pilot_index(fading: LargeScaleFading, k: int) -> None:
    if not 0 <= k < fading.K:
        raise ConfigError(f"pilot index {k} out of range for K={fading.K}")


def build_BD(fading: LargeScaleFading, rho_r: float, tau: int, k: int) -> np.ndarray:
    """Downlink gain matrix with eta normalization: entry (l, j) = beta[j,k,l]/eta[j,k]."""
    _check_pilot_index(fading, k)
    eta = np.sqrt(1.0 + rho_r * tau * fading.beta[:, k, :].sum(axis=1))  # per BS j
    return fading.beta[:, k, :].T / eta[None, :]


def build_B_mu(fading: LargeScaleFading, rho_r: float, tau: int, k: int) -> np.ndarray:
    """Downlink gain matrix with mu weighting: entry (l, j) = beta[j,k,l] * mu[j,k]."""
    _check_pilot_index(fading, k)
    denom = 1.0 + rho_r * tau * fading.beta[:, k, :].sum(axis=1)
    mu = np.array([fading.beta[j, k, j] for j in range(fading.L)]) / denom
    return fading.beta[:, k, :].T * mu[None, :]


def build_BU(fading: LargeScaleFading, k: int) -> np.ndarray:
    """Uplink gain matrix: entry (l, j) = beta[l,k,j] (BS rows, cell columns)."""
    _check_pilot_index(fading, k)
    return fading.beta[:, k, :]


def _checked_inverse(B: np.ndarray, k: int) -> np.ndarray:
    condition = np.linalg.cond(B)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularMatrix(k, float(condition))
    return np.linalg.inv(B)


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------

def zf_lsfp(
    fading: LargeScaleFading, rho_r: float, tau: int, variant: str = "mu"
) -> LsfMatrices:
    """Zero-forcing LSFP matrices for every pilot, plus the matching LSFD part.

    Phi^{[k]} = sqrt(rho_A) * inverse(B^{[k]}), with one global rho_A chosen so
    the largest row power over all (k, row) equals one exactly.
    """
    if variant not in ("eta", "mu"):
        raise ConfigError(f"unknown zero-forcing variant {variant!r}")
    build = build_BD if variant == "eta" else build_B_mu
    inverses = np.empty((fading.K, fading.L, fading.L))
    for k in range(fading.K):
        inverses[k] = _checked_inverse(build(fading, rho_r, tau, k), k)
    max_row_power = np.max(np.sum(inverses**2, axis=2))
    rho_A = 1.0 / max_row_power
    omega = zf_lsfd(fading).omega
    return LsfMatrices(
        phi=np.sqrt(rho_A) * inverses,
        omega=omega,
        rho_A=rho_A,
        mode=MODE_ZERO_FORCING,
        absorbed=(variant == "mu"),
        variant=variant,
    )


def zf_lsfd(fading: LargeScaleFading, k_range=None) -> LsfMatrices:
    """Zero-forcing LSFD combining matrices (uplink only).

    k_range optionally restricts which pilot indices are built; the rest keep
    identity combining so the result stays usable for the whole network.
    """
    if k_range is None:
        k_range = range(fading.K)
    omega = np.tile(np.eye(fading.L), (fading.K, 1, 1))
    for k in k_range:
        _check_pilot_index(fading, k)
        omega[k] = _checked_inverse(build_BU(fading, k), k)
    return LsfMatrices(
        phi=None, omega=omega, rho_A=1.0, mode=MODE_ZERO_FORCING, absorbed=True
    )


def no_lsfp(fading: LargeScaleFading, rho_r: float, tau: int, M: int) -> LsfMatrices:
    """Diagonal weights without network-side precoding, identity combining.

    The diagonal entry makes each user's beamformed signal carry unit average
    power, so it equals the reciprocal of the expected estimate norm; the
    matrix is therefore already in the absorbed convention.
    """
    lam_sq = estimate_norm_sq(fading, rho_r, tau, M)  # (L, K)
    phi = np.zeros((fading.K, fading.L, fading.L))
    for k in range(fading.K):
        phi[k] = np.diag(1.0 / np.sqrt(lam_sq[:, k]))
    omega = np.tile(np.eye(fading.L), (fading.K, 1, 1))
    return LsfMatrices(phi=phi, omega=omega, rho_A=1.0, mode=MODE_NONE, absorbed=True)


# ---------------------------------------------------------------------------
# Weight-convention conversions
# ---------------------------------------------------------------------------

def absorbed_weights(
    lsf: LsfMatrices | np.ndarray,
    fading: LargeScaleFading,
    rho_r: float,
    tau: int,
    M: int,
) -> np.ndarray:
    """Downlink weights in the analysis convention, shape (K, L, L).

    A protocol-convention matrix has row j divided by the expected estimate
    norm of base station j (which depends on M); an absorbed matrix or plain
    array passes through unchanged.
    """
    if isinstance(lsf, np.ndarray):
        return lsf
    if lsf.phi is None:
        raise ConfigError("these matrices carry no downlink part")
    if lsf.absorbed:
        return lsf.phi
    lam = np.sqrt(estimate_norm_sq(fading, rho_r, tau, M))  # (L, K)
    return lsf.phi / lam.T[:, :, None]


def phi_to_alpha(
    phi: np.ndarray, fading: LargeScaleFading, rho_r: float, tau: int
) -> np.ndarray:
    """Convert absorbed weights to the alpha coefficient form, shape (K, L, L)."""
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2)  # (L, K)
    own = fading.beta[np.arange(fading.L), :, np.arange(fading.L)]  # (L, K)
    factor = np.sqrt(rho_r * tau) * own / denom
    return phi * factor.T[:, :, None]


def alpha_to_phi(
    alpha: np.ndarray, fading: LargeScaleFading, rho_r: float, tau: int
) -> np.ndarray:
    """Inverse of phi_to_alpha (valid whenever all gains are positive)."""
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2)
    own = fading.beta[np.arange(fading.L), :, np.arange(fading.L)]
    factor = np.sqrt(rho_r * tau) * own / denom
    return alpha / factor.T[:, :, None]


def omega_star(
    omega: np.ndarray, fading: LargeScaleFading, rho_r: float, tau: int, M: int
) -> np.ndarray:
    """Convert combining weights to the scaled form used by the simplified SINR."""
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2)  # (v, k)
    own = fading.beta[np.arange(fading.L), :, np.arange(fading.L)]
    factor = np.sqrt(rho_r * tau * M) * own / denom  # (v, k)
    return omega * factor.T[:, None, :]


def raw_combining(
    lsf: LsfMatrices | np.ndarray,
    fading: LargeScaleFading,
    rho_r: float,
    tau: int,
    M: int,
) -> np.ndarray:
    """Combining weights applied to the unscaled decision statistics, shape (K, L, L).

    Constructed LsfMatrices store their combining part in the scaled
    convention (the per-station estimate gain divided out), because that is
    the convention in which zero forcing inverts the plain gain matrix; this
    undoes the scaling. A plain array passes through unchanged.
    """
    if isinstance(lsf, np.ndarray):
        return lsf
    if lsf.omega is None:
        raise ConfigError("these matrices carry no combining part")
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2)  # (v, k)
    own = fading.beta[np.arange(fading.L), :, np.arange(fading.L)]
    factor = np.sqrt(rho_r * tau * M) * own / denom  # (v, k)
    return lsf.omega / factor.T[:, None, :]


# ---------------------------------------------------------------------------
# Applications
# ---------------------------------------------------------------------------

def lsfp_combine(phi_k: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Apply one pilot's LSFP matrix to the symbol vector: c = Phi s."""
    return phi_k @ s


def pilot_signature(fading: LargeScaleFading, rho_r: float, tau: int) -> np.ndarray:
    """Coefficient tensor C[k,l,j] = beta[j,k,l]*beta[j,k,j]/(1 + rho_r*tau*sum_s beta[j,k,s]).

    This is the weight with which base station j's beamformer couples into
    user (k, l); it is the building block of the feedback quantities and of
    the coherent parts of the finite-antenna SINR expressions.
    """
    denom = 1.0 + rho_r * tau * fading.beta.sum(axis=2)  # (j, k)
    own = fading.beta[np.arange(fading.L), :, np.arange(fading.L)]  # (j, k)
    weight = own / denom  # (j, k)
    return np.transpose(fading.beta * weight[:, :, None], (1, 2, 0))


def epsilon_feedback(
    fading: LargeScaleFading,
    phi: LsfMatrices | np.ndarray,
    rho_f: float,
    rho_r: float,
    tau: int,
    M: int,
) -> np.ndarray:
    """Expected effective channel gain fed back to each user, shape (K, L).

    epsilon[k,l] = sqrt(rho_f) * M * rho_r * tau *
        sum_j C[k,l,j] * phi_absorbed[k,j,l].
    """
    phi_abs = absorbed_weights(phi, fading, rho_r, tau, M)
    C = pilot_signature(fading, rho_r, tau)  # (K, L, L->j)
    return np.sqrt(rho_f) * M * rho_r * tau * np.einsum(
        "klj,kjl->kl", C, phi_abs
    )


def bs_power_gamma(
    fading: LargeScaleFading,
    alpha: np.ndarray,
    rho_r: float,
    tau: int,
    M: int,
    j: int,
) -> float:
    """Average normalized transmit power of base station j under weights alpha.

    gamma_j = M * sum_k (1 + rho_r*tau*sum_s beta[j,k,s]) * sum_v |alpha[k,j,v]|^2.
    """
    if not 0 <= j < fading.L:
        raise ConfigError(f"base station index {j} out of range for L={fading.L}")
    denom = 1.0 + rho_r * tau * fading.beta[j].sum(axis=1)  # (K,)
    row_power = np.sum(np.abs(alpha[:, j, :]) ** 2, axis=1)  # (K,)
    return float(M * np.sum(denom * row_power))
