"""Estimation of large-scale gains from single-tone orthogonal training.

Each of mu transmitters gets one column of the identity as its tone, so the
projection of the received block onto the target's tone removes every other
transmitter exactly. The quadratic estimator subtracts the known noise floor
and is unbiased; it converges to the true gain as the antenna count grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import complex_normal
from .errors import ConfigError


@dataclass
class BetaEstimate:
    """Quadratic gain estimate with its metadata.

    raw is the unclamped estimator output (averaged when trials > 1);
    beta_hat clamps it at zero since a power gain cannot be negative.
    """

    beta_hat: float
    raw: float
    M_used: int
    mu: int
    rho_r: float
    trials: int


def _check_inputs(gains: np.ndarray, target_index: int, mu: int, M: int) -> None:
    if mu < 1:
        raise ConfigError(f"tone count must be at least 1, got {mu}")
    if gains.shape != (mu,):
        raise ConfigError(
            f"expected one gain per tone ({mu} values), got shape {gains.shape}"
        )
    if not 0 <= target_index < mu:
        raise ConfigError(f"target index {target_index} out of range for {mu} tones")
    if M < 1:
        raise ConfigError(f"antenna count must be positive, got {M}")


def _raw_trials(
    gains: np.ndarray,
    target_index: int,
    M: int,
    rho_r: float,
    mu: int,
    rng: np.random.Generator,
    trials: int,
    with_noise: bool,
) -> np.ndarray:
    tones = np.eye(mu)
    target_tone = tones[:, target_index]
    amplitude = np.sqrt(rho_r * mu * gains)  # (mu,)
    raws = np.empty(trials)
    for t in range(trials):
        h = complex_normal(rng, (mu, M))
        Y = h.T * amplitude[None, :]  # (M, mu), one transmitter per column
        if with_noise:
            Y = Y + complex_normal(rng, (M, mu))
        y = Y @ target_tone
        energy = float(np.sum(np.abs(y) ** 2))
        raws[t] = energy / (M * rho_r * mu)
        if with_noise:
            raws[t] -= 1.0 / (rho_r * mu)
    return raws


def estimate_beta(
    true_beta_env,
    target_index: int,
    M: int,
    rho_r: float,
    mu: int,
    seed,
    trials: int = 1,
    with_noise: bool = True,
) -> BetaEstimate:
    """Estimate the target's gain from its projected training energy.

    true_beta_env lists the gain of every transmitter in the environment,
    one per tone; only the target's tone survives the projection. The
    estimator is energy/(M*rho_r*mu) minus the noise floor 1/(rho_r*mu)
    (dropped when noise is disabled), averaged over trials.
    """
    gains = np.asarray(true_beta_env, dtype=float)
    _check_inputs(gains, target_index, mu, M)
    rng = np.random.default_rng(seed)
    raws = _raw_trials(gains, target_index, M, rho_r, mu, rng, trials, with_noise)
    raw = float(raws.mean())
    return BetaEstimate(
        beta_hat=max(raw, 0.0),
        raw=raw,
        M_used=M,
        mu=mu,
        rho_r=rho_r,
        trials=trials,
    )


def convergence_study(
    true_beta_env,
    target_index: int,
    M_grid,
    rho_r: float,
    mu: int,
    seed,
    trials: int = 200,
    with_noise: bool = True,
) -> list[dict]:
    """Mean, spread, and standard error of the raw estimator per antenna count."""
    gains = np.asarray(true_beta_env, dtype=float)
    rng = np.random.default_rng(seed)
    rows = []
    for M in M_grid:
        _check_inputs(gains, target_index, mu, int(M))
        raws = _raw_trials(gains, target_index, int(M), rho_r, mu, rng, trials, with_noise)
        rows.append(
            {
                "M": int(M),
                "mean": float(raws.mean()),
                "std": float(raws.std(ddof=1)),
                "se": float(raws.std(ddof=1) / math.sqrt(trials)),
            }
        )
    return rows


def error_decay_slope(rows: list[dict]) -> float:
    """Log-log slope of the estimator spread against the antenna count."""
    M = np.array([row["M"] for row in rows], float)
    std = np.array([row["std"] for row in rows], float)
    slope, _ = np.polyfit(np.log(M), np.log(std), 1)
    return float(slope)


def supportable_cell_count(N: int, mu: int, K: int) -> int:
    """How many cells one large-scale coherence block can train.

    N tone slots, mu tones per estimate, K users per cell: each slot carries
    mu user assignments and each cell consumes K of them.
    """
    if min(N, mu, K) < 1:
        raise ConfigError("N, mu, and K must all be positive")
    return N * mu // K
