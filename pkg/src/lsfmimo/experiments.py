"""Rate-CDF studies over random network draws.

For every draw, users are placed in the hexagonal layout, the gain tensor is
built, and per-user forward-link rates are computed from the closed-form
SINR for each antenna count in the grid. Randomness sits entirely in the
large-scale draw; the closed form already averages over the small-scale
fading. Rates across draws form the per-user CDF, per-draw minima form the
min-rate CDF, and the 5% point of the former is the outage rate.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import finite_m_downlink_sinr, rate_from_sinr
from .errors import ConfigError, ExperimentAborted, SingularMatrix
from .network import NetworkConfig, draw_user_positions, fading_from_positions
from .precoding import no_lsfp, zf_lsfp

SCHEME_NO_LSFP = "no-lsfp"
SCHEME_ZF_LSFP = "zf-lsfp"
SCHEMES = (SCHEME_NO_LSFP, SCHEME_ZF_LSFP)

SKIP_FRACTION_LIMIT = 0.10


def draw_rng(seed: int, draw: int) -> np.random.Generator:
    """Independent, order-free stream for one network draw."""
    return np.random.default_rng([seed, draw])


# ---------------------------------------------------------------------------
# Empirical distribution helpers
# ---------------------------------------------------------------------------

def empirical_cdf(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sorted sample values paired with P(X <= value)."""
    values = np.sort(np.asarray(samples, dtype=float))
    n = values.size
    if n == 0:
        raise ConfigError("cannot build a distribution from zero samples")
    return values, np.arange(1, n + 1) / n


def cdf_at(sorted_values: np.ndarray, x: float) -> float:
    """Fraction of samples at or below x (0 below the min, 1 above the max)."""
    return float(np.searchsorted(sorted_values, x, side="right")) / sorted_values.size


def nearest_rank_percentile(samples, fraction: float) -> float:
    """Nearest-rank percentile: the ceil(fraction*n)-th smallest sample."""
    values = np.sort(np.asarray(samples, dtype=float))
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"percentile fraction must be in (0, 1], got {fraction}")
    if values.size == 0:
        raise ConfigError("cannot take a percentile of zero samples")
    rank = math.ceil(fraction * values.size)
    return float(values[rank - 1])


# ---------------------------------------------------------------------------
# The CDF experiment
# ---------------------------------------------------------------------------

@dataclass
class CdfResult:
    """Per-user and per-draw-minimum rate samples for one scheme.

    rates[M] is the sorted flat array of per-user rates over all kept draws;
    min_rates[M] holds one value per kept draw (the worst user of that draw).
    """

    scheme: str
    M_grid: list
    draws: int
    skipped: int
    rates: dict = field(default_factory=dict)
    min_rates: dict = field(default_factory=dict)
    outage: dict = field(default_factory=dict)
    rate_table: dict = field(default_factory=dict)

    def write_rate_csv(self, path, M) -> None:
        samples = self.rate_table[M]  # (kept draws, K, L)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["draw", "k", "l", "rate"])
            for d, k, l in np.ndindex(samples.shape):
                writer.writerow([d, k, l, repr(float(samples[d, k, l]))])

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scheme", "M", "outage_rate", "draws_used", "skipped"])
            for M in self.M_grid:
                writer.writerow(
                    [self.scheme, M, repr(float(self.outage[M])),
                     self.draws - self.skipped, self.skipped]
                )


def scheme_weights(scheme, fading, rho_r, tau, M, variant="mu"):
    """Weights for one network draw; M only matters without outer precoding."""
    if scheme == SCHEME_NO_LSFP:
        return no_lsfp(fading, rho_r, tau, M)
    if scheme == SCHEME_ZF_LSFP:
        return zf_lsfp(fading, rho_r, tau, variant=variant)
    raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def run_cdf_experiment(
    config: NetworkConfig,
    scheme: str,
    M_grid,
    network_draws: int,
    seed: int | None = None,
    variant: str = "mu",
    threads: int | None = None,
    outage_fraction: float = 0.05,
) -> CdfResult:
    """Rate distributions of one scheme across an antenna grid.

    Each draw places users afresh; rates come from the closed-form SINR, so
    a draw costs one weight construction per (scheme, M) and no small-scale
    simulation. Ill-conditioned zero-forcing draws are skipped and counted;
    more than SKIP_FRACTION_LIMIT of them aborts the run.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if network_draws < 1:
        raise ConfigError(f"need at least one network draw, got {network_draws}")
    M_grid = [int(M) for M in M_grid]
    base_seed = config.seed if seed is None else seed
    K, L = config.K, config.L

    table = np.empty((network_draws, len(M_grid), K, L))
    kept = np.zeros(network_draws, dtype=bool)

    def run_range(lo, hi):
        for d in range(lo, hi):
            rng = draw_rng(base_seed, d)
            positions = draw_user_positions(config, rng)
            fading = fading_from_positions(config, positions, rng)
            try:
                for i, M in enumerate(M_grid):
                    weights = scheme_weights(
                        scheme, fading, config.rho_r, config.tau, M, variant
                    )
                    sinr = finite_m_downlink_sinr(
                        fading, weights, config.rho_f, config.rho_r, config.tau, M
                    )
                    table[d, i] = rate_from_sinr(sinr)
            except SingularMatrix:
                continue
            kept[d] = True

    if threads and threads > 1:
        chunk = -(-network_draws // threads)
        bounds = [(i, min(i + chunk, network_draws)) for i in range(0, network_draws, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run_range(*b), bounds))
    else:
        run_range(0, network_draws)

    skipped = int(network_draws - kept.sum())
    if skipped > SKIP_FRACTION_LIMIT * network_draws:
        raise ExperimentAborted(
            f"{skipped} of {network_draws} draws had singular gain matrices"
        )

    result = CdfResult(
        scheme=scheme, M_grid=M_grid, draws=network_draws, skipped=skipped
    )
    for i, M in enumerate(M_grid):
        samples = table[kept, i]  # (kept draws, K, L)
        result.rate_table[M] = samples
        result.rates[M] = np.sort(samples.reshape(samples.shape[0], -1), axis=None)
        result.min_rates[M] = np.sort(samples.min(axis=(1, 2)))
        result.outage[M] = nearest_rank_percentile(result.rates[M], outage_fraction)
    return result
