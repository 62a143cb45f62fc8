"""Self-check suite comparing the simulation against every closed form.

Each check produces a named value with its acceptance limit, so callers can
render a table and count failures. The checks pair the Monte-Carlo oracle
with the analytic module at one operating point: term variances within four
standard errors, vanishing cross-covariances, exact decomposition, and the
zero-forcing algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import downlink_components
from .errors import ConfigError
from .network import LargeScaleFading, NetworkConfig, generate_network, random_fading
from .oracle import (
    collect_downlink_trials,
    collect_uplink_trials,
    downlink_term_variances,
    empirical_term_stats,
    uplink_term_variances,
)
from .precoding import absorbed_weights, build_B_mu, build_BD, build_BU, zf_lsfd, zf_lsfp

HEX_LAYOUT_SIZES = (1, 7, 19)


@dataclass
class CheckResult:
    """One named check: observed value against its limit (smaller is better)."""

    name: str
    value: float
    limit: float

    @property
    def passed(self) -> bool:
        return self.value < self.limit

    def row(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{self.name:<38} {self.value:>12.4g} {self.limit:>10.3g} {status}"


def fading_for(config: NetworkConfig, layout: str = "random") -> LargeScaleFading:
    """Gain tensor for a config: placed users (hex) or a generic random tensor."""
    if layout == "hex":
        if config.L not in HEX_LAYOUT_SIZES:
            raise ConfigError(
                f"hex layout needs a cell count in {HEX_LAYOUT_SIZES}, got {config.L}"
            )
        return generate_network(config)
    if layout == "random":
        return random_fading(config.L, config.K, config.seed)
    raise ConfigError(f"unknown layout {layout!r}")


def _moment_checks(prefix, stats, closed, results):
    for i in range(1, 6):
        z = np.max(
            np.abs(stats.variances[i] - closed[i]) / stats.variances_se[i]
        )
        results.append(CheckResult(f"Var[{prefix}{i}] max |z|", float(z), 4.0))
    cov_z = np.max(np.abs(stats.covariances) / stats.covariances_se)
    results.append(CheckResult(f"{prefix}-term cov max |z|", float(cov_z), 4.0))


def oracle_checks(
    config: NetworkConfig,
    fading: LargeScaleFading,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> list[CheckResult]:
    """Monte-Carlo versus closed forms at one operating point."""
    results: list[CheckResult] = []
    weights = zf_lsfp(fading, config.rho_r, config.tau, variant="mu")
    lsfd = zf_lsfd(fading)

    down = collect_downlink_trials(
        fading, weights, config, seed, trials, threads=threads
    )
    results.append(
        CheckResult("downlink decomposition residual", down.max_decomposition_residual, 1e-10)
    )
    stats = empirical_term_stats(down)
    closed = downlink_term_variances(
        fading, weights, config.rho_f, config.rho_r, config.tau, config.M
    )
    _moment_checks("T", stats, closed, results)
    results.append(
        CheckResult("Var[T5] offset from 1", float(np.max(np.abs(stats.variances[5] - 1.0))), 0.03)
    )
    gain_err = np.max(
        np.abs(stats.mean_coeff.real - down.effective_gain) / down.effective_gain
    )
    results.append(CheckResult("E[T0] relative error", float(gain_err), 0.02))

    up = collect_uplink_trials(fading, lsfd, config, seed + 1, trials, threads=threads)
    results.append(
        CheckResult("uplink decomposition residual", up.max_decomposition_residual, 1e-10)
    )
    stats_up = empirical_term_stats(up)
    closed_up = uplink_term_variances(fading, lsfd, config.rho_r, config.tau, config.M)
    _moment_checks("Q", stats_up, closed_up, results)

    results.extend(zero_forcing_checks(config, fading))
    return results


def zero_forcing_checks(
    config: NetworkConfig, fading: LargeScaleFading
) -> list[CheckResult]:
    """Algebraic identities of the zero-forcing constructions."""
    results: list[CheckResult] = []
    rho_r, tau = config.rho_r, config.tau

    for variant, build in (("mu", build_B_mu), ("eta", build_BD)):
        weights = zf_lsfp(fading, rho_r, tau, variant=variant)
        worst = 0.0
        for k in range(fading.K):
            B = build(fading, rho_r, tau, k)
            target = np.sqrt(weights.rho_A) * np.eye(fading.L)
            err = np.linalg.norm(weights.phi[k] @ B - target) / np.linalg.norm(target)
            worst = max(worst, float(err))
        results.append(CheckResult(f"zf({variant}) inverse residual", worst, 1e-10))

    lsfd = zf_lsfd(fading)
    worst = 0.0
    for k in range(fading.K):
        err = np.linalg.norm(
            lsfd.omega[k] @ build_BU(fading, k) - np.eye(fading.L)
        ) / np.sqrt(fading.L)
        worst = max(worst, float(err))
    results.append(CheckResult("lsfd inverse residual", worst, 1e-10))

    weights = zf_lsfp(fading, rho_r, tau, variant="mu")
    phi = absorbed_weights(weights, fading, rho_r, tau, config.M)
    _, coherent, _ = downlink_components(fading, phi, config.rho_f, rho_r, tau, config.M)
    results.append(CheckResult("zf coherent interference", float(np.max(coherent)), 1e-20))
    return results


def render_table(results: list[CheckResult]) -> str:
    header = f"{'check':<38} {'value':>12} {'limit':>10} status"
    lines = [header, "-" * len(header)]
    lines.extend(result.row() for result in results)
    failures = [r for r in results if not r.passed]
    lines.append("")
    lines.append(f"checks={len(results)} failed={len(failures)}")
    for result in failures:
        lines.append(
            f"FAIL {result.name} value={result.value!r} limit={result.limit!r}"
        )
    return "\n".join(lines)
