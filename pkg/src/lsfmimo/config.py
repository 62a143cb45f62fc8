"""Configuration files for the command line tools.

One INI-style file holds a [network] section (dimensions, layout, pathloss),
a [powers] section (forward and reverse transmit powers), and an optional
[experiment] section (scheme, antenna grids, trial counts). Unknown keys are
rejected so typos fail loudly instead of silently using a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

from .errors import ConfigError
from .network import NetworkConfig

LAYOUT_HEX = "hex"
LAYOUT_RANDOM = "random"

_NETWORK_KEYS = {
    "cells", "users", "antennas", "pilot_length", "cell_radius",
    "pathloss_exponent", "shadow_sigma_db", "seed", "layout",
}
_POWER_KEYS = {"forward", "reverse"}
_EXPERIMENT_KEYS = {
    "scheme", "variant", "m_grid", "network_draws", "trials",
    "outage_fraction", "tones", "target_gain", "estimation_m_grid",
    "estimation_trials",
}


@dataclass
class ExperimentSettings:
    """Knobs for the batch studies, filled from the [experiment] section."""

    scheme: str = "zf-lsfp"
    variant: str = "mu"
    M_grid: tuple = (100, 1000, 10_000, 100_000)
    network_draws: int = 10_000
    trials: int = 20_000
    outage_fraction: float = 0.05
    tones: int = 8
    target_gain: float = 1.0
    estimation_M_grid: tuple = (1000, 10_000, 100_000)
    estimation_trials: int = 200


def parse_int_list(text: str) -> tuple[int, ...]:
    """Comma-separated positive integers, e.g. "100,1000,10000"."""
    try:
        values = tuple(int(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"expected positive integers, got {text!r}")
    return values


def _reject_unknown(section, known: set, name: str) -> None:
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")


def _require(section, key: str, name: str) -> str:
    if key not in section:
        raise ConfigError(f"missing key {key!r} in section [{name}]")
    return section[key]


def load_config(path) -> tuple[NetworkConfig, ExperimentSettings, str]:
    """Read a config file; returns (network, experiment settings, layout).

    layout is "hex" (users placed in the wrap-around hexagonal grid) or
    "random" (generic well-conditioned gain tensor, any cell count).
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    for required in ("network", "powers"):
        if required not in parser:
            raise ConfigError(f"config file {path} is missing the [{required}] section")

    network = parser["network"]
    powers = parser["powers"]
    _reject_unknown(network, _NETWORK_KEYS, "network")
    _reject_unknown(powers, _POWER_KEYS, "powers")

    layout = network.get("layout", LAYOUT_HEX).strip().lower()
    if layout not in (LAYOUT_HEX, LAYOUT_RANDOM):
        raise ConfigError(f"layout must be '{LAYOUT_HEX}' or '{LAYOUT_RANDOM}', got {layout!r}")

    try:
        net_config = NetworkConfig(
            L=int(_require(network, "cells", "network")),
            K=int(_require(network, "users", "network")),
            M=int(_require(network, "antennas", "network")),
            tau=int(_require(network, "pilot_length", "network")),
            rho_f=float(_require(powers, "forward", "powers")),
            rho_r=float(_require(powers, "reverse", "powers")),
            cell_radius=float(network.get("cell_radius", 1000.0)),
            pathloss_exponent=float(network.get("pathloss_exponent", 3.8)),
            shadow_sigma_db=float(network.get("shadow_sigma_db", 8.0)),
            seed=int(network.get("seed", 0)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed numeric value in {path}: {exc}") from exc

    settings = ExperimentSettings()
    if "experiment" in parser:
        section = parser["experiment"]
        _reject_unknown(section, _EXPERIMENT_KEYS, "experiment")
        try:
            if "scheme" in section:
                settings.scheme = section["scheme"].strip()
            if "variant" in section:
                settings.variant = section["variant"].strip()
            if "m_grid" in section:
                settings.M_grid = parse_int_list(section["m_grid"])
            if "network_draws" in section:
                settings.network_draws = int(section["network_draws"])
            if "trials" in section:
                settings.trials = int(section["trials"])
            if "outage_fraction" in section:
                settings.outage_fraction = float(section["outage_fraction"])
            if "tones" in section:
                settings.tones = int(section["tones"])
            if "target_gain" in section:
                settings.target_gain = float(section["target_gain"])
            if "estimation_m_grid" in section:
                settings.estimation_M_grid = parse_int_list(section["estimation_m_grid"])
            if "estimation_trials" in section:
                settings.estimation_trials = int(section["estimation_trials"])
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed value in [experiment] of {path}: {exc}") from exc

    return net_config, settings, layout
