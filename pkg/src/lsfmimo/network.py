"""Cell layout, user placement, and large-scale fading generation.

The network is a wrap-around layout of 1, 7, or 19 hexagonal cells. Cells are
pointy-top hexagons of circumradius ``cell_radius`` centered on a triangular
lattice, and distances are measured modulo the layout's translation group so
every cell sees the same interference geometry (no edge effects).

Large-scale gains follow a log-distance pathloss law with log-normal
shadowing:

    beta = (d / d0) ** (-pathloss_exponent) * 10 ** (X / 10)

with d0 = cell_radius and X ~ Normal(0, shadow_sigma_db**2). Users are placed
uniformly in their hexagon, excluding a disc of radius 0.1 * cell_radius
around the serving base station so gains stay bounded.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Axial coordinates of the super-lattice generator for each supported layout.
# Translating the cell cluster by the six 60-degree rotations of this vector
# tiles the plane, which is what makes wrap-around distances well defined.
_WRAP_GENERATOR = {1: (1, 0), 7: (2, 1), 19: (3, 2)}

MIN_USER_DISTANCE_FACTOR = 0.1


@dataclass(frozen=True)
class NetworkConfig:
    """Static parameters of one simulated network."""

    L: int
    K: int
    M: int
    tau: int
    rho_f: float
    rho_r: float
    cell_radius: float = 1000.0
    pathloss_exponent: float = 3.8
    shadow_sigma_db: float = 8.0
    seed: int = 0

    def __post_init__(self):
        for name in ("L", "K", "M", "tau"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.K > self.tau:
            raise ConfigError(
                f"pilot length tau={self.tau} must be at least K={self.K}"
            )
        if self.rho_f < 0 or self.rho_r < 0:
            raise ConfigError("transmit powers must be nonnegative")
        if self.cell_radius <= 0:
            raise ConfigError("cell_radius must be positive")
        if self.shadow_sigma_db < 0:
            raise ConfigError("shadow_sigma_db must be nonnegative")


class LargeScaleFading:
    """Large-scale gain tensor, indexed [j][k][l].

    Entry (j, k, l) is the power gain between base station j and the user with
    pilot index k living in cell l.
    """

    def __init__(self, beta: np.ndarray):
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 3 or beta.shape[0] != beta.shape[2]:
            raise ConfigError(f"fading tensor must have shape (L, K, L), got {beta.shape}")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise ConfigError("fading entries must be strictly positive and finite")
        self.beta = beta

    @property
    def L(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[1]

    def to_csv(self, path) -> None:
        """Write the tensor as flat rows `j,k,l,beta`."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "k", "l", "beta"])
            for j in range(self.L):
                for k in range(self.K):
                    for l in range(self.L):
                        writer.writerow([j, k, l, repr(float(self.beta[j, k, l]))])

    @classmethod
    def from_csv(cls, path) -> "LargeScaleFading":
        entries = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                entries[(int(row["j"]), int(row["k"]), int(row["l"]))] = float(row["beta"])
        if not entries:
            raise ConfigError(f"no fading entries found in {path}")
        L = max(j for j, _, _ in entries) + 1
        K = max(k for _, k, _ in entries) + 1
        beta = np.zeros((L, K, L))
        if len(entries) != L * K * L:
            raise ConfigError(f"expected {L * K * L} entries in {path}, found {len(entries)}")
        for (j, k, l), value in entries.items():
            beta[j, k, l] = value
        return cls(beta)


# ---------------------------------------------------------------------------
# Hexagonal geometry
# ---------------------------------------------------------------------------

def _axial_to_xy(a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    """Map axial lattice coordinates to cartesian cell-center positions."""
    spacing = math.sqrt(3.0) * radius
    x = spacing * (a + 0.5 * b)
    y = spacing * (math.sqrt(3.0) / 2.0) * b
    return np.stack([x, y], axis=-1)


def cell_centers(L: int, radius: float) -> np.ndarray:
    """Cartesian centers of the L cells, shape (L, 2). Cell 0 is the origin."""
    if L not in _WRAP_GENERATOR:
        raise ConfigError(f"unsupported cell count {L}; wrap-around layouts exist for 1, 7, 19")
    coords = [(0, 0)]
    if L >= 7:
        coords += [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
    if L == 19:
        ring2 = []
        for a in range(-2, 3):
            for b in range(-2, 3):
                if max(abs(a), abs(b), abs(a + b)) == 2:
                    ring2.append((a, b))
        coords += sorted(ring2)
    a = np.array([c[0] for c in coords], dtype=float)
    b = np.array([c[1] for c in coords], dtype=float)
    return _axial_to_xy(a, b, radius)


def wrap_displacements(L: int, radius: float) -> np.ndarray:
    """The zero vector plus the six lattice translations that wrap the layout."""
    if L not in _WRAP_GENERATOR:
        raise ConfigError(f"unsupported cell count {L}; wrap-around layouts exist for 1, 7, 19")
    a0, b0 = _WRAP_GENERATOR[L]
    vecs = [(0, 0)]
    a, b = a0, b0
    for _ in range(6):
        vecs.append((a, b))
        # 60-degree rotation in axial coordinates
        a, b = -b, a + b
    arr = np.array(vecs, dtype=float)
    return _axial_to_xy(arr[:, 0], arr[:, 1], radius)


def wrap_distances(points: np.ndarray, centers: np.ndarray, L: int, radius: float) -> np.ndarray:
    """Wrap-around distances from each point to each center.

    points: (..., 2); centers: (L, 2). Returns (..., L).
    """
    shifts = wrap_displacements(L, radius)  # (7, 2)
    # images of every center under the wrap translations: (7, L, 2)
    images = centers[None, :, :] + shifts[:, None, :]
    diff = points[..., None, None, :] - images  # (..., 7, L, 2)
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return dist.min(axis=-2)


def _in_hexagon(xy: np.ndarray, radius: float) -> np.ndarray:
    """Membership test for a pointy-top hexagon of circumradius `radius` at the origin."""
    x = np.abs(xy[..., 0])
    y = np.abs(xy[..., 1])
    return (x <= math.sqrt(3.0) / 2.0 * radius) & (x / math.sqrt(3.0) + y <= radius)


def draw_user_positions(config: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample user positions uniformly in each hexagon, shape (K, L, 2).

    Rejection sampling from the bounding box, discarding points inside the
    exclusion disc around the serving base station.
    """
    centers = cell_centers(config.L, config.cell_radius)
    R = config.cell_radius
    exclusion = MIN_USER_DISTANCE_FACTOR * R
    positions = np.empty((config.K, config.L, 2))
    for l in range(config.L):
        filled = 0
        while filled < config.K:
            need = config.K - filled
            # Acceptance rate is about 0.74, so oversample mildly.
            cand = rng.uniform(-1.0, 1.0, size=(2 * need + 8, 2))
            cand[:, 0] *= math.sqrt(3.0) / 2.0 * R
            cand[:, 1] *= R
            radius_ok = np.sqrt(np.sum(cand * cand, axis=1)) >= exclusion
            keep = cand[_in_hexagon(cand, R) & radius_ok]
            take = min(need, keep.shape[0])
            positions[filled : filled + take, l] = centers[l] + keep[:take]
            filled += take
    return positions


# ---------------------------------------------------------------------------
# Gain construction
# ---------------------------------------------------------------------------

def pathloss_gain(distance, config: NetworkConfig):
    """Deterministic pathloss component (d/d0)^(-gamma) with d0 = cell_radius."""
    return np.asarray(distance / config.cell_radius) ** (-config.pathloss_exponent)


def fading_from_positions(
    config: NetworkConfig,
    positions: np.ndarray,
    rng: np.random.Generator | None = None,
) -> LargeScaleFading:
    """Build the gain tensor for explicit user positions, shape (K, L, 2).

    Shadowing is drawn from `rng` unless shadow_sigma_db is zero; passing
    positions directly is how tests pin users at exact distances.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (config.K, config.L, 2):
        raise ConfigError(
            f"positions must have shape ({config.K}, {config.L}, 2), got {positions.shape}"
        )
    centers = cell_centers(config.L, config.cell_radius)
    dist = wrap_distances(positions, centers, config.L, config.cell_radius)  # (K, L, L->j)
    # reorder to [j][k][l]
    dist = np.transpose(dist, (2, 0, 1))
    gain = pathloss_gain(dist, config)
    if config.shadow_sigma_db > 0:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        shadow_db = rng.normal(0.0, config.shadow_sigma_db, size=gain.shape)
        gain = gain * 10.0 ** (shadow_db / 10.0)
    return LargeScaleFading(gain)


def generate_network(config: NetworkConfig) -> LargeScaleFading:
    """Place users and return the (L, K, L) gain tensor, deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    positions = draw_user_positions(config, rng)
    return fading_from_positions(config, positions, rng)


def symmetric_fading(L: int, K: int, b: float) -> LargeScaleFading:
    """Constant tensor with every gain equal to b (fixture for symmetry cases)."""
    if b <= 0:
        raise ConfigError(f"symmetric gain must be positive, got {b}")
    return LargeScaleFading(np.full((L, K, L), float(b)))


def random_fading(
    L: int,
    K: int,
    seed: int,
    own_range: tuple[float, float] = (0.5, 2.0),
    cross_range: tuple[float, float] = (0.02, 0.5),
) -> LargeScaleFading:
    """Random well-conditioned tensor: strong own-cell gains, weak cross gains.

    Own-cell gains are uniform in own_range; cross gains are log-uniform in
    cross_range. Useful as a generic test instance that stays far from the
    singular symmetric case.
    """
    rng = np.random.default_rng(seed)
    lo, hi = cross_range
    beta = np.exp(rng.uniform(math.log(lo), math.log(hi), size=(L, K, L)))
    for j in range(L):
        beta[j, :, j] = rng.uniform(own_range[0], own_range[1], size=K)
    return LargeScaleFading(beta)
