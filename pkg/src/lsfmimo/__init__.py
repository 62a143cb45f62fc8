"""Multi-cell massive MIMO simulator with large-scale fading precoding and decoding."""

from .analytic import (
    SinrReport,
    asymptotic_downlink_sinr,
    asymptotic_uplink_sinr,
    build_sinr_report,
    finite_m_downlink_sinr,
    finite_m_uplink_sinr,
    rate_from_sinr,
)
from .errors import ConfigError, DegenerateWeights, DimensionError, SingularMatrix
from .network import (
    LargeScaleFading,
    NetworkConfig,
    generate_network,
    random_fading,
    symmetric_fading,
)
from .precoding import LsfMatrices, no_lsfp, zf_lsfd, zf_lsfp

__version__ = "0.1.0"
