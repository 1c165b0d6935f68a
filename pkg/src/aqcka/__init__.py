"""Asynchronous measurement-device-independent conference key agreement.

Rate engine, protocol simulator, and parameter optimiser for an N-user
QKD scheme in which phase-randomised coherent pulses interfere pairwise
at an untrusted polygon relay and key events are paired asynchronously
from lone detector clicks. Expected counts are exact marginals of the
threshold-detector statistics, never sampled; a Monte Carlo pairing
sweep and a small Fock-space oracle exist to cross-check them.
"""

from .model import (
    ChannelModel,
    ConfigError,
    ProtocolConfig,
    SecurityParams,
    SourceConfig,
    TimingConfig,
    dump_config,
    load_config,
    transmittance,
)
from .stats import BoundPair, DomainError, EpsilonLedger, binary_entropy
from .optics import YieldTable, pattern_yields, single_photon_yields
from .pairing import (
    ClickEvent,
    MonteCarloResult,
    PairingEvent,
    analytic_pair_count,
    monte_carlo_pair_count,
    pair_stream,
)
from .sift import InvalidEventError, SiftedTallies, expected_counts
from .decoy import DecoyEstimates, asymptotic_estimates, finite_bounds_3user
from .keyrate import (
    KeyRateResult,
    evaluate_point,
    plob_star_bound,
    scan_distance,
    security_budget,
    write_scan_csv,
)
from .mermin import MerminEstimate, expected_signed_counts, mermin_inequality, mermin_lower_bound
from .optimize import ParamVector, optimize_point

__version__ = "0.1.0"

__all__ = [
    "BoundPair",
    "ChannelModel",
    "ClickEvent",
    "ConfigError",
    "DecoyEstimates",
    "DomainError",
    "EpsilonLedger",
    "InvalidEventError",
    "KeyRateResult",
    "MerminEstimate",
    "MonteCarloResult",
    "PairingEvent",
    "ParamVector",
    "ProtocolConfig",
    "SecurityParams",
    "SiftedTallies",
    "SourceConfig",
    "TimingConfig",
    "YieldTable",
    "analytic_pair_count",
    "asymptotic_estimates",
    "binary_entropy",
    "dump_config",
    "evaluate_point",
    "expected_counts",
    "expected_signed_counts",
    "finite_bounds_3user",
    "load_config",
    "mermin_inequality",
    "mermin_lower_bound",
    "monte_carlo_pair_count",
    "optimize_point",
    "pair_stream",
    "pattern_yields",
    "plob_star_bound",
    "scan_distance",
    "security_budget",
    "single_photon_yields",
    "transmittance",
    "write_scan_csv",
    "__version__",
]
