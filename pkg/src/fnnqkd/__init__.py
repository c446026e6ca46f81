"""Simulation and security analysis of four-party star-network QKD.

Two protocols share a hub that holds one qubit from each of three sources:
one certifies its links with a trilocal full-network-nonlocality witness,
the other with a Bell-CHSH test on every link.
"""

from .exceptions import (
    ConfigError,
    DimensionMismatch,
    FnnQkdError,
    IdenticalFlagMismatch,
    InfeasibleProblem,
    InsufficientStatistics,
    LengthMismatch,
    NotPositive,
    VerificationFailure,
)
from .measurement import GhzBasis, MubCollection, QubitBasis, trilocal_statistics
from .oracle import OptProblem, grid_maximize, verify_thresholds
from .protocol import ProtocolConfig, RunResult, Variant, load_config, run
from .qber import MubAssignment, qber_exact, qber_min_over_mubs
from .qstate import SingularTriple, TwoQubitState, from_bloch, parse_state, to_bloch, werner
from .security import (
    Classification,
    Protocol,
    SecurityReport,
    ThresholdKind,
    classify,
    compare_protocols,
    security_report,
    threshold,
)
from .trilocal import CLASSICAL_BOUND, analytic_bound, optimize_trilocal, trilocal_value

__version__ = "0.1.0"

__all__ = [
    "CLASSICAL_BOUND",
    "Classification",
    "ConfigError",
    "DimensionMismatch",
    "FnnQkdError",
    "GhzBasis",
    "IdenticalFlagMismatch",
    "InfeasibleProblem",
    "InsufficientStatistics",
    "LengthMismatch",
    "MubAssignment",
    "MubCollection",
    "NotPositive",
    "OptProblem",
    "Protocol",
    "ProtocolConfig",
    "QubitBasis",
    "RunResult",
    "SecurityReport",
    "SingularTriple",
    "ThresholdKind",
    "TwoQubitState",
    "Variant",
    "VerificationFailure",
    "analytic_bound",
    "classify",
    "compare_protocols",
    "from_bloch",
    "grid_maximize",
    "load_config",
    "optimize_trilocal",
    "parse_state",
    "qber_exact",
    "qber_min_over_mubs",
    "run",
    "security_report",
    "threshold",
    "to_bloch",
    "trilocal_statistics",
    "trilocal_value",
    "verify_thresholds",
    "werner",
]
