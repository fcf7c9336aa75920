"""Randomized cooperative access for a two-user cognitive radio link.

Closed-form stability and delay analysis, a seeded slot-level simulator,
and delay-optimal tuning of the SU service probability ``a``.
"""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    ArrivalRates,
    ChannelProfile,
    OperatingPoint,
    OutOfRange,
    PolicyParam,
    QueueTriple,
    validate_point,
)
from .analysis import delay_report, feasible_a_interval, is_stable  # noqa: E402
from .sim import Policy, SimConfig, run  # noqa: E402
from .optimize import Objective, OptimizationRequest, optimal_a  # noqa: E402
