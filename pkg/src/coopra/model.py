"""Domain types shared by the analysis, simulation and optimization layers.

All types are frozen dataclasses validated on construction.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass


class OutOfRange(ValueError):
    """A field violates its documented range."""

    def __init__(self, field: str, value, constraint: str):
        self.field = field
        self.value = value
        self.constraint = constraint
        super().__init__(f"{field}={value!r} violates {constraint}")


def _check_open_unit(field: str, value: float) -> float:
    value = float(value)
    if not (0.0 < value < 1.0):
        raise OutOfRange(field, value, "0 < x < 1")
    return value


def _check_closed_unit(field: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise OutOfRange(field, value, "0 <= x <= 1")
    return value


def _check_rate(field: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value < 1.0):
        raise OutOfRange(field, value, "0 <= x < 1")
    return value


@dataclass(frozen=True)
class ChannelProfile:
    """Link-success probabilities: PU->destination, SU->destination, PU->SU."""

    f_pd: float = 0.3
    f_sd: float = 0.8
    f_ps: float = 0.4

    def __post_init__(self):
        for name in ("f_pd", "f_sd", "f_ps"):
            object.__setattr__(self, name, _check_open_unit(name, getattr(self, name)))

    @classmethod
    def degenerate(cls, f_pd: float, f_sd: float, f_ps: float) -> ChannelProfile:
        """Build a profile that admits the boundary values 0 and 1.

        Only the simulator accepts such profiles; the closed forms divide by
        quantities that vanish at the boundary.
        """
        obj = object.__new__(cls)
        object.__setattr__(obj, "f_pd", _check_closed_unit("f_pd", f_pd))
        object.__setattr__(obj, "f_sd", _check_closed_unit("f_sd", f_sd))
        object.__setattr__(obj, "f_ps", _check_closed_unit("f_ps", f_ps))
        return obj

    @property
    def relay_gain(self) -> float:
        """Probability that only the SU decodes a PU transmission."""
        return self.f_ps * (1.0 - self.f_pd)


@dataclass(frozen=True)
class ArrivalRates:
    lambda_p: float = 0.0
    lambda_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lambda_p", _check_rate("lambda_p", self.lambda_p))
        object.__setattr__(self, "lambda_s", _check_rate("lambda_s", self.lambda_s))


@dataclass(frozen=True)
class PolicyParam:
    """Probability that the SU picks its own queue in a PU-idle slot."""

    a: float

    def __post_init__(self):
        object.__setattr__(self, "a", _check_open_unit("a", self.a))

    def __float__(self) -> float:
        return self.a


@dataclass(frozen=True)
class OperatingPoint:
    channel: ChannelProfile
    rates: ArrivalRates
    a: PolicyParam

    def __post_init__(self):
        if not isinstance(self.channel, ChannelProfile):
            raise OutOfRange("channel", self.channel, "ChannelProfile instance")
        if not isinstance(self.rates, ArrivalRates):
            raise OutOfRange("rates", self.rates, "ArrivalRates instance")
        if not isinstance(self.a, PolicyParam):
            object.__setattr__(self, "a", PolicyParam(self.a))

    @classmethod
    def make(cls, f_pd, f_sd, f_ps, lambda_p, lambda_s, a) -> OperatingPoint:
        return cls(ChannelProfile(f_pd, f_sd, f_ps), ArrivalRates(lambda_p, lambda_s), PolicyParam(a))


def validate_point(p: OperatingPoint) -> OperatingPoint:
    """Re-check every invariant of ``p`` and return it unchanged.

    Raises OutOfRange naming the first violated field. Useful for points
    assembled by hand (e.g. via ``object.__new__`` or degenerate channels).
    """
    ch = p.channel
    for name in ("f_pd", "f_sd", "f_ps"):
        _check_open_unit(name, getattr(ch, name))
    _check_rate("lambda_p", p.rates.lambda_p)
    _check_rate("lambda_s", p.rates.lambda_s)
    _check_open_unit("a", float(p.a))
    return p


@dataclass(frozen=True)
class QueueTriple:
    q_p: int = 0
    q_sp: int = 0
    q_s: int = 0

    def __post_init__(self):
        for name in ("q_p", "q_sp", "q_s"):
            v = getattr(self, name)
            if isinstance(v, float):
                if not v.is_integer():
                    raise OutOfRange(name, v, "integer count")
                v = int(v)
            if not isinstance(v, int) or v < 0:
                raise OutOfRange(name, v, "nonnegative integer")
            if v > _MAX_COUNT:
                raise OverflowError(f"{name}={v} exceeds the queue count limit")
            object.__setattr__(self, name, v)


# Simulator stores counts and slot stamps in int64.
_MAX_COUNT = 2**62


class Transmitter(enum.Enum):
    PU = "pu"
    SU_OWN = "su_own"
    SU_RELAY = "su_relay"
    IDLE = "idle"
    WASTED = "wasted"


class Departure(enum.Enum):
    NONE = "none"
    PU_DIRECT = "pu_direct"
    PU_TO_RELAY = "pu_to_relay"
    RELAY_TO_DEST = "relay_to_dest"
    SU_TO_DEST = "su_to_dest"


@dataclass(frozen=True)
class SlotOutcome:
    transmitter: Transmitter
    pu_arrival: bool
    su_arrival: bool
    departure: Departure
