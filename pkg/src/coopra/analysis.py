"""Closed-form stability and delay quantities for the randomized cooperative policy.

Conventions: ``c`` is a :class:`ChannelProfile`, ``a`` the probability that the
SU serves its own queue in a PU-idle slot (a float or :class:`PolicyParam`).
Queue lengths are sampled at slot starts; arrivals join after departures.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

from .model import ArrivalRates, ChannelProfile, OperatingPoint, PolicyParam, validate_point

STABILITY_MARGIN = 1e-9
CONDITION_SLACK = 1e-4


class PrimaryOverloaded(ValueError):
    """lambda_p is at or above a bound on the PU's own queue service."""


class RelayOverloaded(ValueError):
    """The relay queue Q_sp would be unstable."""


class Unstable(ValueError):
    """The operating point lies outside the stable throughput region."""


class ZeroRateFlow(ValueError):
    def __init__(self, flow: str):
        self.flow = flow
        super().__init__(f"delay of the {flow} flow is undefined at zero arrival rate")


class ConditionWarning(RuntimeWarning):
    """Evaluated close to a stability bound; closed forms are ill-conditioned."""


def _a(a) -> float:
    return float(a.a if isinstance(a, PolicyParam) else a)


def primary_service_rate(c: ChannelProfile) -> float:
    """Probability that a PU transmission is decoded by the destination or the SU."""
    return c.f_pd + c.f_ps * (1.0 - c.f_pd)


def primary_rate_bound(c: ChannelProfile, a) -> float:
    """Largest lambda_p keeping the relay queue stable at this ``a``."""
    a = _a(a)
    served = c.f_sd * (1.0 - a)
    return served / (served + c.relay_gain) * primary_service_rate(c)


def secondary_rate_bound(c: ChannelProfile, a, lambda_p: float) -> float:
    """Service rate seen by the SU's own queue, i.e. the largest sustainable lambda_s."""
    mu = primary_service_rate(c)
    if lambda_p >= mu:
        raise PrimaryOverloaded(f"lambda_p={lambda_p} >= mu_p={mu}")
    return _a(a) * c.f_sd * (1.0 - lambda_p / mu)


@dataclass(frozen=True)
class AInterval:
    """Open interval of ``a`` values; empty when ``lower >= upper``."""

    lower: float
    upper: float

    @property
    def empty(self) -> bool:
        return not self.lower < self.upper

    @property
    def width(self) -> float:
        return max(0.0, self.upper - self.lower)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def __contains__(self, a) -> bool:
        a = _a(a)
        return self.lower < a < self.upper


def feasible_a_interval(c: ChannelProfile, r: ArrivalRates) -> AInterval:
    mu = primary_service_rate(c)
    lp, ls = r.lambda_p, r.lambda_s
    if lp >= mu:
        raise PrimaryOverloaded(f"lambda_p={lp} >= mu_p={mu}")
    spare = c.f_sd * (mu - lp)
    lower = ls * mu / spare
    upper = 1.0 - c.relay_gain * lp / spare
    return AInterval(max(lower, 0.0), min(upper, 1.0))


@dataclass(frozen=True)
class StabilityReport:
    mu_p: float
    lambda_p_max: float
    lambda_s_max: float
    stable: bool
    a_interval: AInterval
    primary_slack: float
    secondary_slack: float

    @property
    def slack(self) -> float:
        """Signed distance to the nearest bound (negative outside the region)."""
        return min(self.primary_slack, self.secondary_slack)


def is_stable(p: OperatingPoint, margin: float = STABILITY_MARGIN) -> StabilityReport:
    validate_point(p)
    c, r = p.channel, p.rates
    mu = primary_service_rate(c)
    lp_max = primary_rate_bound(c, p.a)
    try:
        ls_max = secondary_rate_bound(c, p.a, r.lambda_p)
        interval = feasible_a_interval(c, r)
    except PrimaryOverloaded:
        ls_max = 0.0
        interval = AInterval(1.0, 0.0)
    primary_slack = lp_max - r.lambda_p
    secondary_slack = ls_max - r.lambda_s
    stable = primary_slack > margin and secondary_slack > margin
    return StabilityReport(mu, lp_max, ls_max, stable, interval, primary_slack, secondary_slack)


def _segment_distance(px, py, x0, y0, x1, y1) -> float:
    dx, dy = x1 - x0, y1 - y0
    t = 0.0 if dx == dy == 0 else ((px - x0) * dx + (py - y0) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def region_boundary_distance(c: ChannelProfile, a, lambda_p: float, lambda_s: float) -> float:
    """Euclidean distance from a rate pair to the outer boundary of the region for ``a``.

    The boundary is the sloped SU edge up to the relay bound plus the
    vertical edge at the relay bound.
    """
    edge = primary_rate_bound(c, a)
    top0 = secondary_rate_bound(c, a, 0.0)
    top1 = secondary_rate_bound(c, a, edge)
    return min(
        _segment_distance(lambda_p, lambda_s, 0.0, top0, edge, top1),
        _segment_distance(lambda_p, lambda_s, edge, 0.0, edge, top1),
    )


def union_boundary(c: ChannelProfile, lambda_p: float) -> float:
    """Largest lambda_s achievable by some ``a`` at this lambda_p (clamped at 0)."""
    slope = (c.f_sd + c.relay_gain) / primary_service_rate(c)
    return max(0.0, c.f_sd - slope * lambda_p)


def union_intercept(c: ChannelProfile) -> float:
    """lambda_p at which the union boundary reaches lambda_s = 0."""
    return c.f_sd * primary_service_rate(c) / (c.f_sd + c.relay_gain)


def no_cooperation_boundary(c: ChannelProfile, lambda_p: float) -> float:
    """Largest lambda_s without relaying.

    Baseline model: the PU queue is served at ``f_pd`` and the SU uses every
    PU-idle slot for its own queue.
    """
    if lambda_p >= c.f_pd:
        raise PrimaryOverloaded(f"lambda_p={lambda_p} >= f_pd={c.f_pd}")
    return c.f_sd * (1.0 - lambda_p / c.f_pd)


def relay_capture_prob(c: ChannelProfile) -> float:
    """Fraction of PU packets that leave Q_p through the relay."""
    return c.relay_gain / primary_service_rate(c)


def avg_len_p(c: ChannelProfile, lambda_p: float) -> float:
    mu = primary_service_rate(c)
    if lambda_p >= mu:
        raise PrimaryOverloaded(f"lambda_p={lambda_p} >= mu_p={mu}")
    return (lambda_p - lambda_p**2) / (mu - lambda_p)


class RelayCoefficients(NamedTuple):
    m: float
    n: float
    alpha: float
    beta: float
    gamma: float

    def evaluate(self, lambda_p: float) -> float:
        num = self.m * lambda_p**2 + self.n * lambda_p
        den = self.alpha * lambda_p**2 + self.beta * lambda_p + self.gamma
        return num / den


def relay_coefficients(c: ChannelProfile, a) -> RelayCoefficients:
    a = _a(a)
    mu = primary_service_rate(c)
    g = c.relay_gain
    s = (1.0 - a) * c.f_sd
    m = g * ((s - c.f_pd) / mu - s - g)
    n = g * mu
    alpha = s + g
    beta = mu * (-2.0 * s - g)
    gamma = s * mu**2
    return RelayCoefficients(m, n, alpha, beta, gamma)


def _warn_if_tight(slack: float, what: str) -> None:
    if slack < CONDITION_SLACK:
        warnings.warn(f"{what} is within {slack:.3g} of its stability bound", ConditionWarning, stacklevel=3)


def avg_len_sp(c: ChannelProfile, a, lambda_p: float, margin: float = STABILITY_MARGIN) -> float:
    bound = primary_rate_bound(c, a)
    if not lambda_p < bound - margin:
        raise RelayOverloaded(f"lambda_p={lambda_p} >= relay bound {bound}")
    _warn_if_tight(bound - lambda_p, "lambda_p")
    return relay_coefficients(c, a).evaluate(lambda_p)


class SecondaryCoefficients(NamedTuple):
    A: float
    B: float
    C: float


def secondary_coefficients(c: ChannelProfile, a, r: ArrivalRates) -> SecondaryCoefficients:
    a = _a(a)
    mu = primary_service_rate(c)
    asd = a * c.f_sd
    return SecondaryCoefficients(
        A=asd * (mu - 1.0),
        B=mu - r.lambda_p,
        C=(r.lambda_s - asd) * mu + asd * r.lambda_p,
    )


def avg_len_s(c: ChannelProfile, a, r: ArrivalRates, margin: float = STABILITY_MARGIN) -> float:
    mu = primary_service_rate(c)
    lp, ls = r.lambda_p, r.lambda_s
    if lp >= mu:
        raise Unstable(f"lambda_p={lp} >= mu_p={mu}")
    bound = secondary_rate_bound(c, a, lp)
    if not ls < bound - margin:
        raise Unstable(f"lambda_s={ls} >= {bound}")
    _warn_if_tight(bound - ls, "lambda_s")
    A, B, C = secondary_coefficients(c, a, r)
    return (lp * ls * A + (ls**2 - ls) * B * (B + lp)) / (B * C)


def empty_prob(c: ChannelProfile, a, r: ArrivalRates) -> float:
    """Stationary probability that both Q_p and Q_s are empty."""
    mu = primary_service_rate(c)
    asd = _a(a) * c.f_sd
    return (asd * (mu - r.lambda_p) - r.lambda_s * mu) / (asd * mu)


def pu_idle_prob(c: ChannelProfile, lambda_p: float) -> float:
    """Stationary probability that Q_p is empty."""
    return 1.0 - lambda_p / primary_service_rate(c)


@dataclass(frozen=True)
class DelayReport:
    n_p: float
    n_sp: float
    n_s: float
    d_p: float
    d_s: float
    epsilon: float
    g00: float
    g01: float
    a: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def delay_report(p: OperatingPoint, margin: float = STABILITY_MARGIN) -> DelayReport:
    rep = is_stable(p, margin)
    if not rep.stable:
        raise Unstable(
            f"point outside the stable region (lambda_p_max={rep.lambda_p_max:.6g}, "
            f"lambda_s_max={rep.lambda_s_max:.6g})"
        )
    c, r = p.channel, p.rates
    if r.lambda_p <= 0.0:
        raise ZeroRateFlow("pu")
    if r.lambda_s <= 0.0:
        raise ZeroRateFlow("su")
    n_p = avg_len_p(c, r.lambda_p)
    n_sp = avg_len_sp(c, p.a, r.lambda_p, margin)
    n_s = avg_len_s(c, p.a, r, margin)
    return DelayReport(
        n_p=n_p,
        n_sp=n_sp,
        n_s=n_s,
        d_p=(n_p + n_sp) / r.lambda_p,
        d_s=n_s / r.lambda_s,
        epsilon=relay_capture_prob(c),
        g00=empty_prob(c, p.a, r),
        g01=pu_idle_prob(c, r.lambda_p),
        a=float(p.a),
    )


def primary_delay(c: ChannelProfile, a, lambda_p: float) -> float:
    """D_p alone; it depends on neither lambda_s nor the SU queue."""
    if lambda_p <= 0.0:
        raise ZeroRateFlow("pu")
    return (avg_len_p(c, lambda_p) + avg_len_sp(c, a, lambda_p)) / lambda_p


def secondary_delay(c: ChannelProfile, a, r: ArrivalRates) -> float:
    if r.lambda_s <= 0.0:
        raise ZeroRateFlow("su")
    return avg_len_s(c, a, r) / r.lambda_s


def is_finite_report(rep: DelayReport) -> bool:
    return all(math.isfinite(v) and v >= 0.0 for v in rep.as_dict().values())
