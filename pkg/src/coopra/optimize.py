"""Delay-optimal choice of ``a`` and throughput-delay sweeps."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from .model import ArrivalRates, ChannelProfile, OperatingPoint, OutOfRange, PolicyParam
from .sim import NoDeliveries, Policy, PolicyKind, SimConfig, run

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Infeasible(ValueError):
    """No value of ``a`` stabilizes the requested arrival rates."""


class UnimodalityCheckFailed(RuntimeWarning):
    """The weighted objective is not unimodal on the scan grid; grid argmin used."""


class ObjectiveKind(enum.Enum):
    MIN_PRIMARY_DELAY = "min_primary_delay"
    MIN_SECONDARY_DELAY = "min_secondary_delay"
    WEIGHTED_SUM = "weighted_sum"


@dataclass(frozen=True)
class Objective:
    kind: ObjectiveKind
    w_p: float = 1.0
    w_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectiveKind(self.kind))
        if self.kind is ObjectiveKind.WEIGHTED_SUM:
            if self.w_p < 0 or self.w_s < 0 or (self.w_p == 0 and self.w_s == 0):
                raise OutOfRange("weights", (self.w_p, self.w_s), "nonnegative, not both zero")

    @classmethod
    def min_primary(cls) -> Objective:
        return cls(ObjectiveKind.MIN_PRIMARY_DELAY)

    @classmethod
    def min_secondary(cls) -> Objective:
        return cls(ObjectiveKind.MIN_SECONDARY_DELAY, 0.0, 1.0)

    @classmethod
    def weighted(cls, w_p: float, w_s: float) -> Objective:
        return cls(ObjectiveKind.WEIGHTED_SUM, w_p, w_s)

    def value(self, rep: an.DelayReport) -> float:
        if self.kind is ObjectiveKind.MIN_PRIMARY_DELAY:
            return rep.d_p
        if self.kind is ObjectiveKind.MIN_SECONDARY_DELAY:
            return rep.d_s
        total = 0.0
        if self.w_p:
            total += self.w_p * rep.d_p
        if self.w_s:
            total += self.w_s * rep.d_s
        return total


@dataclass(frozen=True)
class OptimizationRequest:
    channel: ChannelProfile
    rates: ArrivalRates
    objective: Objective = field(default_factory=Objective.min_primary)
    margin: float = 1e-6


@dataclass(frozen=True)
class OptimalA:
    a: float
    report: an.DelayReport
    objective_value: float
    # objective approached at the open endpoint, not attained; equals
    # objective_value for interior optima
    infimum: float
    interval: an.AInterval
    unimodal: bool = True


def _report(c, r, a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", an.ConditionWarning)
        return an.delay_report(OperatingPoint(c, r, PolicyParam(a)), margin=0.0)


def golden_section_min(f, lo: float, hi: float, tol: float = 1e-8, max_iter: int = 200):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``.

    The bracket endpoints are compared against the final estimate, so
    monotone objectives return the better endpoint.
    """
    f_lo, f_hi = f(lo), f(hi)
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        it += 1
    x, fx = (x1, f1) if f1 <= f2 else (x2, f2)
    if f_lo <= fx and f_lo <= f_hi:
        return lo, f_lo
    if f_hi < fx:
        return hi, f_hi
    return x, fx


def _is_unimodal(values: np.ndarray, rtol: float = 1e-12) -> bool:
    diffs = np.diff(values)
    scale = np.maximum(np.abs(values[1:]), np.abs(values[:-1])) * rtol
    signs = np.where(diffs > scale, 1, np.where(diffs < -scale, -1, 0))
    signs = signs[signs != 0]
    # at most one sign change, and only from decreasing to increasing
    return not np.any(np.diff(signs) < 0) and np.count_nonzero(np.diff(signs)) <= 1


def optimal_a(req: OptimizationRequest) -> OptimalA:
    c, r, obj, delta = req.channel, req.rates, req.objective, req.margin
    try:
        interval = an.feasible_a_interval(c, r)
    except an.PrimaryOverloaded as exc:
        raise Infeasible(str(exc)) from exc
    if interval.empty:
        raise Infeasible(f"empty feasible interval ({interval.lower:.9g}, {interval.upper:.9g})")
    if not 0.0 < delta < interval.width / 2:
        raise OutOfRange("margin", delta, f"0 < margin < {interval.width / 2:.3g}")
    lo, hi = interval.lower + delta, interval.upper - delta

    if obj.kind is ObjectiveKind.MIN_PRIMARY_DELAY:
        rep = _report(c, r, lo)
        inf = an.primary_delay(c, interval.lower, r.lambda_p) if r.lambda_p > 0 else rep.d_p
        return OptimalA(lo, rep, rep.d_p, inf, interval)
    if obj.kind is ObjectiveKind.MIN_SECONDARY_DELAY:
        rep = _report(c, r, hi)
        inf = an.secondary_delay(c, interval.upper, r) if interval.upper < 1.0 else rep.d_s
        return OptimalA(hi, rep, rep.d_s, inf, interval)

    def f(a):
        return obj.value(_report(c, r, a))

    grid = np.linspace(lo, hi, 64)
    values = np.array([f(a) for a in grid])
    if _is_unimodal(values):
        a_star, val = golden_section_min(f, lo, hi)
        unimodal = True
    else:
        i = int(np.argmin(values))
        a_star, val = float(grid[i]), float(values[i])
        unimodal = False
        warnings.warn(f"weighted objective not unimodal on [{lo:.6g}, {hi:.6g}]", UnimodalityCheckFailed, stacklevel=2)
    return OptimalA(a_star, _report(c, r, a_star), val, val, interval, unimodal)


class SweepAxis(enum.Enum):
    LAMBDA_P = "lambda_p"
    LAMBDA_S = "lambda_s"
    LAMBDA_JOINT = "lambda_joint"


@dataclass(frozen=True)
class SweepSpec:
    channel: ChannelProfile
    axis: SweepAxis
    grid: tuple
    fixed_rate: float = 0.0
    policies: tuple = (PolicyKind.RANDOMIZED,)
    objective: Objective = field(default_factory=Objective.min_primary)
    margin: float = 1e-6
    horizon: int = 1_000_000
    warmup: int | None = None
    replications: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", SweepAxis(self.axis))
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        object.__setattr__(self, "policies", tuple(PolicyKind(p) for p in self.policies))
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise OutOfRange("grid", self.grid, "strictly increasing")

    def rates_at(self, x: float) -> ArrivalRates:
        if self.axis is SweepAxis.LAMBDA_P:
            return ArrivalRates(x, self.fixed_rate)
        if self.axis is SweepAxis.LAMBDA_S:
            return ArrivalRates(self.fixed_rate, x)
        return ArrivalRates(x, x)


@dataclass(frozen=True)
class PolicyCell:
    """Delay figures of one policy at one grid point."""

    status: str  # ok | infeasible | error
    d_p: float = math.nan
    d_s: float = math.nan
    d_p_ci: float = math.nan
    d_s_ci: float = math.nan
    a: float = math.nan
    detail: str = ""


@dataclass(frozen=True)
class SweepRow:
    index: int
    x: float
    rates: ArrivalRates
    cells: dict


def point_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit seed for grid point ``index``; shared by all baselines there."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


def baseline_stable(kind: PolicyKind, c: ChannelProfile, r: ArrivalRates) -> bool:
    """Stability of the baseline policies.

    Strict relay priority is work-conserving and attains the union region;
    without cooperation Q_p is served at ``f_pd`` only.
    """
    if kind is PolicyKind.PRIORITY_RELAY:
        return r.lambda_p < an.union_intercept(c) and r.lambda_s < an.union_boundary(c, r.lambda_p)
    if kind is PolicyKind.NO_COOPERATION:
        return r.lambda_p < c.f_pd and r.lambda_s < an.no_cooperation_boundary(c, r.lambda_p)
    raise ValueError(kind)


def _randomized_cell(spec: SweepSpec, r: ArrivalRates) -> PolicyCell:
    try:
        opt = optimal_a(OptimizationRequest(spec.channel, r, spec.objective, spec.margin))
    except Infeasible as exc:
        return PolicyCell("infeasible", detail=str(exc))
    except (ValueError, ZeroDivisionError) as exc:
        return PolicyCell("error", detail=str(exc))
    return PolicyCell("ok", opt.report.d_p, opt.report.d_s, 0.0, 0.0, opt.a)


def _baseline_cell(spec: SweepSpec, kind: PolicyKind, r: ArrivalRates, index: int, workers: int) -> PolicyCell:
    if not baseline_stable(kind, spec.channel, r):
        return PolicyCell("infeasible", detail="outside the baseline stability region")
    cfg = SimConfig(spec.channel, r, Policy(kind), spec.horizon, spec.warmup,
                    point_seed(spec.seed, index), spec.replications)
    try:
        res = run(cfg, workers=workers)
    except NoDeliveries as exc:
        return PolicyCell("error", detail=str(exc))
    return PolicyCell("ok", res.d_p_hat, res.d_s_hat, res.ci("d_p_hat"), res.ci("d_s_hat"))


def tradeoff_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Evaluate every policy at every grid point; rows follow the grid order.

    Randomized uses the closed forms at the optimized ``a``; the baselines
    are simulated with a seed derived from the grid index.
    """
    rows = []
    for i, x in enumerate(spec.grid):
        try:
            r = spec.rates_at(x)
        except OutOfRange as exc:
            rows.append(SweepRow(i, x, None, {k: PolicyCell("error", detail=str(exc)) for k in spec.policies}))
            continue
        cells = {}
        for kind in spec.policies:
            if kind is PolicyKind.RANDOMIZED:
                cells[kind] = _randomized_cell(spec, r)
            else:
                cells[kind] = _baseline_cell(spec, kind, r, i, workers)
        rows.append(SweepRow(i, x, r, cells))
    return rows
