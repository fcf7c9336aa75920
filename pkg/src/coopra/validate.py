"""Analytic-versus-simulation validation battery used by ``coopra validate``."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from . import analysis as an
from .model import ArrivalRates, ChannelProfile, OperatingPoint, PolicyParam
from .sim import NoDeliveries, Policy, SimConfig, run

GRID_LAMBDAS = (0.05, 0.10, 0.15, 0.20)
GRID_AS = (0.45, 0.60, 0.75)
SPOT = (0.2, 0.15, 0.6)  # lambda_p, lambda_s, a
REL_TOL = 0.02
CI_MULT = 3.0
# below these a statistical check is reported inconclusive rather than failed
MIN_POST_SLOTS = 100_000
MAX_REL_CI = 0.05

MUTATIONS = ("beta-sign",)


@dataclass(frozen=True)
class Check:
    name: str
    status: str  # pass | fail | inconclusive
    expected: float = math.nan
    observed: float = math.nan
    tolerance: float = math.nan
    detail: str = ""


def compare(name: str, expected: float, observed: float, ci: float, post_slots: int) -> Check:
    """Statistical comparison with tolerance ``max(2% of expected, 3 CI)``."""
    tol = max(REL_TOL * abs(expected), CI_MULT * ci) if math.isfinite(ci) else REL_TOL * abs(expected)
    ok = abs(observed - expected) <= tol
    if post_slots < MIN_POST_SLOTS or not math.isfinite(ci) or ci > MAX_REL_CI * abs(expected):
        status = "inconclusive"
    else:
        status = "pass" if ok else "fail"
    return Check(name, status, expected, observed, tol)


def _analytic(c: ChannelProfile, r: ArrivalRates, a: float, mutation: str | None) -> an.DelayReport:
    rep = an.delay_report(OperatingPoint(c, r, PolicyParam(a)))
    if mutation == "beta-sign":
        coeffs = an.relay_coefficients(c, a)
        n_sp = coeffs._replace(beta=-coeffs.beta).evaluate(r.lambda_p)
        rep = an.DelayReport(**{**asdict(rep), "n_sp": n_sp, "d_p": (rep.n_p + n_sp) / r.lambda_p})
    elif mutation is not None:
        raise ValueError(f"unknown mutation {mutation!r}; choose from {MUTATIONS}")
    return rep


def run_battery(c: ChannelProfile, horizon: int = 1_000_000, warmup: int | None = None,
                replications: int = 5, seed: int = 0, mutation: str | None = None,
                workers: int = 1) -> list[Check]:
    checks = []

    def sim(r, a, k):
        cfg = SimConfig(c, r, Policy.randomized(a), horizon, warmup, seed + k, replications)
        return cfg, run(cfg, workers=workers)

    k = 0
    for lam in GRID_LAMBDAS:
        for a in GRID_AS:
            r = ArrivalRates(lam, lam)
            if not an.is_stable(OperatingPoint(c, r, PolicyParam(a))).stable:
                continue
            k += 1
            rep = _analytic(c, r, a, mutation)
            tag = f"lambda={lam:g},a={a:g}"
            try:
                cfg, res = sim(r, a, k)
            except NoDeliveries as exc:
                checks.append(Check(f"delay[{tag}]", "inconclusive", detail=str(exc)))
                continue
            post = cfg.horizon - cfg.warmup
            checks.append(compare(f"D_p[{tag}]", rep.d_p, res.d_p_hat, res.ci("d_p_hat"), post))
            checks.append(compare(f"D_s[{tag}]", rep.d_s, res.d_s_hat, res.ci("d_s_hat"), post))

    lp, ls, a = SPOT
    r = ArrivalRates(lp, ls)
    rep = _analytic(c, r, a, mutation)
    try:
        cfg, res = sim(r, a, 0)
    except NoDeliveries as exc:
        checks.append(Check("spot", "inconclusive", detail=str(exc)))
        return checks
    post = cfg.horizon - cfg.warmup
    for label, exp, key in (("N_p", rep.n_p, "n_p_hat"), ("N_sp", rep.n_sp, "n_sp_hat"),
                            ("N_s", rep.n_s, "n_s_hat"), ("D_p", rep.d_p, "d_p_hat"),
                            ("D_s", rep.d_s, "d_s_hat"), ("G00", rep.g00, "g00_hat"),
                            ("G01", rep.g01, "g01_hat"), ("epsilon", rep.epsilon, "epsilon_hat")):
        checks.append(compare(f"spot {label}", exp, getattr(res, key), res.ci(key), post))

    lhs, rhs = res.d_s_hat, res.n_s_hat / res.throughput_s
    checks.append(Check("little closure (SU)", "pass" if abs(lhs - rhs) <= CI_MULT * res.ci("d_s_hat") else "fail",
                        rhs, lhs, CI_MULT * res.ci("d_s_hat")))
    broken = [rp.replication for rp in res.replications
              if rp.pu_arrivals != rp.pu_delivered_total + rp.final.q_p + rp.final.q_sp
              or rp.su_arrivals != rp.su_delivered_total + rp.final.q_s]
    checks.append(Check("flow conservation", "fail" if broken else "pass",
                        detail=f"replications {broken}" if broken else ""))
    return checks


def summarize(checks: list[Check]) -> str:
    if any(ch.status == "fail" for ch in checks):
        return "fail"
    if any(ch.status == "inconclusive" for ch in checks):
        return "inconclusive"
    return "pass"
