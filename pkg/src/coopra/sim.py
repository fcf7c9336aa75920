"""Seeded slot-level Monte-Carlo simulator of the PU/SU three-queue system.

Each replication draws from six independent uniform streams derived from the
master seed with ``SeedSequence(seed, spawn_key=(replication, stream))``:

    0 PU arrivals      one draw per slot
    1 SU arrivals      one draw per slot
    2 PU->dest link    one draw per PU transmission
    3 PU->SU link      one draw per failed direct PU transmission (cooperative policies)
    4 SU->dest link    one draw per SU transmission
    5 queue selection  one draw per PU-idle slot (randomized policy only)

The PU-side streams (0, 2, 3) are consumed identically by every cooperative
policy, so Q_p follows the same trajectory under Randomized(a) for any ``a``
and under PriorityRelay. Streams are consumed on demand, never per slot, so
changing one policy's SU-side behaviour does not shift the others.
"""
from __future__ import annotations

import enum
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import (
    ArrivalRates,
    ChannelProfile,
    Departure,
    OutOfRange,
    QueueTriple,
    SlotOutcome,
    Transmitter,
)

N_STREAMS = 6
S_PU_ARR, S_SU_ARR, S_PD, S_PS, S_SD, S_SEL = range(N_STREAMS)
_CHUNK = 1 << 16
_Z95 = statistics.NormalDist().inv_cdf(0.975)


class PolicyKind(enum.IntEnum):
    RANDOMIZED = 0
    PRIORITY_RELAY = 1
    NO_COOPERATION = 2


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    a: float | None = None

    def __post_init__(self):
        kind = PolicyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PolicyKind.RANDOMIZED:
            if self.a is None or not 0.0 < float(self.a) < 1.0:
                raise OutOfRange("a", self.a, "0 < a < 1")
            object.__setattr__(self, "a", float(self.a))
        elif self.a is not None:
            raise OutOfRange("a", self.a, f"no parameter for {kind.name}")

    @classmethod
    def randomized(cls, a: float) -> Policy:
        return cls(PolicyKind.RANDOMIZED, a)

    @classmethod
    def priority_relay(cls) -> Policy:
        return cls(PolicyKind.PRIORITY_RELAY)

    @classmethod
    def no_cooperation(cls) -> Policy:
        return cls(PolicyKind.NO_COOPERATION)

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.RANDOMIZED:
            return f"randomized(a={self.a:.9g})"
        return self.kind.name.lower()


@dataclass(frozen=True)
class SimConfig:
    channel: ChannelProfile
    rates: ArrivalRates
    policy: Policy
    horizon: int = 1_000_000
    warmup: int | None = None
    seed: int = 0
    replications: int = 5

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if self.horizon < 1:
            raise OutOfRange("horizon", self.horizon, "horizon >= 1")
        if not 0 <= self.warmup < self.horizon:
            raise OutOfRange("warmup", self.warmup, "0 <= warmup < horizon")
        if self.replications < 1:
            raise OutOfRange("replications", self.replications, "replications >= 1")
        if not 0 <= self.seed < 2**64:
            raise OutOfRange("seed", self.seed, "0 <= seed < 2**64")


class NoDeliveries(RuntimeError):
    def __init__(self, flow: str):
        self.flow = flow
        super().__init__(f"no {flow} packet was delivered after warmup")


# --------------------------------------------------------------------------
# single-slot reference semantics


@dataclass(frozen=True)
class SlotDraws:
    """Resolved random events of one slot; unused fields are ignored."""

    pu_arrival: bool = False
    su_arrival: bool = False
    pd_success: bool = False
    ps_success: bool = False
    select_own: bool = False
    sd_success: bool = False


def step(state: QueueTriple, policy: Policy, draws: SlotDraws) -> tuple[QueueTriple, SlotOutcome]:
    """Advance the system by one slot.

    Departures are decided from the slot-start state; arrivals are appended
    afterwards, so a packet never leaves in the slot it arrives.
    """
    q_p, q_sp, q_s = state.q_p, state.q_sp, state.q_s
    departure = Departure.NONE
    if q_p > 0:
        transmitter = Transmitter.PU
        if draws.pd_success:
            q_p -= 1
            departure = Departure.PU_DIRECT
        elif policy.kind is not PolicyKind.NO_COOPERATION and draws.ps_success:
            q_p -= 1
            q_sp += 1
            departure = Departure.PU_TO_RELAY
    else:
        if policy.kind is PolicyKind.RANDOMIZED:
            own = draws.select_own
            chosen, other = (q_s, q_sp) if own else (q_sp, q_s)
            if chosen == 0:
                transmitter = Transmitter.WASTED if other > 0 else Transmitter.IDLE
            else:
                transmitter = Transmitter.SU_OWN if own else Transmitter.SU_RELAY
        elif policy.kind is PolicyKind.PRIORITY_RELAY:
            if q_sp > 0:
                transmitter = Transmitter.SU_RELAY
            elif q_s > 0:
                transmitter = Transmitter.SU_OWN
            else:
                transmitter = Transmitter.IDLE
        else:
            transmitter = Transmitter.SU_OWN if q_s > 0 else Transmitter.IDLE
        if transmitter is Transmitter.SU_OWN and draws.sd_success:
            q_s -= 1
            departure = Departure.SU_TO_DEST
        elif transmitter is Transmitter.SU_RELAY and draws.sd_success:
            q_sp -= 1
            departure = Departure.RELAY_TO_DEST
    q_p += int(draws.pu_arrival)
    q_s += int(draws.su_arrival)
    outcome = SlotOutcome(transmitter, bool(draws.pu_arrival), bool(draws.su_arrival), departure)
    return QueueTriple(q_p, q_sp, q_s), outcome


def stream_generators(seed: int, replication: int) -> list[np.random.Generator]:
    """Independent PCG64 generators for one replication, in stream order."""
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication, k))))
        for k in range(N_STREAMS)
    ]


def reference_trajectory(cfg: SimConfig, replication: int, slots: int) -> list[QueueTriple]:
    """Slot-start states from a pure-Python loop over :func:`step`.

    Slow; consumes the streams exactly like the compiled kernel and exists to
    cross-check it.
    """
    gens = stream_generators(cfg.seed, replication)
    ch, r, pol = cfg.channel, cfg.rates, cfg.policy

    def u(k):
        return gens[k].random()

    state = QueueTriple()
    out = []
    for _ in range(slots):
        out.append(state)
        d = {}
        if state.q_p > 0:
            d["pd_success"] = u(S_PD) < ch.f_pd
            if not d["pd_success"] and pol.kind is not PolicyKind.NO_COOPERATION:
                d["ps_success"] = u(S_PS) < ch.f_ps
        else:
            if pol.kind is PolicyKind.RANDOMIZED:
                own = u(S_SEL) < pol.a
                d["select_own"] = own
                transmits = (state.q_s if own else state.q_sp) > 0
            elif pol.kind is PolicyKind.PRIORITY_RELAY:
                transmits = state.q_sp > 0 or state.q_s > 0
            else:
                transmits = state.q_s > 0
            if transmits:
                d["sd_success"] = u(S_SD) < ch.f_sd
        d["pu_arrival"] = u(S_PU_ARR) < r.lambda_p
        d["su_arrival"] = u(S_SU_ARR) < r.lambda_s
        state, _ = step(state, pol, SlotDraws(**d))
    return out


# --------------------------------------------------------------------------
# compiled kernel

# stats layout
(
    ST_SUM_QP, ST_SUM_QSP, ST_SUM_QS, ST_QP_EMPTY, ST_BOTH_EMPTY,
    ST_PU_DELIV, ST_PU_SOJOURN, ST_RELAY_DELIV, ST_SU_DELIV, ST_SU_SOJOURN,
    ST_IDLE, ST_WASTED, ST_PU_ARR_ALL, ST_SU_ARR_ALL, ST_PU_DELIV_ALL,
    ST_SU_DELIV_ALL, ST_RELAY_MOVES_ALL, ST_SLOTS,
) = range(18)
N_STATS = 18


@numba.njit(cache=True, nogil=True)
def _push(buf, qs, k, value):
    cap = buf.shape[0]
    buf[(qs[2 * k] + qs[2 * k + 1]) & (cap - 1)] = value
    qs[2 * k + 1] += 1


@numba.njit(cache=True, nogil=True)
def _pop(buf, qs, k):
    cap = buf.shape[0]
    v = buf[qs[2 * k]]
    qs[2 * k] = (qs[2 * k] + 1) & (cap - 1)
    qs[2 * k + 1] -= 1
    return v


@numba.njit(cache=True, nogil=True)
def _run_chunk(t, t_end, warmup, params, kind, draws, cur, buf_p, buf_sp, buf_s, qs, stats, trace):
    f_pd = params[0]
    f_sd = params[1]
    f_ps = params[2]
    lam_p = params[3]
    lam_s = params[4]
    a = params[5]
    n_draw = draws.shape[1]
    while t < t_end:
        # every stream and queue may advance by at most one per slot
        for k in range(6):
            if cur[k] >= n_draw:
                return t
        q_p = qs[1]
        q_sp = qs[3]
        q_s = qs[5]
        if q_p >= buf_p.shape[0] or q_sp >= buf_sp.shape[0] or q_s >= buf_s.shape[0]:
            return t
        post = t >= warmup
        if trace.shape[0] > 0:
            trace[t, 0] = q_p
            trace[t, 1] = q_sp
            trace[t, 2] = q_s
        if post:
            stats[17] += 1
            stats[0] += q_p
            stats[1] += q_sp
            stats[2] += q_s
            if q_p == 0:
                stats[3] += 1
                if q_s == 0:
                    stats[4] += 1
        if q_p > 0:
            u = draws[2, cur[2]]
            cur[2] += 1
            if u < f_pd:
                arr = _pop(buf_p, qs, 0)
                stats[14] += 1
                if post:
                    stats[5] += 1
                    stats[6] += t - arr
            elif kind != 2:
                v = draws[3, cur[3]]
                cur[3] += 1
                if v < f_ps:
                    arr = _pop(buf_p, qs, 0)
                    _push(buf_sp, qs, 1, arr)
                    stats[16] += 1
        else:
            # 0 idle, 1 own queue, 2 relay queue, 3 wasted
            tx = 0
            if kind == 0:
                s = draws[5, cur[5]]
                cur[5] += 1
                if s < a:
                    if q_s > 0:
                        tx = 1
                    elif q_sp > 0:
                        tx = 3
                else:
                    if q_sp > 0:
                        tx = 2
                    elif q_s > 0:
                        tx = 3
            elif kind == 1:
                if q_sp > 0:
                    tx = 2
                elif q_s > 0:
                    tx = 1
            else:
                if q_s > 0:
                    tx = 1
            if tx == 1 or tx == 2:
                w = draws[4, cur[4]]
                cur[4] += 1
                if w < f_sd:
                    if tx == 1:
                        arr = _pop(buf_s, qs, 2)
                        stats[15] += 1
                        if post:
                            stats[8] += 1
                            stats[9] += t - arr
                    else:
                        arr = _pop(buf_sp, qs, 1)
                        stats[14] += 1
                        if post:
                            stats[5] += 1
                            stats[6] += t - arr
                            stats[7] += 1
            elif post:
                if tx == 0:
                    stats[10] += 1
                else:
                    stats[11] += 1
        x = draws[0, cur[0]]
        cur[0] += 1
        if x < lam_p:
            _push(buf_p, qs, 0, t)
            stats[12] += 1
        y = draws[1, cur[1]]
        cur[1] += 1
        if y < lam_s:
            _push(buf_s, qs, 2, t)
            stats[13] += 1
        t += 1
    return t


def _grow(buf: np.ndarray, qs: np.ndarray, k: int) -> np.ndarray:
    head, size = qs[2 * k], qs[2 * k + 1]
    out = np.empty(2 * buf.shape[0], dtype=np.int64)
    out[:size] = np.concatenate((buf[head:], buf[:head]))[:size]
    qs[2 * k] = 0
    return out


@dataclass(frozen=True)
class ReplicationStats:
    """Raw counters and derived estimates of one replication."""

    replication: int
    counters: tuple
    final: QueueTriple
    post_slots: int

    def _c(self, i):
        return self.counters[i]

    @property
    def n_p(self) -> float:
        return self._c(ST_SUM_QP) / self.post_slots

    @property
    def n_sp(self) -> float:
        return self._c(ST_SUM_QSP) / self.post_slots

    @property
    def n_s(self) -> float:
        return self._c(ST_SUM_QS) / self.post_slots

    @property
    def g01(self) -> float:
        return self._c(ST_QP_EMPTY) / self.post_slots

    @property
    def g00(self) -> float:
        return self._c(ST_BOTH_EMPTY) / self.post_slots

    @property
    def pu_delivered(self) -> int:
        return self._c(ST_PU_DELIV)

    @property
    def su_delivered(self) -> int:
        return self._c(ST_SU_DELIV)

    @property
    def d_p(self) -> float:
        n = self.pu_delivered
        return self._c(ST_PU_SOJOURN) / n if n else math.nan

    @property
    def d_s(self) -> float:
        n = self.su_delivered
        return self._c(ST_SU_SOJOURN) / n if n else math.nan

    @property
    def epsilon(self) -> float:
        n = self.pu_delivered
        return self._c(ST_RELAY_DELIV) / n if n else math.nan

    @property
    def throughput_p(self) -> float:
        return self.pu_delivered / self.post_slots

    @property
    def throughput_s(self) -> float:
        return self.su_delivered / self.post_slots

    @property
    def idle_slots(self) -> int:
        return self._c(ST_IDLE)

    @property
    def wasted_slots(self) -> int:
        return self._c(ST_WASTED)

    @property
    def pu_arrivals(self) -> int:
        return self._c(ST_PU_ARR_ALL)

    @property
    def su_arrivals(self) -> int:
        return self._c(ST_SU_ARR_ALL)

    @property
    def pu_delivered_total(self) -> int:
        return self._c(ST_PU_DELIV_ALL)

    @property
    def su_delivered_total(self) -> int:
        return self._c(ST_SU_DELIV_ALL)

    @property
    def relay_moves(self) -> int:
        return self._c(ST_RELAY_MOVES_ALL)


def simulate_replication(cfg: SimConfig, replication: int, trace: bool = False):
    """Run one replication; returns ``(ReplicationStats, trace_or_None)``.

    With ``trace=True`` the second item is an ``(horizon, 3)`` int64 array of
    slot-start queue lengths (q_p, q_sp, q_s).
    """
    ch, r, pol = cfg.channel, cfg.rates, cfg.policy
    params = np.array([ch.f_pd, ch.f_sd, ch.f_ps, r.lambda_p, r.lambda_s, pol.a or 0.0])
    gens = stream_generators(cfg.seed, replication)
    draws = np.empty((N_STREAMS, _CHUNK))
    for k, g in enumerate(gens):
        draws[k] = g.random(_CHUNK)
    cur = np.zeros(N_STREAMS, dtype=np.int64)
    bufs = [np.empty(1024, dtype=np.int64) for _ in range(3)]
    qs = np.zeros(6, dtype=np.int64)
    stats = np.zeros(N_STATS, dtype=np.int64)
    tr = np.zeros((cfg.horizon, 3) if trace else (0, 3), dtype=np.int64)
    t = 0
    while t < cfg.horizon:
        t = _run_chunk(t, cfg.horizon, cfg.warmup, params, int(pol.kind), draws, cur,
                       bufs[0], bufs[1], bufs[2], qs, stats, tr)
        for k in range(N_STREAMS):
            used = cur[k]
            if used > _CHUNK // 2:
                draws[k, : _CHUNK - used] = draws[k, used:]
                draws[k, _CHUNK - used:] = gens[k].random(used)
                cur[k] = 0
        for k in range(3):
            if qs[2 * k + 1] >= bufs[k].shape[0] - 1:
                bufs[k] = _grow(bufs[k], qs, k)
    final = QueueTriple(int(qs[1]), int(qs[3]), int(qs[5]))
    rep = ReplicationStats(replication, tuple(int(x) for x in stats), final, int(stats[ST_SLOTS]))
    return rep, (tr if trace else None)


@dataclass(frozen=True)
class SimResult:
    n_p_hat: float
    n_sp_hat: float
    n_s_hat: float
    d_p_hat: float
    d_s_hat: float
    throughput_p: float
    throughput_s: float
    idle_slots: int
    wasted_slots: int
    g00_hat: float
    g01_hat: float
    epsilon_hat: float
    ci_halfwidth: dict = field(default_factory=dict)
    replications: tuple = ()

    METRICS = ("n_p_hat", "n_sp_hat", "n_s_hat", "d_p_hat", "d_s_hat", "throughput_p",
               "throughput_s", "g00_hat", "g01_hat", "epsilon_hat")

    def ci(self, metric: str) -> float:
        return self.ci_halfwidth[metric]

    def as_dict(self) -> dict:
        out = {m: getattr(self, m) for m in self.METRICS}
        out["idle_slots"] = self.idle_slots
        out["wasted_slots"] = self.wasted_slots
        out.update({f"{m}_ci": self.ci_halfwidth[m] for m in self.METRICS})
        return out


def _mean_ci(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if np.isnan(arr).any():
        return math.nan, math.nan
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, math.nan
    return mean, float(_Z95 * arr.std(ddof=1) / math.sqrt(arr.size))


def _replicate_all(cfg: SimConfig, workers: int) -> list[ReplicationStats]:
    idx = range(cfg.replications)
    if workers <= 1 or cfg.replications == 1:
        return [simulate_replication(cfg, i)[0] for i in idx]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order
        return [rep for rep, _ in pool.map(lambda i: simulate_replication(cfg, i), idx)]


def run(cfg: SimConfig, workers: int = 1) -> SimResult:
    """Execute ``cfg.replications`` independent runs and aggregate them.

    Delays are mean per-packet sojourns (departure slot minus arrival slot)
    over packets delivered after warmup; a relayed PU packet departs when the
    SU delivers it. Flows with a zero arrival rate report NaN delays.
    """
    reps = _replicate_all(cfg, workers)
    for flow, rate, attr in (("pu", cfg.rates.lambda_p, "pu_delivered"), ("su", cfg.rates.lambda_s, "su_delivered")):
        if rate > 0 and any(getattr(rep, attr) == 0 for rep in reps):
            raise NoDeliveries(flow)
    if all(rep.pu_delivered == 0 and rep.su_delivered == 0 for rep in reps):
        raise NoDeliveries("pu" if cfg.rates.lambda_p > 0 or cfg.rates.lambda_s == 0 else "su")
    names = {
        "n_p_hat": "n_p", "n_sp_hat": "n_sp", "n_s_hat": "n_s", "d_p_hat": "d_p", "d_s_hat": "d_s",
        "throughput_p": "throughput_p", "throughput_s": "throughput_s", "g00_hat": "g00",
        "g01_hat": "g01", "epsilon_hat": "epsilon",
    }
    means, cis = {}, {}
    for key, attr in names.items():
        means[key], cis[key] = _mean_ci([getattr(rep, attr) for rep in reps])
    return SimResult(
        **means,
        idle_slots=sum(rep.idle_slots for rep in reps),
        wasted_slots=sum(rep.wasted_slots for rep in reps),
        ci_halfwidth=cis,
        replications=tuple(reps),
    )


class Verdict(str, enum.Enum):
    BOUNDED = "bounded"
    DIVERGING = "diverging"


def stability_probe(cfg: SimConfig, threshold: float = 50.0, workers: int = 1) -> Verdict:
    """Heuristic empirical stability check, meant as a test oracle.

    Declares divergence when some queue ends the run above
    ``threshold * (1 + log10(horizon))`` in a majority of replications.
    """
    limit = threshold * (1.0 + math.log10(cfg.horizon))
    reps = _replicate_all(cfg, workers)
    over = sum(max(rep.final.q_p, rep.final.q_sp, rep.final.q_s) > limit for rep in reps)
    return Verdict.DIVERGING if 2 * over > len(reps) else Verdict.BOUNDED
