import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopra import analysis as an
from coopra.model import ArrivalRates, ChannelProfile, Departure, QueueTriple, Transmitter
from coopra.sim import (
    NoDeliveries,
    Policy,
    PolicyKind,
    SimConfig,
    SlotDraws,
    Verdict,
    reference_trajectory,
    run,
    simulate_replication,
    stability_probe,
    step,
    stream_generators,
)

BASE = ChannelProfile(0.3, 0.8, 0.4)
RAND = Policy.randomized(0.6)
POLICIES = [Policy.randomized(0.3), Policy.randomized(0.6), Policy.priority_relay(), Policy.no_cooperation()]


def cfg(lp=0.2, ls=0.15, policy=RAND, horizon=200_000, seed=3, reps=5, ch=BASE, warmup=None):
    return SimConfig(ch, ArrivalRates(lp, ls), policy, horizon, warmup, seed, reps)


# ---------------------------------------------------------------- step


def test_step_direct_delivery():
    s, out = step(QueueTriple(1, 0, 0), RAND, SlotDraws(pd_success=True, pu_arrival=True))
    assert s == QueueTriple(1, 0, 0)
    assert out.departure is Departure.PU_DIRECT and out.transmitter is Transmitter.PU


def test_step_wasted_slot():
    s, out = step(QueueTriple(0, 1, 0), RAND, SlotDraws(select_own=True, su_arrival=True, sd_success=True))
    assert out.transmitter is Transmitter.WASTED and out.departure is Departure.NONE
    assert s == QueueTriple(0, 1, 1)


def test_step_relay_capture():
    s, out = step(QueueTriple(1, 0, 0), RAND, SlotDraws(pd_success=False, ps_success=True))
    assert s == QueueTriple(0, 1, 0) and out.departure is Departure.PU_TO_RELAY


def test_step_retransmit_when_both_fail():
    s, out = step(QueueTriple(2, 0, 3), RAND, SlotDraws())
    assert s == QueueTriple(2, 0, 3) and out.transmitter is Transmitter.PU


def test_step_arrival_not_served_same_slot():
    s, out = step(QueueTriple(0, 0, 0), RAND, SlotDraws(pu_arrival=True, pd_success=True, select_own=True, sd_success=True, su_arrival=True))
    assert s == QueueTriple(1, 0, 1) and out.transmitter is Transmitter.IDLE


def test_step_priority_relay_and_no_cooperation():
    s, out = step(QueueTriple(0, 1, 1), Policy.priority_relay(), SlotDraws(sd_success=True))
    assert s == QueueTriple(0, 0, 1) and out.departure is Departure.RELAY_TO_DEST
    s, out = step(QueueTriple(0, 0, 1), Policy.priority_relay(), SlotDraws(sd_success=True))
    assert out.departure is Departure.SU_TO_DEST
    s, out = step(QueueTriple(1, 0, 0), Policy.no_cooperation(), SlotDraws(ps_success=True))
    assert s == QueueTriple(1, 0, 0) and out.departure is Departure.NONE


draws_st = st.builds(SlotDraws, *(st.booleans() for _ in range(6)))
state_st = st.builds(QueueTriple, st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
policy_st = st.sampled_from(POLICIES)


@given(state_st, policy_st, draws_st)
def test_step_invariants(state, policy, draws):
    new, out = step(state, policy, draws)
    assert isinstance(out.transmitter, Transmitter)
    if out.transmitter is Transmitter.WASTED:
        assert policy.kind is PolicyKind.RANDOMIZED
        assert state.q_p == 0 and (state.q_sp > 0 or state.q_s > 0)
        chosen = state.q_s if draws.select_own else state.q_sp
        assert chosen == 0
    if state.q_p > 0:
        assert out.transmitter is Transmitter.PU
    total_before = state.q_p + state.q_sp + state.q_s
    total_after = new.q_p + new.q_sp + new.q_s
    delivered = out.departure in (Departure.PU_DIRECT, Departure.RELAY_TO_DEST, Departure.SU_TO_DEST)
    assert total_after == total_before - delivered + draws.pu_arrival + draws.su_arrival
    if policy.kind is PolicyKind.NO_COOPERATION:
        assert new.q_sp == state.q_sp


# ---------------------------------------------------------------- kernel vs reference


def test_stream_draws_do_not_depend_on_batching():
    a = stream_generators(5, 0)[2]
    b = stream_generators(5, 0)[2]
    batch = a.random(1000)
    single = np.array([b.random() for _ in range(1000)])
    assert np.array_equal(batch, single)


@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.label)
def test_kernel_matches_reference_loop(policy):
    c = cfg(lp=0.25, ls=0.2, policy=policy, horizon=4000, reps=1, seed=9)
    _, trace = simulate_replication(c, 0, trace=True)
    ref = reference_trajectory(c, 0, 4000)
    assert np.array_equal(trace, np.array([[s.q_p, s.q_sp, s.q_s] for s in ref]))


def test_kernel_survives_buffer_growth_and_refill():
    # overloaded point: queues grow past the initial buffers, streams refill many times
    c = cfg(lp=0.5, ls=0.3, horizon=300_000, reps=1)
    rep, trace = simulate_replication(c, 0, trace=True)
    assert min(rep.final.q_sp, rep.final.q_s) > 5000
    short = cfg(lp=0.5, ls=0.3, horizon=20_000, reps=1)
    ref = reference_trajectory(short, 0, 20_000)
    assert np.array_equal(trace[:20_000], np.array([[s.q_p, s.q_sp, s.q_s] for s in ref]))


# ---------------------------------------------------------------- run contract


def test_run_is_deterministic_across_threads():
    c = cfg(horizon=100_000)
    a, b, threaded = run(c), run(c), run(c, workers=4)
    assert a == b == threaded


def test_conservation_per_replication():
    for policy in POLICIES:
        res = run(cfg(lp=0.22, ls=0.12, policy=policy, horizon=100_000))
        for rep in res.replications:
            assert rep.pu_arrivals == rep.pu_delivered_total + rep.final.q_p + rep.final.q_sp
            assert rep.su_arrivals == rep.su_delivered_total + rep.final.q_s


def test_zero_rates():
    c = cfg(lp=0.0, ls=0.0, horizon=10_000)
    rep, _ = simulate_replication(c, 0)
    assert (rep.n_p, rep.n_sp, rep.n_s, rep.throughput_p, rep.throughput_s) == (0, 0, 0, 0, 0)
    with pytest.raises(NoDeliveries):
        run(c)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(horizon=100, warmup=100)
    with pytest.raises(ValueError):
        cfg(reps=0)
    with pytest.raises(ValueError):
        Policy(PolicyKind.PRIORITY_RELAY, 0.5)
    assert cfg(horizon=1000).warmup == 100


def test_one_slot_minimum_sojourn():
    # f_pd = 1: every PU packet leaves in the slot after it arrives
    ch = ChannelProfile.degenerate(1.0, 0.8, 0.4)
    res = run(cfg(lp=0.3, ls=0.1, ch=ch, horizon=100_000))
    assert res.d_p_hat == 1.0
    assert res.n_p_hat == pytest.approx(0.3, abs=0.01)


def test_baselines_never_waste_slots():
    for policy in (Policy.priority_relay(), Policy.no_cooperation()):
        res = run(cfg(policy=policy, horizon=100_000))
        assert res.wasted_slots == 0
    assert run(cfg(horizon=100_000)).wasted_slots > 0


def test_no_cooperation_never_relays():
    res = run(cfg(lp=0.15, ls=0.1, policy=Policy.no_cooperation(), horizon=100_000))
    assert res.n_sp_hat == 0 and all(r.relay_moves == 0 for r in res.replications)


def test_primary_queue_identical_across_cooperative_policies():
    traces = [simulate_replication(cfg(policy=p, horizon=50_000), 2, trace=True)[1][:, 0]
              for p in (Policy.randomized(0.3), Policy.randomized(0.6), Policy.randomized(0.9), Policy.priority_relay())]
    for t in traces[1:]:
        assert np.array_equal(traces[0], t)


# ---------------------------------------------------------------- statistical agreement


def within(value, expected, ci, rel=0.02):
    return abs(value - expected) <= max(rel * abs(expected), 3 * ci)


@pytest.fixture(scope="module")
def spot_result():
    return run(cfg(horizon=1_000_000, seed=21))


def test_service_rates_from_simulation(spot_result):
    res = spot_result
    assert within(res.throughput_p, 0.2, res.ci("throughput_p"))
    assert within(res.throughput_s, 0.15, res.ci("throughput_s"))
    # Q_p departures per busy slot recover mu_p
    busy = 1 - res.g01_hat
    assert res.throughput_p / busy == pytest.approx(an.primary_service_rate(BASE), rel=0.01)
    # Q_s service = P(Q_p empty) * a * f_sd
    assert res.g01_hat * 0.6 * 0.8 == pytest.approx(an.secondary_rate_bound(BASE, 0.6, 0.2), rel=0.01)
    assert within(res.epsilon_hat, an.relay_capture_prob(BASE), res.ci("epsilon_hat"))


def test_empty_probabilities_from_simulation(spot_result):
    res = spot_result
    r = ArrivalRates(0.2, 0.15)
    assert within(res.g01_hat, an.pu_idle_prob(BASE, 0.2), res.ci("g01_hat"))
    assert within(res.g00_hat, an.empty_prob(BASE, 0.6, r), res.ci("g00_hat"))


def test_little_closure(spot_result):
    res = spot_result
    assert abs(res.d_s_hat - res.n_s_hat / res.throughput_s) <= 3 * res.ci("d_s_hat")
    assert abs(res.d_p_hat - (res.n_p_hat + res.n_sp_hat) / res.throughput_p) <= 3 * res.ci("d_p_hat")


def test_little_gap_shrinks_with_horizon():
    gaps = []
    for h in (20_000, 1_000_000):
        res = run(cfg(horizon=h, seed=4))
        gaps.append(abs(res.d_p_hat - (res.n_p_hat + res.n_sp_hat) / res.throughput_p))
    assert gaps[1] < gaps[0]


def test_isolated_su_queue():
    # PU silent: Q_s is a Bernoulli-service queue with success a * f_sd
    ls = 0.05
    res = run(cfg(lp=0.0, ls=ls, horizon=500_000))
    expected = (1 - ls) / (0.6 * 0.8 - ls)
    assert within(res.d_s_hat, expected, res.ci("d_s_hat"))
    assert np.isnan(res.d_p_hat)


def test_no_cooperation_boundary_by_simulation():
    bound = an.no_cooperation_boundary(BASE, 0.2)
    nocoop = Policy.no_cooperation()
    below = cfg(lp=0.2, ls=bound - 0.05, policy=nocoop, horizon=1_000_000, reps=3)
    above = cfg(lp=0.2, ls=bound + 0.03, policy=nocoop, horizon=1_000_000, reps=3)
    assert stability_probe(below) is Verdict.BOUNDED
    assert stability_probe(above) is Verdict.DIVERGING


# ---------------------------------------------------------------- stability probe


def test_probe_examples():
    assert stability_probe(cfg(lp=0.2, ls=0.2, policy=Policy.randomized(0.5), horizon=1_000_000, reps=3)) is Verdict.BOUNDED
    over = 1.2 * an.primary_rate_bound(BASE, 0.6)
    assert stability_probe(cfg(lp=over, ls=0.05, horizon=1_000_000, reps=3)) is Verdict.DIVERGING
    assert stability_probe(cfg(lp=0.0, ls=0.0, horizon=100_000, reps=3)) is Verdict.BOUNDED


def test_probe_locates_relay_bound():
    bound = an.primary_rate_bound(BASE, 0.6)
    verdicts = [stability_probe(cfg(lp=lp, ls=0.0, horizon=1_000_000, reps=3))
                for lp in (bound - 0.03, bound - 0.015, bound + 0.015, bound + 0.03)]
    assert verdicts == [Verdict.BOUNDED, Verdict.BOUNDED, Verdict.DIVERGING, Verdict.DIVERGING]


def test_sim_result_is_flat_record(spot_result):
    d = spot_result.as_dict()
    assert {"d_p_hat", "d_s_hat", "idle_slots", "wasted_slots", "d_p_hat_ci"} <= set(d)
    assert dataclasses.is_dataclass(spot_result)
