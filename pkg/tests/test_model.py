import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopra.model import (
    ArrivalRates,
    ChannelProfile,
    OperatingPoint,
    OutOfRange,
    PolicyParam,
    QueueTriple,
    validate_point,
)

unit_open = st.floats(min_value=1e-6, max_value=1 - 1e-6)
rate = st.floats(min_value=0.0, max_value=1 - 1e-9)


def test_paper_point_accepted():
    p = OperatingPoint.make(0.3, 0.8, 0.4, 0.2, 0.2, 0.5)
    assert validate_point(p) is p


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(a=0.0), "a"),
        (dict(a=1.0), "a"),
        (dict(lambda_p=1.0), "lambda_p"),
        (dict(lambda_s=-0.1), "lambda_s"),
        (dict(f_pd=0.0), "f_pd"),
        (dict(f_sd=1.0), "f_sd"),
        (dict(f_ps=1.5), "f_ps"),
    ],
)
def test_out_of_range_names_field(kwargs, field):
    args = dict(f_pd=0.3, f_sd=0.8, f_ps=0.4, lambda_p=0.2, lambda_s=0.2, a=0.5)
    args.update(kwargs)
    with pytest.raises(OutOfRange) as info:
        OperatingPoint.make(**args)
    assert info.value.field == field


@given(unit_open, unit_open, unit_open, rate, rate, unit_open)
def test_valid_tuples_round_trip(f_pd, f_sd, f_ps, lp, ls, a):
    p = OperatingPoint.make(f_pd, f_sd, f_ps, lp, ls, a)
    q = validate_point(p)
    assert (q.channel.f_pd, q.channel.f_sd, q.channel.f_ps) == (f_pd, f_sd, f_ps)
    assert (q.rates.lambda_p, q.rates.lambda_s, q.a.a) == (lp, ls, a)


def test_types_are_immutable():
    ch = ChannelProfile()
    with pytest.raises(dataclasses.FrozenInstanceError):
        ch.f_pd = 0.5


def test_degenerate_channel_only_via_explicit_constructor():
    ch = ChannelProfile.degenerate(1.0, 0.8, 0.0)
    assert ch.f_pd == 1.0 and ch.f_ps == 0.0
    with pytest.raises(OutOfRange):
        ChannelProfile.degenerate(1.2, 0.8, 0.0)
    with pytest.raises(OutOfRange):
        validate_point(OperatingPoint(ch, ArrivalRates(0.1, 0.1), PolicyParam(0.5)))


def test_queue_triple_rejects_negative_and_overflow():
    with pytest.raises(OutOfRange):
        QueueTriple(-1, 0, 0)
    with pytest.raises(OverflowError):
        QueueTriple(2**63, 0, 0)
    assert QueueTriple(3, 0, 1).q_p == 3
