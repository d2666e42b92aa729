"""Alignment scan behavior against brute-force oracles."""

import random

import pytest

from icroute.core import ChargingSpec
from icroute.sync import (
    SyncScanState,
    alignment_cycles,
    closed_form_latency,
    expected_scan_latency,
    find_best_p,
    geometric_baseline_step,
    geometric_latency,
    mean_scan_latency,
    sample_latencies,
    scan_step,
)

EXHAUSTIVE_T = range(1, 51)
SLOT_WALK_T = range(1, 13)  # small enough for the slot-by-slot oracle


def walk_cycles(o_s, o_r, spec):
    """Oracle: advance the sender's offset one slot per cycle until it
    lands on the receiver's."""
    offset = o_s
    for k in range(spec.cycle + 1):
        if offset == o_r:
            return k * spec.cycle + o_r
        offset = (offset + 1) % spec.cycle
    raise AssertionError("scan failed to align within a full cycle of cycles")


def walk_slots(o_s, o_r, spec):
    """Slower oracle: scan the raw slot grid for the first slot where
    both nodes are working."""
    cycle = spec.cycle
    for s in range(cycle * cycle + cycle):
        k, within = divmod(s, cycle)
        if within == (o_s + k) % cycle and within == o_r:
            return s
    raise AssertionError("no shared working slot found")


def test_closed_form_matches_cycle_walk_exhaustively():
    for t in EXHAUSTIVE_T:
        spec = ChargingSpec(t)
        for o_s in range(t + 1):
            for o_r in range(t + 1):
                assert closed_form_latency(o_s, o_r, spec) == walk_cycles(o_s, o_r, spec)


def test_closed_form_matches_slot_walk():
    for t in SLOT_WALK_T:
        spec = ChargingSpec(t)
        for o_s in range(t + 1):
            for o_r in range(t + 1):
                assert closed_form_latency(o_s, o_r, spec) == walk_slots(o_s, o_r, spec)


def test_known_latencies():
    spec = ChargingSpec(5)
    assert closed_form_latency(0, 3, spec) == 21
    assert closed_form_latency(4, 4, spec) == 4
    assert walk_slots(0, 3, spec) == 21
    assert walk_slots(4, 4, spec) == 4


def test_alignment_never_needs_more_than_t_cycles():
    for t in EXHAUSTIVE_T:
        spec = ChargingSpec(t)
        for o_s in range(t + 1):
            for o_r in range(t + 1):
                d = alignment_cycles(o_s, o_r, spec)
                assert 0 <= d <= t
                assert closed_form_latency(o_s, o_r, spec) == d * spec.cycle + o_r


def test_latency_upper_bound():
    # worst case: d = t and o_r = t, one slot short of a full square
    for t in (1, 5, 50):
        spec = ChargingSpec(t)
        worst = max(
            closed_form_latency(o_s, o_r, spec)
            for o_s in range(t + 1)
            for o_r in range(t + 1)
        )
        assert worst == t * spec.cycle + t


def test_offset_validation():
    spec = ChargingSpec(5)
    with pytest.raises(ValueError):
        closed_form_latency(6, 0, spec)
    with pytest.raises(ValueError):
        closed_form_latency(0, -1, spec)


def test_scan_state_walks_and_exhausts():
    spec = ChargingSpec(5)
    state = SyncScanState.start(2)
    seen = [state.current_offset]
    for _ in range(spec.cycle):
        assert not state.exhausted(spec)
        state = scan_step(state, decoded_ack=False, spec=spec)
        seen.append(state.current_offset)
    assert state.exhausted(spec)
    assert not state.matched
    assert seen[:-1] == [2, 3, 4, 5, 0, 1]
    assert seen[-1] == 2  # back at the origin after a full scan
    assert state.origin_offset == 2


def test_scan_state_covers_every_offset():
    for t in range(1, 9):
        spec = ChargingSpec(t)
        for start in range(t + 1):
            state = SyncScanState.start(start)
            seen = set()
            for _ in range(spec.cycle):
                seen.add(state.current_offset)
                state = scan_step(state, decoded_ack=False, spec=spec)
            assert seen == set(range(t + 1))


def test_scan_match_freezes_state():
    spec = ChargingSpec(5)
    state = SyncScanState.start(0)
    state = scan_step(state, decoded_ack=False, spec=spec)
    matched = scan_step(state, decoded_ack=True, spec=spec)
    assert matched.matched
    assert matched.current_offset == state.current_offset
    assert not matched.exhausted(spec)
    with pytest.raises(ValueError):
        scan_step(matched, decoded_ack=True, spec=spec)


def test_mean_latency_tracks_analytic():
    cases = {5: 17.5, 120: 7320.0, 500: 125500.0}
    for t, expect in cases.items():
        spec = ChargingSpec(t)
        assert expected_scan_latency(spec) == expect
        got = mean_scan_latency(spec, trials=10_000, rng=random.Random(7))
        assert abs(got - expect) / expect < 0.02


def test_mean_latency_rejects_zero_trials():
    with pytest.raises(ValueError):
        mean_scan_latency(ChargingSpec(5), trials=0, rng=random.Random(0))


def test_geometric_step_validates_p():
    spec = ChargingSpec(5)
    rng = random.Random(0)
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            geometric_baseline_step(2, bad, spec, rng)


def test_geometric_latency_deterministic_per_seed():
    spec = ChargingSpec(50)
    a = geometric_latency(3, 40, 0.5, spec, random.Random(11))
    b = geometric_latency(3, 40, 0.5, spec, random.Random(11))
    assert a == b
    assert a is not None and a % spec.cycle == 40


def test_geometric_latency_immediate_when_aligned():
    spec = ChargingSpec(50)
    assert geometric_latency(17, 17, 0.5, spec, random.Random(0)) == 17


def test_geometric_latency_can_miss():
    spec = ChargingSpec(50)
    assert geometric_latency(3, 40, 0.5, spec, random.Random(0), max_cycles=2) is None


def test_geometric_spread_wider_than_scan():
    # the deterministic scan needs at most t cycles; the coin-flip walk
    # has no such bound and a visibly wider spread
    from statistics import pvariance

    spec = ChargingSpec(120)
    det = sample_latencies(spec, 400, random.Random(3))
    geo = sample_latencies(spec, 400, random.Random(3), p=0.5)
    assert len(geo) >= 200
    assert max(det) <= 120 * spec.cycle + 120
    assert pvariance(geo) > pvariance(det)


def test_find_best_p_returns_grid_point():
    spec = ChargingSpec(50)
    p, mean, var = find_best_p(spec, trials=200, rng=random.Random(5))
    assert p in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    assert mean > 0 and var > 0
