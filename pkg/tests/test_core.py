import pytest

from icroute.core import (
    SINK,
    ChargingSpec,
    Message,
    NodePlacement,
    Scenario,
    cycle_length,
    delay_offset,
    is_working,
)


def test_cycle_length_counts_work_slot():
    assert cycle_length(ChargingSpec(1)) == 2
    assert cycle_length(ChargingSpec(50)) == 51
    assert cycle_length(ChargingSpec(500)) == 501


def test_charge_slots_must_be_positive():
    with pytest.raises(ValueError):
        ChargingSpec(0)
    with pytest.raises(ValueError):
        ChargingSpec(-3)


def test_is_working_periodic():
    spec = ChargingSpec(4)
    # offset 2, cycle 5: working slots are 2, 7, 12, ...
    hits = [s for s in range(20) if is_working(2, spec, s)]
    assert hits == [2, 7, 12, 17]


def test_is_working_every_offset_once_per_cycle():
    spec = ChargingSpec(7)
    for offset in range(8):
        hits = [s for s in range(8) if is_working(offset, spec, s)]
        assert hits == [offset]


def test_is_working_rejects_bad_offset():
    spec = ChargingSpec(4)
    with pytest.raises(ValueError):
        is_working(5, spec, 0)
    with pytest.raises(ValueError):
        is_working(-1, spec, 0)


def test_delay_offset_wraps():
    spec = ChargingSpec(4)
    assert delay_offset(2, spec, 0) == 2
    assert delay_offset(2, spec, 1) == 3
    assert delay_offset(4, spec, 1) == 0
    assert delay_offset(0, spec, 5) == 0


def test_delay_offset_never_advances():
    spec = ChargingSpec(4)
    with pytest.raises(ValueError):
        delay_offset(2, spec, -1)


def test_delay_covers_all_offsets():
    # delaying 0..t from a fixed offset reaches every offset exactly once
    spec = ChargingSpec(9)
    seen = {delay_offset(3, spec, d) for d in range(10)}
    assert seen == set(range(10))


def test_message_key_and_path():
    m = Message(origin=7, seq=3, created_at=100)
    assert m.key == (7, 3)
    assert m.path == ()
    m2 = Message(origin=7, seq=3, created_at=100, path=(7, 4))
    assert m2.key == m.key


def test_scenario_positions_include_sink():
    spec = ChargingSpec(2)
    nodes = [NodePlacement(0, 1.0, 0.0, 0), NodePlacement(1, 2.0, 0.0, 1)]
    sc = Scenario(spec, nodes, sink_xy=(0.0, 0.0), range_m=1.5, width=3.0, height=1.0)
    pos = sc.positions()
    assert pos[SINK] == (0.0, 0.0)
    assert pos[0] == (1.0, 0.0)
    assert pos[1] == (2.0, 0.0)
    assert sc.offsets() == {0: 0, 1: 1}
