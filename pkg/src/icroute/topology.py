"""Hop-count acquisition for charge-and-work nodes.

The sink owns the first phase of a build: it stays silent while nodes
charge, then transmits its hop frame once per slot for a full cycle, so
every in-range node decodes exactly one round regardless of offset.

A node that learns a smaller hop count waits out the remainder of its
parent's pass, then runs its own broadcast pass: one transmission per
cycle, delaying one extra slot each round so that the transmit slot
rotates through every offset exactly once.  Listeners answer with an ack
when a frame actually improved their state; a broadcaster keeps running
passes (with a re-randomized rotation start) until two consecutive
passes bring no new ackers.

Only the first pass after an update keeps that rigid cadence, because
downstream timers are derived from it.  Every retry pass instead flips
a coin at each working slot: transmit here and step the rotation, or
just listen and stay.  Each offset is still covered exactly once, but
two neighbors whose retries overlap are no longer transmit-only in
lockstep, so they can actually hear each other mid-pass.

A quiet broadcaster does not go silent at once.  It first sits in a
listen-only cooldown until its own channel has been quiet for a
randomized window, runs one lone farewell pass, then listens for
another window.  The farewell only counts if that trailing window stays
silent; any frame (or undecodable pileup) heard along the way voids the
attempt and restarts the cooldown.  A node retires only after the
required number of farewells have each run clean, which keeps farewells
from being spent while the neighborhood is still loud, and leaves the
last word to a pass transmitted into drained air, where one clean
exchange is enough for a straggling neighbor to correct us or adopt us.

Two repair paths keep stragglers out of the steady state:

* a listener that decodes a frame claiming a hop at least two above its
  own answers in the ack phase with its own hop frame, which the
  (half-duplex, but ack-phase listening) broadcaster applies at once;
* a node that has heard no finite hop frame for a long window transmits
  a probe, and any settled neighbor answers the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import NO_HOP, SINK, AckFrame, ChargingSpec, HopFrame, Scenario
from .engine import Countdown, Engine, RunResult
from .radio import derive_rng_stream


@dataclass(frozen=True)
class TopoConfig:
    wait_timer: str = "rounds"  # "rounds" waits whole cycles, "slots" raw slots
    quiet_passes: int = 2
    farewell_passes: int = 2  # lone post-cooldown passes that must stay quiet
    probe_scans: int = 3  # full offset scans (each behind a fresh silence window)
    max_hop: int | None = None  # None: derive from the area diagonal

    def __post_init__(self):
        if self.wait_timer not in ("rounds", "slots"):
            raise ValueError(f"unknown wait_timer {self.wait_timer!r}")


def max_hop_estimate(scenario: Scenario) -> int:
    """Hop-count ceiling used to size the probe silence window."""
    diag = math.hypot(scenario.width, scenario.height)
    return max(1, math.ceil(diag / scenario.range_m))


def probe_silence_window(scenario: Scenario, max_hop: int | None = None) -> int:
    t = scenario.spec.charge_slots
    n = max_hop if max_hop is not None else max_hop_estimate(scenario)
    return (t + 1) * (t + 2) * n


@dataclass
class TopoResult:
    hops: dict
    next_hops: dict
    known_lower: dict
    topo_time: int
    converged_at: int | None
    unreachable: set
    passes: dict
    run: RunResult

    def to_dict(self):
        return {
            "hops": {str(k): (None if v == NO_HOP else v) for k, v in self.hops.items()},
            "next_hops": {str(k): v for k, v in self.next_hops.items()},
            "topo_time": self.topo_time,
            "converged_at": self.converged_at,
            "unreachable": sorted(self.unreachable),
        }


class TopoSink:
    """Transmits hop 0 once per slot for one full cycle, then just listens."""

    def __init__(self, spec: ChargingSpec):
        self.t = spec.charge_slots
        self.next_wake = self.t
        self.ackers = set()

    def poll(self, slot):
        if self.t <= slot <= 2 * self.t:
            return HopFrame(src=SINK, hop=0, round_no=slot - self.t)
        return None

    def on_data(self, slot, frame):
        return None

    def on_ack(self, slot, frame):
        if isinstance(frame, AckFrame) and frame.ack_dst == SINK:
            self.ackers.add(frame.src)

    def finish(self, slot):
        if self.next_wake is not None and slot >= self.next_wake:
            self.next_wake = slot + 1 if slot < 2 * self.t else None


class TopoNode:
    """Per-node state machine: listen, wait out the parent, broadcast."""

    def __init__(self, node_id, offset, spec, cfg, scenario, pending: Countdown):
        self.id = node_id
        self.spec = spec
        self.cfg = cfg
        self.t = spec.charge_slots
        self.cycle = spec.cycle
        self.hop = NO_HOP
        self.next_hop = None
        self.known_lower = {}
        self.state = "listen"
        self.next_wake = offset
        self.last_update = -1
        self.last_heard = 0
        self.silence_window = probe_silence_window(scenario, cfg.max_hop)
        self.rng = derive_rng_stream(scenario.seed, node_id, "topo")
        self.pending = pending
        self.done = False
        pending.value += 1
        # wait bookkeeping
        self._bcast_start = None
        # cooldown / verify bookkeeping
        self._quiet_until = None
        self._verify_until = None
        # broadcast bookkeeping
        self._round = 0
        self._tx_now = False
        self._p_tx = 1.0
        self._pass_no = 0
        self._cur_ackers = set()
        self._all_ackers = set()
        self._quiet_streak = 0
        self._farewells = 0
        self._lone_pass = False
        # probe bookkeeping
        self.probes_used = 0
        self._probe_attempt = 0
        self._scans_used = 0
        self.unreachable = False
        self.protocol_errors = 0
        # set in on_data/on_ack, consumed by finish
        self._update_round = None

    # -- helpers -------------------------------------------------------

    def _set_done(self, flag):
        if flag and not self.done:
            self.pending.value -= 1
        elif not flag and self.done:
            self.pending.value += 1
        self.done = flag

    def _consider(self, slot, frame):
        """Apply a decoded hop frame; return an ack-phase response or None."""
        if not 0 <= frame.round_no <= self.t:
            self.protocol_errors += 1
            return None
        if frame.hop != NO_HOP:
            self.known_lower[frame.src] = frame.hop
            self.last_heard = slot
        if frame.hop != NO_HOP and frame.hop + 1 < self.hop:
            self.hop = frame.hop + 1
            self.next_hop = frame.src
            self.last_update = slot
            self._update_round = frame.round_no
            if self.unreachable:
                self.unreachable = False
            self._set_done(False)
            return AckFrame(src=self.id, ack_dst=frame.src)
        if self.hop != NO_HOP and frame.hop > self.hop + 1:
            # struggler (or probe): answer with our own state
            return HopFrame(src=self.id, hop=self.hop, round_no=self.t)
        return None

    # -- engine hooks --------------------------------------------------

    def poll(self, slot):
        if self.state == "bcast" and self._tx_now:
            return HopFrame(src=self.id, hop=self.hop, round_no=self._round)
        if self.state == "probe":
            self.probes_used += 1
            return HopFrame(src=self.id, hop=NO_HOP, round_no=self.t)
        return None

    def on_data(self, slot, frame):
        self._heard_activity(slot)
        if isinstance(frame, HopFrame):
            return self._consider(slot, frame)
        return None

    def on_ack(self, slot, frame):
        self._heard_activity(slot)
        if isinstance(frame, AckFrame):
            if self.state == "bcast" and frame.ack_dst == self.id:
                self._cur_ackers.add(frame.src)
        elif isinstance(frame, HopFrame):
            self._consider(slot, frame)

    def on_busy(self, slot):
        # colliding energy decodes to nothing, but it is still activity
        self._heard_activity(slot)

    def _heard_activity(self, slot):
        """The channel is clearly not quiet: slide or void quiet-dependent state."""
        if self.state == "cooldown":
            gap = self.rng.randrange(self.t + 1, 2 * self.t + 3)
            self._quiet_until = max(self._quiet_until, slot + gap * self.cycle)
        elif self.state == "verify":
            # the farewell pass ran against live traffic, so it proves
            # nothing; try again once the channel drains
            self._enter_cooldown(slot)

    def finish(self, slot):
        if self._update_round is not None:
            self._enter_wait(slot, self._update_round)
            self._update_round = None
            return
        if self.state == "bcast":
            self._advance_pass(slot)
            return
        if self.state == "wait":
            self.next_wake = slot + self.cycle
            if self.next_wake == self._bcast_start:
                self._enter_bcast()
            return
        if self.state == "probe":
            self._advance_probe(slot)
            return
        if self.state == "cooldown":
            if slot >= self._quiet_until:
                # the channel has stayed quiet: run a farewell pass from
                # a re-randomized rotation start
                rho = self.rng.randrange(self.cycle)
                self._bcast_start = slot + self.cycle + 1 + rho
                self.next_wake = self._bcast_start
                self._enter_bcast(p_tx=0.5)
                self._lone_pass = True
            else:
                self.next_wake = slot + self.cycle
            return
        if self.state == "verify":
            if slot >= self._verify_until:
                # the farewell ran and the channel stayed silent around it
                self._farewells += 1
                if self._farewells >= self.cfg.farewell_passes:
                    self.state = "listen"
                    self._set_done(True)
                    self.next_wake = slot + self.cycle
                else:
                    self._enter_cooldown(slot)
            else:
                self.next_wake = slot + self.cycle
            return
        # plain listening
        self.next_wake = slot + self.cycle
        self._maybe_probe(slot)

    # -- transitions ---------------------------------------------------

    def _enter_wait(self, slot, round_no):
        remaining = self.t - round_no
        if self.cfg.wait_timer == "rounds":
            wait = remaining * self.cycle
        else:
            wait = remaining
        expiry = slot + max(wait, 1)
        # first transmission lands on the first working slot past the timer
        self._bcast_start = slot + self.cycle * math.ceil((expiry - slot) / self.cycle)
        self.state = "wait"
        self._pass_no = 0
        self._quiet_streak = 0
        self._all_ackers = set()
        self._farewells = 0
        self.next_wake = slot + self.cycle
        if self.next_wake == self._bcast_start:
            self._enter_bcast()

    def _enter_bcast(self, p_tx=1.0):
        self.state = "bcast"
        self._round = 0
        self._pass_no += 1
        self._cur_ackers = set()
        self._lone_pass = False
        self._p_tx = p_tx
        self._tx_now = True  # the first slot of a pass always transmits

    def _coin(self):
        return self._p_tx >= 1.0 or self.rng.random() < self._p_tx

    def _advance_pass(self, slot):
        if not self._tx_now:
            # listen-only wake mid-pass: hold this offset, coin again
            self.next_wake = slot + self.cycle
            self._tx_now = self._coin()
            return
        if self._round < self.t:
            self._round += 1
            # step the rotation one offset; a retry pass may sit there
            # listening for a few cycles before it transmits
            self.next_wake = slot + self.cycle + 1
            self._tx_now = self._coin()
            return
        self._finish_pass(slot)

    def _finish_pass(self, slot):
        new = self._cur_ackers - self._all_ackers
        self._all_ackers |= self._cur_ackers
        lone = self._lone_pass
        self._lone_pass = False
        if new:
            self._quiet_streak = 0
            self._farewells = 0
        else:
            self._quiet_streak += 1
        if not new and lone:
            # a farewell counts only after a quiet listen-through; any
            # activity in the window voids it (see _heard_activity)
            self.state = "verify"
            self._verify_until = slot + (self.t + 1) * self.cycle
            self.next_wake = slot + self.cycle + 1
            return
        if not new and self._quiet_streak >= self.cfg.quiet_passes:
            # ackers have dried up: cooldown, then prove it with farewells
            self._enter_cooldown(slot)
            return
        # more work to do: another pass from a re-randomized rotation start
        rho = self.rng.randrange(self.cycle)
        self._bcast_start = slot + self.cycle + 1 + rho
        self.next_wake = self._bcast_start
        self._enter_bcast(p_tx=0.5)

    def _enter_cooldown(self, slot):
        gap = self.rng.randrange(self.t + 1, 2 * self.t + 3)  # in cycles
        self.state = "cooldown"
        self._quiet_until = slot + gap * self.cycle
        self.next_wake = slot + 1 + self.cycle

    def _maybe_probe(self, slot):
        if self.hop != NO_HOP or self.done:
            return
        if slot - self.last_heard < self.silence_window:
            return
        # run a full offset scan: transmit a probe each cycle, delaying one
        # slot per attempt so every neighbor offset is visited once
        self.state = "probe"
        self._probe_attempt = 0

    def _advance_probe(self, slot):
        self._probe_attempt += 1
        if self._probe_attempt <= self.t:
            self.next_wake = slot + self.cycle + 1
            return
        # one full scan came back empty
        self._scans_used += 1
        self.state = "listen"
        if self._scans_used >= self.cfg.probe_scans:
            self.unreachable = True
            self._set_done(True)
        else:
            self.last_heard = slot  # wait out a fresh silence window first
        self.next_wake = slot + self.cycle + 1


def build_topology(scenario: Scenario, cfg: TopoConfig | None = None,
                   max_slots: int | None = None, trace=None) -> TopoResult:
    cfg = cfg or TopoConfig()
    pending = Countdown()
    nodes = {
        p.node_id: TopoNode(p.node_id, p.offset, scenario.spec, cfg, scenario, pending)
        for p in scenario.nodes
    }
    sink = TopoSink(scenario.spec)
    if max_slots is None:
        t = scenario.spec.charge_slots
        window = probe_silence_window(scenario, cfg.max_hop)
        # probe scans, passes, and the worst case where every farewell
        # (cooldown, randomized pass, verify window) serializes behind
        # its neighbors' quiet requirements
        max_slots = (cfg.probe_scans + 1) * window \
            + (cfg.probe_scans + 4) * (t + 1) * (t + 2) \
            + len(scenario.nodes) * cfg.farewell_passes * 6 * (t + 1) * (t + 1)
    engine = Engine(scenario, nodes, sink, trace=trace)
    run = engine.run(max_slots, quiesced=lambda: pending.value == 0)
    topo_time = max((n.last_update for n in nodes.values()), default=-1)
    return TopoResult(
        hops={nid: n.hop for nid, n in nodes.items()},
        next_hops={nid: n.next_hop for nid, n in nodes.items()},
        known_lower={nid: dict(n.known_lower) for nid, n in nodes.items()},
        topo_time=topo_time,
        converged_at=run.last_slot if run.converged else None,
        unreachable={nid for nid, n in nodes.items() if n.unreachable},
        passes={nid: n._pass_no for nid, n in nodes.items()},
        run=run,
    )


def bfs_hops(scenario: Scenario) -> dict:
    """Reference least-hop counts over the disk graph, sink at hop 0."""
    pos = scenario.positions()
    ids = [p.node_id for p in scenario.nodes]
    hops = {nid: NO_HOP for nid in ids}
    frontier = [SINK]
    level = 0
    seen = {SINK}
    while frontier:
        level += 1
        nxt = []
        for nid in ids:
            if nid in seen:
                continue
            if any(
                math.dist(pos[nid], pos[f]) <= scenario.range_m for f in frontier
            ):
                hops[nid] = level
                nxt.append(nid)
        seen.update(nxt)
        frontier = nxt
    return hops


def verify_least_hop(result: TopoResult, scenario: Scenario) -> list:
    """Return human-readable discrepancies against the reference hops."""
    want = bfs_hops(scenario)
    pos = scenario.positions()
    problems = []
    for nid, hop in result.hops.items():
        if hop != want[nid]:
            problems.append(f"node {nid}: hop {hop} != least {want[nid]}")
            continue
        if hop == NO_HOP:
            continue
        parent = result.next_hops[nid]
        if parent is None:
            problems.append(f"node {nid}: no next hop")
            continue
        if math.dist(pos[nid], pos[parent]) > scenario.range_m:
            problems.append(f"node {nid}: next hop {parent} out of range")
            continue
        parent_hop = 0 if parent == SINK else result.hops.get(parent, NO_HOP)
        if parent_hop != hop - 1:
            problems.append(
                f"node {nid}: next hop {parent} has hop {parent_hop}, want {hop - 1}"
            )
    return problems
