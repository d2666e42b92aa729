"""Store-and-forward messaging over cached working-time alignment.

A node with traffic swings its working slot forward one position per
cycle until the next hop acks, then parks on the matched position and
drains its queue one message per cycle.  The swing amount is cached, so
later batches jump straight to the match; the reverse swing returns the
node to its original offset when the queue empties.

Receivers lock onto a sender for the duration of a marked batch, which
keeps two candidate relays from both adopting the same traffic: the
loser notices the sender naming the other node and quietly discards its
copy.  A matched next hop that stops acking for a full cycle of
attempts is treated as failed; recovery policy is pluggable (see
`CachedPolicy` here and the alternatives in `baselines`).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import (
    NO_HOP,
    SINK,
    AckFrame,
    ChargingSpec,
    DataFrame,
    Message,
    Scenario,
)
from .engine import Countdown, Engine, RunResult
from .radio import derive_rng_stream


@dataclass(frozen=True)
class ForwardingParams:
    queue_threshold: int = 1  # queued messages needed to take the sender role
    queue_cap: int = 16
    recovery_slack: int | None = None  # None: one full cycle

    def __post_init__(self):
        if not 1 <= self.queue_threshold <= self.queue_cap:
            raise ValueError("need 1 <= queue_threshold <= queue_cap")

    def slack(self, spec: ChargingSpec) -> int:
        return spec.cycle if self.recovery_slack is None else self.recovery_slack


def swing(base: int, amount: int, spec: ChargingSpec, direction: str = "forth") -> int:
    """Working offset after swinging by a cached amount, forth or back."""
    if not 0 <= base <= spec.charge_slots:
        raise ValueError(f"base offset {base} outside [0, {spec.charge_slots}]")
    if not 0 <= amount <= spec.cycle:
        raise ValueError(f"swing amount {amount} outside [0, {spec.cycle}]")
    forth = (base + amount) % spec.cycle
    if direction == "forth":
        return forth
    if direction == "back":
        return (forth + (spec.cycle - amount)) % spec.cycle
    raise ValueError(f"unknown swing direction {direction!r}")


def failure_recovery_wait(spec: ChargingSpec, params: ForwardingParams) -> int:
    """Slots a sender sits out after its matched next hop goes silent.

    Long enough for the dead node's own upstream traffic to drain or
    time out before the survivor rejoins the contention.
    """
    return spec.cycle * params.queue_cap + params.slack(spec)


class CachedPolicy:
    """Default strategy: scan once, cache the match, sit out failures."""

    name = "rics"

    def scan_target(self, node):
        return None  # opportunistic: first acking node downstream wins

    def after_batch(self, node):
        pass  # cache survives between batches

    def after_send(self, node, slot):
        pass  # one sync carries the whole session

    def on_scan_exhausted(self, node):
        pass

    def failure_wait(self, node):
        return failure_recovery_wait(node.spec, node.params)


@dataclass
class Delivery:
    origin: int
    seq: int
    created_at: int
    delivered_at: int
    hops: int
    path: tuple


class ForwardSink:
    """Always-awake terminus: acks anything addressed to it (or to nobody),
    records first arrivals, and absorbs duplicates silently."""

    def __init__(self, pending: Countdown):
        self.next_wake = 0
        self.seen = set()
        self.deliveries = []
        self.duplicates = 0
        self.pending = pending

    def poll(self, slot):
        return None

    def on_data(self, slot, frame):
        if not isinstance(frame, DataFrame):
            return None
        if frame.dst is not None and frame.dst != SINK:
            return None  # a handoff between nodes, not ours to ack
        key = (frame.origin, frame.seq)
        if key in self.seen:
            self.duplicates += 1
        else:
            self.seen.add(key)
            self.deliveries.append(Delivery(
                origin=frame.origin,
                seq=frame.seq,
                created_at=frame.created_at,
                delivered_at=slot,
                hops=len(frame.path),
                path=tuple(frame.path),
            ))
            self.pending.value -= 1
        return AckFrame(src=SINK, ack_dst=frame.src)

    def on_ack(self, slot, frame):
        return None

    def finish(self, slot):
        self.next_wake = slot + 1


class ForwardNode:
    """Sender/receiver state machine for one duty-cycled node."""

    def __init__(self, placement, spec, params, scenario, policy, hop,
                 rounds, pending: Countdown):
        self.id = placement.node_id
        self.base = placement.offset
        self.spec = spec
        self.params = params
        self.cycle = spec.cycle
        self.policy = policy
        self.hop = hop
        self.rounds = rounds
        self.pending = pending
        self.state = "recv"
        self.next_wake = placement.offset
        # sender side
        self.queue = deque()
        self.matched = False
        self.next_hop = None
        self.offset_cache = 0
        self.send_attempts = 0
        self.offset_forth = 0
        self.offset_back = 0
        self.batch_snapshot = 0
        self.scan_target = None
        self._batch_acked = False
        self._in_flight = None
        self._got_ack = False
        self._flew_end = False
        self._acker = None
        self._send_misses = 0
        self._hold_until = None
        # receiver side
        self.id_match = None
        self.time_wait = 0
        self.seen = set()
        self._go_sender = False
        # workload
        self.generated = 0
        # counters for tests and summaries
        self.scan_attempt_slots = []
        self.match_slots = []
        self.batches = 0
        self.dropped_full = 0
        self.stale_breaks = 0
        self.forced_exits = 0
        self.failures = 0

    # -- sender machinery ----------------------------------------------

    def poll(self, slot):
        if self.state not in ("scan", "send") or not self.queue:
            return None
        if self.state == "scan":
            self.send_attempts += 1
            self.offset_forth += 1
            self.offset_back = self.cycle - self.offset_forth
            self.batch_snapshot = len(self.queue)
            self.scan_attempt_slots.append(slot)
        msg = self.queue.popleft()
        self._in_flight = msg
        self._got_ack = False
        self._flew_end = not self.queue
        return DataFrame(
            src=self.id,
            dst=self.next_hop if self.state == "send" else self.scan_target,
            src_hop=self.hop,
            origin=msg.origin,
            seq=msg.seq,
            created_at=msg.created_at,
            is_start=not self._batch_acked,
            is_end=self._flew_end,
            path=msg.path,
        )

    def on_ack(self, slot, frame):
        if not isinstance(frame, AckFrame) or frame.ack_dst != self.id:
            return
        if self._in_flight is not None:
            self._got_ack = True
            self._acker = frame.src

    # -- receiver machinery --------------------------------------------

    def on_data(self, slot, frame):
        if not isinstance(frame, DataFrame):
            return None
        if self.state not in ("recv", "hold"):
            # a sender that happened not to transmit this slot stays deaf;
            # accepting here would strand the upstream node on an offset
            # we are about to leave
            return None
        if frame.src_hop <= self.hop:
            return None  # never accept traffic moving away from the sink
        if self.id_match is not None and frame.src != self.id_match:
            # locked: third parties get neither queue space nor acks, even
            # for frames that name us directly
            return None
        key = (frame.origin, frame.seq)
        if key in self.seen:
            # retransmit after a lost ack: ack again, queue nothing
            if frame.src == self.id_match:
                self.time_wait = 0
            return AckFrame(src=self.id, ack_dst=frame.src)
        legit = frame.dst == self.id or (frame.dst is None and self.id_match is None)
        if not legit:
            if frame.src == self.id_match and frame.dst != self.id:
                # our sender switched targets or lost its match: the lock
                # is stale, but every copy it already acked into our queue
                # is ours to carry onward
                self._break_stale_lock()
            return None
        if len(self.queue) >= self.params.queue_cap:
            self.dropped_full += 1
            return None  # no ack: the sender must retry later
        self.queue.append(Message(
            origin=frame.origin,
            seq=frame.seq,
            created_at=frame.created_at,
            path=tuple(frame.path) + (self.id,),
        ))
        self.seen.add(key)
        if frame.is_start:
            self.id_match = frame.src
            self.time_wait = 0
        elif frame.src == self.id_match:
            self.time_wait = 0
        if frame.is_end and frame.src == self.id_match:
            self.id_match = None
            self._go_sender = True
        return AckFrame(src=self.id, ack_dst=frame.src)

    def _break_stale_lock(self):
        self.stale_breaks += 1
        self.id_match = None
        self.time_wait = 0

    # -- workload ------------------------------------------------------

    def _generate(self, slot):
        # materialize scheduled readings up to now; a full queue defers
        # them (created_at keeps the scheduled slot either way)
        while self.generated < self.rounds:
            due = self.base + self.generated * self.cycle
            if due > slot or len(self.queue) >= self.params.queue_cap:
                break
            self.queue.append(Message(
                origin=self.id,
                seq=self.generated,
                created_at=due,
                path=(self.id,),
            ))
            self.generated += 1

    # -- per-slot wrap-up ----------------------------------------------

    def finish(self, slot):
        self._generate(slot)
        if self.state == "recv":
            self._finish_recv(slot)
        elif self.state == "scan":
            self._finish_scan(slot)
        elif self.state == "send":
            self._finish_send(slot)
        elif self.state == "hold":
            self._finish_hold(slot)
        else:
            raise AssertionError(f"unknown state {self.state}")

    def _finish_recv(self, slot):
        if self.id_match is not None:
            self.time_wait += 1
            if self.time_wait > self.cycle:
                # locked sender went quiet mid-batch: move what we have
                self.id_match = None
                self.forced_exits += 1
                self._go_sender = True
        want_sender = self._go_sender or (
            self.id_match is None
            and len(self.queue) >= self.params.queue_threshold
        )
        self._go_sender = False
        if want_sender and self.queue:
            self._enter_sender(slot)
        else:
            self.next_wake = slot + self.cycle

    def _enter_sender(self, slot):
        self.batches += 1
        self._batch_acked = False
        self._send_misses = 0
        if self.matched:
            self.state = "send"
            self.next_wake = slot + self.cycle + self.offset_cache
            return
        self.state = "scan"
        self.scan_target = self.policy.scan_target(self)
        self.send_attempts = 0
        self.offset_forth = 0
        self.offset_back = 0
        self.next_wake = slot + self.cycle + 1  # first try one slot late

    def _finish_scan(self, slot):
        if self._in_flight is None:
            # nothing flew: either the scan is exhausted or the queue
            # drained; swing back to the base offset
            self.state = "recv"
            back = (self.cycle - self.offset_forth % self.cycle) % self.cycle
            self.send_attempts = 0
            self.next_wake = slot + self.cycle + back
            return
        if self._got_ack:
            self._settle_match(slot)
            self.next_wake = slot + self.cycle  # stay on the matched offset
            self._in_flight = None
            self.policy.after_send(self, slot)
            return
        self.queue.append(self._in_flight)
        self._in_flight = None
        if self.send_attempts >= self.cycle:
            # full circle, nobody answered; swing back and listen a while
            self.state = "recv"
            back = (self.cycle - self.offset_forth % self.cycle) % self.cycle
            self.send_attempts = 0
            self.next_wake = slot + self.cycle + back
            self.policy.on_scan_exhausted(self)
        else:
            self.next_wake = slot + self.cycle + 1

    def _settle_match(self, slot):
        self.matched = True
        self.match_slots.append(slot)
        self.next_hop = self._acker
        self.offset_cache = self.offset_forth % self.cycle
        # an acked closing frame ends the batch; anything generated later
        # in this session opens a new one so receivers re-lock cleanly
        self._batch_acked = not self._flew_end
        self._send_misses = 0
        self.state = "send"

    def resync(self, slot):
        """Forget the live match and align again before the next message.

        The continuous-sync strategies call this after every delivered
        frame: the node stays a sender but rescans from its current
        residue with a fresh attempt budget, and the next frame opens a
        new batch.
        """
        displacement = self.offset_cache % self.cycle
        self.clear_match()
        self.state = "scan"
        self.scan_target = self.policy.scan_target(self)
        self.send_attempts = 0
        self.offset_forth = displacement
        self.offset_back = (self.cycle - displacement) % self.cycle
        self._batch_acked = False
        self.next_wake = slot + self.cycle + 1

    def _finish_send(self, slot):
        if self._in_flight is None:
            # queue empty: the batch is done, swing back to base
            self.state = "recv"
            back = (self.cycle - self.offset_cache) % self.cycle
            self.next_wake = slot + self.cycle + back
            self.policy.after_batch(self)
            return
        if self._got_ack:
            self._batch_acked = not self._flew_end
            self._send_misses = 0
            self.next_hop = self._acker
            self.next_wake = slot + self.cycle
            self._in_flight = None
            self.policy.after_send(self, slot)
            return
        self.queue.append(self._in_flight)
        self._send_misses += 1
        if self._send_misses >= self.cycle:
            self._matched_failure(slot)
        else:
            self.next_wake = slot + self.cycle
        self._in_flight = None

    def _matched_failure(self, slot):
        self.failures += 1
        wait = self.policy.failure_wait(self)
        back = (self.cycle - self.offset_cache) % self.cycle
        self.clear_match()
        self.next_wake = slot + self.cycle + back
        if wait > 0:
            self.state = "hold"
            self._hold_until = slot + wait
        else:
            self.state = "recv"

    def _finish_hold(self, slot):
        if slot >= self._hold_until:
            self.state = "recv"
            self._finish_recv(slot)
        else:
            self.next_wake = slot + self.cycle

    def clear_match(self):
        self.matched = False
        self.next_hop = None
        self.offset_cache = 0


@dataclass
class ForwardResult:
    deliveries: list
    created: int
    delivered: int
    duplicates: int
    undelivered: int
    dropped_full: int
    failures: int
    stale_breaks: int
    forced_exits: int
    scan_attempts: dict
    match_slots: dict
    generated_per_node: dict
    run: RunResult

    @property
    def latencies(self):
        return [d.delivered_at - d.created_at for d in self.deliveries]


def run_forwarding(scenario: Scenario, hops: dict, rounds: int = 1,
                   params: ForwardingParams | None = None,
                   policies: dict | None = None,
                   max_slots: int | None = None,
                   trace=None) -> ForwardResult:
    """Drive a full messaging run over an already-built hop field.

    `hops` maps node id to hop count (from the topology stage).
    `policies` maps node id to a strategy object; nodes default to the
    caching strategy.
    """
    params = params or ForwardingParams()
    if max_slots is None:
        t = scenario.spec.charge_slots
        depth = max((h for h in hops.values() if h != NO_HOP), default=1)
        max_slots = (rounds + 2 * depth + 40) * (t + 1) * (t + 1)
    pending = Countdown(len(scenario.nodes) * rounds)
    sink = ForwardSink(pending)
    default_policy = CachedPolicy()
    nodes = {}
    for p in scenario.nodes:
        policy = (policies or {}).get(p.node_id, default_policy)
        nodes[p.node_id] = ForwardNode(
            p, scenario.spec, params, scenario, policy,
            hop=hops.get(p.node_id, NO_HOP),
            rounds=rounds, pending=pending,
        )
    engine = Engine(scenario, nodes, sink, trace=trace)
    run = engine.run(max_slots, quiesced=lambda: pending.value == 0)
    created = sum(n.generated for n in nodes.values())
    return ForwardResult(
        deliveries=sink.deliveries,
        created=created,
        delivered=len(sink.deliveries),
        duplicates=sink.duplicates,
        undelivered=created - len(sink.deliveries),
        dropped_full=sum(n.dropped_full for n in nodes.values()),
        failures=sum(n.failures for n in nodes.values()),
        stale_breaks=sum(n.stale_breaks for n in nodes.values()),
        forced_exits=sum(n.forced_exits for n in nodes.values()),
        scan_attempts={nid: list(n.scan_attempt_slots) for nid, n in nodes.items()},
        match_slots={nid: list(n.match_slots) for nid, n in nodes.items()},
        generated_per_node={nid: n.generated for nid, n in nodes.items()},
        run=run,
    )
