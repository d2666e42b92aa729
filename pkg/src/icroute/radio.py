"""Unit-disk propagation, sub-slot jitter arbitration, and seeded RNG streams.

Every transmission in a slot carries a jitter drawn from [0, micro_slots).
An awake listener decodes the in-range frame with the strictly smallest
jitter; a shared minimum destroys all of them for that listener.  The rule
is a pure function of its inputs, which keeps whole runs reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

COLLISION = object()  # decode result marker: energy heard, nothing decoded


@dataclass(frozen=True)
class RadioConfig:
    micro_slots: int = 16

    def __post_init__(self):
        if self.micro_slots < 2:
            raise ValueError("micro_slots must be >= 2")


def within_range(a: tuple[float, float], b: tuple[float, float], range_m: float) -> bool:
    """Boundary-inclusive unit-disk test."""
    return math.dist(a, b) <= range_m


def resolve_slot(transmissions, listeners, positions, range_m):
    """Arbitrate one contention phase of a slot.

    transmissions: list of (frame, jitter) with frame.src identifying the
    transmitter.  listeners: iterable of node ids.  Returns a dict mapping
    each listener to a decoded frame, COLLISION, or None.  A node that
    transmitted in this phase never decodes in it (half duplex); callers
    normally exclude transmitters from `listeners`, and the guard here
    backs them up.
    """
    tx_ids = {f.src for f, _ in transmissions}
    out = {}
    for lid in listeners:
        if lid in tx_ids:
            out[lid] = None
            continue
        lpos = positions[lid]
        best = None
        best_jitter = None
        tied = False
        for frame, jitter in transmissions:
            if not within_range(positions[frame.src], lpos, range_m):
                continue
            if best_jitter is None or jitter < best_jitter:
                best, best_jitter, tied = frame, jitter, False
            elif jitter == best_jitter:
                tied = True
        if best is None:
            out[lid] = None
        elif tied:
            out[lid] = COLLISION
        else:
            out[lid] = best
    return out


def _mix64(*parts) -> int:
    """Stable 64-bit mix of seed material; independent of PYTHONHASHSEED."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, str):
            h.update(p.encode())
        else:
            h.update(int(p).to_bytes(16, "little", signed=True))
        h.update(b"|")
    return int.from_bytes(h.digest(), "little")


def derive_rng_stream(seed: int, node: int, purpose: str) -> random.Random:
    """Independent deterministic stream for one (node, purpose) pair.

    Draws from one stream never perturb any other, so adding a consumer
    cannot silently reshuffle an unrelated part of a run.
    """
    return random.Random(_mix64(seed, node, purpose))


@dataclass
class TraceEvent:
    slot: int
    node: int
    kind: str
    detail: dict = field(default_factory=dict)


class EventTrace:
    """Optional per-run event log, dumpable as NDJSON."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.events: list[TraceEvent] = []

    def add(self, slot, node, kind, **detail):
        if self.enabled:
            self.events.append(TraceEvent(slot, node, kind, detail))

    def filter(self, kind=None, node=None):
        return [
            e
            for e in self.events
            if (kind is None or e.kind == kind) and (node is None or e.node == node)
        ]

    def dump_ndjson(self, path):
        with open(path, "w") as fh:
            for e in self.events:
                fh.write(
                    json.dumps(
                        {"slot": e.slot, "node": e.node, "kind": e.kind, **e.detail},
                        sort_keys=True,
                    )
                )
                fh.write("\n")
