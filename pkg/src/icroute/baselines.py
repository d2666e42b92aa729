"""Alternative next-hop selection strategies for comparison runs.

The default (`rics`) scans once, caches the matched offset, and backs
off on failure.  The alternatives trade that cache away in different
directions:

- `fxcs` keeps a fixed next hop from the topology stage but never keeps
  the matched offset: every message pays a fresh alignment scan.
- `rncs` also realigns for every message, drawing the target uniformly
  from the known lower-hop neighbors each time.
- `otps` caches like the default but aims its scans at one designated
  neighbor first, falling back to whoever answers only after a whole
  attempt window comes back empty; on a dead next hop it rescans at
  once instead of sitting out the recovery wait.
"""

from __future__ import annotations

from .core import NO_HOP, SINK, Scenario
from .forwarding import CachedPolicy
from .radio import derive_rng_stream


class ContinuousSyncPolicy:
    """Shared machinery for the no-cache strategies: after every
    delivered frame the node realigns before sending the next one."""

    def after_batch(self, node):
        node.clear_match()

    def after_send(self, node, slot):
        if node.queue:
            node.resync(slot)

    def on_scan_exhausted(self, node):
        pass

    def failure_wait(self, node):
        return 0


class FixedHopPolicy(ContinuousSyncPolicy):
    """Realign toward one permanent next hop for every message."""

    name = "fxcs"

    def __init__(self, target: int):
        if target is None:
            raise ValueError("fixed strategy needs a resolved next hop")
        self.target = target

    def scan_target(self, node):
        return self.target


class RandomHopPolicy(ContinuousSyncPolicy):
    """Redraw the target uniformly for every alignment scan."""

    name = "rncs"

    def __init__(self, candidates: list, rng):
        if not candidates:
            raise ValueError("random strategy needs lower-hop neighbors")
        self.candidates = sorted(candidates)
        self.rng = rng

    def scan_target(self, node):
        return self.rng.choice(self.candidates)


class OpportunisticPolicy(CachedPolicy):
    """Cache like the default, but court one designated neighbor first.

    Scans are directed at the node handed over by the topology stage;
    only after a full attempt window with no answer does the policy go
    opportunistic and accept the first acking neighbor.  Failures skip
    the recovery wait and probe again immediately.
    """

    name = "otps"

    def __init__(self, designated: int | None):
        self.designated = designated
        self.fallback = designated is None

    def scan_target(self, node):
        if self.fallback or node.failures > 0:
            return None
        return self.designated

    def on_scan_exhausted(self, node):
        self.fallback = True

    def failure_wait(self, node):
        return 0


def lower_hop_neighbors(nid: int, topo) -> list:
    """In-range neighbors the node has heard that sit closer to the sink."""
    mine = topo.hops.get(nid, NO_HOP)
    out = []
    for peer in topo.known_lower.get(nid, {}):
        peer_hop = 0 if peer == SINK else topo.hops.get(peer, NO_HOP)
        if peer_hop < mine:
            out.append(peer)
    return out


def build_policies(strategy: str, scenario: Scenario, topo) -> dict:
    """Per-node policy objects for one named strategy."""
    if strategy == "rics":
        shared = CachedPolicy()
        return {p.node_id: shared for p in scenario.nodes}
    if strategy == "otps":
        return {p.node_id: OpportunisticPolicy(topo.next_hops.get(p.node_id))
                for p in scenario.nodes}
    if strategy == "fxcs":
        return {p.node_id: FixedHopPolicy(topo.next_hops.get(p.node_id))
                for p in scenario.nodes}
    if strategy == "rncs":
        return {
            p.node_id: RandomHopPolicy(
                lower_hop_neighbors(p.node_id, topo),
                derive_rng_stream(scenario.seed, p.node_id, "strategy"),
            )
            for p in scenario.nodes
        }
    raise ValueError(f"unknown strategy {strategy!r}")


STRATEGIES = ("rics", "fxcs", "rncs", "otps")
