"""Scenario generation, full runs, and file export.

A run has two phases on the same deployment: hop counts are built
first, then the clock restarts and every node pushes `rounds` messages
toward the sink under one of the named strategies.  Results land as a
per-message CSV plus a JSON summary, both written atomically so a
killed run never leaves half a file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass

from .baselines import STRATEGIES, build_policies
from .core import NO_HOP, SINK, ChargingSpec, NodePlacement, Scenario
from .forwarding import ForwardingParams, ForwardResult, run_forwarding
from .radio import EventTrace, derive_rng_stream, within_range
from .sync import expected_scan_latency
from .topology import TopoConfig, TopoResult, bfs_hops, build_topology

SHAPES = {"square": (45.0, 45.0), "rectangle": (40.0, 80.0)}
RADIO_RANGE_M = 10.0
MAX_PLACEMENT_TRIES = 1000
QUANTILES = (0.10, 0.50, 0.90, 0.99)

CSV_HEADER = ["msg_id", "src", "created_slot", "delivered_slot", "hops"]


class SparseAreaError(RuntimeError):
    """Raised when no connected placement shows up within the retry budget."""


@dataclass(frozen=True)
class ExperimentConfig:
    shape: str = "square"
    n_nodes: int = 50
    t: int = 50
    strategy: str = "rics"
    rounds: int = 2
    seed: int = 0
    slot_ms: float = 1.0
    range_m: float = RADIO_RANGE_M

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {sorted(SHAPES)}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.n_nodes < 1 or self.t < 1 or self.rounds < 1:
            raise ValueError("n_nodes, t and rounds must all be >= 1")
        if self.slot_ms <= 0 or self.range_m <= 0:
            raise ValueError("slot_ms and range_m must be positive")

    @property
    def dims(self) -> tuple[float, float]:
        return SHAPES[self.shape]

    @property
    def sink_xy(self) -> tuple[float, float]:
        # middle of an edge; for the rectangle, one of the shorter ones
        width, height = self.dims
        if width <= height:
            return (width / 2.0, 0.0)
        return (0.0, height / 2.0)

    def label(self) -> str:
        return (f"{self.shape}-n{self.n_nodes}-t{self.t}"
                f"-{self.strategy}-r{self.rounds}-s{self.seed}")


def generate_scenario(config: ExperimentConfig, rng=None) -> Scenario:
    """Drop nodes uniformly until the radio graph reaches everyone.

    Deterministic per seed; gives up with a diagnostic after
    MAX_PLACEMENT_TRIES disconnected draws.
    """
    if rng is None:
        rng = derive_rng_stream(config.seed, SINK, "scenario")
    width, height = config.dims
    spec = ChargingSpec(charge_slots=config.t)
    scenario = None
    for _ in range(MAX_PLACEMENT_TRIES):
        nodes = [
            NodePlacement(
                node_id=i,
                x=rng.uniform(0.0, width),
                y=rng.uniform(0.0, height),
                offset=rng.randint(0, config.t),
            )
            for i in range(config.n_nodes)
        ]
        scenario = Scenario(
            spec=spec, nodes=nodes, sink_xy=config.sink_xy,
            range_m=config.range_m, width=width, height=height,
            seed=config.seed, shape=config.shape,
        )
        if all(h != NO_HOP for h in bfs_hops(scenario).values()):
            return scenario
    degree = _mean_degree(scenario)
    raise SparseAreaError(
        f"area too sparse: no connected draw in {MAX_PLACEMENT_TRIES} tries "
        f"(n={config.n_nodes}, range={config.range_m}m, "
        f"area={width:g}x{height:g}m, mean degree={degree:.2f})")


def _mean_degree(scenario: Scenario) -> float:
    pos = scenario.positions()
    ids = list(pos)
    total = sum(
        1
        for i, a in enumerate(ids)
        for b in ids[i + 1:]
        if within_range(pos[a], pos[b], scenario.range_m)
    )
    return 2.0 * total / len(ids) if ids else 0.0


def message_workload(scenario: Scenario, rounds: int) -> dict:
    """Scheduled creation slots per node: one message per cycle."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    cycle = scenario.spec.cycle
    return {
        p.node_id: [p.offset + k * cycle for k in range(rounds)]
        for p in scenario.nodes
    }


def compute_cdf(delivery_times: list, created: int | None = None) -> list:
    """Empirical CDF as (latency, cumulative fraction) steps.

    `created` sets the denominator, so undelivered messages show up as
    the curve plateauing below 1.  An empty input yields an empty CDF.
    """
    if created is None:
        created = len(delivery_times)
    if not delivery_times:
        return []
    if created < len(delivery_times):
        raise ValueError("created count below delivered count")
    steps = []
    seen = 0
    last = None
    for value in sorted(delivery_times):
        if value == last:
            seen += 1
            steps[-1] = (value, seen / created)
        else:
            seen += 1
            steps.append((value, seen / created))
            last = value
    return steps


def quantile(values: list, q: float) -> float:
    if not values:
        raise ValueError("no values to take a quantile of")
    ordered = sorted(values)
    idx = max(0, math.ceil(q * len(ordered)) - 1)
    return ordered[idx]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    scenario: Scenario
    topo: TopoResult
    forward: ForwardResult
    trace: EventTrace | None = None

    def message_rows(self) -> list:
        """One row per created message, censored ones with blank tails."""
        by_key = {(d.origin, d.seq): d for d in self.forward.deliveries}
        offsets = self.scenario.offsets()
        cycle = self.scenario.spec.cycle
        rows = []
        for nid in sorted(self.forward.generated_per_node):
            for k in range(self.forward.generated_per_node[nid]):
                d = by_key.get((nid, k))
                rows.append([
                    f"{nid}-{k}",
                    nid,
                    offsets[nid] + k * cycle,
                    d.delivered_at if d else "",
                    d.hops if d else "",
                ])
        return rows

    def latencies(self) -> list:
        return self.forward.latencies

    def summary(self) -> dict:
        cfg = self.config
        lats = self.latencies()
        scale = cfg.slot_ms / 1000.0
        qs = {}
        qs_seconds = {}
        for q in QUANTILES:
            key = f"p{int(q * 100)}"
            if lats:
                qs[key] = quantile(lats, q)
                qs_seconds[key] = quantile(lats, q) * scale
            else:
                qs[key] = None
                qs_seconds[key] = None
        return {
            "config": asdict(cfg),
            "topo_time_slots": self.topo.topo_time,
            "topo_time_seconds": self.topo.topo_time * scale,
            "topo_converged": self.topo.run.converged,
            "created": self.forward.created,
            "delivered": self.forward.delivered,
            "undelivered": self.forward.undelivered,
            "duplicates": self.forward.duplicates,
            "delivery_quantiles_slots": qs,
            "delivery_quantiles_seconds": qs_seconds,
            "mean_sync_latency_slots": expected_scan_latency(self.scenario.spec),
            "collisions": {
                "topology": {
                    "data": self.topo.run.data_collisions,
                    "ack": self.topo.run.ack_collisions,
                },
                "forwarding": {
                    "data": self.forward.run.data_collisions,
                    "ack": self.forward.run.ack_collisions,
                },
            },
            "forward_converged": self.forward.run.converged,
            "last_slot": self.forward.run.last_slot,
        }

    def export(self, out_dir: str) -> list:
        """Write messages.csv, summary.json, topology.json (and the event
        log when tracing); returns the paths."""
        run_dir = os.path.join(out_dir, self.config.label())
        os.makedirs(run_dir, exist_ok=True)
        paths = []

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(self.message_rows())
        paths.append(_atomic_write(os.path.join(run_dir, "messages.csv"),
                                   buf.getvalue()))

        paths.append(_atomic_write(
            os.path.join(run_dir, "summary.json"),
            json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"))

        paths.append(_atomic_write(
            os.path.join(run_dir, "topology.json"),
            json.dumps(self.topo.to_dict(), indent=2, sort_keys=True) + "\n"))

        if self.trace is not None:
            lines = [
                json.dumps({"slot": e.slot, "node": e.node, "kind": e.kind,
                            **e.detail}, sort_keys=True)
                for e in self.trace.events
            ]
            paths.append(_atomic_write(os.path.join(run_dir, "trace.ndjson"),
                                       "\n".join(lines) + ("\n" if lines else "")))
        return paths


def _atomic_write(path: str, text: str) -> str:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def run_experiment(config: ExperimentConfig,
                   scenario: Scenario | None = None,
                   topo: TopoResult | None = None,
                   params: ForwardingParams | None = None,
                   topo_cfg: TopoConfig | None = None,
                   trace: bool = False) -> ExperimentResult:
    """One full two-phase run.

    `scenario` and `topo` can be passed in to reuse one deployment (and
    one topology build) across several strategies or workloads.
    """
    if scenario is None:
        scenario = generate_scenario(config)
    if topo is None:
        topo = build_topology(scenario, topo_cfg)
    event_log = EventTrace() if trace else None
    policies = build_policies(config.strategy, scenario, topo)
    forward = run_forwarding(
        scenario, topo.hops, rounds=config.rounds,
        params=params or ForwardingParams(),
        policies=policies, trace=event_log,
    )
    return ExperimentResult(config=config, scenario=scenario, topo=topo,
                            forward=forward, trace=event_log)
