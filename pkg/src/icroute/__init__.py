"""Routing protocols and a slot simulator for intermittently powered nodes."""

from .core import (
    SINK,
    ChargingSpec,
    Message,
    NodePlacement,
    Scenario,
    cycle_length,
    delay_offset,
    is_working,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    compute_cdf,
    generate_scenario,
    run_experiment,
)
from .forwarding import ForwardingParams, run_forwarding
from .sync import closed_form_latency, expected_scan_latency
from .topology import build_topology, verify_least_hop

__all__ = [
    "SINK",
    "ChargingSpec",
    "ExperimentConfig",
    "ExperimentResult",
    "ForwardingParams",
    "Message",
    "NodePlacement",
    "Scenario",
    "build_topology",
    "closed_form_latency",
    "compute_cdf",
    "cycle_length",
    "delay_offset",
    "expected_scan_latency",
    "generate_scenario",
    "is_working",
    "run_experiment",
    "run_forwarding",
    "verify_least_hop",
]

__version__ = "0.1.0"
