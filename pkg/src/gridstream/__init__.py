"""Packet-level drone-to-Wi-Fi-grid streaming simulator."""

from .engine import EventLoop, RngStreams, SchedulingError
from .fec import ErasureCodec, UnrecoverableBlockError
from .headtrace import HeadTrace, TraceError
from .messages import Ack, DronePose, Frame, HeadSample, Packet, Setpoint
from .metrics import MetricsAggregator, MetricsReport
from .radio import Radio, RadioModel, Uplink, UplinkModel
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict
from .simulation import Simulation

__version__ = "0.1.0"

__all__ = [
    "Ack",
    "DronePose",
    "ErasureCodec",
    "EventLoop",
    "Frame",
    "HeadSample",
    "HeadTrace",
    "MetricsAggregator",
    "MetricsReport",
    "Packet",
    "Radio",
    "RadioModel",
    "RngStreams",
    "Scenario",
    "ScenarioError",
    "SchedulingError",
    "Setpoint",
    "Simulation",
    "TraceError",
    "UnrecoverableBlockError",
    "Uplink",
    "UplinkModel",
    "load_scenario",
    "scenario_from_dict",
    "__version__",
]
