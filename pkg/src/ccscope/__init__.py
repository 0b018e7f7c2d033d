"""ccscope: low-overhead event-counter capture for large ccNUMA systems."""

from .engine import Engine, EngineError, SamplerState
from .events import (
    SENTINEL,
    EventDescriptor,
    EventKind,
    SampleFrame,
    Sensor,
    SensorDescriptor,
    compute_rates,
    elapsed_from_cycles,
    wait_cycle_percent,
    wrap_aware_delta,
)
from .numachip import Scenario, SimSensor, builtin_scenario, load_scenario
from .storage import Recording, RecordingWriter, read_recording
from .vmstat import VmstatSensor

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "EngineError",
    "EventDescriptor",
    "EventKind",
    "Recording",
    "RecordingWriter",
    "SampleFrame",
    "SamplerState",
    "Scenario",
    "SENTINEL",
    "Sensor",
    "SensorDescriptor",
    "SimSensor",
    "VmstatSensor",
    "builtin_scenario",
    "compute_rates",
    "elapsed_from_cycles",
    "load_scenario",
    "read_recording",
    "wait_cycle_percent",
    "wrap_aware_delta",
    "__version__",
]
