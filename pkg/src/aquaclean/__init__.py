"""Discrete-event simulator of a waste-collecting robotic fish fleet.

Fish offload image classification to MEC servers, then the cloud, and
fall back to a slow onboard biosensor. A buoyancy model gates every
collection cycle.
"""
from .engine import RunResult, replay_check, run, run_config
from .world import ConfigInvalid, build_world, default_config, load_config, validate_config

__version__ = "0.1.0"

__all__ = [
    "ConfigInvalid",
    "RunResult",
    "build_world",
    "default_config",
    "load_config",
    "replay_check",
    "run",
    "run_config",
    "validate_config",
]
