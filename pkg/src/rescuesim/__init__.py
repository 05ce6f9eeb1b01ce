"""Teleoperated tracked rescue-robot simulator.

Deterministic fixed-step missions over heightmap terrain: a flippered
skid-steer chassis with quasi-static stability checks, a 6-DOF arm,
environment sensors, a stub object detector feeding the metric pipeline,
and a v1 wire protocol for live operator consoles.
"""

from .scenario import (
    MissionGoal,
    Scenario,
    SceneObject,
    ScenarioError,
    load_scenario,
    validate_scenario,
)
from .sim import (
    MissionResult,
    ReplayMismatchError,
    Simulation,
    TickLog,
    parse_command_stream,
    replay,
    run_mission,
)
from .service import RobotService

__version__ = "0.1.0"

__all__ = [
    "MissionGoal",
    "MissionResult",
    "ReplayMismatchError",
    "RobotService",
    "Scenario",
    "SceneObject",
    "ScenarioError",
    "Simulation",
    "TickLog",
    "load_scenario",
    "parse_command_stream",
    "replay",
    "run_mission",
    "validate_scenario",
    "__version__",
]
