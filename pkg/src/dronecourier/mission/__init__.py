from .machine import (
    AuthOutcome,
    IllegalTransitionError,
    MissionConfig,
    MissionEvent,
    MissionParams,
    MissionState,
    Outcome,
    ScanOutcome,
    TRANSITIONS,
    authenticate_recipient,
    execute_door_scan,
    plan_overpass,
    transition,
)
from .engine import MissionEngine, MissionResult, NullCloudLink, launch

__all__ = [
    "AuthOutcome", "IllegalTransitionError", "MissionConfig", "MissionEvent",
    "MissionParams", "MissionState", "Outcome", "ScanOutcome", "TRANSITIONS",
    "authenticate_recipient", "execute_door_scan", "plan_overpass", "transition",
    "MissionEngine", "MissionResult", "NullCloudLink", "launch",
]
