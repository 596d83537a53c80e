"""Delivery-lifecycle state machine and the pure per-phase decision logic.

The transition table is the single source of truth for which (state, event)
pairs are legal; the engine routes every state change through transition() so
an illegal move is a bug that surfaces immediately.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..geo import GeoPoint
from ..perception import ColorCode, FaceStream, match_color, next_face_sample


class MissionState(str, enum.Enum):
    AWAIT_DISPATCH = "await_dispatch"
    CONTAINER_LOCKING = "container_locking"
    FETCHING_PARAMS = "fetching_params"
    EN_ROUTE = "en_route"
    OBSTACLE_OVERPASS = "obstacle_overpass"
    LOCALITY_REACHED = "locality_reached"
    DESCENDING = "descending"
    DOOR_SCANNING = "door_scanning"
    AWAITING_AUTHENTICATION = "awaiting_authentication"
    UNLOCKED = "unlocked"
    RETURNING_TO_DEPOT = "returning_to_depot"
    CHARGING = "charging"
    COMPLETED = "completed"


class Outcome(str, enum.Enum):
    DELIVERED = "delivered"
    NOT_DELIVERED = "not_delivered"
    MISSED_DELIVERY = "missed_delivery"
    ABORTED = "aborted"


class MissionInput(str, enum.Enum):
    DISPATCH_RECEIVED = "dispatch_received"
    CONTAINER_LOCKED = "container_locked"
    PARAMS_FETCHED = "params_fetched"
    OBSTACLE_DETECTED = "obstacle_detected"
    OBSTACLE_CLEARED = "obstacle_cleared"
    GEOFENCE_ENTERED = "geofence_entered"
    DESCENT_STARTED = "descent_started"
    SCAN_ALTITUDE_REACHED = "scan_altitude_reached"
    DOOR_MATCHED = "door_matched"
    DOORS_EXHAUSTED = "doors_exhausted"
    AUTH_SUCCEEDED = "auth_succeeded"
    AUTH_TIMED_OUT = "auth_timed_out"
    DWELL_ELAPSED = "dwell_elapsed"
    BATTERY_RESERVE_LOW = "battery_reserve_low"
    BATTERY_EXHAUSTED = "battery_exhausted"
    CRASHED = "crashed"
    ARRIVED_AT_DEPOT = "arrived_at_depot"
    ARRIVED_NEEDS_CHARGE = "arrived_needs_charge"
    CHARGE_COMPLETE = "charge_complete"


S, E = MissionState, MissionInput

TRANSITIONS: dict[tuple[MissionState, MissionInput], MissionState] = {
    (S.AWAIT_DISPATCH, E.DISPATCH_RECEIVED): S.CONTAINER_LOCKING,
    (S.CONTAINER_LOCKING, E.CONTAINER_LOCKED): S.FETCHING_PARAMS,
    (S.FETCHING_PARAMS, E.PARAMS_FETCHED): S.EN_ROUTE,

    (S.EN_ROUTE, E.OBSTACLE_DETECTED): S.OBSTACLE_OVERPASS,
    (S.EN_ROUTE, E.GEOFENCE_ENTERED): S.LOCALITY_REACHED,
    (S.EN_ROUTE, E.BATTERY_RESERVE_LOW): S.RETURNING_TO_DEPOT,
    (S.EN_ROUTE, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.EN_ROUTE, E.CRASHED): S.COMPLETED,

    (S.OBSTACLE_OVERPASS, E.OBSTACLE_DETECTED): S.OBSTACLE_OVERPASS,
    (S.OBSTACLE_OVERPASS, E.OBSTACLE_CLEARED): S.EN_ROUTE,
    (S.OBSTACLE_OVERPASS, E.GEOFENCE_ENTERED): S.LOCALITY_REACHED,
    (S.OBSTACLE_OVERPASS, E.BATTERY_RESERVE_LOW): S.RETURNING_TO_DEPOT,
    (S.OBSTACLE_OVERPASS, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.OBSTACLE_OVERPASS, E.CRASHED): S.COMPLETED,

    (S.LOCALITY_REACHED, E.DESCENT_STARTED): S.DESCENDING,
    (S.LOCALITY_REACHED, E.BATTERY_RESERVE_LOW): S.RETURNING_TO_DEPOT,
    (S.LOCALITY_REACHED, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.LOCALITY_REACHED, E.CRASHED): S.COMPLETED,

    (S.DESCENDING, E.SCAN_ALTITUDE_REACHED): S.DOOR_SCANNING,
    (S.DESCENDING, E.BATTERY_RESERVE_LOW): S.RETURNING_TO_DEPOT,
    (S.DESCENDING, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.DESCENDING, E.CRASHED): S.COMPLETED,

    (S.DOOR_SCANNING, E.DOOR_MATCHED): S.AWAITING_AUTHENTICATION,
    (S.DOOR_SCANNING, E.DOORS_EXHAUSTED): S.RETURNING_TO_DEPOT,
    (S.DOOR_SCANNING, E.BATTERY_RESERVE_LOW): S.RETURNING_TO_DEPOT,
    (S.DOOR_SCANNING, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.DOOR_SCANNING, E.CRASHED): S.COMPLETED,

    (S.AWAITING_AUTHENTICATION, E.AUTH_SUCCEEDED): S.UNLOCKED,
    (S.AWAITING_AUTHENTICATION, E.AUTH_TIMED_OUT): S.RETURNING_TO_DEPOT,
    (S.AWAITING_AUTHENTICATION, E.BATTERY_RESERVE_LOW): S.RETURNING_TO_DEPOT,
    (S.AWAITING_AUTHENTICATION, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.AWAITING_AUTHENTICATION, E.CRASHED): S.COMPLETED,

    (S.UNLOCKED, E.DWELL_ELAPSED): S.RETURNING_TO_DEPOT,
    (S.UNLOCKED, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.UNLOCKED, E.CRASHED): S.COMPLETED,

    (S.RETURNING_TO_DEPOT, E.OBSTACLE_DETECTED): S.RETURNING_TO_DEPOT,
    (S.RETURNING_TO_DEPOT, E.ARRIVED_AT_DEPOT): S.COMPLETED,
    (S.RETURNING_TO_DEPOT, E.ARRIVED_NEEDS_CHARGE): S.CHARGING,
    (S.RETURNING_TO_DEPOT, E.BATTERY_EXHAUSTED): S.COMPLETED,
    (S.RETURNING_TO_DEPOT, E.CRASHED): S.COMPLETED,

    (S.CHARGING, E.CHARGE_COMPLETE): S.COMPLETED,
}


class IllegalTransitionError(Exception):
    def __init__(self, state: MissionState, event: MissionInput):
        self.state = state
        self.event = event
        super().__init__(f"no transition for event {event.value!r} in state {state.value!r}")


def transition(state: MissionState, event: MissionInput) -> MissionState:
    """Pure successor function; unknown (state, event) pairs raise, never no-op."""
    try:
        return TRANSITIONS[(state, event)]
    except KeyError:
        raise IllegalTransitionError(state, event) from None


@dataclass(frozen=True)
class MissionConfig:
    locality_radius_m: float = 6.0
    scan_altitude_m: float = 2.0
    overpass_margin_m: float = 5.0
    cruise_altitude_m: float = 30.0
    auth_timeout_s: float = 600.0
    face_threshold: float = 0.8
    unlock_dwell_s: float = 30.0
    battery_reserve_fraction: float = 0.2
    telemetry_period_s: float = 1.0
    # engine plumbing, not lifted from the workflow description
    look_ahead_m: float = 40.0
    corridor_width_m: float = 2.0
    arrival_radius_m: float = 0.5
    door_order: str = "stored"  # or "nearest"
    baro_sigma_m: float = 0.0
    image_retry_attempts: int = 3
    image_retry_spacing_s: float = 5.0
    max_mission_s: float = 3600.0

    def __post_init__(self):
        positive = ("locality_radius_m", "scan_altitude_m", "overpass_margin_m",
                    "cruise_altitude_m", "auth_timeout_s", "unlock_dwell_s",
                    "telemetry_period_s", "look_ahead_m", "corridor_width_m",
                    "arrival_radius_m", "image_retry_spacing_s", "max_mission_s")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not (0.0 < self.face_threshold <= 1.0):
            raise ValueError("face_threshold must be in (0, 1]")
        if not (0.0 <= self.battery_reserve_fraction < 1.0):
            raise ValueError("battery_reserve_fraction must be in [0, 1)")
        if self.door_order not in ("stored", "nearest"):
            raise ValueError(f"unknown door_order {self.door_order!r}")

    def with_overrides(self, overrides: dict) -> "MissionConfig":
        known = {k: v for k, v in overrides.items() if hasattr(self, k)}
        unknown = set(overrides) - set(known)
        if unknown:
            raise ValueError(f"unknown mission config keys: {sorted(unknown)}")
        from dataclasses import replace
        return replace(self, **known)


@dataclass(frozen=True)
class MissionParams:
    delivery_id: str
    destination: GeoPoint
    expected_color_code: ColorCode
    face_image_ref: str
    building_id: str

    def validate(self) -> None:
        missing = [name for name in ("delivery_id", "face_image_ref", "building_id")
                   if not getattr(self, name)]
        if missing:
            raise ValueError(f"mission params incomplete: {missing}")


@dataclass(frozen=True)
class MissionEvent:
    tick: int
    seq: int
    sim_time_s: float
    state: str
    kind: str
    payload: dict


def plan_overpass(detection, current_altitude_m: float, config: MissionConfig) -> float:
    """Altitude to hold while clearing a detected obstacle."""
    return max(current_altitude_m, detection.est_height_m + config.overpass_margin_m)


# --- door scan (color-code localization) -------------------------------------

class ScanOutcome(str, enum.Enum):
    FOUND = "found"
    NOT_FOUND = "not_found"


@dataclass
class ScanResult:
    outcome: ScanOutcome
    door: Optional[object] = None
    scans: int = 0
    image: Optional[bytes] = None


class CloudUnreachableError(Exception):
    """Transient cloud failure; door scan retries before giving up."""


def execute_door_scan(doors, expected: ColorCode,
                      visit: Callable,
                      notify: Callable[[str], None],
                      request_image: Callable[[], bytes],
                      wait: Callable[[float], None] = lambda s: None,
                      log: Callable[[str, dict], None] = lambda kind, payload: None,
                      retry_attempts: int = 3,
                      retry_spacing_s: float = 5.0) -> ScanResult:
    """Visit doors in order, scanning each at most once, until the expected code matches.

    visit(door) positions the drone and returns the observed ColorCode (or
    None). On a match the recipient is notified and their reference image is
    fetched with a bounded retry; fetch failure downgrades the result to
    NOT_FOUND with a distinct log event.
    """
    scans = 0
    for door in doors:
        observed = visit(door)
        scans += 1
        log("door_scanned", {"door_id": door.id,
                             "observed_index": None if observed is None else observed.index})
        if observed is not None and match_color(observed, expected):
            notify("Accept Delivery")
            image = None
            for attempt in range(1, retry_attempts + 1):
                try:
                    image = request_image()
                    break
                except CloudUnreachableError:
                    log("image_request_failed", {"attempt": attempt})
                    if attempt < retry_attempts:
                        wait(retry_spacing_s)
            if image is None:
                log("image_request_abandoned", {"attempts": retry_attempts})
                notify("Missed delivery")
                return ScanResult(ScanOutcome.NOT_FOUND, scans=scans)
            return ScanResult(ScanOutcome.FOUND, door=door, scans=scans, image=image)
    notify("Missed delivery")
    return ScanResult(ScanOutcome.NOT_FOUND, scans=scans)


# --- recipient authentication -------------------------------------------------

class AuthOutcome(str, enum.Enum):
    DELIVERED = "delivered"
    NOT_DELIVERED = "not_delivered"


class TickClock:
    """Elapsed-time source advanced in fixed dt steps; the engine subclasses
    this to interleave physics with the authentication loop."""

    def __init__(self, dt_s: float):
        self.dt_s = dt_s
        self.ticks = 0

    @property
    def elapsed_s(self) -> float:
        return self.ticks * self.dt_s

    def step(self) -> None:
        self.ticks += 1


def authenticate_recipient(stream: FaceStream, config: MissionConfig,
                           clock: TickClock,
                           servo: Callable[[str], bool],
                           notify: Callable[[str], None] = lambda kind: None,
                           log: Callable[[str, dict], None] = lambda kind, payload: None,
                           on_unlocked: Callable[[], None] = lambda: None
                           ) -> AuthOutcome:
    """Poll the face stream until a confident match or the hard deadline.

    The deadline check runs every tick and strictly precedes the match check,
    so a face arriving exactly at the timeout is rejected. A confident match
    opens the container for exactly the configured dwell, then closes it;
    on_unlocked fires between the two so the caller can track the open window.
    """
    while True:
        elapsed = clock.elapsed_s
        if elapsed >= config.auth_timeout_s:
            log("auth_timeout", {"elapsed_s": elapsed, "reason": "timeout"})
            notify("Not delivered")
            return AuthOutcome.NOT_DELIVERED
        confidence = next_face_sample(stream, elapsed)
        if confidence is not None:
            log("face_sample", {"confidence": confidence, "elapsed_s": elapsed})
            if confidence >= config.face_threshold:
                if not _servo_with_retry(servo, "open", log):
                    log("auth_timeout", {"elapsed_s": elapsed, "reason": "servo_failure"})
                    notify("Not delivered")
                    return AuthOutcome.NOT_DELIVERED
                log("servo", {"action": "open"})
                on_unlocked()
                dwell_ticks = round(config.unlock_dwell_s / clock.dt_s)
                for _ in range(dwell_ticks):
                    clock.step()
                _servo_with_retry(servo, "close", log)
                log("servo", {"action": "close"})
                notify("Delivered")
                return AuthOutcome.DELIVERED
        clock.step()


def _servo_with_retry(servo: Callable[[str], bool], action: str,
                      log: Callable[[str, dict], None]) -> bool:
    for attempt in (1, 2):
        if servo(action):
            return True
        log("servo_failure", {"action": action, "attempt": attempt})
    return False
