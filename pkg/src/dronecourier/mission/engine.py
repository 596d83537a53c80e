"""Tick-driven mission executor.

Within each tick the concurrent flight duties observe one pre-tick snapshot
and apply their effects in a fixed order (sense -> plan -> act -> report), so
the run is deterministic regardless of host threading. Telemetry is
fire-and-forget: cloud failures are logged, never allowed to stall the loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .. import seeding
from ..geo import GeoPoint, haversine_distance, initial_bearing, within_radius
from ..perception import Detector, FaceStream, scan_door
from ..worldsim import (DroneState, FlightCommand, GpsSensor, Scenario,
                        colliding_obstacle, obstacles_ahead, sample_altitude,
                        step_drone)
from .machine import (AuthOutcome, CloudUnreachableError, MissionConfig,
                      MissionEvent, MissionInput, MissionParams, MissionState,
                      Outcome, ScanOutcome, TickClock, authenticate_recipient,
                      execute_door_scan, plan_overpass, transition)

E = MissionInput

AIRBORNE_STATES = frozenset({
    MissionState.EN_ROUTE, MissionState.OBSTACLE_OVERPASS,
    MissionState.LOCALITY_REACHED, MissionState.DESCENDING,
    MissionState.DOOR_SCANNING, MissionState.AWAITING_AUTHENTICATION,
    MissionState.UNLOCKED, MissionState.RETURNING_TO_DEPOT,
})

RESERVE_STATES = frozenset({
    MissionState.EN_ROUTE, MissionState.OBSTACLE_OVERPASS,
    MissionState.LOCALITY_REACHED, MissionState.DESCENDING,
    MissionState.DOOR_SCANNING, MissionState.AWAITING_AUTHENTICATION,
})

# A false-positive detection with no physical footprint expires this long after
# its last sighting.
FP_CLEAR_S = 5.0


class LaunchRejected(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class MissionRuntimeError(RuntimeError):
    """Scenario misconfiguration surfaced at run time (e.g. mission overtime)."""


class _ReserveLow(Exception):
    pass


class _Exhausted(Exception):
    pass


class _Crashed(Exception):
    def __init__(self, obstacle_id: str):
        self.obstacle_id = obstacle_id


class NullCloudLink:
    """Stand-in cloud for engine-only runs: accepts everything, stores nothing."""

    def fetch_face_image(self, delivery_id: str) -> bytes:
        return b""

    def notify(self, delivery_id: str, kind: str) -> None:
        pass

    def push_telemetry(self, sample: dict) -> None:
        pass

    def report_status(self, delivery_id: str, outcome: str) -> None:
        pass

    def report_launch_failure(self, delivery_id: str, reason: str) -> None:
        pass


@dataclass(frozen=True)
class TickSnapshot:
    tick: int
    lat: float
    lon: float
    alt: float
    battery_j: float
    state: str
    overpass_targets: dict


@dataclass
class MissionResult:
    scenario: str
    seed: int
    outcome: Outcome
    final_state: MissionState
    events: list[MissionEvent]
    duration_s: float
    distance_m: float
    energy_j: float
    notifications: list[str]
    disposition: str
    never_launched: bool
    final_position: GeoPoint
    dt_s: float
    trace: list[TickSnapshot] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        return [event_record_line(e) for e in self.events]

    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log_lines())


def event_record_line(event: MissionEvent) -> str:
    record = {
        "tick": event.tick,
        "sim_time_s": event.sim_time_s,
        "state": event.state,
        "event_kind": event.kind,
        "payload": event.payload,
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class _AuthClock(TickClock):
    """Clock whose step() runs one hovering physics tick of the engine."""

    def __init__(self, engine: "MissionEngine"):
        super().__init__(engine.world.dt_s)
        self.engine = engine
        self._start_tick = engine.tick

    @property
    def elapsed_s(self) -> float:
        return (self.engine.tick - self._start_tick) * self.dt_s

    def step(self) -> None:
        self.engine._hover_tick()


class MissionEngine:
    def __init__(self, scenario: Scenario, params: MissionParams,
                 config: MissionConfig, cloud, seed: int,
                 record_trace: bool = False,
                 servo: Optional[Callable[[str], bool]] = None,
                 face_stream: Optional[FaceStream] = None):
        self.scenario = scenario
        self.world = scenario.world
        self.limits = scenario.limits
        self.power = scenario.power
        self.params = params
        self.config = config
        self.cloud = cloud
        self.seed = seed
        self.record_trace = record_trace
        self.servo = servo or (lambda action: True)
        self.face_stream = face_stream or scenario.make_face_stream()

        self._gps = GpsSensor(scenario.gps, seeding.stream(seed, "gps"))
        self._baro_rng = seeding.stream(seed, "baro")
        self._detector = Detector(scenario.detector, seeding.stream(seed, "detector"),
                                  self.world.dt_s)
        self._scan_rng = seeding.stream(seed, "scan")

        battery = scenario.initial_battery_j
        if battery is None:
            battery = scenario.power.battery_capacity_j
        self.drone = DroneState(position=self.world.depot, battery_j=battery)

        self.tick = 0
        self.seq = 0
        self.state = MissionState.AWAIT_DISPATCH
        self.events: list[MissionEvent] = []
        self.trace: list[TickSnapshot] = []
        self.notifications: list[str] = []
        self.outcome: Optional[Outcome] = None
        self.disposition = "await_dispatch"

        self._fix: GeoPoint = self.world.depot
        self._baro_alt = self.world.depot.alt
        self._sensed_tick = -1
        self._tick_detections: list = []
        self._truth_ahead_ids: set[str] = set()
        # obstacle_id -> [target_alt, last_seen_tick]
        self._active_overpass: dict[str, list] = {}
        self._tel_anchor: Optional[int] = None
        self._distance_m = 0.0
        self._energy_j = 0.0
        self._reserve_tripped = False

        self._dt = self.world.dt_s
        self._tel_period_ticks = max(1, round(config.telemetry_period_s / self._dt))
        self._fp_clear_ticks = max(1, round(FP_CLEAR_S / self._dt))
        self._max_ticks = round(config.max_mission_s / self._dt)
        self._obstacle_by_id = {o.id: o for o in self.world.obstacles}
        # optional real-time pacer for live-tracking demos; called after each tick
        self.tick_hook: Optional[Callable[[int], None]] = None

    # --- logging ---------------------------------------------------------

    @property
    def now_s(self) -> float:
        return round(self.tick * self._dt, 9)

    def _log(self, kind: str, payload: dict) -> None:
        self.events.append(MissionEvent(self.tick, self.seq, self.now_s,
                                        self.state.value, kind, payload))
        self.seq += 1

    def _transition(self, event: MissionInput, payload: Optional[dict] = None) -> None:
        new = transition(self.state, event)
        record = {"event": event.value, "from": self.state.value, "to": new.value}
        if payload:
            record.update(payload)
        self.state = new
        self._log("state_transition", record)

    def _notify(self, kind: str) -> None:
        self.notifications.append(kind)
        self._log("notification", {"kind": kind})
        try:
            self.cloud.notify(self.params.delivery_id, kind)
        except Exception as exc:
            self._log("cloud_error", {"op": "notify", "error": str(exc)})

    # --- sensing / acting --------------------------------------------------

    def _sense(self) -> list:
        if self._sensed_tick == self.tick:
            return self._tick_detections
        self._sensed_tick = self.tick
        now = self.tick * self._dt
        self._fix = self._gps.sample(self.drone.position, now)
        self._baro_alt = sample_altitude(self.drone, self.config.baro_sigma_m,
                                         self._baro_rng)
        look = min(self.config.look_ahead_m, self.scenario.detector.max_range_m)
        truth = obstacles_ahead(self.world, self.drone, look, t=now,
                                corridor_width_m=self.config.corridor_width_m)
        self._truth_ahead_ids = {o.id for o in truth}
        detections = self._detector.observe(truth, self.tick)
        for det in detections:
            self._log("detection_handled", {
                "obstacle_id": det.obstacle_id,
                "est_height_m": round(det.est_height_m, 6),
                "detected_at": det.detected_at,
            })
        self._tick_detections = detections
        return detections

    def _advance(self, command: FlightCommand) -> None:
        prev = self.drone
        self.drone = step_drone(prev, command, self.world, self.power, self.limits)
        horizontal = haversine_distance(prev.position, self.drone.position)
        self._distance_m += math.hypot(horizontal,
                                       self.drone.position.alt - prev.position.alt)
        self._energy_j += prev.battery_j - self.drone.battery_j

        self._maybe_telemetry()
        if self.record_trace:
            self.trace.append(TickSnapshot(
                self.tick, self.drone.position.lat, self.drone.position.lon,
                self.drone.position.alt, self.drone.battery_j, self.state.value,
                {k: v[0] for k, v in self._active_overpass.items()}))

        # crash/exhaustion are flight events; a parked drone cannot crash
        if self.state in AIRBORNE_STATES:
            hit = colliding_obstacle(self.world, self.drone.position,
                                     t=self.tick * self._dt)
            if hit is not None:
                self._log("crash", {"obstacle_id": hit.id})
                raise _Crashed(hit.id)
            if self.drone.exhausted:
                raise _Exhausted()
        fraction = self.drone.battery_j / self.power.battery_capacity_j
        if (not self._reserve_tripped and self.state in RESERVE_STATES
                and fraction < self.config.battery_reserve_fraction):
            self._reserve_tripped = True
            raise _ReserveLow()

        self.tick += 1
        if self.tick_hook is not None:
            self.tick_hook(self.tick)
        if self.tick > self._max_ticks:
            raise MissionRuntimeError(
                f"mission exceeded max_mission_s={self.config.max_mission_s}")

    def _maybe_telemetry(self) -> None:
        if self.state not in AIRBORNE_STATES:
            return
        if self._tel_anchor is None:
            self._tel_anchor = self.tick
        if (self.tick - self._tel_anchor) % self._tel_period_ticks != 0:
            return
        fraction = self.drone.battery_j / self.power.battery_capacity_j
        sample = {
            "delivery_id": self.params.delivery_id,
            "t": self.now_s,
            "lat": self._fix.lat,
            "lon": self._fix.lon,
            "alt": round(self._baro_alt, 9),
            "battery": round(fraction, 9),
            "state": self.state.value,
        }
        self._log("telemetry", {"t": sample["t"], "battery": sample["battery"]})
        try:
            self.cloud.push_telemetry(sample)
        except Exception as exc:
            self._log("cloud_error", {"op": "telemetry", "error": str(exc)})

    def _ground_tick(self) -> None:
        self._advance(FlightCommand())

    def _hover_tick(self) -> None:
        self._sense()
        self._handle_detections(transitions=False)
        self._advance(FlightCommand(0.0, self.drone.heading_deg,
                                    self._alt_rate(self.drone.position.alt)))

    def _alt_rate(self, target_alt: float) -> float:
        dalt = target_alt - self.drone.position.alt
        return max(-self.limits.max_v_speed_ms,
                   min(dalt / self._dt, self.limits.max_v_speed_ms))

    # --- overpass bookkeeping ----------------------------------------------

    def _handle_detections(self, transitions: bool) -> None:
        new_ids = []
        for det in self._tick_detections:
            target = plan_overpass(det, self.drone.position.alt, self.config)
            entry = self._active_overpass.get(det.obstacle_id)
            if entry is None:
                self._active_overpass[det.obstacle_id] = [target, self.tick]
                new_ids.append(det.obstacle_id)
            else:
                entry[0] = max(entry[0], target)
                entry[1] = self.tick
        if new_ids and transitions:
            self._transition(E.OBSTACLE_DETECTED, {"obstacle_ids": new_ids})
        self._prune_cleared(transitions)

    def _prune_cleared(self, transitions: bool) -> None:
        now = self.tick * self._dt
        cleared = []
        for oid, (target, last_seen) in list(self._active_overpass.items()):
            obstacle = self._obstacle_by_id.get(oid)
            if obstacle is None:
                if self.tick - last_seen > self._fp_clear_ticks:
                    cleared.append(oid)
            else:
                outside = haversine_distance(
                    self.drone.position, obstacle.position_at(now)) > obstacle.radius_m
                if outside and oid not in self._truth_ahead_ids:
                    cleared.append(oid)
        for oid in cleared:
            del self._active_overpass[oid]
        if cleared:
            self._log("overpass_cleared", {"obstacle_ids": cleared})
        if (transitions and self.state is MissionState.OBSTACLE_OVERPASS
                and not self._active_overpass):
            self._transition(E.OBSTACLE_CLEARED)

    def _required_altitude(self) -> float:
        targets = [t for t, _ in self._active_overpass.values()]
        return max([self.config.cruise_altitude_m] + targets)

    def _cruise_command(self, horizontal_origin: GeoPoint, target: GeoPoint) -> FlightCommand:
        """Course toward target at the required altitude, holding short of any
        active obstacle footprint until the climb is complete."""
        required = self._required_altitude()
        alt = self.drone.position.alt
        v = self._alt_rate(required)
        dist = haversine_distance(horizontal_origin, target)
        heading = initial_bearing(horizontal_origin, target) if dist > 1e-9 \
            else self.drone.heading_deg
        h = min(self.limits.max_h_speed_ms, dist / self._dt)
        climb_left = required - alt
        if climb_left > 1e-9:
            edge = self._nearest_pending_edge_m(alt)
            if edge is not None:
                time_to_climb = climb_left / self.limits.max_v_speed_ms
                slack = 2.0 * self.limits.max_h_speed_ms * self._dt
                if edge <= time_to_climb * self.limits.max_h_speed_ms + slack:
                    h = 0.0
        return FlightCommand(h, heading, v)

    def _nearest_pending_edge_m(self, alt: float) -> Optional[float]:
        now = self.tick * self._dt
        edges = []
        for oid, (target, _) in self._active_overpass.items():
            if target <= alt + 1e-9:
                continue
            obstacle = self._obstacle_by_id.get(oid)
            if obstacle is None:
                continue
            gap = haversine_distance(self.drone.position,
                                     obstacle.position_at(now)) - obstacle.radius_m
            edges.append(gap)
        return min(edges) if edges else None

    # --- mission phases ------------------------------------------------------

    def run(self) -> MissionResult:
        try:
            self._preflight()
        except LaunchRejected as rejection:
            self._log("launch_rejected", {"reason": rejection.reason})
            try:
                self.cloud.report_launch_failure(self.params.delivery_id,
                                                 rejection.reason)
            except Exception as exc:
                self._log("cloud_error", {"op": "launch_failure", "error": str(exc)})
            self.outcome = Outcome.ABORTED
            return self._result(never_launched=True)

        try:
            try:
                self._prepare_and_launch()
                self._fly_outbound()
                self._transition(E.DESCENT_STARTED)
                self._change_altitude(self.config.scan_altitude_m)
                self._transition(E.SCAN_ALTITUDE_REACHED)
                self._scan_and_authenticate()
            except _ReserveLow:
                self.outcome = Outcome.ABORTED
                self._transition(E.BATTERY_RESERVE_LOW, {
                    "battery_fraction": round(
                        self.drone.battery_j / self.power.battery_capacity_j, 6)})
            self._fly_return()
            self._land_and_complete()
        except _Exhausted:
            self.outcome = Outcome.ABORTED
            self._transition(E.BATTERY_EXHAUSTED, {"outcome": Outcome.ABORTED.value})
        except _Crashed as crash:
            self.outcome = Outcome.ABORTED
            self._transition(E.CRASHED, {"obstacle_id": crash.obstacle_id,
                                         "outcome": Outcome.ABORTED.value})
        return self._result(never_launched=False)

    def _preflight(self) -> None:
        try:
            self.params.validate()
        except ValueError as exc:
            raise LaunchRejected(str(exc)) from None
        fraction = self.drone.battery_j / self.power.battery_capacity_j
        if fraction <= self.config.battery_reserve_fraction:
            raise LaunchRejected(
                f"battery fraction {fraction:.3f} not above reserve "
                f"{self.config.battery_reserve_fraction:.3f}")
        try:
            self.world.building(self.params.building_id)
        except KeyError:
            raise LaunchRejected(
                f"unknown building {self.params.building_id!r}") from None

    def _prepare_and_launch(self) -> None:
        self._transition(E.DISPATCH_RECEIVED, {"delivery_id": self.params.delivery_id})
        self._log("servo", {"action": "lock"})
        self.drone = replace(self.drone, container_locked=True)
        self._ground_tick()
        self._transition(E.CONTAINER_LOCKED)
        self._ground_tick()
        self._transition(E.PARAMS_FETCHED, {
            "destination": {"lat": self.params.destination.lat,
                            "lon": self.params.destination.lon},
            "color_index": self.params.expected_color_code.index,
            "building_id": self.params.building_id,
        })

    def _fly_outbound(self) -> None:
        destination = self.params.destination
        while True:
            self._sense()
            self._handle_detections(transitions=True)
            if within_radius(self._fix, destination, self.config.locality_radius_m):
                self._transition(E.GEOFENCE_ENTERED, {
                    "fix_distance_m": round(
                        haversine_distance(self._fix, destination), 6),
                    "true_distance_m": round(
                        haversine_distance(self.drone.position, destination), 6),
                })
                return
            self._advance(self._cruise_command(self._fix, destination))

    def _change_altitude(self, target_alt: float) -> None:
        while abs(self.drone.position.alt - target_alt) > 1e-9:
            self._sense()
            self._handle_detections(transitions=False)
            self._advance(FlightCommand(0.0, self.drone.heading_deg,
                                        self._alt_rate(target_alt)))

    def _scan_and_authenticate(self) -> None:
        building = self.world.building(self.params.building_id)
        doors = list(building.doors)
        if self.config.door_order == "nearest":
            doors.sort(key=lambda d: haversine_distance(self.drone.position, d.position))
        result = execute_door_scan(
            doors, self.params.expected_color_code,
            visit=self._visit_and_scan,
            notify=self._notify,
            request_image=lambda: self._fetch_face_image(),
            wait=self._hover_seconds,
            log=lambda kind, payload: self._log(kind, payload),
            retry_attempts=self.config.image_retry_attempts,
            retry_spacing_s=self.config.image_retry_spacing_s)
        if result.outcome is ScanOutcome.NOT_FOUND:
            self.outcome = Outcome.MISSED_DELIVERY
            self._transition(E.DOORS_EXHAUSTED, {"scans": result.scans})
            return
        self._transition(E.DOOR_MATCHED, {"door_id": result.door.id,
                                          "scans": result.scans})
        auth = authenticate_recipient(
            self.face_stream, self.config, _AuthClock(self),
            servo=self.servo,
            notify=self._notify,
            log=lambda kind, payload: self._log(kind, payload),
            on_unlocked=lambda: self._transition(E.AUTH_SUCCEEDED))
        if auth is AuthOutcome.DELIVERED:
            self.outcome = Outcome.DELIVERED
            self.drone = replace(self.drone, container_locked=False)
            self._transition(E.DWELL_ELAPSED)
        else:
            self.outcome = Outcome.NOT_DELIVERED
            self._transition(E.AUTH_TIMED_OUT)

    def _visit_and_scan(self, door):
        stop = max(0.5, self.scenario.detector.scan_range_m - 1.0)
        while haversine_distance(self.drone.position, door.position) > stop:
            self._sense()
            self._handle_detections(transitions=False)
            dist = haversine_distance(self.drone.position, door.position)
            heading = initial_bearing(self.drone.position, door.position)
            h = min(self.limits.max_h_speed_ms, max(0.0, (dist - stop * 0.5) / self._dt))
            self._advance(FlightCommand(h, heading,
                                        self._alt_rate(self.config.scan_altitude_m)))
        self._sense()
        return scan_door(self.drone.position, door, self.scenario.detector,
                         self._scan_rng)

    def _fetch_face_image(self) -> bytes:
        try:
            image = self.cloud.fetch_face_image(self.params.delivery_id)
        except Exception as exc:
            raise CloudUnreachableError(str(exc)) from exc
        self._log("face_image_received", {"bytes": len(image)})
        return image

    def _hover_seconds(self, seconds: float) -> None:
        for _ in range(round(seconds / self._dt)):
            self._hover_tick()

    def _fly_return(self) -> None:
        depot = self.world.depot
        while True:
            self._sense()
            self._handle_detections(transitions=self.state is MissionState.RETURNING_TO_DEPOT)
            if within_radius(self._fix, depot, self.config.locality_radius_m):
                break
            self._advance(self._cruise_command(self._fix, depot))
        # precision approach and landing on the depot pad
        while haversine_distance(self.drone.position, depot) > self.config.arrival_radius_m:
            self._sense()
            self._handle_detections(transitions=False)
            self._advance(self._cruise_command(self.drone.position, depot))
        while self.drone.position.alt > 1e-9:
            self._sense()
            self._advance(FlightCommand(0.0, self.drone.heading_deg, self._alt_rate(0.0)))
        self._log("landed", {"distance_to_depot_m": round(
            haversine_distance(self.drone.position, depot), 6)})

    def _land_and_complete(self) -> None:
        fraction = self.drone.battery_j / self.power.battery_capacity_j
        if fraction < self.config.battery_reserve_fraction:
            self.disposition = "charging"
            self._transition(E.ARRIVED_NEEDS_CHARGE,
                             {"battery_fraction": round(fraction, 6)})
            self._log("charge_started", {"battery_fraction": round(fraction, 6)})
            self._ground_tick()
            self._transition(E.CHARGE_COMPLETE, {"outcome": self.outcome.value})
        else:
            self.disposition = "await_dispatch"
            self._transition(E.ARRIVED_AT_DEPOT,
                             {"battery_fraction": round(fraction, 6),
                              "outcome": self.outcome.value})

    def _result(self, never_launched: bool) -> MissionResult:
        duration = 0.0 if never_launched else self.now_s
        self._log("mission_complete", {
            "outcome": self.outcome.value,
            "duration_s": duration,
            "distance_m": round(self._distance_m, 6),
            "energy_j": round(self._energy_j, 6),
            "notifications": list(self.notifications),
            "disposition": self.disposition,
            "final_lat": self.drone.position.lat,
            "final_lon": self.drone.position.lon,
        })
        try:
            self.cloud.report_status(self.params.delivery_id, self.outcome.value)
        except Exception as exc:
            self._log("cloud_error", {"op": "report_status", "error": str(exc)})
        return MissionResult(
            scenario=self.scenario.name,
            seed=self.seed,
            outcome=self.outcome,
            final_state=self.state,
            events=self.events,
            duration_s=duration,
            distance_m=0.0 if never_launched else round(self._distance_m, 6),
            energy_j=0.0 if never_launched else round(self._energy_j, 6),
            notifications=list(self.notifications),
            disposition=self.disposition,
            never_launched=never_launched,
            final_position=self.drone.position,
            dt_s=self._dt,
            trace=self.trace)


def launch(scenario: Scenario, params: MissionParams, config: MissionConfig,
           cloud=None, seed: int = 0, record_trace: bool = False,
           servo: Optional[Callable[[str], bool]] = None,
           face_stream: Optional[FaceStream] = None) -> MissionResult:
    """Run a full mission tick loop to a terminal state and return its log."""
    engine = MissionEngine(scenario, params, config, cloud or NullCloudLink(),
                           seed, record_trace=record_trace, servo=servo,
                           face_stream=face_stream)
    return engine.run()
