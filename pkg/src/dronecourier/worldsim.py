"""Deterministic discrete-tick world: kinematics, sensors, battery, obstacles.

The world stepper is single-owner; everything stochastic draws from named
seeded streams so identical (scenario, seed, commands) replay bit-identically.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .geo import GeoPoint, haversine_distance, local_offset_m, offset_point
from .perception import DETECTOR_PRESETS, ColorCode, DetectorProfile, FaceStream

# Table-of-components roles; per-component power draws must use these labels.
COMPONENT_ROLES = frozenset({
    "esp32_cam", "raspberry_pi_zero_2w", "esp32_wrover", "neo6m", "bmp280",
    "a7670", "power_distribution_board", "mpu6050", "servo_motor",
    "esc", "brushless_motor",
})

DEFAULT_COMPONENT_DRAW_W = {
    "esp32_cam": 1.4,
    "raspberry_pi_zero_2w": 1.2,
    "esp32_wrover": 0.8,
    "neo6m": 0.25,
    "bmp280": 0.01,
    "a7670": 0.9,
    "power_distribution_board": 0.3,
    "mpu6050": 0.01,
    "servo_motor": 0.2,
}

# 3S LiPo, 2200 mAh at 11.1 V.
DEFAULT_BATTERY_CAPACITY_J = 2.2 * 11.1 * 3600.0

DOOR_ENTRANCE_BOUND_M = 100.0
DEFAULT_CORRIDOR_WIDTH_M = 2.0


class ScenarioError(ValueError):
    """Scenario document failed to parse or validate; carries the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Door:
    id: str
    position: GeoPoint
    color_code: Optional[ColorCode] = None


@dataclass(frozen=True)
class Building:
    id: str
    entrance: GeoPoint
    doors: tuple[Door, ...]


@dataclass(frozen=True)
class Obstacle:
    id: str
    center: GeoPoint
    radius_m: float
    height_m: float
    # Piecewise-linear script for dynamic obstacles: (t_s, lat, lon) knots.
    waypoints: tuple[tuple[float, float, float], ...] = ()

    def position_at(self, t: float) -> GeoPoint:
        if not self.waypoints:
            return self.center
        pts = self.waypoints
        if t <= pts[0][0]:
            return GeoPoint(pts[0][1], pts[0][2], 0.0)
        for (t0, la0, lo0), (t1, la1, lo1) in zip(pts, pts[1:]):
            if t <= t1:
                f = (t - t0) / (t1 - t0)
                return GeoPoint(la0 + f * (la1 - la0), lo0 + f * (lo1 - lo0), 0.0)
        return GeoPoint(pts[-1][1], pts[-1][2], 0.0)


@dataclass(frozen=True)
class World:
    depot: GeoPoint
    buildings: tuple[Building, ...]
    obstacles: tuple[Obstacle, ...]
    dt_s: float

    def building(self, building_id: str) -> Building:
        for b in self.buildings:
            if b.id == building_id:
                return b
        raise KeyError(building_id)


@dataclass(frozen=True)
class DroneLimits:
    max_h_speed_ms: float = 10.0
    max_v_speed_ms: float = 3.0


@dataclass(frozen=True)
class PowerProfile:
    hover_w: float = 150.0
    cruise_w_per_ms: float = 8.0
    component_draw_w: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_COMPONENT_DRAW_W))
    battery_capacity_j: float = DEFAULT_BATTERY_CAPACITY_J

    def __post_init__(self):
        for label, watts in self.component_draw_w.items():
            if label not in COMPONENT_ROLES:
                raise ValueError(f"unknown component label {label!r}")
            if watts < 0:
                raise ValueError(f"negative draw for {label}")
        if self.hover_w < 0 or self.cruise_w_per_ms < 0 or self.battery_capacity_j <= 0:
            raise ValueError("power profile values must be non-negative, capacity positive")

    @property
    def component_total_w(self) -> float:
        return sum(self.component_draw_w.values())

    def draw_w(self, h_speed_ms: float) -> float:
        return self.hover_w + self.cruise_w_per_ms * h_speed_ms + self.component_total_w


@dataclass(frozen=True)
class GpsProfile:
    label: str = "neo6m"
    sigma_m: float = 2.5
    period_s: float = 1.0

    def __post_init__(self):
        if self.sigma_m < 0 or self.period_s <= 0:
            raise ValueError("gps profile needs sigma >= 0 and period > 0")


# Representative configuration defaults for the two GPS modules; substitute
# datasheet values via scenario config if needed.
GPS_PRESETS: dict[str, GpsProfile] = {
    "neo6m": GpsProfile("neo6m", sigma_m=2.5, period_s=1.0),
    "m8n": GpsProfile("m8n", sigma_m=2.0, period_s=0.5),
}


@dataclass(frozen=True)
class DroneState:
    position: GeoPoint
    h_speed_ms: float = 0.0
    heading_deg: float = 0.0
    v_speed_ms: float = 0.0
    battery_j: float = DEFAULT_BATTERY_CAPACITY_J
    container_locked: bool = False
    exhausted: bool = False


@dataclass(frozen=True)
class FlightCommand:
    h_speed_ms: float = 0.0
    heading_deg: float = 0.0
    v_speed_ms: float = 0.0


def step_drone(state: DroneState, command: FlightCommand, world: World,
               power: PowerProfile, limits: DroneLimits) -> DroneState:
    """First-order kinematics plus battery drain for one tick.

    An exhausted drone is frozen in place; the battery clamps at zero and the
    exhaustion flag latches.
    """
    if state.exhausted or state.battery_j <= 0.0:
        return replace(state, battery_j=0.0, exhausted=True,
                       h_speed_ms=0.0, v_speed_ms=0.0)
    dt = world.dt_s
    h_speed = min(max(command.h_speed_ms, 0.0), limits.max_h_speed_ms)
    v_speed = max(-limits.max_v_speed_ms, min(command.v_speed_ms, limits.max_v_speed_ms))
    heading = command.heading_deg % 360.0

    theta = math.radians(heading)
    north = h_speed * dt * math.cos(theta)
    east = h_speed * dt * math.sin(theta)
    alt = max(0.0, state.position.alt + v_speed * dt)
    position = offset_point(state.position, north, east, alt=alt)

    drain = power.draw_w(h_speed) * dt
    battery = max(0.0, state.battery_j - drain)
    return replace(state, position=position, h_speed_ms=h_speed,
                   heading_deg=heading, v_speed_ms=v_speed,
                   battery_j=battery, exhausted=(battery == 0.0))


class GpsSensor:
    """Noisy position fixes with a fixed update period; stale fixes repeat."""

    def __init__(self, profile: GpsProfile, rng: random.Random):
        self.profile = profile
        self.rng = rng
        self._fix: Optional[GeoPoint] = None
        self._updates = 0

    def sample(self, true_position: GeoPoint, now_s: float) -> GeoPoint:
        next_due = self._updates * self.profile.period_s
        if self._fix is None or now_s >= next_due - 1e-9:
            north = self.rng.gauss(0.0, self.profile.sigma_m)
            east = self.rng.gauss(0.0, self.profile.sigma_m)
            self._fix = offset_point(true_position, north, east, alt=true_position.alt)
            self._updates = math.floor(now_s / self.profile.period_s + 1e-9) + 1
        return self._fix


def sample_gps(state: DroneState, sensor: GpsSensor, now_s: float) -> GeoPoint:
    return sensor.sample(state.position, now_s)


def sample_altitude(state: DroneState, baro_sigma_m: float, rng: random.Random) -> float:
    if baro_sigma_m < 0:
        raise ValueError("sigma must be >= 0")
    if baro_sigma_m == 0.0:
        return state.position.alt
    return state.position.alt + rng.gauss(0.0, baro_sigma_m)


def obstacles_ahead(world: World, state: DroneState, look_ahead_m: float,
                    t: float = 0.0,
                    corridor_width_m: float = DEFAULT_CORRIDOR_WIDTH_M) -> list[Obstacle]:
    """Obstacles whose footprint intersects the forward corridor, nearest first.

    The corridor is the rectangle of the given width extending look_ahead_m
    along the current heading; intersection uses the exact nearest-point test
    between the rectangle and each footprint circle.
    """
    if look_ahead_m <= 0:
        raise ValueError("look_ahead must be > 0")
    theta = math.radians(state.heading_deg)
    half_w = corridor_width_m / 2.0
    hits = []
    for obstacle in world.obstacles:
        center = obstacle.position_at(t)
        north, east = local_offset_m(state.position, center)
        along = north * math.cos(theta) + east * math.sin(theta)
        cross = -north * math.sin(theta) + east * math.cos(theta)
        nearest_along = min(max(along, 0.0), look_ahead_m)
        nearest_cross = min(max(cross, -half_w), half_w)
        gap2 = (along - nearest_along) ** 2 + (cross - nearest_cross) ** 2
        if gap2 <= obstacle.radius_m ** 2:
            hits.append((haversine_distance(state.position, center), obstacle))
    hits.sort(key=lambda pair: pair[0])
    return [obstacle for _, obstacle in hits]


def colliding_obstacle(world: World, position: GeoPoint, t: float = 0.0) -> Optional[Obstacle]:
    """Obstacle the drone is physically inside of, if any (ground-truth check)."""
    for obstacle in world.obstacles:
        center = obstacle.position_at(t)
        if position.alt < obstacle.height_m and \
                haversine_distance(position, center) < obstacle.radius_m:
            return obstacle
    return None


# --- scenario loading -------------------------------------------------------

@dataclass(frozen=True)
class DeliveryScript:
    address_text: str
    building_id: str
    recipient_name: str = "recipient"


@dataclass(frozen=True)
class Scenario:
    name: str
    world: World
    limits: DroneLimits
    power: PowerProfile
    gps: GpsProfile
    detector: DetectorProfile
    face_stream_samples: tuple[tuple[float, float], ...]
    delivery: DeliveryScript
    geocode_fixtures: tuple[dict, ...]
    mission_overrides: dict
    initial_battery_j: Optional[float] = None

    def make_face_stream(self) -> FaceStream:
        return FaceStream(self.face_stream_samples)


def _geo(doc: dict, path: str) -> GeoPoint:
    try:
        return GeoPoint(float(doc["lat"]), float(doc["lon"]), float(doc.get("alt", 0.0)))
    except KeyError as exc:
        raise ScenarioError(path, f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(path, str(exc)) from None


def load_world(doc: dict) -> World:
    """Validate and build the World portion of a scenario document."""
    for key in ("depot", "dt"):
        if key not in doc:
            raise ScenarioError(key, "required key missing")
    dt = float(doc["dt"])
    if dt <= 0:
        raise ScenarioError("dt", f"must be > 0, got {dt}")
    depot = _geo(doc["depot"], "depot")

    buildings = []
    seen_buildings: set[str] = set()
    for i, bdoc in enumerate(doc.get("buildings", [])):
        bpath = f"buildings[{i}]"
        bid = str(bdoc.get("id", ""))
        if not bid:
            raise ScenarioError(f"{bpath}.id", "building id required")
        if bid in seen_buildings:
            raise ScenarioError(f"{bpath}.id", f"duplicate building id {bid!r}")
        seen_buildings.add(bid)
        entrance = _geo(bdoc["entrance"], f"{bpath}.entrance")
        doors = []
        seen_doors: set[str] = set()
        for j, ddoc in enumerate(bdoc.get("doors", [])):
            dpath = f"{bpath}.doors[{j}]"
            did = str(ddoc.get("id", ""))
            if not did:
                raise ScenarioError(f"{dpath}.id", "door id required")
            if did in seen_doors:
                raise ScenarioError(f"{dpath}.id", f"duplicate door id {did!r}")
            seen_doors.add(did)
            pos = _geo(ddoc["position"], f"{dpath}.position")
            if haversine_distance(pos, entrance) > DOOR_ENTRANCE_BOUND_M:
                raise ScenarioError(f"{dpath}.position",
                                    f"door {did!r} farther than {DOOR_ENTRANCE_BOUND_M} m from entrance")
            code = None
            if ddoc.get("color_index") is not None:
                code = ColorCode.from_index(int(ddoc["color_index"]))
            doors.append(Door(did, pos, code))
        if not doors:
            raise ScenarioError(f"{bpath}.doors", f"building {bid!r} has zero doors")
        buildings.append(Building(bid, entrance, tuple(doors)))

    obstacles = []
    seen_obstacles: set[str] = set()
    for i, odoc in enumerate(doc.get("obstacles", [])):
        opath = f"obstacles[{i}]"
        oid = str(odoc.get("id", ""))
        if not oid:
            raise ScenarioError(f"{opath}.id", "obstacle id required")
        if oid in seen_obstacles:
            raise ScenarioError(f"{opath}.id", f"duplicate obstacle id {oid!r}")
        seen_obstacles.add(oid)
        radius = float(odoc["radius"])
        height = float(odoc["height"])
        if not (radius > 0 and math.isfinite(radius)):
            raise ScenarioError(f"{opath}.radius", f"must be finite and > 0, got {radius}")
        if not (height > 0 and math.isfinite(height)):
            raise ScenarioError(f"{opath}.height", f"must be finite and > 0, got {height}")
        waypoints = tuple(
            (float(t), float(la), float(lo)) for t, la, lo in odoc.get("waypoints", []))
        obstacles.append(Obstacle(oid, _geo(odoc["center"], f"{opath}.center"),
                                  radius, height, waypoints))

    world = World(depot, tuple(buildings), tuple(obstacles), dt)
    for obstacle in world.obstacles:
        if haversine_distance(depot, obstacle.position_at(0.0)) <= obstacle.radius_m:
            raise ScenarioError("depot", f"depot inside obstacle {obstacle.id!r} footprint")
    return world


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from None
    world = load_world(doc)

    drone_doc = doc.get("drone", {})
    limits = DroneLimits(
        max_h_speed_ms=float(drone_doc.get("max_h_speed_ms", 10.0)),
        max_v_speed_ms=float(drone_doc.get("max_v_speed_ms", 3.0)))

    power_doc = doc.get("power_profile", {})
    try:
        power = PowerProfile(
            hover_w=float(power_doc.get("hover_w", 150.0)),
            cruise_w_per_ms=float(power_doc.get("cruise_w_per_ms", 8.0)),
            component_draw_w=dict(power_doc.get("components", DEFAULT_COMPONENT_DRAW_W)),
            battery_capacity_j=float(power_doc.get("battery_capacity_j",
                                                   DEFAULT_BATTERY_CAPACITY_J)))
    except ValueError as exc:
        raise ScenarioError("power_profile", str(exc)) from None

    gps_doc = doc.get("gps_profile", {})
    if isinstance(gps_doc, str):
        gps = GPS_PRESETS[gps_doc]
    else:
        label = gps_doc.get("label", "neo6m")
        base = GPS_PRESETS.get(label, GpsProfile(label=label))
        gps = GpsProfile(label=label,
                         sigma_m=float(gps_doc.get("sigma_m", base.sigma_m)),
                         period_s=float(gps_doc.get("period_s", base.period_s)))

    det_doc = doc.get("detector_profile", {})
    if isinstance(det_doc, str):
        detector = DETECTOR_PRESETS[det_doc]
    else:
        detector = DetectorProfile(
            label=det_doc.get("label", "yolov4-tiny"),
            tp_prob=float(det_doc.get("tp_prob", 0.95)),
            fp_per_min=float(det_doc.get("fp_per_min", 0.0)),
            max_range_m=float(det_doc.get("max_range_m", 40.0)),
            height_sigma_m=float(det_doc.get("height_sigma_m", 0.5)),
            latency_ticks=int(det_doc.get("latency_ticks", 2)),
            misread_rate=float(det_doc.get("misread_rate", 0.0)),
            scan_range_m=float(det_doc.get("scan_range_m", 3.0)))

    face_stream = tuple((float(t), float(c)) for t, c in doc.get("face_stream", []))

    delivery_doc = doc.get("delivery", {})
    delivery = DeliveryScript(
        address_text=delivery_doc.get("address", ""),
        building_id=delivery_doc.get("building_id",
                                     world.buildings[0].id if world.buildings else ""),
        recipient_name=delivery_doc.get("recipient_name", "recipient"))

    initial_battery = drone_doc.get("initial_battery_j")
    return Scenario(
        name=doc.get("name", path.stem),
        world=world,
        limits=limits,
        power=power,
        gps=gps,
        detector=detector,
        face_stream_samples=face_stream,
        delivery=delivery,
        geocode_fixtures=tuple(doc.get("geocode_fixtures", [])),
        mission_overrides=dict(doc.get("mission", {})),
        initial_battery_j=float(initial_battery) if initial_battery is not None else None)
