#!/usr/bin/env python3
"""Regenerate the bundled scenario files with cleanly computed coordinates."""

import json
import math
from pathlib import Path

R = 6_371_000.0
DEPOT = (19.1000, 72.9000)

OUT = Path(__file__).resolve().parent.parent / "scenarios"


def offset(lat, lon, north_m, east_m):
    dlat = math.degrees(north_m / R)
    dlon = math.degrees(east_m / (R * math.cos(math.radians(lat))))
    return round(lat + dlat, 10), round(lon + dlon, 10)


def point(lat, lon, alt=0.0):
    return {"lat": lat, "lon": lon, "alt": alt}


def door(door_id, base, north_m, east_m, color_index=None, alt=1.0):
    lat, lon = offset(base[0], base[1], north_m, east_m)
    d = {"id": door_id, "position": point(lat, lon, alt)}
    if color_index is not None:
        d["color_index"] = color_index
    return d


CLEAN_DETECTOR = {"label": "yolov4-tiny", "tp_prob": 1.0, "fp_per_min": 0.0,
                  "max_range_m": 40.0, "height_sigma_m": 0.0, "latency_ticks": 2,
                  "misread_rate": 0.0, "scan_range_m": 3.0}
CLEAN_GPS = {"label": "neo6m", "sigma_m": 0.0, "period_s": 1.0}


def base_scenario(name, dest_north, dest_east, address, doors, face_stream,
                  obstacles=(), battery=None, mission=None):
    entrance = offset(*DEPOT, dest_north, dest_east)
    doc = {
        "name": name,
        "dt": 0.1,
        "depot": point(*DEPOT),
        "buildings": [{
            "id": "bldg-1",
            "entrance": point(*entrance),
            "doors": doors(entrance),
        }],
        "obstacles": list(obstacles),
        "drone": {"max_h_speed_ms": 10.0, "max_v_speed_ms": 3.0},
        "power_profile": {},
        "gps_profile": dict(CLEAN_GPS),
        "detector_profile": dict(CLEAN_DETECTOR),
        "face_stream": face_stream,
        "delivery": {"address": address, "building_id": "bldg-1",
                     "recipient_name": "alice"},
        "geocode_fixtures": [
            {"address": address, "lat": entrance[0], "lon": entrance[1]},
        ],
    }
    if battery is not None:
        doc["power_profile"]["battery_capacity_j"] = battery
    if mission:
        doc["mission"] = mission
    return doc


def two_doors_second_matches(entrance):
    return [door("door-1", entrance, 0.0, 8.0, color_index=5),
            door("door-2", entrance, 0.0, 16.0, color_index=0)]


def no_matching_doors(entrance):
    return [door("door-1", entrance, 0.0, 8.0, color_index=5),
            door("door-2", entrance, 0.0, 16.0, color_index=7)]


def obstacle(oid, north_m, east_m, radius, height):
    lat, lon = offset(*DEPOT, north_m, east_m)
    return {"id": oid, "center": point(lat, lon), "radius": radius, "height": height}


def main():
    OUT.mkdir(exist_ok=True)
    scenarios = []

    scenarios.append(base_scenario(
        "happy_path", 120.0, 0.0, "3 Quad Lane North Campus",
        two_doors_second_matches, [[20.0, 0.95]]))

    scenarios.append(base_scenario(
        "auth_timeout", 120.0, 0.0, "3 Quad Lane North Campus",
        two_doors_second_matches, [[50.0, 0.79], [100.0, 0.5]],
        battery=500_000.0))

    scenarios.append(base_scenario(
        "auth_boundary", 120.0, 0.0, "3 Quad Lane North Campus",
        two_doors_second_matches, [[10.0, 0.8]]))

    scenarios.append(base_scenario(
        "wrong_door", 120.0, 0.0, "3 Quad Lane North Campus",
        no_matching_doors, [[20.0, 0.95]]))

    # matching door sits on the depot bearing so the return leg re-crosses
    # both towers
    def obstacle_course_doors(entrance):
        return [door("door-1", entrance, 0.0, 8.0, color_index=5),
                door("door-2", entrance, 0.0, 0.0, color_index=0)]

    scenarios.append(base_scenario(
        "obstacle_course", 160.0, 0.0, "3 Quad Lane North Campus",
        obstacle_course_doors, [[20.0, 0.95]],
        obstacles=[obstacle("tower-a", 55.0, 0.0, 3.0, 32.0),
                   obstacle("tower-b", 95.0, 0.0, 3.0, 38.0)],
        battery=200_000.0))

    scenarios.append(base_scenario(
        "geofence", 110.0, 70.0, "9 Diagonal Walk East Campus",
        two_doors_second_matches, [[15.0, 0.9]]))

    for doc in scenarios:
        path = OUT / f"{doc['name']}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print("wrote", path)

    # Larger demo world: three buildings, mixed doors, static + dynamic obstacles.
    campus_entrances = {
        "bldg-1": offset(*DEPOT, 120.0, 0.0),
        "bldg-2": offset(*DEPOT, 80.0, 90.0),
        "bldg-3": offset(*DEPOT, -60.0, 140.0),
    }
    # crosses the outbound corridor around t=5 s, forcing a yield
    dyn_start = offset(*DEPOT, 40.0, -6.0)
    dyn_end = offset(*DEPOT, 40.0, 6.0)
    campus = {
        "name": "campus",
        "dt": 0.1,
        "depot": point(*DEPOT),
        "buildings": [
            {"id": "bldg-1", "entrance": point(*campus_entrances["bldg-1"]),
             "doors": [door("b1-d1", campus_entrances["bldg-1"], 0.0, 6.0, 0),
                       door("b1-d2", campus_entrances["bldg-1"], 0.0, 12.0, 1),
                       door("b1-d3", campus_entrances["bldg-1"], 0.0, 18.0, 2)]},
            {"id": "bldg-2", "entrance": point(*campus_entrances["bldg-2"]),
             "doors": [door("b2-d1", campus_entrances["bldg-2"], 6.0, 0.0, 3),
                       door("b2-d2", campus_entrances["bldg-2"], 12.0, 0.0)]},
            {"id": "bldg-3", "entrance": point(*campus_entrances["bldg-3"]),
             "doors": [door("b3-d1", campus_entrances["bldg-3"], 0.0, -6.0, 4)]},
        ],
        "obstacles": [
            obstacle("tower-a", 75.0, 2.5, 3.0, 34.0),
            obstacle("crane", 90.0, 40.0, 5.0, 45.0),
            {"id": "service-drone", "center": point(*dyn_start), "radius": 1.0,
             "height": 50.0, "waypoints": [[0.0, dyn_start[0], dyn_start[1]],
                                            [10.0, dyn_end[0], dyn_end[1]]]},
        ],
        "drone": {"max_h_speed_ms": 10.0, "max_v_speed_ms": 3.0},
        "power_profile": {"battery_capacity_j": 200_000.0},
        "gps_profile": {"label": "neo6m", "sigma_m": 2.5, "period_s": 1.0},
        "detector_profile": dict(CLEAN_DETECTOR),
        "face_stream": [[20.0, 0.95]],
        "delivery": {"address": "3 Quad Lane North Campus", "building_id": "bldg-1",
                     "recipient_name": "alice"},
        "geocode_fixtures": [
            {"address": "3 Quad Lane North Campus",
             "lat": campus_entrances["bldg-1"][0], "lon": campus_entrances["bldg-1"][1]},
            {"address": "7 Eastern Row", "lat": campus_entrances["bldg-2"][0],
             "lon": campus_entrances["bldg-2"][1]},
            {"address": "1 South Gate", "lat": campus_entrances["bldg-3"][0],
             "lon": campus_entrances["bldg-3"][1]},
        ],
    }
    path = OUT / "campus.json"
    path.write_text(json.dumps(campus, indent=2) + "\n")
    print("wrote", path)


if __name__ == "__main__":
    main()
