"""Acceptance gate: every criterion runs at its stated tolerance and prints a
pass line (run with `pytest tests/test_acceptance.py -v -s`)."""

import base64
import itertools
import json
import random
import re
import time

import httpx
import pytest

from conftest import GOLDEN_DIR, scenario_path
from dronecourier.cli import _mission_config, run_embedded_mission
from dronecourier.cloud.service import (CapacityError, CloudService,
                                        ConflictError, OrderStatus)
from dronecourier.geo import (GeocodeProvider, GeoPoint, haversine_distance,
                              offset_point)
from dronecourier.mission.machine import (IllegalTransitionError, MissionInput,
                                          MissionState, TRANSITIONS, transition)
from dronecourier.perception import ColorCode
from dronecourier.worldsim import load_scenario
from engine_utils import run_scenario
from oracles import sloc_distance_m
from serve_harness import ServeProcess
from test_mission_machine import parse_truth_table, run_scan

GOLDEN_SEED = 42
GOLDEN_SCENARIOS = ["happy_path", "auth_timeout", "auth_boundary", "wrong_door",
                    "obstacle_course", "geofence"]


def _ok(line: str) -> None:
    print(f"\n[PASS] {line}")


def _embedded(scenario_name, seed=GOLDEN_SEED, record_trace=False):
    scenario = load_scenario(scenario_path(scenario_name))
    config = _mission_config(scenario, None, None)
    return run_embedded_mission(scenario, config, seed, record_trace=record_trace)


class TestAcceptance:
    def test_haversine_oracle_suite(self):
        started = time.monotonic()
        rng = random.Random(20240)
        pairs = []
        for _ in range(400):
            pairs.append((GeoPoint(rng.uniform(-89, 89), rng.uniform(-180, 180)),
                          GeoPoint(rng.uniform(-89, 89), rng.uniform(-180, 180))))
        for _ in range(300):
            a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            pairs.append((a, offset_point(a, rng.uniform(-70, 70),
                                          rng.uniform(-70, 70))))
        for _ in range(300):
            a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            pairs.append((a, offset_point(a, rng.uniform(-4000, 4000),
                                          rng.uniform(-4000, 4000))))
        assert len(pairs) == 1000
        small = big = 0
        for a, b in pairs:
            d = haversine_distance(a, b)
            d_star = sloc_distance_m(a.lat, a.lon, b.lat, b.lon)
            if d_star > 1000.0:
                big += 1
                assert abs(d - d_star) / d_star <= 1e-6, (a, b, d, d_star)
            elif d_star < 100.0:
                small += 1
                assert abs(d - d_star) <= 1e-3, (a, b, d, d_star)
        elapsed = time.monotonic() - started
        assert elapsed < 1.0, f"oracle suite took {elapsed:.2f}s"
        assert small >= 200 and big >= 400
        _ok(f"haversine oracle: 1000 seeded pairs ({big} >1km rel<=1e-6, "
            f"{small} <100m abs<=1mm) in {elapsed:.2f}s")

    def test_state_machine_truth_table(self):
        started = time.monotonic()
        truth = parse_truth_table()
        legal = illegal = 0
        for state, event in itertools.product(MissionState, MissionInput):
            if (state, event) in truth:
                assert transition(state, event) is truth[(state, event)]
                legal += 1
            else:
                with pytest.raises(IllegalTransitionError):
                    transition(state, event)
                illegal += 1
        assert set(TRANSITIONS) == set(truth)
        elapsed = time.monotonic() - started
        assert elapsed < 1.0
        _ok(f"state machine: {legal} legal + {illegal} illegal pairs match the "
            f"hand-written table in {elapsed:.2f}s")

    def test_golden_scenarios(self):
        started = time.monotonic()
        results = {}
        for name in GOLDEN_SCENARIOS:
            result, _ = _embedded(name, record_trace=True)
            pinned = (GOLDEN_DIR / f"{name}-seed{GOLDEN_SEED}.jsonl").read_text()
            assert result.log_text() == pinned, f"{name} diverged from golden log"
            results[name] = result

        happy = results["happy_path"]
        assert happy.outcome.value == "delivered"
        servo = [e for e in happy.events if e.kind == "servo"]
        open_tick = next(e.tick for e in servo if e.payload["action"] == "open")
        close_tick = next(e.tick for e in servo if e.payload["action"] == "close")
        assert close_tick - open_tick == round(30.0 / happy.dt_s)

        timeout = results["auth_timeout"]
        assert timeout.outcome.value == "not_delivered"
        entry = next(e.tick for e in timeout.events
                     if e.kind == "state_transition"
                     and e.payload["to"] == "awaiting_authentication")
        fired = next(e.tick for e in timeout.events
                     if e.kind == "state_transition"
                     and e.payload["event"] == "auth_timed_out")
        assert fired - entry == round(600.0 / timeout.dt_s)

        missed = results["wrong_door"]
        assert missed.outcome.value == "missed_delivery"
        assert not any(e.kind == "servo" and e.payload["action"] == "open"
                       for e in missed.events)

        self._assert_overpass_invariant(results["obstacle_course"])
        self._assert_geofence_gating(results["geofence"])
        self._assert_geofence_gating(results["happy_path"])

        boundary = results["auth_boundary"]
        assert boundary.outcome.value == "delivered"
        confidences = [e.payload["confidence"] for e in boundary.events
                       if e.kind == "face_sample"]
        assert confidences == [0.8]

        elapsed = time.monotonic() - started
        assert elapsed < 10.0, f"golden suite took {elapsed:.2f}s"
        _ok(f"golden scenarios: {len(GOLDEN_SCENARIOS)} byte-exact logs + "
            f"invariants in {elapsed:.2f}s")

    def _assert_overpass_invariant(self, result):
        scenario = load_scenario(scenario_path("obstacle_course"))
        obstacles = {o.id: o for o in scenario.world.obstacles}
        first_seen, est = {}, {}
        for e in result.events:
            if e.kind == "detection_handled":
                oid = e.payload["obstacle_id"]
                first_seen.setdefault(oid, e.tick)
                est[oid] = max(est.get(oid, 0.0), e.payload["est_height_m"])
        inside_ticks = 0
        for snap in result.trace:
            for oid, tick0 in first_seen.items():
                obstacle = obstacles.get(oid)
                if obstacle is None or snap.tick < tick0:
                    continue
                if haversine_distance(GeoPoint(snap.lat, snap.lon),
                                      obstacle.center) < obstacle.radius_m:
                    inside_ticks += 1
                    assert snap.alt >= est[oid] + 5.0 - 1e-6
        assert inside_ticks > 0

    def _assert_geofence_gating(self, result):
        scenario = load_scenario(scenario_path(result.scenario))
        destination = scenario.world.building(
            scenario.delivery.building_id).entrance
        descend = [e.tick for e in result.events
                   if e.kind == "state_transition"
                   and e.payload["to"] == "descending"]
        assert len(descend) == 1
        snap = next(s for s in result.trace if s.tick == descend[0] - 1)
        assert haversine_distance(GeoPoint(snap.lat, snap.lon),
                                  destination) <= 6.0 + 1e-9

    def test_determinism_three_runs(self):
        started = time.monotonic()
        for name in GOLDEN_SCENARIOS:
            logs = {_embedded(name)[0].log_text() for _ in range(3)}
            assert len(logs) == 1, f"{name} not deterministic"
        _ok(f"determinism: 6 scenarios x3 byte-identical in "
            f"{time.monotonic() - started:.2f}s")

    def test_scan_count_enumeration(self):
        started = time.monotonic()
        cases = 0
        for n in range(1, 9):
            for k in range(1, n + 1):
                codes = [((i + 5) % 16) or 9 for i in range(n)]
                codes[k - 1] = 0
                result, notes, _, _ = run_scan(codes, expected_index=0)
                assert result.scans == k
                assert notes == ["Accept Delivery"]
                cases += 1
            codes = [((i + 5) % 16) or 9 for i in range(n)]
            result, notes, _, _ = run_scan(codes, expected_index=0)
            assert result.scans == n
            assert notes == ["Missed delivery"]
            cases += 1
        elapsed = time.monotonic() - started
        assert elapsed < 5.0
        _ok(f"door-scan enumeration: {cases} (n,k) cases in {elapsed:.2f}s")

    def test_cloud_property_suite(self, tmp_path):
        started = time.monotonic()
        fixtures = {"1 depot lane": GeoPoint(19.1, 72.9, 0.0)}

        service = CloudService(
            geocoder=GeocodeProvider(mode="fixture", fixture_table=fixtures),
            known_buildings={"bldg-1"}, rng=random.Random(99))
        user = service.register_user("alice", b"face", "bldg-1")
        ids = {service.place_order(user.user_id, "1 Depot Lane").delivery_id
               for _ in range(10_000)}
        assert len(ids) == 10_000
        assert all(re.match(r"^[A-HJ-NP-Z2-9]{10}$", i) for i in ids)

        fresh = CloudService(
            geocoder=GeocodeProvider(mode="fixture", fixture_table=fixtures),
            known_buildings={"bldg-1"}, rng=random.Random(1))
        for i in range(16):
            account = fresh.register_user(f"u{i}", b"face", "bldg-1")
            assert account.color_code.index == i
        with pytest.raises(CapacityError):
            fresh.register_user("u16", b"face", "bldg-1")

        outcomes = ("delivered", "not_delivered", "missed_delivery", "aborted")
        for status, outcome in itertools.product(
                (OrderStatus.PLACED, OrderStatus.DISPATCHED,
                 OrderStatus.IN_FLIGHT), outcomes):
            svc = CloudService(
                geocoder=GeocodeProvider(mode="fixture", fixture_table=fixtures),
                known_buildings={"bldg-1"}, rng=random.Random(2))
            u = svc.register_user("a", b"f", "bldg-1")
            oid = svc.place_order(u.user_id, "1 Depot Lane").delivery_id
            if status in (OrderStatus.DISPATCHED, OrderStatus.IN_FLIGHT):
                svc.dispatch(oid, "depot-1")
            if status is OrderStatus.IN_FLIGHT:
                svc.set_in_flight(oid)
                svc.set_status(oid, outcome)
            else:
                with pytest.raises(ConflictError):
                    svc.set_status(oid, outcome)

        svc = CloudService(
            geocoder=GeocodeProvider(mode="fixture", fixture_table=fixtures),
            known_buildings={"bldg-1"}, rng=random.Random(3))
        u = svc.register_user("a", b"f", "bldg-1")
        oid = svc.place_order(u.user_id, "1 Depot Lane").delivery_id
        svc.dispatch(oid, "depot-1")
        rng = random.Random(4)
        times = sorted(rng.uniform(0, 100) for _ in range(200))
        shuffled = times[:]
        rng.shuffle(shuffled)
        for t in shuffled:
            svc.ingest_telemetry({"delivery_id": oid, "t": t, "lat": 19.1,
                                  "lon": 72.9, "alt": 1.0, "battery": 0.5,
                                  "state": "en_route"})
        _, track = svc.get_track(oid)
        stored = [s["t"] for s in track]
        assert stored == sorted(stored)
        assert len(set(stored)) == len(stored)

        data_dir = tmp_path / "durability"
        first = ServeProcess(data_dir)
        try:
            account = httpx.post(f"{first.base_url}/users", json={
                "name": "alice", "building_id": "bldg-1",
                "face_image": base64.b64encode(b"face").decode()},
                timeout=5.0).json()
            order = httpx.post(f"{first.base_url}/orders", json={
                "user_id": account["user_id"],
                "address": "3 Quad Lane North Campus"}, timeout=5.0).json()
        finally:
            first.kill_hard()
        second = ServeProcess(data_dir)
        try:
            track = httpx.get(
                f"{second.base_url}/track/{order['delivery_id']}",
                timeout=5.0).json()
            assert track["status"] == "Placed"
        finally:
            second.stop()

        _ok(f"cloud properties: 10k unique ids, palette capacity, status table, "
            f"telemetry monotonicity, kill -9 durability in "
            f"{time.monotonic() - started:.2f}s")

    def test_serve_harness_end_to_end(self, tmp_path):
        started = time.monotonic()
        server = ServeProcess(tmp_path / "data")
        try:
            base = server.base_url
            user = httpx.post(f"{base}/users", json={
                "name": "alice", "building_id": "bldg-1",
                "face_image": base64.b64encode(b"face").decode()},
                timeout=5.0).json()
            order = httpx.post(f"{base}/orders", json={
                "user_id": user["user_id"],
                "address": "3 Quad Lane North Campus"}, timeout=5.0).json()
            httpx.post(f"{base}/dispatch", json={
                "delivery_id": order["delivery_id"],
                "operator_id": "depot-1"}, timeout=5.0)
            samples = []
            probe_deadline = time.monotonic() + 10.0
            while time.monotonic() < probe_deadline and not samples:
                samples = httpx.get(f"{base}/track/{order['delivery_id']}",
                                    timeout=5.0).json()["samples"]
                time.sleep(0.05)
            assert samples, "telemetry not visible"
            assert samples[0]["t"] <= 3.0

            status = None
            status_deadline = time.monotonic() + 25.0
            while time.monotonic() < status_deadline:
                status = httpx.get(f"{base}/track/{order['delivery_id']}",
                                   timeout=5.0).json()["status"]
                if status == "PackageReceived":
                    break
                time.sleep(0.2)
            assert status == "PackageReceived"
        finally:
            server.stop()
        elapsed = time.monotonic() - started
        assert elapsed < 30.0
        _ok(f"serve e2e: users->orders->dispatch->track->PackageReceived in "
            f"{elapsed:.2f}s")

    def test_sweep_directional_check(self):
        started = time.monotonic()
        scenario = load_scenario(scenario_path("obstacle_course"))
        config = _mission_config(scenario, None, None)
        from dataclasses import replace

        from dronecourier.perception import DetectorProfile

        def success_rate(tp):
            detector = DetectorProfile(label=f"tp{tp}", tp_prob=tp,
                                       latency_ticks=2 if tp else 0,
                                       height_sigma_m=0.0)
            wins = 0
            for seed in range(10):
                result, _ = run_embedded_mission(
                    replace(scenario, detector=detector), config, seed)
                wins += result.outcome.value == "delivered"
            return wins / 10.0

        perfect = success_rate(1.0)
        blind = success_rate(0.0)
        assert perfect >= blind
        assert blind < perfect  # the obstacle-rich course punishes blindness
        _ok(f"sweep direction: tp=1.0 success {perfect:.1f} >= tp=0.0 "
            f"{blind:.1f} over 10 seeds in {time.monotonic() - started:.2f}s")
