"""Operator/experimenter entry point.

Subcommands:
  run    execute one scenario deterministically with an embedded cloud
  sweep  grid of detector/GPS profiles x seeds over one scenario
  serve  start the HTTP service plus the mission driver
  order  place an order against a running service
  depot  dispatch a delivery id against a running service
"""

from __future__ import annotations

import argparse
import itertools
import json
import random
import statistics
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .cloud.driver import ServiceCloudLink, SimulationDriver
from .cloud.service import CloudError, CloudService
from .geo import Address, GeocodeProvider, GeoPoint
from .mission.engine import MissionEngine, MissionResult
from .mission.machine import MissionConfig
from .perception import DETECTOR_PRESETS, DetectorProfile
from .worldsim import GPS_PRESETS, GpsProfile, Scenario, ScenarioError, load_scenario

EXIT_DELIVERED = 0
EXIT_NOT_DELIVERED = 2
EXIT_MISSED_DELIVERY = 3
EXIT_ABORTED = 4
EXIT_NEVER_LAUNCHED = 6
EXIT_USAGE = 10

OUTCOME_EXIT_CODES = {
    "delivered": EXIT_DELIVERED,
    "not_delivered": EXIT_NOT_DELIVERED,
    "missed_delivery": EXIT_MISSED_DELIVERY,
    "aborted": EXIT_ABORTED,
}


def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _parse_overrides(pairs: Optional[list[str]]) -> dict:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key] = _coerce(value)
    return overrides


def _mission_config(scenario: Scenario, config_path: Optional[str],
                    set_pairs: Optional[list[str]]) -> MissionConfig:
    config = MissionConfig().with_overrides(scenario.mission_overrides)
    if config_path:
        config = config.with_overrides(json.loads(Path(config_path).read_text()))
    config = config.with_overrides(_parse_overrides(set_pairs))
    return config


def _fixture_geocoder(scenario: Scenario) -> GeocodeProvider:
    table = {}
    for rec in scenario.geocode_fixtures:
        key = Address.from_text(rec["address"]).normalized()
        table[key] = GeoPoint(float(rec["lat"]), float(rec["lon"]), 0.0)
    return GeocodeProvider(mode="fixture", fixture_table=table)


def _embedded_service(scenario: Scenario, seed: int) -> CloudService:
    return CloudService(
        geocoder=_fixture_geocoder(scenario),
        data_dir=None,
        known_buildings={b.id for b in scenario.world.buildings},
        rng=random.Random(seed))


def run_embedded_mission(scenario: Scenario, config: MissionConfig, seed: int,
                         record_trace: bool = False) -> tuple[MissionResult, CloudService]:
    """Place, dispatch, and fly the scenario's scripted delivery in-process."""
    service = _embedded_service(scenario, seed)
    recipient = scenario.delivery.recipient_name
    account = service.register_user(recipient, f"face:{recipient}".encode(),
                                    scenario.delivery.building_id)
    order = service.place_order(account.user_id, scenario.delivery.address_text)
    params = service.dispatch(order.delivery_id, "depot-1")
    service.set_in_flight(order.delivery_id)
    engine = MissionEngine(scenario, params, config,
                           ServiceCloudLink(service, order.delivery_id),
                           seed=seed, record_trace=record_trace)
    return engine.run(), service


def _report_dict(result: MissionResult, exit_status: int) -> dict:
    return {
        "scenario": result.scenario,
        "seed": result.seed,
        "outcome": result.outcome.value,
        "duration_s": result.duration_s,
        "distance_m": result.distance_m,
        "energy_j": result.energy_j,
        "notifications": result.notifications,
        "exit_status": exit_status,
        "disposition": result.disposition,
        "never_launched": result.never_launched,
    }


def _exit_status(result: MissionResult) -> int:
    if result.never_launched:
        return EXIT_NEVER_LAUNCHED
    return OUTCOME_EXIT_CODES[result.outcome.value]


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        config = _mission_config(scenario, args.config, args.set)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result, _ = run_embedded_mission(scenario, config, args.seed)
    exit_status = _exit_status(result)

    out_dir = Path(args.out) / f"{result.scenario}-seed{args.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "mission_log.jsonl"
    log_path.write_text(result.log_text())
    report = _report_dict(result, exit_status)
    report["log_file"] = str(log_path)
    (out_dir / "run_report.json").write_text(json.dumps(report, indent=2) + "\n")

    print(f"scenario={result.scenario} seed={args.seed} outcome={result.outcome.value} "
          f"duration_s={result.duration_s} distance_m={result.distance_m} "
          f"energy_j={result.energy_j}")
    print(f"log: {log_path}")
    return exit_status


def _profile_from_grid(entry, presets, base, kind):
    if entry is None:
        return base
    if isinstance(entry, str):
        try:
            return presets[entry]
        except KeyError:
            raise SystemExit(f"unknown {kind} preset {entry!r}") from None
    if kind == "detector":
        return DetectorProfile(**entry)
    return GpsProfile(**entry)


def cmd_sweep(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        config = _mission_config(scenario, args.config, args.set)
        grid = json.loads(Path(args.grid).read_text())
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not any(key in grid for key in ("detector", "gps")):
        print("error: grid must sweep at least one of 'detector'/'gps'", file=sys.stderr)
        return EXIT_USAGE
    detectors = grid.get("detector") or [None]
    gps_list = grid.get("gps") or [None]
    if not detectors or not gps_list:
        print("error: empty grid", file=sys.stderr)
        return EXIT_USAGE
    seeds = grid.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not seeds:
        print("error: empty seed list", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for det_entry, gps_entry in itertools.product(detectors, gps_list):
        detector = _profile_from_grid(det_entry, DETECTOR_PRESETS, scenario.detector,
                                      "detector")
        gps = _profile_from_grid(gps_entry, GPS_PRESETS, scenario.gps, "gps")
        cell_scenario = replace(scenario, detector=detector, gps=gps)
        for seed in seeds:
            result, _ = run_embedded_mission(cell_scenario, config, seed)
            rows.append({
                "scenario": result.scenario,
                "seed": seed,
                "detector": detector.label,
                "gps": gps.label,
                "outcome": result.outcome.value,
                "success": result.outcome.value == "delivered",
                "duration_s": result.duration_s,
                "distance_m": result.distance_m,
                "energy_j": result.energy_j,
            })

    rows_path = out_dir / "sweep_rows.jsonl"
    rows_path.write_text("".join(
        json.dumps(row, sort_keys=True) + "\n" for row in rows))

    summary = []
    for (det, gps), group in itertools.groupby(
            sorted(rows, key=lambda r: (r["detector"], r["gps"])),
            key=lambda r: (r["detector"], r["gps"])):
        group = list(group)
        summary.append({
            "detector": det,
            "gps": gps,
            "runs": len(group),
            "success_rate": sum(r["success"] for r in group) / len(group),
            "mean_duration_s": round(statistics.fmean(r["duration_s"] for r in group), 3),
            "mean_energy_j": round(statistics.fmean(r["energy_j"] for r in group), 3),
        })
    (out_dir / "sweep_summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    header = f"{'detector':<14} {'gps':<8} {'runs':>4} {'success':>8} {'mean_s':>9} {'mean_J':>12}"
    print(header)
    print("-" * len(header))
    for row in summary:
        print(f"{row['detector']:<14} {row['gps']:<8} {row['runs']:>4} "
              f"{row['success_rate']:>8.2f} {row['mean_duration_s']:>9.1f} "
              f"{row['mean_energy_j']:>12.1f}")
    print(f"rows: {rows_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .cloud.api import create_app

    try:
        scenario = load_scenario(args.scenario)
        config = _mission_config(scenario, args.config, args.set)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.geocode_mode == "fixture":
        if args.fixture:
            geocoder = GeocodeProvider.from_fixture_file(args.fixture)
        else:
            geocoder = _fixture_geocoder(scenario)
    else:
        geocoder = GeocodeProvider(mode="live",
                                   rate_limit_per_s=args.geocode_rate_limit,
                                   timeout_s=args.geocode_timeout)

    service = CloudService(
        geocoder=geocoder,
        data_dir=args.data_dir,
        known_buildings={b.id for b in scenario.world.buildings},
        rng=random.Random(args.seed))
    driver = SimulationDriver(scenario, service, base_seed=args.seed,
                              sim_rate=args.sim_rate, config=config)
    console_dir = Path(args.console_dir) if args.console_dir else None
    app = create_app(service, driver, console_dir=console_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    service.close()
    return 0


def _client_call(method: str, url: str, body: dict) -> int:
    import httpx

    try:
        response = httpx.request(method, url, json=body, timeout=10.0)
    except httpx.HTTPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if response.status_code >= 400:
        # surface the API error envelope verbatim
        print(response.text, file=sys.stderr)
        return 1
    print(json.dumps(response.json(), indent=2))
    return 0


def cmd_order(args) -> int:
    return _client_call("POST", f"{args.url}/orders",
                        {"user_id": args.user_id, "address": args.address})


def cmd_depot(args) -> int:
    return _client_call("POST", f"{args.url}/dispatch",
                        {"delivery_id": args.delivery_id,
                         "operator_id": args.operator})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dronecourier")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario deterministically")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--config", help="JSON file of mission config overrides")
    run.add_argument("--set", action="append", metavar="KEY=VALUE")
    run.add_argument("--out", default="runs")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="profile grid sweep")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--grid", required=True)
    sweep.add_argument("--config")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--out", default="sweep-out")
    sweep.set_defaults(func=cmd_sweep)

    serve = sub.add_parser("serve", help="start the cloud service + mission driver")
    serve.add_argument("--scenario", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data-dir", default="cloud-data")
    serve.add_argument("--geocode-mode", choices=("live", "fixture"), default="fixture")
    serve.add_argument("--fixture", help="fixture table file (defaults to scenario fixtures)")
    serve.add_argument("--geocode-rate-limit", type=float, default=1.0,
                       help="live geocoder requests per second")
    serve.add_argument("--geocode-timeout", type=float, default=10.0)
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--sim-rate", type=float, default=0.0,
                       help="sim seconds per wall second; 0 = unpaced")
    serve.add_argument("--config")
    serve.add_argument("--set", action="append", metavar="KEY=VALUE")
    serve.add_argument("--console-dir", help="static console bundle to mount at /console")
    serve.set_defaults(func=cmd_serve)

    order = sub.add_parser("order", help="place an order against a running service")
    order.add_argument("--url", default="http://127.0.0.1:8000")
    order.add_argument("--user-id", required=True)
    order.add_argument("--address", required=True)
    order.set_defaults(func=cmd_order)

    depot = sub.add_parser("depot", help="dispatch a delivery id")
    depot.add_argument("--url", default="http://127.0.0.1:8000")
    depot.add_argument("--operator", default="depot-1")
    depot.add_argument("delivery_id")
    depot.set_defaults(func=cmd_depot)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
