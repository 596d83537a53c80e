#!/usr/bin/env python3
"""Regenerate the pinned golden mission logs (tests/golden/).

Run only when an intentional behavior change invalidates the old logs; the
acceptance suite compares byte-for-byte.
"""

from pathlib import Path

from dronecourier.cli import _mission_config, run_embedded_mission
from dronecourier.worldsim import load_scenario

REPO = Path(__file__).resolve().parent.parent
GOLDEN = REPO / "tests" / "golden"
SEED = 42

SCENARIOS = ["happy_path", "auth_timeout", "auth_boundary", "wrong_door",
             "obstacle_course", "geofence"]


def main():
    GOLDEN.mkdir(exist_ok=True)
    for name in SCENARIOS:
        scenario = load_scenario(REPO / "scenarios" / f"{name}.json")
        config = _mission_config(scenario, None, None)
        result, _ = run_embedded_mission(scenario, config, SEED)
        path = GOLDEN / f"{name}-seed{SEED}.jsonl"
        path.write_text(result.log_text())
        print(f"{path.name}: outcome={result.outcome.value} "
              f"events={len(result.events)}")


if __name__ == "__main__":
    main()
