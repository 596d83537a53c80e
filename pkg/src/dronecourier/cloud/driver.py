"""Mission driver for the running service: executes dispatched deliveries in
background threads, each owning its own world instance, and feeds telemetry,
notifications, and status back into the service."""

from __future__ import annotations

import hashlib
import threading
import time
from typing import Optional

from ..mission.engine import MissionEngine
from ..mission.machine import MissionConfig, MissionParams
from ..worldsim import Scenario
from .service import CloudError, CloudService


def mission_seed(base_seed: int, delivery_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{delivery_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class ServiceCloudLink:
    """Adapter the engine talks to; resolves the recipient from the order."""

    def __init__(self, service: CloudService, delivery_id: str):
        self.service = service
        self.delivery_id = delivery_id

    def _user_id(self) -> str:
        return self.service.orders[self.delivery_id].user_id

    def fetch_face_image(self, delivery_id: str) -> bytes:
        return self.service.fetch_face_image(delivery_id)

    def notify(self, delivery_id: str, kind: str) -> None:
        self.service.notify(self._user_id(), kind, delivery_id)

    def push_telemetry(self, sample: dict) -> None:
        self.service.ingest_telemetry(sample)

    def report_status(self, delivery_id: str, outcome: str) -> None:
        self.service.set_status(delivery_id, outcome)

    def report_launch_failure(self, delivery_id: str, reason: str) -> None:
        self.service.report_launch_failure(delivery_id, reason)


class SimulationDriver:
    """Runs one mission thread per dispatched delivery.

    sim_rate > 0 paces the loop at that many simulated seconds per wall
    second; 0 runs unpaced (as fast as possible).
    """

    def __init__(self, scenario: Scenario, service: CloudService,
                 base_seed: int = 0, sim_rate: float = 0.0,
                 config: Optional[MissionConfig] = None):
        self.scenario = scenario
        self.service = service
        self.base_seed = base_seed
        self.sim_rate = sim_rate
        self.config = config or MissionConfig().with_overrides(scenario.mission_overrides)
        self.threads: dict[str, threading.Thread] = {}

    def start_mission(self, params: MissionParams) -> None:
        thread = threading.Thread(target=self._run, args=(params,),
                                  name=f"mission-{params.delivery_id}", daemon=True)
        self.threads[params.delivery_id] = thread
        thread.start()

    def _run(self, params: MissionParams) -> None:
        link = ServiceCloudLink(self.service, params.delivery_id)
        engine = MissionEngine(
            self.scenario, params, self.config, link,
            seed=mission_seed(self.base_seed, params.delivery_id))
        if self.sim_rate > 0:
            start_wall = time.monotonic()
            dt = self.scenario.world.dt_s

            def pace(tick: int) -> None:
                target = start_wall + (tick * dt) / self.sim_rate
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)

            engine.tick_hook = pace
        try:
            self.service.set_in_flight(params.delivery_id)
        except CloudError:
            return
        engine.run()

    def wait_all(self, timeout: Optional[float] = None) -> None:
        for thread in list(self.threads.values()):
            thread.join(timeout)
