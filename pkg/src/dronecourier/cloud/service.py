"""Coordination service: accounts, orders, dispatch, telemetry, notifications.

All state mutations funnel through one lock and are journaled to the event log
before being acknowledged; a restart replays the journal. The service is
transport-agnostic: the HTTP layer and the embedded CLI mode both call these
methods directly.
"""

from __future__ import annotations

import enum
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from ..geo import Address, GeocodeError, GeocodeProvider, GeoPoint, geocode
from ..mission.machine import MissionParams
from ..perception import ColorCode, DEFAULT_PALETTE
from .storage import EventLog, ImageStore, MemoryImageStore

NOTIFICATION_KINDS = ("Accept Delivery", "Missed delivery", "Delivered", "Not delivered")

# Uppercase alphanumerics minus the lookalikes O/I/0/1.
DELIVERY_ID_ALPHABET = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789"
DELIVERY_ID_LENGTH = 10
MAX_ID_COLLISIONS = 100


class CloudError(Exception):
    code = "validation"

    def __init__(self, message: str, detail: Optional[dict] = None):
        self.message = message
        self.detail = detail or {}
        super().__init__(message)


class NotFoundError(CloudError):
    code = "not_found"


class ConflictError(CloudError):
    code = "conflict"


class ValidationError(CloudError):
    code = "validation"


class CapacityError(CloudError):
    code = "capacity"


class UnresolvableAddressError(CloudError):
    code = "unresolvable_address"


class OrderStatus(str, enum.Enum):
    PLACED = "Placed"
    DISPATCHED = "Dispatched"
    IN_FLIGHT = "InFlight"
    PACKAGE_RECEIVED = "PackageReceived"
    NOT_DELIVERED = "NotDelivered"
    MISSED_DELIVERY = "MissedDelivery"


ORDER_TRANSITIONS: dict[OrderStatus, frozenset] = {
    OrderStatus.PLACED: frozenset({OrderStatus.DISPATCHED}),
    OrderStatus.DISPATCHED: frozenset({OrderStatus.IN_FLIGHT}),
    OrderStatus.IN_FLIGHT: frozenset({OrderStatus.PACKAGE_RECEIVED,
                                      OrderStatus.NOT_DELIVERED,
                                      OrderStatus.MISSED_DELIVERY}),
    OrderStatus.PACKAGE_RECEIVED: frozenset(),
    OrderStatus.NOT_DELIVERED: frozenset(),
    OrderStatus.MISSED_DELIVERY: frozenset(),
}

OUTCOME_TO_STATUS = {
    "delivered": OrderStatus.PACKAGE_RECEIVED,
    "not_delivered": OrderStatus.NOT_DELIVERED,
    "missed_delivery": OrderStatus.MISSED_DELIVERY,
    # an aborted mission never handed the parcel over
    "aborted": OrderStatus.NOT_DELIVERED,
}


@dataclass
class UserAccount:
    user_id: str
    display_name: str
    building_id: str
    color_code: ColorCode
    face_image_ref: str
    created_at: float
    active: bool = True


@dataclass
class Order:
    delivery_id: str
    user_id: str
    address_text: str
    destination: GeoPoint
    building_id: str
    status: OrderStatus
    created_at: float
    updated_at: float


@dataclass
class StoredNotification:
    seq: int
    user_id: str
    kind: str
    delivery_id: str
    timestamp: float


class CloudService:
    def __init__(self, geocoder: GeocodeProvider,
                 data_dir: Optional[Union[str, Path]] = None,
                 palette: Sequence[tuple[int, int, int]] = DEFAULT_PALETTE,
                 known_buildings: Optional[set[str]] = None,
                 operators: Sequence[str] = ("depot-1",),
                 rng: Optional[random.Random] = None,
                 clock=time.time):
        self.geocoder = geocoder
        self.palette = palette
        self.known_buildings = known_buildings
        self.operators = set(operators)
        self.rng = rng or random.Random(0)
        self.clock = clock

        self._lock = threading.RLock()
        self.users: dict[str, UserAccount] = {}
        self.orders: dict[str, Order] = {}
        self.tracks: dict[str, list[dict]] = {}
        self.telemetry_drops: dict[str, int] = {}
        self.notifications: list[StoredNotification] = []
        self._notification_keys: dict[tuple[str, str], int] = {}
        self.notification_delivery_count: dict[tuple[str, str], int] = {}
        self._user_counter = 0

        if data_dir is not None:
            data_dir = Path(data_dir)
            self._log = EventLog(data_dir / "events.jsonl")
            self.images = ImageStore(data_dir / "images")
            self._replay()
        else:
            self._log = None
            self.images = MemoryImageStore()

    # --- persistence -------------------------------------------------------

    def _journal(self, event: str, **payload) -> None:
        if self._log is not None:
            self._log.append({"event": event, **payload})

    def _replay(self) -> None:
        for record in self._log.replay():
            kind = record.pop("event")
            apply = getattr(self, f"_apply_{kind}", None)
            if apply is not None:
                apply(record)

    def close(self) -> None:
        if self._log is not None:
            self._log.close()

    # --- users -------------------------------------------------------------

    def register_user(self, name: str, face_image: bytes, building_id: str) -> UserAccount:
        if not face_image:
            raise ValidationError("face image must be non-empty")
        if not name.strip():
            raise ValidationError("display name must be non-empty")
        with self._lock:
            if self.known_buildings is not None and building_id not in self.known_buildings:
                raise NotFoundError(f"unknown building {building_id!r}")
            index = self._lowest_free_color(building_id)
            ref = self.images.put(face_image)
            self._user_counter += 1
            user_id = f"u-{self._user_counter:06d}"
            account = UserAccount(user_id, name, building_id,
                                  ColorCode.from_index(index, self.palette),
                                  ref, self.clock())
            self.users[user_id] = account
            self._journal("user_registered", user_id=user_id, name=name,
                          building_id=building_id, color_index=index,
                          face_image_ref=ref, created_at=account.created_at)
            return account

    def _apply_user_registered(self, rec: dict) -> None:
        self._user_counter = max(self._user_counter, int(rec["user_id"].split("-")[1]))
        self.users[rec["user_id"]] = UserAccount(
            rec["user_id"], rec["name"], rec["building_id"],
            ColorCode.from_index(rec["color_index"], self.palette),
            rec["face_image_ref"], rec["created_at"])

    def _lowest_free_color(self, building_id: str) -> int:
        used = {u.color_code.index for u in self.users.values()
                if u.active and u.building_id == building_id}
        for index in range(len(self.palette)):
            if index not in used:
                return index
        raise CapacityError(
            f"color palette exhausted for building {building_id!r}",
            {"palette_size": len(self.palette)})

    def deactivate_user(self, user_id: str) -> None:
        with self._lock:
            user = self._user(user_id)
            user.active = False
            self._journal("user_deactivated", user_id=user_id)

    def _apply_user_deactivated(self, rec: dict) -> None:
        if rec["user_id"] in self.users:
            self.users[rec["user_id"]].active = False

    def delete_face_image(self, user_id: str) -> None:
        with self._lock:
            user = self._user(user_id)
            user.face_image_ref = ""
            self._journal("face_image_deleted", user_id=user_id)

    def _apply_face_image_deleted(self, rec: dict) -> None:
        if rec["user_id"] in self.users:
            self.users[rec["user_id"]].face_image_ref = ""

    def _user(self, user_id: str) -> UserAccount:
        try:
            return self.users[user_id]
        except KeyError:
            raise NotFoundError(f"unknown user {user_id!r}") from None

    # --- orders ------------------------------------------------------------

    def generate_delivery_id(self) -> str:
        for _ in range(MAX_ID_COLLISIONS):
            candidate = "".join(self.rng.choice(DELIVERY_ID_ALPHABET)
                                for _ in range(DELIVERY_ID_LENGTH))
            if candidate not in self.orders:
                return candidate
        raise CapacityError("delivery id generation failed after "
                            f"{MAX_ID_COLLISIONS} collisions (broken rng?)")

    def place_order(self, user_id: str, address: Union[str, Address]) -> Order:
        if isinstance(address, str):
            address = Address.from_text(address)
        with self._lock:
            user = self._user(user_id)
            if not user.active:
                raise ConflictError(f"user {user_id!r} is deactivated")
            try:
                destination = geocode(address, self.geocoder)
            except GeocodeError as exc:
                raise UnresolvableAddressError(str(exc)) from None
            delivery_id = self.generate_delivery_id()
            now = self.clock()
            order = Order(delivery_id, user_id, address.normalized(), destination,
                          user.building_id, OrderStatus.PLACED, now, now)
            self.orders[delivery_id] = order
            self.tracks[delivery_id] = []
            self.telemetry_drops[delivery_id] = 0
            self._journal("order_placed", delivery_id=delivery_id, user_id=user_id,
                          address=order.address_text, lat=destination.lat,
                          lon=destination.lon, building_id=order.building_id,
                          created_at=now)
            return order

    def _apply_order_placed(self, rec: dict) -> None:
        order = Order(rec["delivery_id"], rec["user_id"], rec["address"],
                      GeoPoint(rec["lat"], rec["lon"], 0.0), rec["building_id"],
                      OrderStatus.PLACED, rec["created_at"], rec["created_at"])
        self.orders[order.delivery_id] = order
        self.tracks[order.delivery_id] = []
        self.telemetry_drops[order.delivery_id] = 0

    def _order(self, delivery_id: str) -> Order:
        try:
            return self.orders[delivery_id]
        except KeyError:
            raise NotFoundError(f"unknown delivery id {delivery_id!r}") from None

    def _set_order_status(self, order: Order, new: OrderStatus) -> None:
        if new not in ORDER_TRANSITIONS[order.status]:
            raise ConflictError(
                f"order {order.delivery_id} is {order.status.value}; "
                f"cannot move to {new.value}",
                {"current_status": order.status.value})
        order.status = new
        order.updated_at = self.clock()

    def dispatch(self, delivery_id: str, operator_id: str) -> MissionParams:
        with self._lock:
            order = self._order(delivery_id)
            if operator_id not in self.operators:
                raise ValidationError(f"unknown operator {operator_id!r}")
            self._set_order_status(order, OrderStatus.DISPATCHED)
            user = self._user(order.user_id)
            self._journal("order_dispatched", delivery_id=delivery_id,
                          operator_id=operator_id, at=order.updated_at)
            return MissionParams(
                delivery_id=delivery_id,
                destination=order.destination,
                expected_color_code=user.color_code,
                face_image_ref=user.face_image_ref,
                building_id=order.building_id)

    def _apply_order_dispatched(self, rec: dict) -> None:
        order = self.orders.get(rec["delivery_id"])
        if order is not None:
            order.status = OrderStatus.DISPATCHED
            order.updated_at = rec["at"]

    def set_in_flight(self, delivery_id: str) -> Order:
        with self._lock:
            order = self._order(delivery_id)
            self._set_order_status(order, OrderStatus.IN_FLIGHT)
            self._journal("order_in_flight", delivery_id=delivery_id,
                          at=order.updated_at)
            return order

    def _apply_order_in_flight(self, rec: dict) -> None:
        order = self.orders.get(rec["delivery_id"])
        if order is not None:
            order.status = OrderStatus.IN_FLIGHT
            order.updated_at = rec["at"]

    def set_status(self, delivery_id: str, outcome: str) -> Order:
        try:
            target = OUTCOME_TO_STATUS[outcome]
        except KeyError:
            raise ValidationError(f"unknown outcome {outcome!r}") from None
        with self._lock:
            order = self._order(delivery_id)
            self._set_order_status(order, target)
            self._journal("order_status_set", delivery_id=delivery_id,
                          status=target.value, at=order.updated_at)
            return order

    def _apply_order_status_set(self, rec: dict) -> None:
        order = self.orders.get(rec["delivery_id"])
        if order is not None:
            order.status = OrderStatus(rec["status"])
            order.updated_at = rec["at"]

    def report_launch_failure(self, delivery_id: str, reason: str) -> None:
        with self._lock:
            self._order(delivery_id)
            self._journal("launch_failure", delivery_id=delivery_id, reason=reason)

    # --- telemetry -----------------------------------------------------------

    def ingest_telemetry(self, sample: dict) -> None:
        with self._lock:
            delivery_id = sample.get("delivery_id")
            order = self._order(delivery_id)
            track = self.tracks[delivery_id]
            t = float(sample["t"])
            if track and t <= track[-1]["t"]:
                self.telemetry_drops[delivery_id] += 1
                return
            stored = {"t": t, "lat": float(sample["lat"]), "lon": float(sample["lon"]),
                      "alt": float(sample["alt"]), "battery": float(sample["battery"]),
                      "state": str(sample["state"])}
            track.append(stored)
            self._journal("telemetry", delivery_id=delivery_id, **stored)
            del order  # existence check only

    def _apply_telemetry(self, rec: dict) -> None:
        delivery_id = rec["delivery_id"]
        if delivery_id in self.tracks:
            self.tracks[delivery_id].append(
                {k: rec[k] for k in ("t", "lat", "lon", "alt", "battery", "state")})

    def get_track(self, delivery_id: str, after: Optional[float] = None
                  ) -> tuple[OrderStatus, list[dict]]:
        with self._lock:
            order = self._order(delivery_id)
            samples = self.tracks[delivery_id]
            if after is not None:
                samples = [s for s in samples if s["t"] > after]
            return order.status, list(samples)

    # --- notifications ---------------------------------------------------------

    def notify(self, user_id: str, kind: str, delivery_id: str) -> StoredNotification:
        if kind not in NOTIFICATION_KINDS:
            raise ValidationError(f"unknown notification kind {kind!r}")
        with self._lock:
            self._user(user_id)
            key = (delivery_id, kind)
            self.notification_delivery_count[key] = \
                self.notification_delivery_count.get(key, 0) + 1
            if key in self._notification_keys:
                return self.notifications[self._notification_keys[key]]
            note = StoredNotification(len(self.notifications), user_id, kind,
                                      delivery_id, self.clock())
            self._notification_keys[key] = note.seq
            self.notifications.append(note)
            self._journal("notification", seq=note.seq, user_id=user_id, kind=kind,
                          delivery_id=delivery_id, timestamp=note.timestamp)
            return note

    def _apply_notification(self, rec: dict) -> None:
        note = StoredNotification(rec["seq"], rec["user_id"], rec["kind"],
                                  rec["delivery_id"], rec["timestamp"])
        self._notification_keys[(note.delivery_id, note.kind)] = note.seq
        self.notifications.append(note)

    def notifications_for(self, user_id: str, after_seq: int = -1) -> list[StoredNotification]:
        with self._lock:
            self._user(user_id)
            return [n for n in self.notifications
                    if n.user_id == user_id and n.seq > after_seq]

    # --- face images -----------------------------------------------------------

    def fetch_face_image(self, delivery_id: str) -> bytes:
        with self._lock:
            order = self._order(delivery_id)
            user = self._user(order.user_id)
            if not user.face_image_ref:
                raise NotFoundError(f"no face image stored for delivery {delivery_id!r}")
            blob = self.images.get(user.face_image_ref)
            if blob is None:
                raise NotFoundError(f"face image blob missing for {delivery_id!r}")
            self._journal("face_image_fetched", delivery_id=delivery_id,
                          digest=user.face_image_ref)
            return blob

    def _apply_face_image_fetched(self, rec: dict) -> None:
        pass  # audit-only event
