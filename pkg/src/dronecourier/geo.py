"""Geospatial primitives: great-circle distance, geofences, and geocoding.

All distances are horizontal (altitude never enters the math) and computed
on a sphere of configurable radius.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

EARTH_RADIUS_M = 6_371_000.0


class GeocodeError(Exception):
    """Address could not be resolved to coordinates."""


@dataclass(frozen=True)
class GeoPoint:
    """Latitude/longitude in decimal degrees, altitude in meters above ground."""

    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if not math.isfinite(self.alt) or self.alt < 0.0:
            raise ValueError(f"altitude {self.alt} must be finite and >= 0")


@dataclass(frozen=True)
class Address:
    lines: tuple[str, ...]
    locality: str = ""
    postal_code: Optional[str] = None

    def __post_init__(self):
        if not any(line.strip() for line in self.lines):
            raise ValueError("address needs at least one non-empty line")

    @classmethod
    def from_text(cls, text: str) -> "Address":
        return cls(lines=(text,))

    def normalized(self) -> str:
        parts = list(self.lines) + [self.locality]
        if self.postal_code:
            parts.append(self.postal_code)
        return " ".join(" ".join(parts).lower().split())


def haversine_distance(a: GeoPoint, b: GeoPoint, radius_m: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in meters; altitude is ignored."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * radius_m * math.asin(min(1.0, math.sqrt(h)))


def within_radius(a: GeoPoint, b: GeoPoint, r: float, radius_m: float = EARTH_RADIUS_M) -> bool:
    """True iff the horizontal separation of a and b is <= r meters."""
    if r < 0:
        raise ValueError(f"radius {r} must be >= 0")
    return haversine_distance(a, b, radius_m) <= r


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from a to b, compass degrees in [0, 360)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return math.degrees(math.atan2(y, x)) % 360.0


def offset_point(origin: GeoPoint, north_m: float, east_m: float,
                 alt: Optional[float] = None,
                 radius_m: float = EARTH_RADIUS_M) -> GeoPoint:
    """Displace origin by local north/east meters (small-offset tangent-plane step)."""
    dlat = math.degrees(north_m / radius_m)
    dlon = math.degrees(east_m / (radius_m * math.cos(math.radians(origin.lat))))
    return GeoPoint(origin.lat + dlat, origin.lon + dlon,
                    origin.alt if alt is None else alt)


def local_offset_m(origin: GeoPoint, point: GeoPoint,
                   radius_m: float = EARTH_RADIUS_M) -> tuple[float, float]:
    """(north_m, east_m) of point relative to origin in the local tangent plane.

    Equirectangular approximation; adequate for the sub-kilometer scales the
    simulator operates at.
    """
    north = math.radians(point.lat - origin.lat) * radius_m
    east = math.radians(point.lon - origin.lon) * radius_m * math.cos(math.radians(origin.lat))
    return north, east


def _load_fixture_table(path: Path) -> dict[str, GeoPoint]:
    """Fixture file: JSON array or one JSON object per line, fields address/lat/lon."""
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        records = json.loads(text)
    else:
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
    table = {}
    for rec in records:
        key = Address.from_text(rec["address"]).normalized()
        table[key] = GeoPoint(float(rec["lat"]), float(rec["lon"]), 0.0)
    return table


class GeocodeProvider:
    """Address -> GeoPoint resolution with a per-key cache.

    Fixture mode resolves only from the fixture table and never touches the
    network. Live mode calls a Nominatim-style HTTP endpoint, throttled to
    `rate_limit_per_s` and bounded by `timeout_s`; a custom `resolver` may be
    injected (tests use a counting stub).
    """

    def __init__(self, mode: str = "fixture",
                 fixture_table: Optional[dict[str, GeoPoint]] = None,
                 resolver: Optional[Callable[[str], GeoPoint]] = None,
                 base_url: str = "https://nominatim.openstreetmap.org",
                 rate_limit_per_s: float = 1.0,
                 timeout_s: float = 10.0):
        if mode not in ("live", "fixture"):
            raise ValueError(f"unknown geocode mode {mode!r}")
        self.mode = mode
        self.fixture_table = dict(fixture_table or {})
        self._resolver = resolver
        self._base_url = base_url
        self._rate_limit_per_s = rate_limit_per_s
        self._timeout_s = timeout_s
        self._cache: dict[str, GeoPoint] = {}
        self._lock = threading.Lock()
        self._last_request_t = 0.0

    @classmethod
    def from_fixture_file(cls, path: str | Path) -> "GeocodeProvider":
        return cls(mode="fixture", fixture_table=_load_fixture_table(Path(path)))

    def resolve(self, address: Address) -> GeoPoint:
        key = address.normalized()
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        if self.mode == "fixture":
            try:
                point = self.fixture_table[key]
            except KeyError:
                raise GeocodeError(f"address not in fixture table: {key!r}") from None
        else:
            point = self._resolve_live(key)
        point = GeoPoint(point.lat, point.lon, 0.0)
        with self._lock:
            self._cache.setdefault(key, point)
            return self._cache[key]

    def _resolve_live(self, key: str) -> GeoPoint:
        if self._resolver is not None:
            return self._resolver(key)
        import httpx

        with self._lock:
            wait = (1.0 / self._rate_limit_per_s) - (time.monotonic() - self._last_request_t)
            if wait > 0:
                time.sleep(wait)
            self._last_request_t = time.monotonic()
        try:
            resp = httpx.get(f"{self._base_url}/search",
                             params={"q": key, "format": "json", "limit": 1},
                             timeout=self._timeout_s,
                             headers={"User-Agent": "dronecourier/0.1"})
            resp.raise_for_status()
            hits = resp.json()
        except Exception as exc:
            raise GeocodeError(f"live geocode failed for {key!r}: {exc}") from exc
        if not hits:
            raise GeocodeError(f"no geocode result for {key!r}")
        return GeoPoint(float(hits[0]["lat"]), float(hits[0]["lon"]), 0.0)


def geocode(address: Address, provider: GeocodeProvider) -> GeoPoint:
    """Resolve an address to a GeoPoint (alt = 0). Raises GeocodeError if unresolvable."""
    return provider.resolve(address)
