"""Stochastic stand-ins for the onboard vision stack.

Obstacle detection, door color-code reading, and the recipient face-confidence
stream are all parameterized noise models: a DetectorProfile plays the role of
a trained model, so "model comparison" becomes a parameter sweep.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .geo import GeoPoint, haversine_distance
from .seeding import poisson

# 16 well-separated RGB values; index <-> rgb is bijective.
DEFAULT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0), (255, 255, 255), (255, 0, 0), (0, 255, 0),
    (0, 0, 255), (255, 255, 0), (0, 255, 255), (255, 0, 255),
    (255, 128, 0), (128, 0, 255), (0, 128, 128), (128, 0, 0),
    (0, 0, 128), (128, 128, 0), (128, 128, 128), (255, 128, 192),
)

FALSE_POSITIVE_HEIGHT_RANGE = (1.0, 20.0)


class PaletteMismatchError(ValueError):
    """Two codes compared across different palettes."""


@dataclass(frozen=True)
class ColorCode:
    index: int
    rgb: tuple[int, int, int]

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"palette index {self.index} must be >= 0")

    @classmethod
    def from_index(cls, index: int,
                   palette: Sequence[tuple[int, int, int]] = DEFAULT_PALETTE) -> "ColorCode":
        if not (0 <= index < len(palette)):
            raise ValueError(f"palette index {index} outside palette of size {len(palette)}")
        return cls(index=index, rgb=tuple(palette[index]))


def match_color(observed: ColorCode, expected: ColorCode) -> bool:
    """Exact palette-index equality; misreads are modeled upstream in scan_door."""
    if (observed.index == expected.index) != (observed.rgb == expected.rgb):
        raise PaletteMismatchError(
            f"codes disagree on index/rgb pairing: {observed} vs {expected}")
    return observed.index == expected.index


@dataclass(frozen=True)
class DetectorProfile:
    """Stochastic description of an onboard detector (illustrative defaults, not measurements)."""

    label: str = "yolov4-tiny"
    tp_prob: float = 0.95
    fp_per_min: float = 0.0
    max_range_m: float = 40.0
    height_sigma_m: float = 0.5
    latency_ticks: int = 2
    misread_rate: float = 0.0
    scan_range_m: float = 3.0

    def __post_init__(self):
        if not (0.0 <= self.tp_prob <= 1.0):
            raise ValueError(f"tp_prob {self.tp_prob} outside [0, 1]")
        if self.fp_per_min < 0:
            raise ValueError("fp_per_min must be >= 0")
        if not (0.0 <= self.misread_rate <= 1.0) or self.tp_prob + self.misread_rate > 1.0:
            raise ValueError("misread_rate must sit in [0, 1 - tp_prob]")
        if self.latency_ticks < 0 or self.latency_ticks != int(self.latency_ticks):
            raise ValueError("latency_ticks must be a non-negative integer")
        if self.max_range_m <= 0 or self.scan_range_m <= 0:
            raise ValueError("ranges must be positive")


# Illustrative built-in profiles for the three named model families.
DETECTOR_PRESETS: dict[str, DetectorProfile] = {
    "yolov4-tiny": DetectorProfile("yolov4-tiny", tp_prob=0.95, height_sigma_m=0.5, latency_ticks=2),
    "mobilenet": DetectorProfile("mobilenet", tp_prob=0.90, height_sigma_m=0.7, latency_ticks=1),
    "efficientdet": DetectorProfile("efficientdet", tp_prob=0.97, height_sigma_m=0.4, latency_ticks=4),
}


@dataclass(frozen=True)
class Detection:
    obstacle_id: str
    est_height_m: float
    detected_at: int

    def __post_init__(self):
        if self.est_height_m < 0:
            raise ValueError("estimated height must be >= 0")


class Detector:
    """Latency-queued stochastic obstacle detector.

    observe() takes ground-truth obstacles already range-limited by the world
    (anything with .id and .height_m) and returns the detections due this tick,
    i.e. those whose inference started latency_ticks ago.
    """

    def __init__(self, profile: DetectorProfile, rng: random.Random, dt_s: float):
        self.profile = profile
        self.rng = rng
        self.dt_s = dt_s
        self._pending: list[Detection] = []
        self._fp_counter = 0

    def observe(self, truth, tick: int) -> list[Detection]:
        due_tick = tick + self.profile.latency_ticks
        for obstacle in truth:
            if self.rng.random() < self.profile.tp_prob:
                height = obstacle.height_m + self.rng.gauss(0.0, self.profile.height_sigma_m)
                self._pending.append(Detection(obstacle.id, max(0.0, height), due_tick))
        lam = self.profile.fp_per_min * self.dt_s / 60.0
        for _ in range(poisson(self.rng, lam)):
            self._fp_counter += 1
            height = self.rng.uniform(*FALSE_POSITIVE_HEIGHT_RANGE)
            self._pending.append(Detection(f"fp-{self._fp_counter}", height, due_tick))
        due = [d for d in self._pending if d.detected_at <= tick]
        self._pending = [d for d in self._pending if d.detected_at > tick]
        return due


def scan_door(drone_pos: GeoPoint, door, profile: DetectorProfile,
              rng: random.Random,
              palette: Sequence[tuple[int, int, int]] = DEFAULT_PALETTE) -> Optional[ColorCode]:
    """One color-code read attempt against a door.

    Out of scan range (horizontally or vertically) -> None. A displayed code is
    read correctly with tp_prob, misread as a uniformly random *different*
    palette code with misread_rate, otherwise missed.
    """
    if haversine_distance(drone_pos, door.position) > profile.scan_range_m:
        return None
    if abs(drone_pos.alt - door.position.alt) > profile.scan_range_m:
        return None
    if door.color_code is None:
        return None
    u = rng.random()
    if u < profile.tp_prob:
        return door.color_code
    if u < profile.tp_prob + profile.misread_rate:
        wrong = rng.randrange(len(palette) - 1)
        if wrong >= door.color_code.index:
            wrong += 1
        return ColorCode.from_index(wrong, palette)
    return None


class FaceStream:
    """Scripted face-confidence samples, each delivered at most once.

    Offsets are seconds relative to the start of the authentication window.
    """

    def __init__(self, samples: Sequence[tuple[float, float]]):
        offsets = [t for t, _ in samples]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError("sample time offsets must be strictly increasing")
        for t, conf in samples:
            if not (0.0 <= conf <= 1.0):
                raise ValueError(f"confidence {conf} outside [0, 1]")
        self.samples = [(float(t), float(conf)) for t, conf in samples]
        self._cursor = 0


def next_face_sample(stream: FaceStream, now: float) -> Optional[float]:
    """Latest not-yet-consumed sample due at `now`; earlier due samples are skipped."""
    due = stream._cursor
    while due < len(stream.samples) and stream.samples[due][0] <= now:
        due += 1
    if due == stream._cursor:
        return None
    confidence = stream.samples[due - 1][1]
    stream._cursor = due
    return confidence
